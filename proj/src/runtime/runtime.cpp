// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdlib>
#include <iostream>

#include "mcrdl/error.hpp"
#include "mcrdl/runtime.hpp"

namespace mcrdl {
namespace {

std::optional<std::string> env(const char* name) {
  const char* v = std::getenv(name);
  if (v == nullptr || *v == '\0') return std::nullopt;
  return std::string(v);
}

int env_int(const char* name, int fallback) {
  const auto v = env(name);
  if (!v) return fallback;
  try {
    std::size_t used = 0;
    const int x = std::stoi(*v, &used);
    if (used == v->size()) return x;
  } catch (const std::logic_error&) {
  }
  throw Error(ErrorKind::parse, std::string(name) + ": expected an integer, got '" + *v + "'");
}

CommRequest make(CommOpKind kind, std::string_view backend, bool async_op) {
  CommRequest r;
  r.kind = kind;
  r.backend = BackendId(std::string(backend));
  r.async_op = async_op;
  return r;
}

}  // namespace

RuntimeOptions RuntimeOptions::from_env() {
  RuntimeOptions o;
  o.rank = env_int("MCRDL_RANK", 0);
  o.world_size = env_int("MCRDL_WORLD_SIZE", 1);
  const auto addr = env("MCRDL_MASTER_ADDR");
  const auto port = env("MCRDL_MASTER_PORT");
  if (addr || port) {
    const int p = env_int("MCRDL_MASTER_PORT", 0);
    if (p <= 0 || p > 65535) throw Error(ErrorKind::parse, "MCRDL_MASTER_PORT must be set to a port");
    o.master = HostPort{addr.value_or("127.0.0.1"), static_cast<std::uint16_t>(p)};
  }
  if (const auto t = env("MCRDL_TIMEOUT_SECS")) {
    const auto ms = std::chrono::milliseconds(
        static_cast<std::int64_t>(parse_seconds(*t) * 1000.0));
    o.op_timeout = ms;
    o.bootstrap_timeout = ms;
  }
  o.tuning_table_path = env("MCRDL_TUNING_TABLE");
  return o;
}

Runtime::Runtime(RuntimeOptions options) : options_(std::move(options)) {
  if (options_.world_size < 1 || options_.rank < 0 || options_.rank >= options_.world_size) {
    throw Error(ErrorKind::invalid_rank, "rank " + std::to_string(options_.rank) +
                                             " outside world of " +
                                             std::to_string(options_.world_size));
  }
  if (options_.inproc && options_.inproc->world_size() != options_.world_size) {
    throw Error(ErrorKind::usage, "inproc world size differs from world_size");
  }
  if (!options_.inproc && options_.world_size == 1) private_world_ = std::make_shared<InprocWorld>(1);
  if (options_.logging) logger_ = std::make_unique<Logger>();
  if (options_.tuning_table_path) table_ = load_table(*options_.tuning_table_path);
}

Runtime::~Runtime() {
  // Lanes may call back into the registry (timer-flush nudges), so the lock
  // is not held while they drain.
  std::vector<BackendInstance*> all;
  {
    std::lock_guard lock(registry_mu_);
    for (auto& b : registry_) all.push_back(b.get());
  }
  for (auto* b : all) {
    try {
      b->finalize(options_.op_timeout);
    } catch (...) {
    }
  }
}

BackendInstance* Runtime::find(std::string_view id) const {
  std::lock_guard lock(registry_mu_);
  for (const auto& b : registry_) {
    if (b->id().str() == id) return b.get();
  }
  return nullptr;
}

BackendInstance& Runtime::require(std::string_view id) const {
  auto* b = find(id);
  if (b == nullptr) throw Error(ErrorKind::unknown_backend, "unknown backend '" + std::string(id) + "'");
  return *b;
}

BackendInstance& Runtime::backend(std::string_view id) { return require(id); }

std::unique_ptr<Transport> Runtime::make_transport(const BackendConfig& config) {
  std::string kind = config.transport;
  if (kind.empty()) kind = (options_.inproc || private_world_) ? "inproc" : "tcp";
  std::unique_ptr<Transport> t;
  if (kind == "inproc") {
    auto world = options_.inproc ? options_.inproc : private_world_;
    if (!world) {
      throw Error(ErrorKind::usage, "backend '" + config.id.str() +
                                        "' uses inproc, which needs threads mode or world size 1");
    }
    t = make_inproc_transport(world, config.id.str(), options_.rank);
  } else if (kind == "tcp") {
    if (options_.world_size > 1 && !options_.master) {
      throw Error(ErrorKind::usage, "backend '" + config.id.str() +
                                        "' uses tcp; set MCRDL_MASTER_ADDR and MCRDL_MASTER_PORT");
    }
    TcpOptions opts;
    opts.master = options_.master.value_or(HostPort{"127.0.0.1", 0});
    opts.key = config.id.str();
    opts.bootstrap_timeout = options_.bootstrap_timeout;
    t = make_tcp_transport(options_.rank, options_.world_size, opts);
  } else {
    throw Error(ErrorKind::unknown_transport, "unknown transport '" + kind + "'");
  }
  if (config.shape && !config.shape->is_identity()) t = shaped_wrap(std::move(t), *config.shape);
  return t;
}

void Runtime::init(const std::vector<BackendConfig>& backends) {
  for (std::size_t i = 0; i < backends.size(); ++i) {
    if (backends[i].id.empty() || backends[i].id.is_auto()) {
      throw Error(ErrorKind::validation, "'" + backends[i].id.str() + "' cannot be registered");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (backends[j].id == backends[i].id) {
        throw Error(ErrorKind::duplicate_backend,
                    "backend '" + backends[i].id.str() + "' listed twice");
      }
    }
  }
  for (const auto& config : backends) {
    if (auto* existing = find(config.id.str())) {
      if (existing->state() == BackendInstance::State::finalized) {
        throw Error(ErrorKind::backend_finalized,
                    "backend '" + config.id.str() + "' was finalized and cannot be re-initialized");
      }
      if (existing->config() == config) continue;
      throw Error(ErrorKind::duplicate_backend,
                  "backend '" + config.id.str() + "' already registered with another config");
    }
    BackendInstance::Hooks hooks;
    hooks.logger = logger_.get();
    hooks.on_timer_flush = [this](const BackendInstance& origin) { nudge_others(origin); };
    auto instance = std::make_unique<BackendInstance>(config, make_transport(config),
                                                      options_.op_timeout, std::move(hooks));
    std::lock_guard lock(registry_mu_);
    registry_.push_back(std::move(instance));
  }
  if (table_) {
    for (const auto& id : unknown_backends(*table_, get_backends())) {
      std::cerr << "mcrdl: warning: tuning table names unregistered backend '" << id.str() << "'\n";
    }
  }
}

void Runtime::init(std::string_view specs) { init(parse_backend_specs(specs)); }

void Runtime::finalize(const std::vector<std::string>& backends) {
  std::vector<BackendInstance*> targets;
  if (backends.empty()) {
    std::lock_guard lock(registry_mu_);
    for (const auto& b : registry_) targets.push_back(b.get());
  } else {
    for (const auto& id : backends) targets.push_back(&require(id));
  }
  std::exception_ptr first;
  for (auto* b : targets) {
    try {
      b->finalize(options_.op_timeout);
    } catch (...) {
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
}

void Runtime::synchronize(const std::vector<std::string>& backends) {
  std::vector<BackendInstance*> targets;
  {
    std::lock_guard lock(registry_mu_);
    for (const auto& b : registry_) {
      if (backends.empty() ||
          std::find(backends.begin(), backends.end(), b->id().str()) != backends.end()) {
        targets.push_back(b.get());
      }
    }
  }
  for (const auto& id : backends) require(id);

  // Record every event first: the call covers work posted before it, on all
  // listed backends, not work posted while earlier lanes drain.
  std::vector<CompletionEvent> events;
  for (auto* b : targets) events.push_back(b->record_event());
  const Deadline deadline = Clock::now() + options_.op_timeout;
  std::exception_ptr first;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (!targets[i]->drain(events[i], deadline) && !first) {
      first = std::make_exception_ptr(
          Error(ErrorKind::timeout, "synchronize: backend '" + targets[i]->id().str() +
                                        "' did not drain in time"));
    }
    for (auto& e : targets[i]->take_unobserved_failures()) {
      if (!first) first = e;
    }
  }
  if (first) std::rethrow_exception(first);
}

std::vector<BackendId> Runtime::get_backends() const {
  std::lock_guard lock(registry_mu_);
  std::vector<BackendId> out;
  for (const auto& b : registry_) {
    if (b->state() == BackendInstance::State::initialized) out.push_back(b->id());
  }
  return out;
}

int Runtime::get_size(std::string_view backend) const { return require(backend).size(); }
int Runtime::get_rank(std::string_view backend) const { return require(backend).rank(); }

void Runtime::set_tuning_table(TuningTable table) {
  for (const auto& id : unknown_backends(table, get_backends())) {
    std::cerr << "mcrdl: warning: tuning table names unregistered backend '" << id.str() << "'\n";
  }
  table_ = std::move(table);
}

BackendId Runtime::resolve(const CommRequest& request) const {
  const auto registered = get_backends();
  if (registered.empty()) throw Error(ErrorKind::not_initialized, "no backend is initialized");
  if (!table_) return registered.front();
  return route(*table_, request.kind, options_.world_size,
               message_bytes(request, options_.world_size), registered);
}

WorkHandle Runtime::post(CommRequest request) {
  if (request.backend.is_auto()) {
    validate(request, options_.world_size, options_.rank);
    request.backend = resolve(request);
  }
  return require(request.backend.str()).post(std::move(request));
}

void Runtime::nudge_others(const BackendInstance& origin) {
  std::lock_guard lock(registry_mu_);
  for (const auto& b : registry_) {
    if (b.get() != &origin) b->nudge();
  }
}

WorkHandle Runtime::send(std::string_view backend, Buffer t, int rank, bool async_op) {
  auto r = make(CommOpKind::send, backend, async_op);
  r.inputs = {std::move(t)};
  r.peer = rank;
  return post(std::move(r));
}

WorkHandle Runtime::recv(std::string_view backend, Buffer t, int rank, bool async_op) {
  auto r = make(CommOpKind::recv, backend, async_op);
  r.outputs = {std::move(t)};
  r.peer = rank;
  return post(std::move(r));
}

WorkHandle Runtime::all_to_all_single(std::string_view backend, Buffer output, Buffer input,
                                      bool async_op) {
  auto r = make(CommOpKind::all_to_all_single, backend, async_op);
  r.inputs = {std::move(input)};
  r.outputs = {std::move(output)};
  return post(std::move(r));
}

WorkHandle Runtime::all_to_all(std::string_view backend, std::vector<Buffer> output,
                               std::vector<Buffer> input, bool async_op) {
  auto r = make(CommOpKind::all_to_all, backend, async_op);
  r.inputs = std::move(input);
  r.outputs = std::move(output);
  return post(std::move(r));
}

WorkHandle Runtime::all_reduce(std::string_view backend, Buffer t, ReduceOp op, bool async_op) {
  auto r = make(CommOpKind::all_reduce, backend, async_op);
  r.inputs = {t};
  r.outputs = {std::move(t)};
  r.op = op;
  return post(std::move(r));
}

WorkHandle Runtime::all_gather(std::string_view backend, Buffer output, Buffer input,
                               bool async_op) {
  auto r = make(CommOpKind::all_gather, backend, async_op);
  r.inputs = {std::move(input)};
  r.outputs = {std::move(output)};
  return post(std::move(r));
}

WorkHandle Runtime::gather(std::string_view backend, Buffer output, Buffer input, int root,
                           bool async_op) {
  auto r = make(CommOpKind::gather, backend, async_op);
  r.inputs = {std::move(input)};
  if (root == options_.rank) r.outputs = {std::move(output)};
  r.root = root;
  return post(std::move(r));
}

WorkHandle Runtime::scatter(std::string_view backend, Buffer output, Buffer input, int root,
                            bool async_op) {
  auto r = make(CommOpKind::scatter, backend, async_op);
  if (root == options_.rank) r.inputs = {std::move(input)};
  r.outputs = {std::move(output)};
  r.root = root;
  return post(std::move(r));
}

WorkHandle Runtime::reduce(std::string_view backend, Buffer t, int root, ReduceOp op,
                           bool async_op) {
  auto r = make(CommOpKind::reduce, backend, async_op);
  r.inputs = {t};
  r.outputs = {std::move(t)};
  r.root = root;
  r.op = op;
  return post(std::move(r));
}

WorkHandle Runtime::reduce_scatter(std::string_view backend, Buffer output, Buffer input,
                                   ReduceOp op, bool async_op) {
  auto r = make(CommOpKind::reduce_scatter, backend, async_op);
  r.inputs = {std::move(input)};
  r.outputs = {std::move(output)};
  r.op = op;
  return post(std::move(r));
}

WorkHandle Runtime::bcast(std::string_view backend, Buffer t, int root, bool async_op) {
  auto r = make(CommOpKind::bcast, backend, async_op);
  r.outputs = {std::move(t)};
  r.root = root;
  return post(std::move(r));
}

WorkHandle Runtime::gatherv(std::string_view backend, Buffer output, Buffer input, int root,
                            Counts rcounts, Counts displs, bool async_op) {
  auto r = make(CommOpKind::gatherv, backend, async_op);
  r.inputs = {std::move(input)};
  if (root == options_.rank) r.outputs = {std::move(output)};
  r.root = root;
  r.rcounts = std::move(rcounts);
  r.displs = std::move(displs);
  return post(std::move(r));
}

WorkHandle Runtime::scatterv(std::string_view backend, Buffer output, Buffer input, int root,
                             Counts scounts, Counts displs, bool async_op) {
  auto r = make(CommOpKind::scatterv, backend, async_op);
  if (root == options_.rank) r.inputs = {std::move(input)};
  r.outputs = {std::move(output)};
  r.root = root;
  r.scounts = std::move(scounts);
  r.displs = std::move(displs);
  return post(std::move(r));
}

WorkHandle Runtime::all_gatherv(std::string_view backend, Buffer output, Buffer input,
                                Counts rcounts, Counts displs, bool async_op) {
  auto r = make(CommOpKind::all_gatherv, backend, async_op);
  r.inputs = {std::move(input)};
  r.outputs = {std::move(output)};
  r.rcounts = std::move(rcounts);
  r.displs = std::move(displs);
  return post(std::move(r));
}

WorkHandle Runtime::all_to_allv(std::string_view backend, Buffer output, Buffer input,
                                Counts scounts, Counts rcounts, Counts sdispls, Counts rdispls,
                                bool async_op) {
  auto r = make(CommOpKind::all_to_allv, backend, async_op);
  r.inputs = {std::move(input)};
  r.outputs = {std::move(output)};
  r.scounts = std::move(scounts);
  r.rcounts = std::move(rcounts);
  r.sdispls = std::move(sdispls);
  r.rdispls = std::move(rdispls);
  return post(std::move(r));
}

void launch_threads(int nranks, const std::function<void(int, std::shared_ptr<InprocWorld>)>& body) {
  if (nranks < 1) throw Error(ErrorKind::usage, "need at least one rank");
  auto world = std::make_shared<InprocWorld>(nranks);
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(nranks));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(nranks));
  for (int r = 0; r < nranks; ++r) {
    threads.emplace_back([&, r] {
      try {
        body(r, world);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

RuntimeOptions thread_options(int rank, std::shared_ptr<InprocWorld> world) {
  RuntimeOptions o;
  o.rank = rank;
  o.world_size = world->world_size();
  o.inproc = std::move(world);
  return o;
}

}  // namespace mcrdl
