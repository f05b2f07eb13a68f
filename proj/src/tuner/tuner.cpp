// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <map>
#include <numeric>
#include <tuple>

#include "mcrdl/error.hpp"
#include "mcrdl/tuner.hpp"

namespace mcrdl {
namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

Counts uniform(std::size_t count, std::size_t p) { return Counts(p, count); }

Counts prefix(const Counts& counts) {
  Counts d(counts.size(), 0);
  for (std::size_t i = 1; i < counts.size(); ++i) d[i] = d[i - 1] + counts[i - 1];
  return d;
}

void barrier(BackendInstance& backend) {
  CommRequest r;
  r.kind = CommOpKind::all_reduce;
  r.inputs = {Buffer(DType::f32, 0)};
  r.outputs = r.inputs;
  r.op = ReduceOp::sum;
  backend.post(std::move(r));
}

}  // namespace

std::string_view to_string(Statistic s) noexcept {
  switch (s) {
    case Statistic::median: return "median";
    case Statistic::mean: return "mean";
    case Statistic::min: return "min";
  }
  return "?";
}

std::optional<Statistic> parse_statistic(std::string_view name) noexcept {
  for (auto s : {Statistic::median, Statistic::mean, Statistic::min}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

double apply(Statistic s, std::vector<double> values) {
  if (values.empty()) throw Error(ErrorKind::empty_samples, "no durations to summarize");
  switch (s) {
    case Statistic::min: return *std::min_element(values.begin(), values.end());
    case Statistic::mean:
      return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    case Statistic::median: {
      std::sort(values.begin(), values.end());
      const auto n = values.size();
      return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    }
  }
  return 0.0;
}

void BenchConfig::check() const {
  if (measure_iters < 3) throw ValidationError("measure_iters", "must be at least 3");
  if (warmup_iters < 0) throw ValidationError("warmup_iters", "must not be negative");
  if (!std::is_sorted(sizes.begin(), sizes.end())) {
    throw ValidationError("sizes", "must be sorted ascending");
  }
}

std::optional<CommRequest> bench_request(CommOpKind kind, std::size_t bytes, int world, int rank,
                                         const BackendId& backend) {
  const auto p = static_cast<std::size_t>(world);
  CommRequest r;
  r.kind = kind;
  r.backend = backend;
  if (is_reduction(kind)) {
    const std::size_t n = ceil_div(bytes, 4);
    r.op = ReduceOp::sum;
    switch (kind) {
      case CommOpKind::reduce_scatter: {
        const auto out = ceil_div(n, p);
        r.inputs = {Buffer(DType::f32, out * p)};
        r.outputs = {Buffer(DType::f32, out)};
        break;
      }
      case CommOpKind::reduce:
        r.root = 0;
        [[fallthrough]];
      default: {
        Buffer b(DType::f32, n);
        r.inputs = {b};
        r.outputs = {b};
      }
    }
    return r;
  }

  const std::size_t n = bytes;
  const std::size_t block = ceil_div(bytes, p);
  auto u8 = [](std::size_t count) { return Buffer(DType::u8, count); };
  switch (kind) {
    case CommOpKind::send:
    case CommOpKind::recv:
      if (rank == 0) {
        r.kind = CommOpKind::send;
        r.inputs = {u8(n)};
        r.peer = 1;
      } else if (rank == 1) {
        r.kind = CommOpKind::recv;
        r.outputs = {u8(n)};
        r.peer = 0;
      } else {
        return std::nullopt;
      }
      break;
    case CommOpKind::bcast:
      r.outputs = {u8(n)};
      r.root = 0;
      break;
    case CommOpKind::gather:
      r.inputs = {u8(n)};
      if (rank == 0) r.outputs = {u8(n * p)};
      r.root = 0;
      break;
    // Vectored kinds are sized by their summed count list, so each rank
    // contributes one block.
    case CommOpKind::gatherv:
      r.inputs = {u8(block)};
      if (rank == 0) r.outputs = {u8(block * p)};
      r.root = 0;
      r.rcounts = uniform(block, p);
      r.displs = prefix(*r.rcounts);
      break;
    case CommOpKind::scatter:
      r.outputs = {u8(block)};
      if (rank == 0) r.inputs = {u8(block * p)};
      r.root = 0;
      break;
    case CommOpKind::scatterv:
      r.outputs = {u8(block)};
      if (rank == 0) r.inputs = {u8(block * p)};
      r.root = 0;
      r.scounts = uniform(block, p);
      r.displs = prefix(*r.scounts);
      break;
    case CommOpKind::all_gather:
      r.inputs = {u8(n)};
      r.outputs = {u8(n * p)};
      break;
    case CommOpKind::all_gatherv:
      r.inputs = {u8(block)};
      r.outputs = {u8(block * p)};
      r.rcounts = uniform(block, p);
      r.displs = prefix(*r.rcounts);
      break;
    case CommOpKind::all_to_all_single:
      r.inputs = {u8(block * p)};
      r.outputs = {u8(block * p)};
      break;
    case CommOpKind::all_to_all:
      for (std::size_t i = 0; i < p; ++i) {
        r.inputs.push_back(u8(block));
        r.outputs.push_back(u8(block));
      }
      break;
    case CommOpKind::all_to_allv:
      r.inputs = {u8(block * p)};
      r.outputs = {u8(block * p)};
      r.scounts = uniform(block, p);
      r.rcounts = uniform(block, p);
      r.sdispls = prefix(*r.scounts);
      r.rdispls = prefix(*r.rcounts);
      break;
    default:
      break;
  }
  return r;
}

std::vector<BenchSample> bench(const BenchConfig& config, Runtime& runtime,
                               std::vector<BackendId> backends) {
  config.check();
  if (backends.empty()) backends = runtime.get_backends();
  BackendInstance* control = nullptr;
  for (const auto& id : runtime.get_backends()) {
    auto& b = runtime.backend(id.str());
    if (b.supports(CommOpKind::all_reduce)) {
      control = &b;
      break;
    }
  }

  std::vector<BenchSample> out;
  for (const auto op : config.ops) {
    for (const auto& id : backends) {
      auto& backend = runtime.backend(id.str());
      const int world = backend.size();
      const int rank = backend.rank();
      BackendInstance* sync = backend.supports(CommOpKind::all_reduce) ? &backend : control;
      for (const auto bytes : config.sizes) {
        BenchSample s;
        s.op = op;
        s.backend = id;
        s.world_size = world;
        s.bytes = bytes;
        if (!backend.supports(op)) {
          s.skipped = true;
          s.reason = "unsupported";
        } else if (!is_collective(op) && world < 2) {
          s.skipped = true;
          s.reason = "needs two ranks";
        } else if (sync == nullptr) {
          s.skipped = true;
          s.reason = "no backend can run the barrier";
        }
        if (s.skipped) {
          out.push_back(std::move(s));
          continue;
        }

        const auto request = bench_request(op, bytes, world, rank, id);
        const int total = config.warmup_iters + config.measure_iters;
        std::vector<double> mine;
        for (int it = 0; it < total; ++it) {
          barrier(*sync);
          const auto t0 = Clock::now();
          if (request) backend.post(*request);
          const auto t1 = Clock::now();
          if (it >= config.warmup_iters) {
            mine.push_back(std::chrono::duration<double>(t1 - t0).count());
          }
        }
        // Slowest rank per iteration.
        auto d = Buffer::from(mine);
        CommRequest mx;
        mx.kind = CommOpKind::all_reduce;
        mx.inputs = {d};
        mx.outputs = {d};
        mx.op = ReduceOp::max;
        sync->post(std::move(mx));
        s.durations = d.to_vector<double>();
        for (auto& x : s.durations) x = std::max(x, 1e-9);
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

BuildResult build_table(const std::vector<BenchSample>& samples, Statistic statistic,
                        std::string system) {
  using Cell = std::tuple<CommOpKind, int, std::size_t>;
  std::map<Cell, std::vector<const BenchSample*>> cells;
  for (const auto& s : samples) cells[{s.op, s.world_size, s.bytes}].push_back(&s);

  BuildResult result;
  result.table.system = std::move(system);
  for (const auto& [cell, list] : cells) {
    const auto& [op, world, bytes] = cell;
    const BenchSample* best = nullptr;
    double best_value = 0;
    for (const auto* s : list) {
      if (s->skipped || s->durations.empty()) continue;
      const double v = apply(statistic, s->durations);
      if (best == nullptr || v < best_value || (v == best_value && s->backend < best->backend)) {
        best = s;
        best_value = v;
      }
    }
    if (best == nullptr) {
      result.skipped_cells.push_back(std::string(to_string(op)) + "/" + std::to_string(world) +
                                     "/" + std::to_string(bytes));
      continue;
    }
    // Cells iterate in ascending bytes within (op, world).
    result.table.tables[op][world].push_back({bytes, best->backend});
    ++result.pre_merge_entries;
  }
  if (result.pre_merge_entries == 0) {
    throw Error(ErrorKind::empty_samples, "no measured samples to build a table from");
  }
  merge_runs(result.table);
  return result;
}

std::vector<BenchSample> bench_threads(const std::string& specs, const std::vector<int>& worlds,
                                       const BenchConfig& config) {
  std::vector<BenchSample> all;
  for (const int world : worlds) {
    std::vector<BenchSample> samples;
    launch_threads(world, [&](int rank, std::shared_ptr<InprocWorld> w) {
      Runtime rt(thread_options(rank, std::move(w)));
      rt.init(specs);
      auto mine = bench(config, rt);
      rt.finalize();
      if (rank == 0) samples = std::move(mine);
    });
    all.insert(all.end(), samples.begin(), samples.end());
  }
  return all;
}

}  // namespace mcrdl
