// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <csignal>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "mcrdl/error.hpp"
#include "mcrdl/middleware.hpp"
#include "mcrdl/reference.hpp"

extern char** environ;

namespace mcrdl::cli {
namespace {

constexpr const char* kDefaultBackends = "nccl-like,mpi-like";

struct Command {
  std::string name;
  std::string backends = kDefaultBackends;
  std::string ops = "all_reduce";
  std::string sizes;
  int iters = 20;
  int warmup = 5;
  std::string statistic = "median";
  std::string out_path;
  std::string worlds;
  std::string system;
  std::vector<std::string> paths;
  bool csv = false;
  DemoOptions demo;
  std::uint64_t seed = 1;
  std::string log_dir;
};

struct Launch {
  int nranks = 0;
  std::string mode = "threads";
  std::string master;
  double timeout_s = 600;
  std::vector<std::string> rest;
};

class NullBuffer : public std::streambuf {
 protected:
  int overflow(int c) override { return c; }
};

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto at = s.find(sep, start);
    out.push_back(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return out;
}

std::vector<int> parse_worlds(std::string_view text) {
  std::vector<int> out;
  for (auto part : split(text, ',')) {
    const auto n = parse_size(part);
    if (n < 1 || n > 1024) throw Error(ErrorKind::usage, "bad world size '" + std::string(part) + "'");
    out.push_back(static_cast<int>(n));
  }
  return out;
}

void add_backends(CLI::App* sub, Command& c) {
  sub->add_option("--backends", c.backends, "Comma-separated backend specs")
      ->capture_default_str();
  sub->add_option("--log", c.log_dir, "Write rank<r>.jsonl communication logs into this directory");
}

void add_bench_flags(CLI::App* sub, Command& c) {
  add_backends(sub, c);
  sub->add_option("--ops", c.ops, "Comma-separated op kinds, or all")->capture_default_str();
  sub->add_option("--sizes", c.sizes, "Message sizes: list (4,1K) or range MIN:MAX");
  sub->add_option("--iters", c.iters, "Timed iterations")->capture_default_str();
  sub->add_option("--warmup", c.warmup, "Warmup iterations")->capture_default_str();
  sub->add_option("--statistic", c.statistic, "median, mean or min")->capture_default_str();
}

// Parses one command line (argv[0] included). Returns the launch spec when
// the command is `launch`.
int parse(const std::vector<std::string>& args, Command& cmd, std::optional<Launch>& launch,
          std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-backend collective communication runtime", "mcrdl"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  Launch l;
  auto* launch_cmd = app.add_subcommand("launch", "Run a subcommand on N local ranks");
  launch_cmd->add_option("-n,--nranks", l.nranks, "Number of ranks")->required();
  launch_cmd->add_option("--mode", l.mode, "threads (inproc) or processes (tcp)")
      ->check(CLI::IsMember({"threads", "processes"}))
      ->capture_default_str();
  launch_cmd->add_option("--master", l.master, "Rendezvous host:port for processes mode");
  launch_cmd->add_option("--timeout", l.timeout_s, "Seconds before ranks are killed")
      ->capture_default_str();
  launch_cmd->prefix_command();

  auto* bench_cmd = app.add_subcommand("bench", "Micro-benchmark ops over backends and sizes");
  add_bench_flags(bench_cmd, cmd);

  auto* tune_cmd = app.add_subcommand("tune", "Benchmark and emit a tuning table");
  add_bench_flags(tune_cmd, cmd);
  tune_cmd->add_option("--out", cmd.out_path, "Tuning table path")->required();
  tune_cmd->add_option("--worlds", cmd.worlds,
                       "World sizes to tune in threads mode, e.g. 2,4,8 (standalone only)");
  tune_cmd->add_option("--system", cmd.system, "Label stored in the table");

  auto* report_cmd = app.add_subcommand("report", "Summarize communication logs");
  report_cmd->add_option("logs", cmd.paths, "One log file per rank")->required();
  report_cmd->add_flag("--csv", cmd.csv, "Machine-readable output");

  auto* demo_cmd = app.add_subcommand("demo-mixed", "Two-backend overlap program with oracle check");
  add_backends(demo_cmd, cmd);
  demo_cmd->add_option("--count", cmd.demo.count, "Elements per tensor")->capture_default_str();
  demo_cmd->add_option("--seed", cmd.demo.seed)->capture_default_str();
  demo_cmd->add_flag("--inject-mismatch", cmd.demo.inject_mismatch,
                     "Make the last rank post a mismatched all_reduce");

  auto* self_cmd = app.add_subcommand("selftest", "Oracle check of every collective");
  add_backends(self_cmd, cmd);
  self_cmd->add_option("--seed", cmd.seed)->capture_default_str();

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? -1 : kUsage;  // -1: help printed
  }
  if (launch_cmd->parsed()) {
    l.rest = launch_cmd->remaining();
    launch = l;
    cmd.name = "launch";
  } else {
    for (auto* sub : app.get_subcommands()) cmd.name = sub->get_name();
  }
  return kOk;
}

BenchConfig bench_config(const Command& c) {
  BenchConfig config;
  config.ops = parse_ops(c.ops);
  if (!c.sizes.empty()) config.sizes = parse_sizes(c.sizes);
  config.measure_iters = c.iters;
  config.warmup_iters = c.warmup;
  const auto stat = parse_statistic(c.statistic);
  if (!stat) throw Error(ErrorKind::usage, "unknown statistic '" + c.statistic + "'");
  config.statistic = *stat;
  config.check();
  return config;
}

int run_tune(Runtime* rt, const Command& c, int rank, int world, std::ostream& out,
             std::ostream& err) {
  const auto config = bench_config(c);
  if (config.ops.empty()) {
    err << "tune: --ops names no operation\n";
    return kUsage;
  }
  if (rank == 0) {
    std::ofstream probe(c.out_path, std::ios::app);
    if (!probe) {
      err << "tune: cannot write " << c.out_path << "\n";
      return kFailure;
    }
  }
  std::vector<BenchSample> samples;
  if (!c.worlds.empty()) {
    if (world != 1) {
      err << "tune: --worlds runs its own ranks; do not combine it with launch\n";
      return kUsage;
    }
    samples = bench_threads(c.backends, parse_worlds(c.worlds), config);
  } else {
    samples = bench(config, *rt);
  }
  if (rank != 0) return kOk;
  const auto built = build_table(samples, config.statistic, c.system);
  emit(built.table, c.out_path);
  const auto skipped = std::count_if(samples.begin(), samples.end(),
                                     [](const BenchSample& s) { return s.skipped; });
  out << "samples: " << samples.size() << " (" << skipped << " skipped)\n"
      << "entries: pre-merge " << built.pre_merge_entries << ", post-merge "
      << built.table.entry_count() << "\n"
      << "wrote " << c.out_path << "\n";
  return kOk;
}

int run_report(const Command& c, std::ostream& out, std::ostream& err) {
  try {
    const auto r = report(c.paths);
    out << (c.csv ? format_report_csv(r) : format_report(r));
    return kOk;
  } catch (const Error& e) {
    err << "report: " << e.what() << "\n";
    return kFailure;
  }
}

// One rank of a rank-level command.
int run_rank(const Command& c, RuntimeOptions options, std::ostream& out, std::ostream& err) {
  NullBuffer null_buf;
  std::ostream null(&null_buf);
  std::ostream& o = options.rank == 0 ? out : null;
  const int rank = options.rank;
  try {
    if (c.name == "tune" && !c.worlds.empty()) {
      return run_tune(nullptr, c, rank, options.world_size, o, err);
    }
    options.logging = !c.log_dir.empty();
    Runtime rt(options);
    rt.init(c.backends);
    int code = kOk;
    if (c.name == "bench") {
      const auto samples = bench(bench_config(c), rt);
      o << bench_csv(samples);
    } else if (c.name == "tune") {
      code = run_tune(&rt, c, rank, options.world_size, o, err);
    } else if (c.name == "demo-mixed") {
      code = demo_mixed(rt, c.demo, o, err);
    } else if (c.name == "selftest") {
      code = selftest(rt, c.seed, o, err);
    }
    rt.finalize();
    if (rt.logger() != nullptr) {
      rt.logger()->flush(c.log_dir + "/rank" + std::to_string(rank) + ".jsonl");
    }
    return code;
  } catch (const Error& e) {
    err << "rank " << rank << ": " << to_string(e.kind()) << ": " << e.what() << "\n";
    return e.kind() == ErrorKind::usage || e.kind() == ErrorKind::parse ? kUsage : kFailure;
  } catch (const std::exception& e) {
    err << "rank " << rank << ": " << e.what() << "\n";
    return kFailure;
  }
}

int launch_threads_mode(const Command& c, int n, std::ostream& out, std::ostream& err) {
  auto world = std::make_shared<InprocWorld>(n);
  const HostPort master{"127.0.0.1", find_free_port()};
  std::vector<std::ostringstream> outs(static_cast<std::size_t>(n));
  std::vector<std::ostringstream> errs(static_cast<std::size_t>(n));
  std::vector<int> codes(static_cast<std::size_t>(n), kOk);
  std::vector<std::thread> threads;
  for (int r = 0; r < n; ++r) {
    threads.emplace_back([&, r] {
      auto o = thread_options(r, world);
      o.master = master;
      const auto env = RuntimeOptions::from_env();
      o.op_timeout = env.op_timeout;
      o.bootstrap_timeout = env.bootstrap_timeout;
      o.tuning_table_path = env.tuning_table_path;
      const auto i = static_cast<std::size_t>(r);
      codes[i] = run_rank(c, o, outs[i], errs[i]);
    });
  }
  for (auto& t : threads) t.join();
  for (int r = 0; r < n; ++r) {
    out << outs[static_cast<std::size_t>(r)].str();
    err << errs[static_cast<std::size_t>(r)].str();
  }
  return *std::max_element(codes.begin(), codes.end());
}

int launch_processes_mode(const Launch& l, std::ostream& err) {
  HostPort master{"127.0.0.1", 0};
  if (!l.master.empty()) {
    master = parse_host_port(l.master);
  } else {
    master.port = find_free_port();
  }
  std::vector<char> exe(4096, '\0');
  const auto len = readlink("/proc/self/exe", exe.data(), exe.size() - 1);
  if (len <= 0) {
    err << "launch: cannot locate own executable\n";
    return kFailure;
  }
  std::vector<std::string> args{std::string(exe.data(), static_cast<std::size_t>(len))};
  args.insert(args.end(), l.rest.begin(), l.rest.end());
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);

  std::vector<pid_t> pids;
  for (int r = 0; r < l.nranks; ++r) {
    std::vector<std::string> env;
    for (char** e = environ; *e != nullptr; ++e) {
      const std::string_view kv(*e);
      if (kv.starts_with("MCRDL_RANK=") || kv.starts_with("MCRDL_WORLD_SIZE=") ||
          kv.starts_with("MCRDL_MASTER_ADDR=") || kv.starts_with("MCRDL_MASTER_PORT=")) {
        continue;
      }
      env.emplace_back(kv);
    }
    env.push_back("MCRDL_RANK=" + std::to_string(r));
    env.push_back("MCRDL_WORLD_SIZE=" + std::to_string(l.nranks));
    env.push_back("MCRDL_MASTER_ADDR=" + master.host);
    env.push_back("MCRDL_MASTER_PORT=" + std::to_string(master.port));
    std::vector<char*> envp;
    for (auto& e : env) envp.push_back(e.data());
    envp.push_back(nullptr);
    pid_t pid = 0;
    if (posix_spawn(&pid, argv[0], nullptr, nullptr, argv.data(), envp.data()) != 0) {
      err << "launch: cannot spawn rank " << r << "\n";
      for (auto p : pids) kill(p, SIGKILL);
      for (auto p : pids) waitpid(p, nullptr, 0);
      return kFailure;
    }
    pids.push_back(pid);
  }

  const auto deadline = Clock::now() + std::chrono::duration_cast<Clock::duration>(
                                           std::chrono::duration<double>(l.timeout_s));
  int code = kOk;
  std::size_t running = pids.size();
  std::vector<bool> done(pids.size(), false);
  while (running > 0) {
    for (std::size_t i = 0; i < pids.size(); ++i) {
      if (done[i]) continue;
      int status = 0;
      if (waitpid(pids[i], &status, WNOHANG) == pids[i]) {
        done[i] = true;
        --running;
        const int rc = WIFEXITED(status) ? WEXITSTATUS(status) : 128 + WTERMSIG(status);
        code = std::max(code, rc);
      }
    }
    if (running == 0) break;
    if (Clock::now() > deadline) {
      err << "launch: timed out after " << l.timeout_s << " s; killing ranks\n";
      for (std::size_t i = 0; i < pids.size(); ++i) {
        if (!done[i]) kill(pids[i], SIGKILL);
      }
      for (std::size_t i = 0; i < pids.size(); ++i) {
        if (!done[i]) waitpid(pids[i], nullptr, 0);
      }
      return std::max(code, kFailure);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  return code;
}

// Cross-rank minimum of a flag, on the first backend that runs all_reduce.
bool all_ranks(Runtime& rt, bool mine) {
  for (const auto& id : rt.get_backends()) {
    if (!rt.backend(id.str()).supports(CommOpKind::all_reduce)) continue;
    auto flag = Buffer::from<std::int64_t>({mine ? 1 : 0});
    rt.all_reduce(id.str(), flag, ReduceOp::min);
    return flag.as<std::int64_t>()[0] == 1;
  }
  return mine;
}

}  // namespace

std::vector<std::size_t> parse_sizes(std::string_view text) {
  std::vector<std::size_t> out;
  for (auto part : split(text, ',')) {
    if (part.empty()) throw Error(ErrorKind::parse, "empty size in '" + std::string(text) + "'");
    const auto colon = part.find(':');
    if (colon == std::string_view::npos) {
      out.push_back(parse_size(part));
      continue;
    }
    const auto lo = parse_size(part.substr(0, colon));
    const auto hi = parse_size(part.substr(colon + 1));
    if (lo == 0 || (lo & (lo - 1)) != 0 || lo > hi) {
      throw Error(ErrorKind::parse, "range '" + std::string(part) +
                                        "' needs a power-of-two MIN no larger than MAX");
    }
    for (std::size_t s = lo; s <= hi; s <<= 1) out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<CommOpKind> parse_ops(std::string_view text) {
  if (text == "all") return {kAllOpKinds.begin(), kAllOpKinds.end()};
  std::vector<CommOpKind> out;
  if (text.empty()) return out;
  for (auto part : split(text, ',')) {
    const auto kind = parse_op_kind(part);
    if (!kind) throw Error(ErrorKind::parse, "unknown op '" + std::string(part) + "'");
    out.push_back(*kind);
  }
  return out;
}

std::string bench_csv(const std::vector<BenchSample>& samples) {
  std::ostringstream os;
  os << "op,backend,world,bytes,p50_us,min_us,max_us,status\n";
  os << std::fixed << std::setprecision(3);
  for (const auto& s : samples) {
    os << to_string(s.op) << ',' << s.backend.str() << ',' << s.world_size << ',' << s.bytes << ',';
    if (s.skipped || s.durations.empty()) {
      os << ",,,skipped\n";
      continue;
    }
    const auto [lo, hi] = std::minmax_element(s.durations.begin(), s.durations.end());
    os << apply(Statistic::median, s.durations) * 1e6 << ',' << *lo * 1e6 << ',' << *hi * 1e6
       << ",ok\n";
  }
  return os.str();
}

int demo_mixed(Runtime& rt, const DemoOptions& options, std::ostream& out, std::ostream& err) {
  const auto backends = rt.get_backends();
  if (backends.size() < 2) {
    out << "demo-mixed: skipped, needs two backends (have " << backends.size() << ")\n";
    return kOk;
  }
  const auto a = backends[0].str();
  const auto b = backends[1].str();
  const int rank = rt.get_rank(a);
  const int world = rt.get_size(a);
  if (options.inject_mismatch && world < 2) {
    err << "demo-mixed: --inject-mismatch needs at least two ranks\n";
    return kUsage;
  }
  const auto n = options.count;
  auto x = reference::pattern(DType::f32, n, options.seed, rank);
  auto y = reference::pattern(DType::f32, n, options.seed + 1, rank);
  auto z = reference::pattern(DType::f32, n, options.seed + 2, rank);
  const auto x0 = x.clone();
  const auto y0 = y.clone();
  const auto z0 = z.clone();

  const bool corrupt = options.inject_mismatch && rank == world - 1;
  if (corrupt) x = reference::pattern(DType::f32, n + 1, options.seed, rank);

  // The program under test.
  auto h1 = rt.all_reduce(a, x, ReduceOp::sum, true);
  auto h2 = rt.all_reduce(b, y, ReduceOp::sum, true);
  for (auto& v : z.as<float>()) v = v + v;
  try {
    h1.wait();
  } catch (const Error& e) {
    h2.wait();
    if (e.kind() == ErrorKind::order_mismatch) {
      out << "demo-mixed: OrderMismatch detected on " << a << "\n";
      err << "demo-mixed: rank " << rank << ": OrderMismatch: " << e.what() << "\n";
      return kFailure;
    }
    throw;
  }
  h2.wait();
  Buffer result(DType::f32, n);
  {
    auto r = result.as<float>();
    const auto xs = x.as<float>();
    const auto ys = y.as<float>();
    const auto zs = z.as<float>();
    for (std::size_t i = 0; i < n; ++i) r[i] = xs[i] + ys[i] + zs[i];
  }

  // Oracle: the same program with both reductions on the first backend.
  auto x2 = x0.clone();
  auto y2 = y0.clone();
  rt.all_reduce(a, x2);
  rt.all_reduce(a, y2);
  Buffer single(DType::f32, n);
  {
    auto r = single.as<float>();
    const auto xs = x2.as<float>();
    const auto ys = y2.as<float>();
    const auto zs = z0.as<float>();
    for (std::size_t i = 0; i < n; ++i) r[i] = xs[i] + ys[i] + (zs[i] + zs[i]);
  }
  std::string why;
  const bool ok = reference::close_enough(result, single, &why);
  if (!ok) err << "demo-mixed: rank " << rank << ": " << why << "\n";
  const bool all_ok = all_ranks(rt, ok);
  out << "demo-mixed: " << (all_ok ? "PASS" : "FAIL") << " (world=" << world << ", backends "
      << a << "+" << b << ", count=" << n << ")\n";
  return all_ok ? kOk : kFailure;
}

int selftest(Runtime& rt, std::uint64_t seed, std::ostream& out, std::ostream& err) {
  const auto backends = rt.get_backends();
  if (backends.empty()) {
    err << "selftest: no backend registered\n";
    return kUsage;
  }
  const int rank = rt.get_rank(backends[0].str());
  const int world = rt.get_size(backends[0].str());
  std::size_t cases = 0;
  std::size_t failures = 0;
  for (const auto& id : backends) {
    auto& backend = rt.backend(id.str());
    for (const auto kind : reference::collective_kinds()) {
      if (!backend.supports(kind)) continue;
      for (const auto dtype : {DType::f32, DType::i64}) {
        for (const std::size_t count : {0, 1, 7, 64}) {
          reference::Case c{kind, dtype, count, ReduceOp::sum, seed};
          auto req = reference::make_request(c, world, rank);
          req.backend = id;
          ++cases;
          std::string why;
          try {
            rt.post(req);
            if (reference::check(c, world, rank, req, &why)) continue;
          } catch (const Error& e) {
            why = e.what();
          }
          ++failures;
          err << "selftest: rank " << rank << ": " << id.str() << " " << reference::describe(c)
              << ": " << why << "\n";
        }
      }
    }
  }
  const bool ok = all_ranks(rt, failures == 0);
  out << "selftest: world=" << world << " backends=" << backends.size() << " cases=" << cases
      << " " << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? kOk : kFailure;
}

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Command cmd;
  std::optional<Launch> launch;
  const int parsed = parse(args, cmd, launch, out, err);
  if (parsed == -1) return kOk;
  if (parsed != kOk) return parsed;

  try {
    if (!launch) {
      if (cmd.name == "report") return run_report(cmd, out, err);
      return run_rank(cmd, RuntimeOptions::from_env(), out, err);
    }
    if (launch->nranks < 1) {
      err << "launch: -n must be at least 1\n";
      return kUsage;
    }
    if (launch->rest.empty()) {
      err << "launch: missing subcommand\n";
      return kUsage;
    }
    Command inner;
    std::optional<Launch> nested;
    std::vector<std::string> inner_args{args.front()};
    inner_args.insert(inner_args.end(), launch->rest.begin(), launch->rest.end());
    const int inner_parsed = parse(inner_args, inner, nested, out, err);
    if (inner_parsed == -1) return kOk;
    if (inner_parsed != kOk) return inner_parsed;
    if (nested) {
      err << "launch: cannot nest launch\n";
      return kUsage;
    }
    if (inner.name == "report") return run_report(inner, out, err);
    if (launch->mode == "processes") return launch_processes_mode(*launch, err);
    return launch_threads_mode(inner, launch->nranks, out, err);
  } catch (const Error& e) {
    err << to_string(e.kind()) << ": " << e.what() << "\n";
    return e.kind() == ErrorKind::usage || e.kind() == ErrorKind::parse ? kUsage : kFailure;
  }
}

}  // namespace mcrdl::cli
