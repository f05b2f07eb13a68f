// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "mcrdl/collectives.hpp"
#include "mcrdl/dispatch.hpp"
#include "mcrdl/middleware.hpp"
#include "mcrdl/request.hpp"
#include "mcrdl/transport.hpp"
#include "mcrdl/work.hpp"

namespace mcrdl {

/// What a backend is made of: a transport, an algorithm per op kind, an
/// optional cost shape and optional middleware.
struct BackendConfig {
  BackendId id;
  std::string transport;  // "inproc", "tcp", or empty for the runtime default
  AlgorithmPolicy policy;
  std::optional<CostShape> shape;
  std::optional<std::set<CommOpKind>> only;  // supported kinds; all when unset
  FusionConfig fusion;
  Codec codec = Codec::none;

  friend bool operator==(const BackendConfig&, const BackendConfig&) = default;
};

/**
 * Parse one backend spec: `id[=transport[:key=value]...]`.
 *
 * A bare id names a preset ("inproc", "tcp", "nccl-like", "mpi-like") or an
 * unshaped backend on the default transport. Keys:
 *   alpha=<time>  beta=<time per byte>   e.g. alpha=100us, beta=1ns
 *   <op>=<algorithm>                     e.g. all_reduce=recursive_doubling
 *   only=<op>+<op>...                    restrict supported kinds
 *   fusion_bytes=<size>  fusion_ms=<ms>  enable all_reduce fusion
 *   compress=trunc16
 * Throws Error(parse), Error(unknown_transport) or ValidationError.
 */
BackendConfig parse_backend_spec(std::string_view spec);
/// Comma-separated list of specs.
std::vector<BackendConfig> parse_backend_specs(std::string_view specs);

/// Time with unit suffix (ns, us, ms, s; bare numbers are seconds).
double parse_seconds(std::string_view text);
/// Size with optional K/M/G suffix (powers of 1024).
std::size_t parse_size(std::string_view text);

struct BackendStats {
  std::uint64_t posted = 0;
  std::uint64_t completed = 0;
  std::uint64_t executions = 0;  // collectives/p2p ops run on the transport
  std::uint64_t fused_flushes = 0;
  std::uint64_t fused_members = 0;
  std::uint64_t timeout_flushes = 0;
};

/**
 * One registered backend: its transport and the progress lane that is the
 * sole executor of its I/O. Operations run one at a time in post order.
 */
class BackendInstance {
 public:
  enum class State { created, initialized, finalized };

  struct Hooks {
    Logger* logger = nullptr;
    /// Called from the lane when a fusion buffer flushed on its timer.
    std::function<void(const BackendInstance&)> on_timer_flush;
  };

  BackendInstance(BackendConfig config, std::unique_ptr<Transport> transport,
                  std::chrono::milliseconds op_timeout, Hooks hooks);
  BackendInstance(BackendConfig config, std::unique_ptr<Transport> transport,
                  std::chrono::milliseconds op_timeout)
      : BackendInstance(std::move(config), std::move(transport), op_timeout, Hooks{}) {}
  ~BackendInstance();

  BackendInstance(const BackendInstance&) = delete;
  BackendInstance& operator=(const BackendInstance&) = delete;

  const BackendId& id() const noexcept { return config_.id; }
  const BackendConfig& config() const noexcept { return config_; }
  int rank() const noexcept { return transport_->rank(); }
  int size() const noexcept { return transport_->size(); }
  State state() const noexcept;
  bool supports(CommOpKind kind) const noexcept;
  Transport& transport() noexcept { return *transport_; }

  /// Validate and enqueue. Blocks until completion unless request.async_op.
  /// Throws ValidationError, Error(backend_finalized) or
  /// Error(unsupported_operation); with async_op=false also the op's error.
  WorkHandle post(CommRequest request);

  CompletionEvent record_event() const;
  /// Posted but not yet completed.
  std::size_t pending() const noexcept;
  BackendStats stats() const noexcept;

  /// Ask the lane to flush an open fusion buffer now.
  void nudge();
  /// Wait for `event`, flushing fusion buffers first. False on timeout.
  bool drain(const CompletionEvent& event, Deadline deadline);
  /// Errors of failed operations nobody has waited on, since the last call.
  std::vector<std::exception_ptr> take_unobserved_failures();

  /// Drain the lane, then close the transport. Throws
  /// Error(pending_after_timeout) if work is still pending after `timeout`;
  /// the transport is closed either way. A second call is a no-op.
  void finalize(std::chrono::milliseconds timeout);

 private:
  struct Task {
    CommRequest request;
    std::shared_ptr<detail::WorkState> state;
    std::uint64_t coll_seq = 0;
    std::uint64_t ordinal = 0;  // position on the lane, 1-based
    std::size_t bytes = 0;
    Clock::time_point posted_at;
    bool fusable = false;
    bool urgent = false;
  };

  void lane_loop();
  void execute(Task& task);
  std::size_t execute_fused(std::vector<Task>& group);
  void log(const Task& head, Clock::time_point start, std::size_t bytes, std::size_t members,
           bool compressed);
  bool same_group(const Task& head, const Task& t) const noexcept;

  BackendConfig config_;
  std::unique_ptr<Transport> transport_;
  std::chrono::milliseconds op_timeout_;
  Hooks hooks_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Task> queue_;
  State state_ = State::created;
  bool stopping_ = false;
  std::uint64_t flush_through_ = 0;  // flush fusion buffers holding ordinals <= this
  std::uint64_t seq_ = 0;
  std::uint64_t coll_seq_ = 0;
  std::uint64_t next_work_id_ = 0;
  std::vector<std::shared_ptr<detail::WorkState>> watch_;  // async work, for failure reports
  std::shared_ptr<detail::LaneProgress> progress_;
  BackendStats stats_;
  std::thread lane_;
};

struct RuntimeOptions {
  int rank = 0;
  int world_size = 1;
  /// Threads mode: ranks share this world and default to the inproc transport.
  std::shared_ptr<InprocWorld> inproc;
  /// Processes mode: rank 0's rendezvous address for tcp backends.
  std::optional<HostPort> master;
  std::chrono::milliseconds op_timeout{30000};
  std::chrono::milliseconds bootstrap_timeout{30000};
  std::optional<std::string> tuning_table_path;
  bool logging = false;

  /// MCRDL_RANK, MCRDL_WORLD_SIZE, MCRDL_MASTER_ADDR, MCRDL_MASTER_PORT,
  /// MCRDL_TIMEOUT_SECS, MCRDL_TUNING_TABLE.
  static RuntimeOptions from_env();
};

/// The user-facing API: registry, posting, waits, synchronize.
class Runtime {
 public:
  explicit Runtime(RuntimeOptions options = {});
  ~Runtime();

  Runtime(const Runtime&) = delete;
  Runtime& operator=(const Runtime&) = delete;

  const RuntimeOptions& options() const noexcept { return options_; }

  /// Bootstrap each backend in order. Re-initializing a live id is a no-op
  /// when the config is identical and DuplicateBackend otherwise; a list
  /// naming an id twice is DuplicateBackend.
  void init(const std::vector<BackendConfig>& backends);
  void init(std::string_view specs);
  /// Finalize the listed backends (all when empty).
  void finalize(const std::vector<std::string>& backends = {});
  /// Drain the listed backends (all when empty) in registry order. Throws
  /// the first failure after draining every backend.
  void synchronize(const std::vector<std::string>& backends = {});

  std::vector<BackendId> get_backends() const;
  int get_size(std::string_view backend) const;
  int get_rank(std::string_view backend) const;
  BackendInstance& backend(std::string_view id);

  void set_tuning_table(TuningTable table);
  const std::optional<TuningTable>& tuning_table() const noexcept { return table_; }
  /// The backend "auto" would pick for `request`.
  BackendId resolve(const CommRequest& request) const;

  WorkHandle post(CommRequest request);

  WorkHandle send(std::string_view backend, Buffer t, int rank, bool async_op = false);
  WorkHandle recv(std::string_view backend, Buffer t, int rank, bool async_op = false);
  WorkHandle all_to_all_single(std::string_view backend, Buffer output, Buffer input,
                               bool async_op = false);
  WorkHandle all_to_all(std::string_view backend, std::vector<Buffer> output,
                        std::vector<Buffer> input, bool async_op = false);
  /// In place.
  WorkHandle all_reduce(std::string_view backend, Buffer t, ReduceOp op = ReduceOp::sum,
                        bool async_op = false);
  WorkHandle all_gather(std::string_view backend, Buffer output, Buffer input,
                        bool async_op = false);
  /// `output` is only used at root.
  WorkHandle gather(std::string_view backend, Buffer output, Buffer input, int root,
                    bool async_op = false);
  /// `input` is only used at root.
  WorkHandle scatter(std::string_view backend, Buffer output, Buffer input, int root,
                     bool async_op = false);
  /// In place; the result is defined at root.
  WorkHandle reduce(std::string_view backend, Buffer t, int root, ReduceOp op = ReduceOp::sum,
                    bool async_op = false);
  WorkHandle reduce_scatter(std::string_view backend, Buffer output, Buffer input,
                            ReduceOp op = ReduceOp::sum, bool async_op = false);
  WorkHandle bcast(std::string_view backend, Buffer t, int root, bool async_op = false);
  WorkHandle gatherv(std::string_view backend, Buffer output, Buffer input, int root,
                     Counts rcounts, Counts displs, bool async_op = false);
  WorkHandle scatterv(std::string_view backend, Buffer output, Buffer input, int root,
                      Counts scounts, Counts displs, bool async_op = false);
  WorkHandle all_gatherv(std::string_view backend, Buffer output, Buffer input, Counts rcounts,
                         Counts displs, bool async_op = false);
  WorkHandle all_to_allv(std::string_view backend, Buffer output, Buffer input, Counts scounts,
                         Counts rcounts, Counts sdispls, Counts rdispls, bool async_op = false);

  /// Present when options.logging is set.
  Logger* logger() noexcept { return logger_.get(); }

 private:
  BackendInstance* find(std::string_view id) const;
  BackendInstance& require(std::string_view id) const;
  std::unique_ptr<Transport> make_transport(const BackendConfig& config);
  void nudge_others(const BackendInstance& origin);

  RuntimeOptions options_;
  std::shared_ptr<InprocWorld> private_world_;
  std::unique_ptr<Logger> logger_;
  std::optional<TuningTable> table_;
  mutable std::mutex registry_mu_;
  std::vector<std::unique_ptr<BackendInstance>> registry_;
};

/// Run `body(rank, world)` on `nranks` threads sharing one InprocWorld.
/// Rethrows the first exception after every thread has finished.
void launch_threads(int nranks, const std::function<void(int, std::shared_ptr<InprocWorld>)>& body);

/// RuntimeOptions for rank `rank` of a threads-mode world.
RuntimeOptions thread_options(int rank, std::shared_ptr<InprocWorld> world);

}  // namespace mcrdl
