// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mcrdl/dispatch.hpp"
#include "mcrdl/runtime.hpp"

namespace mcrdl {

enum class Statistic { median, mean, min };

std::string_view to_string(Statistic s) noexcept;
std::optional<Statistic> parse_statistic(std::string_view name) noexcept;
/// Throws Error(empty_samples) on an empty list.
double apply(Statistic s, std::vector<double> values);

struct BenchConfig {
  std::vector<CommOpKind> ops;
  std::vector<std::size_t> sizes = all_buckets();  // canonical message bytes
  int warmup_iters = 5;
  int measure_iters = 20;
  Statistic statistic = Statistic::median;

  /// Throws ValidationError unless measure_iters >= 3, warmup_iters >= 0 and
  /// sizes ascend.
  void check() const;
};

struct BenchSample {
  CommOpKind op = CommOpKind::all_reduce;
  BackendId backend;
  int world_size = 1;
  std::size_t bytes = 0;
  std::vector<double> durations;  // seconds, slowest rank per iteration
  bool skipped = false;
  std::string reason;  // why it was skipped
};

/// Request of `kind` whose canonical message size is `bytes` (rounded up to
/// what the kind can express), as posted by `rank`. Reductions use f32 and
/// everything else u8. Roots and p2p peers are rank 0 and 1; p2p kinds
/// return nullopt for ranks that sit the round out.
std::optional<CommRequest> bench_request(CommOpKind kind, std::size_t bytes, int world, int rank,
                                         const BackendId& backend);

/**
 * Time every (op, backend, size) combination with blocking calls, a
 * header-only all_reduce as barrier before each iteration, and the slowest
 * rank's time per iteration. Every rank must call it with the same
 * arguments; all ranks return the same samples. `backends` defaults to the
 * whole registry. Unsupported combinations come back marked skipped.
 */
std::vector<BenchSample> bench(const BenchConfig& config, Runtime& runtime,
                               std::vector<BackendId> backends = {});

struct BuildResult {
  TuningTable table;
  /// One per (op, world, size) cell with a winner, counted before merging.
  std::size_t pre_merge_entries = 0;
  /// "op/world/bytes" cells where every backend was skipped.
  std::vector<std::string> skipped_cells;
};

/// Per cell, the backend with the smallest statistic wins; ties go to the
/// lexicographically smaller id. Throws Error(empty_samples) when nothing
/// was measured.
BuildResult build_table(const std::vector<BenchSample>& samples,
                        Statistic statistic = Statistic::median, std::string system = "");

/// Threads-mode tuning: for each world size, launch that many inproc ranks,
/// register `specs` and bench. Returns all samples (rank 0's view).
std::vector<BenchSample> bench_threads(const std::string& specs, const std::vector<int>& worlds,
                                       const BenchConfig& config);

}  // namespace mcrdl
