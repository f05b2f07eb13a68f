// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

// The `mcrdl` command line: launch, bench, tune, report, demo-mixed and
// selftest. Exit codes: 0 success, 1 failure, 2 usage error.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "mcrdl/runtime.hpp"
#include "mcrdl/tuner.hpp"

namespace mcrdl::cli {

inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

/// Whole command line, argv[0] included.
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// "4,64,1K" or "1K:1M" (powers of two from MIN to MAX inclusive).
std::vector<std::size_t> parse_sizes(std::string_view text);
/// Comma-separated op names; "all" for every kind.
std::vector<CommOpKind> parse_ops(std::string_view text);

/// Bench rows as CSV: op,backend,world,bytes,p50_us,min_us,max_us,status.
std::string bench_csv(const std::vector<BenchSample>& samples);

struct DemoOptions {
  std::size_t count = 1024;
  std::uint64_t seed = 7;
  /// The last rank posts a differently sized all_reduce on the first backend.
  bool inject_mismatch = false;
};

/**
 * The two-backend overlap program: all_reduce x on the first registered
 * backend and y on the second, both async; double z locally meanwhile;
 * wait both; result = x + y + z. Verified against the same program run on
 * the first backend alone. Rank 0 prints PASS or FAIL.
 */
int demo_mixed(Runtime& runtime, const DemoOptions& options, std::ostream& out, std::ostream& err);

/// Oracle sweep over every collective, f32 and i64, counts {0,1,7,64}, on
/// every registered backend.
int selftest(Runtime& runtime, std::uint64_t seed, std::ostream& out, std::ostream& err);

}  // namespace mcrdl::cli
