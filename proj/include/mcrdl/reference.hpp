// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mcrdl/request.hpp"

namespace mcrdl::reference {

/**
 * Sequential single-process oracle. `requests[r]` is what rank r posted for
 * one collective; the result holds, per rank, the buffers its outputs should
 * contain afterwards (same order and shape as request.outputs). Outputs a
 * rank is not meant to receive (non-root reduce, gather) keep their current
 * contents. Reductions fold ranks in order 0..p-1.
 */
std::vector<std::vector<Buffer>> expected(const std::vector<CommRequest>& requests);

/// Deterministic fill: values depend on (seed, rank, index) only and stay
/// small and positive so float sums are exact enough for tight tolerances.
Buffer pattern(DType dtype, std::size_t count, std::uint64_t seed, int rank);

/// Equality with 1e-6 relative tolerance per element for f32 (1e-12 for
/// f64) and exact comparison otherwise. Writes a description of the first
/// difference into `why` when given.
bool close_enough(const Buffer& actual, const Buffer& expected, std::string* why = nullptr);

/// One oracle case: a collective of `kind` over `count` elements per rank.
/// Vectored kinds derive uneven per-rank counts (some zero) from `count`,
/// and rooted kinds use the last rank as root.
struct Case {
  CommOpKind kind = CommOpKind::all_reduce;
  DType dtype = DType::f32;
  std::size_t count = 0;
  ReduceOp op = ReduceOp::sum;
  std::uint64_t seed = 1;
};

std::string describe(const Case& c);

/// The collective kinds (everything but send and recv).
std::vector<CommOpKind> collective_kinds();

/// The request rank `rank` posts for `c`. Inputs come from pattern(); output
/// buffers are prefilled too, so untouched regions are checked as well.
CommRequest make_request(const Case& c, int world, int rank);

/// Compare the outputs of `posted`, rank `rank`'s completed request for `c`,
/// with the oracle.
bool check(const Case& c, int world, int rank, const CommRequest& posted,
           std::string* why = nullptr);

}  // namespace mcrdl::reference
