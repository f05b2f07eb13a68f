// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mcrdl/buffer.hpp"
#include "mcrdl/dtype.hpp"

namespace mcrdl {

/// Name of a registered backend. Non-empty, lowercase [a-z0-9_-], starting
/// with a letter. "auto" is reserved for the dispatch layer.
class BackendId {
 public:
  BackendId() = default;
  explicit BackendId(std::string name);

  static BackendId automatic() { return BackendId(std::string(kAuto)); }
  static bool is_valid_name(std::string_view name) noexcept;

  const std::string& str() const noexcept { return name_; }
  bool is_auto() const noexcept { return name_ == kAuto; }
  bool empty() const noexcept { return name_.empty(); }

  friend auto operator<=>(const BackendId&, const BackendId&) = default;

 private:
  static constexpr std::string_view kAuto = "auto";
  std::string name_;
};

enum class CommOpKind : std::uint8_t {
  send,
  recv,
  bcast,
  reduce,
  all_reduce,
  gather,
  gatherv,
  scatter,
  scatterv,
  all_gather,
  all_gatherv,
  reduce_scatter,
  all_to_all_single,
  all_to_all,
  all_to_allv,
};

inline constexpr std::size_t kNumOpKinds = 15;
inline constexpr std::array<CommOpKind, kNumOpKinds> kAllOpKinds = {
    CommOpKind::send,        CommOpKind::recv,           CommOpKind::bcast,
    CommOpKind::reduce,      CommOpKind::all_reduce,     CommOpKind::gather,
    CommOpKind::gatherv,     CommOpKind::scatter,        CommOpKind::scatterv,
    CommOpKind::all_gather,  CommOpKind::all_gatherv,    CommOpKind::reduce_scatter,
    CommOpKind::all_to_all_single, CommOpKind::all_to_all, CommOpKind::all_to_allv,
};

std::string_view to_string(CommOpKind kind) noexcept;
std::optional<CommOpKind> parse_op_kind(std::string_view name) noexcept;

bool is_collective(CommOpKind kind) noexcept;
bool is_rooted(CommOpKind kind) noexcept;
bool is_reduction(CommOpKind kind) noexcept;
bool is_vectored(CommOpKind kind) noexcept;

using Counts = std::vector<std::size_t>;

/**
 * Normalized descriptor of one communication operation.
 *
 * Buffer usage by kind:
 *   send                     inputs = {t},         peer
 *   recv                     outputs = {t},        peer
 *   bcast                    outputs = {t} (in place), root
 *   all_reduce               inputs = {in}, outputs = {out} (may alias), op
 *   reduce                   inputs = {in}, outputs = {out} at root, root, op
 *   gather / gatherv         inputs = {in}, outputs = {out} at root, root
 *   scatter / scatterv       inputs = {in} at root, outputs = {out}, root
 *   all_gather(v)            inputs = {in}, outputs = {out}
 *   reduce_scatter           inputs = {in}, outputs = {out}, op
 *   all_to_all_single / v    inputs = {in}, outputs = {out}
 *   all_to_all               inputs = p buffers, outputs = p buffers
 *
 * Vectored kinds use rcounts+displs (gatherv, all_gatherv), scounts+displs
 * (scatterv) or all four lists (all_to_allv; displs lives in rdispls there).
 */
struct CommRequest {
  CommOpKind kind = CommOpKind::all_reduce;
  std::vector<Buffer> inputs;
  std::vector<Buffer> outputs;
  std::optional<int> root;
  std::optional<int> peer;
  std::optional<ReduceOp> op;
  std::optional<Counts> scounts;
  std::optional<Counts> rcounts;
  std::optional<Counts> sdispls;
  std::optional<Counts> rdispls;
  std::optional<Counts> displs;
  BackendId backend;
  bool async_op = false;
  std::uint64_t seq = 0;  // assigned at post time

  /// Element type of the request, taken from the first buffer present.
  DType dtype() const noexcept;
};

/// Check a request's shape against the world it will run in. `rank` is the
/// posting rank; rooted kinds check the root-only buffers when rank == root.
/// Throws ValidationError.
void validate(const CommRequest& request, int world_size, int rank = 0);

/// Canonical payload size used for routing and logging: the per-rank input
/// bytes, the summed count list for vectored kinds (rcounts for gatherv and
/// all_gatherv, scounts for scatterv and all_to_allv), and root's input for
/// scatter. Assumes a validated request.
std::size_t message_bytes(const CommRequest& request, int world_size);

}  // namespace mcrdl
