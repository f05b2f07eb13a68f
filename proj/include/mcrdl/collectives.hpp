// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mcrdl/request.hpp"
#include "mcrdl/transport.hpp"

namespace mcrdl {

enum class Algorithm : std::uint8_t {
  linear,
  ring,
  recursive_doubling,
  naive,
  binomial_tree,
  bruck,
  pairwise_exchange,
};

std::string_view to_string(Algorithm algo) noexcept;
std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept;
/// Algorithms implemented for `kind`; the first is the default.
std::span<const Algorithm> algorithms_for(CommOpKind kind) noexcept;

/// One algorithm per operation kind.
class AlgorithmPolicy {
 public:
  AlgorithmPolicy();

  Algorithm get(CommOpKind kind) const noexcept {
    return algos_[static_cast<std::size_t>(kind)];
  }
  /// Throws ValidationError if `algo` is not implemented for `kind`.
  AlgorithmPolicy& set(CommOpKind kind, Algorithm algo);

  friend bool operator==(const AlgorithmPolicy&, const AlgorithmPolicy&) = default;

 private:
  std::array<Algorithm, kNumOpKinds> algos_{};
};

namespace collectives {

/// Execution context of one operation on its backend's lane.
class Context {
 public:
  Context(Transport& transport, std::uint64_t seq, Deadline deadline)
      : transport_(transport), seq_(seq), deadline_(deadline) {}

  int rank() const noexcept { return transport_.rank(); }
  int size() const noexcept { return transport_.size(); }
  std::uint64_t seq() const noexcept { return seq_; }
  Deadline deadline() const noexcept { return deadline_; }
  Transport& transport() noexcept { return transport_; }

  void send(int dst, std::span<const std::byte> bytes);
  /// Fills `out` from the next payload frame of `src`. Throws OrderMismatch
  /// on a frame from another operation and LengthMismatch on a size change.
  void recv(int src, std::span<std::byte> out);

 private:
  Transport& transport_;
  std::uint64_t seq_;
  Deadline deadline_;
};

/// Exchanged with every peer before any payload moves, so that ranks which
/// posted different operations at the same position fail with OrderMismatch
/// instead of deadlocking or corrupting each other's buffers.
struct CollectiveHeader {
  std::uint64_t coll_seq = 0;
  CommOpKind kind = CommOpKind::all_reduce;
  DType dtype = DType::f32;
  std::uint8_t op = 0xff;  // ReduceOp or 0xff
  std::int32_t root = -1;
  std::uint8_t codec = 0;
  std::uint64_t global_count = 0;   // must match on every rank
  std::int64_t uniform_block = -1;  // all_to_all: common block count, or -1
  std::vector<std::uint64_t> send_counts;  // elements this rank sends to each rank
  std::vector<std::uint64_t> recv_counts;  // elements this rank expects from each rank
  std::vector<std::uint64_t> fused_counts; // member counts of a fused all_reduce

  friend bool operator==(const CollectiveHeader&, const CollectiveHeader&) = default;
};

std::vector<std::byte> encode(const CollectiveHeader& header);
CollectiveHeader decode_header(std::span<const std::byte> bytes);

/// Header describing `request` as posted by `rank`.
CollectiveHeader describe(const CommRequest& request, int rank, int world,
                          std::uint64_t coll_seq, std::uint8_t codec = 0);

/// What all ranks agreed on after the exchange.
struct Agreement {
  bool uniform_blocks = false;  // all_to_all list: Bruck is usable
  std::size_t fused_members = 0;
};

/// Send `mine` to every peer and collect theirs (index = rank). Always
/// receives from every peer before returning, even on a mismatch.
std::vector<CollectiveHeader> exchange_headers(Context& ctx, const CollectiveHeader& mine);
/// Throws OrderMismatch (or CodecMismatch when only the codec differs).
Agreement check_agreement(const std::vector<CollectiveHeader>& headers, int rank);

// Byte-level algorithms. Segment lists are indexed by rank.
void all_reduce(Context& ctx, Algorithm algo, DType dtype, ReduceOp op, std::span<std::byte> data);
void reduce(Context& ctx, Algorithm algo, DType dtype, ReduceOp op, int root,
            std::span<std::byte> data);
void bcast(Context& ctx, Algorithm algo, int root, std::span<std::byte> data);
void all_gather(Context& ctx, Algorithm algo, std::span<const std::byte> input,
                std::span<const std::span<std::byte>> out);
void gather(Context& ctx, Algorithm algo, int root, std::span<const std::byte> input,
            std::span<const std::span<std::byte>> out);
void scatter(Context& ctx, Algorithm algo, int root, std::span<const std::span<const std::byte>> in,
             std::span<std::byte> output);
void reduce_scatter(Context& ctx, Algorithm algo, DType dtype, ReduceOp op,
                    std::span<const std::byte> input, std::span<std::byte> output);
void all_to_all(Context& ctx, Algorithm algo, std::span<const std::span<const std::byte>> send,
                std::span<const std::span<std::byte>> recv, bool uniform);

/// Run a validated collective (or send/recv) after the header exchange.
void run(Context& ctx, const AlgorithmPolicy& policy, const CommRequest& request,
         const Agreement& agreement);

}  // namespace collectives
}  // namespace mcrdl
