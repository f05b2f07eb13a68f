// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>

#include "mcrdl/error.hpp"
#include "mcrdl/dtype.hpp"
#include "mcrdl/request.hpp"

namespace mcrdl {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::validation: return "ValidationError";
    case ErrorKind::invalid_root: return "InvalidRoot";
    case ErrorKind::invalid_destination: return "InvalidDestination";
    case ErrorKind::invalid_rank: return "InvalidRank";
    case ErrorKind::order_mismatch: return "OrderMismatch";
    case ErrorKind::length_mismatch: return "LengthMismatch";
    case ErrorKind::codec_mismatch: return "CodecMismatch";
    case ErrorKind::peer_disconnected: return "PeerDisconnected";
    case ErrorKind::serialization: return "SerializationError";
    case ErrorKind::bootstrap_timeout: return "BootstrapTimeout";
    case ErrorKind::address_in_use: return "AddressInUse";
    case ErrorKind::timeout: return "Timeout";
    case ErrorKind::duplicate_backend: return "DuplicateBackend";
    case ErrorKind::unknown_backend: return "UnknownBackend";
    case ErrorKind::unknown_transport: return "UnknownTransport";
    case ErrorKind::backend_finalized: return "BackendFinalized";
    case ErrorKind::unsupported_operation: return "UnsupportedOperation";
    case ErrorKind::pending_after_timeout: return "PendingAfterTimeout";
    case ErrorKind::parse: return "ParseError";
    case ErrorKind::monotonicity: return "MonotonicityError";
    case ErrorKind::unknown_backend_in_table: return "UnknownBackendInTable";
    case ErrorKind::unroutable_request: return "UnroutableRequest";
    case ErrorKind::empty_samples: return "EmptySamples";
    case ErrorKind::io: return "IoError";
    case ErrorKind::not_initialized: return "NotInitialized";
    case ErrorKind::usage: return "UsageError";
  }
  return "Error";
}

std::string_view to_string(DType dtype) noexcept {
  switch (dtype) {
    case DType::f32: return "f32";
    case DType::f64: return "f64";
    case DType::i32: return "i32";
    case DType::i64: return "i64";
    case DType::u8: return "u8";
  }
  return "?";
}

std::string_view to_string(ReduceOp op) noexcept {
  switch (op) {
    case ReduceOp::sum: return "sum";
    case ReduceOp::prod: return "prod";
    case ReduceOp::min: return "min";
    case ReduceOp::max: return "max";
  }
  return "?";
}

std::optional<DType> parse_dtype(std::string_view name) noexcept {
  for (auto d : {DType::f32, DType::f64, DType::i32, DType::i64, DType::u8}) {
    if (to_string(d) == name) return d;
  }
  return std::nullopt;
}

std::optional<ReduceOp> parse_reduce_op(std::string_view name) noexcept {
  for (auto o : {ReduceOp::sum, ReduceOp::prod, ReduceOp::min, ReduceOp::max}) {
    if (to_string(o) == name) return o;
  }
  return std::nullopt;
}

namespace {

template <typename T>
void reduce_typed(ReduceOp op, std::span<std::byte> acc, std::span<const std::byte> in) noexcept {
  const std::size_t n = acc.size() / sizeof(T);
  for (std::size_t i = 0; i < n; ++i) {
    T a;
    T b;
    std::memcpy(&a, acc.data() + i * sizeof(T), sizeof(T));
    std::memcpy(&b, in.data() + i * sizeof(T), sizeof(T));
    a = element_reduce(a, b, op);
    std::memcpy(acc.data() + i * sizeof(T), &a, sizeof(T));
  }
}

}  // namespace

void reduce_into(DType dtype, ReduceOp op, std::span<std::byte> acc,
                 std::span<const std::byte> in) noexcept {
  switch (dtype) {
    case DType::f32: reduce_typed<float>(op, acc, in); break;
    case DType::f64: reduce_typed<double>(op, acc, in); break;
    case DType::i32: reduce_typed<std::int32_t>(op, acc, in); break;
    case DType::i64: reduce_typed<std::int64_t>(op, acc, in); break;
    case DType::u8: reduce_typed<std::uint8_t>(op, acc, in); break;
  }
}

BackendId::BackendId(std::string name) : name_(std::move(name)) {
  if (!is_valid_name(name_)) {
    throw ValidationError("backend", "'" + name_ + "' is not a valid backend name");
  }
}

bool BackendId::is_valid_name(std::string_view name) noexcept {
  if (name.empty() || name.front() < 'a' || name.front() > 'z') return false;
  return std::all_of(name.begin(), name.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '-';
  });
}

std::string_view to_string(CommOpKind kind) noexcept {
  switch (kind) {
    case CommOpKind::send: return "send";
    case CommOpKind::recv: return "recv";
    case CommOpKind::bcast: return "bcast";
    case CommOpKind::reduce: return "reduce";
    case CommOpKind::all_reduce: return "all_reduce";
    case CommOpKind::gather: return "gather";
    case CommOpKind::gatherv: return "gatherv";
    case CommOpKind::scatter: return "scatter";
    case CommOpKind::scatterv: return "scatterv";
    case CommOpKind::all_gather: return "all_gather";
    case CommOpKind::all_gatherv: return "all_gatherv";
    case CommOpKind::reduce_scatter: return "reduce_scatter";
    case CommOpKind::all_to_all_single: return "all_to_all_single";
    case CommOpKind::all_to_all: return "all_to_all";
    case CommOpKind::all_to_allv: return "all_to_allv";
  }
  return "?";
}

std::optional<CommOpKind> parse_op_kind(std::string_view name) noexcept {
  for (auto k : kAllOpKinds) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

bool is_collective(CommOpKind kind) noexcept {
  return kind != CommOpKind::send && kind != CommOpKind::recv;
}

bool is_rooted(CommOpKind kind) noexcept {
  switch (kind) {
    case CommOpKind::bcast:
    case CommOpKind::reduce:
    case CommOpKind::gather:
    case CommOpKind::gatherv:
    case CommOpKind::scatter:
    case CommOpKind::scatterv:
      return true;
    default:
      return false;
  }
}

bool is_reduction(CommOpKind kind) noexcept {
  return kind == CommOpKind::reduce || kind == CommOpKind::all_reduce ||
         kind == CommOpKind::reduce_scatter;
}

bool is_vectored(CommOpKind kind) noexcept {
  return kind == CommOpKind::gatherv || kind == CommOpKind::scatterv ||
         kind == CommOpKind::all_gatherv || kind == CommOpKind::all_to_allv;
}

std::size_t message_bytes(const CommRequest& req, int world_size) {
  const auto esz = size_bytes(req.dtype());
  auto sum = [&](const std::optional<Counts>& c) {
    return c ? std::accumulate(c->begin(), c->end(), std::size_t{0}) * esz : std::size_t{0};
  };
  switch (req.kind) {
    case CommOpKind::recv:
    case CommOpKind::bcast:
      return req.outputs.empty() ? 0 : req.outputs[0].size_bytes();
    case CommOpKind::scatter:
      return req.outputs.empty() ? 0
                                 : req.outputs[0].size_bytes() * static_cast<std::size_t>(world_size);
    case CommOpKind::gatherv:
    case CommOpKind::all_gatherv:
      return sum(req.rcounts);
    case CommOpKind::scatterv:
    case CommOpKind::all_to_allv:
      return sum(req.scounts);
    default: {
      std::size_t total = 0;
      for (const auto& b : req.inputs) total += b.size_bytes();
      return total;
    }
  }
}

DType CommRequest::dtype() const noexcept {
  if (!inputs.empty()) return inputs.front().dtype();
  if (!outputs.empty()) return outputs.front().dtype();
  return DType::f32;
}

}  // namespace mcrdl
