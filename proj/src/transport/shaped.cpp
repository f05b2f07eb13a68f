// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mcrdl/error.hpp"
#include "mcrdl/transport.hpp"

namespace mcrdl {
namespace {

// Delays payload frames on the sending side. Sends from one lane are
// sequential, so a lane pays alpha + beta*n per message it emits, the usual
// single-port alpha-beta model.
class ShapedTransport final : public Transport {
 public:
  ShapedTransport(std::unique_ptr<Transport> inner, CostShape shape)
      : inner_(std::move(inner)), shape_(shape) {}

  int rank() const noexcept override { return inner_->rank(); }
  int size() const noexcept override { return inner_->size(); }
  const RankAddressBook& book() const noexcept override { return inner_->book(); }

  std::size_t send(int dst, FrameKind kind, std::uint64_t seq,
                   std::span<const std::byte> payload) override {
    if (kind == FrameKind::payload && !shape_.is_identity()) {
      precise_sleep_until(Clock::now() + shape_.cost(payload.size()));
    }
    return inner_->send(dst, kind, seq, payload);
  }

  Frame recv(int src, Deadline deadline) override { return inner_->recv(src, deadline); }
  void close() override { inner_->close(); }
  TransportStats stats() const noexcept override { return inner_->stats(); }

 private:
  std::unique_ptr<Transport> inner_;
  CostShape shape_;
};

}  // namespace

std::unique_ptr<Transport> shaped_wrap(std::unique_ptr<Transport> inner, CostShape shape) {
  if (!(shape.alpha >= 0.0) || !(shape.beta >= 0.0)) {
    throw ValidationError("shape", "alpha and beta must be non-negative");
  }
  return std::make_unique<ShapedTransport>(std::move(inner), shape);
}

}  // namespace mcrdl
