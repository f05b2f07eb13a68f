// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstring>

#include "mcrdl/error.hpp"
#include "mcrdl/transport.hpp"
#include "transport/mailbox.hpp"

namespace mcrdl {

struct InprocWorld::Fabric {
  explicit Fabric(int world) : world_size(world), boxes(world * world), closed(world) {}

  detail::Mailbox& box(int dst, int src) { return boxes[static_cast<std::size_t>(dst * world_size + src)]; }

  int world_size;
  std::vector<detail::Mailbox> boxes;  // [dst][src]
  std::vector<std::atomic<bool>> closed;
};

InprocWorld::InprocWorld(int world_size) : world_size_(world_size) {
  if (world_size <= 0) throw Error(ErrorKind::invalid_rank, "world size must be positive");
}

std::shared_ptr<InprocWorld::Fabric> InprocWorld::fabric(const std::string& key) {
  std::lock_guard lock(mu_);
  auto& f = fabrics_[key];
  if (!f) f = std::make_shared<Fabric>(world_size_);
  return f;
}

namespace {

class InprocTransport final : public Transport {
 public:
  InprocTransport(std::shared_ptr<InprocWorld::Fabric> fabric, const std::string& key, int rank)
      : fabric_(std::move(fabric)), rank_(rank) {
    book_.world_size = fabric_->world_size;
    for (int r = 0; r < fabric_->world_size; ++r) {
      book_.endpoints.push_back({r, "inproc://" + key + "/" + std::to_string(r)});
    }
  }
  ~InprocTransport() override { close(); }

  int rank() const noexcept override { return rank_; }
  int size() const noexcept override { return fabric_->world_size; }
  const RankAddressBook& book() const noexcept override { return book_; }

  std::size_t send(int dst, FrameKind kind, std::uint64_t seq,
                   std::span<const std::byte> payload) override {
    if (dst < 0 || dst >= size() || dst == rank_) {
      throw Error(ErrorKind::invalid_destination, "cannot send to rank " + std::to_string(dst));
    }
    if (fabric_->closed[static_cast<std::size_t>(dst)].load() ||
        fabric_->closed[static_cast<std::size_t>(rank_)].load()) {
      throw Error(ErrorKind::peer_disconnected, "rank " + std::to_string(dst) + " disconnected");
    }
    Frame f;
    f.kind = kind;
    f.seq = seq;
    f.payload.assign(payload.begin(), payload.end());
    fabric_->box(dst, rank_).push(std::move(f));
    count(kind, payload.size());
    return kFrameHeaderSize + payload.size();
  }

  Frame recv(int src, Deadline deadline) override {
    if (src < 0 || src >= size() || src == rank_) {
      throw Error(ErrorKind::invalid_destination, "cannot receive from rank " + std::to_string(src));
    }
    return fabric_->box(rank_, src).pop(src, deadline);
  }

  void close() override {
    if (closed_.exchange(true)) return;
    fabric_->closed[static_cast<std::size_t>(rank_)].store(true);
    // Wake anyone blocked on traffic from this rank.
    for (int dst = 0; dst < size(); ++dst) {
      if (dst != rank_) fabric_->box(dst, rank_).close();
    }
    // And our own lane, if it is blocked on a peer.
    for (int src = 0; src < size(); ++src) {
      if (src != rank_) fabric_->box(rank_, src).close();
    }
  }

  TransportStats stats() const noexcept override {
    return {payload_frames_.load(), header_frames_.load(), wire_bytes_.load()};
  }

 private:
  void count(FrameKind kind, std::size_t n) noexcept {
    (kind == FrameKind::payload ? payload_frames_ : header_frames_).fetch_add(1);
    wire_bytes_.fetch_add(kFrameHeaderSize + n);
  }

  std::shared_ptr<InprocWorld::Fabric> fabric_;
  int rank_;
  RankAddressBook book_;
  std::atomic<bool> closed_{false};
  std::atomic<std::uint64_t> payload_frames_{0};
  std::atomic<std::uint64_t> header_frames_{0};
  std::atomic<std::uint64_t> wire_bytes_{0};
};

}  // namespace

std::unique_ptr<Transport> make_inproc_transport(std::shared_ptr<InprocWorld> world,
                                                 const std::string& key, int rank) {
  if (!world) throw Error(ErrorKind::unknown_transport, "inproc transport needs thread-mode ranks");
  if (rank < 0 || rank >= world->world_size()) {
    throw Error(ErrorKind::invalid_rank, "rank " + std::to_string(rank) + " outside world");
  }
  return std::make_unique<InprocTransport>(world->fabric(key), key, rank);
}

}  // namespace mcrdl
