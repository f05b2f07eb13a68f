// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>

#include "mcrdl/transport.hpp"

namespace mcrdl::detail {

/// Owning file descriptor.
class Socket {
 public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(const Socket&) = delete;
  Socket& operator=(const Socket&) = delete;
  Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
  Socket& operator=(Socket&& o) noexcept {
    if (this != &o) {
      reset();
      fd_ = std::exchange(o.fd_, -1);
    }
    return *this;
  }
  ~Socket() { reset(); }

  int fd() const noexcept { return fd_; }
  bool valid() const noexcept { return fd_ >= 0; }
  void reset() noexcept;
  /// Wake any thread blocked on this socket without releasing the fd.
  void shutdown() noexcept;

 private:
  int fd_ = -1;
};

/// Listening socket on host:port (port 0 picks an ephemeral port). Throws
/// Error(address_in_use).
Socket listen_on(const std::string& host, std::uint16_t port, std::uint16_t* bound_port = nullptr);
/// One connection attempt; returns an invalid Socket on refusal.
Socket try_connect(const HostPort& to);
/// Local address the kernel would use to reach `to`.
std::string local_address_towards(const HostPort& to);

/// Throws Error(peer_disconnected) on failure.
void write_frame(const Socket& s, FrameKind kind, std::uint64_t seq,
                 std::span<const std::byte> payload);
/// Reads one frame; false on orderly EOF before the first byte. Throws on
/// malformed frames or mid-frame EOF. With a deadline, throws Error(timeout).
bool read_frame(const Socket& s, Frame& out, Deadline deadline = Deadline::max());

}  // namespace mcrdl::detail
