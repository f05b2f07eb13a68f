// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mcrdl/work.hpp"

namespace mcrdl {

// ---------------------------------------------------------------------------
// Wire format
//
//   offset  size  field
//   0       4     magic "MCDL"
//   4       1     version (1)
//   5       1     kind (0 = p2p payload, 1 = collective header, 2 = bootstrap)
//   6       8     seq, little-endian
//   14      8     payload_len, little-endian
//   22      n     payload
// ---------------------------------------------------------------------------

enum class FrameKind : std::uint8_t { payload = 0, header = 1, bootstrap = 2 };

inline constexpr std::size_t kFrameHeaderSize = 22;
inline constexpr std::uint8_t kWireVersion = 1;

struct FrameHeader {
  FrameKind kind = FrameKind::payload;
  std::uint64_t seq = 0;
  std::uint64_t payload_len = 0;
};

std::array<std::byte, kFrameHeaderSize> encode_frame_header(const FrameHeader& header) noexcept;
/// Throws Error(serialization) on bad magic, version or kind.
FrameHeader decode_frame_header(std::span<const std::byte, kFrameHeaderSize> bytes);
/// Full frame as it appears on the wire.
std::vector<std::byte> encode_frame(FrameKind kind, std::uint64_t seq,
                                    std::span<const std::byte> payload);

struct Frame {
  FrameKind kind = FrameKind::payload;
  std::uint64_t seq = 0;
  std::vector<std::byte> payload;
};

// ---------------------------------------------------------------------------
// Addressing
// ---------------------------------------------------------------------------

struct Endpoint {
  int rank = 0;
  std::string address;  // "host:port" for tcp, "inproc://<key>/<rank>" for inproc
  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

struct RankAddressBook {
  int world_size = 0;
  std::vector<Endpoint> endpoints;  // indexed by rank
  friend bool operator==(const RankAddressBook&, const RankAddressBook&) = default;
};

std::vector<std::byte> serialize(const RankAddressBook& book);
RankAddressBook deserialize_book(std::span<const std::byte> bytes);

struct HostPort {
  std::string host;
  std::uint16_t port = 0;
  std::string str() const { return host + ":" + std::to_string(port); }
};
HostPort parse_host_port(const std::string& text);

/// Per-message cost model: alpha + beta * bytes, in seconds.
struct CostShape {
  double alpha = 0.0;
  double beta = 0.0;
  bool is_identity() const noexcept { return alpha == 0.0 && beta == 0.0; }
  std::chrono::nanoseconds cost(std::size_t bytes) const noexcept;
  friend bool operator==(const CostShape&, const CostShape&) = default;
};

struct TransportStats {
  std::uint64_t payload_frames = 0;
  std::uint64_t header_frames = 0;
  std::uint64_t wire_bytes = 0;
};

// ---------------------------------------------------------------------------
// Transport
// ---------------------------------------------------------------------------

/**
 * Ordered point-to-point byte movement between the ranks of one backend.
 *
 * Frames from one source are delivered FIFO. send() never waits for the
 * receiver to post a matching recv: every implementation drains incoming
 * traffic into per-source mailboxes.
 */
class Transport {
 public:
  virtual ~Transport() = default;

  virtual int rank() const noexcept = 0;
  virtual int size() const noexcept = 0;
  virtual const RankAddressBook& book() const noexcept = 0;

  /// Frame and hand `payload` to the channel. Returns the bytes put on the
  /// wire (kFrameHeaderSize + payload.size()).
  virtual std::size_t send(int dst, FrameKind kind, std::uint64_t seq,
                           std::span<const std::byte> payload) = 0;
  /// Next frame from `src`; throws Error(timeout) past the deadline and
  /// Error(peer_disconnected) once the peer is gone and its queue is empty.
  virtual Frame recv(int src, Deadline deadline) = 0;
  /// Idempotent.
  virtual void close() = 0;

  virtual TransportStats stats() const noexcept = 0;
};

std::size_t p2p_send(Transport& transport, int dst, std::span<const std::byte> bytes,
                     std::uint64_t seq = 0);
/// Throws LengthMismatch when the next frame from src is not `expected_len`
/// bytes long.
std::vector<std::byte> p2p_recv(Transport& transport, int src, std::size_t expected_len,
                                Deadline deadline);

/// Shared state for ranks that live as threads of one process.
class InprocWorld {
 public:
  explicit InprocWorld(int world_size);
  int world_size() const noexcept { return world_size_; }

  struct Fabric;
  std::shared_ptr<Fabric> fabric(const std::string& key);

 private:
  int world_size_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<Fabric>> fabrics_;
};

std::unique_ptr<Transport> make_inproc_transport(std::shared_ptr<InprocWorld> world,
                                                 const std::string& key, int rank);

struct TcpOptions {
  HostPort master;
  std::string key;  // distinguishes several backends bootstrapping in turn
  std::chrono::milliseconds bootstrap_timeout{30000};
  int connect_retries = 10;
  std::chrono::milliseconds connect_backoff{100};
};

std::unique_ptr<Transport> make_tcp_transport(int rank, int world_size, const TcpOptions& options);

/// Wrap so each payload frame takes at least shape.cost(len) longer to
/// arrive. Control frames (collective headers, bootstrap) pass unshaped.
std::unique_ptr<Transport> shaped_wrap(std::unique_ptr<Transport> inner, CostShape shape);

/**
 * Rank 0 gathers every rank's endpoint over a listener at `master` and
 * broadcasts the book. Returns an identical book on every rank. world == 1
 * returns {self} with no network activity.
 */
RankAddressBook bootstrap(int rank, int world_size, const HostPort& master,
                          const std::string& my_address, const std::string& key,
                          std::chrono::milliseconds timeout);

/// A currently unused localhost port.
std::uint16_t find_free_port();

/// sleep_until with the calling thread's timer slack minimized.
void precise_sleep_until(Clock::time_point deadline);

}  // namespace mcrdl
