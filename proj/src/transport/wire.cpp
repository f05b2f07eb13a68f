// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <sys/prctl.h>

#include <cstring>
#include <thread>

#include "mcrdl/error.hpp"
#include "mcrdl/transport.hpp"
#include "transport/wire_io.hpp"

namespace mcrdl {

namespace {
constexpr std::array<std::byte, 4> kMagic = {std::byte{'M'}, std::byte{'C'}, std::byte{'D'},
                                             std::byte{'L'}};
}  // namespace

std::array<std::byte, kFrameHeaderSize> encode_frame_header(const FrameHeader& header) noexcept {
  std::array<std::byte, kFrameHeaderSize> out{};
  std::memcpy(out.data(), kMagic.data(), kMagic.size());
  out[4] = std::byte{kWireVersion};
  out[5] = static_cast<std::byte>(header.kind);
  detail::store_le64(out.data() + 6, header.seq);
  detail::store_le64(out.data() + 14, header.payload_len);
  return out;
}

FrameHeader decode_frame_header(std::span<const std::byte, kFrameHeaderSize> bytes) {
  if (std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
    throw Error(ErrorKind::serialization, "bad frame magic");
  }
  if (bytes[4] != std::byte{kWireVersion}) {
    throw Error(ErrorKind::serialization,
                "unsupported wire version " + std::to_string(static_cast<int>(bytes[4])));
  }
  const auto kind = static_cast<std::uint8_t>(bytes[5]);
  if (kind > 2) throw Error(ErrorKind::serialization, "bad frame kind " + std::to_string(kind));
  FrameHeader h;
  h.kind = static_cast<FrameKind>(kind);
  h.seq = detail::load_le64(bytes.data() + 6);
  h.payload_len = detail::load_le64(bytes.data() + 14);
  return h;
}

std::vector<std::byte> encode_frame(FrameKind kind, std::uint64_t seq,
                                    std::span<const std::byte> payload) {
  std::vector<std::byte> out(kFrameHeaderSize + payload.size());
  const auto h = encode_frame_header({kind, seq, payload.size()});
  std::memcpy(out.data(), h.data(), h.size());
  if (!payload.empty()) std::memcpy(out.data() + kFrameHeaderSize, payload.data(), payload.size());
  return out;
}

std::vector<std::byte> serialize(const RankAddressBook& book) {
  detail::ByteWriter w;
  w.u32(static_cast<std::uint32_t>(book.world_size));
  for (const auto& ep : book.endpoints) {
    w.u32(static_cast<std::uint32_t>(ep.rank));
    w.str(ep.address);
  }
  return w.take();
}

RankAddressBook deserialize_book(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes);
  RankAddressBook book;
  book.world_size = static_cast<int>(r.u32());
  for (int i = 0; i < book.world_size; ++i) {
    Endpoint ep;
    ep.rank = static_cast<int>(r.u32());
    ep.address = r.str();
    book.endpoints.push_back(std::move(ep));
  }
  r.expect_end();
  return book;
}

HostPort parse_host_port(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size()) {
    throw Error(ErrorKind::parse, "expected host:port, got '" + text + "'");
  }
  HostPort hp;
  hp.host = text.substr(0, colon);
  try {
    const auto port = std::stoul(text.substr(colon + 1));
    if (port > 65535) throw std::out_of_range("port");
    hp.port = static_cast<std::uint16_t>(port);
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::parse, "bad port in '" + text + "'");
  }
  return hp;
}

std::chrono::nanoseconds CostShape::cost(std::size_t bytes) const noexcept {
  const double seconds = alpha + beta * static_cast<double>(bytes);
  return std::chrono::nanoseconds(static_cast<std::int64_t>(seconds * 1e9 + 0.5));
}

std::size_t p2p_send(Transport& transport, int dst, std::span<const std::byte> bytes,
                     std::uint64_t seq) {
  if (dst == transport.rank() || dst < 0 || dst >= transport.size()) {
    throw Error(ErrorKind::invalid_destination, "cannot send to rank " + std::to_string(dst));
  }
  return transport.send(dst, FrameKind::payload, seq, bytes);
}

std::vector<std::byte> p2p_recv(Transport& transport, int src, std::size_t expected_len,
                                Deadline deadline) {
  if (src == transport.rank() || src < 0 || src >= transport.size()) {
    throw Error(ErrorKind::invalid_destination, "cannot receive from rank " + std::to_string(src));
  }
  Frame f = transport.recv(src, deadline);
  if (f.kind != FrameKind::payload) {
    throw Error(ErrorKind::order_mismatch,
                "expected a payload frame from rank " + std::to_string(src));
  }
  if (f.payload.size() != expected_len) {
    throw Error(ErrorKind::length_mismatch, "expected " + std::to_string(expected_len) +
                                                " bytes from rank " + std::to_string(src) +
                                                ", frame carries " +
                                                std::to_string(f.payload.size()));
  }
  return std::move(f.payload);
}

void precise_sleep_until(Clock::time_point deadline) {
  thread_local bool slack_set = false;
  if (!slack_set) {
    prctl(PR_SET_TIMERSLACK, 1UL, 0, 0, 0);
    slack_set = true;
  }
  std::this_thread::sleep_until(deadline);
}

}  // namespace mcrdl
