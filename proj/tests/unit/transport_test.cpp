// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <thread>

#include "mcrdl/error.hpp"
#include "mcrdl/transport.hpp"

namespace mcrdl {
namespace {

using namespace std::chrono_literals;

std::vector<std::byte> bytes_of(std::initializer_list<int> v) {
  std::vector<std::byte> out;
  for (int x : v) out.push_back(static_cast<std::byte>(x));
  return out;
}

TEST(Wire, FrameHeaderIsBitExact) {
  const auto h = encode_frame_header({FrameKind::header, 0x0102030405060708ULL, 3});
  ASSERT_EQ(h.size(), 22u);
  EXPECT_EQ(static_cast<char>(h[0]), 'M');
  EXPECT_EQ(static_cast<char>(h[3]), 'L');
  EXPECT_EQ(std::to_integer<int>(h[4]), 1);
  EXPECT_EQ(std::to_integer<int>(h[5]), 1);
  EXPECT_EQ(std::to_integer<int>(h[6]), 0x08);  // little-endian seq
  EXPECT_EQ(std::to_integer<int>(h[13]), 0x01);
  EXPECT_EQ(std::to_integer<int>(h[14]), 3);
  const auto back = decode_frame_header(h);
  EXPECT_EQ(back.kind, FrameKind::header);
  EXPECT_EQ(back.seq, 0x0102030405060708ULL);
  EXPECT_EQ(back.payload_len, 3u);

  auto bad = h;
  bad[0] = std::byte{'X'};
  EXPECT_THROW(decode_frame_header(bad), Error);
  auto version = h;
  version[4] = std::byte{2};
  EXPECT_THROW(decode_frame_header(version), Error);
}

TEST(Wire, FullFrameCarriesPayload) {
  const auto payload = bytes_of({9, 8, 7});
  const auto f = encode_frame(FrameKind::payload, 5, payload);
  ASSERT_EQ(f.size(), kFrameHeaderSize + 3);
  EXPECT_EQ(f.back(), std::byte{7});
}

TEST(Wire, AddressBookRoundTrips) {
  RankAddressBook book{2, {{0, "127.0.0.1:5000"}, {1, "127.0.0.1:5001"}}};
  EXPECT_EQ(deserialize_book(serialize(book)), book);
  EXPECT_THROW(deserialize_book(bytes_of({1, 2})), Error);
}

TEST(Wire, HostPortParsing) {
  const auto hp = parse_host_port("10.0.0.1:29500");
  EXPECT_EQ(hp.host, "10.0.0.1");
  EXPECT_EQ(hp.port, 29500);
  EXPECT_THROW(parse_host_port("nohost"), Error);
  EXPECT_THROW(parse_host_port("h:99999"), Error);
}

TEST(CostShape, AlphaPlusBetaBytes) {
  CostShape s{10e-6, 1e-9};
  EXPECT_EQ(s.cost(1000).count(), 11000);
  EXPECT_TRUE(CostShape{}.is_identity());
}

TEST(Inproc, FifoPerSourceAndTimeout) {
  auto world = std::make_shared<InprocWorld>(2);
  auto a = make_inproc_transport(world, "k", 0);
  auto b = make_inproc_transport(world, "k", 1);
  EXPECT_EQ(a->book().world_size, 2);
  a->send(1, FrameKind::payload, 0, bytes_of({1}));
  a->send(1, FrameKind::payload, 0, bytes_of({2, 3}));
  EXPECT_EQ(b->recv(0, Clock::now() + 1s).payload, bytes_of({1}));
  EXPECT_EQ(b->recv(0, Clock::now() + 1s).payload, bytes_of({2, 3}));
  try {
    b->recv(0, Clock::now() + 10ms);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::timeout);
  }
  EXPECT_EQ(a->stats().payload_frames, 2u);
}

TEST(Inproc, ClosedPeerIsReportedOnceDrained) {
  auto world = std::make_shared<InprocWorld>(2);
  auto a = make_inproc_transport(world, "k", 0);
  auto b = make_inproc_transport(world, "k", 1);
  a->send(1, FrameKind::payload, 0, bytes_of({4}));
  a->close();
  EXPECT_EQ(b->recv(0, Clock::now() + 1s).payload, bytes_of({4}));
  try {
    b->recv(0, Clock::now() + 1s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::peer_disconnected);
  }
}

TEST(P2p, LengthMismatchIsDetected) {
  auto world = std::make_shared<InprocWorld>(2);
  auto a = make_inproc_transport(world, "k", 0);
  auto b = make_inproc_transport(world, "k", 1);
  p2p_send(*a, 1, bytes_of({1, 2, 3}));
  try {
    p2p_recv(*b, 0, 2, Clock::now() + 1s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::length_mismatch);
  }
}

TEST(Tcp, BootstrapAndExchange) {
  const HostPort master{"127.0.0.1", find_free_port()};
  constexpr int kWorld = 3;
  std::vector<std::unique_ptr<Transport>> ts(kWorld);
  std::vector<std::thread> threads;
  for (int r = 0; r < kWorld; ++r) {
    threads.emplace_back([&, r] {
      ts[static_cast<std::size_t>(r)] = make_tcp_transport(r, kWorld, {master, "t", 10s});
    });
  }
  for (auto& t : threads) t.join();
  for (int r = 0; r < kWorld; ++r) {
    EXPECT_EQ(ts[static_cast<std::size_t>(r)]->book(), ts[0]->book());
    EXPECT_EQ(ts[static_cast<std::size_t>(r)]->rank(), r);
  }
  ts[2]->send(0, FrameKind::payload, 11, bytes_of({5, 6}));
  ts[1]->send(0, FrameKind::header, 12, bytes_of({}));
  const auto f = ts[0]->recv(2, Clock::now() + 5s);
  EXPECT_EQ(f.seq, 11u);
  EXPECT_EQ(f.payload, bytes_of({5, 6}));
  const auto g = ts[0]->recv(1, Clock::now() + 5s);
  EXPECT_EQ(g.kind, FrameKind::header);
  EXPECT_TRUE(g.payload.empty());
  for (auto& t : ts) t->close();
}

TEST(Tcp, BootstrapTimesOutWithoutPeers) {
  const HostPort master{"127.0.0.1", find_free_port()};
  try {
    make_tcp_transport(0, 2, {master, "lonely", 200ms});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::bootstrap_timeout);
  }
}

TEST(Tcp, WorldOfOneNeedsNoNetwork) {
  auto t = make_tcp_transport(0, 1, {{"127.0.0.1", 1}, "solo", 1s});
  EXPECT_EQ(t->size(), 1);
}

TEST(Shaped, DelaysPayloadNotHeaders) {
  auto world = std::make_shared<InprocWorld>(2);
  auto a = shaped_wrap(make_inproc_transport(world, "k", 0), CostShape{20e-3, 0});
  auto b = make_inproc_transport(world, "k", 1);
  auto t0 = Clock::now();
  a->send(1, FrameKind::header, 1, bytes_of({1}));
  EXPECT_LT(Clock::now() - t0, 10ms);
  t0 = Clock::now();
  a->send(1, FrameKind::payload, 1, bytes_of({1}));
  EXPECT_GE(Clock::now() - t0, 20ms);
  EXPECT_THROW(shaped_wrap(make_inproc_transport(world, "j", 0), CostShape{-1, 0}),
               ValidationError);
}

}  // namespace
}  // namespace mcrdl
