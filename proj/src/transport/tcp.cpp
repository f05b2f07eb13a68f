// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <poll.h>
#include <sys/socket.h>

#include <algorithm>
#include <cerrno>
#include <atomic>
#include <map>
#include <mutex>
#include <thread>
#include <vector>

#include "mcrdl/error.hpp"
#include "mcrdl/transport.hpp"
#include "transport/mailbox.hpp"
#include "transport/socket.hpp"
#include "transport/wire_io.hpp"

namespace mcrdl {

using detail::Socket;

namespace {

std::vector<std::byte> hello_payload(const std::string& key, int rank, const std::string& address) {
  detail::ByteWriter w;
  w.str(key);
  w.u32(static_cast<std::uint32_t>(rank));
  w.str(address);
  return w.take();
}

RankAddressBook bootstrap_root(int world, const HostPort& master, const std::string& my_address,
                               const std::string& key, Deadline deadline) {
  Socket listener = detail::listen_on(master.host, master.port);
  std::map<int, std::pair<Socket, std::string>> peers;
  while (static_cast<int>(peers.size()) < world - 1) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) {
      throw Error(ErrorKind::bootstrap_timeout,
                  "bootstrap '" + key + "': " + std::to_string(peers.size() + 1) + " of " +
                      std::to_string(world) + " ranks joined");
    }
    pollfd p{listener.fd(), POLLIN, 0};
    if (::poll(&p, 1, static_cast<int>(std::min<long>(left.count(), 200))) <= 0) continue;
    Socket conn(::accept4(listener.fd(), nullptr, nullptr, SOCK_CLOEXEC));
    if (!conn.valid()) continue;
    try {
      Frame hello;
      const auto hello_deadline = std::min(deadline, Clock::now() + std::chrono::seconds(5));
      if (!detail::read_frame(conn, hello, hello_deadline) || hello.kind != FrameKind::bootstrap) continue;
      detail::ByteReader r(hello.payload);
      const auto peer_key = r.str();
      const auto peer_rank = static_cast<int>(r.u32());
      auto peer_address = r.str();
      if (peer_key != key || peer_rank <= 0 || peer_rank >= world) continue;
      peers[peer_rank] = {std::move(conn), std::move(peer_address)};  // a retry replaces
    } catch (const Error&) {
      continue;
    }
  }
  listener.reset();

  RankAddressBook book;
  book.world_size = world;
  book.endpoints.push_back({0, my_address});
  for (auto& [r, peer] : peers) book.endpoints.push_back({r, peer.second});
  const auto bytes = serialize(book);
  for (auto& [r, peer] : peers) {
    detail::write_frame(peer.first, FrameKind::bootstrap, 0, bytes);
  }
  return book;
}

RankAddressBook bootstrap_peer(int rank, int world, const HostPort& master,
                               const std::string& my_address, const std::string& key,
                               Deadline deadline) {
  const auto hello = hello_payload(key, rank, my_address);
  std::string last_error = "master unreachable";
  while (Clock::now() < deadline) {
    try {
      Socket s = detail::try_connect(master);
      if (s.valid()) {
        detail::write_frame(s, FrameKind::bootstrap, 0, hello);
        Frame reply;
        if (detail::read_frame(s, reply, deadline) && reply.kind == FrameKind::bootstrap) {
          auto book = deserialize_book(reply.payload);
          if (book.world_size == world && static_cast<int>(book.endpoints.size()) == world &&
              book.endpoints[rank].address == my_address) {
            return book;
          }
          last_error = "master returned an inconsistent book";
        }
      }
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::timeout) break;
      last_error = e.what();
    }
    precise_sleep_until(std::min(deadline, Clock::now() + std::chrono::milliseconds(100)));
  }
  throw Error(ErrorKind::bootstrap_timeout, "bootstrap '" + key + "' rank " + std::to_string(rank) +
                                                ": " + last_error);
}

}  // namespace

RankAddressBook bootstrap(int rank, int world_size, const HostPort& master,
                          const std::string& my_address, const std::string& key,
                          std::chrono::milliseconds timeout) {
  if (world_size <= 0 || rank < 0 || rank >= world_size) {
    throw Error(ErrorKind::invalid_rank, "rank " + std::to_string(rank) + " outside world of " +
                                             std::to_string(world_size));
  }
  if (world_size == 1) return {1, {{0, my_address}}};
  const auto deadline = Clock::now() + timeout;
  if (rank == 0) return bootstrap_root(world_size, master, my_address, key, deadline);
  return bootstrap_peer(rank, world_size, master, my_address, key, deadline);
}

std::uint16_t find_free_port() {
  std::uint16_t port = 0;
  detail::listen_on("127.0.0.1", 0, &port);
  return port;
}

namespace {

class TcpTransport final : public Transport {
 public:
  TcpTransport(int rank, int world, const TcpOptions& opts)
      : rank_(rank), world_(world), opts_(opts), boxes_(static_cast<std::size_t>(world)),
        out_(static_cast<std::size_t>(world)) {
    if (rank < 0 || rank >= world) {
      throw Error(ErrorKind::invalid_rank, "rank " + std::to_string(rank) + " outside world");
    }
    std::string address = "self";
    if (world > 1) {
      std::uint16_t port = 0;
      listener_ = detail::listen_on("0.0.0.0", 0, &port);
      address = detail::local_address_towards(opts.master) + ":" + std::to_string(port);
      acceptor_ = std::thread([this] { accept_loop(); });
    }
    try {
      book_ = bootstrap(rank, world, opts.master, address, opts.key, opts.bootstrap_timeout);
    } catch (...) {
      close();
      throw;
    }
  }
  ~TcpTransport() override { close(); }

  int rank() const noexcept override { return rank_; }
  int size() const noexcept override { return world_; }
  const RankAddressBook& book() const noexcept override { return book_; }

  std::size_t send(int dst, FrameKind kind, std::uint64_t seq,
                   std::span<const std::byte> payload) override {
    if (dst < 0 || dst >= world_ || dst == rank_) {
      throw Error(ErrorKind::invalid_destination, "cannot send to rank " + std::to_string(dst));
    }
    auto& link = out_[static_cast<std::size_t>(dst)];
    std::lock_guard lock(link.mu);
    if (closed_.load()) throw Error(ErrorKind::peer_disconnected, "transport closed");
    if (!link.sock.valid()) link.sock = connect_to(dst);
    detail::write_frame(link.sock, kind, seq, payload);
    (kind == FrameKind::payload ? payload_frames_ : header_frames_).fetch_add(1);
    wire_bytes_.fetch_add(kFrameHeaderSize + payload.size());
    return kFrameHeaderSize + payload.size();
  }

  Frame recv(int src, Deadline deadline) override {
    if (src < 0 || src >= world_ || src == rank_) {
      throw Error(ErrorKind::invalid_destination, "cannot receive from rank " + std::to_string(src));
    }
    return boxes_[static_cast<std::size_t>(src)].pop(src, deadline);
  }

  void close() override {
    if (closed_.exchange(true)) return;
    listener_.shutdown();
    if (acceptor_.joinable()) acceptor_.join();
    for (auto& link : out_) {
      std::lock_guard lock(link.mu);
      link.sock.shutdown();
      link.sock.reset();
    }
    std::vector<std::thread> readers;
    {
      std::lock_guard lock(readers_mu_);
      for (auto& s : incoming_) s->shutdown();
      readers.swap(readers_);
    }
    for (auto& t : readers) t.join();
    incoming_.clear();
    listener_.reset();
    for (auto& b : boxes_) b.close();
  }

  TransportStats stats() const noexcept override {
    return {payload_frames_.load(), header_frames_.load(), wire_bytes_.load()};
  }

 private:
  struct Link {
    std::mutex mu;
    Socket sock;
  };

  Socket connect_to(int dst) {
    const auto hp = parse_host_port(book_.endpoints[static_cast<std::size_t>(dst)].address);
    for (int attempt = 0; attempt < opts_.connect_retries; ++attempt) {
      Socket s = detail::try_connect(hp);
      if (s.valid()) {
        detail::ByteWriter w;
        w.u32(static_cast<std::uint32_t>(rank_));
        detail::write_frame(s, FrameKind::bootstrap, 0, w.take());
        return s;
      }
      precise_sleep_until(Clock::now() + opts_.connect_backoff);
    }
    throw Error(ErrorKind::peer_disconnected, "cannot connect to rank " + std::to_string(dst) +
                                                  " at " + hp.str());
  }

  void accept_loop() {
    while (!closed_.load()) {
      Socket conn(::accept4(listener_.fd(), nullptr, nullptr, SOCK_CLOEXEC));
      if (!conn.valid()) {
        if (closed_.load()) return;
        if (errno == EINTR || errno == ECONNABORTED) continue;
        return;
      }
      auto sock = std::make_shared<Socket>(std::move(conn));
      std::lock_guard lock(readers_mu_);
      if (closed_.load()) return;
      incoming_.push_back(sock);
      readers_.emplace_back([this, sock] { read_loop(*sock); });
    }
  }

  void read_loop(const Socket& sock) {
    int src = -1;
    try {
      Frame hello;
      if (!detail::read_frame(sock, hello) || hello.kind != FrameKind::bootstrap) return;
      detail::ByteReader r(hello.payload);
      src = static_cast<int>(r.u32());
      if (src < 0 || src >= world_ || src == rank_) return;
      auto& box = boxes_[static_cast<std::size_t>(src)];
      Frame f;
      while (detail::read_frame(sock, f)) box.push(std::move(f));
    } catch (const Error&) {
    }
    if (src >= 0 && src < world_) boxes_[static_cast<std::size_t>(src)].close();
  }

  int rank_;
  int world_;
  TcpOptions opts_;
  RankAddressBook book_;
  Socket listener_;
  std::thread acceptor_;
  std::vector<detail::Mailbox> boxes_;
  std::vector<Link> out_;
  std::mutex readers_mu_;
  std::vector<std::shared_ptr<Socket>> incoming_;
  std::vector<std::thread> readers_;
  std::atomic<bool> closed_{false};
  std::atomic<std::uint64_t> payload_frames_{0};
  std::atomic<std::uint64_t> header_frames_{0};
  std::atomic<std::uint64_t> wire_bytes_{0};
};

}  // namespace

std::unique_ptr<Transport> make_tcp_transport(int rank, int world_size, const TcpOptions& options) {
  return std::make_unique<TcpTransport>(rank, world_size, options);
}

}  // namespace mcrdl
