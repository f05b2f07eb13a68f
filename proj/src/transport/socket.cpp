// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "transport/socket.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <sys/uio.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "mcrdl/error.hpp"

namespace mcrdl::detail {

void Socket::reset() noexcept {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void Socket::shutdown() noexcept {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

namespace {

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (host.empty() || host == "0.0.0.0" || host == "*") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    return addr;
  }
  if (inet_pton(AF_INET, host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (getaddrinfo(host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
    throw Error(ErrorKind::parse, "cannot resolve host '" + host + "'");
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  freeaddrinfo(res);
  return addr;
}

[[noreturn]] void sys_fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what + ": " + std::strerror(errno));
}

// Waits for readability. Returns false on deadline.
bool wait_readable(int fd, Deadline deadline) {
  if (deadline == Deadline::max()) return true;
  while (true) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() < 0) return false;
    pollfd p{fd, POLLIN, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(left.count()) + 1);
    if (rc > 0) return true;
    if (rc < 0 && errno != EINTR) return true;  // let read() report it
  }
}

// false on EOF before any byte was read.
bool read_exact(int fd, std::byte* out, std::size_t n, Deadline deadline, bool* partial) {
  std::size_t got = 0;
  while (got < n) {
    if (!wait_readable(fd, deadline)) throw Error(ErrorKind::timeout, "socket read timed out");
    const ssize_t rc = ::recv(fd, out + got, n - got, 0);
    if (rc == 0) {
      *partial = got > 0;
      return false;
    }
    if (rc < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      *partial = got > 0;
      return false;
    }
    got += static_cast<std::size_t>(rc);
  }
  return true;
}

}  // namespace

Socket listen_on(const std::string& host, std::uint16_t port, std::uint16_t* bound_port) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) sys_fail(ErrorKind::io, "socket");
  int one = 1;
  ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  auto addr = resolve(host, port);
  if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    if (errno == EADDRINUSE) sys_fail(ErrorKind::address_in_use, "bind " + host + ":" + std::to_string(port));
    sys_fail(ErrorKind::io, "bind");
  }
  if (::listen(s.fd(), 128) != 0) sys_fail(ErrorKind::io, "listen");
  if (bound_port != nullptr) {
    sockaddr_in actual{};
    socklen_t len = sizeof(actual);
    ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&actual), &len);
    *bound_port = ntohs(actual.sin_port);
  }
  return s;
}

Socket try_connect(const HostPort& to) {
  Socket s(::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0));
  if (!s.valid()) sys_fail(ErrorKind::io, "socket");
  auto addr = resolve(to.host, to.port);
  if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) return Socket{};
  int one = 1;
  ::setsockopt(s.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
  return s;
}

std::string local_address_towards(const HostPort& to) {
  Socket s(::socket(AF_INET, SOCK_DGRAM | SOCK_CLOEXEC, 0));
  auto addr = resolve(to.host, to.port);
  if (!s.valid() || ::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    return "127.0.0.1";
  }
  sockaddr_in local{};
  socklen_t len = sizeof(local);
  ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&local), &len);
  char buf[INET_ADDRSTRLEN] = {};
  inet_ntop(AF_INET, &local.sin_addr, buf, sizeof(buf));
  return buf;
}

void write_frame(const Socket& s, FrameKind kind, std::uint64_t seq,
                 std::span<const std::byte> payload) {
  auto header = encode_frame_header({kind, seq, payload.size()});
  iovec iov[2];
  iov[0].iov_base = header.data();
  iov[0].iov_len = header.size();
  iov[1].iov_base = const_cast<std::byte*>(payload.data());
  iov[1].iov_len = payload.size();
  std::size_t total = header.size() + payload.size();
  std::size_t sent = 0;
  while (sent < total) {
    msghdr msg{};
    iovec rest[2];
    int n = 0;
    std::size_t skip = sent;
    for (auto& v : iov) {
      if (skip >= v.iov_len) {
        skip -= v.iov_len;
        continue;
      }
      rest[n].iov_base = static_cast<char*>(v.iov_base) + skip;
      rest[n].iov_len = v.iov_len - skip;
      skip = 0;
      ++n;
    }
    msg.msg_iov = rest;
    msg.msg_iovlen = static_cast<std::size_t>(n);
    const ssize_t rc = ::sendmsg(s.fd(), &msg, MSG_NOSIGNAL);
    if (rc < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      sys_fail(ErrorKind::peer_disconnected, "send");
    }
    sent += static_cast<std::size_t>(rc);
  }
}

bool read_frame(const Socket& s, Frame& out, Deadline deadline) {
  std::array<std::byte, kFrameHeaderSize> raw{};
  bool partial = false;
  if (!read_exact(s.fd(), raw.data(), raw.size(), deadline, &partial)) {
    if (partial) throw Error(ErrorKind::peer_disconnected, "connection closed mid-frame");
    return false;
  }
  const auto h = decode_frame_header(raw);
  out.kind = h.kind;
  out.seq = h.seq;
  out.payload.resize(h.payload_len);
  if (h.payload_len != 0 &&
      !read_exact(s.fd(), out.payload.data(), out.payload.size(), deadline, &partial)) {
    throw Error(ErrorKind::peer_disconnected, "connection closed mid-frame");
  }
  return true;
}

}  // namespace mcrdl::detail
