// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <condition_variable>
#include <deque>
#include <mutex>
#include <string>

#include "mcrdl/error.hpp"
#include "mcrdl/transport.hpp"

namespace mcrdl::detail {

/// Unbounded FIFO of frames from one source.
class Mailbox {
 public:
  void push(Frame frame) {
    {
      std::lock_guard lock(mu_);
      frames_.push_back(std::move(frame));
    }
    cv_.notify_all();
  }

  /// Marks the source gone. Frames already queued stay deliverable.
  void close() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  Frame pop(int src, Deadline deadline) {
    std::unique_lock lock(mu_);
    auto ready = [&] { return !frames_.empty() || closed_; };
    if (deadline == Deadline::max()) {
      cv_.wait(lock, ready);
    } else if (!cv_.wait_until(lock, deadline, ready)) {
      throw Error(ErrorKind::timeout, "timed out waiting for a frame from rank " + std::to_string(src));
    }
    if (frames_.empty()) {
      throw Error(ErrorKind::peer_disconnected, "rank " + std::to_string(src) + " disconnected");
    }
    Frame f = std::move(frames_.front());
    frames_.pop_front();
    return f;
  }

 private:
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Frame> frames_;
  bool closed_ = false;
};

}  // namespace mcrdl::detail
