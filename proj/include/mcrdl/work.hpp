// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <exception>
#include <memory>
#include <mutex>

#include "mcrdl/request.hpp"

namespace mcrdl {

using Clock = std::chrono::steady_clock;
using Deadline = Clock::time_point;

enum class WorkStatus : std::uint8_t { posted = 0, in_progress = 1, complete = 2, failed = 3 };

std::string_view to_string(WorkStatus status) noexcept;

namespace detail {

/// Shared completion state behind a WorkHandle. Written by one progress lane,
/// read from any thread.
class WorkState {
 public:
  WorkState(std::uint64_t id, BackendId backend) : id_(id), backend_(std::move(backend)) {}

  std::uint64_t id() const noexcept { return id_; }
  const BackendId& backend() const noexcept { return backend_; }
  WorkStatus status() const noexcept { return status_.load(std::memory_order_acquire); }

  void start() noexcept;
  void complete() noexcept;
  void fail(std::exception_ptr error) noexcept;

  void wait() const;
  bool wait_until(Deadline deadline) const;
  std::exception_ptr error() const;
  /// Set once a caller has seen the failure through wait().
  void mark_observed() const noexcept { observed_.store(true); }
  bool observed() const noexcept { return observed_.load(); }

 private:
  bool advance(WorkStatus next) noexcept;

  std::uint64_t id_;
  BackendId backend_;
  std::atomic<WorkStatus> status_{WorkStatus::posted};
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
  std::exception_ptr error_;
  mutable std::atomic<bool> observed_{false};
};

/// Posted/completed counters of one progress lane.
class LaneProgress {
 public:
  std::uint64_t posted() const noexcept { return posted_.load(std::memory_order_acquire); }
  std::uint64_t completed() const noexcept { return completed_.load(std::memory_order_acquire); }

  std::uint64_t add_posted() noexcept { return posted_.fetch_add(1) + 1; }
  void add_completed(std::uint64_t n = 1) noexcept;
  bool wait_until(std::uint64_t target, Deadline deadline) const;

 private:
  std::atomic<std::uint64_t> posted_{0};
  std::atomic<std::uint64_t> completed_{0};
  mutable std::mutex mu_;
  mutable std::condition_variable cv_;
};

}  // namespace detail

/// Completion token for a posted operation.
class WorkHandle {
 public:
  WorkHandle() = default;
  explicit WorkHandle(std::shared_ptr<detail::WorkState> state) : state_(std::move(state)) {}

  bool valid() const noexcept { return state_ != nullptr; }
  std::uint64_t id() const noexcept { return state_->id(); }
  const BackendId& backend() const noexcept { return state_->backend(); }
  WorkStatus status() const noexcept { return state_->status(); }

  /// Block until the operation finishes; rethrows its error if it failed.
  /// Output buffers are visible to the caller once this returns.
  void wait() const;
  /// Non-blocking: true once the operation completed or failed.
  bool test() const noexcept;

 private:
  std::shared_ptr<detail::WorkState> state_;
};

/// Marker recorded on a lane: satisfied once every operation posted to that
/// lane before the record point has finished. Never reverts.
class CompletionEvent {
 public:
  CompletionEvent(std::shared_ptr<const detail::LaneProgress> lane, std::uint64_t target)
      : lane_(std::move(lane)), target_(target) {}

  std::uint64_t target() const noexcept { return target_; }
  bool satisfied() const noexcept { return lane_->completed() >= target_; }
  void wait() const { lane_->wait_until(target_, Deadline::max()); }
  bool wait_until(Deadline deadline) const { return lane_->wait_until(target_, deadline); }

 private:
  std::shared_ptr<const detail::LaneProgress> lane_;
  std::uint64_t target_;
};

}  // namespace mcrdl
