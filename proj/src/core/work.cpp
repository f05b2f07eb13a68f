// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mcrdl/work.hpp"

namespace mcrdl {

std::string_view to_string(WorkStatus status) noexcept {
  switch (status) {
    case WorkStatus::posted: return "posted";
    case WorkStatus::in_progress: return "in_progress";
    case WorkStatus::complete: return "complete";
    case WorkStatus::failed: return "failed";
  }
  return "?";
}

namespace detail {

// Forward-only: posted -> in_progress -> complete|failed. Terminal states
// are sticky.
bool WorkState::advance(WorkStatus next) noexcept {
  auto cur = status_.load(std::memory_order_acquire);
  while (true) {
    if (cur == WorkStatus::complete || cur == WorkStatus::failed) return false;
    if (static_cast<int>(next) <= static_cast<int>(cur)) return false;
    if (status_.compare_exchange_weak(cur, next, std::memory_order_acq_rel)) return true;
  }
}

void WorkState::start() noexcept { advance(WorkStatus::in_progress); }

void WorkState::complete() noexcept {
  std::lock_guard lock(mu_);
  if (advance(WorkStatus::complete)) cv_.notify_all();
}

void WorkState::fail(std::exception_ptr error) noexcept {
  std::lock_guard lock(mu_);
  const auto cur = status_.load(std::memory_order_acquire);
  if (cur == WorkStatus::complete || cur == WorkStatus::failed) return;
  error_ = std::move(error);
  status_.store(WorkStatus::failed, std::memory_order_release);
  cv_.notify_all();
}

void WorkState::wait() const { wait_until(Deadline::max()); }

bool WorkState::wait_until(Deadline deadline) const {
  std::unique_lock lock(mu_);
  auto done = [&] {
    const auto s = status_.load(std::memory_order_acquire);
    return s == WorkStatus::complete || s == WorkStatus::failed;
  };
  if (deadline == Deadline::max()) {
    cv_.wait(lock, done);
    return true;
  }
  return cv_.wait_until(lock, deadline, done);
}

std::exception_ptr WorkState::error() const {
  std::lock_guard lock(mu_);
  return error_;
}

void LaneProgress::add_completed(std::uint64_t n) noexcept {
  std::lock_guard lock(mu_);
  completed_.fetch_add(n, std::memory_order_acq_rel);
  cv_.notify_all();
}

bool LaneProgress::wait_until(std::uint64_t target, Deadline deadline) const {
  std::unique_lock lock(mu_);
  auto done = [&] { return completed_.load(std::memory_order_acquire) >= target; };
  if (deadline == Deadline::max()) {
    cv_.wait(lock, done);
    return true;
  }
  return cv_.wait_until(lock, deadline, done);
}

}  // namespace detail

void WorkHandle::wait() const {
  state_->wait();
  if (state_->status() == WorkStatus::failed) {
    state_->mark_observed();
    std::rethrow_exception(state_->error());
  }
}

bool WorkHandle::test() const noexcept {
  const auto s = state_->status();
  return s == WorkStatus::complete || s == WorkStatus::failed;
}

}  // namespace mcrdl
