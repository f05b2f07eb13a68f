// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstring>
#include <limits>

#include "mcrdl/error.hpp"
#include "mcrdl/runtime.hpp"

namespace mcrdl {
namespace {

void for_each_buffer(const CommRequest& req, void (Buffer::*fn)() const noexcept) {
  for (const auto& b : req.inputs) (b.*fn)();
  for (const auto& b : req.outputs) (b.*fn)();
}

}  // namespace

BackendInstance::BackendInstance(BackendConfig config, std::unique_ptr<Transport> transport,
                                 std::chrono::milliseconds op_timeout, Hooks hooks)
    : config_(std::move(config)),
      transport_(std::move(transport)),
      op_timeout_(op_timeout),
      hooks_(std::move(hooks)),
      progress_(std::make_shared<detail::LaneProgress>()) {
  if (config_.fusion.enabled()) config_.fusion.check();
  state_ = State::initialized;
  lane_ = std::thread([this] { lane_loop(); });
}

BackendInstance::~BackendInstance() {
  try {
    finalize(op_timeout_);
  } catch (...) {
  }
}

BackendInstance::State BackendInstance::state() const noexcept {
  std::lock_guard lock(mu_);
  return state_;
}

bool BackendInstance::supports(CommOpKind kind) const noexcept {
  return !config_.only || config_.only->count(kind) != 0;
}

WorkHandle BackendInstance::post(CommRequest request) {
  if (!supports(request.kind)) {
    throw Error(ErrorKind::unsupported_operation, "backend '" + id().str() + "' does not implement " +
                                                      std::string(to_string(request.kind)));
  }
  validate(request, size(), rank());
  request.backend = id();

  Task task;
  task.bytes = message_bytes(request, size());
  task.fusable = config_.fusion.enabled() && config_.fusion.eligible.count(request.kind) != 0 &&
                 task.bytes <= config_.fusion.max_bytes;
  task.urgent = !request.async_op;
  const bool async = request.async_op;

  std::shared_ptr<detail::WorkState> state;
  {
    std::lock_guard lock(mu_);
    if (state_ != State::initialized) {
      throw Error(ErrorKind::backend_finalized, "backend '" + id().str() + "' is finalized");
    }
    request.seq = ++seq_;
    if (is_collective(request.kind)) task.coll_seq = ++coll_seq_;
    state = std::make_shared<detail::WorkState>(++next_work_id_, id());
    for_each_buffer(request, &Buffer::check_out);
    task.request = std::move(request);
    task.state = state;
    task.posted_at = Clock::now();
    task.ordinal = progress_->add_posted();
    ++stats_.posted;
    if (async) {
      if (watch_.size() >= 4096) {
        std::erase_if(watch_, [](const auto& w) {
          return w->status() == WorkStatus::complete ||
                 (w->status() == WorkStatus::failed && w->observed());
        });
      }
      watch_.push_back(state);
    }
    queue_.push_back(std::move(task));
  }
  cv_.notify_all();

  WorkHandle handle(state);
  if (!async) handle.wait();
  return handle;
}

CompletionEvent BackendInstance::record_event() const {
  return CompletionEvent(progress_, progress_->posted());
}

std::size_t BackendInstance::pending() const noexcept {
  return static_cast<std::size_t>(progress_->posted() - progress_->completed());
}

BackendStats BackendInstance::stats() const noexcept {
  std::lock_guard lock(mu_);
  BackendStats s = stats_;
  s.completed = progress_->completed();
  return s;
}

void BackendInstance::nudge() {
  {
    std::lock_guard lock(mu_);
    flush_through_ = std::max(flush_through_, progress_->posted());
  }
  cv_.notify_all();
}

bool BackendInstance::drain(const CompletionEvent& event, Deadline deadline) {
  {
    std::lock_guard lock(mu_);
    flush_through_ = std::max(flush_through_, event.target());
  }
  cv_.notify_all();
  return event.wait_until(deadline);
}

std::vector<std::exception_ptr> BackendInstance::take_unobserved_failures() {
  std::lock_guard lock(mu_);
  std::vector<std::exception_ptr> out;
  std::vector<std::shared_ptr<detail::WorkState>> keep;
  for (auto& w : watch_) {
    const auto s = w->status();
    if (s == WorkStatus::failed) {
      if (!w->observed()) out.push_back(w->error());
      w->mark_observed();
    } else if (s != WorkStatus::complete) {
      keep.push_back(std::move(w));
    }
  }
  watch_ = std::move(keep);
  return out;
}

void BackendInstance::finalize(std::chrono::milliseconds timeout) {
  {
    std::lock_guard lock(mu_);
    if (state_ == State::finalized) return;
    state_ = State::finalized;
    flush_through_ = std::numeric_limits<std::uint64_t>::max();
  }
  cv_.notify_all();
  const bool drained = progress_->wait_until(progress_->posted(), Clock::now() + timeout);
  // Closing first unblocks a lane stuck on a silent peer.
  if (!drained) transport_->close();
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
  }
  cv_.notify_all();
  if (lane_.joinable()) lane_.join();
  transport_->close();
  if (!drained) {
    throw Error(ErrorKind::pending_after_timeout,
                "backend '" + id().str() + "' still had work pending after " +
                    std::to_string(timeout.count()) + " ms");
  }
}

bool BackendInstance::same_group(const Task& head, const Task& t) const noexcept {
  return t.fusable && t.request.kind == head.request.kind &&
         t.request.dtype() == head.request.dtype() && t.request.op == head.request.op;
}

void BackendInstance::lane_loop() {
  std::unique_lock lock(mu_);
  while (true) {
    cv_.wait(lock, [&] { return !queue_.empty() || stopping_; });
    if (queue_.empty()) return;

    if (!queue_.front().fusable) {
      Task task = std::move(queue_.front());
      queue_.pop_front();
      lock.unlock();
      execute(task);
      lock.lock();
      continue;
    }

    // Fusion buffer: the head opened it; later matching requests join while
    // they fit.
    const Task& head = queue_.front();
    const std::size_t capacity = config_.fusion.max_bytes;
    std::size_t n = 0;
    std::size_t filled = 0;
    bool blocked = false;
    bool urgent = false;
    for (const auto& t : queue_) {
      if (!same_group(head, t) || filled + t.bytes > capacity) {
        blocked = true;
        break;
      }
      filled += t.bytes;
      urgent = urgent || t.urgent;
      ++n;
    }
    const auto deadline = head.posted_at + config_.fusion.max_wait;
    const bool full = filled == capacity;
    const bool asked = head.ordinal <= flush_through_ || stopping_;
    const bool expired = Clock::now() >= deadline;
    if (!(blocked || full || urgent || asked || expired)) {
      cv_.wait_until(lock, deadline);
      continue;
    }
    const bool on_timer = expired && !(blocked || full || urgent || asked);

    std::vector<Task> group(queue_.begin(), queue_.begin() + static_cast<std::ptrdiff_t>(n));
    lock.unlock();
    if (on_timer && hooks_.on_timer_flush) hooks_.on_timer_flush(*this);
    const std::size_t done = execute_fused(group);
    lock.lock();
    if (on_timer) ++stats_.timeout_flushes;
    for (std::size_t i = 0; i < done; ++i) queue_.pop_front();
  }
}

void BackendInstance::log(const Task& head, Clock::time_point start, std::size_t bytes,
                          std::size_t members, bool compressed) {
  if (hooks_.logger == nullptr) return;
  const auto end = Clock::now();
  LogRecord r;
  r.ts_us = static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::microseconds>(start - hooks_.logger->epoch()).count());
  r.rank = rank();
  r.op = head.request.kind;
  r.backend = id().str();
  r.bytes = bytes;
  r.dur_us = std::max(std::chrono::duration<double, std::micro>(end - start).count(), 1e-3);
  r.seq = head.request.seq;
  r.fused = members > 1;
  r.members = members;
  r.compressed = compressed;
  hooks_.logger->emit(std::move(r));
}

void BackendInstance::execute(Task& task) {
  const auto start = Clock::now();
  task.state->start();
  const auto& req = task.request;
  bool compressed = false;
  try {
    const Deadline deadline = start + op_timeout_;
    if (!is_collective(req.kind)) {
      collectives::Context ctx(*transport_, 0, deadline);
      collectives::run(ctx, config_.policy, req, {});
    } else {
      collectives::Context ctx(*transport_, task.coll_seq, deadline);
      compressed = compressible(config_.codec, req);
      const auto header = collectives::describe(req, rank(), size(), task.coll_seq,
                                                static_cast<std::uint8_t>(compressed ? config_.codec
                                                                                     : Codec::none));
      collectives::Agreement agreement;
      agreement.uniform_blocks = header.uniform_block >= 0;
      if (size() > 1) {
        agreement = collectives::check_agreement(collectives::exchange_headers(ctx, header), rank());
      }
      if (compressed) {
        CompressedRequest wire(req, rank(), size());
        collectives::run(ctx, config_.policy, wire.wire(), agreement);
        wire.finish();
      } else {
        collectives::run(ctx, config_.policy, req, agreement);
      }
    }
    {
      std::lock_guard lock(mu_);
      ++stats_.executions;
    }
    log(task, start, task.bytes, 1, compressed);
    for_each_buffer(req, &Buffer::check_in);
    task.state->complete();
  } catch (...) {
    for_each_buffer(req, &Buffer::check_in);
    task.state->fail(std::current_exception());
  }
  progress_->add_completed(1);
}

std::size_t BackendInstance::execute_fused(std::vector<Task>& group) {
  const auto start = Clock::now();
  for (auto& t : group) t.state->start();
  const auto& head = group.front();
  std::size_t k = group.size();
  try {
    collectives::Context ctx(*transport_, head.coll_seq, start + op_timeout_);
    auto header = collectives::describe(head.request, rank(), size(), head.coll_seq);
    header.global_count = 0;
    for (const auto& t : group) header.fused_counts.push_back(t.request.inputs[0].count());
    if (size() > 1) {
      const auto agreement =
          collectives::check_agreement(collectives::exchange_headers(ctx, header), rank());
      k = std::max<std::size_t>(1, agreement.fused_members);
    }

    const DType dtype = head.request.dtype();
    std::size_t count = 0;
    for (std::size_t i = 0; i < k; ++i) count += group[i].request.inputs[0].count();
    Buffer fused(dtype, count);
    auto bytes = fused.raw_bytes();
    std::size_t at = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const auto in = group[i].request.inputs[0].raw_bytes();
      if (!in.empty()) std::memcpy(bytes.data() + at, in.data(), in.size());
      at += in.size();
    }
    collectives::all_reduce(ctx, config_.policy.get(CommOpKind::all_reduce), dtype,
                            *head.request.op, bytes);
    at = 0;
    std::size_t total_bytes = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const auto out = group[i].request.outputs[0].raw_bytes();
      if (!out.empty()) std::memcpy(out.data(), bytes.data() + at, out.size());
      at += out.size();
      total_bytes += group[i].bytes;
    }
    {
      std::lock_guard lock(mu_);
      ++stats_.executions;
      ++stats_.fused_flushes;
      stats_.fused_members += k;
    }
    log(head, start, total_bytes, k, false);
    for (std::size_t i = 0; i < k; ++i) {
      for_each_buffer(group[i].request, &Buffer::check_in);
      group[i].state->complete();
    }
  } catch (...) {
    const auto error = std::current_exception();
    for (std::size_t i = 0; i < k; ++i) {
      for_each_buffer(group[i].request, &Buffer::check_in);
      group[i].state->fail(error);
    }
  }
  progress_->add_completed(k);
  return k;
}

}  // namespace mcrdl
