// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <cassert>
#include <cstddef>
#include <cstring>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "mcrdl/dtype.hpp"

namespace mcrdl {

/**
 * Typed contiguous element array; the tensor stand-in every operation acts on.
 *
 * Copies alias the same storage (like a framework tensor handle), so a
 * Buffer captured by a posted request stays alive until the work completes.
 * Use clone() for a deep copy.
 *
 * While a posted operation owns the buffer it is "checked out"; touching the
 * elements through the checked accessors in that window trips an assertion
 * in debug builds.
 */
class Buffer {
 public:
  Buffer() : Buffer(DType::f32, 0) {}
  Buffer(DType dtype, std::size_t count)
      : dtype_(dtype),
        count_(count),
        storage_(std::make_shared<Storage>(count * mcrdl::size_bytes(dtype))) {}

  template <typename T>
  static Buffer from(std::span<const T> values) {
    Buffer b(dtype_of_v<T>, values.size());
    if (!values.empty()) std::memcpy(b.raw(), values.data(), values.size_bytes());
    return b;
  }
  template <typename T>
  static Buffer from(const std::vector<T>& values) {
    return from(std::span<const T>(values));
  }
  template <typename T>
  static Buffer from(std::initializer_list<T> values) {
    return from(std::span<const T>(values.begin(), values.size()));
  }

  DType dtype() const noexcept { return dtype_; }
  std::size_t count() const noexcept { return count_; }
  std::size_t size_bytes() const noexcept { return count_ * mcrdl::size_bytes(dtype_); }

  std::span<std::byte> bytes() {
    assert(!checked_out() && "buffer accessed while an operation owns it");
    return raw_bytes();
  }
  std::span<const std::byte> bytes() const {
    assert(!checked_out() && "buffer accessed while an operation owns it");
    return raw_bytes();
  }

  template <typename T>
  std::span<T> as() {
    check_type<T>();
    auto b = bytes();
    return {reinterpret_cast<T*>(b.data()), count_};
  }
  template <typename T>
  std::span<const T> as() const {
    check_type<T>();
    auto b = bytes();
    return {reinterpret_cast<const T*>(b.data()), count_};
  }
  template <typename T>
  std::vector<T> to_vector() const {
    auto s = as<T>();
    return {s.begin(), s.end()};
  }

  Buffer clone() const {
    Buffer b(dtype_, count_);
    if (count_ != 0) std::memcpy(b.raw(), raw(), size_bytes());
    return b;
  }

  bool shares_storage_with(const Buffer& other) const noexcept {
    return storage_ == other.storage_;
  }

  // Runtime-side access. Not asserted: the runtime is the owner while the
  // buffer is checked out.
  std::span<std::byte> raw_bytes() const noexcept {
    return {raw(), size_bytes()};
  }
  void check_out() const noexcept { storage_->checkouts.fetch_add(1); }
  void check_in() const noexcept { storage_->checkouts.fetch_sub(1); }
  bool checked_out() const noexcept { return storage_->checkouts.load() > 0; }

 private:
  struct Storage {
    explicit Storage(std::size_t n) : data(n) {}
    std::vector<std::byte> data;
    std::atomic<int> checkouts{0};
  };

  template <typename T>
  void check_type() const {
    if (dtype_of_v<T> != dtype_) throw std::logic_error("buffer element type mismatch");
  }
  std::byte* raw() const noexcept { return storage_->data.data(); }

  DType dtype_;
  std::size_t count_;
  std::shared_ptr<Storage> storage_;
};

}  // namespace mcrdl
