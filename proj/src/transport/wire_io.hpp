// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "mcrdl/error.hpp"

namespace mcrdl::detail {

inline void store_le64(std::byte* out, std::uint64_t v) noexcept {
  for (int i = 0; i < 8; ++i) out[i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
}

inline std::uint64_t load_le64(const std::byte* in) noexcept {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return v;
}

inline void store_le32(std::byte* out, std::uint32_t v) noexcept {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::byte>((v >> (8 * i)) & 0xff);
}

inline std::uint32_t load_le32(const std::byte* in) noexcept {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[i]) << (8 * i);
  return v;
}

/// Little-endian append-only encoder.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(static_cast<std::byte>(v)); }
  void u32(std::uint32_t v) {
    const auto at = grow(4);
    store_le32(buf_.data() + at, v);
  }
  void u64(std::uint64_t v) {
    const auto at = grow(8);
    store_le64(buf_.data() + at, v);
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    const auto at = grow(s.size());
    if (!s.empty()) std::memcpy(buf_.data() + at, s.data(), s.size());
  }
  std::vector<std::byte> take() { return std::move(buf_); }

 private:
  std::size_t grow(std::size_t n) {
    const auto at = buf_.size();
    buf_.resize(at + n);
    return at;
  }
  std::vector<std::byte> buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

  std::uint8_t u8() { return static_cast<std::uint8_t>(*take(1)); }
  std::uint32_t u32() { return load_le32(take(4)); }
  std::uint64_t u64() { return load_le64(take(8)); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  std::string str() {
    const auto n = u32();
    const auto* p = take(n);
    return std::string(reinterpret_cast<const char*>(p), n);
  }
  bool at_end() const noexcept { return pos_ == in_.size(); }
  void expect_end() const {
    if (!at_end()) throw Error(ErrorKind::serialization, "trailing bytes");
  }

 private:
  const std::byte* take(std::size_t n) {
    if (in_.size() - pos_ < n) throw Error(ErrorKind::serialization, "truncated message");
    const auto* p = in_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::span<const std::byte> in_;
  std::size_t pos_ = 0;
};

}  // namespace mcrdl::detail
