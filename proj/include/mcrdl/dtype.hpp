// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <optional>
#include <span>
#include <string_view>
#include <type_traits>

namespace mcrdl {

enum class DType : std::uint8_t { f32 = 0, f64 = 1, i32 = 2, i64 = 3, u8 = 4 };

enum class ReduceOp : std::uint8_t { sum = 0, prod = 1, min = 2, max = 3 };

constexpr std::size_t size_bytes(DType dtype) noexcept {
  switch (dtype) {
    case DType::f32: return 4;
    case DType::f64: return 8;
    case DType::i32: return 4;
    case DType::i64: return 8;
    case DType::u8: return 1;
  }
  return 0;
}

std::string_view to_string(DType dtype) noexcept;
std::string_view to_string(ReduceOp op) noexcept;
std::optional<DType> parse_dtype(std::string_view name) noexcept;
std::optional<ReduceOp> parse_reduce_op(std::string_view name) noexcept;

template <typename T>
struct dtype_of;
template <> struct dtype_of<float> { static constexpr DType value = DType::f32; };
template <> struct dtype_of<double> { static constexpr DType value = DType::f64; };
template <> struct dtype_of<std::int32_t> { static constexpr DType value = DType::i32; };
template <> struct dtype_of<std::int64_t> { static constexpr DType value = DType::i64; };
template <> struct dtype_of<std::uint8_t> { static constexpr DType value = DType::u8; };

template <typename T>
inline constexpr DType dtype_of_v = dtype_of<T>::value;

/// Combine two scalars. Integer arithmetic wraps modulo 2^bits (two's
/// complement for signed types); floats use native IEEE arithmetic.
template <typename T>
constexpr T element_reduce(T a, T b, ReduceOp op) noexcept {
  switch (op) {
    case ReduceOp::sum:
      if constexpr (std::is_integral_v<T>) {
        using U = std::make_unsigned_t<T>;
        return static_cast<T>(static_cast<U>(static_cast<U>(a) + static_cast<U>(b)));
      } else {
        return a + b;
      }
    case ReduceOp::prod:
      if constexpr (std::is_integral_v<T>) {
        using U = std::make_unsigned_t<T>;
        // Promote so u8 * u8 does not go through signed int.
        using W = std::conditional_t<(sizeof(U) < sizeof(unsigned)), unsigned, U>;
        return static_cast<T>(static_cast<U>(static_cast<W>(static_cast<U>(a)) *
                                             static_cast<W>(static_cast<U>(b))));
      } else {
        return a * b;
      }
    case ReduceOp::min: return b < a ? b : a;
    case ReduceOp::max: return a < b ? b : a;
  }
  return a;
}

/// Identity element: element_reduce(x, reduce_identity<T>(op), op) == x.
template <typename T>
constexpr T reduce_identity(ReduceOp op) noexcept {
  switch (op) {
    case ReduceOp::sum: return T{0};
    case ReduceOp::prod: return T{1};
    case ReduceOp::min:
      if constexpr (std::numeric_limits<T>::has_infinity) return std::numeric_limits<T>::infinity();
      else return std::numeric_limits<T>::max();
    case ReduceOp::max:
      if constexpr (std::numeric_limits<T>::has_infinity) return -std::numeric_limits<T>::infinity();
      else return std::numeric_limits<T>::lowest();
  }
  return T{};
}

/// acc[i] = acc[i] (op) in[i] over raw element bytes. Both spans hold the
/// same number of elements of `dtype`; unaligned storage is fine.
void reduce_into(DType dtype, ReduceOp op, std::span<std::byte> acc,
                 std::span<const std::byte> in) noexcept;

}  // namespace mcrdl
