// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <bit>
#include <cstring>
#include <numeric>

#include "mcrdl/error.hpp"
#include "mcrdl/middleware.hpp"
#include "transport/wire_io.hpp"

namespace mcrdl {

void FusionConfig::check() const {
  if (max_bytes == 0) throw ValidationError("fusion_bytes", "must be positive");
  if (max_wait.count() <= 0) throw ValidationError("fusion_wait", "must be positive");
}

std::string_view to_string(Codec codec) noexcept {
  switch (codec) {
    case Codec::none: return "none";
    case Codec::trunc16: return "trunc16";
  }
  return "?";
}

std::optional<Codec> parse_codec(std::string_view name) noexcept {
  if (name == "none") return Codec::none;
  if (name == "trunc16") return Codec::trunc16;
  return std::nullopt;
}

namespace trunc16 {

std::uint16_t compress(float x) noexcept {
  auto bits = std::bit_cast<std::uint32_t>(x);
  auto top = static_cast<std::uint16_t>(bits >> 16);
  // A NaN whose payload sits in the dropped bits would turn into infinity.
  if ((bits & 0x7f800000u) == 0x7f800000u && (bits & 0x007fffffu) != 0) top |= 0x0040;
  return top;
}

float expand(std::uint16_t bits) noexcept {
  return std::bit_cast<float>(static_cast<std::uint32_t>(bits) << 16);
}

std::size_t encoded_size(std::size_t count) noexcept {
  return count == 0 ? 0 : kHeaderBytes + 2 * count;
}

void encode(std::span<const std::byte> floats, std::span<std::byte> out) {
  const std::size_t n = floats.size() / 4;
  if (n == 0) return;
  out[0] = std::byte{static_cast<std::uint8_t>(Codec::trunc16)};
  out[1] = out[2] = out[3] = std::byte{0};
  detail::store_le32(out.data() + 4, static_cast<std::uint32_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    float x;
    std::memcpy(&x, floats.data() + 4 * i, 4);
    const auto h = compress(x);
    out[kHeaderBytes + 2 * i] = static_cast<std::byte>(h & 0xff);
    out[kHeaderBytes + 2 * i + 1] = static_cast<std::byte>(h >> 8);
  }
}

void decode(std::span<const std::byte> encoded, std::span<std::byte> floats) {
  const std::size_t n = floats.size() / 4;
  if (n == 0) return;
  if (encoded.size() < kHeaderBytes ||
      encoded[0] != std::byte{static_cast<std::uint8_t>(Codec::trunc16)}) {
    throw Error(ErrorKind::codec_mismatch, "segment is not trunc16-encoded");
  }
  const auto recorded = detail::load_le32(encoded.data() + 4);
  if (recorded != n || encoded.size() != encoded_size(n)) {
    throw Error(ErrorKind::length_mismatch, "trunc16 segment records " + std::to_string(recorded) +
                                                " values, expected " + std::to_string(n));
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto lo = static_cast<std::uint16_t>(encoded[kHeaderBytes + 2 * i]);
    const auto hi = static_cast<std::uint16_t>(encoded[kHeaderBytes + 2 * i + 1]);
    const float x = expand(static_cast<std::uint16_t>(lo | (hi << 8)));
    std::memcpy(floats.data() + 4 * i, &x, 4);
  }
}

}  // namespace trunc16

bool compressible(Codec codec, const CommRequest& req) noexcept {
  if (codec != Codec::trunc16 || req.dtype() != DType::f32) return false;
  switch (req.kind) {
    case CommOpKind::bcast:
    case CommOpKind::gather:
    case CommOpKind::gatherv:
    case CommOpKind::scatter:
    case CommOpKind::scatterv:
    case CommOpKind::all_gather:
    case CommOpKind::all_gatherv:
    case CommOpKind::all_to_all_single:
    case CommOpKind::all_to_all:
    case CommOpKind::all_to_allv:
      return true;
    default:
      return false;
  }
}

namespace {

Counts uniform_counts(std::size_t n, int p) { return Counts(static_cast<std::size_t>(p), n); }

Counts packed_displs(const Counts& counts) {
  Counts d(counts.size());
  std::size_t at = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    d[i] = at;
    at += counts[i];
  }
  return d;
}

Counts encoded_counts(const Counts& counts) {
  Counts out;
  for (auto c : counts) out.push_back(trunc16::encoded_size(c));
  return out;
}

std::size_t total(const Counts& c) { return std::accumulate(c.begin(), c.end(), std::size_t{0}); }

// Encode segments (counts/displs in floats) of `src` into a packed u8 buffer.
Buffer encode_segments(const Buffer& src, const Counts& counts, const Counts& displs) {
  const auto enc = encoded_counts(counts);
  const auto at = packed_displs(enc);
  Buffer out(DType::u8, total(enc));
  for (std::size_t i = 0; i < counts.size(); ++i) {
    trunc16::encode(src.raw_bytes().subspan(displs[i] * 4, counts[i] * 4),
                    out.raw_bytes().subspan(at[i], enc[i]));
  }
  return out;
}

}  // namespace

CompressedRequest::CompressedRequest(const CommRequest& original, int rank, int world)
    : original_(original) {
  const int p = world;
  const bool root = original.root && *original.root == rank;
  wire_.kind = original.kind;
  wire_.root = original.root;
  wire_.backend = original.backend;
  wire_.async_op = original.async_op;
  wire_.seq = original.seq;

  // Output segments of `target` (in floats) land packed in `wire`.
  auto expect = [&](const Buffer& target, const Counts& counts, const Counts& displs) {
    const auto enc = encoded_counts(counts);
    const auto at = packed_displs(enc);
    Buffer wire(DType::u8, total(enc));
    for (std::size_t i = 0; i < counts.size(); ++i) {
      if (counts[i] != 0) decode_.push_back({target, displs[i] * 4, counts[i], wire, at[i]});
    }
    return wire;
  };
  auto whole = [](const Buffer& b) { return Counts{b.count()}; };
  const Counts zero{0};

  switch (original.kind) {
    case CommOpKind::bcast: {
      const auto& buf = original.outputs[0];
      if (root) {
        wire_.outputs.push_back(encode_segments(buf, whole(buf), zero));
      } else {
        wire_.outputs.push_back(expect(buf, whole(buf), zero));
      }
      break;
    }
    case CommOpKind::gather:
    case CommOpKind::all_gather: {
      const auto& in = original.inputs[0];
      const auto n = in.count();
      wire_.inputs.push_back(encode_segments(in, whole(in), zero));
      if (!original.outputs.empty()) {
        const auto counts = uniform_counts(n, p);
        wire_.outputs.push_back(expect(original.outputs[0], counts, packed_displs(counts)));
      }
      break;
    }
    case CommOpKind::gatherv:
    case CommOpKind::all_gatherv: {
      const auto& in = original.inputs[0];
      wire_.inputs.push_back(encode_segments(in, whole(in), zero));
      wire_.rcounts = encoded_counts(*original.rcounts);
      wire_.displs = packed_displs(*wire_.rcounts);
      if (!original.outputs.empty()) {
        wire_.outputs.push_back(expect(original.outputs[0], *original.rcounts, *original.displs));
      }
      break;
    }
    case CommOpKind::scatter: {
      const auto& out = original.outputs[0];
      const auto counts = uniform_counts(out.count(), p);
      if (!original.inputs.empty()) {
        wire_.inputs.push_back(encode_segments(original.inputs[0], counts, packed_displs(counts)));
      }
      wire_.outputs.push_back(expect(out, whole(out), zero));
      break;
    }
    case CommOpKind::scatterv: {
      const auto& out = original.outputs[0];
      wire_.scounts = encoded_counts(*original.scounts);
      wire_.displs = packed_displs(*wire_.scounts);
      if (!original.inputs.empty()) {
        wire_.inputs.push_back(
            encode_segments(original.inputs[0], *original.scounts, *original.displs));
      }
      wire_.outputs.push_back(expect(out, whole(out), zero));
      break;
    }
    case CommOpKind::all_to_all_single: {
      const auto counts = uniform_counts(original.inputs[0].count() / static_cast<std::size_t>(p), p);
      const auto displs = packed_displs(counts);
      wire_.inputs.push_back(encode_segments(original.inputs[0], counts, displs));
      wire_.outputs.push_back(expect(original.outputs[0], counts, displs));
      break;
    }
    case CommOpKind::all_to_all:
      for (std::size_t j = 0; j < original.inputs.size(); ++j) {
        wire_.inputs.push_back(
            encode_segments(original.inputs[j], whole(original.inputs[j]), zero));
        wire_.outputs.push_back(expect(original.outputs[j], whole(original.outputs[j]), zero));
      }
      break;
    case CommOpKind::all_to_allv:
      wire_.scounts = encoded_counts(*original.scounts);
      wire_.sdispls = packed_displs(*wire_.scounts);
      wire_.rcounts = encoded_counts(*original.rcounts);
      wire_.rdispls = packed_displs(*wire_.rcounts);
      wire_.inputs.push_back(
          encode_segments(original.inputs[0], *original.scounts, *original.sdispls));
      wire_.outputs.push_back(expect(original.outputs[0], *original.rcounts, *original.rdispls));
      break;
    default:
      throw Error(ErrorKind::unsupported_operation,
                  std::string(to_string(original.kind)) + " cannot be compressed");
  }
}

void CompressedRequest::finish() const {
  for (const auto& piece : decode_) {
    trunc16::decode(piece.source.raw_bytes().subspan(piece.source_offset,
                                                     trunc16::encoded_size(piece.count)),
                    piece.target.raw_bytes().subspan(piece.target_offset, piece.count * 4));
  }
}

}  // namespace mcrdl
