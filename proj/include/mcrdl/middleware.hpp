// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "mcrdl/request.hpp"
#include "mcrdl/work.hpp"

namespace mcrdl {

// ---------------------------------------------------------------------------
// Tensor fusion
// ---------------------------------------------------------------------------

/// Coalesce small same-typed all_reduce requests on one backend. A buffer
/// opens when its first request is posted and flushes as a single collective
/// once the next request would not fit in `max_bytes`, or `max_wait` after it
/// opened. Disabled when max_bytes == 0.
struct FusionConfig {
  std::size_t max_bytes = 0;
  std::chrono::microseconds max_wait{5000};
  std::set<CommOpKind> eligible = {CommOpKind::all_reduce};

  bool enabled() const noexcept { return max_bytes > 0; }
  /// Throws ValidationError unless max_bytes and max_wait are positive.
  void check() const;
  friend bool operator==(const FusionConfig&, const FusionConfig&) = default;
};

// ---------------------------------------------------------------------------
// Compression
// ---------------------------------------------------------------------------

enum class Codec : std::uint8_t { none = 0, trunc16 = 1 };

std::string_view to_string(Codec codec) noexcept;
std::optional<Codec> parse_codec(std::string_view name) noexcept;

namespace trunc16 {

inline constexpr std::size_t kHeaderBytes = 8;

/// Keep sign, exponent and the top 7 mantissa bits.
std::uint16_t compress(float x) noexcept;
float expand(std::uint16_t bits) noexcept;

/// Encoded size of `count` floats: 0 for an empty segment, otherwise the
/// 8-byte codec header plus 2 bytes per element.
std::size_t encoded_size(std::size_t count) noexcept;
void encode(std::span<const std::byte> floats, std::span<std::byte> out);
/// Throws Error(codec_mismatch) on a foreign header and
/// Error(length_mismatch) when the recorded count differs from `floats`.
void decode(std::span<const std::byte> encoded, std::span<std::byte> floats);

}  // namespace trunc16

/// True when `codec` applies to the request: f32 payloads of bcast, gather,
/// scatter, all_gather and all_to_all families.
bool compressible(Codec codec, const CommRequest& request) noexcept;

/// The wire form of a compressible request: the same operation over u8
/// buffers holding encoded segments.
class CompressedRequest {
 public:
  CompressedRequest(const CommRequest& original, int rank, int world);

  const CommRequest& wire() const noexcept { return wire_; }
  /// Decode received segments into the original request's outputs.
  void finish() const;

 private:
  struct Piece {
    Buffer target;
    std::size_t target_offset;  // bytes
    std::size_t count;          // floats
    Buffer source;
    std::size_t source_offset;  // bytes
  };

  CommRequest original_;
  CommRequest wire_;
  std::vector<Piece> decode_;
};

// ---------------------------------------------------------------------------
// Logging
// ---------------------------------------------------------------------------

struct LogRecord {
  std::uint64_t ts_us = 0;  // start, microseconds since runtime init
  int rank = 0;
  CommOpKind op = CommOpKind::all_reduce;
  std::string backend;
  std::uint64_t bytes = 0;
  double dur_us = 0.0;
  std::uint64_t seq = 0;
  bool fused = false;
  // Not part of the file format.
  std::size_t members = 1;
  bool compressed = false;

  friend bool operator==(const LogRecord&, const LogRecord&) = default;
};

/// One JSON object per line with exactly the keys
/// ts_us, rank, op, backend, bytes, dur_us, seq, fused.
std::string to_json_line(const LogRecord& record);
LogRecord parse_log_line(const std::string& line);
std::vector<LogRecord> read_log(const std::string& path);

class Logger {
 public:
  explicit Logger(Clock::time_point epoch = Clock::now()) : epoch_(epoch) {}

  Clock::time_point epoch() const noexcept { return epoch_; }
  void emit(LogRecord record);
  /// Records ordered by ts_us.
  std::vector<LogRecord> records() const;
  std::size_t size() const;
  void clear();
  /// Throws Error(io) when the file cannot be written.
  void flush(const std::string& path) const;

 private:
  Clock::time_point epoch_;
  mutable std::mutex mu_;
  std::vector<LogRecord> records_;
};

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct ReportRow {
  CommOpKind op = CommOpKind::all_reduce;
  std::string backend;
  std::uint64_t count = 0;
  double total_us = 0.0;
  double percent = 0.0;
};

struct Breakdown {
  std::vector<ReportRow> rows;  // sorted by op then backend
  double total_us = 0.0;
};

/// Time share of each (op, backend) in a set of records.
Breakdown aggregate(const std::vector<LogRecord>& records);

struct Report {
  std::vector<Breakdown> per_rank;  // one per input log
  /// For each (op, backend), the largest per-rank total: the time the
  /// slowest rank spent in it.
  Breakdown cross_rank_max;
};

Report make_report(const std::vector<std::vector<LogRecord>>& logs);
Report report(const std::vector<std::string>& paths);

std::string format_report(const Report& report);
std::string format_report_csv(const Report& report);

}  // namespace mcrdl
