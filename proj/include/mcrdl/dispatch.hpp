// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "mcrdl/request.hpp"

namespace mcrdl {

struct TableEntry {
  std::size_t max_bytes = 0;
  BackendId backend;
  friend bool operator==(const TableEntry&, const TableEntry&) = default;
};

/// Static routing table for the "auto" backend:
/// op kind -> world size -> thresholds with strictly increasing max_bytes.
struct TuningTable {
  int version = 1;
  std::string system;
  std::map<CommOpKind, std::map<int, std::vector<TableEntry>>> tables;

  std::size_t entry_count() const noexcept;
  friend bool operator==(const TuningTable&, const TuningTable&) = default;
};

/// Collapse adjacent entries naming the same backend into the last one's
/// threshold.
void merge_runs(TuningTable& table);

/// Parse the JSON form
///   {"version":1,"system":"...","tables":{"<op>":{"<world>":[{"max_bytes":N,"backend":"id"}]}}}
/// Throws Error(parse) on malformed input and Error(monotonicity) when
/// thresholds do not strictly increase. Equal-backend runs are merged.
TuningTable parse_table(std::string_view text);
TuningTable load_table(const std::string& path);

std::string to_json(const TuningTable& table);
/// Throws Error(io) when the file cannot be written.
void emit(const TuningTable& table, const std::string& path);

/// Backends named in the table but absent from `registered`.
std::vector<BackendId> unknown_backends(const TuningTable& table,
                                        const std::vector<BackendId>& registered);

/**
 * Pick a backend for one request. The first entry whose max_bytes covers
 * `bytes` wins, and sizes beyond the last threshold take the last entry. An
 * untuned world uses the nearest smaller tuned world of the same op; with
 * none, the first registered backend. Throws Error(unroutable_request) when
 * the chosen backend is not registered.
 */
BackendId route(const TuningTable& table, CommOpKind kind, int world_size, std::size_t bytes,
                const std::vector<BackendId>& registered);

inline constexpr std::size_t kMinBucket = 4;
inline constexpr std::size_t kMaxBucket = std::size_t{64} << 20;

/// Smallest power-of-two boundary in [4 B, 64 MiB] that is >= bytes.
std::size_t bucket(std::size_t bytes) noexcept;
/// The 25 boundaries 4 B .. 64 MiB.
std::vector<std::size_t> all_buckets();

}  // namespace mcrdl
