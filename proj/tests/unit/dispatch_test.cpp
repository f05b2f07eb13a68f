// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "mcrdl/dispatch.hpp"
#include "mcrdl/error.hpp"

namespace mcrdl {
namespace {

// The all_gather example table: one row per message size, three backends.
const char* kExampleRows = R"({"version":1,"system":"example","tables":{"all_gather":{"16":[
  {"max_bytes":256,"backend":"mv2-gdr"},{"max_bytes":512,"backend":"mv2-gdr"},
  {"max_bytes":1024,"backend":"mv2-gdr"},{"max_bytes":2048,"backend":"mv2-gdr"},
  {"max_bytes":4096,"backend":"nccl"},{"max_bytes":8192,"backend":"nccl"},
  {"max_bytes":16384,"backend":"sccl"},{"max_bytes":32768,"backend":"sccl"}]}}})";

const std::vector<BackendId> kRegistered = {BackendId("mv2-gdr"), BackendId("nccl"),
                                            BackendId("sccl")};

ErrorKind parse_error(const std::string& text) {
  try {
    parse_table(text);
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::usage;
}

TEST(Table, ExampleRowsMergeToThreeEntries) {
  const auto t = parse_table(kExampleRows);
  EXPECT_EQ(t.entry_count(), 3u);
  const auto& list = t.tables.at(CommOpKind::all_gather).at(16);
  ASSERT_EQ(list.size(), 3u);
  EXPECT_EQ(list[0], (TableEntry{2048, BackendId("mv2-gdr")}));
  EXPECT_EQ(list[1], (TableEntry{8192, BackendId("nccl")}));
  EXPECT_EQ(list[2], (TableEntry{32768, BackendId("sccl")}));
}

TEST(Table, ExampleRowsRoute) {
  const auto t = parse_table(kExampleRows);
  auto r = [&](std::size_t bytes) { return route(t, CommOpKind::all_gather, 16, bytes, kRegistered).str(); };
  EXPECT_EQ(r(256), "mv2-gdr");
  EXPECT_EQ(r(2048), "mv2-gdr");
  EXPECT_EQ(r(4096), "nccl");
  EXPECT_EQ(r(8192), "nccl");
  EXPECT_EQ(r(16384), "sccl");
  EXPECT_EQ(r(1 << 30), "sccl");  // past the last threshold
  EXPECT_EQ(r(0), "mv2-gdr");
}

TEST(Table, RejectsMalformedInput) {
  EXPECT_EQ(parse_error("{"), ErrorKind::parse);
  EXPECT_EQ(parse_error(R"({"version":2,"tables":{}})"), ErrorKind::parse);
  EXPECT_EQ(parse_error(R"({"version":1,"tables":{"warp":{}}})"), ErrorKind::parse);
  EXPECT_EQ(parse_error(R"({"version":1,"tables":{"bcast":{"x":[]}}})"), ErrorKind::parse);
  EXPECT_EQ(parse_error(R"({"version":1,"tables":{"bcast":{"2":[]}}})"), ErrorKind::parse);
  EXPECT_EQ(parse_error(R"({"version":1,"tables":{"bcast":{"2":[{"max_bytes":1024,"backend":"a"},{"max_bytes":512,"backend":"b"}]}}})"),
            ErrorKind::monotonicity);
  EXPECT_EQ(parse_error(R"({"version":1,"tables":{"bcast":{"2":[{"max_bytes":4,"backend":"auto"}]}}})"),
            ErrorKind::parse);
}

TEST(Route, EmptyTableFallsBack) {
  const auto t = parse_table(R"({"version":1,"tables":{}})");
  EXPECT_EQ(route(t, CommOpKind::all_reduce, 4, 100, kRegistered).str(), "mv2-gdr");
  EXPECT_THROW(route(t, CommOpKind::all_reduce, 4, 100, {}), Error);
}

TEST(Route, NearestSmallerWorld) {
  TuningTable t;
  t.tables[CommOpKind::bcast][4] = {{64, BackendId("nccl")}};
  t.tables[CommOpKind::bcast][8] = {{64, BackendId("sccl")}};
  EXPECT_EQ(route(t, CommOpKind::bcast, 6, 8, kRegistered).str(), "nccl");
  EXPECT_EQ(route(t, CommOpKind::bcast, 8, 8, kRegistered).str(), "sccl");
  EXPECT_EQ(route(t, CommOpKind::bcast, 100, 8, kRegistered).str(), "sccl");
  EXPECT_EQ(route(t, CommOpKind::bcast, 2, 8, kRegistered).str(), "mv2-gdr");  // none smaller
}

TEST(Route, UnregisteredBackendIsUnroutable) {
  const auto t = parse_table(kExampleRows);
  const std::vector<BackendId> partial = {BackendId("nccl")};
  EXPECT_EQ(unknown_backends(t, partial),
            (std::vector<BackendId>{BackendId("mv2-gdr"), BackendId("sccl")}));
  EXPECT_EQ(route(t, CommOpKind::all_gather, 16, 4096, partial).str(), "nccl");
  try {
    route(t, CommOpKind::all_gather, 16, 100, partial);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::unroutable_request);
  }
}

TEST(Route, ContiguousRanges) {
  const auto t = parse_table(kExampleRows);
  // Once a backend stops being chosen it is never chosen again for larger sizes.
  std::vector<std::string> seen;
  for (std::size_t n = 1; n <= 65536; n += 37) {
    const auto b = route(t, CommOpKind::all_gather, 16, n, kRegistered).str();
    if (seen.empty() || seen.back() != b) {
      EXPECT_EQ(std::count(seen.begin(), seen.end(), b), 0) << b << " at " << n;
      seen.push_back(b);
    }
  }
  EXPECT_EQ(seen.size(), 3u);
}

TEST(Emit, RoundTripsThroughAFile) {
  auto t = parse_table(kExampleRows);
  t.tables[CommOpKind::all_reduce][2] = {{4, BackendId("a")}, {1 << 20, BackendId("b")}};
  const auto path = (std::filesystem::temp_directory_path() / "mcrdl_table_rt.json").string();
  emit(t, path);
  EXPECT_EQ(load_table(path), t);
  std::filesystem::remove(path);
  try {
    emit(t, "/nonexistent-dir/table.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
  }
  EXPECT_THROW(load_table("/nonexistent-dir/table.json"), Error);
}

TEST(Bucket, PowersOfTwo) {
  EXPECT_EQ(bucket(0), 4u);
  EXPECT_EQ(bucket(4), 4u);
  EXPECT_EQ(bucket(5), 8u);
  EXPECT_EQ(bucket(10000), 16384u);
  EXPECT_EQ(bucket(kMaxBucket), kMaxBucket);
  EXPECT_EQ(bucket(kMaxBucket * 3), kMaxBucket);
  const auto all = all_buckets();
  EXPECT_EQ(all.size(), 25u);
  EXPECT_EQ(all.front(), 4u);
  EXPECT_EQ(all.back(), kMaxBucket);
}

TEST(Merge, CollapsesRuns) {
  TuningTable t;
  t.tables[CommOpKind::bcast][2] = {{4, BackendId("a")}, {8, BackendId("a")}, {16, BackendId("b")},
                                    {32, BackendId("a")}};
  merge_runs(t);
  EXPECT_EQ(t.tables[CommOpKind::bcast][2],
            (std::vector<TableEntry>{{8, BackendId("a")}, {16, BackendId("b")}, {32, BackendId("a")}}));
}

}  // namespace
}  // namespace mcrdl
