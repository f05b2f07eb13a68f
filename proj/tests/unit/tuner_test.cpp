// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "mcrdl/error.hpp"
#include "mcrdl/tuner.hpp"

namespace mcrdl {
namespace {

BenchSample sample(CommOpKind op, const std::string& backend, int world, std::size_t bytes,
                   std::vector<double> d) {
  BenchSample s;
  s.op = op;
  s.backend = BackendId(backend);
  s.world_size = world;
  s.bytes = bytes;
  s.durations = std::move(d);
  return s;
}

TEST(Statistic, Summaries) {
  EXPECT_DOUBLE_EQ(apply(Statistic::median, {3, 1, 2}), 2.0);
  EXPECT_DOUBLE_EQ(apply(Statistic::median, {4, 1, 2, 3}), 2.5);
  EXPECT_DOUBLE_EQ(apply(Statistic::mean, {1, 2, 6}), 3.0);
  EXPECT_DOUBLE_EQ(apply(Statistic::min, {5, 1, 2}), 1.0);
  EXPECT_THROW(apply(Statistic::median, {}), Error);
  EXPECT_EQ(parse_statistic("mean"), Statistic::mean);
  EXPECT_FALSE(parse_statistic("mode").has_value());
}

TEST(Config, Validation) {
  BenchConfig c;
  EXPECT_NO_THROW(c.check());
  c.measure_iters = 2;
  EXPECT_THROW(c.check(), ValidationError);
  c = BenchConfig{};
  c.sizes = {8, 4};
  EXPECT_THROW(c.check(), ValidationError);
}

TEST(Requests, CanonicalSizeMatchesTheBucket) {
  for (const auto kind : kAllOpKinds) {
    for (const int world : {2, 3, 4}) {
      for (const std::size_t bytes : {std::size_t{4}, std::size_t{1024}, std::size_t{65536}}) {
        for (int rank = 0; rank < world; ++rank) {
          const auto r = bench_request(kind, bytes, world, rank, BackendId("x"));
          if (!r) {
            EXPECT_FALSE(is_collective(kind));
            EXPECT_GE(rank, 2);
            continue;
          }
          EXPECT_NO_THROW(validate(*r, world, rank)) << to_string(kind);
          if (rank == 0) {
            // Sizes that divide evenly come out exact; others round up.
            const auto m = message_bytes(*r, world);
            EXPECT_GE(m, bytes) << to_string(kind);
            EXPECT_LT(m, bytes + 4 * static_cast<std::size_t>(world)) << to_string(kind);
          }
        }
      }
    }
  }
}

TEST(Build, PicksTheFastestPerCell) {
  std::vector<BenchSample> s = {
      sample(CommOpKind::bcast, "a", 2, 4, {1, 1, 1}),
      sample(CommOpKind::bcast, "b", 2, 4, {2, 2, 2}),
      sample(CommOpKind::bcast, "a", 2, 8, {1, 1, 1}),
      sample(CommOpKind::bcast, "b", 2, 8, {2, 2, 2}),
      sample(CommOpKind::bcast, "a", 2, 16, {3, 3, 3}),
      sample(CommOpKind::bcast, "b", 2, 16, {2, 2, 2}),
      sample(CommOpKind::bcast, "a", 4, 4, {5, 5, 5}),
      sample(CommOpKind::bcast, "b", 4, 4, {5, 5, 5}),  // tie: "a" wins
  };
  const auto built = build_table(s, Statistic::median, "desk");
  EXPECT_EQ(built.pre_merge_entries, 4u);
  EXPECT_EQ(built.table.system, "desk");
  EXPECT_EQ(built.table.tables.at(CommOpKind::bcast).at(2),
            (std::vector<TableEntry>{{8, BackendId("a")}, {16, BackendId("b")}}));
  EXPECT_EQ(built.table.tables.at(CommOpKind::bcast).at(4),
            (std::vector<TableEntry>{{4, BackendId("a")}}));
}

TEST(Build, SkippedCellsAreReported) {
  auto skipped = sample(CommOpKind::send, "a", 1, 4, {});
  skipped.skipped = true;
  skipped.reason = "needs two ranks";
  std::vector<BenchSample> s = {skipped, sample(CommOpKind::bcast, "a", 1, 4, {1, 1, 1})};
  const auto built = build_table(s);
  EXPECT_EQ(built.skipped_cells, (std::vector<std::string>{"send/1/4"}));
  EXPECT_THROW(build_table({skipped}), Error);
}

TEST(Bench, SkipsWhatCannotRun) {
  BenchConfig c;
  c.ops = {CommOpKind::send, CommOpKind::bcast};
  c.sizes = {4};
  c.warmup_iters = 0;
  c.measure_iters = 3;
  // "c" can run the barrier for "r".
  const auto s = bench_threads("r=inproc:only=bcast,c=inproc", {1}, c);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[0].backend.str(), "r");
  EXPECT_TRUE(s[0].skipped);
  EXPECT_EQ(s[0].reason, "unsupported");
  EXPECT_EQ(s[1].reason, "needs two ranks");
  EXPECT_EQ(s[2].backend.str(), "r");
  EXPECT_FALSE(s[2].skipped);
  EXPECT_EQ(s[2].durations.size(), 3u);

  const auto alone = bench_threads("r=inproc:only=bcast", {1}, c);
  EXPECT_EQ(alone[1].reason, "no backend can run the barrier");
}

TEST(Bench, AllRanksReturnIdenticalSamples) {
  BenchConfig c;
  c.ops = {CommOpKind::all_reduce, CommOpKind::send};
  c.sizes = {64, 1024};
  c.warmup_iters = 1;
  c.measure_iters = 3;
  std::vector<std::vector<BenchSample>> per_rank(3);
  launch_threads(3, [&](int rank, std::shared_ptr<InprocWorld> w) {
    Runtime rt(thread_options(rank, std::move(w)));
    rt.init("a=inproc,b=inproc");
    per_rank[rank] = bench(c, rt);
    rt.finalize();
  });
  ASSERT_EQ(per_rank[0].size(), 8u);
  for (int r = 1; r < 3; ++r) {
    for (std::size_t i = 0; i < per_rank[0].size(); ++i) {
      EXPECT_EQ(per_rank[r][i].durations, per_rank[0][i].durations);
    }
  }
}

TEST(Bench, ShapedBackendsProduceTheirCrossover) {
  // "lat" pays 3 ms per message, "bw" 200 ns per byte: crossover near 15 KB.
  BenchConfig c;
  c.ops = {CommOpKind::bcast};
  c.sizes = {256, 1 << 17};
  c.warmup_iters = 0;
  c.measure_iters = 3;
  const auto s = bench_threads("lat=inproc:alpha=3ms,bw=inproc:beta=200ns", {2}, c);
  const auto t = build_table(s).table;
  const std::vector<BackendId> reg = {BackendId("lat"), BackendId("bw")};
  EXPECT_EQ(route(t, CommOpKind::bcast, 2, 256, reg).str(), "bw");
  EXPECT_EQ(route(t, CommOpKind::bcast, 2, 1 << 17, reg).str(), "lat");
}

}  // namespace
}  // namespace mcrdl
