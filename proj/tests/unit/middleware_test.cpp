// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "mcrdl/error.hpp"
#include "mcrdl/middleware.hpp"
#include "support/harness.hpp"

namespace mcrdl {
namespace {

using testing::with_ranks;
namespace fs = std::filesystem;

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("mcrdl_mw_" + std::to_string(::getpid()) + "_" + name);
}

// --- trunc16 ----------------------------------------------------------------

TEST(Trunc16, RelativeErrorBoundOverNormals) {
  std::mt19937_64 rng(1234);
  std::normal_distribution<float> dist(0.0f, 10.0f);
  const double bound = std::ldexp(1.0, -7);
  double worst = 0.0;
  for (int i = 0; i < 1000000; ++i) {
    const float x = dist(rng);
    if (x == 0.0f) continue;
    const float y = trunc16::expand(trunc16::compress(x));
    worst = std::max(worst, std::abs(double(y) - double(x)) / std::abs(double(x)));
  }
  EXPECT_LT(worst, bound);
}

TEST(Trunc16, ExactAndSpecialValues) {
  for (const float x : {0.0f, -0.0f, 1.0f, -2.5f, 0.75f, 1024.0f,
                        std::numeric_limits<float>::infinity()}) {
    EXPECT_EQ(trunc16::expand(trunc16::compress(x)), x);
  }
  const float tenth = trunc16::expand(trunc16::compress(0.1f));
  EXPECT_LE(std::abs(tenth - 0.1f), 0.1f * std::ldexp(1.0f, -7));
  EXPECT_TRUE(std::isnan(trunc16::expand(trunc16::compress(std::nanf("1")))));
  EXPECT_EQ(trunc16::encoded_size(0), 0u);
  EXPECT_EQ(trunc16::encoded_size(3), trunc16::kHeaderBytes + 6);
}

TEST(Trunc16, DecodeRejectsForeignData) {
  std::vector<float> v = {1.0f, 2.0f};
  std::vector<std::byte> enc(trunc16::encoded_size(2));
  trunc16::encode(std::as_bytes(std::span(v)), enc);
  std::vector<float> back(2);
  trunc16::decode(enc, std::as_writable_bytes(std::span(back)));
  EXPECT_EQ(back, v);
  std::vector<float> wrong(3);
  EXPECT_THROW(trunc16::decode(enc, std::as_writable_bytes(std::span(wrong))), Error);
  enc[0] = std::byte{9};
  EXPECT_THROW(trunc16::decode(enc, std::as_writable_bytes(std::span(back))), Error);
}

TEST(Compression, AppliesOnlyToFloatDataMovement) {
  CommRequest r;
  r.kind = CommOpKind::bcast;
  r.outputs = {Buffer(DType::f32, 4)};
  EXPECT_TRUE(compressible(Codec::trunc16, r));
  EXPECT_FALSE(compressible(Codec::none, r));
  r.outputs = {Buffer(DType::i64, 4)};
  EXPECT_FALSE(compressible(Codec::trunc16, r));
  r.kind = CommOpKind::all_reduce;
  r.inputs = r.outputs = {Buffer(DType::f32, 4)};
  EXPECT_FALSE(compressible(Codec::trunc16, r));
}

TEST(Compression, CollectivesCarryCompressedPayloads) {
  with_ranks(3, "z=inproc:compress=trunc16,p=inproc", [](Runtime& rt) {
    const int rank = rt.get_rank("z");
    std::vector<float> values(256);
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = 0.1f * float(i + 1) + float(rank);

    auto input = Buffer::from(values);
    Buffer zout(DType::f32, 256 * 3);
    Buffer pout(DType::f32, 256 * 3);
    const auto z0 = rt.backend("z").transport().stats().wire_bytes;
    rt.all_gather("z", zout, input);
    const auto z1 = rt.backend("z").transport().stats().wire_bytes;
    const auto p0 = rt.backend("p").transport().stats().wire_bytes;
    rt.all_gather("p", pout, input);
    const auto p1 = rt.backend("p").transport().stats().wire_bytes;
    EXPECT_LT(z1 - z0, p1 - p0);

    const auto exact = pout.to_vector<float>();
    const auto lossy = zout.to_vector<float>();
    for (std::size_t i = 0; i < exact.size(); ++i) {
      EXPECT_LE(std::abs(lossy[i] - exact[i]), std::abs(exact[i]) * std::ldexp(1.0f, -7));
      EXPECT_EQ(lossy[i], trunc16::expand(trunc16::compress(exact[i])));
    }
  });
}

TEST(Compression, IntegersBypassAndAreLoggedUncompressed) {
  with_ranks(
      2, "z=inproc:compress=trunc16",
      [](Runtime& rt) {
        auto t = Buffer::from<std::int64_t>({1234567890123, -5});
        if (rt.get_rank("z") != 0) t = Buffer(DType::i64, 2);
        rt.bcast("z", t, 0);
        EXPECT_EQ(t.to_vector<std::int64_t>(), (std::vector<std::int64_t>{1234567890123, -5}));
        auto f = Buffer::from<float>({1.0f});
        rt.bcast("z", f, 0);
        const auto records = rt.logger()->records();
        ASSERT_EQ(records.size(), 2u);
        EXPECT_FALSE(records[0].compressed);
        EXPECT_TRUE(records[1].compressed);
      },
      false, std::chrono::milliseconds(20000), true);
}

TEST(Compression, CodecDisagreementFailsBothRanks) {
  launch_threads(2, [](int rank, std::shared_ptr<InprocWorld> world) {
    Runtime rt(thread_options(rank, std::move(world)));
    rt.init(rank == 0 ? "c=inproc:compress=trunc16" : "c=inproc");
    auto h = rt.bcast("c", Buffer(DType::f32, 8), 0, true);
    try {
      h.wait();
      ADD_FAILURE() << "expected a codec mismatch on rank " << rank;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::codec_mismatch);
    }
    rt.finalize();
  });
}

// --- fusion ----------------------------------------------------------------

TEST(Fusion, SmallRequestsShareOneCollective) {
  with_ranks(
      2, "f=inproc:fusion_bytes=1024:fusion_ms=10000",
      [](Runtime& rt) {
        const int rank = rt.get_rank("f");
        std::vector<Buffer> bufs;
        std::vector<WorkHandle> hs;
        for (int i = 0; i < 10; ++i) {
          bufs.push_back(Buffer::from(std::vector<float>(16, float(i + rank))));
          hs.push_back(rt.all_reduce("f", bufs.back(), ReduceOp::sum, true));
        }
        rt.synchronize();
        for (int i = 0; i < 10; ++i) {
          EXPECT_TRUE(hs[i].test());
          EXPECT_EQ(bufs[i].to_vector<float>(), std::vector<float>(16, float(2 * i + 1)));
        }
        const auto s = rt.backend("f").stats();
        EXPECT_EQ(s.executions, 1u);
        EXPECT_EQ(s.fused_flushes, 1u);
        EXPECT_EQ(s.fused_members, 10u);
        const auto records = rt.logger()->records();
        ASSERT_EQ(records.size(), 1u);
        EXPECT_EQ(records[0].bytes, 640u);
        EXPECT_TRUE(records[0].fused);
      },
      false, std::chrono::milliseconds(20000), true);
}

TEST(Fusion, FullBufferFlushesWithoutWaiting) {
  with_ranks(2, "f=inproc:fusion_bytes=256:fusion_ms=60000", [](Runtime& rt) {
    std::vector<WorkHandle> hs;
    for (int i = 0; i < 8; ++i) {
      hs.push_back(rt.all_reduce("f", Buffer::from(std::vector<float>(16, 1.0f)), ReduceOp::sum,
                                 true));
    }
    // Two exactly-full groups of four; nothing may wait for the minute timer.
    for (auto& h : hs) h.wait();
    EXPECT_EQ(rt.backend("f").stats().fused_flushes, 2u);
  });
}

TEST(Fusion, OversizedRequestsBypass) {
  with_ranks(2, "f=inproc:fusion_bytes=64:fusion_ms=10000", [](Runtime& rt) {
    auto t = Buffer::from(std::vector<float>(32, 1.0f));
    rt.all_reduce("f", t, ReduceOp::sum, true).wait();
    EXPECT_EQ(t.to_vector<float>(), std::vector<float>(32, 2.0f));
    const auto s = rt.backend("f").stats();
    EXPECT_EQ(s.fused_flushes, 0u);
    EXPECT_EQ(s.executions, 1u);
  });
}

TEST(Fusion, LoneRequestFlushesOnTimer) {
  with_ranks(2, "f=inproc:fusion_bytes=8192:fusion_ms=5", [](Runtime& rt) {
    auto t = Buffer::from(std::vector<float>(4, 1.0f));
    const auto t0 = Clock::now();
    auto h = rt.all_reduce("f", t, ReduceOp::sum, true);
    h.wait();
    const auto elapsed = Clock::now() - t0;
    EXPECT_LT(elapsed, std::chrono::milliseconds(55));
    EXPECT_EQ(rt.backend("f").stats().timeout_flushes, 1u);
  });
}

TEST(Fusion, BlockingPostDoesNotWaitForTimer) {
  with_ranks(2, "f=inproc:fusion_bytes=8192:fusion_ms=60000", [](Runtime& rt) {
    auto t = Buffer::from(std::vector<float>(4, 1.0f));
    rt.all_reduce("f", t);
    EXPECT_EQ(t.to_vector<float>(), std::vector<float>(4, 2.0f));
  });
}

TEST(Fusion, ConfigValidation) {
  FusionConfig f;
  EXPECT_FALSE(f.enabled());
  EXPECT_THROW(f.check(), ValidationError);
  f.max_bytes = 10;
  f.max_wait = std::chrono::microseconds(0);
  EXPECT_THROW(f.check(), ValidationError);
}

// --- logging ---------------------------------------------------------------

TEST(Log, LineRoundTripsWithExactKeys) {
  LogRecord r;
  r.ts_us = 17;
  r.rank = 3;
  r.op = CommOpKind::all_to_allv;
  r.backend = "mpi-like";
  r.bytes = 4096;
  r.dur_us = 12.5;
  r.seq = 9;
  r.fused = true;
  const auto line = to_json_line(r);
  const auto j = nlohmann::json::parse(line);
  std::set<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.insert(k);
  EXPECT_EQ(keys, (std::set<std::string>{"ts_us", "rank", "op", "backend", "bytes", "dur_us",
                                         "seq", "fused"}));
  EXPECT_EQ(parse_log_line(line), r);
  EXPECT_THROW(parse_log_line("{\"ts_us\":1}"), Error);
  EXPECT_THROW(parse_log_line("not json"), Error);
}

TEST(Log, FlushWritesOneLinePerRecord) {
  Logger logger;
  const auto empty = temp_file("empty.jsonl");
  logger.flush(empty.string());
  EXPECT_EQ(fs::file_size(empty), 0u);
  EXPECT_TRUE(read_log(empty.string()).empty());

  LogRecord a;
  a.ts_us = 5;
  a.backend = "x";
  LogRecord b = a;
  b.ts_us = 2;
  logger.emit(a);
  logger.emit(b);
  const auto path = temp_file("two.jsonl");
  logger.flush(path.string());
  const auto back = read_log(path.string());
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].ts_us, 2u);
  EXPECT_EQ(back[1].ts_us, 5u);
  EXPECT_THROW(logger.flush("/nonexistent-dir/x.jsonl"), Error);
  fs::remove(empty);
  fs::remove(path);
}

TEST(Log, RuntimeRecordsEveryOperation) {
  with_ranks(
      2, "a=inproc,b=inproc",
      [](Runtime& rt) {
        rt.all_reduce("a", Buffer(DType::f32, 10));
        rt.bcast("b", Buffer(DType::u8, 3), 0);
        const auto records = rt.logger()->records();
        ASSERT_EQ(records.size(), 2u);
        EXPECT_EQ(records[0].op, CommOpKind::all_reduce);
        EXPECT_EQ(records[0].backend, "a");
        EXPECT_EQ(records[0].bytes, 40u);
        EXPECT_EQ(records[1].backend, "b");
        EXPECT_EQ(records[1].bytes, 3u);
        EXPECT_EQ(records[1].rank, rt.get_rank("b"));
        EXPECT_FALSE(records[0].fused);
      },
      false, std::chrono::milliseconds(20000), true);
}

// --- report ----------------------------------------------------------------

LogRecord rec(CommOpKind op, const std::string& backend, double dur_us) {
  LogRecord r;
  r.op = op;
  r.backend = backend;
  r.dur_us = dur_us;
  return r;
}

TEST(Report, PercentagesFollowTime) {
  const auto b = aggregate({rec(CommOpKind::all_reduce, "a", 10), rec(CommOpKind::all_reduce, "a", 20),
                            rec(CommOpKind::bcast, "b", 70)});
  // Rows are ordered by op kind: bcast before all_reduce.
  ASSERT_EQ(b.rows.size(), 2u);
  EXPECT_EQ(b.rows[1].op, CommOpKind::all_reduce);
  EXPECT_NEAR(b.rows[1].percent, 30.0, 1e-9);
  EXPECT_EQ(b.rows[1].count, 2u);
  EXPECT_NEAR(b.rows[0].percent, 70.0, 1e-9);
  EXPECT_NEAR(b.total_us, 100.0, 1e-9);

  const auto single = aggregate({rec(CommOpKind::send, "a", 3)});
  ASSERT_EQ(single.rows.size(), 1u);
  EXPECT_NEAR(single.rows[0].percent, 100.0, 1e-9);
  EXPECT_TRUE(aggregate({}).rows.empty());
}

TEST(Report, CrossRankTakesTheSlowestRank) {
  const auto r = make_report({{rec(CommOpKind::all_reduce, "a", 10), rec(CommOpKind::bcast, "b", 30)},
                              {rec(CommOpKind::all_reduce, "a", 50), rec(CommOpKind::bcast, "b", 10)}});
  ASSERT_EQ(r.per_rank.size(), 2u);
  ASSERT_EQ(r.cross_rank_max.rows.size(), 2u);
  const auto& bcast = r.cross_rank_max.rows[0];
  const auto& all_reduce = r.cross_rank_max.rows[1];
  EXPECT_NEAR(all_reduce.total_us, 50.0, 1e-9);
  EXPECT_NEAR(bcast.total_us, 30.0, 1e-9);
  EXPECT_NEAR(all_reduce.percent, 62.5, 1e-9);
  const auto text = format_report(r);
  EXPECT_NE(text.find("cross-rank max"), std::string::npos);
  const auto csv = format_report_csv(r);
  EXPECT_NE(csv.find("all_reduce,a"), std::string::npos);
}

}  // namespace
}  // namespace mcrdl
