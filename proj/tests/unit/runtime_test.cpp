// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cstdlib>
#include <thread>

#include "mcrdl/error.hpp"
#include "support/harness.hpp"

namespace mcrdl {
namespace {

using testing::with_ranks;
using namespace std::chrono_literals;

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::usage;
}

// --- spec parsing ----------------------------------------------------------

TEST(Spec, PresetsAndKeys) {
  const auto nccl = parse_backend_spec("nccl-like");
  EXPECT_TRUE(nccl.transport.empty());
  ASSERT_TRUE(nccl.shape.has_value());
  EXPECT_DOUBLE_EQ(nccl.shape->alpha, 20e-6);
  EXPECT_EQ(parse_backend_spec("mpi-like").policy.get(CommOpKind::all_reduce),
            Algorithm::recursive_doubling);

  const auto c = parse_backend_spec(
      "x=tcp:alpha=100us:beta=1ns:all_reduce=naive:only=all_reduce+bcast:fusion_bytes=8K:fusion_ms=5");
  EXPECT_EQ(c.id.str(), "x");
  EXPECT_EQ(c.transport, "tcp");
  EXPECT_DOUBLE_EQ(c.shape->alpha, 100e-6);
  EXPECT_DOUBLE_EQ(c.shape->beta, 1e-9);
  EXPECT_EQ(c.policy.get(CommOpKind::all_reduce), Algorithm::naive);
  EXPECT_EQ(*c.only, (std::set<CommOpKind>{CommOpKind::all_reduce, CommOpKind::bcast}));
  EXPECT_EQ(c.fusion.max_bytes, 8192u);
  EXPECT_EQ(c.fusion.max_wait, 5000us);

  EXPECT_EQ(kind_of([] { parse_backend_spec("x=carrier-pigeon"); }), ErrorKind::unknown_transport);
  EXPECT_EQ(kind_of([] { parse_backend_spec("x=inproc:bogus=1"); }), ErrorKind::parse);
  EXPECT_EQ(kind_of([] { parse_backend_spec("x=inproc:all_reduce=bruck"); }), ErrorKind::validation);
  EXPECT_EQ(kind_of([] { parse_backend_spec("auto"); }), ErrorKind::parse);
  EXPECT_EQ(kind_of([] { parse_backend_specs("a,,b"); }), ErrorKind::parse);
  EXPECT_EQ(kind_of([] { parse_backend_spec("x=inproc:fusion_bytes=0"); }), ErrorKind::validation);
}

TEST(Spec, Units) {
  EXPECT_DOUBLE_EQ(parse_seconds("2"), 2.0);
  EXPECT_DOUBLE_EQ(parse_seconds("50ms"), 0.05);
  EXPECT_DOUBLE_EQ(parse_seconds("10us"), 1e-5);
  EXPECT_DOUBLE_EQ(parse_seconds("3ns"), 3e-9);
  EXPECT_THROW(parse_seconds("5 fortnights"), Error);
  EXPECT_THROW(parse_seconds("-1"), Error);
  EXPECT_EQ(parse_size("64"), 64u);
  EXPECT_EQ(parse_size("1K"), 1024u);
  EXPECT_EQ(parse_size("2MiB"), 2u << 20);
  EXPECT_THROW(parse_size("1.5"), Error);
  EXPECT_THROW(parse_size("abc"), Error);
}

// --- lifecycle -------------------------------------------------------------

TEST(Lifecycle, SingleProcessWorld) {
  Runtime rt;
  rt.init("solo");
  EXPECT_EQ(rt.get_size("solo"), 1);
  EXPECT_EQ(rt.get_rank("solo"), 0);
  auto t = Buffer::from<float>({1.0f, 2.0f});
  rt.all_reduce("solo", t);
  EXPECT_EQ(t.to_vector<float>(), (std::vector<float>{1.0f, 2.0f}));
  rt.finalize();
}

TEST(Lifecycle, RegistryErrors) {
  Runtime rt;
  EXPECT_EQ(kind_of([&] { rt.get_size("nope"); }), ErrorKind::unknown_backend);
  rt.init("a=inproc");
  rt.init("a=inproc");  // identical: no-op
  EXPECT_EQ(kind_of([&] { rt.init("a=inproc:alpha=1us"); }), ErrorKind::duplicate_backend);
  EXPECT_EQ(kind_of([&] { rt.init("b=inproc,b=inproc"); }), ErrorKind::duplicate_backend);
  EXPECT_EQ(rt.get_backends(), (std::vector<BackendId>{BackendId("a")}));
  rt.finalize({"a"});
  EXPECT_EQ(kind_of([&] { rt.all_reduce("a", Buffer(DType::f32, 1)); }), ErrorKind::backend_finalized);
  EXPECT_EQ(kind_of([&] { rt.init("a=inproc"); }), ErrorKind::backend_finalized);
  EXPECT_TRUE(rt.get_backends().empty());
  rt.finalize();  // idempotent
}

TEST(Lifecycle, AutoWithoutBackends) {
  Runtime rt;
  CommRequest r;
  r.kind = CommOpKind::all_reduce;
  r.inputs = r.outputs = {Buffer(DType::f32, 1)};
  r.op = ReduceOp::sum;
  r.backend = BackendId::automatic();
  EXPECT_EQ(kind_of([&] { rt.post(r); }), ErrorKind::not_initialized);
}

TEST(Lifecycle, RestrictedBackendRejectsOtherKinds) {
  Runtime rt;
  rt.init("r=inproc:only=bcast");
  EXPECT_EQ(kind_of([&] { rt.all_reduce("r", Buffer(DType::f32, 1)); }),
            ErrorKind::unsupported_operation);
  rt.bcast("r", Buffer(DType::f32, 1), 0);
  rt.finalize();
}

TEST(Lifecycle, ValidationHappensAtPost) {
  Runtime rt;
  rt.init("v=inproc");
  EXPECT_EQ(kind_of([&] { rt.bcast("v", Buffer(DType::f32, 1), 3); }), ErrorKind::invalid_root);
  EXPECT_EQ(kind_of([&] { rt.send("v", Buffer(DType::f32, 1), 0); }), ErrorKind::invalid_destination);
  EXPECT_EQ(rt.backend("v").stats().posted, 0u);
  rt.finalize();
}

TEST(Lifecycle, RanksAgreeAcrossBackends) {
  with_ranks(3, "a=inproc,b=inproc", [](Runtime& rt) {
    EXPECT_EQ(rt.get_size("a"), 3);
    EXPECT_EQ(rt.get_size("b"), 3);
    EXPECT_EQ(rt.get_rank("a"), rt.get_rank("b"));
  });
}

TEST(Lifecycle, TcpBackendsBootstrapPerId) {
  with_ranks(
      3, "t1=tcp,t2=tcp",
      [](Runtime& rt) {
        auto x = Buffer::from<std::int64_t>({rt.get_rank("t1")});
        rt.all_reduce("t1", x);
        auto y = Buffer::from<std::int64_t>({1});
        rt.all_reduce("t2", y);
        EXPECT_EQ(x.to_vector<std::int64_t>()[0], 3);
        EXPECT_EQ(y.to_vector<std::int64_t>()[0], 3);
      },
      true);
}

TEST(Lifecycle, EnvironmentOptions) {
  ::setenv("MCRDL_RANK", "2", 1);
  ::setenv("MCRDL_WORLD_SIZE", "4", 1);
  ::setenv("MCRDL_MASTER_PORT", "29555", 1);
  ::setenv("MCRDL_TIMEOUT_SECS", "7", 1);
  const auto o = RuntimeOptions::from_env();
  EXPECT_EQ(o.rank, 2);
  EXPECT_EQ(o.world_size, 4);
  ASSERT_TRUE(o.master.has_value());
  EXPECT_EQ(o.master->host, "127.0.0.1");
  EXPECT_EQ(o.master->port, 29555);
  EXPECT_EQ(o.op_timeout, 7000ms);
  ::unsetenv("MCRDL_RANK");
  ::unsetenv("MCRDL_WORLD_SIZE");
  ::unsetenv("MCRDL_MASTER_PORT");
  ::unsetenv("MCRDL_TIMEOUT_SECS");

  RuntimeOptions bad;
  bad.rank = 4;
  bad.world_size = 4;
  EXPECT_EQ(kind_of([&] { Runtime r(bad); }), ErrorKind::invalid_rank);
}

// --- work handles ----------------------------------------------------------

TEST(Work, AsyncMatchesBlocking) {
  with_ranks(4, "a=inproc", [](Runtime& rt) {
    const int rank = rt.get_rank("a");
    auto x = Buffer::from<std::int64_t>({rank, 10 * rank});
    auto y = x.clone();
    auto h = rt.all_reduce("a", x, ReduceOp::sum, true);
    rt.all_reduce("a", y);
    h.wait();
    EXPECT_EQ(x.to_vector<std::int64_t>(), y.to_vector<std::int64_t>());
    EXPECT_EQ(h.status(), WorkStatus::complete);
    h.wait();  // repeated waits are fine
  });
}

TEST(Work, TestIsFalseWhileShapedOperationRuns) {
  with_ranks(2, "slow=inproc:alpha=50ms", [](Runtime& rt) {
    auto h = rt.all_reduce("slow", Buffer(DType::f32, 1), ReduceOp::sum, true);
    EXPECT_FALSE(h.test());
    h.wait();
    EXPECT_TRUE(h.test());
  });
}

TEST(Work, SynchronizeEmptiesEveryLane) {
  with_ranks(3, "a=inproc:alpha=2ms,b=inproc", [](Runtime& rt) {
    std::vector<WorkHandle> hs;
    for (int i = 0; i < 10; ++i) {
      hs.push_back(rt.all_reduce("a", Buffer(DType::f32, 4), ReduceOp::sum, true));
      hs.push_back(rt.bcast("b", Buffer(DType::u8, 4), 0, true));
    }
    rt.synchronize();
    for (const auto& h : hs) EXPECT_TRUE(h.test());
    EXPECT_EQ(rt.backend("a").pending(), 0u);
    EXPECT_EQ(rt.backend("b").pending(), 0u);
  });
}

TEST(Work, FinalizeDrainsOutstandingPosts) {
  std::vector<WorkHandle> handles[2];
  launch_threads(2, [&](int rank, std::shared_ptr<InprocWorld> world) {
    Runtime rt(thread_options(rank, std::move(world)));
    rt.init("a=inproc");
    for (int i = 0; i < 100; ++i) {
      handles[rank].push_back(rt.all_reduce("a", Buffer(DType::f32, 8), ReduceOp::sum, true));
    }
    rt.finalize();
  });
  for (const auto& list : handles) {
    for (const auto& h : list) EXPECT_EQ(h.status(), WorkStatus::complete);
  }
}

TEST(Work, UnobservedFailureSurfacesAtSynchronize) {
  with_ranks(2, "a=inproc", [](Runtime& rt) {
    const int rank = rt.get_rank("a");
    // Different sizes at the same position: both ranks fail, nobody waits.
    rt.all_reduce("a", Buffer(DType::f32, rank == 0 ? 2 : 3), ReduceOp::sum, true);
    EXPECT_EQ(kind_of([&] { rt.synchronize(); }), ErrorKind::order_mismatch);
    rt.synchronize();  // reported once
  });
}

TEST(Work, EventsOrderTheLane) {
  with_ranks(2, "a=inproc:alpha=5ms", [](Runtime& rt) {
    auto& b = rt.backend("a");
    auto h1 = rt.all_reduce("a", Buffer(DType::f32, 1), ReduceOp::sum, true);
    const auto ev = b.record_event();
    auto h2 = rt.all_reduce("a", Buffer(DType::f32, 1), ReduceOp::sum, true);
    ev.wait();
    EXPECT_TRUE(h1.test());
    h2.wait();
    EXPECT_TRUE(ev.satisfied());
  });
}

// --- dispatch through "auto" ------------------------------------------------

TEST(Auto, RoutesByTable) {
  with_ranks(2, "small=inproc,big=inproc", [](Runtime& rt) {
    TuningTable t;
    t.tables[CommOpKind::all_reduce][2] = {{1024, BackendId("small")}, {4096, BackendId("big")}};
    rt.set_tuning_table(t);
    auto small = Buffer(DType::f32, 16);
    auto big = Buffer(DType::f32, 4096);
    auto hs = rt.all_reduce("auto", small, ReduceOp::sum, true);
    auto hb = rt.all_reduce("auto", big, ReduceOp::sum, true);
    hs.wait();
    hb.wait();
    EXPECT_EQ(hs.backend().str(), "small");
    EXPECT_EQ(hb.backend().str(), "big");
    // No table entry for bcast: the first registered backend.
    EXPECT_EQ(rt.bcast("auto", Buffer(DType::u8, 1), 0).backend().str(), "small");
  });
}

TEST(Auto, FallsBackWithoutTable) {
  Runtime rt;
  rt.init("first,second");
  EXPECT_EQ(rt.all_reduce("auto", Buffer(DType::f32, 1)).backend().str(), "first");
  rt.finalize();
}

}  // namespace
}  // namespace mcrdl
