// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <thread>

#include "mcrdl/error.hpp"
#include "mcrdl/request.hpp"
#include "mcrdl/work.hpp"

namespace mcrdl {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::usage;
}

CommRequest all_reduce_of(std::size_t in, std::size_t out) {
  CommRequest r;
  r.kind = CommOpKind::all_reduce;
  r.inputs = {Buffer(DType::f32, in)};
  r.outputs = {Buffer(DType::f32, out)};
  r.op = ReduceOp::sum;
  return r;
}

TEST(BackendId, NamesAreValidated) {
  EXPECT_TRUE(BackendId::is_valid_name("nccl-like"));
  EXPECT_TRUE(BackendId::is_valid_name("mv2_gdr2"));
  EXPECT_FALSE(BackendId::is_valid_name(""));
  EXPECT_FALSE(BackendId::is_valid_name("2x"));
  EXPECT_FALSE(BackendId::is_valid_name("Upper"));
  EXPECT_TRUE(BackendId::automatic().is_auto());
}

TEST(OpKind, NamesRoundTrip) {
  for (auto k : kAllOpKinds) EXPECT_EQ(parse_op_kind(to_string(k)), k);
  EXPECT_FALSE(parse_op_kind("allreduce_x").has_value());
  EXPECT_FALSE(is_collective(CommOpKind::send));
  EXPECT_TRUE(is_rooted(CommOpKind::scatterv));
  EXPECT_TRUE(is_reduction(CommOpKind::reduce_scatter));
  EXPECT_TRUE(is_vectored(CommOpKind::all_to_allv));
}

TEST(Reduce, IntegerSumWraps) {
  EXPECT_EQ(element_reduce<std::int32_t>(INT32_MAX, 1, ReduceOp::sum), INT32_MIN);
  EXPECT_EQ(element_reduce<std::uint8_t>(200, 100, ReduceOp::sum), 44);
  EXPECT_EQ(element_reduce<std::uint8_t>(16, 16, ReduceOp::prod), 0);
  EXPECT_EQ(element_reduce(3.0f, -1.0f, ReduceOp::min), -1.0f);
  EXPECT_EQ(element_reduce(3.0, reduce_identity<double>(ReduceOp::max), ReduceOp::max), 3.0);
}

TEST(Buffer, CopiesAliasAndClonesDoNot) {
  auto a = Buffer::from<float>({1, 2, 3});
  auto alias = a;
  auto copy = a.clone();
  alias.as<float>()[0] = 9;
  EXPECT_EQ(a.to_vector<float>()[0], 9);
  EXPECT_EQ(copy.to_vector<float>()[0], 1);
  EXPECT_TRUE(a.shares_storage_with(alias));
  EXPECT_FALSE(a.shares_storage_with(copy));
  EXPECT_THROW(a.as<std::int64_t>(), std::logic_error);
}

TEST(Validate, RejectsMalformedRequests) {
  EXPECT_NO_THROW(validate(all_reduce_of(4, 4), 2));
  EXPECT_EQ(kind_of([] { validate(all_reduce_of(4, 5), 2); }), ErrorKind::validation);

  CommRequest bc;
  bc.kind = CommOpKind::bcast;
  bc.outputs = {Buffer(DType::f32, 3)};
  bc.root = 4;
  EXPECT_EQ(kind_of([&] { validate(bc, 4); }), ErrorKind::invalid_root);

  CommRequest s;
  s.kind = CommOpKind::send;
  s.inputs = {Buffer(DType::f32, 3)};
  s.peer = 1;
  EXPECT_EQ(kind_of([&] { validate(s, 2, 1); }), ErrorKind::invalid_destination);
  s.peer = 2;
  EXPECT_EQ(kind_of([&] { validate(s, 2, 0); }), ErrorKind::invalid_destination);

  CommRequest a2a;
  a2a.kind = CommOpKind::all_to_all_single;
  a2a.inputs = {Buffer(DType::i64, 7)};
  a2a.outputs = {Buffer(DType::i64, 7)};
  EXPECT_EQ(kind_of([&] { validate(a2a, 2); }), ErrorKind::validation);

  CommRequest gv;
  gv.kind = CommOpKind::all_gatherv;
  gv.inputs = {Buffer(DType::f32, 2)};
  gv.outputs = {Buffer(DType::f32, 4)};
  gv.rcounts = Counts{2, 2};
  gv.displs = Counts{0, 1};
  EXPECT_EQ(kind_of([&] { validate(gv, 2); }), ErrorKind::validation);
  gv.displs = Counts{2, 0};
  EXPECT_NO_THROW(validate(gv, 2));

  auto mixed = all_reduce_of(2, 2);
  mixed.outputs = {Buffer(DType::i64, 2)};
  EXPECT_EQ(kind_of([&] { validate(mixed, 2); }), ErrorKind::validation);
}

TEST(Validate, ZeroCountSegmentsAreLegal) {
  CommRequest v;
  v.kind = CommOpKind::all_to_allv;
  v.inputs = {Buffer(DType::i64, 3)};
  v.outputs = {Buffer(DType::i64, 0)};
  v.scounts = Counts{0, 3};
  v.rcounts = Counts{0, 0};
  v.sdispls = Counts{0, 0};
  v.rdispls = Counts{0, 0};
  EXPECT_NO_THROW(validate(v, 2, 0));
}

TEST(MessageBytes, CanonicalSizes) {
  EXPECT_EQ(message_bytes(all_reduce_of(1000, 1000), 4), 4000u);

  CommRequest v;
  v.kind = CommOpKind::all_to_allv;
  v.inputs = {Buffer(DType::i64, 6)};
  v.outputs = {Buffer(DType::i64, 6)};
  v.scounts = Counts{1, 2, 3};
  v.rcounts = Counts{1, 2, 3};
  EXPECT_EQ(message_bytes(v, 3), 48u);

  CommRequest a2a;
  a2a.kind = CommOpKind::all_to_all;
  for (int i = 0; i < 4; ++i) {
    a2a.inputs.push_back(Buffer(DType::f32, 10));
    a2a.outputs.push_back(Buffer(DType::f32, 10));
  }
  EXPECT_EQ(message_bytes(a2a, 4), 160u);

  CommRequest sc;
  sc.kind = CommOpKind::scatter;
  sc.outputs = {Buffer(DType::f32, 5)};
  sc.root = 0;
  EXPECT_EQ(message_bytes(sc, 4), 80u);  // root's input, also on non-roots
}

TEST(Work, WaitRethrowsAndTestNeverBlocks) {
  auto state = std::make_shared<detail::WorkState>(1, BackendId("x"));
  WorkHandle h(state);
  EXPECT_FALSE(h.test());
  std::thread t([&] {
    state->start();
    state->fail(std::make_exception_ptr(Error(ErrorKind::timeout, "late")));
  });
  EXPECT_THROW(h.wait(), Error);
  t.join();
  EXPECT_TRUE(h.test());
  EXPECT_EQ(h.status(), WorkStatus::failed);
  EXPECT_TRUE(state->observed());
}

TEST(Work, CompletionEventTracksLane) {
  auto lane = std::make_shared<detail::LaneProgress>();
  lane->add_posted();
  lane->add_posted();
  CompletionEvent e(lane, lane->posted());
  EXPECT_FALSE(e.satisfied());
  lane->add_completed(1);
  EXPECT_FALSE(e.wait_until(Clock::now() + std::chrono::milliseconds(5)));
  lane->add_completed(1);
  EXPECT_TRUE(e.satisfied());
  lane->add_posted();
  EXPECT_TRUE(e.satisfied());  // later posts do not revert it
}

}  // namespace
}  // namespace mcrdl
