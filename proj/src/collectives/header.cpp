// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstring>
#include <string>

#include "mcrdl/collectives.hpp"
#include "mcrdl/error.hpp"
#include "transport/wire_io.hpp"

namespace mcrdl::collectives {

void Context::send(int dst, std::span<const std::byte> bytes) {
  if (bytes.empty()) return;  // both sides know the size; nothing to move
  transport_.send(dst, FrameKind::payload, seq_, bytes);
}

void Context::recv(int src, std::span<std::byte> out) {
  if (out.empty()) return;
  Frame f = transport_.recv(src, deadline_);
  if (f.kind != FrameKind::payload || f.seq != seq_) {
    throw Error(ErrorKind::order_mismatch,
                "rank " + std::to_string(rank()) + " expected data of operation " +
                    std::to_string(seq_) + " from rank " + std::to_string(src) + ", got " +
                    (f.kind == FrameKind::payload ? "operation " + std::to_string(f.seq)
                                                  : std::string("a control frame")));
  }
  if (f.payload.size() != out.size()) {
    throw Error(ErrorKind::length_mismatch,
                "expected " + std::to_string(out.size()) + " bytes from rank " +
                    std::to_string(src) + ", frame carries " + std::to_string(f.payload.size()));
  }
  std::memcpy(out.data(), f.payload.data(), out.size());
}

namespace {

void put_list(detail::ByteWriter& w, const std::vector<std::uint64_t>& v) {
  w.u32(static_cast<std::uint32_t>(v.size()));
  for (auto x : v) w.u64(x);
}

std::vector<std::uint64_t> get_list(detail::ByteReader& r) {
  const auto n = r.u32();
  std::vector<std::uint64_t> v;
  v.reserve(std::min<std::uint32_t>(n, 1u << 16));
  for (std::uint32_t i = 0; i < n; ++i) v.push_back(r.u64());
  return v;
}

std::vector<std::uint64_t> widen(const Counts& c) { return {c.begin(), c.end()}; }

}  // namespace

std::vector<std::byte> encode(const CollectiveHeader& h) {
  detail::ByteWriter w;
  w.u64(h.coll_seq);
  w.u8(static_cast<std::uint8_t>(h.kind));
  w.u8(static_cast<std::uint8_t>(h.dtype));
  w.u8(h.op);
  w.u32(static_cast<std::uint32_t>(h.root));
  w.u8(h.codec);
  w.u64(h.global_count);
  w.i64(h.uniform_block);
  put_list(w, h.send_counts);
  put_list(w, h.recv_counts);
  put_list(w, h.fused_counts);
  return w.take();
}

CollectiveHeader decode_header(std::span<const std::byte> bytes) {
  detail::ByteReader r(bytes);
  CollectiveHeader h;
  h.coll_seq = r.u64();
  const auto kind = r.u8();
  const auto dtype = r.u8();
  if (kind >= kNumOpKinds || dtype > static_cast<std::uint8_t>(DType::u8)) {
    throw Error(ErrorKind::serialization, "bad collective header");
  }
  h.kind = static_cast<CommOpKind>(kind);
  h.dtype = static_cast<DType>(dtype);
  h.op = r.u8();
  h.root = static_cast<std::int32_t>(r.u32());
  h.codec = r.u8();
  h.global_count = r.u64();
  h.uniform_block = r.i64();
  h.send_counts = get_list(r);
  h.recv_counts = get_list(r);
  h.fused_counts = get_list(r);
  r.expect_end();
  return h;
}

CollectiveHeader describe(const CommRequest& req, int rank, int world, std::uint64_t coll_seq,
                          std::uint8_t codec) {
  CollectiveHeader h;
  h.coll_seq = coll_seq;
  h.kind = req.kind;
  h.dtype = req.dtype();
  h.op = req.op ? static_cast<std::uint8_t>(*req.op) : 0xff;
  h.root = req.root.value_or(-1);
  h.codec = codec;
  const auto p = static_cast<std::size_t>(world);
  auto in_count = [&] { return req.inputs.empty() ? std::size_t{0} : req.inputs[0].count(); };
  auto out_count = [&] { return req.outputs.empty() ? std::size_t{0} : req.outputs[0].count(); };
  switch (req.kind) {
    case CommOpKind::send:
    case CommOpKind::recv:
      break;
    case CommOpKind::bcast:
      h.global_count = out_count();
      break;
    case CommOpKind::all_reduce:
    case CommOpKind::reduce:
    case CommOpKind::gather:
    case CommOpKind::all_gather:
      h.global_count = in_count();
      break;
    case CommOpKind::scatter:
    case CommOpKind::reduce_scatter:
      h.global_count = out_count();
      break;
    case CommOpKind::all_to_all_single:
      h.global_count = in_count();
      h.uniform_block = static_cast<std::int64_t>(in_count() / p);
      break;
    case CommOpKind::gatherv:
      h.send_counts.assign(p, 0);
      h.recv_counts.assign(p, 0);
      h.send_counts[static_cast<std::size_t>(*req.root)] = in_count();
      if (rank == *req.root) h.recv_counts = widen(*req.rcounts);
      break;
    case CommOpKind::scatterv:
      h.send_counts.assign(p, 0);
      h.recv_counts.assign(p, 0);
      h.recv_counts[static_cast<std::size_t>(*req.root)] = out_count();
      if (rank == *req.root) h.send_counts = widen(*req.scounts);
      break;
    case CommOpKind::all_gatherv:
      h.send_counts.assign(p, in_count());
      h.recv_counts = widen(*req.rcounts);
      break;
    case CommOpKind::all_to_all: {
      h.send_counts.resize(p);
      h.recv_counts.resize(p);
      bool uniform = true;
      for (std::size_t j = 0; j < p; ++j) {
        h.send_counts[j] = req.inputs[j].count();
        h.recv_counts[j] = req.outputs[j].count();
        uniform = uniform && h.send_counts[j] == h.send_counts[0] &&
                  h.recv_counts[j] == h.send_counts[0];
      }
      if (uniform) h.uniform_block = static_cast<std::int64_t>(h.send_counts[0]);
      break;
    }
    case CommOpKind::all_to_allv:
      h.send_counts = widen(*req.scounts);
      h.recv_counts = widen(*req.rcounts);
      break;
  }
  return h;
}

std::vector<CollectiveHeader> exchange_headers(Context& ctx, const CollectiveHeader& mine) {
  const int p = ctx.size();
  const int me = ctx.rank();
  const auto bytes = encode(mine);
  for (int j = 0; j < p; ++j) {
    if (j != me) ctx.transport().send(j, FrameKind::header, mine.coll_seq, bytes);
  }
  std::vector<CollectiveHeader> headers(static_cast<std::size_t>(p));
  headers[static_cast<std::size_t>(me)] = mine;
  std::optional<Error> problem;
  for (int j = 0; j < p; ++j) {
    if (j == me) continue;
    Frame f = ctx.transport().recv(j, ctx.deadline());
    if (f.kind != FrameKind::header) {
      // The peer is running a point-to-point operation or is further ahead.
      if (!problem) {
        problem.emplace(ErrorKind::order_mismatch,
                        "rank " + std::to_string(j) + " sent data where rank " +
                            std::to_string(me) + " expected the header of " +
                            std::string(to_string(mine.kind)) + " #" +
                            std::to_string(mine.coll_seq));
      }
      continue;
    }
    headers[static_cast<std::size_t>(j)] = decode_header(f.payload);
  }
  if (problem) throw *problem;
  return headers;
}

namespace {

std::string label(const CollectiveHeader& h) {
  return std::string(to_string(h.kind)) + " #" + std::to_string(h.coll_seq);
}

}  // namespace

Agreement check_agreement(const std::vector<CollectiveHeader>& headers, int rank) {
  const auto& mine = headers[static_cast<std::size_t>(rank)];
  auto mismatch = [&](int j, const std::string& what) {
    return Error(ErrorKind::order_mismatch,
                 "rank " + std::to_string(rank) + " posted " + label(mine) + ", rank " +
                     std::to_string(j) + " posted " + label(headers[static_cast<std::size_t>(j)]) +
                     " (" + what + ")");
  };
  Agreement agreement;
  agreement.uniform_blocks = mine.uniform_block >= 0;
  agreement.fused_members = mine.fused_counts.size();
  bool codec_differs = false;
  for (std::size_t jj = 0; jj < headers.size(); ++jj) {
    const int j = static_cast<int>(jj);
    if (j == rank) continue;
    const auto& h = headers[jj];
    if (h.coll_seq != mine.coll_seq || h.kind != mine.kind) throw mismatch(j, "operation differs");
    if (h.dtype != mine.dtype) throw mismatch(j, "element type differs");
    if (h.op != mine.op) throw mismatch(j, "reduce op differs");
    if (h.root != mine.root) throw mismatch(j, "root differs");
    if (h.fused_counts.empty() != mine.fused_counts.empty()) throw mismatch(j, "fusion differs");
    if (mine.fused_counts.empty()) {
      if (h.global_count != mine.global_count) throw mismatch(j, "element count differs");
    } else {
      const auto k = std::min(h.fused_counts.size(), mine.fused_counts.size());
      if (!std::equal(h.fused_counts.begin(), h.fused_counts.begin() + static_cast<std::ptrdiff_t>(k),
                      mine.fused_counts.begin())) {
        throw mismatch(j, "fused member counts differ");
      }
      agreement.fused_members = std::min(agreement.fused_members, k);
    }
    if (!mine.send_counts.empty() || !h.send_counts.empty()) {
      if (h.send_counts.size() != headers.size() || h.recv_counts.size() != headers.size() ||
          mine.send_counts.size() != headers.size() || mine.recv_counts.size() != headers.size()) {
        throw mismatch(j, "count lists differ");
      }
      const auto me = static_cast<std::size_t>(rank);
      if (h.send_counts[me] != mine.recv_counts[jj]) {
        throw mismatch(j, "rank " + std::to_string(j) + " sends " + std::to_string(h.send_counts[me]) +
                              " elements, " + std::to_string(mine.recv_counts[jj]) + " expected");
      }
      if (h.recv_counts[me] != mine.send_counts[jj]) {
        throw mismatch(j, "rank " + std::to_string(j) + " expects " +
                              std::to_string(h.recv_counts[me]) + " elements, " +
                              std::to_string(mine.send_counts[jj]) + " sent");
      }
    }
    if (h.uniform_block != mine.uniform_block) agreement.uniform_blocks = false;
    if (h.codec != mine.codec) codec_differs = true;
  }
  if (codec_differs) {
    throw Error(ErrorKind::codec_mismatch,
                "ranks disagree on the payload codec for " + label(mine));
  }
  return agreement;
}

}  // namespace mcrdl::collectives
