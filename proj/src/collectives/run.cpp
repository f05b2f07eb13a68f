// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cstring>
#include <vector>

#include "mcrdl/collectives.hpp"
#include "mcrdl/error.hpp"

namespace mcrdl::collectives {
namespace {

using MutSegs = std::vector<std::span<std::byte>>;
using ConstSegs = std::vector<std::span<const std::byte>>;

template <typename Span>
std::vector<Span> uniform(Span whole, std::size_t block, int p) {
  std::vector<Span> out;
  for (int i = 0; i < p; ++i) out.push_back(whole.subspan(static_cast<std::size_t>(i) * block, block));
  return out;
}

template <typename Span>
std::vector<Span> vectored(Span whole, const Counts& counts, const Counts& displs, std::size_t esz) {
  std::vector<Span> out;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out.push_back(whole.subspan(displs[i] * esz, counts[i] * esz));
  }
  return out;
}

std::span<std::byte> bytes_of(const Buffer& b) { return b.raw_bytes(); }

// In-place copy of the input into the output, unless they share storage.
void seed(const Buffer& in, const Buffer& out) {
  if (!in.shares_storage_with(out) && in.size_bytes() != 0) {
    std::memcpy(out.raw_bytes().data(), in.raw_bytes().data(), in.size_bytes());
  }
}

}  // namespace

void run(Context& ctx, const AlgorithmPolicy& policy, const CommRequest& req,
         const Agreement& agreement) {
  const int p = ctx.size();
  const int r = ctx.rank();
  const auto esz = size_bytes(req.dtype());
  const Algorithm algo = policy.get(req.kind);

  switch (req.kind) {
    case CommOpKind::send:
      ctx.transport().send(*req.peer, FrameKind::payload, ctx.seq(), bytes_of(req.inputs[0]));
      return;
    case CommOpKind::recv: {
      auto out = bytes_of(req.outputs[0]);
      auto data = p2p_recv(ctx.transport(), *req.peer, out.size(), ctx.deadline());
      if (!data.empty()) std::memcpy(out.data(), data.data(), data.size());
      return;
    }
    case CommOpKind::bcast:
      bcast(ctx, algo, *req.root, bytes_of(req.outputs[0]));
      return;
    case CommOpKind::all_reduce:
      seed(req.inputs[0], req.outputs[0]);
      all_reduce(ctx, algo, req.dtype(), *req.op, bytes_of(req.outputs[0]));
      return;
    case CommOpKind::reduce: {
      if (r == *req.root) {
        seed(req.inputs[0], req.outputs[0]);
        reduce(ctx, algo, req.dtype(), *req.op, *req.root, bytes_of(req.outputs[0]));
      } else {
        Buffer scratch = req.inputs[0].clone();
        reduce(ctx, algo, req.dtype(), *req.op, *req.root, scratch.raw_bytes());
      }
      return;
    }
    case CommOpKind::gather:
    case CommOpKind::gatherv: {
      MutSegs out;
      if (r == *req.root) {
        out = req.kind == CommOpKind::gather
                  ? uniform(bytes_of(req.outputs[0]), req.inputs[0].size_bytes(), p)
                  : vectored(bytes_of(req.outputs[0]), *req.rcounts, *req.displs, esz);
      }
      gather(ctx, req.kind == CommOpKind::gather ? algo : Algorithm::linear, *req.root,
             bytes_of(req.inputs[0]), out);
      return;
    }
    case CommOpKind::scatter:
    case CommOpKind::scatterv: {
      ConstSegs in;
      if (r == *req.root) {
        std::span<const std::byte> whole = bytes_of(req.inputs[0]);
        in = req.kind == CommOpKind::scatter
                 ? uniform(whole, req.outputs[0].size_bytes(), p)
                 : vectored(whole, *req.scounts, *req.displs, esz);
      }
      scatter(ctx, req.kind == CommOpKind::scatter ? algo : Algorithm::linear, *req.root, in,
              bytes_of(req.outputs[0]));
      return;
    }
    case CommOpKind::all_gather:
    case CommOpKind::all_gatherv: {
      const MutSegs out =
          req.kind == CommOpKind::all_gather
              ? uniform(bytes_of(req.outputs[0]), req.inputs[0].size_bytes(), p)
              : vectored(bytes_of(req.outputs[0]), *req.rcounts, *req.displs, esz);
      all_gather(ctx, algo, bytes_of(req.inputs[0]), out);
      return;
    }
    case CommOpKind::reduce_scatter:
      reduce_scatter(ctx, algo, req.dtype(), *req.op, bytes_of(req.inputs[0]),
                     bytes_of(req.outputs[0]));
      return;
    case CommOpKind::all_to_all_single: {
      const auto block = req.inputs[0].size_bytes() / static_cast<std::size_t>(p);
      std::span<const std::byte> in = bytes_of(req.inputs[0]);
      // Output may alias input; stage the send side.
      std::vector<std::byte> staged;
      if (req.inputs[0].shares_storage_with(req.outputs[0])) {
        staged.assign(in.begin(), in.end());
        in = staged;
      }
      all_to_all(ctx, algo, uniform(in, block, p), uniform(bytes_of(req.outputs[0]), block, p),
                 agreement.uniform_blocks);
      return;
    }
    case CommOpKind::all_to_all: {
      ConstSegs in;
      MutSegs out;
      for (int j = 0; j < p; ++j) {
        in.push_back(bytes_of(req.inputs[static_cast<std::size_t>(j)]));
        out.push_back(bytes_of(req.outputs[static_cast<std::size_t>(j)]));
      }
      all_to_all(ctx, algo, in, out, agreement.uniform_blocks);
      return;
    }
    case CommOpKind::all_to_allv: {
      std::span<const std::byte> in = bytes_of(req.inputs[0]);
      std::vector<std::byte> staged;
      if (req.inputs[0].shares_storage_with(req.outputs[0])) {
        staged.assign(in.begin(), in.end());
        in = staged;
      }
      all_to_all(ctx, algo, vectored(in, *req.scounts, *req.sdispls, esz),
                 vectored(bytes_of(req.outputs[0]), *req.rcounts, *req.rdispls, esz), false);
      return;
    }
  }
}

}  // namespace mcrdl::collectives
