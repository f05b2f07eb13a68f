// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <numeric>
#include <string>
#include <utility>

#include "mcrdl/error.hpp"
#include "mcrdl/request.hpp"

namespace mcrdl {
namespace {

[[noreturn]] void reject(std::string field, std::string reason) {
  throw ValidationError(std::move(field), std::move(reason));
}

void expect_absent(bool present, const char* field, CommOpKind kind) {
  if (present) reject(field, "not used by " + std::string(to_string(kind)));
}

void expect_buffers(const std::vector<Buffer>& list, std::size_t n, const char* field) {
  if (list.size() != n) {
    reject(field, "expected " + std::to_string(n) + " buffer(s), got " + std::to_string(list.size()));
  }
}

void expect_count(const Buffer& b, std::size_t n, const char* field) {
  if (b.count() != n) reject(field, "expected " + std::to_string(n));
}

const Counts& expect_list(const std::optional<Counts>& list, int world, const char* field) {
  if (!list) reject(field, "required");
  if (list->size() != static_cast<std::size_t>(world)) {
    reject(field, "expected " + std::to_string(world) + " entries");
  }
  return *list;
}

// Segments [displs[i], displs[i]+counts[i]) must fit in `extent` elements and
// not overlap. With `packed`, they must also exactly cover it.
void check_segments(const Counts& counts, const Counts& displs, std::size_t extent,
                    bool packed, const char* buffer_field, const char* displs_field) {
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (displs[i] + counts[i] > extent || displs[i] > extent) {
      reject(displs_field, "segment " + std::to_string(i) + " exceeds buffer of " +
                               std::to_string(extent));
    }
    if (counts[i] != 0) spans.emplace_back(displs[i], counts[i]);
  }
  std::sort(spans.begin(), spans.end());
  for (std::size_t i = 1; i < spans.size(); ++i) {
    if (spans[i - 1].first + spans[i - 1].second > spans[i].first) {
      reject(displs_field, "segments overlap");
    }
  }
  if (packed) {
    const std::size_t total = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
    if (total != extent) reject(buffer_field, "expected " + std::to_string(total));
  }
}

int expect_rank(const std::optional<int>& value, int world, const char* field, ErrorKind kind) {
  if (!value) throw ValidationError(field, "required", kind);
  if (*value < 0 || *value >= world) {
    throw ValidationError(field, std::to_string(*value) + " outside [0, " + std::to_string(world) + ")",
                          kind);
  }
  return *value;
}

}  // namespace

void validate(const CommRequest& req, int world, int rank) {
  if (world <= 0) reject("world_size", "must be positive");
  if (rank < 0 || rank >= world) reject("rank", "outside world");

  const CommOpKind kind = req.kind;
  const auto p = static_cast<std::size_t>(world);

  // Presence of optional fields.
  expect_absent(req.root && !is_rooted(kind), "root", kind);
  expect_absent(req.peer && is_collective(kind), "peer", kind);
  if (is_reduction(kind)) {
    if (!req.op) reject("op", "required");
  } else {
    expect_absent(req.op.has_value(), "op", kind);
  }
  const bool takes_rcounts = kind == CommOpKind::gatherv || kind == CommOpKind::all_gatherv ||
                             kind == CommOpKind::all_to_allv;
  const bool takes_scounts = kind == CommOpKind::scatterv || kind == CommOpKind::all_to_allv;
  const bool takes_displs = kind == CommOpKind::gatherv || kind == CommOpKind::all_gatherv ||
                            kind == CommOpKind::scatterv;
  expect_absent(req.rcounts && !takes_rcounts, "rcounts", kind);
  expect_absent(req.scounts && !takes_scounts, "scounts", kind);
  expect_absent(req.displs && !takes_displs, "displs", kind);
  expect_absent(req.sdispls && kind != CommOpKind::all_to_allv, "sdispls", kind);
  expect_absent(req.rdispls && kind != CommOpKind::all_to_allv, "rdispls", kind);

  // All buffers share one dtype.
  const DType dtype = req.dtype();
  for (const auto* list : {&req.inputs, &req.outputs}) {
    for (const auto& b : *list) {
      if (b.dtype() != dtype) reject("dtype", "buffers disagree on element type");
    }
  }

  switch (kind) {
    case CommOpKind::send:
    case CommOpKind::recv: {
      const int peer = expect_rank(req.peer, world, "peer", ErrorKind::invalid_destination);
      if (peer == rank) {
        throw ValidationError("peer", "cannot target self", ErrorKind::invalid_destination);
      }
      if (kind == CommOpKind::send) {
        expect_buffers(req.inputs, 1, "input");
        expect_buffers(req.outputs, 0, "output");
      } else {
        expect_buffers(req.inputs, 0, "input");
        expect_buffers(req.outputs, 1, "output");
      }
      break;
    }
    case CommOpKind::bcast:
      expect_rank(req.root, world, "root", ErrorKind::invalid_root);
      expect_buffers(req.inputs, 0, "input");
      expect_buffers(req.outputs, 1, "output");
      break;
    case CommOpKind::all_reduce:
      expect_buffers(req.inputs, 1, "input");
      expect_buffers(req.outputs, 1, "output");
      expect_count(req.outputs[0], req.inputs[0].count(), "output");
      break;
    case CommOpKind::reduce: {
      const int root = expect_rank(req.root, world, "root", ErrorKind::invalid_root);
      expect_buffers(req.inputs, 1, "input");
      if (rank == root) expect_buffers(req.outputs, 1, "output");
      if (req.outputs.size() > 1) expect_buffers(req.outputs, 1, "output");
      if (!req.outputs.empty()) expect_count(req.outputs[0], req.inputs[0].count(), "output");
      break;
    }
    case CommOpKind::gather: {
      const int root = expect_rank(req.root, world, "root", ErrorKind::invalid_root);
      expect_buffers(req.inputs, 1, "input");
      if (rank == root) expect_buffers(req.outputs, 1, "output");
      if (req.outputs.size() > 1) expect_buffers(req.outputs, 1, "output");
      if (!req.outputs.empty()) expect_count(req.outputs[0], p * req.inputs[0].count(), "output");
      break;
    }
    case CommOpKind::gatherv: {
      const int root = expect_rank(req.root, world, "root", ErrorKind::invalid_root);
      const auto& rcounts = expect_list(req.rcounts, world, "rcounts");
      const auto& displs = expect_list(req.displs, world, "displs");
      expect_buffers(req.inputs, 1, "input");
      expect_count(req.inputs[0], rcounts[rank], "input");
      if (rank == root) expect_buffers(req.outputs, 1, "output");
      if (req.outputs.size() > 1) expect_buffers(req.outputs, 1, "output");
      if (!req.outputs.empty()) {
        check_segments(rcounts, displs, req.outputs[0].count(), true, "output", "displs");
      }
      break;
    }
    case CommOpKind::scatter: {
      const int root = expect_rank(req.root, world, "root", ErrorKind::invalid_root);
      expect_buffers(req.outputs, 1, "output");
      if (rank == root) expect_buffers(req.inputs, 1, "input");
      if (req.inputs.size() > 1) expect_buffers(req.inputs, 1, "input");
      if (!req.inputs.empty()) expect_count(req.inputs[0], p * req.outputs[0].count(), "input");
      break;
    }
    case CommOpKind::scatterv: {
      const int root = expect_rank(req.root, world, "root", ErrorKind::invalid_root);
      const auto& scounts = expect_list(req.scounts, world, "scounts");
      const auto& displs = expect_list(req.displs, world, "displs");
      expect_buffers(req.outputs, 1, "output");
      expect_count(req.outputs[0], scounts[rank], "output");
      if (rank == root) expect_buffers(req.inputs, 1, "input");
      if (req.inputs.size() > 1) expect_buffers(req.inputs, 1, "input");
      if (!req.inputs.empty()) {
        check_segments(scounts, displs, req.inputs[0].count(), true, "input", "displs");
      }
      break;
    }
    case CommOpKind::all_gather:
      expect_buffers(req.inputs, 1, "input");
      expect_buffers(req.outputs, 1, "output");
      expect_count(req.outputs[0], p * req.inputs[0].count(), "output");
      break;
    case CommOpKind::all_gatherv: {
      const auto& rcounts = expect_list(req.rcounts, world, "rcounts");
      const auto& displs = expect_list(req.displs, world, "displs");
      expect_buffers(req.inputs, 1, "input");
      expect_buffers(req.outputs, 1, "output");
      expect_count(req.inputs[0], rcounts[rank], "input");
      check_segments(rcounts, displs, req.outputs[0].count(), true, "output", "displs");
      break;
    }
    case CommOpKind::reduce_scatter:
      expect_buffers(req.inputs, 1, "input");
      expect_buffers(req.outputs, 1, "output");
      expect_count(req.inputs[0], p * req.outputs[0].count(), "input");
      break;
    case CommOpKind::all_to_all_single:
      expect_buffers(req.inputs, 1, "input");
      expect_buffers(req.outputs, 1, "output");
      if (req.inputs[0].count() % p != 0) {
        reject("input", "count " + std::to_string(req.inputs[0].count()) +
                            " not divisible by world size " + std::to_string(world));
      }
      expect_count(req.outputs[0], req.inputs[0].count(), "output");
      break;
    case CommOpKind::all_to_all:
      expect_buffers(req.inputs, p, "inputs");
      expect_buffers(req.outputs, p, "outputs");
      expect_count(req.outputs[rank], req.inputs[rank].count(), "outputs");
      break;
    case CommOpKind::all_to_allv: {
      const auto& scounts = expect_list(req.scounts, world, "scounts");
      const auto& rcounts = expect_list(req.rcounts, world, "rcounts");
      const auto& sdispls = expect_list(req.sdispls, world, "sdispls");
      const auto& rdispls = expect_list(req.rdispls, world, "rdispls");
      expect_buffers(req.inputs, 1, "input");
      expect_buffers(req.outputs, 1, "output");
      check_segments(scounts, sdispls, req.inputs[0].count(), false, "input", "sdispls");
      check_segments(rcounts, rdispls, req.outputs[0].count(), false, "output", "rdispls");
      if (scounts[rank] != rcounts[rank]) {
        reject("rcounts", "self segment disagrees with scounts");
      }
      break;
    }
  }
}

}  // namespace mcrdl
