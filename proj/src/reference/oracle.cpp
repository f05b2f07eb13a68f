// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "mcrdl/error.hpp"
#include "mcrdl/reference.hpp"

namespace mcrdl::reference {
namespace {

using Bytes = std::span<const std::byte>;

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

template <typename F>
decltype(auto) visit(DType dtype, F&& f) {
  switch (dtype) {
    case DType::f32: return f(float{});
    case DType::f64: return f(double{});
    case DType::i32: return f(std::int32_t{});
    case DType::i64: return f(std::int64_t{});
    case DType::u8: return f(std::uint8_t{});
  }
  return f(float{});
}

// Fold the inputs in rank order.
std::vector<std::byte> fold(DType dtype, ReduceOp op, const std::vector<Bytes>& inputs) {
  std::vector<std::byte> acc(inputs.front().begin(), inputs.front().end());
  visit(dtype, [&](auto zero) {
    using T = decltype(zero);
    const std::size_t n = acc.size() / sizeof(T);
    for (std::size_t r = 1; r < inputs.size(); ++r) {
      for (std::size_t i = 0; i < n; ++i) {
        T a;
        T b;
        std::memcpy(&a, acc.data() + i * sizeof(T), sizeof(T));
        std::memcpy(&b, inputs[r].data() + i * sizeof(T), sizeof(T));
        a = element_reduce(a, b, op);
        std::memcpy(acc.data() + i * sizeof(T), &a, sizeof(T));
      }
    }
    return 0;
  });
  return acc;
}

void put(Buffer& out, std::size_t at_elems, Bytes src) {
  if (src.empty()) return;
  const auto esz = size_bytes(out.dtype());
  std::memcpy(out.raw_bytes().data() + at_elems * esz, src.data(), src.size());
}

Bytes slice(const Buffer& b, std::size_t at_elems, std::size_t count) {
  const auto esz = size_bytes(b.dtype());
  return b.raw_bytes().subspan(at_elems * esz, count * esz);
}

Bytes all(const Buffer& b) { return b.raw_bytes(); }

}  // namespace

std::vector<std::vector<Buffer>> expected(const std::vector<CommRequest>& reqs) {
  const int p = static_cast<int>(reqs.size());
  if (p == 0) return {};
  const auto P = static_cast<std::size_t>(p);
  const auto& first = reqs.front();
  const CommOpKind kind = first.kind;
  const DType dtype = first.dtype();

  std::vector<std::vector<Buffer>> out(P);
  for (int r = 0; r < p; ++r) {
    for (const auto& b : reqs[r].outputs) out[r].push_back(b.clone());
  }
  const int root = first.root.value_or(0);

  auto inputs = [&] {
    std::vector<Bytes> v;
    for (const auto& q : reqs) v.push_back(all(q.inputs.at(0)));
    return v;
  };

  switch (kind) {
    case CommOpKind::send:
    case CommOpKind::recv:
      throw Error(ErrorKind::usage, "the oracle covers collectives only");
    case CommOpKind::bcast:
      for (int r = 0; r < p; ++r) put(out[r][0], 0, all(reqs[root].outputs[0]));
      break;
    case CommOpKind::all_reduce: {
      const auto sum = fold(dtype, *first.op, inputs());
      for (int r = 0; r < p; ++r) put(out[r][0], 0, sum);
      break;
    }
    case CommOpKind::reduce:
      put(out[root][0], 0, fold(dtype, *first.op, inputs()));
      break;
    case CommOpKind::gather: {
      const auto n = reqs[0].inputs[0].count();
      for (int r = 0; r < p; ++r) put(out[root][0], r * n, all(reqs[r].inputs[0]));
      break;
    }
    case CommOpKind::all_gather: {
      const auto n = reqs[0].inputs[0].count();
      for (int dst = 0; dst < p; ++dst) {
        for (int r = 0; r < p; ++r) put(out[dst][0], r * n, all(reqs[r].inputs[0]));
      }
      break;
    }
    case CommOpKind::gatherv: {
      const auto& displs = *reqs[root].displs;
      for (int r = 0; r < p; ++r) put(out[root][0], displs[r], all(reqs[r].inputs[0]));
      break;
    }
    case CommOpKind::all_gatherv:
      for (int dst = 0; dst < p; ++dst) {
        const auto& displs = *reqs[dst].displs;
        for (int r = 0; r < p; ++r) put(out[dst][0], displs[r], all(reqs[r].inputs[0]));
      }
      break;
    case CommOpKind::scatter: {
      const auto n = reqs[0].outputs[0].count();
      for (int r = 0; r < p; ++r) put(out[r][0], 0, slice(reqs[root].inputs[0], r * n, n));
      break;
    }
    case CommOpKind::scatterv: {
      const auto& scounts = *reqs[root].scounts;
      const auto& displs = *reqs[root].displs;
      for (int r = 0; r < p; ++r) {
        put(out[r][0], 0, slice(reqs[root].inputs[0], displs[r], scounts[r]));
      }
      break;
    }
    case CommOpKind::reduce_scatter: {
      const auto n = reqs[0].outputs[0].count();
      const auto sum = fold(dtype, *first.op, inputs());
      const auto esz = size_bytes(dtype);
      for (int r = 0; r < p; ++r) {
        put(out[r][0], 0, Bytes(sum).subspan(r * n * esz, n * esz));
      }
      break;
    }
    case CommOpKind::all_to_all_single: {
      const auto n = reqs[0].inputs[0].count() / P;
      for (int dst = 0; dst < p; ++dst) {
        for (int src = 0; src < p; ++src) {
          put(out[dst][0], src * n, slice(reqs[src].inputs[0], dst * n, n));
        }
      }
      break;
    }
    case CommOpKind::all_to_all:
      for (int dst = 0; dst < p; ++dst) {
        for (int src = 0; src < p; ++src) put(out[dst][src], 0, all(reqs[src].inputs[dst]));
      }
      break;
    case CommOpKind::all_to_allv:
      for (int dst = 0; dst < p; ++dst) {
        for (int src = 0; src < p; ++src) {
          const auto& s = reqs[src];
          put(out[dst][0], (*reqs[dst].rdispls)[src],
              slice(s.inputs[0], (*s.sdispls)[dst], (*s.scounts)[dst]));
        }
      }
      break;
  }
  return out;
}

Buffer pattern(DType dtype, std::size_t count, std::uint64_t seed, int rank) {
  Buffer b(dtype, count);
  auto bytes = b.raw_bytes();
  visit(dtype, [&](auto zero) {
    using T = decltype(zero);
    for (std::size_t i = 0; i < count; ++i) {
      const auto h = mix(seed * 1000003ULL + static_cast<std::uint64_t>(rank) * 7919ULL + i);
      T v;
      if constexpr (std::is_floating_point_v<T>) {
        // 1/1024 steps in [0.5, 4.5): sums over a few ranks stay exact.
        v = static_cast<T>(0.5 + static_cast<double>(h % 4096) / 1024.0);
      } else if constexpr (std::is_same_v<T, std::uint8_t>) {
        v = static_cast<T>(h % 256);
      } else {
        v = static_cast<T>(static_cast<std::int64_t>(h % 2001) - 1000);
      }
      std::memcpy(bytes.data() + i * sizeof(T), &v, sizeof(T));
    }
    return 0;
  });
  return b;
}

bool close_enough(const Buffer& actual, const Buffer& expected, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why != nullptr) *why = msg;
    return false;
  };
  if (actual.dtype() != expected.dtype()) return fail("dtype differs");
  if (actual.count() != expected.count()) {
    return fail("count " + std::to_string(actual.count()) + " vs " +
                std::to_string(expected.count()));
  }
  const auto a = actual.raw_bytes();
  const auto e = expected.raw_bytes();
  return visit(actual.dtype(), [&](auto zero) {
    using T = decltype(zero);
    for (std::size_t i = 0; i < actual.count(); ++i) {
      T x;
      T y;
      std::memcpy(&x, a.data() + i * sizeof(T), sizeof(T));
      std::memcpy(&y, e.data() + i * sizeof(T), sizeof(T));
      bool ok = x == y;
      if constexpr (std::is_floating_point_v<T>) {
        const double tol = std::is_same_v<T, float> ? 1e-6 : 1e-12;
        ok = ok || std::fabs(static_cast<double>(x) - static_cast<double>(y)) <=
                       tol * std::fabs(static_cast<double>(y));
      }
      if (!ok) {
        std::ostringstream os;
        os << "element " << i << ": got " << +x << ", expected " << +y;
        return fail(os.str());
      }
    }
    return true;
  });
}

}  // namespace mcrdl::reference

namespace mcrdl::reference {
namespace {

std::size_t vcount(std::size_t c, std::size_t a, std::size_t b) {
  if (c == 0) return 0;
  return (a + 2 * b) % 3 == 1 ? 0 : c + a + b;
}

// Packed displacements in reverse rank order, so displs are not a prefix sum.
Counts reversed_displs(const Counts& counts) {
  Counts d(counts.size(), 0);
  std::size_t at = 0;
  for (std::size_t i = counts.size(); i-- > 0;) {
    d[i] = at;
    at += counts[i];
  }
  return d;
}

// One-element gap after every segment.
Counts gapped_displs(const Counts& counts) {
  Counts d(counts.size(), 0);
  std::size_t at = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    d[i] = at;
    at += counts[i] + 1;
  }
  return d;
}

std::size_t total(const Counts& c) { return std::accumulate(c.begin(), c.end(), std::size_t{0}); }

}  // namespace

std::string describe(const Case& c) {
  std::string s = std::string(to_string(c.kind)) + "/" + std::string(to_string(c.dtype)) +
                  "/n=" + std::to_string(c.count);
  if (is_reduction(c.kind)) s += "/" + std::string(to_string(c.op));
  return s;
}

std::vector<CommOpKind> collective_kinds() {
  std::vector<CommOpKind> out;
  for (auto k : kAllOpKinds) {
    if (is_collective(k)) out.push_back(k);
  }
  return out;
}

CommRequest make_request(const Case& c, int world, int rank) {
  const auto p = static_cast<std::size_t>(world);
  const auto r = static_cast<std::size_t>(rank);
  const int root = world - 1;
  const bool at_root = rank == root;
  auto in = [&](std::size_t n) { return pattern(c.dtype, n, c.seed, rank); };
  auto out = [&](std::size_t n) { return pattern(c.dtype, n, c.seed + 7777, rank); };

  CommRequest q;
  q.kind = c.kind;
  if (is_reduction(c.kind)) q.op = c.op;
  if (is_rooted(c.kind)) q.root = root;
  const std::size_t n = c.count;
  switch (c.kind) {
    case CommOpKind::send:
    case CommOpKind::recv:
      throw Error(ErrorKind::usage, "the oracle covers collectives only");
    case CommOpKind::bcast:
      q.outputs = {in(n)};
      break;
    case CommOpKind::all_reduce:
      q.inputs = {in(n)};
      q.outputs = {out(n)};
      break;
    case CommOpKind::reduce:
      q.inputs = {in(n)};
      if (at_root) q.outputs = {out(n)};
      break;
    case CommOpKind::gather:
      q.inputs = {in(n)};
      if (at_root) q.outputs = {out(n * p)};
      break;
    case CommOpKind::gatherv:
    case CommOpKind::all_gatherv: {
      Counts rc(p);
      for (std::size_t i = 0; i < p; ++i) rc[i] = vcount(n, i, 0);
      q.rcounts = rc;
      q.displs = reversed_displs(rc);
      q.inputs = {in(rc[r])};
      if (at_root || c.kind == CommOpKind::all_gatherv) q.outputs = {out(total(rc))};
      break;
    }
    case CommOpKind::scatter:
      q.outputs = {out(n)};
      if (at_root) q.inputs = {in(n * p)};
      break;
    case CommOpKind::scatterv: {
      Counts sc(p);
      for (std::size_t i = 0; i < p; ++i) sc[i] = vcount(n, i, 1);
      q.scounts = sc;
      q.displs = reversed_displs(sc);
      q.outputs = {out(sc[r])};
      if (at_root) q.inputs = {in(total(sc))};
      break;
    }
    case CommOpKind::all_gather:
      q.inputs = {in(n)};
      q.outputs = {out(n * p)};
      break;
    case CommOpKind::reduce_scatter:
      q.inputs = {in(n * p)};
      q.outputs = {out(n)};
      break;
    case CommOpKind::all_to_all_single:
      q.inputs = {in(n * p)};
      q.outputs = {out(n * p)};
      break;
    case CommOpKind::all_to_all: {
      for (std::size_t j = 0; j < p; ++j) {
        q.inputs.push_back(pattern(c.dtype, n, c.seed + 31 * j, rank));
        q.outputs.push_back(pattern(c.dtype, n, c.seed + 7777 + 31 * j, rank));
      }
      break;
    }
    case CommOpKind::all_to_allv: {
      Counts sc(p);
      Counts rc(p);
      for (std::size_t j = 0; j < p; ++j) {
        sc[j] = vcount(n, r, j);
        rc[j] = vcount(n, j, r);
      }
      q.scounts = sc;
      q.rcounts = rc;
      q.sdispls = gapped_displs(sc);
      q.rdispls = gapped_displs(rc);
      q.inputs = {in(total(sc) + p)};
      q.outputs = {out(total(rc) + p)};
      break;
    }
  }
  return q;
}

bool check(const Case& c, int world, int rank, const CommRequest& posted, std::string* why) {
  std::vector<CommRequest> all;
  for (int r = 0; r < world; ++r) all.push_back(make_request(c, world, r));
  const auto want = expected(all)[static_cast<std::size_t>(rank)];
  if (want.size() != posted.outputs.size()) {
    if (why != nullptr) *why = "output buffer count differs";
    return false;
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    std::string detail;
    if (!close_enough(posted.outputs[i], want[i], &detail)) {
      if (why != nullptr) *why = "output " + std::to_string(i) + ": " + detail;
      return false;
    }
  }
  return true;
}

}  // namespace mcrdl::reference
