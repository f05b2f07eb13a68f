// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstring>
#include <numeric>
#include <vector>

#include "mcrdl/collectives.hpp"
#include "mcrdl/error.hpp"

namespace mcrdl::collectives {
namespace {

using Bytes = std::vector<std::byte>;

int mod(int a, int p) { return ((a % p) + p) % p; }

void copy(std::span<std::byte> dst, std::span<const std::byte> src) {
  if (!src.empty() && dst.data() != src.data()) std::memcpy(dst.data(), src.data(), src.size());
}

// Ring segment layout: first count % p segments get one extra element.
struct Segments {
  std::vector<std::size_t> offset;  // bytes
  std::vector<std::size_t> length;  // bytes
};

Segments split(std::size_t count, std::size_t esz, int p) {
  Segments s;
  const auto n = static_cast<std::size_t>(p);
  std::size_t at = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t elems = count / n + (i < count % n ? 1 : 0);
    s.offset.push_back(at * esz);
    s.length.push_back(elems * esz);
    at += elems;
  }
  return s;
}

void all_reduce_ring(Context& ctx, DType dtype, ReduceOp op, std::span<std::byte> data) {
  const int p = ctx.size();
  const int r = ctx.rank();
  const auto esz = size_bytes(dtype);
  const auto seg = split(data.size() / esz, esz, p);
  auto at = [&](int i) {
    const auto k = static_cast<std::size_t>(i);
    return data.subspan(seg.offset[k], seg.length[k]);
  };
  const int right = mod(r + 1, p);
  const int left = mod(r - 1, p);
  Bytes tmp(seg.length[0]);
  for (int s = 0; s < p - 1; ++s) {
    ctx.send(right, at(mod(r - s, p)));
    auto dst = at(mod(r - s - 1, p));
    auto in = std::span(tmp).first(dst.size());
    ctx.recv(left, in);
    reduce_into(dtype, op, dst, in);
  }
  for (int s = 0; s < p - 1; ++s) {
    ctx.send(right, at(mod(r + 1 - s, p)));
    ctx.recv(left, at(mod(r - s, p)));
  }
}

void all_reduce_rd(Context& ctx, DType dtype, ReduceOp op, std::span<std::byte> data) {
  const int p = ctx.size();
  const int r = ctx.rank();
  int pof2 = 1;
  while (pof2 * 2 <= p) pof2 *= 2;
  const int rem = p - pof2;
  Bytes tmp(data.size());

  int newrank;
  if (r < 2 * rem) {
    if (r % 2 == 0) {
      ctx.send(r + 1, data);
      newrank = -1;
    } else {
      ctx.recv(r - 1, tmp);
      reduce_into(dtype, op, data, tmp);
      newrank = r / 2;
    }
  } else {
    newrank = r - rem;
  }

  if (newrank != -1) {
    for (int mask = 1; mask < pof2; mask <<= 1) {
      const int nd = newrank ^ mask;
      const int dst = nd < rem ? nd * 2 + 1 : nd + rem;
      ctx.send(dst, data);
      ctx.recv(dst, tmp);
      reduce_into(dtype, op, data, tmp);
    }
  }

  if (r < 2 * rem) {
    if (r % 2 == 0) {
      ctx.recv(r + 1, data);
    } else {
      ctx.send(r - 1, data);
    }
  }
}

void all_reduce_naive(Context& ctx, DType dtype, ReduceOp op, std::span<std::byte> data) {
  const int p = ctx.size();
  const int r = ctx.rank();
  if (r == 0) {
    Bytes tmp(data.size());
    for (int j = 1; j < p; ++j) {
      ctx.recv(j, tmp);
      reduce_into(dtype, op, data, tmp);
    }
    for (int j = 1; j < p; ++j) ctx.send(j, data);
  } else {
    ctx.send(0, data);
    ctx.recv(0, data);
  }
}

// Relative rank arithmetic for rooted trees.
struct Tree {
  int p, root, vr;
  int real(int v) const { return mod(v + root, p); }
};

void reduce_binomial(Context& ctx, DType dtype, ReduceOp op, int root, std::span<std::byte> data) {
  const Tree t{ctx.size(), root, mod(ctx.rank() - root, ctx.size())};
  Bytes tmp(data.size());
  for (int mask = 1; mask < t.p; mask <<= 1) {
    if (t.vr & mask) {
      ctx.send(t.real(t.vr - mask), data);
      return;
    }
    if (t.vr + mask < t.p) {
      ctx.recv(t.real(t.vr + mask), tmp);
      reduce_into(dtype, op, data, tmp);
    }
  }
}

void reduce_linear(Context& ctx, DType dtype, ReduceOp op, int root, std::span<std::byte> data) {
  if (ctx.rank() != root) {
    ctx.send(root, data);
    return;
  }
  Bytes tmp(data.size());
  for (int j = 0; j < ctx.size(); ++j) {
    if (j == root) continue;
    ctx.recv(j, tmp);
    reduce_into(dtype, op, data, tmp);
  }
}

void bcast_binomial(Context& ctx, int root, std::span<std::byte> data) {
  const Tree t{ctx.size(), root, mod(ctx.rank() - root, ctx.size())};
  int mask = 1;
  while (mask < t.p) {
    if (t.vr & mask) {
      ctx.recv(t.real(t.vr - mask), data);
      break;
    }
    mask <<= 1;
  }
  for (mask >>= 1; mask > 0; mask >>= 1) {
    if (t.vr + mask < t.p) ctx.send(t.real(t.vr + mask), data);
  }
}

void bcast_linear(Context& ctx, int root, std::span<std::byte> data) {
  if (ctx.rank() == root) {
    for (int j = 0; j < ctx.size(); ++j) {
      if (j != root) ctx.send(j, data);
    }
  } else {
    ctx.recv(root, data);
  }
}

Bytes pack(std::span<const std::span<std::byte>> out, const std::vector<int>& which) {
  std::size_t total = 0;
  for (int i : which) total += out[static_cast<std::size_t>(i)].size();
  Bytes buf(total);
  std::size_t at = 0;
  for (int i : which) {
    const auto s = out[static_cast<std::size_t>(i)];
    copy(std::span(buf).subspan(at, s.size()), s);
    at += s.size();
  }
  return buf;
}

void unpack(std::span<const std::span<std::byte>> out, const std::vector<int>& which,
            std::span<const std::byte> buf) {
  std::size_t at = 0;
  for (int i : which) {
    const auto s = out[static_cast<std::size_t>(i)];
    copy(s, buf.subspan(at, s.size()));
    at += s.size();
  }
}

void all_gather_ring(Context& ctx, std::span<const std::span<std::byte>> out) {
  const int p = ctx.size();
  const int r = ctx.rank();
  for (int s = 0; s < p - 1; ++s) {
    ctx.send(mod(r + 1, p), out[static_cast<std::size_t>(mod(r - s, p))]);
    ctx.recv(mod(r - 1, p), out[static_cast<std::size_t>(mod(r - s - 1, p))]);
  }
}

// Bruck with variable segment sizes. Block i of the rotated view is the
// segment of rank r+i; each round doubles the number of blocks held.
void all_gather_bruck(Context& ctx, std::span<const std::span<std::byte>> out) {
  const int p = ctx.size();
  const int r = ctx.rank();
  for (int d = 1; d < p; d <<= 1) {
    const int n = std::min(d, p - d);
    std::vector<int> mine, theirs;
    for (int i = 0; i < n; ++i) {
      mine.push_back(mod(r + i, p));
      theirs.push_back(mod(r + d + i, p));
    }
    ctx.send(mod(r - d, p), pack(out, mine));
    std::size_t total = 0;
    for (int i : theirs) total += out[static_cast<std::size_t>(i)].size();
    Bytes buf(total);
    ctx.recv(mod(r + d, p), buf);
    unpack(out, theirs, buf);
  }
}

void all_gather_naive(Context& ctx, std::span<const std::span<std::byte>> out) {
  const int p = ctx.size();
  const int r = ctx.rank();
  for (int j = 0; j < p; ++j) {
    if (j != r) ctx.send(j, out[static_cast<std::size_t>(r)]);
  }
  for (int j = 0; j < p; ++j) {
    if (j != r) ctx.recv(j, out[static_cast<std::size_t>(j)]);
  }
}

void gather_binomial(Context& ctx, int root, std::span<const std::byte> input,
                     std::span<const std::span<std::byte>> out) {
  const Tree t{ctx.size(), root, mod(ctx.rank() - root, ctx.size())};
  const std::size_t block = input.size();
  // tmp holds relative blocks vr, vr+1, ... of the subtree gathered so far.
  Bytes tmp(input.begin(), input.end());
  for (int mask = 1; mask < t.p; mask <<= 1) {
    if (t.vr & mask) {
      ctx.send(t.real(t.vr - mask), tmp);
      return;
    }
    if (t.vr + mask < t.p) {
      const auto blocks = static_cast<std::size_t>(std::min(mask, t.p - (t.vr + mask)));
      const auto at = tmp.size();
      tmp.resize(at + blocks * block);
      ctx.recv(t.real(t.vr + mask), std::span(tmp).subspan(at));
    }
  }
  for (int i = 0; i < t.p; ++i) {
    copy(out[static_cast<std::size_t>(t.real(i))],
         std::span<const std::byte>(tmp).subspan(static_cast<std::size_t>(i) * block, block));
  }
}

void gather_linear(Context& ctx, int root, std::span<const std::byte> input,
                   std::span<const std::span<std::byte>> out) {
  if (ctx.rank() != root) {
    ctx.send(root, input);
    return;
  }
  for (int j = 0; j < ctx.size(); ++j) {
    if (j == root) {
      copy(out[static_cast<std::size_t>(j)], input);
    } else {
      ctx.recv(j, out[static_cast<std::size_t>(j)]);
    }
  }
}

void scatter_binomial(Context& ctx, int root, std::span<const std::span<const std::byte>> in,
                      std::span<std::byte> output) {
  const Tree t{ctx.size(), root, mod(ctx.rank() - root, ctx.size())};
  const std::size_t block = output.size();
  Bytes tmp;
  int mask = 1;
  if (t.vr == 0) {
    tmp.resize(static_cast<std::size_t>(t.p) * block);
    for (int i = 0; i < t.p; ++i) {
      copy(std::span(tmp).subspan(static_cast<std::size_t>(i) * block, block),
           in[static_cast<std::size_t>(t.real(i))]);
    }
    while (mask < t.p) mask <<= 1;
  } else {
    while (!(t.vr & mask)) mask <<= 1;
    tmp.resize(static_cast<std::size_t>(std::min(mask, t.p - t.vr)) * block);
    ctx.recv(t.real(t.vr - mask), tmp);
  }
  for (mask >>= 1; mask > 0; mask >>= 1) {
    if (t.vr + mask < t.p) {
      const auto blocks = static_cast<std::size_t>(std::min(mask, t.p - (t.vr + mask)));
      ctx.send(t.real(t.vr + mask),
               std::span<const std::byte>(tmp).subspan(static_cast<std::size_t>(mask) * block,
                                                       blocks * block));
    }
  }
  copy(output, std::span<const std::byte>(tmp).first(block));
}

void scatter_linear(Context& ctx, int root, std::span<const std::span<const std::byte>> in,
                    std::span<std::byte> output) {
  if (ctx.rank() != root) {
    ctx.recv(root, output);
    return;
  }
  for (int j = 0; j < ctx.size(); ++j) {
    if (j == root) {
      copy(output, in[static_cast<std::size_t>(j)]);
    } else {
      ctx.send(j, in[static_cast<std::size_t>(j)]);
    }
  }
}

void reduce_scatter_ring(Context& ctx, DType dtype, ReduceOp op, std::span<const std::byte> input,
                         std::span<std::byte> output) {
  const int p = ctx.size();
  const int r = ctx.rank();
  const std::size_t block = output.size();
  Bytes acc(input.begin(), input.end());
  auto at = [&](int i) {
    return std::span(acc).subspan(static_cast<std::size_t>(i) * block, block);
  };
  Bytes tmp(block);
  for (int s = 0; s < p - 1; ++s) {
    ctx.send(mod(r + 1, p), at(mod(r - s - 1, p)));
    ctx.recv(mod(r - 1, p), tmp);
    reduce_into(dtype, op, at(mod(r - s - 2, p)), tmp);
  }
  copy(output, at(r));
}

void reduce_scatter_naive(Context& ctx, DType dtype, ReduceOp op,
                          std::span<const std::byte> input, std::span<std::byte> output) {
  Bytes acc(input.begin(), input.end());
  all_reduce_naive(ctx, dtype, op, acc);
  copy(output, std::span<const std::byte>(acc).subspan(
                   static_cast<std::size_t>(ctx.rank()) * output.size(), output.size()));
}

void all_to_all_pairwise(Context& ctx, std::span<const std::span<const std::byte>> send,
                         std::span<const std::span<std::byte>> recv) {
  const int p = ctx.size();
  const int r = ctx.rank();
  for (int i = 1; i < p; ++i) {
    const int dst = mod(r + i, p);
    const int src = mod(r - i, p);
    ctx.send(dst, send[static_cast<std::size_t>(dst)]);
    ctx.recv(src, recv[static_cast<std::size_t>(src)]);
  }
}

void all_to_all_naive(Context& ctx, std::span<const std::span<const std::byte>> send,
                      std::span<const std::span<std::byte>> recv) {
  const int p = ctx.size();
  const int r = ctx.rank();
  for (int j = 0; j < p; ++j) {
    if (j != r) ctx.send(j, send[static_cast<std::size_t>(j)]);
  }
  for (int j = 0; j < p; ++j) {
    if (j != r) ctx.recv(j, recv[static_cast<std::size_t>(j)]);
  }
}

// Uniform blocks only: rotate, exchange blocks whose index has bit k set with
// rank r+k / r-k, rotate back.
void all_to_all_bruck(Context& ctx, std::span<const std::span<const std::byte>> send,
                      std::span<const std::span<std::byte>> recv) {
  const int p = ctx.size();
  const int r = ctx.rank();
  const std::size_t block = send[0].size();
  if (block == 0) return;
  Bytes tmp(static_cast<std::size_t>(p) * block);
  auto at = [&](int i) {
    return std::span(tmp).subspan(static_cast<std::size_t>(i) * block, block);
  };
  for (int i = 0; i < p; ++i) copy(at(i), send[static_cast<std::size_t>(mod(r + i, p))]);
  Bytes buf;
  for (int k = 1; k < p; k <<= 1) {
    std::vector<int> idx;
    for (int i = 0; i < p; ++i) {
      if (i & k) idx.push_back(i);
    }
    buf.resize(idx.size() * block);
    for (std::size_t n = 0; n < idx.size(); ++n) {
      copy(std::span(buf).subspan(n * block, block), at(idx[n]));
    }
    ctx.send(mod(r + k, p), buf);
    ctx.recv(mod(r - k, p), buf);
    for (std::size_t n = 0; n < idx.size(); ++n) {
      copy(at(idx[n]), std::span<const std::byte>(buf).subspan(n * block, block));
    }
  }
  for (int j = 0; j < p; ++j) {
    if (j != r) copy(recv[static_cast<std::size_t>(j)], at(mod(r - j, p)));
  }
}

[[noreturn]] void unsupported(CommOpKind kind, Algorithm algo) {
  throw ValidationError("policy", std::string(to_string(algo)) + " is not implemented for " +
                                      std::string(to_string(kind)));
}

}  // namespace

void all_reduce(Context& ctx, Algorithm algo, DType dtype, ReduceOp op, std::span<std::byte> data) {
  if (ctx.size() == 1 || data.empty()) return;
  switch (algo) {
    case Algorithm::ring: return all_reduce_ring(ctx, dtype, op, data);
    case Algorithm::recursive_doubling: return all_reduce_rd(ctx, dtype, op, data);
    case Algorithm::naive: return all_reduce_naive(ctx, dtype, op, data);
    default: unsupported(CommOpKind::all_reduce, algo);
  }
}

void reduce(Context& ctx, Algorithm algo, DType dtype, ReduceOp op, int root,
            std::span<std::byte> data) {
  if (ctx.size() == 1 || data.empty()) return;
  switch (algo) {
    case Algorithm::binomial_tree: return reduce_binomial(ctx, dtype, op, root, data);
    case Algorithm::linear: return reduce_linear(ctx, dtype, op, root, data);
    default: unsupported(CommOpKind::reduce, algo);
  }
}

void bcast(Context& ctx, Algorithm algo, int root, std::span<std::byte> data) {
  if (ctx.size() == 1 || data.empty()) return;
  switch (algo) {
    case Algorithm::binomial_tree: return bcast_binomial(ctx, root, data);
    case Algorithm::linear: return bcast_linear(ctx, root, data);
    default: unsupported(CommOpKind::bcast, algo);
  }
}

void all_gather(Context& ctx, Algorithm algo, std::span<const std::byte> input,
                std::span<const std::span<std::byte>> out) {
  copy(out[static_cast<std::size_t>(ctx.rank())], input);
  if (ctx.size() == 1) return;
  switch (algo) {
    case Algorithm::ring: return all_gather_ring(ctx, out);
    case Algorithm::bruck: return all_gather_bruck(ctx, out);
    case Algorithm::naive: return all_gather_naive(ctx, out);
    default: unsupported(CommOpKind::all_gather, algo);
  }
}

void gather(Context& ctx, Algorithm algo, int root, std::span<const std::byte> input,
            std::span<const std::span<std::byte>> out) {
  switch (algo) {
    case Algorithm::binomial_tree: return gather_binomial(ctx, root, input, out);
    case Algorithm::linear: return gather_linear(ctx, root, input, out);
    default: unsupported(CommOpKind::gather, algo);
  }
}

void scatter(Context& ctx, Algorithm algo, int root, std::span<const std::span<const std::byte>> in,
             std::span<std::byte> output) {
  switch (algo) {
    case Algorithm::binomial_tree: return scatter_binomial(ctx, root, in, output);
    case Algorithm::linear: return scatter_linear(ctx, root, in, output);
    default: unsupported(CommOpKind::scatter, algo);
  }
}

void reduce_scatter(Context& ctx, Algorithm algo, DType dtype, ReduceOp op,
                    std::span<const std::byte> input, std::span<std::byte> output) {
  if (ctx.size() == 1 || output.empty()) {
    copy(output, input.first(output.size()));
    return;
  }
  switch (algo) {
    case Algorithm::ring: return reduce_scatter_ring(ctx, dtype, op, input, output);
    case Algorithm::naive: return reduce_scatter_naive(ctx, dtype, op, input, output);
    default: unsupported(CommOpKind::reduce_scatter, algo);
  }
}

void all_to_all(Context& ctx, Algorithm algo, std::span<const std::span<const std::byte>> send,
                std::span<const std::span<std::byte>> recv, bool uniform) {
  const auto me = static_cast<std::size_t>(ctx.rank());
  copy(recv[me], send[me]);
  if (ctx.size() == 1) return;
  switch (algo) {
    case Algorithm::pairwise_exchange: return all_to_all_pairwise(ctx, send, recv);
    case Algorithm::bruck:
      if (uniform) return all_to_all_bruck(ctx, send, recv);
      return all_to_all_pairwise(ctx, send, recv);
    case Algorithm::naive: return all_to_all_naive(ctx, send, recv);
    default: unsupported(CommOpKind::all_to_all, algo);
  }
}

}  // namespace mcrdl::collectives
