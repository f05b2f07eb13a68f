// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <string>

#include "mcrdl/collectives.hpp"
#include "mcrdl/error.hpp"

namespace mcrdl {

namespace {

using A = Algorithm;

constexpr std::array<Algorithm, 1> kLinear = {A::linear};
constexpr std::array<Algorithm, 2> kTree = {A::binomial_tree, A::linear};
constexpr std::array<Algorithm, 3> kAllReduce = {A::ring, A::recursive_doubling, A::naive};
constexpr std::array<Algorithm, 3> kAllGather = {A::ring, A::bruck, A::naive};
constexpr std::array<Algorithm, 2> kReduceScatter = {A::ring, A::naive};
constexpr std::array<Algorithm, 3> kAllToAll = {A::pairwise_exchange, A::bruck, A::naive};

}  // namespace

std::string_view to_string(Algorithm algo) noexcept {
  switch (algo) {
    case A::linear: return "linear";
    case A::ring: return "ring";
    case A::recursive_doubling: return "recursive_doubling";
    case A::naive: return "naive";
    case A::binomial_tree: return "binomial_tree";
    case A::bruck: return "bruck";
    case A::pairwise_exchange: return "pairwise_exchange";
  }
  return "?";
}

std::optional<Algorithm> parse_algorithm(std::string_view name) noexcept {
  for (auto a : {A::linear, A::ring, A::recursive_doubling, A::naive, A::binomial_tree, A::bruck,
                 A::pairwise_exchange}) {
    if (to_string(a) == name) return a;
  }
  if (name == "binomial") return A::binomial_tree;
  if (name == "pairwise") return A::pairwise_exchange;
  return std::nullopt;
}

std::span<const Algorithm> algorithms_for(CommOpKind kind) noexcept {
  switch (kind) {
    case CommOpKind::send:
    case CommOpKind::recv:
    case CommOpKind::gatherv:
    case CommOpKind::scatterv: return kLinear;
    case CommOpKind::bcast:
    case CommOpKind::reduce:
    case CommOpKind::gather:
    case CommOpKind::scatter: return kTree;
    case CommOpKind::all_reduce: return kAllReduce;
    case CommOpKind::all_gather:
    case CommOpKind::all_gatherv: return kAllGather;
    case CommOpKind::reduce_scatter: return kReduceScatter;
    case CommOpKind::all_to_all_single:
    case CommOpKind::all_to_all:
    case CommOpKind::all_to_allv: return kAllToAll;
  }
  return kLinear;
}

AlgorithmPolicy::AlgorithmPolicy() {
  for (auto kind : kAllOpKinds) algos_[static_cast<std::size_t>(kind)] = algorithms_for(kind)[0];
}

AlgorithmPolicy& AlgorithmPolicy::set(CommOpKind kind, Algorithm algo) {
  const auto allowed = algorithms_for(kind);
  if (std::find(allowed.begin(), allowed.end(), algo) == allowed.end()) {
    throw ValidationError("policy", std::string(to_string(algo)) + " is not implemented for " +
                                        std::string(to_string(kind)));
  }
  algos_[static_cast<std::size_t>(kind)] = algo;
  return *this;
}

}  // namespace mcrdl
