// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cctype>
#include <charconv>
#include <cmath>
#include <string>

#include "mcrdl/error.hpp"
#include "mcrdl/runtime.hpp"

namespace mcrdl {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto at = s.find(sep, start);
    out.push_back(s.substr(start, at == std::string_view::npos ? std::string_view::npos : at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return out;
}

// Leading decimal number and the rest.
std::pair<double, std::string_view> number_prefix(std::string_view text) {
  text = trim(text);
  double value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr == text.data() || !std::isfinite(value)) {
    throw Error(ErrorKind::parse, "expected a number in '" + std::string(text) + "'");
  }
  return {value, std::string_view(ptr, static_cast<std::size_t>(end - ptr))};
}

BackendConfig preset(const BackendId& id) {
  BackendConfig c;
  c.id = id;
  const auto& name = id.str();
  if (name == "inproc" || name == "tcp") {
    c.transport = name;
  } else if (name == "nccl-like") {
    // Higher startup cost, more bandwidth; ring algorithms.
    c.shape = CostShape{20e-6, 0.2e-9};
    c.policy.set(CommOpKind::all_reduce, Algorithm::ring)
        .set(CommOpKind::all_gather, Algorithm::ring)
        .set(CommOpKind::reduce_scatter, Algorithm::ring);
  } else if (name == "mpi-like") {
    // Low latency, less bandwidth; latency-optimal algorithms.
    c.shape = CostShape{5e-6, 1e-9};
    c.policy.set(CommOpKind::all_reduce, Algorithm::recursive_doubling)
        .set(CommOpKind::all_gather, Algorithm::bruck)
        .set(CommOpKind::all_to_all_single, Algorithm::bruck)
        .set(CommOpKind::all_to_all, Algorithm::bruck);
  }
  return c;
}

std::set<CommOpKind> parse_kinds(std::string_view list) {
  std::set<CommOpKind> out;
  for (auto part : split(list, '+')) {
    const auto kind = parse_op_kind(trim(part));
    if (!kind) throw Error(ErrorKind::parse, "unknown op '" + std::string(part) + "'");
    out.insert(*kind);
  }
  return out;
}

}  // namespace

double parse_seconds(std::string_view text) {
  const auto [value, unit] = number_prefix(text);
  double scale = 1.0;
  const auto u = trim(unit);
  if (u.empty() || u == "s") scale = 1.0;
  else if (u == "ms") scale = 1e-3;
  else if (u == "us") scale = 1e-6;
  else if (u == "ns") scale = 1e-9;
  else throw Error(ErrorKind::parse, "unknown time unit '" + std::string(u) + "'");
  if (value < 0) throw Error(ErrorKind::parse, "negative time '" + std::string(text) + "'");
  return value * scale;
}

std::size_t parse_size(std::string_view text) {
  const auto [value, unit] = number_prefix(text);
  auto u = std::string(trim(unit));
  for (auto& ch : u) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  if (!u.empty() && u.back() == 'B') u.pop_back();
  if (!u.empty() && u.back() == 'I') u.pop_back();  // KiB
  double scale = 1;
  if (u.empty()) scale = 1;
  else if (u == "K") scale = 1024.0;
  else if (u == "M") scale = 1024.0 * 1024;
  else if (u == "G") scale = 1024.0 * 1024 * 1024;
  else throw Error(ErrorKind::parse, "unknown size unit in '" + std::string(text) + "'");
  const double bytes = value * scale;
  if (bytes < 0 || bytes != std::floor(bytes)) {
    throw Error(ErrorKind::parse, "bad size '" + std::string(text) + "'");
  }
  return static_cast<std::size_t>(bytes);
}

BackendConfig parse_backend_spec(std::string_view spec) {
  spec = trim(spec);
  const auto eq = spec.find('=');
  const auto name = trim(spec.substr(0, eq));
  if (!BackendId::is_valid_name(name) || name == "auto") {
    throw Error(ErrorKind::parse, "bad backend name '" + std::string(name) + "'");
  }
  BackendConfig c = preset(BackendId(std::string(name)));
  if (eq == std::string_view::npos) return c;

  const auto parts = split(spec.substr(eq + 1), ':');
  const auto transport = trim(parts[0]);
  if (transport != "inproc" && transport != "tcp") {
    throw Error(ErrorKind::unknown_transport, "unknown transport '" + std::string(transport) + "'");
  }
  c.transport = std::string(transport);
  bool fusion = false;
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto kv = trim(parts[i]);
    const auto at = kv.find('=');
    if (at == std::string_view::npos) {
      throw Error(ErrorKind::parse, "expected key=value, got '" + std::string(kv) + "'");
    }
    const auto key = trim(kv.substr(0, at));
    const auto value = trim(kv.substr(at + 1));
    if (key == "alpha" || key == "beta") {
      CostShape shape = c.shape.value_or(CostShape{});
      (key == "alpha" ? shape.alpha : shape.beta) = parse_seconds(value);
      c.shape = shape;
    } else if (key == "only") {
      c.only = parse_kinds(value);
    } else if (key == "fusion_bytes") {
      c.fusion.max_bytes = parse_size(value);
      fusion = true;
    } else if (key == "fusion_ms") {
      c.fusion.max_wait = std::chrono::microseconds(
          static_cast<std::int64_t>(std::llround(parse_seconds(std::string(value) + "ms") * 1e6)));
      fusion = true;
    } else if (key == "compress") {
      const auto codec = parse_codec(value);
      if (!codec) throw Error(ErrorKind::parse, "unknown codec '" + std::string(value) + "'");
      c.codec = *codec;
    } else if (const auto kind = parse_op_kind(key)) {
      const auto algo = parse_algorithm(value);
      if (!algo) throw Error(ErrorKind::parse, "unknown algorithm '" + std::string(value) + "'");
      c.policy.set(*kind, *algo);
    } else {
      throw Error(ErrorKind::parse, "unknown backend option '" + std::string(key) + "'");
    }
  }
  if (fusion) c.fusion.check();
  return c;
}

std::vector<BackendConfig> parse_backend_specs(std::string_view specs) {
  std::vector<BackendConfig> out;
  for (auto part : split(specs, ',')) {
    if (trim(part).empty()) throw Error(ErrorKind::parse, "empty backend spec");
    out.push_back(parse_backend_spec(part));
  }
  return out;
}

}  // namespace mcrdl
