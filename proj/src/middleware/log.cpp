// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>

#include <json.hpp>

#include "mcrdl/error.hpp"
#include "mcrdl/middleware.hpp"

namespace mcrdl {

using ordered_json = nlohmann::ordered_json;

std::string to_json_line(const LogRecord& r) {
  ordered_json j;
  j["ts_us"] = r.ts_us;
  j["rank"] = r.rank;
  j["op"] = std::string(to_string(r.op));
  j["backend"] = r.backend;
  j["bytes"] = r.bytes;
  j["dur_us"] = r.dur_us;
  j["seq"] = r.seq;
  j["fused"] = r.fused;
  return j.dump();
}

LogRecord parse_log_line(const std::string& line) {
  try {
    const auto j = nlohmann::json::parse(line);
    LogRecord r;
    r.ts_us = j.at("ts_us").get<std::uint64_t>();
    r.rank = j.at("rank").get<int>();
    const auto op = j.at("op").get<std::string>();
    const auto kind = parse_op_kind(op);
    if (!kind) throw Error(ErrorKind::parse, "unknown op '" + op + "' in log");
    r.op = *kind;
    r.backend = j.at("backend").get<std::string>();
    r.bytes = j.at("bytes").get<std::uint64_t>();
    r.dur_us = j.at("dur_us").get<double>();
    r.seq = j.at("seq").get<std::uint64_t>();
    r.fused = j.at("fused").get<bool>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("bad log record: ") + e.what());
  }
}

std::vector<LogRecord> read_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read " + path);
  std::vector<LogRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_log_line(line));
  }
  return out;
}

void Logger::emit(LogRecord record) {
  std::lock_guard lock(mu_);
  records_.push_back(std::move(record));
}

std::vector<LogRecord> Logger::records() const {
  std::vector<LogRecord> out;
  {
    std::lock_guard lock(mu_);
    out = records_;
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const LogRecord& a, const LogRecord& b) { return a.ts_us < b.ts_us; });
  return out;
}

std::size_t Logger::size() const {
  std::lock_guard lock(mu_);
  return records_.size();
}

void Logger::clear() {
  std::lock_guard lock(mu_);
  records_.clear();
}

void Logger::flush(const std::string& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  for (const auto& r : records()) out << to_json_line(r) << '\n';
  if (!out.flush()) throw Error(ErrorKind::io, "write to " + path + " failed");
}

}  // namespace mcrdl
