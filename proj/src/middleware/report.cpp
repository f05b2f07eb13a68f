// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "mcrdl/middleware.hpp"

namespace mcrdl {
namespace {

using Key = std::pair<CommOpKind, std::string>;

struct Cell {
  std::uint64_t count = 0;
  double total_us = 0.0;
};

Breakdown finish(const std::map<Key, Cell>& cells) {
  Breakdown b;
  for (const auto& [key, cell] : cells) b.total_us += cell.total_us;
  for (const auto& [key, cell] : cells) {
    ReportRow row;
    row.op = key.first;
    row.backend = key.second;
    row.count = cell.count;
    row.total_us = cell.total_us;
    row.percent = b.total_us > 0 ? 100.0 * cell.total_us / b.total_us : 0.0;
    b.rows.push_back(std::move(row));
  }
  return b;
}

std::map<Key, Cell> cells_of(const std::vector<LogRecord>& records) {
  std::map<Key, Cell> cells;
  for (const auto& r : records) {
    auto& c = cells[{r.op, r.backend}];
    c.count += 1;
    c.total_us += r.dur_us;
  }
  return cells;
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void table(std::ostringstream& os, const Breakdown& b) {
  char line[160];
  std::snprintf(line, sizeof(line), "  %-20s %-14s %8s %14s %8s\n", "op", "backend", "count",
                "total_s", "percent");
  os << line;
  for (const auto& r : b.rows) {
    std::snprintf(line, sizeof(line), "  %-20s %-14s %8llu %14.6f %7.2f%%\n",
                  std::string(to_string(r.op)).c_str(), r.backend.c_str(),
                  static_cast<unsigned long long>(r.count), r.total_us / 1e6, r.percent);
    os << line;
  }
  std::snprintf(line, sizeof(line), "  %-20s %-14s %8s %14.6f %7.2f%%\n", "total", "", "",
                b.total_us / 1e6, b.rows.empty() ? 0.0 : 100.0);
  os << line;
}

void csv_rows(std::ostringstream& os, const std::string& view, const Breakdown& b) {
  for (const auto& r : b.rows) {
    os << view << ',' << to_string(r.op) << ',' << r.backend << ',' << r.count << ','
       << fixed(r.total_us / 1e6, 9) << ',' << fixed(r.percent, 4) << '\n';
  }
}

}  // namespace

Breakdown aggregate(const std::vector<LogRecord>& records) { return finish(cells_of(records)); }

Report make_report(const std::vector<std::vector<LogRecord>>& logs) {
  Report rep;
  std::map<Key, Cell> worst;
  for (const auto& log : logs) {
    const auto cells = cells_of(log);
    rep.per_rank.push_back(finish(cells));
    for (const auto& [key, cell] : cells) {
      auto& w = worst[key];
      w.count = std::max(w.count, cell.count);
      w.total_us = std::max(w.total_us, cell.total_us);
    }
  }
  rep.cross_rank_max = finish(worst);
  return rep;
}

Report report(const std::vector<std::string>& paths) {
  std::vector<std::vector<LogRecord>> logs;
  for (const auto& p : paths) logs.push_back(read_log(p));
  return make_report(logs);
}

std::string format_report(const Report& rep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < rep.per_rank.size(); ++i) {
    os << "log " << i << '\n';
    table(os, rep.per_rank[i]);
  }
  os << "cross-rank max\n";
  table(os, rep.cross_rank_max);
  return os.str();
}

std::string format_report_csv(const Report& rep) {
  std::ostringstream os;
  os << "view,op,backend,count,total_s,percent\n";
  for (std::size_t i = 0; i < rep.per_rank.size(); ++i) {
    csv_rows(os, "log" + std::to_string(i), rep.per_rank[i]);
  }
  csv_rows(os, "max", rep.cross_rank_max);
  return os.str();
}

}  // namespace mcrdl
