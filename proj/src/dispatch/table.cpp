// Copyright (c) 2026 The mcrdl Authors.
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mcrdl/dispatch.hpp"
#include "mcrdl/error.hpp"

namespace mcrdl {

std::size_t TuningTable::entry_count() const noexcept {
  std::size_t n = 0;
  for (const auto& [op, worlds] : tables) {
    for (const auto& [world, entries] : worlds) n += entries.size();
  }
  return n;
}

void merge_runs(TuningTable& table) {
  for (auto& [op, worlds] : table.tables) {
    for (auto& [world, entries] : worlds) {
      std::vector<TableEntry> merged;
      for (const auto& e : entries) {
        if (!merged.empty() && merged.back().backend == e.backend) {
          merged.back().max_bytes = e.max_bytes;
        } else {
          merged.push_back(e);
        }
      }
      entries = std::move(merged);
    }
  }
}

TuningTable parse_table(std::string_view text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("tuning table: ") + e.what());
  }
  TuningTable table;
  try {
    if (!doc.is_object()) throw Error(ErrorKind::parse, "tuning table: expected an object");
    table.version = doc.at("version").get<int>();
    if (table.version != 1) {
      throw Error(ErrorKind::parse, "tuning table: unsupported version " +
                                        std::to_string(table.version));
    }
    table.system = doc.value("system", "");
    for (const auto& [op_name, worlds] : doc.at("tables").items()) {
      const auto kind = parse_op_kind(op_name);
      if (!kind) throw Error(ErrorKind::parse, "tuning table: unknown op '" + op_name + "'");
      for (const auto& [world_name, list] : worlds.items()) {
        std::size_t used = 0;
        int world = 0;
        try {
          world = std::stoi(world_name, &used);
        } catch (const std::logic_error&) {
          used = 0;
        }
        if (used != world_name.size() || world <= 0) {
          throw Error(ErrorKind::parse, "tuning table: bad world size '" + world_name + "'");
        }
        if (!list.is_array() || list.empty()) {
          throw Error(ErrorKind::parse, "tuning table: " + op_name + "/" + world_name +
                                            " needs a non-empty list");
        }
        auto& entries = table.tables[*kind][world];
        for (const auto& item : list) {
          const auto max_bytes = item.at("max_bytes").get<std::int64_t>();
          if (max_bytes < 0) throw Error(ErrorKind::parse, "tuning table: negative max_bytes");
          const auto name = item.at("backend").get<std::string>();
          if (!BackendId::is_valid_name(name) || name == "auto") {
            throw Error(ErrorKind::parse, "tuning table: bad backend name '" + name + "'");
          }
          if (!entries.empty() && static_cast<std::size_t>(max_bytes) <= entries.back().max_bytes) {
            throw Error(ErrorKind::monotonicity,
                        "tuning table: " + op_name + "/" + world_name + " max_bytes " +
                            std::to_string(max_bytes) + " after " +
                            std::to_string(entries.back().max_bytes));
          }
          entries.push_back({static_cast<std::size_t>(max_bytes), BackendId(name)});
        }
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse, std::string("tuning table: ") + e.what());
  }
  merge_runs(table);
  return table;
}

TuningTable load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read tuning table " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_table(ss.str());
}

std::string to_json(const TuningTable& table) {
  nlohmann::ordered_json doc;
  doc["version"] = table.version;
  doc["system"] = table.system;
  doc["tables"] = nlohmann::ordered_json::object();
  for (const auto& [kind, worlds] : table.tables) {
    auto& by_world = doc["tables"][std::string(to_string(kind))];
    for (const auto& [world, entries] : worlds) {
      auto list = nlohmann::ordered_json::array();
      for (const auto& e : entries) {
        list.push_back({{"max_bytes", e.max_bytes}, {"backend", e.backend.str()}});
      }
      by_world[std::to_string(world)] = std::move(list);
    }
  }
  return doc.dump(2) + "\n";
}

void emit(const TuningTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write tuning table " + path);
  out << to_json(table);
  if (!out.flush()) throw Error(ErrorKind::io, "write to " + path + " failed");
}

std::vector<BackendId> unknown_backends(const TuningTable& table,
                                        const std::vector<BackendId>& registered) {
  std::vector<BackendId> out;
  for (const auto& [kind, worlds] : table.tables) {
    for (const auto& [world, entries] : worlds) {
      for (const auto& e : entries) {
        if (std::find(registered.begin(), registered.end(), e.backend) == registered.end() &&
            std::find(out.begin(), out.end(), e.backend) == out.end()) {
          out.push_back(e.backend);
        }
      }
    }
  }
  return out;
}

BackendId route(const TuningTable& table, CommOpKind kind, int world_size, std::size_t bytes,
                const std::vector<BackendId>& registered) {
  if (registered.empty()) throw Error(ErrorKind::unroutable_request, "no backend registered");
  const std::vector<TableEntry>* entries = nullptr;
  if (auto it = table.tables.find(kind); it != table.tables.end()) {
    const auto& worlds = it->second;
    // Exact world, else the nearest smaller tuned one.
    auto w = worlds.upper_bound(world_size);
    if (w != worlds.begin()) entries = &std::prev(w)->second;
  }
  if (entries == nullptr || entries->empty()) return registered.front();
  const TableEntry* chosen = &entries->back();
  for (const auto& e : *entries) {
    if (e.max_bytes >= bytes) {
      chosen = &e;
      break;
    }
  }
  if (std::find(registered.begin(), registered.end(), chosen->backend) == registered.end()) {
    throw Error(ErrorKind::unroutable_request,
                "tuning table routes " + std::string(to_string(kind)) + " of " +
                    std::to_string(bytes) + " bytes to unregistered backend '" +
                    chosen->backend.str() + "'");
  }
  return chosen->backend;
}

std::size_t bucket(std::size_t bytes) noexcept {
  std::size_t b = kMinBucket;
  while (b < bytes && b < kMaxBucket) b <<= 1;
  return b;
}

std::vector<std::size_t> all_buckets() {
  std::vector<std::size_t> out;
  for (std::size_t b = kMinBucket; b <= kMaxBucket; b <<= 1) out.push_back(b);
  return out;
}

}  // namespace mcrdl
