// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#include "ctxsus/kg_degree.hpp"

#include <algorithm>
#include "json.hpp"

#include "ctxsus/error.hpp"
#include "ctxsus/util.hpp"

namespace ctxsus::kg {

std::vector<Triple> parse_tsv(std::string_view text, const std::string& origin) {
  std::vector<Triple> out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    const std::size_t t1 = line.find('\t');
    const std::size_t t2 = t1 == std::string_view::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string_view::npos || line.find('\t', t2 + 1) != std::string_view::npos) {
      fail(ErrorCode::invalid_argument, origin + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
    }
    Triple t{std::string(line.substr(0, t1)), std::string(line.substr(t1 + 1, t2 - t1 - 1)),
             std::string(line.substr(t2 + 1))};
    if (t.subject.empty() || t.predicate.empty() || t.object.empty()) {
      fail(ErrorCode::invalid_argument, origin + ":" + std::to_string(line_no) + ": empty field");
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Triple> load_tsv(const std::string& path) { return parse_tsv(read_file(path), path); }

DegreeIndex::DegreeIndex(const std::vector<Triple>& triples) : triple_count_(triples.size()) {
  for (const auto& t : triples) {
    const auto s = intern(t.subject), p = intern(t.predicate), o = intern(t.object);
    auto& by_entity = adj_[p];
    by_entity[s].push_back(o);
    by_entity[o].push_back(s);
  }
  for (auto& [p, by_entity] : adj_) {
    for (auto& [e, nbrs] : by_entity) {
      std::sort(nbrs.begin(), nbrs.end());
      nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
      nbrs.shrink_to_fit();
    }
  }
}

std::uint32_t DegreeIndex::intern(const std::string& s) {
  auto [it, inserted] = ids_.try_emplace(s, static_cast<std::uint32_t>(ids_.size()));
  return it->second;
}

std::uint32_t DegreeIndex::lookup(std::string_view s) const {
  auto it = ids_.find(std::string(s));
  return it == ids_.end() ? kMissing : it->second;
}

std::size_t DegreeIndex::degree(std::string_view entity, std::string_view relation) const {
  const auto e = lookup(entity), p = lookup(relation);
  if (e == kMissing || p == kMissing) return 0;
  auto pit = adj_.find(p);
  if (pit == adj_.end()) return 0;
  auto eit = pit->second.find(e);
  return eit == pit->second.end() ? 0 : eit->second.size();
}

std::vector<DegreeRecord> DegreeIndex::degrees(const std::vector<std::string>& entities,
                                               const std::string& relation) const {
  std::vector<DegreeRecord> out;
  out.reserve(entities.size());
  for (const auto& e : entities) out.push_back({e, relation, degree(e, relation)});
  return out;
}

std::vector<std::string> load_entity_ids(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<std::string> ids;
  if (path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorCode::config, path + ": " + ex.what());
    }
    if (!j.is_array()) fail(ErrorCode::config, path + ": expected a JSON array of entities");
    for (const auto& e : j) {
      if (e.is_string()) {
        ids.push_back(e.get<std::string>());
      } else if (e.is_object() && e.contains("id")) {
        ids.push_back(e.at("id").get<std::string>());
      } else {
        fail(ErrorCode::config, path + ": entity entries need an \"id\"");
      }
    }
    return ids;
  }
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) ids.push_back(std::move(line));
  }
  return ids;
}

}  // namespace ctxsus::kg
