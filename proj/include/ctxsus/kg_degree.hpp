// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctxsus::kg {

struct Triple {
  std::string subject;
  std::string predicate;
  std::string object;
};

struct DegreeRecord {
  std::string entity;
  std::string relation;
  std::size_t degree = 0;
};

/// Parses subject \t predicate \t object lines. Blank lines and lines
/// starting with '#' are skipped; any other malformed line is an error.
std::vector<Triple> parse_tsv(std::string_view text, const std::string& origin = "<memory>");
std::vector<Triple> load_tsv(const std::string& path);

/// Relation-dependent neighbourhoods: for predicate q and entity e, the set
/// of distinct objects of (e, q, ·) united with distinct subjects of (·, q, e).
/// Immutable after construction, so concurrent reads are safe.
class DegreeIndex {
 public:
  explicit DegreeIndex(const std::vector<Triple>& triples);

  std::size_t degree(std::string_view entity, std::string_view relation) const;
  std::vector<DegreeRecord> degrees(const std::vector<std::string>& entities, const std::string& relation) const;

  std::size_t triple_count() const { return triple_count_; }

 private:
  std::uint32_t intern(const std::string& s);
  std::uint32_t lookup(std::string_view s) const;

  static constexpr std::uint32_t kMissing = UINT32_MAX;

  std::unordered_map<std::string, std::uint32_t> ids_;
  // predicate id -> entity id -> sorted distinct neighbour ids
  std::unordered_map<std::uint32_t, std::unordered_map<std::uint32_t, std::vector<std::uint32_t>>> adj_;
  std::size_t triple_count_ = 0;
};

/// Entity ids from an entities.json file (the "id" field) or, for any other
/// extension, one id per non-empty line.
std::vector<std::string> load_entity_ids(const std::string& path);

}  // namespace ctxsus::kg
