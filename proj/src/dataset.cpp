// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#include "ctxsus/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <sstream>
#include <unordered_set>

#include "ctxsus/error.hpp"
#include "ctxsus/util.hpp"
#include "json.hpp"

namespace ctxsus::dataset {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxResample = 100;
constexpr ContextType kTypes[] = {ContextType::base, ContextType::assertive, ContextType::negation};

std::size_t slot_count(std::string_view tmpl, std::string_view slot) {
  const auto slots = template_slots(tmpl);
  return static_cast<std::size_t>(std::count(slots.begin(), slots.end(), slot));
}

void require_slot(const std::string& origin, std::string_view tmpl, std::string_view slot, std::size_t expected) {
  const std::size_t n = slot_count(tmpl, slot);
  if (n != expected) {
    fail(ErrorCode::config, origin + ": template \"" + std::string(tmpl) + "\" must contain {" + std::string(slot) +
                                "} " + (expected == 0 ? "zero times" : "exactly once"));
  }
}

void require_unique_slots(const std::string& origin, std::string_view tmpl) {
  auto slots = template_slots(tmpl);
  std::sort(slots.begin(), slots.end());
  if (std::adjacent_find(slots.begin(), slots.end()) != slots.end()) {
    fail(ErrorCode::config, origin + ": template \"" + std::string(tmpl) + "\" repeats a slot");
  }
}

std::vector<std::string> string_list(const json& j, const std::string& origin, const char* key) {
  if (!j.is_array()) fail(ErrorCode::config, origin + ": \"" + key + "\" must be an array of strings");
  std::vector<std::string> out;
  for (const auto& x : j) {
    if (!x.is_string()) fail(ErrorCode::config, origin + ": \"" + key + "\" must be an array of strings");
    out.push_back(x.get<std::string>());
  }
  return out;
}

json parse_json(std::string_view text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::exception& ex) {
    fail(ErrorCode::config, origin + ": " + ex.what());
  }
}

void validate(const RelationSpec& spec, const std::string& origin) {
  if (spec.relation_id.empty()) fail(ErrorCode::config, origin + ": relation_id is empty");
  for (const auto& t : spec.open_templates) {
    require_unique_slots(origin, t);
    require_slot(origin, t, "answer", 0);
  }
  for (const auto& t : spec.closed_templates) {
    require_unique_slots(origin, t);
    require_slot(origin, t, "answer", 1);
  }
  if (spec.mode == ContextMode::fixed) {
    if (spec.open_templates.empty() && spec.closed_templates.empty()) {
      fail(ErrorCode::config, origin + ": at least one query template is required");
    }
    if (spec.fixed_contexts.empty()) fail(ErrorCode::config, origin + ": fixed_contexts is empty");
    for (const auto& t : spec.fixed_contexts) {
      require_unique_slots(origin, t);
      require_slot(origin, t, "answer", 0);
    }
    return;
  }
  if (spec.open_templates.size() < 2 || spec.closed_templates.size() < 2) {
    fail(ErrorCode::config, origin + ": need at least 2 open and 2 closed query templates");
  }
  for (const auto& t : spec.open_templates) require_slot(origin, t, "entity", 1);
  for (const auto& t : spec.closed_templates) require_slot(origin, t, "entity", 1);
  for (auto type : kTypes) {
    auto it = spec.context_templates.find(type);
    if (it == spec.context_templates.end() || it->second.empty()) {
      fail(ErrorCode::config, origin + ": context_templates." + to_string(type) + " must be non-empty");
    }
    for (const auto& t : it->second) {
      require_slot(origin, t, "entity", 1);
      require_slot(origin, t, "answer", 1);
    }
  }
  if (spec.answers.empty()) fail(ErrorCode::config, origin + ": answers must be non-empty");
}

}  // namespace

const char* to_string(ContextType t) {
  switch (t) {
    case ContextType::base: return "base";
    case ContextType::assertive: return "assertive";
    case ContextType::negation: return "negation";
  }
  return "base";
}

ContextType context_type_from_string(const std::string& s) {
  if (s == "base") return ContextType::base;
  if (s == "assertive") return ContextType::assertive;
  if (s == "negation") return ContextType::negation;
  fail(ErrorCode::invalid_argument, "unknown context type '" + s + "'");
}

std::string QueryForm::name() const {
  if (!closed && index == 0) return "open_qa";
  if (!closed && index == 1) return "open_completion";
  return std::string(closed ? "closed_" : "open_") + std::to_string(index + 1);
}

QueryForm query_form_from_string(const std::string& s) {
  if (s == "open_qa") return {false, 0};
  if (s == "open_completion") return {false, 1};
  auto parse_index = [&](std::size_t prefix) -> std::size_t {
    try {
      const std::size_t n = std::stoul(s.substr(prefix));
      if (n >= 1) return n - 1;
    } catch (const std::logic_error&) {
    }
    fail(ErrorCode::invalid_argument, "unknown query form '" + s + "'");
  };
  if (s.rfind("closed_", 0) == 0) return {true, parse_index(7)};
  if (s.rfind("open_", 0) == 0) {
    const auto idx = parse_index(5);
    if (idx >= 2) return {false, idx};
  }
  fail(ErrorCode::invalid_argument, "unknown query form '" + s + "'");
}

std::vector<QueryForm> RelationSpec::forms() const {
  std::vector<QueryForm> out;
  for (std::size_t i = 0; i < open_templates.size(); ++i) out.push_back({false, i});
  for (std::size_t i = 0; i < closed_templates.size(); ++i) out.push_back({true, i});
  return out;
}

const std::string& RelationSpec::query_template(const QueryForm& f) const {
  const auto& list = f.closed ? closed_templates : open_templates;
  if (f.index >= list.size()) fail(ErrorCode::invalid_argument, "no template for query form " + f.name());
  return list[f.index];
}

std::vector<std::string> template_slots(std::string_view tmpl) {
  std::vector<std::string> slots;
  std::size_t pos = 0;
  while ((pos = tmpl.find('{', pos)) != std::string_view::npos) {
    const std::size_t close = tmpl.find('}', pos + 1);
    if (close == std::string_view::npos) break;
    const std::string_view name = tmpl.substr(pos + 1, close - pos - 1);
    const bool ident = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
    if (ident) {
      slots.emplace_back(name);
      pos = close + 1;
    } else {
      pos = pos + 1;
    }
  }
  return slots;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size() + 32);
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string_view::npos) break;
    const std::size_t close = tmpl.find('}', open + 1);
    if (close == std::string_view::npos) break;
    const std::string name(tmpl.substr(open + 1, close - open - 1));
    const bool ident = !name.empty() && std::all_of(name.begin(), name.end(), [](char c) {
      return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
    if (!ident) {
      out.append(tmpl.substr(pos, open + 1 - pos));
      pos = open + 1;
      continue;
    }
    auto it = values.find(name);
    if (it == values.end()) {
      fail(ErrorCode::invalid_argument, "template \"" + std::string(tmpl) + "\": no value for slot {" + name + "}");
    }
    out.append(tmpl.substr(pos, open - pos));
    out.append(it->second);
    pos = close + 1;
  }
  out.append(tmpl.substr(pos));
  return out;
}

std::map<std::string, std::string> slot_values(const EntityRecord& entity, const std::optional<std::string>& answer) {
  std::map<std::string, std::string> v = entity.slots;
  v["entity"] = entity.surface;
  if (answer) v["answer"] = *answer;
  return v;
}

QueryInstance render_query(std::string_view tmpl, const QueryForm& form, const EntityRecord& entity,
                           const std::optional<std::string>& answer) {
  QueryInstance q;
  q.text = render_template(tmpl, slot_values(entity, answer));
  q.form = form;
  q.entity_id = entity.id;
  if (slot_count(tmpl, "answer") > 0) q.answer = answer;
  return q;
}

std::string context_id_for(std::string_view text) {
  const Digest d = sha256(text);
  return "c" + to_hex(d.data(), 8);
}

RelationSpec parse_relation_spec(std::string_view json_text, const std::string& origin) {
  const json j = parse_json(json_text, origin);
  if (!j.is_object()) fail(ErrorCode::config, origin + ": expected a JSON object");
  RelationSpec spec;
  try {
    spec.relation_id = j.at("relation_id").get<std::string>();
    const auto& qt = j.at("query_templates");
    if (qt.contains("open")) spec.open_templates = string_list(qt.at("open"), origin, "query_templates.open");
    if (qt.contains("closed")) spec.closed_templates = string_list(qt.at("closed"), origin, "query_templates.closed");
    if (j.contains("fixed_contexts")) {
      spec.mode = ContextMode::fixed;
      spec.fixed_contexts = string_list(j.at("fixed_contexts"), origin, "fixed_contexts");
    }
    if (j.contains("context_templates")) {
      const auto& ct = j.at("context_templates");
      for (auto type : kTypes) {
        if (ct.contains(to_string(type))) {
          spec.context_templates[type] = string_list(ct.at(to_string(type)), origin, "context_templates");
        }
      }
    }
    if (j.contains("answers")) spec.answers = string_list(j.at("answers"), origin, "answers");
  } catch (const json::exception& ex) {
    fail(ErrorCode::config, origin + ": " + ex.what());
  }
  validate(spec, origin);
  return spec;
}

RelationSpec load_relation_spec(const std::string& path) { return parse_relation_spec(read_file(path), path); }

std::vector<EntityRecord> parse_entities(std::string_view json_text, const std::string& origin) {
  const json j = parse_json(json_text, origin);
  if (!j.is_array()) fail(ErrorCode::config, origin + ": expected a JSON array of entities");
  std::vector<EntityRecord> out;
  std::unordered_set<std::string> ids;
  try {
    for (const auto& e : j) {
      EntityRecord r;
      r.id = e.at("id").get<std::string>();
      r.surface = e.at("surface").get<std::string>();
      r.is_real = e.value("is_real", false);
      if (e.contains("gold_answer") && !e.at("gold_answer").is_null()) r.gold_answer = e.at("gold_answer").get<std::string>();
      r.entity_class = e.value("class", std::string());
      if (e.contains("slots")) r.slots = e.at("slots").get<std::map<std::string, std::string>>();
      if (r.surface.empty()) fail(ErrorCode::config, origin + ": entity '" + r.id + "' has an empty surface form");
      if (!ids.insert(r.id).second) fail(ErrorCode::config, origin + ": duplicate entity id '" + r.id + "'");
      out.push_back(std::move(r));
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::config, origin + ": " + ex.what());
  }
  return out;
}

std::vector<EntityRecord> load_entities(const std::string& path) { return parse_entities(read_file(path), path); }

std::vector<EntityRecord> filter_leaked(const std::vector<EntityRecord>& entities,
                                        const std::vector<std::string>& exclusion) {
  const std::unordered_set<std::string> ex(exclusion.begin(), exclusion.end());
  std::vector<EntityRecord> out;
  for (const auto& e : entities) {
    if (!e.is_real && (ex.count(e.id) || ex.count(e.surface))) continue;
    out.push_back(e);
  }
  return out;
}

std::vector<std::string> load_exclusion_list(const std::string& path) {
  std::vector<std::string> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line.front() != '#') out.push_back(line);
  }
  return out;
}

std::vector<ContextInstance> sample_contexts(const RelationSpec& spec, const std::vector<EntityRecord>& entities,
                                             std::size_t n_total, std::size_t per_entity, std::uint64_t seed) {
  if (per_entity == 0 || per_entity % 3 != 0) {
    fail(ErrorCode::infeasible, "per_entity must be a positive multiple of 3 (got " + std::to_string(per_entity) + ")");
  }
  if (n_total != per_entity * entities.size()) {
    fail(ErrorCode::infeasible, "n_total (" + std::to_string(n_total) + ") must equal per_entity x entities (" +
                                    std::to_string(per_entity) + " x " + std::to_string(entities.size()) + ")");
  }
  if (spec.answers.empty()) fail(ErrorCode::infeasible, "relation " + spec.relation_id + " has no answers");
  const std::size_t per_type = per_entity / 3;

  Rng rng(seed);
  std::unordered_set<std::string> used;
  std::vector<ContextInstance> out;
  out.reserve(n_total);
  for (const auto& entity : entities) {
    for (auto type : kTypes) {
      const auto it = spec.context_templates.find(type);
      if (it == spec.context_templates.end() || it->second.empty()) {
        fail(ErrorCode::infeasible, std::string("no ") + to_string(type) + " context templates");
      }
      const auto& templates = it->second;
      for (std::size_t n = 0; n < per_type; ++n) {
        bool placed = false;
        for (std::size_t attempt = 0; attempt <= kMaxResample && !placed; ++attempt) {
          const auto& tmpl = templates[uniform_index(rng, templates.size())];
          const auto& answer = spec.answers[uniform_index(rng, spec.answers.size())];
          std::string text = render_template(tmpl, slot_values(entity, answer));
          if (!used.insert(text).second) continue;
          ContextInstance c;
          c.text = std::move(text);
          c.type = type;
          c.mentioned_entity_id = entity.id;
          c.mentioned_answer = answer;
          out.push_back(std::move(c));
          placed = true;
        }
        if (!placed) {
          fail(ErrorCode::infeasible, "could not draw a distinct " + std::string(to_string(type)) +
                                          " context for entity '" + entity.id + "' after " +
                                          std::to_string(kMaxResample) + " resamples");
        }
      }
    }
  }
  shuffle_in_place(out, rng);
  for (auto& c : out) c.context_id = context_id_for(c.text);
  return out;
}

std::vector<ContextInstance> fixed_contexts_for(const RelationSpec& spec, const EntityRecord& entity) {
  std::vector<ContextInstance> out;
  std::unordered_set<std::string> seen;
  for (const auto& tmpl : spec.fixed_contexts) {
    ContextInstance c;
    c.text = render_template(tmpl, slot_values(entity));
    c.type = ContextType::base;
    if (!template_slots(tmpl).empty()) c.mentioned_entity_id = entity.id;
    if (!seen.insert(c.text).second) fail(ErrorCode::config, "duplicate fixed context \"" + c.text + "\"");
    c.context_id = context_id_for(c.text);
    out.push_back(std::move(c));
  }
  return out;
}

std::string closed_query_answer(const RelationSpec& spec, const EntityRecord& entity) {
  if (entity.gold_answer) return *entity.gold_answer;
  if (spec.answers.empty()) fail(ErrorCode::config, "relation " + spec.relation_id + " has no answers for closed queries");
  Rng rng(derive_seed(0, {"closed-answer", spec.relation_id, entity.id}));
  return spec.answers[uniform_index(rng, spec.answers.size())];
}

std::string join_prompt(std::string_view context, std::string_view separator, std::string_view query) {
  if (context.empty()) return std::string(query);
  std::string s;
  s.reserve(context.size() + separator.size() + query.size());
  s.append(context);
  s.append(separator);
  s.append(query);
  return s;
}

ExperimentGrid build_grid(const RelationSpec& spec, const std::vector<EntityRecord>& entities, std::uint64_t seed,
                          const GridOptions& options) {
  validate(spec, spec.relation_id);
  if (entities.empty()) fail(ErrorCode::config, "relation " + spec.relation_id + ": no entities");
  ExperimentGrid grid;
  grid.relation_id = spec.relation_id;
  grid.separator = options.separator;
  grid.entities = entities;

  if (spec.mode == ContextMode::sampled) {
    std::vector<EntityRecord> pool = entities;
    if (options.context_entities != 0 && options.context_entities < entities.size()) {
      std::vector<std::size_t> idx(entities.size());
      for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
      Rng rng(derive_seed(seed, {"context-entities", spec.relation_id}));
      shuffle_in_place(idx, rng);
      idx.resize(options.context_entities);
      std::sort(idx.begin(), idx.end());
      pool.clear();
      for (auto i : idx) pool.push_back(entities[i]);
    }
    grid.contexts = sample_contexts(spec, pool, options.n_contexts, options.per_entity, seed);
  }

  std::unordered_set<std::string> fixed_seen;
  for (const auto& form : spec.forms()) {
    const auto& tmpl = spec.query_template(form);
    for (const auto& entity : entities) {
      std::optional<std::string> answer;
      if (form.closed) answer = closed_query_answer(spec, entity);
      QueryInstance q = render_query(tmpl, form, entity, answer);
      q.query_id = spec.relation_id + ":" + form.name() + ":" + entity.id;

      std::vector<ContextInstance> own;
      const std::vector<ContextInstance>* pool = &grid.contexts;
      if (spec.mode == ContextMode::fixed) {
        own = fixed_contexts_for(spec, entity);
        pool = &own;
      }
      const auto& contexts = *pool;
      GridPrompt bare;
      bare.text = q.text;
      bare.form = form;
      bare.query_id = q.query_id;
      bare.entity_id = entity.id;
      bare.query_text = q.text;
      grid.prompts.push_back(bare);
      for (const auto& c : contexts) {
        GridPrompt p = bare;
        p.text = join_prompt(c.text, options.separator, q.text);
        p.context_id = c.context_id;
        p.context_text = c.text;
        p.relevant = c.mentioned_entity_id && *c.mentioned_entity_id == entity.id;
        grid.prompts.push_back(std::move(p));
      }
      if (spec.mode == ContextMode::fixed) {
        for (const auto& c : own) {
          if (fixed_seen.insert(c.context_id).second) grid.contexts.push_back(c);
        }
      }
      grid.queries.push_back(std::move(q));
    }
  }
  return grid;
}

void write_grid(const ExperimentGrid& grid, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  {
    std::ostringstream out;
    csv::write_row(out, {"context_id", "type", "mentioned_entity_id", "mentioned_answer", "text"});
    for (const auto& c : grid.contexts) {
      csv::write_row(out, {c.context_id, to_string(c.type), c.mentioned_entity_id.value_or(""),
                           c.mentioned_answer.value_or(""), c.text});
    }
    write_file(out_dir + "/contexts.csv", out.str());
  }
  {
    std::ostringstream out;
    csv::write_row(out, {"query_id", "form", "entity_id", "answer", "text"});
    for (const auto& q : grid.queries) {
      csv::write_row(out, {q.query_id, q.form.name(), q.entity_id, q.answer.value_or(""), q.text});
    }
    write_file(out_dir + "/queries.csv", out.str());
  }
  {
    std::ostringstream out;
    for (const auto& p : grid.prompts) {
      json j = {{"form", p.form.name()},
                {"query_id", p.query_id},
                {"entity_id", p.entity_id},
                {"context_id", p.context_id ? json(*p.context_id) : json(nullptr)},
                {"relevant", p.relevant},
                {"text", p.text}};
      out << j.dump() << '\n';
    }
    write_file(out_dir + "/prompts.jsonl", out.str());
  }
  json summary = {{"relation_id", grid.relation_id},
                  {"separator", grid.separator},
                  {"entities", grid.entities.size()},
                  {"queries", grid.queries.size()},
                  {"contexts", grid.contexts.size()},
                  {"prompts", grid.prompts.size()}};
  write_file(out_dir + "/grid.json", summary.dump(2) + "\n");
}

}  // namespace ctxsus::dataset
