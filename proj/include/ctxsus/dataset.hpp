// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctxsus::dataset {

enum class ContextType { base, assertive, negation };

const char* to_string(ContextType t);
ContextType context_type_from_string(const std::string& s);

/// open[0] -> open_qa, open[1] -> open_completion, closed[0] -> closed_1,
/// closed[1] -> closed_2. Additional templates are named open_3, closed_3, ...
struct QueryForm {
  bool closed = false;
  std::size_t index = 0;

  std::string name() const;
  std::string form_class() const { return closed ? "closed" : "open"; }
  friend auto operator<=>(const QueryForm&, const QueryForm&) = default;
};

QueryForm query_form_from_string(const std::string& s);

/// How the context pool of a relation is produced.
///  sampled: the constrained random sampling over context templates.
///  fixed:   every listed context is shown for every entity, rendered with
///           that entity's slots when it has any.
enum class ContextMode { sampled, fixed };

struct RelationSpec {
  std::string relation_id;
  std::vector<std::string> open_templates;
  std::vector<std::string> closed_templates;
  std::map<ContextType, std::vector<std::string>> context_templates;
  std::vector<std::string> answers;
  ContextMode mode = ContextMode::sampled;
  std::vector<std::string> fixed_contexts;

  std::vector<QueryForm> forms() const;
  const std::string& query_template(const QueryForm& f) const;
};

struct EntityRecord {
  std::string id;
  std::string surface;
  bool is_real = false;
  std::optional<std::string> gold_answer;
  std::string entity_class;
  /// Extra named slots, e.g. entity1 / entity2 for pair-valued entities.
  std::map<std::string, std::string> slots;
};

struct ContextInstance {
  std::string context_id;
  std::string text;
  ContextType type = ContextType::base;
  std::optional<std::string> mentioned_entity_id;
  std::optional<std::string> mentioned_answer;
};

struct QueryInstance {
  std::string query_id;
  std::string text;
  QueryForm form;
  std::string entity_id;
  std::optional<std::string> answer;  // filled for closed forms
};

/// Placeholders of the form {name}, in order of appearance.
std::vector<std::string> template_slots(std::string_view tmpl);

/// Substitutes every {name}. Unknown or missing slot values are errors;
/// nothing outside the placeholders is modified.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// {entity} plus the entity's extra slots, plus {answer} when given.
std::map<std::string, std::string> slot_values(const EntityRecord& entity,
                                               const std::optional<std::string>& answer = std::nullopt);

QueryInstance render_query(std::string_view tmpl, const QueryForm& form, const EntityRecord& entity,
                           const std::optional<std::string>& answer = std::nullopt);

/// Stable id derived from the rendered text, so the same context keeps its
/// id across seeds.
std::string context_id_for(std::string_view text);

RelationSpec parse_relation_spec(std::string_view json_text, const std::string& origin = "<memory>");
RelationSpec load_relation_spec(const std::string& path);
std::vector<EntityRecord> parse_entities(std::string_view json_text, const std::string& origin = "<memory>");
std::vector<EntityRecord> load_entities(const std::string& path);

/// Drops fake entities whose id or surface form is listed.
std::vector<EntityRecord> filter_leaked(const std::vector<EntityRecord>& entities,
                                        const std::vector<std::string>& exclusion);
std::vector<std::string> load_exclusion_list(const std::string& path);

/// Constrained sampling: every entity is mentioned in exactly per_entity
/// contexts, per_entity / 3 of each type, and no rendered text repeats.
std::vector<ContextInstance> sample_contexts(const RelationSpec& spec, const std::vector<EntityRecord>& entities,
                                             std::size_t n_total, std::size_t per_entity, std::uint64_t seed);

/// Context pool for ContextMode::fixed, rendered for one entity.
std::vector<ContextInstance> fixed_contexts_for(const RelationSpec& spec, const EntityRecord& entity);

struct GridPrompt {
  std::string text;
  QueryForm form;
  std::string query_id;
  std::string entity_id;
  std::optional<std::string> context_id;  // empty for the bare query
  std::string context_text;
  std::string query_text;
  bool relevant = false;
};

struct ExperimentGrid {
  std::string relation_id;
  std::string separator;
  std::vector<EntityRecord> entities;
  std::vector<QueryInstance> queries;     // form-major, then entity
  std::vector<ContextInstance> contexts;  // sampled mode pool
  /// Per (form, entity): the bare query first, then one prompt per context.
  std::vector<GridPrompt> prompts;
};

struct GridOptions {
  std::size_t n_contexts = 600;
  std::size_t per_entity = 6;
  /// Number of entities contexts are sampled about (0 = all). A seeded
  /// subset is drawn when smaller than the entity count.
  std::size_t context_entities = 0;
  std::string separator = " ";
};

/// Answer used to fill {answer} in closed queries: the gold answer when
/// known, otherwise a draw from the answer space keyed on the entity id, so
/// queries are identical across sampling seeds.
std::string closed_query_answer(const RelationSpec& spec, const EntityRecord& entity);

ExperimentGrid build_grid(const RelationSpec& spec, const std::vector<EntityRecord>& entities, std::uint64_t seed,
                          const GridOptions& options);

/// Concatenates context, separator and query; bare query when context is empty.
std::string join_prompt(std::string_view context, std::string_view separator, std::string_view query);

void write_grid(const ExperimentGrid& grid, const std::string& out_dir);

}  // namespace ctxsus::dataset
