// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#include "ctxsus/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <tuple>
#include <unordered_map>
#include <unordered_set>

#include "ctxsus/error.hpp"
#include "ctxsus/util.hpp"
#include "json.hpp"

#ifndef CTXSUS_VERSION
#define CTXSUS_VERSION "0.0.0"
#endif

namespace ctxsus::pipeline {

using nlohmann::json;

namespace {

const char* bool_str(std::optional<bool> b) {
  if (!b) return "";
  return *b ? "true" : "false";
}

std::optional<bool> parse_bool(const std::string& s, const std::string& what) {
  if (s.empty()) return std::nullopt;
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  fail(ErrorCode::invalid_argument, what + ": expected true/false, got '" + s + "'");
}

double parse_double(const std::string& s, const std::string& what) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorCode::invalid_argument, what + ": not a number: '" + s + "'");
  }
}

std::uint64_t parse_u64(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size() || s.empty() || s[0] == '-') throw std::invalid_argument(s);
    return v;
  } catch (const std::logic_error&) {
    fail(ErrorCode::invalid_argument, what + ": not an unsigned integer: '" + s + "'");
  }
}

std::string csv_text(const std::vector<csv::Row>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) csv::write_row(out, r);
  return out.str();
}

template <class T>
T take(const json& obj, const char* key, T fallback, std::set<std::string>& seen) {
  seen.insert(key);
  if (!obj.contains(key)) return fallback;
  return obj.at(key).get<T>();
}

void reject_unknown(const json& obj, const std::set<std::string>& seen, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!seen.count(it.key())) fail(ErrorCode::config, where + ": unknown key '" + it.key() + "'");
  }
}

double mean_of(const std::vector<double>& v) { return stats::mean(v); }

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  if (seeds.empty()) fail(ErrorCode::config, "config: seeds must be non-empty");
  if (!(alpha > 0.0 && alpha < 1.0)) fail(ErrorCode::config, "config: alpha must lie in (0, 1)");
  if (relations.empty()) fail(ErrorCode::config, "config: no relations");
  if (permutations < 1) fail(ErrorCode::config, "config: permutations must be >= 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) fail(ErrorCode::config, "config: epsilon must lie in (0, 1)");
  if (max_new_tokens < 1 || max_new_tokens > 64) fail(ErrorCode::config, "config: max_new_tokens must be in [1, 64]");
  const auto& k = provider.kind;
  if (k != "synthetic" && k != "remote" && k != "replay") {
    fail(ErrorCode::config, "config: unknown provider kind '" + k + "'");
  }
  if (k == "replay" && provider.cache.empty()) fail(ErrorCode::config, "config: replay provider needs a cache file");
  if (provider.max_in_flight < 1) fail(ErrorCode::config, "config: max_in_flight must be >= 1");
  if (out_dir.empty()) fail(ErrorCode::config, "config: out_dir is empty");
}

ExperimentConfig parse_config(const std::string& json_text, const std::string& base_dir) {
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.config_hash = to_hex(sha256(json_text));
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& ex) {
    fail(ErrorCode::config, std::string("config is not valid JSON: ") + ex.what());
  }
  if (!j.is_object()) fail(ErrorCode::config, "config must be a JSON object");
  try {
    std::set<std::string> seen;
    if (j.contains("provider")) {
      const auto& p = j.at("provider");
      std::set<std::string> ps;
      auto& pc = c.provider;
      pc.kind = take(p, "kind", pc.kind, ps);
      pc.endpoint = take(p, "endpoint", pc.endpoint, ps);
      pc.cache = take(p, "cache", pc.cache, ps);
      pc.max_in_flight = take(p, "max_in_flight", pc.max_in_flight, ps);
      pc.attempts = take(p, "attempts", pc.attempts, ps);
      pc.backoff_ms = take(p, "backoff_ms", pc.backoff_ms, ps);
      pc.timeout_s = take(p, "timeout_s", pc.timeout_s, ps);
      pc.recorded_provider = take(p, "recorded_provider", pc.recorded_provider, ps);
      pc.model_id = take(p, "model_id", pc.model_id, ps);
      pc.recorded_model = take(p, "recorded_model", pc.model_id, ps);
      pc.synthetic_seed = take(p, "seed", pc.synthetic_seed, ps);
      pc.beta_real = take(p, "beta_real", pc.beta_real, ps);
      pc.beta_fake = take(p, "beta_fake", pc.beta_fake, ps);
      pc.vocab_size = take(p, "vocab_size", pc.vocab_size, ps);
      pc.prior_noise = take(p, "prior_noise", pc.prior_noise, ps);
      pc.gold_boost = take(p, "gold_boost", pc.gold_boost, ps);
      pc.pull_noise = take(p, "pull_noise", pc.pull_noise, ps);
      pc.answer_boost = take(p, "answer_boost", pc.answer_boost, ps);
      pc.irrelevant_scale = take(p, "irrelevant_scale", pc.irrelevant_scale, ps);
      pc.negation_scale = take(p, "negation_scale", pc.negation_scale, ps);
      reject_unknown(p, ps, "config.provider");
      if (!pc.cache.empty()) pc.cache = resolve_path(base_dir, pc.cache);
    }
    seen.insert("provider");
    seen.insert("relations");
    for (const auto& r : j.at("relations")) {
      std::set<std::string> rs;
      RelationInput in;
      in.spec_path = resolve_path(base_dir, take(r, "spec", std::string(), rs));
      in.entities_path = resolve_path(base_dir, take(r, "entities", std::string(), rs));
      const auto ex = take(r, "exclude", std::string(), rs);
      if (!ex.empty()) in.exclude_path = resolve_path(base_dir, ex);
      reject_unknown(r, rs, "config.relations[]");
      c.relations.push_back(std::move(in));
    }
    c.seeds = take(j, "seeds", c.seeds, seen);
    c.n_contexts = take(j, "n_contexts", c.n_contexts, seen);
    c.per_entity = take(j, "per_entity", c.per_entity, seen);
    c.context_entities = take(j, "context_entities", c.context_entities, seen);
    c.separator = take(j, "separator", c.separator, seen);
    c.prior_mode = info::prior_mode_from_string(take(j, "prior_mode", std::string("marginal"), seen));
    c.epsilon = take(j, "epsilon", c.epsilon, seen);
    c.permutations = take(j, "permutations", c.permutations, seen);
    c.alpha = take(j, "alpha", c.alpha, seen);
    c.memorization = take(j, "memorization", c.memorization, seen);
    c.max_new_tokens = take(j, "max_new_tokens", c.max_new_tokens, seen);
    c.workers = take(j, "workers", c.workers, seen);
    c.out_dir = resolve_path(base_dir, take(j, "out_dir", c.out_dir, seen));
    reject_unknown(j, seen, "config");
  } catch (const json::exception& ex) {
    fail(ErrorCode::config, std::string("config: ") + ex.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::config) throw;
    fail(ErrorCode::config, e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const Error& e) {
    fail(ErrorCode::config, e.what());
  }
  const auto parent = std::filesystem::path(path).parent_path().string();
  return parse_config(text, parent.empty() ? "." : parent);
}

void apply_overrides(ExperimentConfig& config, const Overrides& o) {
  // Work on a copy so a rejected override leaves the config untouched.
  ExperimentConfig next = config;
  if (o.seed) next.seeds = {*o.seed};
  if (o.provider) next.provider.kind = *o.provider;
  if (o.endpoint) next.provider.endpoint = *o.endpoint;
  if (o.prior) {
    try {
      next.prior_mode = info::prior_mode_from_string(*o.prior);
    } catch (const Error& e) {
      fail(ErrorCode::config, e.what());
    }
  }
  if (o.out_dir) next.out_dir = *o.out_dir;
  next.validate();
  config = std::move(next);
}

// ---------------------------------------------------------------------------

std::vector<RelationData> load_relations(const ExperimentConfig& config) {
  std::vector<RelationData> out;
  std::unordered_set<std::string> ids;
  for (const auto& in : config.relations) {
    RelationData r;
    try {
      r.spec = dataset::load_relation_spec(in.spec_path);
      r.entities = dataset::load_entities(in.entities_path);
      if (!in.exclude_path.empty()) {
        r.entities = dataset::filter_leaked(r.entities, dataset::load_exclusion_list(in.exclude_path));
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::io) fail(ErrorCode::config, e.what());
      throw;
    }
    if (!ids.insert(r.spec.relation_id).second) {
      fail(ErrorCode::config, "relation '" + r.spec.relation_id + "' listed twice");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::shared_ptr<model::Provider> make_provider(const ExperimentConfig& config,
                                               const std::vector<RelationData>& relations) {
  const auto& pc = config.provider;
  if (pc.kind == "remote") {
    model::RemoteOptions ro;
    ro.endpoint = pc.endpoint;
    ro.attempts = pc.attempts;
    ro.backoff_ms = pc.backoff_ms;
    ro.timeout_s = pc.timeout_s;
    return std::make_shared<model::RemoteProvider>(ro);
  }
  if (pc.kind == "replay") return std::make_shared<model::ReplayProvider>(pc.recorded_provider, pc.recorded_model);

  model::SyntheticModelSpec spec;
  spec.seed = pc.synthetic_seed;
  spec.prior_noise = pc.prior_noise;
  spec.gold_boost = pc.gold_boost;
  spec.pull_noise = pc.pull_noise;
  spec.answer_boost = pc.answer_boost;
  spec.irrelevant_scale = pc.irrelevant_scale;
  spec.negation_scale = pc.negation_scale;
  std::unordered_set<std::string> in_vocab;
  for (const auto& r : relations) {
    for (const auto& a : r.spec.answers) {
      if (in_vocab.insert(a).second) spec.vocab.push_back(a);
    }
    for (const auto& e : r.entities) {
      model::SyntheticEntity se;
      se.beta = e.is_real ? pc.beta_real : pc.beta_fake;
      se.surface = e.surface;
      spec.entities[e.id] = se;
      if (e.gold_answer) spec.gold_answers[e.id] = *e.gold_answer;
    }
  }
  for (std::size_t i = 0; spec.vocab.size() < pc.vocab_size; ++i) {
    std::string pad = "<pad" + std::to_string(i) + ">";
    if (in_vocab.insert(pad).second) spec.vocab.push_back(pad);
  }
  if (spec.vocab.empty()) fail(ErrorCode::config, "synthetic provider: relations define no answers and vocab_size is 0");
  return std::make_shared<model::SyntheticProvider>(std::move(spec), pc.model_id);
}

namespace {

dataset::GridOptions grid_options(const ExperimentConfig& config) {
  dataset::GridOptions g;
  g.n_contexts = config.n_contexts;
  g.per_entity = config.per_entity;
  g.context_entities = config.context_entities;
  g.separator = config.separator;
  return g;
}

}  // namespace

void build_datasets(const ExperimentConfig& config) {
  const auto relations = load_relations(config);
  for (const auto seed : config.seeds) {
    for (const auto& r : relations) {
      const auto grid = dataset::build_grid(r.spec, r.entities, seed, grid_options(config));
      const auto dir = (std::filesystem::path(config.out_dir) / "grids" / r.spec.relation_id /
                        ("seed_" + std::to_string(seed))).string();
      dataset::write_grid(grid, dir);
    }
  }
}

// ---------------------------------------------------------------------------
// Score records

const char* to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::persuasion: return "persuasion";
    case ScoreKind::susceptibility: return "susceptibility";
    case ScoreKind::entity_independent_persuasion: return "entity_independent_persuasion";
    case ScoreKind::entity_independent_susceptibility: return "entity_independent_susceptibility";
  }
  return "?";
}

ScoreKind score_kind_from_string(const std::string& s) {
  for (auto k : {ScoreKind::persuasion, ScoreKind::susceptibility, ScoreKind::entity_independent_persuasion,
                 ScoreKind::entity_independent_susceptibility}) {
    if (s == to_string(k)) return k;
  }
  fail(ErrorCode::invalid_argument, "unknown score kind '" + s + "'");
}

static const csv::Row kScoreHeader = {"model_id", "relation", "query_form", "entity_id", "context_id", "kind",
                                      "value",    "seed",     "prior_mode", "context_type", "relevant", "is_real"};

std::string scores_to_csv(const std::vector<ScoreRecord>& records) {
  std::ostringstream out;
  csv::write_row(out, kScoreHeader);
  for (const auto& r : records) {
    csv::write_row(out, {r.model_id, r.relation, r.query_form, r.entity_id, r.context_id.value_or(""),
                         to_string(r.kind), format_double(r.value), std::to_string(r.seed),
                         info::to_string(r.prior_mode), r.context_type, bool_str(r.relevant), bool_str(r.is_real)});
  }
  return out.str();
}

std::vector<ScoreRecord> scores_from_csv(const std::string& csv_text, const std::string& origin) {
  const auto t = csv::Table::from_text(csv_text, origin);
  std::vector<std::size_t> col;
  for (const auto& name : kScoreHeader) col.push_back(t.column(name));
  std::vector<ScoreRecord> out;
  out.reserve(t.rows().size());
  for (std::size_t i = 0; i < t.rows().size(); ++i) {
    const auto& row = t.rows()[i];
    const std::string where = origin + " row " + std::to_string(i + 2);
    ScoreRecord r;
    r.model_id = row[col[0]];
    r.relation = row[col[1]];
    r.query_form = row[col[2]];
    r.entity_id = row[col[3]];
    if (!row[col[4]].empty()) r.context_id = row[col[4]];
    r.kind = score_kind_from_string(row[col[5]]);
    r.value = parse_double(row[col[6]], where);
    r.seed = parse_u64(row[col[7]], where);
    r.prior_mode = info::prior_mode_from_string(row[col[8]]);
    r.context_type = row[col[9]];
    r.relevant = parse_bool(row[col[10]], where);
    r.is_real = parse_bool(row[col[11]], where);
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<ScoreRecord> load_scores(const std::string& path) { return scores_from_csv(read_file(path), path); }

namespace {

std::string memorization_to_csv(const std::vector<MemorizationRecord>& rows) {
  std::vector<csv::Row> out;
  out.push_back({"seed", "relation", "query_form", "entity_id", "original_answer", "p_o", "p_s", "n_other", "mr"});
  for (const auto& m : rows) {
    out.push_back({std::to_string(m.seed), m.relation, m.query_form, m.entity_id, m.original_answer,
                   std::to_string(m.ratio.p_o), std::to_string(m.ratio.p_s), std::to_string(m.n_other),
                   m.ratio.value ? format_double(*m.ratio.value) : ""});
  }
  return csv_text(out);
}

struct Unit {
  std::size_t begin = 0;  // index of the bare prompt
  std::size_t end = 0;
};

struct UnitResult {
  bool done = false;
  std::vector<ScoreRecord> records;  // susceptibility first, then persuasion
  std::optional<MemorizationRecord> memo;
};

json run_metadata(const ExperimentConfig& config, const std::string& provider_id, const std::string& model_id,
                  const std::string& status, std::size_t n_scores, std::uint64_t backend_calls) {
  json rel = json::array();
  for (const auto& r : config.relations) rel.push_back({{"spec", r.spec_path}, {"entities", r.entities_path}});
  return {{"config_hash", config.config_hash},
          {"provider", provider_id},
          {"model_id", model_id},
          {"version", std::string("v") + CTXSUS_VERSION},
          {"separator", config.separator},
          {"prior_mode", info::to_string(config.prior_mode)},
          {"epsilon", config.epsilon},
          {"approximation", "uniform-entity"},
          {"seeds", config.seeds},
          {"n_contexts", config.n_contexts},
          {"per_entity", config.per_entity},
          {"context_entities", config.context_entities},
          {"permutations", config.permutations},
          {"alpha", config.alpha},
          {"relations", rel},
          {"status", status},
          {"n_scores", n_scores},
          {"backend_calls", backend_calls}};
}

void write_outputs_partial(const ExperimentConfig& config, const std::string& provider_id, const std::string& model_id,
                           const std::vector<ScoreRecord>& scores, const std::vector<MemorizationRecord>& memo,
                           const std::string& status, std::uint64_t calls) {
  const std::filesystem::path dir(config.out_dir);
  write_file((dir / "scores.csv").string(), scores_to_csv(scores));
  if (config.memorization) write_file((dir / "memorization.csv").string(), memorization_to_csv(memo));
  write_file((dir / "run.json").string(),
             run_metadata(config, provider_id, model_id, status, scores.size(), calls).dump(2) + "\n");
}

}  // namespace

ExperimentResult score_experiment(const ExperimentConfig& config, const std::shared_ptr<model::Provider>& provider,
                                  bool write_outputs) {
  config.validate();
  const auto relations = load_relations(config);
  auto cache = std::make_shared<model::DistributionCache>(config.provider.cache);
  model::SourceOptions so;
  so.max_in_flight = config.provider.max_in_flight;
  model::DistributionSource source(provider, cache, so);
  const std::size_t workers = config.workers ? config.workers : config.provider.max_in_flight;

  ExperimentResult result;
  result.model_id = provider->model_id();
  const std::string provider_id = provider->provider_id();
  const bool no_context = config.prior_mode == info::PriorMode::no_context;

  for (const auto seed : config.seeds) {
    for (const auto& rel : relations) {
      const auto grid = dataset::build_grid(rel.spec, rel.entities, seed, grid_options(config));
      std::unordered_map<std::string, const dataset::ContextInstance*> ctx_by_id;
      for (const auto& c : grid.contexts) ctx_by_id[c.context_id] = &c;
      std::unordered_map<std::string, const dataset::EntityRecord*> ent_by_id;
      for (const auto& e : grid.entities) ent_by_id[e.id] = &e;

      std::vector<Unit> units;
      for (std::size_t i = 0; i < grid.prompts.size(); ++i) {
        if (!grid.prompts[i].context_id) {
          if (!units.empty()) units.back().end = i;
          units.push_back({i, grid.prompts.size()});
        }
      }
      for (const auto& u : units) {
        if (u.end - u.begin < 2) {
          fail(ErrorCode::config, "relation " + rel.spec.relation_id + ": query " + grid.prompts[u.begin].query_id +
                                      " has no contexts");
        }
      }

      std::vector<UnitResult> out(units.size());
      auto run_unit = [&](std::size_t ui) {
        const Unit& u = units[ui];
        const auto& bare_gp = grid.prompts[u.begin];
        std::vector<model::Prompt> prompts;
        prompts.reserve(u.end - u.begin);
        for (std::size_t i = u.begin; i < u.end; ++i) {
          const auto& gp = grid.prompts[i];
          model::Prompt p;
          p.text = gp.text;
          p.context_id = gp.context_id;
          p.query_id = gp.query_id;
          p.entity_id = gp.entity_id;
          p.context_text = gp.context_text;
          p.query_text = gp.query_text;
          prompts.push_back(std::move(p));
        }
        auto dists = source.batch_get(prompts, 1);
        const auto bare = dists.front();
        std::vector<std::string> ids;
        for (std::size_t i = 1; i < prompts.size(); ++i) ids.push_back(*prompts[i].context_id);
        std::vector<info::AnswerDistribution> rows(std::make_move_iterator(dists.begin() + 1),
                                                   std::make_move_iterator(dists.end()));
        info::ConditionalTable table(std::move(ids), std::move(rows));

        std::vector<double> psi;
        double chi = 0.0;
        if (no_context) {
          const auto prior = info::apply_floor(bare, config.epsilon);
          for (const auto& row : table.rows()) psi.push_back(info::persuasion_score(row, prior));
          chi = info::stable_sum(psi) / static_cast<double>(psi.size());
        } else {
          psi = info::persuasion_scores(table);
          chi = info::susceptibility_score(table);
        }

        const auto* ent = ent_by_id.at(bare_gp.entity_id);
        UnitResult& r = out[ui];
        ScoreRecord base;
        base.model_id = result.model_id;
        base.relation = rel.spec.relation_id;
        base.query_form = bare_gp.form.name();
        base.entity_id = bare_gp.entity_id;
        base.seed = seed;
        base.prior_mode = config.prior_mode;
        base.is_real = ent->is_real;
        ScoreRecord s = base;
        s.kind = ScoreKind::susceptibility;
        s.value = chi;
        r.records.push_back(s);
        for (std::size_t i = 0; i < psi.size(); ++i) {
          const auto& gp = grid.prompts[u.begin + 1 + i];
          ScoreRecord p = base;
          p.kind = ScoreKind::persuasion;
          p.context_id = gp.context_id;
          p.value = psi[i];
          p.context_type = dataset::to_string(ctx_by_id.at(*gp.context_id)->type);
          p.relevant = gp.relevant;
          r.records.push_back(std::move(p));
        }

        if (config.memorization && !bare_gp.form.closed) {
          MemorizationRecord m;
          m.seed = seed;
          m.relation = rel.spec.relation_id;
          m.query_form = bare_gp.form.name();
          m.entity_id = bare_gp.entity_id;
          m.original_answer = source.generate(prompts.front(), config.max_new_tokens);
          const auto original_norm = stats::normalize_answer(m.original_answer);
          std::vector<stats::AgreementLabel> labels;
          for (std::size_t i = 1; i < prompts.size(); ++i) {
            const auto& gp = grid.prompts[u.begin + i];
            const auto* c = ctx_by_id.at(*gp.context_id);
            if (!gp.relevant || c->type == dataset::ContextType::negation || !c->mentioned_answer) continue;
            if (stats::normalize_answer(*c->mentioned_answer) == original_norm) continue;
            const auto gen = source.generate(prompts[i], config.max_new_tokens);
            labels.push_back(stats::classify_answer(gen, *c->mentioned_answer, m.original_answer));
          }
          m.ratio = stats::memorization_ratio(labels);
          m.n_other = labels.size() - m.ratio.p_o - m.ratio.p_s;
          r.memo = std::move(m);
        }
        r.done = true;
      };

      try {
        parallel_for(units.size(), workers, run_unit);
      } catch (const Error&) {
        for (auto& r : out) {
          if (!r.done) continue;
          for (auto& rec : r.records) result.scores.push_back(std::move(rec));
          if (r.memo) result.memorization.push_back(std::move(*r.memo));
        }
        if (write_outputs) {
          write_outputs_partial(config, provider_id, result.model_id, result.scores, result.memorization, "partial",
                                source.backend_calls());
        }
        throw;
      }

      // Entity-independent scores, uniform over entities.
      std::map<std::string, std::vector<std::size_t>> units_by_form;
      for (std::size_t ui = 0; ui < units.size(); ++ui) {
        units_by_form[grid.prompts[units[ui].begin].form.name()].push_back(ui);
      }
      std::vector<ScoreRecord> independent;
      for (const auto& form : rel.spec.forms()) {
        const auto& members = units_by_form[form.name()];
        std::vector<double> chis;
        std::map<std::string, std::vector<double>> psi_by_ctx;
        std::vector<std::string> ctx_order;
        for (auto ui : members) {
          const auto& recs = out[ui].records;
          chis.push_back(recs.front().value);
          for (std::size_t i = 1; i < recs.size(); ++i) {
            auto [it, inserted] = psi_by_ctx.try_emplace(*recs[i].context_id);
            if (inserted) ctx_order.push_back(*recs[i].context_id);
            it->second.push_back(recs[i].value);
          }
        }
        ScoreRecord base;
        base.model_id = result.model_id;
        base.relation = rel.spec.relation_id;
        base.query_form = form.name();
        base.seed = seed;
        base.prior_mode = config.prior_mode;
        for (const auto& cid : ctx_order) {
          const auto& v = psi_by_ctx[cid];
          if (v.size() != members.size()) continue;  // context not shown to every entity
          ScoreRecord k = base;
          k.kind = ScoreKind::entity_independent_persuasion;
          k.context_id = cid;
          k.value = info::stable_sum(v) / static_cast<double>(v.size());
          k.context_type = dataset::to_string(ctx_by_id.at(cid)->type);
          independent.push_back(std::move(k));
        }
        ScoreRecord g = base;
        g.kind = ScoreKind::entity_independent_susceptibility;
        g.value = info::stable_sum(chis) / static_cast<double>(chis.size());
        independent.push_back(std::move(g));
      }

      for (auto& r : out) {
        for (auto& rec : r.records) result.scores.push_back(std::move(rec));
        if (r.memo) result.memorization.push_back(std::move(*r.memo));
      }
      for (auto& rec : independent) result.scores.push_back(std::move(rec));
    }
  }
  result.backend_calls = source.backend_calls();
  if (write_outputs) {
    write_outputs_partial(config, provider_id, result.model_id, result.scores, result.memorization, "complete",
                          result.backend_calls);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Hypothesis suite

namespace {

struct GroupKey {
  std::uint64_t seed;
  std::string relation;
  std::string form;
  friend auto operator<=>(const GroupKey&, const GroupKey&) = default;
};

struct EntityMeans {
  std::map<std::string, std::vector<double>> relevant, irrelevant, assertive, base, negation;
};

std::vector<double> means(const std::map<std::string, std::vector<double>>& by_entity) {
  std::vector<double> out;
  for (const auto& [e, v] : by_entity) out.push_back(mean_of(v));
  return out;
}

}  // namespace

std::vector<SuiteRow> hypothesis_suite(const std::vector<ScoreRecord>& scores, const SuiteOptions& options) {
  if (!(options.alpha > 0.0 && options.alpha < 1.0)) fail(ErrorCode::config, "alpha must lie in (0, 1)");
  if (options.permutations < 1) fail(ErrorCode::config, "permutations must be >= 1");

  std::map<GroupKey, EntityMeans> persuasion;
  std::map<GroupKey, std::pair<std::vector<double>, std::vector<double>>> familiarity;  // fake, real
  for (const auto& r : scores) {
    const GroupKey key{r.seed, r.relation, r.query_form};
    if (r.kind == ScoreKind::persuasion) {
      auto& g = persuasion[key];
      if (!r.relevant) continue;
      if (!*r.relevant) {
        g.irrelevant[r.entity_id].push_back(r.value);
        continue;
      }
      g.relevant[r.entity_id].push_back(r.value);
      if (r.context_type == "assertive") g.assertive[r.entity_id].push_back(r.value);
      if (r.context_type == "base") g.base[r.entity_id].push_back(r.value);
      if (r.context_type == "negation") g.negation[r.entity_id].push_back(r.value);
    } else if (r.kind == ScoreKind::susceptibility) {
      auto& f = familiarity[key];
      if (!r.is_real) continue;
      (*r.is_real ? f.second : f.first).push_back(r.value);
    }
  }
  std::set<GroupKey> keys;
  for (const auto& [k, v] : persuasion) keys.insert(k);
  for (const auto& [k, v] : familiarity) keys.insert(k);

  std::vector<SuiteRow> rows;
  auto run = [&](const GroupKey& key, const char* hypothesis, const std::vector<double>& a, const std::vector<double>& b,
                 stats::Tail tail) {
    SuiteRow row;
    row.seed = key.seed;
    row.relation = key.relation;
    row.query_form = key.form;
    row.form_class = dataset::query_form_from_string(key.form).form_class();
    row.hypothesis = hypothesis;
    row.test.tail = tail;
    row.test.n_a = a.size();
    row.test.n_b = b.size();
    row.test.k = options.permutations;
    row.test.p_raw = row.test.p_adjusted = std::numeric_limits<double>::quiet_NaN();
    if (!a.empty()) row.mean_a = mean_of(a);
    if (!b.empty()) row.mean_b = mean_of(b);
    if (a.size() < 2 || b.size() < 2) {
      row.status = "skipped";
      row.reason = "fewer than 2 samples per side";
    } else {
      const auto test_seed = derive_seed(key.seed, {"test", key.relation, key.form, hypothesis});
      try {
        row.test = stats::permutation_test(a, b, tail, options.permutations, test_seed);
        row.status = "ok";
      } catch (const Error& e) {
        if (e.code() != ErrorCode::undefined) throw;
        row.status = "skipped";
        row.reason = e.what();
      }
    }
    rows.push_back(std::move(row));
  };

  for (const auto& key : keys) {
    const auto pit = persuasion.find(key);
    if (pit != persuasion.end()) {
      const auto& g = pit->second;
      run(key, "relevance", means(g.relevant), means(g.irrelevant), stats::Tail::greater);
      run(key, "assertiveness", means(g.assertive), means(g.base), stats::Tail::greater);
      run(key, "negation", means(g.negation), means(g.base), stats::Tail::two_sided);
    }
    const auto fit = familiarity.find(key);
    if (fit != familiarity.end()) {
      run(key, "familiarity", fit->second.first, fit->second.second, stats::Tail::greater);
    }
  }

  // BH within (seed, hypothesis, form class).
  std::map<std::tuple<std::uint64_t, std::string, std::string>, std::vector<std::size_t>> families;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].status == "ok") families[{rows[i].seed, rows[i].hypothesis, rows[i].form_class}].push_back(i);
  }
  for (const auto& [fam, idx] : families) {
    std::vector<double> p;
    for (auto i : idx) p.push_back(rows[i].test.p_raw);
    const auto bh = stats::bh_correct(p, options.alpha);
    for (std::size_t j = 0; j < idx.size(); ++j) {
      rows[idx[j]].test.p_adjusted = bh.adjusted[j];
      rows[idx[j]].rejected = bh.rejected[j];
    }
  }
  return rows;
}

std::string suite_to_csv(const std::vector<SuiteRow>& rows) {
  std::vector<csv::Row> out;
  out.push_back({"seed", "relation", "query_form", "form_class", "hypothesis", "tail", "status", "reason", "n_a",
                 "n_b", "mean_a", "mean_b", "statistic", "effect_size", "p_raw", "p_adjusted", "rejected", "k",
                 "test_seed"});
  for (const auto& r : rows) {
    const bool ok = r.status == "ok";
    out.push_back({std::to_string(r.seed), r.relation, r.query_form, r.form_class, r.hypothesis,
                   stats::to_string(r.test.tail), r.status, r.reason, std::to_string(r.test.n_a),
                   std::to_string(r.test.n_b), format_double(r.mean_a), format_double(r.mean_b),
                   ok ? format_double(r.test.statistic) : "", ok ? format_double(r.test.effect_size) : "",
                   ok ? format_double(r.test.p_raw) : "", ok ? format_double(r.test.p_adjusted) : "",
                   ok ? (r.rejected ? "true" : "false") : "", std::to_string(r.test.k),
                   ok ? std::to_string(r.test.seed) : ""});
  }
  return csv_text(out);
}

// ---------------------------------------------------------------------------
// Reliability

VarianceReport reliability_report(const std::vector<ScoreRecord>& scores) {
  using SeedKey = std::tuple<std::string, std::string, std::string, std::string, std::string, std::string>;
  using FormKey =
      std::tuple<std::uint64_t, std::string, std::string, std::string, std::string, std::string, std::string>;
  std::map<SeedKey, std::vector<double>> by_seed;
  std::map<FormKey, std::vector<double>> by_form;
  for (const auto& r : scores) {
    const std::string ctx = r.context_id.value_or("");
    const std::string kind = to_string(r.kind);
    const std::string prior = info::to_string(r.prior_mode);
    by_seed[{r.relation, r.query_form, r.entity_id, ctx, kind, prior}].push_back(r.value);
    const auto cls = dataset::query_form_from_string(r.query_form).form_class();
    by_form[{r.seed, r.relation, cls, r.entity_id, ctx, kind, prior}].push_back(r.value);
  }
  VarianceReport rep;
  for (const auto& [k, v] : by_seed) {
    if (v.size() < 2) {
      ++rep.singleton_seed_keys;
      continue;
    }
    VarianceRow row;
    row.scope = "seed";
    std::tie(row.relation, row.group, row.entity_id, row.context_id, row.kind, row.prior_mode) = k;
    row.n = v.size();
    row.mean = stats::mean(v);
    row.variance = stats::sample_variance(v);
    rep.rows.push_back(std::move(row));
  }
  for (const auto& [k, v] : by_form) {
    if (v.size() < 2) {
      ++rep.singleton_form_keys;
      continue;
    }
    VarianceRow row;
    row.scope = "form";
    std::uint64_t seed = 0;
    std::tie(seed, row.relation, row.group, row.entity_id, row.context_id, row.kind, row.prior_mode) = k;
    row.group += ":seed_" + std::to_string(seed);
    row.n = v.size();
    row.mean = stats::mean(v);
    row.variance = stats::sample_variance(v);
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

std::string variance_to_csv(const VarianceReport& report) {
  std::vector<csv::Row> out;
  out.push_back({"scope", "relation", "group", "entity_id", "context_id", "kind", "prior_mode", "n", "mean",
                 "variance"});
  for (const auto& r : report.rows) {
    out.push_back({r.scope, r.relation, r.group, r.entity_id, r.context_id, r.kind, r.prior_mode,
                   std::to_string(r.n), format_double(r.mean), format_double(r.variance)});
  }
  return csv_text(out);
}

// ---------------------------------------------------------------------------

ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const auto relations = load_relations(config);
  auto provider = make_provider(config, relations);
  auto result = score_experiment(config, provider, true);
  const std::filesystem::path dir(config.out_dir);
  const auto suite = hypothesis_suite(result.scores, {config.permutations, config.alpha});
  write_file((dir / "tests.csv").string(), suite_to_csv(suite));
  write_file((dir / "variance.csv").string(), variance_to_csv(reliability_report(result.scores)));
  return result;
}

// ---------------------------------------------------------------------------
// Analysis join

JoinSummary analysis_join(const JoinInputs& inputs, const std::string& out_dir) {
  const auto scores = load_scores(inputs.scores_csv);

  std::unordered_map<std::string, std::uint64_t> counts;
  if (!inputs.counts_csv.empty()) {
    const auto t = csv::Table::load(inputs.counts_csv);
    const auto ce = t.column("entity");
    const auto cc = t.column("count");
    for (const auto& row : t.rows()) counts[row[ce]] += parse_u64(row[cc], inputs.counts_csv);
  }
  std::map<std::pair<std::string, std::string>, std::uint64_t> degree_exact;
  std::unordered_map<std::string, std::vector<std::uint64_t>> degree_any;
  if (!inputs.degrees_csv.empty()) {
    const auto t = csv::Table::load(inputs.degrees_csv);
    const auto ce = t.column("entity");
    const auto cd = t.column("degree");
    const bool has_rel = t.has_column("relation");
    const auto cr = has_rel ? t.column("relation") : 0;
    for (const auto& row : t.rows()) {
      const auto d = parse_u64(row[cd], inputs.degrees_csv);
      if (has_rel) degree_exact[{row[ce], row[cr]}] = d;
      degree_any[row[ce]].push_back(d);
    }
  }
  std::map<std::tuple<std::string, std::string, std::string, std::string>, double> mr;
  if (!inputs.mr_csv.empty()) {
    const auto t = csv::Table::load(inputs.mr_csv);
    const auto cs = t.column("seed"), cr = t.column("relation"), cf = t.column("query_form"),
               ce = t.column("entity_id"), cm = t.column("mr");
    for (const auto& row : t.rows()) {
      if (row[cm].empty()) continue;
      mr[{row[cs], row[cr], row[cf], row[ce]}] = parse_double(row[cm], inputs.mr_csv);
    }
  }

  std::vector<csv::Row> out;
  out.push_back({"seed", "relation", "query_form", "entity_id", "is_real", "susceptibility", "cooc_count",
                 "log1p_count", "degree", "log1p_degree", "mr"});
  JoinSummary summary;
  std::vector<double> chi_c, x_c, chi_d, x_d;
  std::vector<std::pair<double, double>> mr_chi;
  std::size_t matched = 0;
  for (const auto& r : scores) {
    if (r.kind != ScoreKind::susceptibility) continue;
    csv::Row row{std::to_string(r.seed), r.relation, r.query_form, r.entity_id, bool_str(r.is_real),
                 format_double(r.value), "", "", "", "", ""};
    bool any = false;
    if (auto it = counts.find(r.entity_id); it != counts.end()) {
      const double x = std::log1p(static_cast<double>(it->second));
      row[6] = std::to_string(it->second);
      row[7] = format_double(x);
      chi_c.push_back(r.value);
      x_c.push_back(x);
      any = true;
    }
    std::optional<std::uint64_t> deg;
    if (auto it = degree_exact.find({r.entity_id, r.relation}); it != degree_exact.end()) {
      deg = it->second;
    } else if (auto jt = degree_any.find(r.entity_id); jt != degree_any.end() && jt->second.size() == 1) {
      deg = jt->second.front();
    }
    if (deg) {
      const double x = std::log1p(static_cast<double>(*deg));
      row[8] = std::to_string(*deg);
      row[9] = format_double(x);
      chi_d.push_back(r.value);
      x_d.push_back(x);
      any = true;
    }
    if (auto it = mr.find({std::to_string(r.seed), r.relation, r.query_form, r.entity_id}); it != mr.end()) {
      row[10] = format_double(it->second);
      mr_chi.emplace_back(it->second, r.value);
      any = true;
    }
    if (any) ++matched;
    out.push_back(std::move(row));
  }
  summary.rows = out.size() - 1;
  if (summary.rows == 0) fail(ErrorCode::invalid_argument, "join: " + inputs.scores_csv + " has no susceptibility rows");
  const bool sides = !inputs.counts_csv.empty() || !inputs.degrees_csv.empty() || !inputs.mr_csv.empty();
  if (sides && matched == 0) fail(ErrorCode::invalid_argument, "join: no entity matched any joined table");

  auto rho = [](const std::vector<double>& a, const std::vector<double>& b) -> std::optional<double> {
    try {
      return stats::spearman(a, b);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::undefined || e.code() == ErrorCode::invalid_argument) return std::nullopt;
      throw;
    }
  };
  summary.n_count = chi_c.size();
  summary.n_degree = chi_d.size();
  summary.rho_count = rho(chi_c, x_c);
  summary.rho_degree = rho(chi_d, x_d);
  summary.mr_bins.resize(5);
  for (std::size_t b = 0; b < 5; ++b) {
    summary.mr_bins[b].lo = 0.2 * static_cast<double>(b);
    summary.mr_bins[b].hi = 0.2 * static_cast<double>(b + 1);
  }
  std::vector<std::vector<double>> bin_vals(5);
  for (const auto& [m, chi] : mr_chi) {
    const auto b = std::min<std::size_t>(4, static_cast<std::size_t>(std::max(0.0, m) * 5.0));
    bin_vals[b].push_back(chi);
  }
  for (std::size_t b = 0; b < 5; ++b) {
    auto& bin = summary.mr_bins[b];
    bin.n = bin_vals[b].size();
    if (bin.n) {
      bin.mean_susceptibility = stats::mean(bin_vals[b]);
      bin.max_susceptibility = *std::max_element(bin_vals[b].begin(), bin_vals[b].end());
    }
  }

  const std::filesystem::path dir(out_dir);
  write_file((dir / "joined.csv").string(), csv_text(out));
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json bins = json::array();
  for (const auto& b : summary.mr_bins) {
    bins.push_back({{"lo", b.lo}, {"hi", b.hi}, {"n", b.n},
                    {"mean_susceptibility", b.n ? json(b.mean_susceptibility) : json(nullptr)},
                    {"max_susceptibility", b.n ? json(b.max_susceptibility) : json(nullptr)}});
  }
  json j = {{"rows", summary.rows},
            {"spearman_susceptibility_log1p_count", opt(summary.rho_count)},
            {"n_count", summary.n_count},
            {"spearman_susceptibility_log1p_degree", opt(summary.rho_degree)},
            {"n_degree", summary.n_degree},
            {"mr_bins", bins}};
  write_file((dir / "correlations.json").string(), j.dump(2) + "\n");
  return summary;
}

// ---------------------------------------------------------------------------
// Report

std::string report(const std::string& run_dir) {
  const std::filesystem::path dir(run_dir);
  std::ostringstream md;
  md << "# Run report\n\n";
  if (std::filesystem::exists(dir / "run.json")) {
    const auto j = json::parse(read_file((dir / "run.json").string()));
    md << "- model: " << j.value("model_id", "") << " (" << j.value("provider", "") << ")\n";
    md << "- prior mode: " << j.value("prior_mode", "") << "\n";
    md << "- status: " << j.value("status", "") << "\n";
    md << "- config hash: " << j.value("config_hash", "") << "\n";
  }
  if (!std::filesystem::exists(dir / "scores.csv")) {
    fail(ErrorCode::io, "report: " + (dir / "scores.csv").string() + " not found");
  }
  const auto scores = load_scores((dir / "scores.csv").string());
  std::map<std::string, std::vector<double>> by_kind;
  for (const auto& r : scores) by_kind[to_string(r.kind)].push_back(r.value);
  md << "\n## Scores\n\n| kind | n | mean | max |\n|---|---|---|---|\n";
  char buf[128];
  for (const auto& [k, v] : by_kind) {
    std::snprintf(buf, sizeof buf, "| %s | %zu | %.6g | %.6g |\n", k.c_str(), v.size(), stats::mean(v),
                  *std::max_element(v.begin(), v.end()));
    md << buf;
  }
  if (std::filesystem::exists(dir / "tests.csv")) {
    const auto t = csv::Table::load((dir / "tests.csv").string());
    const auto ch = t.column("hypothesis"), cc = t.column("form_class"), cs = t.column("status"),
               cr = t.column("rejected");
    std::map<std::pair<std::string, std::string>, std::array<std::size_t, 3>> agg;  // rejected, tested, skipped
    for (const auto& row : t.rows()) {
      auto& a = agg[{row[ch], row[cc]}];
      if (row[cs] == "ok") {
        ++a[1];
        if (row[cr] == "true") ++a[0];
      } else {
        ++a[2];
      }
    }
    md << "\n## Hypothesis tests\n\n| hypothesis | class | rejected | tested | skipped |\n|---|---|---|---|---|\n";
    for (const auto& [k, a] : agg) {
      md << "| " << k.first << " | " << k.second << " | " << a[0] << " | " << a[1] << " | " << a[2] << " |\n";
    }
  }
  if (std::filesystem::exists(dir / "variance.csv")) {
    const auto t = csv::Table::load((dir / "variance.csv").string());
    const auto cs = t.column("scope"), ck = t.column("kind"), cv = t.column("variance");
    std::map<std::pair<std::string, std::string>, std::pair<std::size_t, double>> agg;
    for (const auto& row : t.rows()) {
      auto& a = agg[{row[cs], row[ck]}];
      ++a.first;
      a.second = std::max(a.second, parse_double(row[cv], "variance.csv"));
    }
    md << "\n## Variance\n\n| scope | kind | keys | max variance |\n|---|---|---|---|\n";
    for (const auto& [k, a] : agg) {
      std::snprintf(buf, sizeof buf, "| %s | %s | %zu | %.3g |\n", k.first.c_str(), k.second.c_str(), a.first,
                    a.second);
      md << buf;
    }
  }
  if (std::filesystem::exists(dir / "correlations.json")) {
    const auto j = json::parse(read_file((dir / "correlations.json").string()));
    md << "\n## Correlations\n\n";
    md << "- spearman(susceptibility, log1p count): " << j["spearman_susceptibility_log1p_count"].dump() << " (n="
       << j.value("n_count", 0) << ")\n";
    md << "- spearman(susceptibility, log1p degree): " << j["spearman_susceptibility_log1p_degree"].dump() << " (n="
       << j.value("n_degree", 0) << ")\n";
  }
  return md.str();
}

}  // namespace ctxsus::pipeline
