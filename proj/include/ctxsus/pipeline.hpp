// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#pragma once

/**
 * @file pipeline.hpp
 * @brief End-to-end experiments: grids, scoring, tests, reliability, joins
 *
 * Output files written into the run directory:
 *   scores.csv       one row per score record
 *   tests.csv        hypothesis suite, BH-adjusted
 *   variance.csv     reliability report
 *   memorization.csv optional, open forms only
 *   run.json         run metadata
 */

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ctxsus/dataset.hpp"
#include "ctxsus/info_metrics.hpp"
#include "ctxsus/prob_model.hpp"
#include "ctxsus/stats.hpp"

namespace ctxsus::pipeline {

struct ProviderConfig {
  std::string kind = "synthetic";  // synthetic | remote | replay
  std::string endpoint = "http://127.0.0.1:8000";
  std::string cache;               // record file; empty = in-memory only
  std::size_t max_in_flight = 1;
  int attempts = 3;
  int backoff_ms = 500;
  int timeout_s = 60;
  // replay: ids the cache was recorded under
  std::string recorded_provider = "synthetic";
  std::string recorded_model = "synthetic";

  // synthetic
  std::string model_id = "synthetic";
  std::uint64_t synthetic_seed = 0;
  double beta_real = 10.0;
  double beta_fake = 0.0;
  std::size_t vocab_size = 0;  // pad the answer vocabulary to this size
  double prior_noise = 1.0;
  double gold_boost = 3.0;
  double pull_noise = 1.0;
  double answer_boost = 2.0;
  double irrelevant_scale = 0.25;
  double negation_scale = -0.5;
};

struct RelationInput {
  std::string spec_path;
  std::string entities_path;
  std::string exclude_path;  // optional
};

struct ExperimentConfig {
  ProviderConfig provider;
  std::vector<RelationInput> relations;
  std::vector<std::uint64_t> seeds{0};
  std::size_t n_contexts = 600;
  std::size_t per_entity = 6;
  std::size_t context_entities = 0;
  std::string separator = " ";
  info::PriorMode prior_mode = info::PriorMode::marginal;
  double epsilon = info::kDefaultPriorFloor;
  std::size_t permutations = 10000;
  double alpha = 0.05;
  bool memorization = false;
  int max_new_tokens = 10;
  std::size_t workers = 0;  // 0 = provider.max_in_flight
  std::string out_dir = "out";
  std::string base_dir = ".";  // relative paths resolve against this
  std::string config_hash;     // SHA-256 of the config text

  void validate() const;
};

ExperimentConfig parse_config(const std::string& json_text, const std::string& base_dir = ".");
ExperimentConfig load_config(const std::string& path);

/// Command-line overrides; unset fields leave the config untouched.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> provider;
  std::optional<std::string> endpoint;
  std::optional<std::string> prior;
  std::optional<std::string> out_dir;
};
void apply_overrides(ExperimentConfig& config, const Overrides& o);

// ---------------------------------------------------------------------------

struct RelationData {
  dataset::RelationSpec spec;
  std::vector<dataset::EntityRecord> entities;
};
std::vector<RelationData> load_relations(const ExperimentConfig& config);

/// Builds the provider named by the config. The synthetic vocabulary is the
/// union of all relation answer spaces in config order.
std::shared_ptr<model::Provider> make_provider(const ExperimentConfig& config,
                                               const std::vector<RelationData>& relations);

/// Writes one grid per (relation, seed) under out_dir/grids/<relation>/seed_<s>.
void build_datasets(const ExperimentConfig& config);

// ---------------------------------------------------------------------------

enum class ScoreKind { persuasion, susceptibility, entity_independent_persuasion, entity_independent_susceptibility };
const char* to_string(ScoreKind k);
ScoreKind score_kind_from_string(const std::string& s);

struct ScoreRecord {
  std::string model_id;
  std::string relation;
  std::string query_form;
  std::string entity_id;                  // empty for entity-independent kinds
  std::optional<std::string> context_id;  // empty for susceptibility kinds
  ScoreKind kind = ScoreKind::persuasion;
  double value = 0.0;
  std::uint64_t seed = 0;
  info::PriorMode prior_mode = info::PriorMode::marginal;
  std::string context_type;  // persuasion rows only
  std::optional<bool> relevant;
  std::optional<bool> is_real;
};

std::string scores_to_csv(const std::vector<ScoreRecord>& records);
std::vector<ScoreRecord> scores_from_csv(const std::string& csv_text, const std::string& origin = "<memory>");
std::vector<ScoreRecord> load_scores(const std::string& path);

struct MemorizationRecord {
  std::uint64_t seed = 0;
  std::string relation;
  std::string query_form;
  std::string entity_id;
  std::string original_answer;
  stats::MemorizationRatio ratio;
  std::size_t n_other = 0;
};

struct ExperimentResult {
  std::string model_id;
  std::vector<ScoreRecord> scores;
  std::vector<MemorizationRecord> memorization;
  std::uint64_t backend_calls = 0;
};

/// Scores every (seed, relation, form, entity) unit. Throws on provider
/// failure after flushing the completed units to out_dir when write_outputs.
ExperimentResult score_experiment(const ExperimentConfig& config, const std::shared_ptr<model::Provider>& provider,
                                  bool write_outputs = true);

struct SuiteRow {
  std::uint64_t seed = 0;
  std::string relation;
  std::string query_form;
  std::string form_class;
  std::string hypothesis;  // relevance | assertiveness | negation | familiarity
  std::string status;      // ok | skipped
  std::string reason;
  double mean_a = 0.0;
  double mean_b = 0.0;
  stats::TestResult test;
  bool rejected = false;
};

struct SuiteOptions {
  std::size_t permutations = 10000;
  double alpha = 0.05;
};

/// Four tests per (seed, relation, form); BH within (seed, hypothesis, form class).
std::vector<SuiteRow> hypothesis_suite(const std::vector<ScoreRecord>& scores, const SuiteOptions& options);
std::string suite_to_csv(const std::vector<SuiteRow>& rows);

struct VarianceRow {
  std::string scope;  // seed | form
  std::string relation;
  std::string group;  // query form (scope=seed) or form class (scope=form)
  std::string entity_id;
  std::string context_id;
  std::string kind;
  std::string prior_mode;
  std::size_t n = 0;
  double mean = 0.0;
  double variance = 0.0;
};

struct VarianceReport {
  std::vector<VarianceRow> rows;
  std::size_t singleton_seed_keys = 0;
  std::size_t singleton_form_keys = 0;
};

VarianceReport reliability_report(const std::vector<ScoreRecord>& scores);
std::string variance_to_csv(const VarianceReport& report);

/// Runs scoring, the hypothesis suite and the reliability report, writing
/// everything to config.out_dir.
ExperimentResult run_experiment(const ExperimentConfig& config);

// ---------------------------------------------------------------------------

struct JoinInputs {
  std::string scores_csv;
  std::string counts_csv;   // entity, answer, ..., count
  std::string degrees_csv;  // entity, relation, degree
  std::string mr_csv;       // memorization.csv
};

struct JoinSummary {
  std::size_t rows = 0;
  std::optional<double> rho_count;
  std::size_t n_count = 0;
  std::optional<double> rho_degree;
  std::size_t n_degree = 0;
  struct Bin {
    double lo = 0.0, hi = 0.0;
    std::size_t n = 0;
    double mean_susceptibility = 0.0;
    double max_susceptibility = 0.0;
  };
  std::vector<Bin> mr_bins;
};

/// Left join of susceptibility rows on entity; writes joined.csv and
/// correlations.json into out_dir.
JoinSummary analysis_join(const JoinInputs& inputs, const std::string& out_dir);

/// Markdown summary of a run directory.
std::string report(const std::string& run_dir);

}  // namespace ctxsus::pipeline
