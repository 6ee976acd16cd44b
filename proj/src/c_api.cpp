// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#include "ctxsus/ctxsus.h"

#include <algorithm>
#include <exception>
#include <memory>
#include <new>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ctxsus/corpus.hpp"
#include "ctxsus/error.hpp"
#include "ctxsus/info_metrics.hpp"
#include "ctxsus/kg_degree.hpp"
#include "ctxsus/pipeline.hpp"
#include "ctxsus/stats.hpp"
#include "ctxsus/util.hpp"

#ifndef CTXSUS_VERSION
#define CTXSUS_VERSION "0.0.0"
#endif

struct cs_table {
  ctxsus::info::ConditionalTable table;
};

struct cs_kg {
  ctxsus::kg::DegreeIndex index;
};

struct cs_experiment {
  ctxsus::pipeline::ExperimentConfig config;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_report;

cs_status to_status(ctxsus::ErrorCode c) {
  using ctxsus::ErrorCode;
  switch (c) {
    case ErrorCode::invalid_argument: return CS_ERR_INVALID_ARGUMENT;
    case ErrorCode::config: return CS_ERR_CONFIG;
    case ErrorCode::provider: return CS_ERR_PROVIDER;
    case ErrorCode::infeasible: return CS_ERR_INFEASIBLE;
    case ErrorCode::io: return CS_ERR_IO;
    case ErrorCode::dimension: return CS_ERR_DIMENSION;
    case ErrorCode::undefined: return CS_ERR_UNDEFINED;
    case ErrorCode::internal: return CS_ERR_INTERNAL;
  }
  return CS_ERR_INTERNAL;
}

template <class F>
cs_status guarded(F&& fn) {
  g_last_error.clear();
  try {
    fn();
    return CS_OK;
  } catch (const ctxsus::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return CS_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return CS_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return CS_ERR_INTERNAL;
  }
}

void require(const void* p, const char* name) {
  if (!p) ctxsus::fail(ctxsus::ErrorCode::invalid_argument, std::string(name) + " is NULL");
}

ctxsus::info::AnswerDistribution dist(const double* p, std::size_t n) {
  require(p, "distribution");
  return ctxsus::info::AnswerDistribution::from_weights(std::vector<double>(p, p + n));
}

std::string opt_str(const char* s) { return s ? std::string(s) : std::string(); }

}  // namespace

extern "C" {

const char* cs_version(void) { return CTXSUS_VERSION; }
const char* cs_last_error(void) { return g_last_error.c_str(); }

cs_status cs_table_create(size_t n_contexts, size_t vocab, const double* rows, const double* weights, cs_table** out) {
  return guarded([&] {
    require(rows, "rows");
    require(out, "out");
    if (n_contexts == 0 || vocab == 0) ctxsus::fail(ctxsus::ErrorCode::invalid_argument, "empty table");
    std::vector<std::string> ids;
    std::vector<ctxsus::info::AnswerDistribution> r;
    for (std::size_t c = 0; c < n_contexts; ++c) {
      ids.push_back("c" + std::to_string(c));
      r.push_back(dist(rows + c * vocab, vocab));
    }
    auto t = std::make_unique<cs_table>();
    if (weights) {
      t->table = ctxsus::info::ConditionalTable(std::move(ids), std::move(r),
                                                std::vector<double>(weights, weights + n_contexts));
    } else {
      t->table = ctxsus::info::ConditionalTable(std::move(ids), std::move(r));
    }
    *out = t.release();
  });
}

void cs_table_free(cs_table* table) { delete table; }

cs_status cs_table_susceptibility(const cs_table* table, double* out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    *out = ctxsus::info::susceptibility_score(table->table);
  });
}

cs_status cs_table_persuasion(const cs_table* table, double* out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    const auto v = ctxsus::info::persuasion_scores(table->table);
    std::copy(v.begin(), v.end(), out);
  });
}

cs_status cs_table_marginal(const cs_table* table, double* out) {
  return guarded([&] {
    require(table, "table");
    require(out, "out");
    const auto m = table->table.marginal();
    std::copy(m.probs().begin(), m.probs().end(), out);
  });
}

cs_status cs_entropy(const double* p, size_t n, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = ctxsus::info::entropy(dist(p, n));
  });
}

cs_status cs_kl_divergence(const double* p, const double* q, size_t n, double* out) {
  return guarded([&] {
    require(out, "out");
    *out = ctxsus::info::kl_divergence(dist(p, n), dist(q, n));
  });
}

cs_status cs_persuasion(const double* conditional, const double* prior, size_t n, cs_prior_mode mode, double epsilon,
                        double* out) {
  return guarded([&] {
    require(out, "out");
    auto pr = dist(prior, n);
    if (mode == CS_PRIOR_NO_CONTEXT) pr = ctxsus::info::apply_floor(pr, epsilon);
    *out = ctxsus::info::persuasion_score(dist(conditional, n), pr);
  });
}

cs_status cs_permutation_test(const double* a, size_t n_a, const double* b, size_t n_b, cs_tail tail, size_t k,
                              uint64_t seed, cs_test_result* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    const auto t = tail == CS_TAIL_TWO_SIDED ? ctxsus::stats::Tail::two_sided : ctxsus::stats::Tail::greater;
    const auto r = ctxsus::stats::permutation_test({a, n_a}, {b, n_b}, t, k, seed);
    *out = {r.statistic, r.p_raw, r.effect_size, r.n_a, r.n_b};
  });
}

cs_status cs_bh_correct(const double* p, size_t n, double alpha, double* adjusted, int* rejected) {
  return guarded([&] {
    require(p, "p");
    require(adjusted, "adjusted");
    require(rejected, "rejected");
    const auto r = ctxsus::stats::bh_correct({p, n}, alpha);
    for (std::size_t i = 0; i < n; ++i) {
      adjusted[i] = r.adjusted[i];
      rejected[i] = r.rejected[i] ? 1 : 0;
    }
  });
}

cs_status cs_spearman(const double* x, const double* y, size_t n, double* out) {
  return guarded([&] {
    require(x, "x");
    require(y, "y");
    require(out, "out");
    *out = ctxsus::stats::spearman({x, n}, {y, n});
  });
}

cs_status cs_kg_load(const char* tsv_path, cs_kg** out) {
  return guarded([&] {
    require(tsv_path, "tsv_path");
    require(out, "out");
    *out = new cs_kg{ctxsus::kg::DegreeIndex(ctxsus::kg::load_tsv(tsv_path))};
  });
}

void cs_kg_free(cs_kg* kg) { delete kg; }

cs_status cs_kg_triple_count(const cs_kg* kg, size_t* out) {
  return guarded([&] {
    require(kg, "kg");
    require(out, "out");
    *out = kg->index.triple_count();
  });
}

cs_status cs_kg_degree(const cs_kg* kg, const char* entity, const char* relation, size_t* out) {
  return guarded([&] {
    require(kg, "kg");
    require(entity, "entity");
    require(relation, "relation");
    require(out, "out");
    *out = kg->index.degree(entity, relation);
  });
}

cs_status cs_kg_write_degrees(const cs_kg* kg, const char* entities_path, const char* relation, const char* out_csv) {
  return guarded([&] {
    require(kg, "kg");
    require(entities_path, "entities_path");
    require(relation, "relation");
    require(out_csv, "out_csv");
    const auto recs = kg->index.degrees(ctxsus::kg::load_entity_ids(entities_path), relation);
    std::ostringstream s;
    ctxsus::csv::write_row(s, {"entity", "relation", "degree"});
    for (const auto& r : recs) ctxsus::csv::write_row(s, {r.entity, r.relation, std::to_string(r.degree)});
    ctxsus::write_file(out_csv, s.str());
  });
}

void cs_scan_options_init(cs_scan_options* options) {
  if (!options) return;
  options->window = 50;
  options->shards = 1;
  options->case_insensitive = 0;
  options->ner_csv = nullptr;
  options->ner_min_freq = 50;
  options->ner_max_nonentity_share = 0.75;
}

cs_status cs_scan_corpus(const char* pairs_csv, const char* const* files, size_t n_files,
                         const cs_scan_options* options, const char* out_csv) {
  return guarded([&] {
    require(pairs_csv, "pairs_csv");
    require(out_csv, "out_csv");
    if (n_files > 0) require(files, "files");
    cs_scan_options o;
    cs_scan_options_init(&o);
    if (options) o = *options;
    auto pairs = ctxsus::corpus::load_pairs_csv(pairs_csv);
    if (o.ner_csv) {
      std::vector<std::string> answers;
      for (const auto& p : pairs) answers.push_back(p.answer);
      const auto excluded = ctxsus::corpus::apply_ner_exclusion(answers, ctxsus::corpus::load_ner_csv(o.ner_csv),
                                                                {o.ner_min_freq, o.ner_max_nonentity_share});
      const std::set<std::string> ex(excluded.begin(), excluded.end());
      std::erase_if(pairs, [&](const auto& p) { return ex.count(p.answer) > 0; });
    }
    ctxsus::corpus::ScanOptions so;
    so.count.window = o.window;
    so.count.case_insensitive = o.case_insensitive != 0;
    so.shards = o.shards;
    std::vector<std::string> paths(files, files + n_files);
    ctxsus::write_file(out_csv, ctxsus::corpus::counts_to_csv(ctxsus::corpus::scan(paths, pairs, so)));
  });
}

cs_status cs_experiment_load(const char* config_path, cs_experiment** out) {
  return guarded([&] {
    require(config_path, "config_path");
    require(out, "out");
    *out = new cs_experiment{ctxsus::pipeline::load_config(config_path)};
  });
}

void cs_experiment_free(cs_experiment* exp) { delete exp; }

}  // extern "C"

namespace {

template <class F>
cs_status override(cs_experiment* exp, F&& set) {
  return guarded([&] {
    require(exp, "experiment");
    ctxsus::pipeline::Overrides o;
    set(o);
    ctxsus::pipeline::apply_overrides(exp->config, o);
  });
}

}  // namespace

extern "C" {

cs_status cs_experiment_set_seed(cs_experiment* exp, uint64_t seed) {
  return override(exp, [&](auto& o) { o.seed = seed; });
}
cs_status cs_experiment_set_provider(cs_experiment* exp, const char* kind) {
  return override(exp, [&](auto& o) { o.provider = opt_str(kind); });
}
cs_status cs_experiment_set_endpoint(cs_experiment* exp, const char* url) {
  return override(exp, [&](auto& o) { o.endpoint = opt_str(url); });
}
cs_status cs_experiment_set_prior(cs_experiment* exp, const char* mode) {
  return override(exp, [&](auto& o) { o.prior = opt_str(mode); });
}
cs_status cs_experiment_set_out_dir(cs_experiment* exp, const char* dir) {
  return override(exp, [&](auto& o) { o.out_dir = opt_str(dir); });
}

cs_status cs_experiment_out_dir(const cs_experiment* exp, const char** out) {
  return guarded([&] {
    require(exp, "experiment");
    require(out, "out");
    *out = exp->config.out_dir.c_str();
  });
}

cs_status cs_experiment_build_dataset(cs_experiment* exp) {
  return guarded([&] {
    require(exp, "experiment");
    ctxsus::pipeline::build_datasets(exp->config);
  });
}

cs_status cs_experiment_run(cs_experiment* exp, size_t* n_scores) {
  return guarded([&] {
    require(exp, "experiment");
    const auto r = ctxsus::pipeline::run_experiment(exp->config);
    if (n_scores) *n_scores = r.scores.size();
  });
}

cs_status cs_run_tests(const char* scores_csv, size_t permutations, double alpha, const char* out_csv) {
  return guarded([&] {
    require(scores_csv, "scores_csv");
    require(out_csv, "out_csv");
    const auto rows = ctxsus::pipeline::hypothesis_suite(ctxsus::pipeline::load_scores(scores_csv), {permutations, alpha});
    ctxsus::write_file(out_csv, ctxsus::pipeline::suite_to_csv(rows));
  });
}

cs_status cs_reliability(const char* scores_csv, const char* out_csv) {
  return guarded([&] {
    require(scores_csv, "scores_csv");
    require(out_csv, "out_csv");
    const auto rep = ctxsus::pipeline::reliability_report(ctxsus::pipeline::load_scores(scores_csv));
    ctxsus::write_file(out_csv, ctxsus::pipeline::variance_to_csv(rep));
  });
}

cs_status cs_join(const char* scores_csv, const char* counts_csv, const char* degrees_csv, const char* mr_csv,
                  const char* out_dir) {
  return guarded([&] {
    require(scores_csv, "scores_csv");
    require(out_dir, "out_dir");
    ctxsus::pipeline::analysis_join({scores_csv, opt_str(counts_csv), opt_str(degrees_csv), opt_str(mr_csv)}, out_dir);
  });
}

cs_status cs_report(const char* run_dir, const char** out) {
  return guarded([&] {
    require(run_dir, "run_dir");
    require(out, "out");
    g_report = ctxsus::pipeline::report(run_dir);
    *out = g_report.c_str();
  });
}

}  // extern "C"
