/* SPDX-License-Identifier: Apache-2.0 */
/* Copyright 2026 The ctxsus Authors */

#ifndef CTXSUS_CTXSUS_H
#define CTXSUS_CTXSUS_H

/*
 * C interface to the ctxsus library.
 *
 * Every function returns a cs_status. On failure the message is available
 * from cs_last_error() in the calling thread until the next call.
 * Handles are opaque and owned by the caller; free them with the matching
 * cs_*_free function. Probabilities and scores are in nats.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CS_API __declspec(dllexport)
#else
#define CS_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cs_status {
  CS_OK = 0,
  CS_ERR_INVALID_ARGUMENT = 1,
  CS_ERR_CONFIG = 2,
  CS_ERR_PROVIDER = 3,
  CS_ERR_INFEASIBLE = 4,
  CS_ERR_IO = 5,
  CS_ERR_DIMENSION = 6,
  CS_ERR_UNDEFINED = 7,
  CS_ERR_INTERNAL = 99
} cs_status;

typedef enum cs_prior_mode { CS_PRIOR_MARGINAL = 0, CS_PRIOR_NO_CONTEXT = 1 } cs_prior_mode;
typedef enum cs_tail { CS_TAIL_GREATER = 0, CS_TAIL_TWO_SIDED = 1 } cs_tail;

typedef struct cs_table cs_table;
typedef struct cs_kg cs_kg;
typedef struct cs_experiment cs_experiment;

CS_API const char* cs_version(void);
CS_API const char* cs_last_error(void);

/* ---- metrics ---------------------------------------------------------- */

/* rows: n_contexts x vocab probabilities, row-major; each row is normalized.
 * weights may be NULL for uniform context weights. */
CS_API cs_status cs_table_create(size_t n_contexts, size_t vocab, const double* rows, const double* weights,
                                 cs_table** out);
CS_API void cs_table_free(cs_table* table);
CS_API cs_status cs_table_susceptibility(const cs_table* table, double* out);
/* Persuasion of every context against the table's marginal; out has n_contexts slots. */
CS_API cs_status cs_table_persuasion(const cs_table* table, double* out);
/* Marginal answer distribution; out has vocab slots. */
CS_API cs_status cs_table_marginal(const cs_table* table, double* out);

CS_API cs_status cs_entropy(const double* p, size_t n, double* out);
CS_API cs_status cs_kl_divergence(const double* p, const double* q, size_t n, double* out);
/* Persuasion of a conditional against a prior; CS_PRIOR_NO_CONTEXT floors the prior at epsilon first. */
CS_API cs_status cs_persuasion(const double* conditional, const double* prior, size_t n, cs_prior_mode mode,
                               double epsilon, double* out);

/* ---- statistics ------------------------------------------------------- */

typedef struct cs_test_result {
  double statistic;
  double p_value;
  double effect_size;
  size_t n_a;
  size_t n_b;
} cs_test_result;

CS_API cs_status cs_permutation_test(const double* a, size_t n_a, const double* b, size_t n_b, cs_tail tail,
                                     size_t k, uint64_t seed, cs_test_result* out);
/* adjusted and rejected have n slots. */
CS_API cs_status cs_bh_correct(const double* p, size_t n, double alpha, double* adjusted, int* rejected);
CS_API cs_status cs_spearman(const double* x, const double* y, size_t n, double* out);

/* ---- knowledge graph -------------------------------------------------- */

CS_API cs_status cs_kg_load(const char* tsv_path, cs_kg** out);
CS_API void cs_kg_free(cs_kg* kg);
CS_API cs_status cs_kg_triple_count(const cs_kg* kg, size_t* out);
CS_API cs_status cs_kg_degree(const cs_kg* kg, const char* entity, const char* relation, size_t* out);
/* Writes entity,relation,degree for every id in entities_path. */
CS_API cs_status cs_kg_write_degrees(const cs_kg* kg, const char* entities_path, const char* relation,
                                     const char* out_csv);

/* ---- corpus ----------------------------------------------------------- */

typedef struct cs_scan_options {
  size_t window;
  size_t shards;
  int case_insensitive;
  const char* ner_csv;        /* optional; NULL disables NER exclusion */
  uint64_t ner_min_freq;
  double ner_max_nonentity_share;
} cs_scan_options;

CS_API void cs_scan_options_init(cs_scan_options* options);
CS_API cs_status cs_scan_corpus(const char* pairs_csv, const char* const* files, size_t n_files,
                                const cs_scan_options* options, const char* out_csv);

/* ---- experiments ------------------------------------------------------ */

CS_API cs_status cs_experiment_load(const char* config_path, cs_experiment** out);
CS_API void cs_experiment_free(cs_experiment* exp);
CS_API cs_status cs_experiment_set_seed(cs_experiment* exp, uint64_t seed);
CS_API cs_status cs_experiment_set_provider(cs_experiment* exp, const char* kind);
CS_API cs_status cs_experiment_set_endpoint(cs_experiment* exp, const char* url);
CS_API cs_status cs_experiment_set_prior(cs_experiment* exp, const char* mode);
CS_API cs_status cs_experiment_set_out_dir(cs_experiment* exp, const char* dir);
CS_API cs_status cs_experiment_out_dir(const cs_experiment* exp, const char** out);

/* Writes grids/<relation>/seed_<s>/ under the output directory. */
CS_API cs_status cs_experiment_build_dataset(cs_experiment* exp);
/* Scores, tests and reliability; writes scores.csv, tests.csv, variance.csv, run.json. */
CS_API cs_status cs_experiment_run(cs_experiment* exp, size_t* n_scores);

/* ---- table-level operations on CSV files ------------------------------ */

CS_API cs_status cs_run_tests(const char* scores_csv, size_t permutations, double alpha, const char* out_csv);
CS_API cs_status cs_reliability(const char* scores_csv, const char* out_csv);
/* counts_csv, degrees_csv and mr_csv may be NULL. */
CS_API cs_status cs_join(const char* scores_csv, const char* counts_csv, const char* degrees_csv, const char* mr_csv,
                         const char* out_dir);
/* Markdown summary; the returned string stays valid until the next call in this thread. */
CS_API cs_status cs_report(const char* run_dir, const char** out);

#ifdef __cplusplus
}
#endif

#endif /* CTXSUS_CTXSUS_H */
