/* SPDX-License-Identifier: Apache-2.0 */
/* Copyright 2026 The ctxsus Authors */

/* Exercises the C interface from plain C. argv[1] is a relation spec whose
 * directory also holds entities.json. */

#define _DEFAULT_SOURCE
#include <limits.h>
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>
#include <unistd.h>

#include "ctxsus/ctxsus.h"

static int failures = 0;

#define CHECK(cond)                                                                   \
  do {                                                                                \
    if (!(cond)) {                                                                    \
      fprintf(stderr, "%s:%d: CHECK(%s) failed; last error: %s\n", __FILE__, __LINE__, \
              #cond, cs_last_error());                                               \
      ++failures;                                                                     \
    }                                                                                 \
  } while (0)

static void write_text(const char* path, const char* text) {
  FILE* f = fopen(path, "w");
  if (!f) {
    perror(path);
    exit(2);
  }
  fputs(text, f);
  fclose(f);
}

static int file_exists(const char* path) {
  FILE* f = fopen(path, "r");
  if (!f) return 0;
  fclose(f);
  return 1;
}

static void metrics(void) {
  const double rows[] = {1, 0, 0, 1};
  cs_table* t = NULL;
  double chi = -1, psi[2], m[2];
  CHECK(cs_table_create(2, 2, rows, NULL, &t) == CS_OK);
  CHECK(cs_table_susceptibility(t, &chi) == CS_OK);
  CHECK(fabs(chi - log(2.0)) < 1e-12);
  CHECK(cs_table_persuasion(t, psi) == CS_OK);
  CHECK(fabs(psi[0] - log(2.0)) < 1e-12);
  CHECK(cs_table_marginal(t, m) == CS_OK);
  CHECK(fabs(m[0] - 0.5) < 1e-15);
  cs_table_free(t);

  const double bad[] = {1, 0, 0, 0};
  t = NULL;
  CHECK(cs_table_create(2, 2, bad, NULL, &t) != CS_OK);
  CHECK(strlen(cs_last_error()) > 0);
  CHECK(t == NULL);
  CHECK(cs_table_create(2, 2, NULL, NULL, &t) == CS_ERR_INVALID_ARGUMENT);

  const double p[] = {0.9, 0.1}, q[] = {0.5, 0.5}, one[] = {1, 0};
  double v;
  CHECK(cs_kl_divergence(p, q, 2, &v) == CS_OK);
  CHECK(fabs(v - (0.9 * log(1.8) + 0.1 * log(0.2))) < 1e-12);
  CHECK(cs_entropy(q, 2, &v) == CS_OK);
  CHECK(fabs(v - log(2.0)) < 1e-15);
  CHECK(cs_persuasion(q, one, 2, CS_PRIOR_NO_CONTEXT, 1e-12, &v) == CS_OK);
  CHECK(isfinite(v) && v > 0);
  CHECK(cs_persuasion(one, q, 2, CS_PRIOR_MARGINAL, 1e-12, &v) == CS_OK);
  CHECK(fabs(v - log(2.0)) < 1e-12);
}

static void statistics(void) {
  const double a[] = {10, 11, 12, 13, 14}, b[] = {0, 1, 2, 3, 4};
  cs_test_result r;
  CHECK(cs_permutation_test(a, 5, b, 5, CS_TAIL_GREATER, 999, 1, &r) == CS_OK);
  CHECK(r.p_value <= 0.01);
  CHECK(r.effect_size > 0);
  CHECK(r.n_a == 5 && r.n_b == 5);
  CHECK(cs_permutation_test(a, 1, b, 5, CS_TAIL_GREATER, 999, 1, &r) != CS_OK);

  const double p[] = {0.01, 0.04, 0.03, 0.5};
  double adj[4];
  int rej[4];
  CHECK(cs_bh_correct(p, 4, 0.05, adj, rej) == CS_OK);
  CHECK(fabs(adj[0] - 0.04) < 1e-15);
  CHECK(rej[0] && !rej[1] && !rej[2] && !rej[3]);

  const double x[] = {1, 2, 3, 4}, y[] = {10, 20, 25, 40};
  double rho;
  CHECK(cs_spearman(x, y, 4, &rho) == CS_OK);
  CHECK(fabs(rho - 1.0) < 1e-12);
  const double flat[] = {1, 1, 1, 1};
  CHECK(cs_spearman(flat, y, 4, &rho) == CS_ERR_UNDEFINED);
}

static void files(const char* dir) {
  char path[1024], out[1024];
  snprintf(path, sizeof path, "%s/kg.tsv", dir);
  write_text(path, "e\tq\ta\ne\tq\tb\nb\tq\te\nx\tp\ty\n");
  cs_kg* kg = NULL;
  size_t n = 0;
  CHECK(cs_kg_load(path, &kg) == CS_OK);
  CHECK(cs_kg_triple_count(kg, &n) == CS_OK && n == 4);
  CHECK(cs_kg_degree(kg, "e", "q", &n) == CS_OK && n == 2);
  snprintf(path, sizeof path, "%s/ids.txt", dir);
  write_text(path, "e\nx\n");
  snprintf(out, sizeof out, "%s/deg.csv", dir);
  CHECK(cs_kg_write_degrees(kg, path, "q", out) == CS_OK);
  CHECK(file_exists(out));
  cs_kg_free(kg);
  CHECK(cs_kg_load("/nonexistent/kg.tsv", &kg) == CS_ERR_IO);

  char corpus[1024], pairs[1024];
  snprintf(corpus, sizeof corpus, "%s/corpus.txt", dir);
  write_text(corpus, "Slovenia has Ljubljana as its capital.\nParis is far away from Slovenia.\n");
  snprintf(pairs, sizeof pairs, "%s/pairs.csv", dir);
  write_text(pairs, "entity,answer\nSlovenia,Ljubljana\nSlovenia,Paris\n");
  snprintf(out, sizeof out, "%s/counts.csv", dir);
  cs_scan_options o;
  cs_scan_options_init(&o);
  CHECK(o.window == 50);
  o.shards = 2;
  const char* list[] = {corpus};
  CHECK(cs_scan_corpus(pairs, list, 1, &o, out) == CS_OK);
  CHECK(file_exists(out));
}

static void experiment(const char* dir, const char* spec) {
  char entities[PATH_MAX], config[1024], text[3 * PATH_MAX];
  snprintf(entities, sizeof entities, "%s", spec);
  char* slash = strrchr(entities, '/');
  if (slash) strcpy(slash + 1, "entities.json");
  else strcpy(entities, "entities.json");

  snprintf(config, sizeof config, "%s/experiment.json", dir);
  snprintf(text, sizeof text,
           "{\"provider\": {\"kind\": \"synthetic\", \"seed\": 3},\n"
           " \"relations\": [{\"spec\": \"%s\", \"entities\": \"%s\"}],\n"
           " \"seeds\": [0], \"n_contexts\": 12, \"per_entity\": 3, \"context_entities\": 4,\n"
           " \"permutations\": 99, \"out_dir\": \"run\"}\n",
           spec, entities);
  write_text(config, text);

  cs_experiment* exp = NULL;
  CHECK(cs_experiment_load(config, &exp) == CS_OK);
  if (!exp) return;
  CHECK(cs_experiment_set_seed(exp, 4) == CS_OK);
  CHECK(cs_experiment_set_prior(exp, "bogus") == CS_ERR_CONFIG);
  CHECK(cs_experiment_set_prior(exp, "marginal") == CS_OK);
  const char* out_dir = NULL;
  CHECK(cs_experiment_out_dir(exp, &out_dir) == CS_OK);
  CHECK(out_dir && strstr(out_dir, "run") != NULL);
  CHECK(cs_experiment_build_dataset(exp) == CS_OK);
  size_t n = 0;
  CHECK(cs_experiment_run(exp, &n) == CS_OK);
  CHECK(n > 0);

  char scores[1024], path[1024];
  snprintf(scores, sizeof scores, "%s/scores.csv", out_dir);
  CHECK(file_exists(scores));
  snprintf(path, sizeof path, "%s/tests.csv", out_dir);
  CHECK(file_exists(path));
  snprintf(path, sizeof path, "%s/grids/capital/seed_4/prompts.jsonl", out_dir);
  CHECK(file_exists(path));

  snprintf(path, sizeof path, "%s/tests2.csv", dir);
  CHECK(cs_run_tests(scores, 99, 0.05, path) == CS_OK);
  snprintf(path, sizeof path, "%s/variance2.csv", dir);
  CHECK(cs_reliability(scores, path) == CS_OK);
  CHECK(cs_join(scores, NULL, NULL, NULL, dir) == CS_OK);
  const char* md = NULL;
  CHECK(cs_report(out_dir, &md) == CS_OK);
  CHECK(md && strstr(md, "susceptibility") != NULL);

  CHECK(cs_experiment_set_provider(exp, "replay") == CS_ERR_CONFIG);
  CHECK(cs_experiment_set_provider(exp, "carrier-pigeon") == CS_ERR_CONFIG);
  cs_experiment_free(exp);

  CHECK(cs_experiment_load("/nonexistent/config.json", &exp) == CS_ERR_CONFIG);
}

int main(int argc, char** argv) {
  if (argc < 2) {
    fprintf(stderr, "usage: %s <relation.json>\n", argv[0]);
    return 2;
  }
  char dir[256];
  snprintf(dir, sizeof dir, "/tmp/ctxsus_capi_%d", (int)getpid());
  char cmd[1024];
  snprintf(cmd, sizeof cmd, "rm -rf %s && mkdir -p %s", dir, dir);
  if (system(cmd) != 0) return 2;

  CHECK(strlen(cs_version()) > 0);
  metrics();
  statistics();
  files(dir);
  char spec[PATH_MAX];
  if (!realpath(argv[1], spec)) {
    perror(argv[1]);
    return 2;
  }
  experiment(dir, spec);

  snprintf(cmd, sizeof cmd, "rm -rf %s", dir);
  if (system(cmd) != 0) fprintf(stderr, "could not remove %s\n", dir);
  if (failures) {
    fprintf(stderr, "%d check(s) failed\n", failures);
    return 1;
  }
  printf("C API: all checks passed\n");
  return 0;
}
