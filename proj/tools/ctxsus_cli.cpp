// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

// Command-line front end. Talks to the library only through ctxsus.h.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctxsus/ctxsus.h"

namespace {

int exit_code(cs_status s) {
  switch (s) {
    case CS_OK: return 0;
    case CS_ERR_CONFIG: return 2;
    case CS_ERR_PROVIDER: return 3;
    case CS_ERR_INFEASIBLE: return 4;
    default: return 1;
  }
}

int report_error(cs_status s) {
  if (s != CS_OK) std::fprintf(stderr, "ctxsus: error: %s\n", cs_last_error());
  return exit_code(s);
}

struct ExperimentFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> provider;
  std::optional<std::string> endpoint;
  std::optional<std::string> prior;
  std::optional<std::string> out;

  void add_to(CLI::App* app) {
    app->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "run a single seed instead of the configured list");
    app->add_option("--provider", provider, "provider kind")->check(CLI::IsMember({"synthetic", "remote", "replay"}));
    app->add_option("--endpoint", endpoint, "sidecar URL for the remote provider");
    app->add_option("--prior", prior, "prior mode")->check(CLI::IsMember({"marginal", "no-context"}));
    app->add_option("--out", out, "output directory");
  }

  // Returns a status; *exp is set on success.
  cs_status open(cs_experiment** exp) const {
    cs_status s = cs_experiment_load(config.c_str(), exp);
    if (s != CS_OK) return s;
    if (seed && (s = cs_experiment_set_seed(*exp, *seed)) != CS_OK) return s;
    if (provider && (s = cs_experiment_set_provider(*exp, provider->c_str())) != CS_OK) return s;
    if (endpoint && (s = cs_experiment_set_endpoint(*exp, endpoint->c_str())) != CS_OK) return s;
    if (prior && (s = cs_experiment_set_prior(*exp, prior->c_str())) != CS_OK) return s;
    if (out && (s = cs_experiment_set_out_dir(*exp, out->c_str())) != CS_OK) return s;
    return CS_OK;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ctxsus: context susceptibility measurements for language models"};
  app.set_version_flag("--version", std::string(cs_version()));
  app.require_subcommand(1);

  ExperimentFlags build_flags;
  auto* build = app.add_subcommand("build-dataset", "render context and query grids");
  build_flags.add_to(build);

  ExperimentFlags score_flags;
  auto* score = app.add_subcommand("score", "score an experiment, run the tests and the reliability report");
  score_flags.add_to(score);

  std::string test_scores, test_out = "tests.csv";
  std::size_t test_k = 10000;
  double test_alpha = 0.05;
  auto* test = app.add_subcommand("test", "hypothesis suite on a scores CSV");
  test->add_option("--scores", test_scores, "scores.csv")->required()->check(CLI::ExistingFile);
  test->add_option("-k,--permutations", test_k, "permutations per test")->capture_default_str();
  test->add_option("--alpha", test_alpha, "FDR level")->capture_default_str();
  test->add_option("--out", test_out, "output CSV")->capture_default_str();

  std::string rel_scores, rel_out = "variance.csv";
  auto* rel = app.add_subcommand("reliability", "variance across seeds and query forms");
  rel->add_option("--scores", rel_scores, "scores.csv")->required()->check(CLI::ExistingFile);
  rel->add_option("--out", rel_out, "output CSV")->capture_default_str();

  std::string scan_pairs, scan_out = "cooc.csv", scan_ner;
  std::vector<std::string> scan_files;
  cs_scan_options scan_opts;
  cs_scan_options_init(&scan_opts);
  bool scan_ci = false;
  auto* scan = app.add_subcommand("scan-corpus", "entity/answer co-occurrence counts");
  scan->add_option("--pairs", scan_pairs, "CSV with entity,answer columns")->required()->check(CLI::ExistingFile);
  scan->add_option("files", scan_files, "corpus files (.txt or .jsonl)")->required()->check(CLI::ExistingFile);
  scan->add_option("--window", scan_opts.window, "max token distance")->capture_default_str();
  scan->add_option("--shards", scan_opts.shards, "worker count")->capture_default_str();
  scan->add_flag("--case-insensitive", scan_ci, "fold ASCII case");
  scan->add_option("--ner", scan_ner, "CSV with term,total_count,entity_labeled_count")->check(CLI::ExistingFile);
  scan->add_option("--ner-min-freq", scan_opts.ner_min_freq)->capture_default_str();
  scan->add_option("--ner-max-share", scan_opts.ner_max_nonentity_share)->capture_default_str();
  scan->add_option("--out", scan_out, "output CSV")->capture_default_str();

  std::string kg_triples, kg_entities, kg_relation, kg_out = "degrees.csv";
  auto* kgc = app.add_subcommand("kg-degree", "relation-dependent entity degrees");
  kgc->add_option("--triples", kg_triples, "TSV subject, predicate, object")->required()->check(CLI::ExistingFile);
  kgc->add_option("--entities", kg_entities, "entity ids (.json or one per line)")->required()->check(CLI::ExistingFile);
  kgc->add_option("--relation", kg_relation, "predicate")->required();
  kgc->add_option("--out", kg_out, "output CSV")->capture_default_str();

  std::string join_scores, join_counts, join_degrees, join_mr, join_out = ".";
  auto* join = app.add_subcommand("join", "join susceptibility with counts, degrees and memorization ratios");
  join->add_option("--scores", join_scores, "scores.csv")->required()->check(CLI::ExistingFile);
  join->add_option("--counts", join_counts, "co-occurrence CSV")->check(CLI::ExistingFile);
  join->add_option("--degrees", join_degrees, "degree CSV")->check(CLI::ExistingFile);
  join->add_option("--mr", join_mr, "memorization.csv")->check(CLI::ExistingFile);
  join->add_option("--out", join_out, "output directory")->capture_default_str();

  std::string report_dir, report_out;
  auto* rep = app.add_subcommand("report", "markdown summary of a run directory");
  rep->add_option("run_dir", report_dir, "run directory")->required()->check(CLI::ExistingDirectory);
  rep->add_option("--out", report_out, "write to file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*build || *score) {
    const ExperimentFlags& f = *build ? build_flags : score_flags;
    cs_experiment* exp = nullptr;
    cs_status s = f.open(&exp);
    if (s == CS_OK) {
      if (*build) {
        s = cs_experiment_build_dataset(exp);
      } else {
        std::size_t n = 0;
        s = cs_experiment_run(exp, &n);
        const char* dir = nullptr;
        if (s == CS_OK && cs_experiment_out_dir(exp, &dir) == CS_OK) {
          std::printf("wrote %zu score records to %s\n", n, dir);
        }
      }
    }
    cs_experiment_free(exp);
    return report_error(s);
  }
  if (*test) return report_error(cs_run_tests(test_scores.c_str(), test_k, test_alpha, test_out.c_str()));
  if (*rel) return report_error(cs_reliability(rel_scores.c_str(), rel_out.c_str()));
  if (*scan) {
    std::vector<const char*> files;
    for (const auto& f : scan_files) files.push_back(f.c_str());
    scan_opts.case_insensitive = scan_ci ? 1 : 0;
    scan_opts.ner_csv = scan_ner.empty() ? nullptr : scan_ner.c_str();
    return report_error(
        cs_scan_corpus(scan_pairs.c_str(), files.data(), files.size(), &scan_opts, scan_out.c_str()));
  }
  if (*kgc) {
    cs_kg* kg = nullptr;
    cs_status s = cs_kg_load(kg_triples.c_str(), &kg);
    if (s == CS_OK) s = cs_kg_write_degrees(kg, kg_entities.c_str(), kg_relation.c_str(), kg_out.c_str());
    cs_kg_free(kg);
    return report_error(s);
  }
  if (*join) {
    auto opt = [](const std::string& s) { return s.empty() ? nullptr : s.c_str(); };
    return report_error(cs_join(join_scores.c_str(), opt(join_counts), opt(join_degrees), opt(join_mr),
                                join_out.c_str()));
  }
  if (*rep) {
    const char* text = nullptr;
    cs_status s = cs_report(report_dir.c_str(), &text);
    if (s != CS_OK) return report_error(s);
    if (report_out.empty()) {
      std::fputs(text, stdout);
      return 0;
    }
    std::FILE* f = std::fopen(report_out.c_str(), "wb");
    if (!f) {
      std::fprintf(stderr, "ctxsus: error: cannot write %s\n", report_out.c_str());
      return 1;
    }
    std::fputs(text, f);
    std::fclose(f);
    return 0;
  }
  return 1;
}
