// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#include <cmath>
#include <filesystem>
#include <map>

#include "ctxsus/error.hpp"
#include "ctxsus/pipeline.hpp"
#include "ctxsus/util.hpp"
#include "doctest.h"
#include "json.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace ctxsus;
using namespace ctxsus::pipeline;
using nlohmann::json;

namespace {

ExperimentResult score(const ExperimentConfig& c) {
  const auto rel = load_relations(c);
  return score_experiment(c, make_provider(c, rel), true);
}

std::size_t count_kind(const std::vector<ScoreRecord>& s, ScoreKind k) {
  std::size_t n = 0;
  for (const auto& r : s) n += r.kind == k;
  return n;
}

// Fails every call after the first `budget` successful ones.
class FlakyProvider final : public model::Provider {
 public:
  FlakyProvider(std::shared_ptr<model::Provider> inner, int budget) : inner_(std::move(inner)), budget_(budget) {}
  std::string provider_id() const override { return inner_->provider_id(); }
  std::string model_id() const override { return inner_->model_id(); }
  std::vector<float> next_token_logprobs(const model::Prompt& p) override {
    if (budget_-- <= 0) throw Error(ErrorCode::provider, "backend down");
    return inner_->next_token_logprobs(p);
  }

 private:
  std::shared_ptr<model::Provider> inner_;
  int budget_;
};

ScoreRecord susc(const std::string& e, bool real, double v, std::uint64_t seed = 0,
                 const std::string& form = "open_qa") {
  ScoreRecord r;
  r.model_id = "m";
  r.relation = "capital";
  r.query_form = form;
  r.entity_id = e;
  r.kind = ScoreKind::susceptibility;
  r.value = v;
  r.seed = seed;
  r.is_real = real;
  return r;
}

}  // namespace

TEST_CASE("config parsing") {
  TempDir dir;
  const auto path = write_capital_fixture(dir, 2, 2);
  const auto c = load_config(path);
  CHECK(c.n_contexts == 12);
  CHECK(c.relations.at(0).spec_path == dir.file("relation.json"));
  CHECK(c.out_dir == dir.file("out"));
  CHECK(c.config_hash == to_hex(sha256(read_file(path))));

  CHECK_THROWS_AS(parse_config(R"({"relations": [], "bogus": 1})"), Error);
  CHECK_THROWS_AS(parse_config("[1]"), Error);
  try {
    parse_config(R"({"relations": [{"spec": "a", "entities": "b"}], "alpha": 1.5})");
    FAIL("alpha accepted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::config);
  }
  CHECK_THROWS_AS(parse_config(R"({"relations": [{"spec": "a", "entities": "b"}], "provider": {"kind": "x"}})"), Error);
  CHECK_THROWS_AS(parse_config(R"({"relations": [{"spec": "a", "entities": "b"}], "provider": {"kind": "replay"}})"),
                  Error);

  auto o = c;
  apply_overrides(o, {5, std::string("remote"), std::string("http://h:1"), std::string("no-context"), std::string("x")});
  CHECK(o.seeds == std::vector<std::uint64_t>{5});
  CHECK(o.provider.kind == "remote");
  CHECK(o.provider.endpoint == "http://h:1");
  CHECK(o.prior_mode == info::PriorMode::no_context);
  CHECK(o.out_dir == "x");
  CHECK_THROWS_AS(apply_overrides(o, {std::nullopt, std::nullopt, std::nullopt, std::string("posterior"), {}}), Error);
}

TEST_CASE("score record counts and identities") {
  TempDir dir;
  const auto c = load_config(write_capital_fixture(dir, 2, 2));
  const auto res = score(c);
  // 4 forms x 4 entities, 12 contexts each, plus 12 + 1 entity-independent rows per form
  CHECK(count_kind(res.scores, ScoreKind::susceptibility) == 16);
  CHECK(count_kind(res.scores, ScoreKind::persuasion) == 192);
  CHECK(count_kind(res.scores, ScoreKind::entity_independent_persuasion) == 48);
  CHECK(count_kind(res.scores, ScoreKind::entity_independent_susceptibility) == 4);

  std::map<std::pair<std::string, std::string>, std::vector<double>> psi;
  for (const auto& r : res.scores)
    if (r.kind == ScoreKind::persuasion) psi[{r.query_form, r.entity_id}].push_back(r.value);
  for (const auto& r : res.scores) {
    if (r.kind != ScoreKind::susceptibility) continue;
    const auto& v = psi.at({r.query_form, r.entity_id});
    double m = 0;
    for (double x : v) m += x;
    CHECK(std::fabs(r.value - m / static_cast<double>(v.size())) < 1e-10);
  }
  // relevance: 3 relevant contexts per entity
  std::map<std::pair<std::string, std::string>, int> rel;
  for (const auto& r : res.scores)
    if (r.kind == ScoreKind::persuasion && *r.relevant) rel[{r.query_form, r.entity_id}]++;
  for (const auto& [k, n] : rel) CHECK(n == 3);

  // CSV round trip is lossless
  const auto back = load_scores(dir.file("out/scores.csv"));
  REQUIRE(back.size() == res.scores.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].value == res.scores[i].value);
    CHECK(back[i].context_id == res.scores[i].context_id);
    CHECK(back[i].relevant == res.scores[i].relevant);
  }
  const auto meta = json::parse(read_file(dir.file("out/run.json")));
  CHECK(meta["status"] == "complete");
  CHECK(meta["approximation"] == "uniform-entity");
  CHECK(meta["config_hash"] == c.config_hash);
}

TEST_CASE("contexts that change nothing give zero susceptibility") {
  TempDir dir;
  auto c = load_config(write_capital_fixture(dir, 1, 1,
                                             {{"provider", {{"pull_noise", 0.0}, {"answer_boost", 0.0}}}}));
  const auto res = score(c);
  for (const auto& r : res.scores) {
    CHECK(std::fabs(r.value) < 1e-12);
  }
}

TEST_CASE("no-context prior mode") {
  TempDir dir;
  auto c = load_config(write_capital_fixture(dir, 1, 1, {{"prior_mode", "no-context"}}));
  const auto res = score(c);
  for (const auto& r : res.scores) {
    CHECK(r.prior_mode == info::PriorMode::no_context);
    CHECK(r.value >= 0.0);
  }
}

TEST_CASE("provider failure flushes completed units") {
  TempDir dir;
  const auto c = load_config(write_capital_fixture(dir, 2, 2));
  const auto rel = load_relations(c);
  auto flaky = std::make_shared<FlakyProvider>(make_provider(c, rel), 13 * 3 + 5);
  try {
    score_experiment(c, flaky, true);
    FAIL("expected a provider error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::provider);
  }
  const auto meta = json::parse(read_file(dir.file("out/run.json")));
  CHECK(meta["status"] == "partial");
  const auto partial = load_scores(dir.file("out/scores.csv"));
  CHECK(count_kind(partial, ScoreKind::susceptibility) == 3);
  CHECK(partial.size() == 3 * 13);
}

TEST_CASE("hypothesis suite") {
  SUBCASE("wide separation reaches the permutation floor") {
    std::vector<ScoreRecord> s;
    for (int i = 0; i < 10; ++i) {
      s.push_back(susc("r" + std::to_string(i), true, 0.01 * i));
      s.push_back(susc("f" + std::to_string(i), false, 5.0 + 0.01 * i));
    }
    const auto rows = hypothesis_suite(s, {999, 0.05});
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].hypothesis == "familiarity");
    CHECK(rows[0].test.p_raw == 1.0 / 1000.0);
    CHECK(rows[0].rejected);
    CHECK(rows[0].test.effect_size > 0);
  }
  SUBCASE("identical groups are not rejected") {
    std::vector<ScoreRecord> s;
    for (int i = 0; i < 10; ++i) {
      s.push_back(susc("r" + std::to_string(i), true, 0.1 * i));
      s.push_back(susc("f" + std::to_string(i), false, 0.1 * i));
    }
    const auto rows = hypothesis_suite(s, {999, 0.05});
    CHECK_FALSE(rows[0].rejected);
    CHECK(rows[0].test.p_raw > 0.3);
  }
  SUBCASE("one-sided samples are skipped") {
    const auto rows = hypothesis_suite({susc("r", true, 1), susc("f", false, 2), susc("f2", false, 2)}, {99, 0.05});
    CHECK(rows[0].status == "skipped");
    CHECK(std::isnan(rows[0].test.p_raw));
  }
  SUBCASE("bh runs per seed, hypothesis and form class") {
    std::vector<ScoreRecord> s;
    for (std::uint64_t seed : {0u, 1u})
      for (auto form : {"open_qa", "open_completion", "closed_1"})
        for (int i = 0; i < 6; ++i) {
          s.push_back(susc("r" + std::to_string(i), true, 0.1 * i, seed, form));
          s.push_back(susc("f" + std::to_string(i), false, 0.1 * i + (seed ? 0.05 : 3.0), seed, form));
        }
    const auto rows = hypothesis_suite(s, {999, 0.05});
    REQUIRE(rows.size() == 6);
    std::map<std::pair<std::uint64_t, std::string>, std::vector<double>> fam;
    for (const auto& r : rows) fam[{r.seed, r.form_class}].push_back(r.test.p_raw);
    for (const auto& r : rows) {
      const auto want = oracle::benjamini_hochberg(fam[{r.seed, r.form_class}], 0.05);
      const auto& ps = fam[{r.seed, r.form_class}];
      const auto idx = static_cast<std::size_t>(std::find(ps.begin(), ps.end(), r.test.p_raw) - ps.begin());
      CHECK(r.test.p_adjusted == want.adjusted[idx]);
    }
  }
  SUBCASE("suite on a scored run matches a recomputation from the csv") {
    TempDir dir;
    const auto c = load_config(write_capital_fixture(dir, 3, 3));
    score(c);
    const auto text = read_file(dir.file("out/scores.csv"));
    const auto rows = hypothesis_suite(scores_from_csv(text), {200, 0.05});
    CHECK(rows.size() == 4 * 4);

    // group raw CSV rows by hand
    const auto t = csv::Table::from_text(text);
    const auto cf = t.column("query_form"), ce = t.column("entity_id"), ck = t.column("kind"),
               cv = t.column("value"), ct = t.column("context_type"), cr = t.column("relevant"),
               creal = t.column("is_real");
    std::map<std::string, std::map<std::string, std::map<std::string, std::vector<double>>>> by;  // form/bucket/entity
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> fam;
    for (const auto& row : t.rows()) {
      const double v = std::stod(row[cv]);
      if (row[ck] == "susceptibility") {
        (row[creal] == "true" ? fam[row[cf]].second : fam[row[cf]].first).push_back(v);
      } else if (row[ck] == "persuasion") {
        if (row[cr] == "false") {
          by[row[cf]]["irrelevant"][row[ce]].push_back(v);
        } else {
          by[row[cf]]["relevant"][row[ce]].push_back(v);
          by[row[cf]][row[ct]][row[ce]].push_back(v);
        }
      }
    }
    auto means = [](const std::map<std::string, std::vector<double>>& m) {
      std::vector<double> out;
      for (const auto& [e, v] : m) {
        double s = 0;
        for (double x : v) s += x;
        out.push_back(s / static_cast<double>(v.size()));
      }
      return out;
    };
    for (const auto& r : rows) {
      REQUIRE(r.status == "ok");
      std::vector<double> a, b;
      if (r.hypothesis == "familiarity") {
        a = fam[r.query_form].first;
        b = fam[r.query_form].second;
      } else if (r.hypothesis == "relevance") {
        a = means(by[r.query_form]["relevant"]);
        b = means(by[r.query_form]["irrelevant"]);
      } else if (r.hypothesis == "assertiveness") {
        a = means(by[r.query_form]["assertive"]);
        b = means(by[r.query_form]["base"]);
      } else {
        a = means(by[r.query_form]["negation"]);
        b = means(by[r.query_form]["base"]);
      }
      CHECK(r.test.n_a == a.size());
      CHECK(r.test.n_b == b.size());
      CHECK(r.test.statistic == doctest::Approx(oracle::welch(a, b)).epsilon(1e-9));
    }
  }
}

TEST_CASE("reliability report") {
  std::vector<ScoreRecord> s{susc("e", true, 0.1, 0), susc("e", true, 0.3, 1), susc("lonely", true, 1.0, 0)};
  const auto rep = reliability_report(s);
  bool found = false;
  for (const auto& r : rep.rows) {
    if (r.scope == "seed" && r.entity_id == "e") {
      found = true;
      CHECK(r.n == 2);
      CHECK(r.variance == doctest::Approx(0.02).epsilon(1e-12));
      CHECK(r.mean == doctest::Approx(0.2));
    }
  }
  CHECK(found);
  CHECK(rep.singleton_seed_keys == 1);

  SUBCASE("keys partition a scored table") {
    TempDir dir;
    auto c = load_config(write_capital_fixture(dir, 2, 2, {{"seeds", {0, 1, 2}}}));
    const auto res = score(c);
    const auto r = reliability_report(res.scores);
    std::size_t seed_n = r.singleton_seed_keys, form_n = r.singleton_form_keys;
    for (const auto& row : r.rows) (row.scope == "seed" ? seed_n : form_n) += row.n;
    CHECK(seed_n == res.scores.size());
    CHECK(form_n == res.scores.size());
    // susceptibility is keyed without a context, so it is defined for every entity
    for (const auto& row : r.rows)
      if (row.scope == "seed" && row.kind == "susceptibility") CHECK(row.n == 3);
  }
}

TEST_CASE("analysis join") {
  TempDir dir;
  std::vector<ScoreRecord> s;
  for (int i = 0; i < 8; ++i) s.push_back(susc("e" + std::to_string(i), i % 2 == 0, 0.1 * i));
  write_file(dir.file("scores.csv"), scores_to_csv(s));
  std::string counts = "entity,answer,count\n", degrees = "entity,relation,degree\n";
  for (int i = 0; i < 8; ++i) {
    counts += "e" + std::to_string(i) + ",a," + std::to_string(1000 - 100 * i) + "\n";
    counts += "e" + std::to_string(i) + ",b,1\n";
    degrees += "e" + std::to_string(i) + ",capital," + std::to_string(i) + "\n";
  }
  write_file(dir.file("counts.csv"), counts);
  write_file(dir.file("degrees.csv"), degrees);
  const auto sum = analysis_join({dir.file("scores.csv"), dir.file("counts.csv"), dir.file("degrees.csv"), ""},
                                 dir.path().string());
  CHECK(sum.rows == 8);
  CHECK(sum.n_count == 8);
  CHECK(*sum.rho_count == doctest::Approx(-1.0));
  CHECK(*sum.rho_degree == doctest::Approx(1.0));
  const auto joined = csv::Table::load(dir.file("joined.csv"));
  CHECK(joined.rows().size() == 8);
  CHECK(joined.rows()[0][joined.column("cooc_count")] == "1001");
  const auto cj = json::parse(read_file(dir.file("correlations.json")));
  CHECK(cj["mr_bins"].size() == 5);

  SUBCASE("memorization ratios land in bins") {
    std::string mr = "seed,relation,query_form,entity_id,original_answer,p_o,p_s,n_other,mr\n";
    mr += "0,capital,open_qa,e1,x,1,0,0,1\n0,capital,open_qa,e2,x,0,1,0,0\n0,capital,open_qa,e3,x,0,0,1,\n";
    write_file(dir.file("mr.csv"), mr);
    const auto j = analysis_join({dir.file("scores.csv"), "", "", dir.file("mr.csv")}, dir.path().string());
    CHECK(j.mr_bins[4].n == 1);
    CHECK(j.mr_bins[0].n == 1);
    CHECK_FALSE(j.rho_count.has_value());
  }
  SUBCASE("nothing matches") {
    write_file(dir.file("other.csv"), "entity,answer,count\nzzz,a,3\n");
    CHECK_THROWS_AS(analysis_join({dir.file("scores.csv"), dir.file("other.csv"), "", ""}, dir.path().string()),
                    Error);
  }
  SUBCASE("report renders") {
    write_file(dir.file("scores.csv"), scores_to_csv(s));
    const auto md = report(dir.path().string());
    CHECK(md.find("| susceptibility | 8 |") != std::string::npos);
    CHECK(md.find("Correlations") != std::string::npos);
  }
}

TEST_CASE("memorization") {
  TempDir dir;
  auto c = load_config(write_capital_fixture(dir, 2, 2, {{"memorization", true}}));
  const auto res = score(c);
  // open forms only
  CHECK(res.memorization.size() == 2 * 4);
  for (const auto& m : res.memorization) {
    CHECK(m.query_form.rfind("open", 0) == 0);
    if (m.ratio.value) CHECK((*m.ratio.value >= 0.0 && *m.ratio.value <= 1.0));
  }
  CHECK(std::filesystem::exists(dir.file("out/memorization.csv")));
}
