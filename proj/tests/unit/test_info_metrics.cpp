// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#include <cmath>
#include <random>

#include "ctxsus/error.hpp"
#include "ctxsus/info_metrics.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace ctxsus;
using info::AnswerDistribution;
using info::ConditionalTable;

namespace {

AnswerDistribution D(std::vector<double> p) { return AnswerDistribution::from_weights(std::move(p)); }

ConditionalTable table_of(const std::vector<std::vector<double>>& rows, std::vector<double> w = {}) {
  std::vector<std::string> ids;
  std::vector<AnswerDistribution> r;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ids.push_back("c" + std::to_string(i));
    r.push_back(D(rows[i]));
  }
  if (w.empty()) return ConditionalTable(ids, r);
  return ConditionalTable(ids, r, w);
}

}  // namespace

TEST_CASE("entropy") {
  CHECK(info::entropy(D({1, 0, 0})) == 0.0);
  CHECK(info::entropy(D({1, 1, 1, 1})) == doctest::Approx(std::log(4.0)).epsilon(1e-15));
  CHECK(info::entropy(D({0.7, 0.3})) == doctest::Approx(0.610864).epsilon(1e-6));
}

TEST_CASE("kl divergence") {
  const auto p = D({0.2, 0.5, 0.3});
  CHECK(info::kl_divergence(p, p) == 0.0);
  CHECK(info::kl_divergence(D({1, 0}), D({0.5, 0.5})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  // 0.9 ln 1.8 + 0.1 ln 0.2
  CHECK(info::kl_divergence(D({0.9, 0.1}), D({0.5, 0.5})) == doctest::Approx(0.3680642).epsilon(1e-7));
  CHECK(std::isinf(info::kl_divergence(D({0.5, 0.5}), D({1, 0}))));
  CHECK_THROWS_AS(info::kl_divergence(D({1, 0}), D({1, 0, 0})), Error);
}

TEST_CASE("persuasion equals kl and matches a direct sum") {
  std::mt19937_64 g(5);
  for (int rep = 0; rep < 50; ++rep) {
    const auto p = oracle::random_dist(g, 5), q = oracle::random_dist(g, 5);
    CHECK(info::persuasion_score(D(p), D(q)) == info::kl_divergence(D(p), D(q)));
    CHECK(info::persuasion_score(D(p), D(q)) == doctest::Approx(oracle::kl(p, q)).epsilon(1e-12));
  }
  CHECK(info::persuasion_score(D({1, 0}), D({0.5, 0.5})) == doctest::Approx(0.693147).epsilon(1e-6));
}

TEST_CASE("distribution construction") {
  CHECK_THROWS_AS(D({}), Error);
  CHECK_THROWS_AS(D({0, 0}), Error);
  CHECK_THROWS_AS(D({-1, 2}), Error);
  const auto d = D({2, 6});
  CHECK(d[0] == 0.25);
  const std::vector<float> lp{std::log(0.25f), std::log(0.75f)};
  const auto f = AnswerDistribution::from_logprobs(std::span<const float>(lp));
  CHECK(f[1] == doctest::Approx(0.75).epsilon(1e-6));
}

TEST_CASE("susceptibility") {
  CHECK(info::susceptibility_score(table_of({{0.3, 0.7}, {0.3, 0.7}, {0.3, 0.7}})) == 0.0);
  CHECK(info::susceptibility_score(table_of({{1, 0}, {0, 1}})) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK_THROWS_AS(info::susceptibility_score(ConditionalTable{}), Error);

  std::mt19937_64 g(17);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<std::vector<double>> rows;
    for (int c = 0; c < 4; ++c) rows.push_back(oracle::random_dist(g, 6, true));
    const auto w = oracle::random_dist(g, 4);
    const double chi = info::susceptibility_score(table_of(rows, w));
    CHECK(chi == doctest::Approx(oracle::mutual_information(rows, w)).epsilon(1e-10));
  }
}

TEST_CASE("table validation") {
  CHECK_THROWS_AS(ConditionalTable({"a", "a"}, {D({1, 0}), D({0, 1})}), Error);
  CHECK_THROWS_AS(ConditionalTable({"a", "b"}, {D({1, 0}), D({0, 0, 1})}), Error);
  CHECK_THROWS_AS(ConditionalTable({"a", "b"}, {D({1, 0}), D({0, 1})}, {0.5, 0.6}), Error);
  const auto t = table_of({{1, 0}, {0, 1}}, {0.25, 0.75});
  CHECK(t.marginal()[1] == doctest::Approx(0.75));
}

TEST_CASE("floor for the no-context prior") {
  const auto f = info::apply_floor(D({1, 0}), 1e-12);
  CHECK(f[1] > 0.0);
  CHECK(std::isfinite(info::persuasion_score(D({0, 1}), f)));
  CHECK(info::prior_mode_from_string("no-context") == info::PriorMode::no_context);
  CHECK_THROWS_AS(info::prior_mode_from_string("posterior"), Error);
}

TEST_CASE("hpmi decompositions") {
  SUBCASE("independent joint") {
    info::JointTable j{2, 3, {}};
    const double px[] = {0.4, 0.6}, py[] = {0.2, 0.3, 0.5};
    for (double a : px)
      for (double b : py) j.p.push_back(a * b);
    const auto r = info::hpmi_decompositions(j);
    for (const auto& row : r.rows) CHECK(row.hpmi == doctest::Approx(0.0).scale(1).epsilon(1e-12));
  }
  SUBCASE("diagonal coupling") {
    const std::size_t k = 5;
    info::JointTable j{k, k, std::vector<double>(k * k, 0.0)};
    for (std::size_t i = 0; i < k; ++i) j.p[i * k + i] = 1.0 / k;
    const auto r = info::hpmi_decompositions(j);
    for (const auto& row : r.rows) CHECK(row.hpmi == doctest::Approx(std::log(5.0)).epsilon(1e-12));
  }
  SUBCASE("random joint: expectation of hpmi is mi") {
    std::mt19937_64 g(3);
    const auto flat = oracle::random_dist(g, 12);
    info::JointTable j{3, 4, flat};
    std::vector<std::vector<double>> rows(3);
    std::vector<double> w(3, 0.0);
    for (int x = 0; x < 3; ++x) {
      for (int y = 0; y < 4; ++y) w[x] += flat[x * 4 + y];
      for (int y = 0; y < 4; ++y) rows[x].push_back(flat[x * 4 + y] / w[x]);
    }
    const auto r = info::hpmi_decompositions(j);
    CHECK(r.mutual_information == doctest::Approx(oracle::mutual_information(rows, w)).epsilon(1e-12));
    CHECK(r.max_residual < 1e-10);
  }
  SUBCASE("zero rows and columns are excluded") {
    info::JointTable j{3, 3, {0.5, 0, 0, 0, 0, 0, 0.2, 0, 0.3}};
    const auto r = info::hpmi_decompositions(j);
    CHECK(r.excluded_x == std::vector<std::size_t>{1});
    CHECK(r.excluded_y == std::vector<std::size_t>{1});
    CHECK(r.rows.size() == 2);
  }
}

TEST_CASE("entity-independent scores") {
  using info::EntityPriorPair;
  using info::EntityTable;
  std::vector<EntityPriorPair> one{{"e", D({1, 0}), D({0.5, 0.5})}};
  CHECK(info::entity_independent_persuasion(one) == info::persuasion_score(D({1, 0}), D({0.5, 0.5})));
  std::vector<EntityPriorPair> two{{"a", D({0.5, 0.5}), D({0.5, 0.5})}, {"b", D({1, 0}), D({0.5, 0.5})}};
  CHECK(info::entity_independent_persuasion(two) == doctest::Approx(0.346574).epsilon(1e-6));
  CHECK_THROWS_AS(info::entity_independent_persuasion(std::span<const EntityPriorPair>{}), Error);

  std::mt19937_64 g(9);
  std::vector<EntityPriorPair> three;
  std::vector<double> direct;
  for (int e = 0; e < 3; ++e) {
    const auto p = oracle::random_dist(g, 4), q = oracle::random_dist(g, 4);
    three.push_back({"e" + std::to_string(e), D(p), D(q)});
    direct.push_back(oracle::kl(p, q));
  }
  const std::vector<double> w{0.2, 0.5, 0.3};
  CHECK(info::entity_independent_persuasion(three, w) ==
        doctest::Approx(0.2 * direct[0] + 0.5 * direct[1] + 0.3 * direct[2]).epsilon(1e-12));

  std::vector<EntityTable> same{{"a", table_of({{0.5, 0.5}, {0.5, 0.5}})}, {"b", table_of({{0.1, 0.9}, {0.1, 0.9}})}};
  CHECK(info::entity_independent_susceptibility(same) == 0.0);
  std::vector<EntityTable> det{{"a", table_of({{1, 0}, {0, 1}})}};
  CHECK(info::entity_independent_susceptibility(det) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  std::vector<EntityTable> rnd;
  double expect = 0.0;
  for (int e = 0; e < 3; ++e) {
    std::vector<std::vector<double>> rows;
    for (int c = 0; c < 3; ++c) rows.push_back(oracle::random_dist(g, 5));
    rnd.push_back({"e" + std::to_string(e), table_of(rows)});
    expect += oracle::mutual_information(rows, {1.0 / 3, 1.0 / 3, 1.0 / 3}) / 3.0;
  }
  CHECK(info::entity_independent_susceptibility(rnd) == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("stable sum on long inputs") {
  std::vector<double> v(100000, 0.1);
  CHECK(info::stable_sum(v) == doctest::Approx(10000.0).epsilon(1e-12));
}
