// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#include "ctxsus/stats.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include "ctxsus/error.hpp"
#include "ctxsus/util.hpp"

namespace ctxsus::stats {

namespace {

void require_samples(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() < 2 || b.size() < 2) fail(ErrorCode::invalid_argument, std::string(what) + ": need at least 2 samples per group");
  for (double x : a)
    if (!std::isfinite(x)) fail(ErrorCode::invalid_argument, std::string(what) + ": non-finite sample");
  for (double x : b)
    if (!std::isfinite(x)) fail(ErrorCode::invalid_argument, std::string(what) + ": non-finite sample");
}

// Welch t from sufficient statistics; zero standard error maps to the sign
// of the mean difference (or 0), which only arises for permuted splits.
double t_from_sums(double sa, double qa, std::size_t na, double sb, double qb, std::size_t nb) {
  const double ma = sa / static_cast<double>(na);
  const double mb = sb / static_cast<double>(nb);
  const double va = std::max(0.0, (qa - sa * ma) / static_cast<double>(na - 1));
  const double vb = std::max(0.0, (qb - sb * mb) / static_cast<double>(nb - 1));
  const double se2 = va / static_cast<double>(na) + vb / static_cast<double>(nb);
  const double diff = ma - mb;
  if (se2 <= 0.0) {
    if (diff == 0.0) return 0.0;
    return diff > 0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
  }
  return diff / std::sqrt(se2);
}

bool is_ascii_punct(unsigned char c) { return c < 128 && std::ispunct(c); }

}  // namespace

const char* to_string(Tail t) { return t == Tail::greater ? "greater" : "two_sided"; }

Tail tail_from_string(const std::string& s) {
  if (s == "greater") return Tail::greater;
  if (s == "two_sided" || s == "two-sided") return Tail::two_sided;
  fail(ErrorCode::invalid_argument, "unknown tail '" + s + "'");
}

double mean(std::span<const double> x) {
  if (x.empty()) fail(ErrorCode::invalid_argument, "mean: empty sample");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) fail(ErrorCode::invalid_argument, "sample_variance: need at least 2 values");
  const double m = mean(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

double welch_t(std::span<const double> a, std::span<const double> b) {
  require_samples(a, b, "welch_t");
  const double va = sample_variance(a), vb = sample_variance(b);
  const double se2 = va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size());
  if (se2 <= 0.0) fail(ErrorCode::undefined, "welch_t: both groups have zero variance");
  return (mean(a) - mean(b)) / std::sqrt(se2);
}

TestResult permutation_test(std::span<const double> a, std::span<const double> b, Tail tail, std::size_t k,
                            std::uint64_t seed) {
  if (k < 1) fail(ErrorCode::invalid_argument, "permutation_test: k must be >= 1");
  TestResult r;
  r.statistic = welch_t(a, b);
  r.effect_size = effect_size(a, b);
  r.tail = tail;
  r.n_a = a.size();
  r.n_b = b.size();
  r.k = k;
  r.seed = seed;

  std::vector<double> pool(a.begin(), a.end());
  pool.insert(pool.end(), b.begin(), b.end());
  // t is shift invariant; centering keeps the running sums well conditioned.
  const double center = mean(pool);
  for (double& x : pool) x -= center;
  double total = 0.0, total_sq = 0.0;
  for (double x : pool) {
    total += x;
    total_sq += x * x;
  }
  const std::size_t na = a.size(), nb = b.size();
  const double observed = tail == Tail::greater ? r.statistic : std::abs(r.statistic);
  // Recomputing t for a split equal to the observed one may differ by a few ulps.
  const double threshold = observed - 1e-12 * std::max(1.0, std::abs(observed));

  Rng rng(seed);
  std::size_t hits = 0;
  for (std::size_t it = 0; it < k; ++it) {
    // Partial Fisher-Yates: the first na slots form the permuted group a.
    double sa = 0.0, qa = 0.0;
    for (std::size_t i = 0; i < na; ++i) {
      const std::size_t j = i + uniform_index(rng, pool.size() - i);
      std::swap(pool[i], pool[j]);
      sa += pool[i];
      qa += pool[i] * pool[i];
    }
    const double t = t_from_sums(sa, qa, na, total - sa, total_sq - qa, nb);
    const double stat = tail == Tail::greater ? t : std::abs(t);
    if (stat >= threshold) ++hits;
  }
  r.p_raw = static_cast<double>(1 + hits) / static_cast<double>(k + 1);
  r.p_adjusted = r.p_raw;
  return r;
}

BhResult bh_correct(std::span<const double> p_values, double alpha) {
  const std::size_t m = p_values.size();
  BhResult out{std::vector<double>(m), std::vector<bool>(m)};
  if (m == 0) return out;
  for (double p : p_values)
    if (!(p > 0.0 && p <= 1.0)) fail(ErrorCode::invalid_argument, "bh_correct: p-values must lie in (0, 1]");
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return p_values[i] < p_values[j]; });
  double running = 1.0;
  for (std::size_t r = m; r-- > 0;) {
    const std::size_t idx = order[r];
    const double scaled = p_values[idx] * static_cast<double>(m) / static_cast<double>(r + 1);
    running = std::min(running, scaled);
    out.adjusted[idx] = std::min(1.0, running);
  }
  for (std::size_t i = 0; i < m; ++i) out.rejected[i] = out.adjusted[i] <= alpha;
  return out;
}

double effect_size(std::span<const double> a, std::span<const double> b) {
  require_samples(a, b, "effect_size");
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  const double pooled = ((na - 1) * sample_variance(a) + (nb - 1) * sample_variance(b)) / (na + nb - 2);
  if (pooled <= 0.0) fail(ErrorCode::undefined, "effect_size: pooled standard deviation is zero");
  return (mean(a) - mean(b)) / std::sqrt(pooled);
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(x.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && x[order[j + 1]] == x[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorCode::dimension, "pearson: length mismatch");
  if (x.size() < 2) fail(ErrorCode::invalid_argument, "pearson: need at least 2 points");
  const double mx = mean(x), my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) fail(ErrorCode::undefined, "correlation undefined for a constant vector");
  return sxy / std::sqrt(sxx * syy);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) fail(ErrorCode::dimension, "spearman: length mismatch");
  if (x.size() < 3) fail(ErrorCode::invalid_argument, "spearman: need at least 3 points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

const char* to_string(AgreementLabel l) {
  switch (l) {
    case AgreementLabel::context: return "context";
    case AgreementLabel::original: return "original";
    case AgreementLabel::other: return "other";
  }
  return "other";
}

AgreementLabel label_from_string(const std::string& s) {
  if (s == "context") return AgreementLabel::context;
  if (s == "original") return AgreementLabel::original;
  if (s == "other") return AgreementLabel::other;
  fail(ErrorCode::invalid_argument, "unknown agreement label '" + s + "'");
}

std::string normalize_answer(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (unsigned char c : s) {
    if (is_ascii_punct(c)) continue;
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(c < 128 ? static_cast<char>(std::tolower(c)) : static_cast<char>(c));
  }
  return out;
}

AgreementLabel classify_answer(std::string_view generated, std::string_view context_answer,
                               std::string_view original_answer) {
  const std::string g = normalize_answer(generated);
  const std::string c = normalize_answer(context_answer);
  const std::string o = normalize_answer(original_answer);
  if (!c.empty() && g.find(c) != std::string::npos) return AgreementLabel::context;
  if (!o.empty() && g.find(o) != std::string::npos) return AgreementLabel::original;
  return AgreementLabel::other;
}

MemorizationRatio memorization_ratio(std::span<const AgreementLabel> labels) {
  MemorizationRatio mr;
  for (auto l : labels) {
    if (l == AgreementLabel::original) ++mr.p_o;
    if (l == AgreementLabel::context) ++mr.p_s;
  }
  if (mr.p_o + mr.p_s > 0) mr.value = static_cast<double>(mr.p_o) / static_cast<double>(mr.p_o + mr.p_s);
  return mr;
}

}  // namespace ctxsus::stats
