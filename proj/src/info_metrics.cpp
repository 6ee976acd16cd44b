// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#include "ctxsus/info_metrics.hpp"

#include <cmath>
#include <limits>
#include <unordered_set>

#include "ctxsus/error.hpp"

namespace ctxsus::info {

namespace {

constexpr std::size_t kPairwiseThreshold = 4096;
constexpr double kInf = std::numeric_limits<double>::infinity();

double pairwise(const double* v, std::size_t n) {
  if (n <= kPairwiseThreshold) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += v[i];
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise(v, half) + pairwise(v + half, n - half);
}

void require_same_vocab(const AnswerDistribution& p, const AnswerDistribution& q, const char* what) {
  if (p.vocab_size() != q.vocab_size()) {
    fail(ErrorCode::dimension, std::string(what) + ": vocab size mismatch (" +
                                   std::to_string(p.vocab_size()) + " vs " +
                                   std::to_string(q.vocab_size()) + ")");
  }
}

std::vector<double> resolve_weights(std::span<const double> w, std::size_t n, const char* what) {
  if (w.empty()) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  if (w.size() != n) fail(ErrorCode::dimension, std::string(what) + ": weight count mismatch");
  double total = 0.0;
  for (double x : w) {
    if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorCode::invalid_argument, std::string(what) + ": bad weight");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::invalid_argument, std::string(what) + ": weights must sum to 1");
  return {w.begin(), w.end()};
}

template <class T>
AnswerDistribution from_logs(std::span<const T> logprobs) {
  std::vector<double> w(logprobs.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(static_cast<double>(logprobs[i]));
  return AnswerDistribution::from_weights(std::move(w));
}

}  // namespace

AnswerDistribution AnswerDistribution::from_weights(std::vector<double> weights) {
  if (weights.empty()) fail(ErrorCode::invalid_argument, "AnswerDistribution: empty vocabulary");
  for (double x : weights) {
    if (!(x >= 0.0) || !std::isfinite(x)) {
      fail(ErrorCode::invalid_argument, "AnswerDistribution: entries must be finite and nonnegative");
    }
  }
  const double total = stable_sum(weights);
  if (!(total > 0.0)) fail(ErrorCode::invalid_argument, "AnswerDistribution: total mass must be positive");
  for (double& x : weights) x /= total;
  return AnswerDistribution(std::move(weights));
}

AnswerDistribution AnswerDistribution::from_logprobs(std::span<const float> logprobs) {
  return from_logs(logprobs);
}

AnswerDistribution AnswerDistribution::from_logprobs(std::span<const double> logprobs) {
  return from_logs(logprobs);
}

ConditionalTable::ConditionalTable(std::vector<std::string> context_ids, std::vector<AnswerDistribution> rows)
    : ids_(std::move(context_ids)), rows_(std::move(rows)) {
  if (!rows_.empty()) weights_.assign(rows_.size(), 1.0 / static_cast<double>(rows_.size()));
  validate();
}

ConditionalTable::ConditionalTable(std::vector<std::string> context_ids, std::vector<AnswerDistribution> rows,
                                   std::vector<double> weights)
    : ids_(std::move(context_ids)), rows_(std::move(rows)), weights_(std::move(weights)) {
  validate();
}

void ConditionalTable::validate() const {
  if (ids_.size() != rows_.size()) fail(ErrorCode::dimension, "ConditionalTable: id count != row count");
  if (weights_.size() != rows_.size()) fail(ErrorCode::dimension, "ConditionalTable: weight count != row count");
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    if (rows_[i].vocab_size() != rows_.front().vocab_size()) {
      fail(ErrorCode::dimension, "ConditionalTable: rows disagree on vocab size");
    }
    if (!seen.insert(ids_[i]).second) fail(ErrorCode::invalid_argument, "ConditionalTable: duplicate context id " + ids_[i]);
  }
  if (!rows_.empty()) resolve_weights(weights_, rows_.size(), "ConditionalTable");
}

AnswerDistribution ConditionalTable::marginal() const {
  if (rows_.empty()) fail(ErrorCode::invalid_argument, "ConditionalTable: empty table");
  const std::size_t v = vocab_size();
  std::vector<double> m(v, 0.0);
  std::vector<double> column(rows_.size());
  for (std::size_t a = 0; a < v; ++a) {
    for (std::size_t c = 0; c < rows_.size(); ++c) column[c] = weights_[c] * rows_[c][a];
    m[a] = stable_sum(column);
  }
  return AnswerDistribution::from_weights(std::move(m));
}

const char* to_string(PriorMode mode) { return mode == PriorMode::marginal ? "marginal" : "no-context"; }

PriorMode prior_mode_from_string(const std::string& s) {
  if (s == "marginal") return PriorMode::marginal;
  if (s == "no-context" || s == "no_context") return PriorMode::no_context;
  fail(ErrorCode::config, "unknown prior mode '" + s + "' (expected marginal or no-context)");
}

double stable_sum(std::span<const double> values) { return pairwise(values.data(), values.size()); }

double entropy(const AnswerDistribution& d) {
  std::vector<double> terms(d.vocab_size(), 0.0);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const double p = d[i];
    if (p > 0.0) terms[i] = -p * std::log(p);
  }
  return stable_sum(terms);
}

double kl_divergence(const AnswerDistribution& p, const AnswerDistribution& q) {
  require_same_vocab(p, q, "kl_divergence");
  std::vector<double> terms(p.vocab_size(), 0.0);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    const double pi = p[i];
    if (pi == 0.0) continue;
    if (q[i] == 0.0) return kInf;
    terms[i] = pi * std::log(pi / q[i]);
  }
  // Rounding can leave a tiny negative total when p == q up to an ulp.
  return std::max(0.0, stable_sum(terms));
}

double cross_entropy(const AnswerDistribution& p, const AnswerDistribution& q) {
  require_same_vocab(p, q, "cross_entropy");
  std::vector<double> terms(p.vocab_size(), 0.0);
  for (std::size_t i = 0; i < terms.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return kInf;
    terms[i] = -p[i] * std::log(q[i]);
  }
  return stable_sum(terms);
}

double persuasion_score(const AnswerDistribution& conditional, const AnswerDistribution& prior) {
  return kl_divergence(conditional, prior);
}

AnswerDistribution apply_floor(const AnswerDistribution& d, double floor) {
  if (!(floor >= 0.0) || !std::isfinite(floor)) fail(ErrorCode::invalid_argument, "apply_floor: bad floor");
  std::vector<double> w(d.probs().begin(), d.probs().end());
  for (double& x : w) x += floor;
  return AnswerDistribution::from_weights(std::move(w));
}

std::vector<double> persuasion_scores(const ConditionalTable& table) {
  const AnswerDistribution m = table.marginal();
  std::vector<double> out;
  out.reserve(table.size());
  for (const auto& row : table.rows()) out.push_back(persuasion_score(row, m));
  return out;
}

double susceptibility_score(const ConditionalTable& table) {
  if (table.empty()) fail(ErrorCode::invalid_argument, "susceptibility_score: empty table");
  const std::vector<double> psi = persuasion_scores(table);
  std::vector<double> weighted(psi.size());
  for (std::size_t c = 0; c < psi.size(); ++c) weighted[c] = table.weights()[c] * psi[c];
  return stable_sum(weighted);
}

HpmiReport hpmi_decompositions(const JointTable& joint) {
  if (joint.p.size() != joint.n_x * joint.n_y || joint.p.empty()) {
    fail(ErrorCode::dimension, "hpmi_decompositions: joint shape mismatch");
  }
  double total = 0.0;
  for (double x : joint.p) {
    if (!(x >= 0.0) || !std::isfinite(x)) fail(ErrorCode::invalid_argument, "hpmi_decompositions: bad entry");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) fail(ErrorCode::invalid_argument, "hpmi_decompositions: joint must sum to 1");

  std::vector<double> px(joint.n_x, 0.0), py(joint.n_y, 0.0);
  for (std::size_t x = 0; x < joint.n_x; ++x) {
    for (std::size_t y = 0; y < joint.n_y; ++y) {
      px[x] += joint.at(x, y);
      py[y] += joint.at(x, y);
    }
  }

  HpmiReport report;
  for (std::size_t y = 0; y < joint.n_y; ++y)
    if (py[y] == 0.0) report.excluded_y.push_back(y);

  std::vector<double> mi_terms;
  for (std::size_t x = 0; x < joint.n_x; ++x) {
    if (px[x] == 0.0) {
      report.excluded_x.push_back(x);
      continue;
    }
    HpmiRow r{};
    r.x = x;
    r.p_x = px[x];
    r.pointwise_entropy = -std::log(px[x]);
    double hpmi = 0.0, pcond = 0.0, xent = 0.0, cent = 0.0;
    for (std::size_t y = 0; y < joint.n_y; ++y) {
      const double pxy = joint.at(x, y);
      if (pxy == 0.0) continue;
      const double py_given_x = pxy / px[x];
      const double px_given_y = pxy / py[y];
      hpmi += py_given_x * std::log(py_given_x / py[y]);
      pcond -= py_given_x * std::log(px_given_y);
      xent -= py_given_x * std::log(py[y]);
      cent -= py_given_x * std::log(py_given_x);
    }
    r.hpmi = hpmi;
    r.pointwise_cond = pcond;
    r.cross_entropy = xent;
    r.cond_entropy = cent;
    r.residual_entropy_form = std::abs(hpmi - (r.pointwise_entropy - pcond));
    r.residual_cross_form = std::abs(hpmi - (xent - cent));
    report.max_residual = std::max({report.max_residual, r.residual_entropy_form, r.residual_cross_form});
    mi_terms.push_back(px[x] * hpmi);
    report.rows.push_back(r);
  }
  report.mutual_information = stable_sum(mi_terms);
  return report;
}

double entity_independent_persuasion(std::span<const EntityPriorPair> entries, std::span<const double> entity_weights) {
  if (entries.empty()) fail(ErrorCode::invalid_argument, "entity_independent_persuasion: no entities");
  const auto w = resolve_weights(entity_weights, entries.size(), "entity_independent_persuasion");
  const std::size_t v = entries.front().conditional.vocab_size();
  std::vector<double> terms(entries.size());
  for (std::size_t e = 0; e < entries.size(); ++e) {
    if (entries[e].conditional.vocab_size() != v || entries[e].prior.vocab_size() != v) {
      fail(ErrorCode::dimension, "entity_independent_persuasion: vocab size mismatch");
    }
    const double psi = persuasion_score(entries[e].conditional, entries[e].prior);
    terms[e] = w[e] == 0.0 ? 0.0 : w[e] * psi;
  }
  return stable_sum(terms);
}

double entity_independent_susceptibility(std::span<const EntityTable> entries, std::span<const double> entity_weights) {
  if (entries.empty()) fail(ErrorCode::invalid_argument, "entity_independent_susceptibility: no entities");
  const auto w = resolve_weights(entity_weights, entries.size(), "entity_independent_susceptibility");
  const std::size_t v = entries.front().table.vocab_size();
  std::vector<double> terms(entries.size());
  for (std::size_t e = 0; e < entries.size(); ++e) {
    if (entries[e].table.vocab_size() != v) fail(ErrorCode::dimension, "entity_independent_susceptibility: vocab size mismatch");
    terms[e] = w[e] * susceptibility_score(entries[e].table);
  }
  return stable_sum(terms);
}

}  // namespace ctxsus::info
