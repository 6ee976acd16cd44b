// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#pragma once

/**
 * @file info_metrics.hpp
 * @brief Entropies, KL divergence, half-PMI, persuasion and susceptibility
 *
 * All quantities are in nats. Every function is a pure function of its
 * arguments and may be called concurrently.
 *
 * Persuasion of a context is KL(p(A | c, q) || prior). Susceptibility of an
 * entity query is the context-weighted mean persuasion against the marginal
 * prior, i.e. the mutual information I(C; A) under the given context weights.
 */

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace ctxsus::info {

/// Categorical distribution over an opaque answer vocabulary.
class AnswerDistribution {
 public:
  /// Normalizes nonnegative finite weights. Fails if any weight is negative
  /// or non-finite, or if the total is not positive.
  static AnswerDistribution from_weights(std::vector<double> weights);

  /// exp() of natural-log probabilities, renormalized. -inf entries map to 0.
  static AnswerDistribution from_logprobs(std::span<const float> logprobs);
  static AnswerDistribution from_logprobs(std::span<const double> logprobs);

  std::span<const double> probs() const { return probs_; }
  std::size_t vocab_size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }

  friend bool operator==(const AnswerDistribution&, const AnswerDistribution&) = default;

 private:
  explicit AnswerDistribution(std::vector<double> p) : probs_(std::move(p)) {}
  std::vector<double> probs_;
};

/// Rows of p(A | c) for a set of contexts, with context weights p(c).
class ConditionalTable {
 public:
  ConditionalTable() = default;

  /// Uniform weights.
  ConditionalTable(std::vector<std::string> context_ids, std::vector<AnswerDistribution> rows);
  ConditionalTable(std::vector<std::string> context_ids, std::vector<AnswerDistribution> rows,
                   std::vector<double> weights);

  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }
  std::size_t vocab_size() const { return rows_.empty() ? 0 : rows_.front().vocab_size(); }

  const std::vector<std::string>& context_ids() const { return ids_; }
  const std::vector<AnswerDistribution>& rows() const { return rows_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Σ_c w_c p(·|c).
  AnswerDistribution marginal() const;

 private:
  void validate() const;

  std::vector<std::string> ids_;
  std::vector<AnswerDistribution> rows_;
  std::vector<double> weights_;
};

enum class PriorMode { marginal, no_context };

const char* to_string(PriorMode mode);
PriorMode prior_mode_from_string(const std::string& s);

inline constexpr double kDefaultPriorFloor = 1e-12;

/// Sum with pairwise reduction for spans longer than 4096 entries.
double stable_sum(std::span<const double> values);

double entropy(const AnswerDistribution& d);

/// Σ p_i ln(p_i / q_i); +inf when some p_i > 0 meets q_i == 0.
double kl_divergence(const AnswerDistribution& p, const AnswerDistribution& q);

/// -Σ p_i ln q_i; +inf under the same condition as kl_divergence.
double cross_entropy(const AnswerDistribution& p, const AnswerDistribution& q);

/// Half-PMI of one context against the prior. Identical to kl_divergence.
double persuasion_score(const AnswerDistribution& conditional, const AnswerDistribution& prior);

/// Adds `floor` to every entry and renormalizes. Used for the bare-query
/// prior so that KL stays finite.
AnswerDistribution apply_floor(const AnswerDistribution& d, double floor);

/// Conditional mutual information I(C; A) for one entity query.
double susceptibility_score(const ConditionalTable& table);

/// Persuasion of every row against the table marginal, in row order.
std::vector<double> persuasion_scores(const ConditionalTable& table);

/// Dense joint distribution p(x, y), row-major with x as the row index.
struct JointTable {
  std::size_t n_x = 0;
  std::size_t n_y = 0;
  std::vector<double> p;

  double at(std::size_t x, std::size_t y) const { return p[x * n_y + y]; }
};

struct HpmiRow {
  std::size_t x;
  double p_x;
  double hpmi;                 // Σ_y p(y|x) ln(p(y|x)/p(y))
  double pointwise_entropy;    // H(X=x)   = -ln p(x)
  double pointwise_cond;       // H(X=x|Y) = -Σ_y p(y|x) ln p(x|y)
  double cross_entropy;        // H_x(Y)   = -Σ_y p(y|x) ln p(y)
  double cond_entropy;         // H(Y|X=x) = -Σ_y p(y|x) ln p(y|x)
  double residual_entropy_form;  // |hpmi - (H(X=x) - H(X=x|Y))|
  double residual_cross_form;    // |hpmi - (H_x(Y) - H(Y|X=x))|
};

struct HpmiReport {
  std::vector<HpmiRow> rows;
  std::vector<std::size_t> excluded_x;  // p(x) == 0
  std::vector<std::size_t> excluded_y;  // p(y) == 0
  double mutual_information = 0.0;      // Σ_x p(x) HPMI(X=x; Y)
  double max_residual = 0.0;
};

/// Half-PMI per x with both entropy decompositions checked.
HpmiReport hpmi_decompositions(const JointTable& joint);

struct EntityPriorPair {
  std::string entity_id;
  AnswerDistribution conditional;  // p(A | c, q(e))
  AnswerDistribution prior;        // p(A | q(e))
};

struct EntityTable {
  std::string entity_id;
  ConditionalTable table;
};

/// Σ_e w_e KL(p(·|c,q(e)) || prior_e). Empty weights mean uniform over
/// entities, which stands in for p(q(e) | c).
double entity_independent_persuasion(std::span<const EntityPriorPair> entries,
                                     std::span<const double> entity_weights = {});

/// Σ_e w_e susceptibility(table_e).
double entity_independent_susceptibility(std::span<const EntityTable> entries,
                                         std::span<const double> entity_weights = {});

}  // namespace ctxsus::info
