// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ctxsus::stats {

enum class Tail { greater, two_sided };

const char* to_string(Tail t);
Tail tail_from_string(const std::string& s);

struct TestResult {
  double statistic = 0.0;  // Welch t of (a, b)
  double p_raw = 1.0;
  double p_adjusted = 1.0;
  double effect_size = 0.0;  // Cohen's d, positive when mean(a) > mean(b)
  Tail tail = Tail::greater;
  std::size_t n_a = 0;
  std::size_t n_b = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;
};

double mean(std::span<const double> x);
/// Unbiased (n - 1) sample variance; requires n >= 2.
double sample_variance(std::span<const double> x);

double welch_t(std::span<const double> a, std::span<const double> b);

/// Monte Carlo permutation test over the Welch t-statistic with the
/// (1 + hits) / (k + 1) estimator. p_adjusted is left equal to p_raw.
TestResult permutation_test(std::span<const double> a, std::span<const double> b, Tail tail, std::size_t k,
                            std::uint64_t seed);

struct BhResult {
  std::vector<double> adjusted;
  std::vector<bool> rejected;
};

/// Benjamini-Hochberg step-up adjustment.
BhResult bh_correct(std::span<const double> p_values, double alpha);

/// Cohen's d with pooled standard deviation.
double effect_size(std::span<const double> a, std::span<const double> b);

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> x);

double pearson(std::span<const double> x, std::span<const double> y);
double spearman(std::span<const double> x, std::span<const double> y);

enum class AgreementLabel { context, original, other };

const char* to_string(AgreementLabel l);
AgreementLabel label_from_string(const std::string& s);

/// Lowercase ASCII, drop ASCII punctuation, collapse whitespace runs.
std::string normalize_answer(std::string_view s);

/// Substring match after normalization. A generation containing both
/// answers is labelled `context`.
AgreementLabel classify_answer(std::string_view generated, std::string_view context_answer,
                               std::string_view original_answer);

struct MemorizationRatio {
  std::size_t p_o = 0;  // kept the original answer
  std::size_t p_s = 0;  // switched to the context's answer
  /// p_o / (p_o + p_s); empty when no label is original or context.
  std::optional<double> value;
};

MemorizationRatio memorization_ratio(std::span<const AgreementLabel> labels);

}  // namespace ctxsus::stats
