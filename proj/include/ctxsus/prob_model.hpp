// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#pragma once

/**
 * @file prob_model.hpp
 * @brief Next-token answer distributions behind one provider interface
 *
 * Providers:
 *  - SyntheticProvider: closed-form model, softmax(beta * log prior + log pull)
 *  - RemoteProvider:    HTTP client for the inference sidecar JSON API
 *  - ReplayProvider:    serves only what is already in a cache file
 *
 * DistributionSource wraps a provider with an in-memory table and an optional
 * append-only cache file. Cache records are
 *   32-byte key | u32 LE vocab_size | vocab_size x f32 LE log-probabilities
 * where key = SHA-256(provider_id \0 model_id \0 prompt text).
 */

#include <atomic>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "ctxsus/info_metrics.hpp"
#include "ctxsus/util.hpp"

namespace ctxsus::model {

struct Prompt {
  std::string text;
  std::optional<std::string> context_id;
  std::string query_id;
  std::string entity_id;
  std::string context_text;  // empty for the bare query
  std::string query_text;
};

/// Builds a prompt whose text is context + separator + query (or the bare query).
Prompt make_prompt(const std::string& context_text, const std::string& query_text, const std::string& separator,
                   std::optional<std::string> context_id = std::nullopt, std::string query_id = {},
                   std::string entity_id = {});

class Provider {
 public:
  virtual ~Provider() = default;

  virtual std::string provider_id() const = 0;
  virtual std::string model_id() const = 0;

  /// Natural-log next-token probabilities for the prompt.
  virtual std::vector<float> next_token_logprobs(const Prompt& prompt) = 0;

  /// Greedy continuation of at most max_tokens tokens.
  virtual std::string generate(const Prompt& prompt, int max_tokens);
};

// ---------------------------------------------------------------------------
// Synthetic provider

struct SyntheticEntity {
  double beta = 0.0;  // familiarity; +inf selects the prior's mode
  std::string surface;
  std::vector<double> prior;  // base prior; empty -> generated from the seed
};

struct SyntheticModelSpec {
  std::vector<std::string> vocab;  // answer strings, one per vocabulary id
  std::uint64_t seed = 0;
  std::map<std::string, SyntheticEntity> entities;
  double default_beta = 0.0;
  /// Explicit pull distributions keyed by context text.
  std::map<std::string, std::vector<double>> context_pulls;

  // Generated priors: logits = prior_noise * z + gold_boost at the gold answer.
  double prior_noise = 1.0;
  double gold_boost = 3.0;
  std::map<std::string, std::string> gold_answers;  // entity id -> answer
  // Generated pulls: logits = pull_noise * z + answer_boost * scale at the
  // answer mentioned in the context, where scale is 1 for contexts that
  // mention the queried entity and irrelevant_scale otherwise; negated
  // contexts use negation_scale instead of 1.
  double pull_noise = 1.0;
  double answer_boost = 2.0;
  double irrelevant_scale = 0.25;
  double negation_scale = -0.5;
};

class SyntheticProvider final : public Provider {
 public:
  explicit SyntheticProvider(SyntheticModelSpec spec, std::string model_id = "synthetic");

  std::string provider_id() const override { return "synthetic"; }
  std::string model_id() const override { return model_id_; }
  std::vector<float> next_token_logprobs(const Prompt& prompt) override;
  std::string generate(const Prompt& prompt, int max_tokens) override;

  /// Exact distribution in double precision (the float32 log-probabilities
  /// returned by next_token_logprobs are this, rounded).
  info::AnswerDistribution distribution(const Prompt& prompt) const;

  const SyntheticModelSpec& spec() const { return spec_; }
  std::vector<double> prior_logits(const std::string& entity_id, const std::string& query_text) const;
  std::vector<double> pull_logits(const Prompt& prompt) const;

 private:
  SyntheticModelSpec spec_;
  std::string model_id_;
};

// ---------------------------------------------------------------------------
// Remote provider

struct RemoteOptions {
  std::string endpoint = "http://127.0.0.1:8000";
  int attempts = 3;
  int backoff_ms = 500;
  int timeout_s = 60;
  bool base64 = true;
};

class RemoteProvider final : public Provider {
 public:
  explicit RemoteProvider(RemoteOptions options);

  std::string provider_id() const override { return "remote"; }
  std::string model_id() const override;
  std::vector<float> next_token_logprobs(const Prompt& prompt) override;
  std::string generate(const Prompt& prompt, int max_tokens) override;

  /// GET /v1/health; returns the reported model id and vocab size.
  struct Health {
    int status = 0;
    std::string model_id;
    std::size_t vocab_size = 0;
  };
  Health health() const;

 private:
  std::string post(const std::string& path, const std::string& body, const std::string& what) const;

  RemoteOptions options_;
  std::string host_;
  int port_ = 80;
  mutable std::mutex model_mu_;
  mutable std::string model_id_;
};

/// Parses a /v1/next_token_distribution response body.
struct DistributionResponse {
  std::string model_id;
  std::vector<float> logprobs;
};
DistributionResponse parse_distribution_response(const std::string& body);

// ---------------------------------------------------------------------------
// Replay provider

class ReplayProvider final : public Provider {
 public:
  /// Keys are computed with the recorded provider and model ids so that a
  /// cache written by another provider can be replayed.
  ReplayProvider(std::string recorded_provider_id, std::string recorded_model_id);

  std::string provider_id() const override { return recorded_provider_; }
  std::string model_id() const override { return recorded_model_; }
  std::vector<float> next_token_logprobs(const Prompt& prompt) override;

 private:
  std::string recorded_provider_;
  std::string recorded_model_;
};

// ---------------------------------------------------------------------------
// Cache

Digest cache_key(const std::string& provider_id, const std::string& model_id, const std::string& prompt_text);

struct CacheRecord {
  Digest key;
  std::vector<float> logprobs;
};

std::string encode_record(const CacheRecord& r);
/// Reads all complete records; a truncated trailing record is an error.
std::vector<CacheRecord> read_cache_file(const std::string& path);

class DistributionCache {
 public:
  /// Empty path keeps the cache in memory only.
  explicit DistributionCache(std::string path = {});

  std::optional<std::vector<float>> find(const Digest& key) const;
  /// Stores and (with a path) appends; existing keys are left untouched.
  void insert(const Digest& key, std::vector<float> logprobs);
  std::size_t size() const;
  const std::string& path() const { return path_; }

  /// Greedy generations, persisted as JSONL next to the record file.
  std::optional<std::string> find_generation(const Digest& key) const;
  void insert_generation(const Digest& key, const std::string& text);

 private:
  struct DigestHash {
    std::size_t operator()(const Digest& d) const noexcept;
  };

  std::string path_;
  mutable std::shared_mutex mu_;
  std::unordered_map<Digest, std::vector<float>, DigestHash> entries_;
  std::unordered_map<Digest, std::string, DigestHash> generations_;
  std::mutex file_mu_;
  std::ofstream out_;
  std::ofstream gen_out_;
};

struct SourceOptions {
  bool use_cache = true;
  std::size_t max_in_flight = 1;
};

/// Provider plus cache. Safe for concurrent callers.
class DistributionSource {
 public:
  DistributionSource(std::shared_ptr<Provider> provider, std::shared_ptr<DistributionCache> cache,
                     SourceOptions options = {});

  std::vector<float> get_logprobs(const Prompt& prompt);
  info::AnswerDistribution get_distribution(const Prompt& prompt);

  /// Order-preserving; duplicates are fetched once. At most max_in_flight
  /// backend calls run concurrently (0 = options.max_in_flight).
  std::vector<info::AnswerDistribution> batch_get(const std::vector<Prompt>& prompts, std::size_t max_in_flight = 0);

  std::string generate(const Prompt& prompt, int max_tokens);

  Provider& provider() { return *provider_; }
  std::uint64_t backend_calls() const { return backend_calls_.load(); }

 private:
  void check_vocab(std::size_t vocab, const Prompt& prompt);

  std::shared_ptr<Provider> provider_;
  std::shared_ptr<DistributionCache> cache_;
  SourceOptions options_;
  std::atomic<std::uint64_t> backend_calls_{0};
  std::mutex vocab_mu_;
  std::optional<std::size_t> vocab_;
};

}  // namespace ctxsus::model
