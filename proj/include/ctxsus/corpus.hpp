// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace ctxsus::corpus {

struct TokenizedDoc {
  std::string doc_id;
  std::vector<std::string> tokens;
};

/// Removes ASCII punctuation and splits on Unicode whitespace. Case is kept.
std::vector<std::string> tokenize(std::string_view text);

struct PhrasePair {
  std::string entity;
  std::string answer;
};

struct CoocCount {
  std::string entity;
  std::string answer;
  std::size_t window = 0;
  std::uint64_t count = 0;
  std::uint64_t entity_freq = 0;
  std::uint64_t answer_freq = 0;
};

struct CountOptions {
  std::size_t window = 50;
  bool case_insensitive = false;
};

/// Streaming accumulator. Documents may be added in any order and partial
/// accumulators merged; counts depend only on the multiset of documents.
class CooccurrenceCounter {
 public:
  CooccurrenceCounter(const std::vector<PhrasePair>& pairs, CountOptions options);

  void add_document(const std::vector<std::string>& tokens);
  void add_text(std::string_view text) { add_document(tokenize(text)); }

  /// Element-wise sum; both counters must share pairs and options.
  void merge(const CooccurrenceCounter& other);

  std::vector<CoocCount> results() const;
  std::uint64_t documents() const { return documents_; }

 private:
  struct Pair {
    std::size_t entity_phrase;
    std::size_t answer_phrase;
  };

  std::string fold(std::string_view s) const;

  CountOptions options_;
  std::vector<PhrasePair> pairs_;
  std::vector<std::vector<std::string>> phrases_;
  std::vector<Pair> pair_index_;
  std::unordered_map<std::string, std::vector<std::size_t>> by_first_;
  std::vector<std::vector<std::size_t>> pairs_by_entity_phrase_;
  std::vector<std::uint64_t> pair_counts_;
  std::vector<std::uint64_t> phrase_freq_;
  std::uint64_t documents_ = 0;
};

/// One-shot counting over in-memory documents.
std::vector<CoocCount> count_cooccurrences(const std::vector<TokenizedDoc>& docs, const std::vector<PhrasePair>& pairs,
                                           CountOptions options);

struct NerStats {
  std::string term;
  std::uint64_t total_count = 0;
  std::uint64_t entity_labeled_count = 0;
};

struct NerRule {
  std::uint64_t min_freq = 50;
  double max_nonentity_share = 0.75;
};

/// Terms (from `candidates`) that are frequent and mostly not labelled as
/// named entities. Terms without NER statistics are kept.
std::vector<std::string> apply_ner_exclusion(const std::vector<std::string>& candidates,
                                             const std::vector<NerStats>& ner, NerRule rule = {});

struct ScanOptions {
  CountOptions count;
  std::size_t shards = 1;
  std::size_t batch_docs = 256;
  std::size_t queue_batches = 8;
};

/// Streams newline-delimited text or JSONL ({"text": ...}) files, counting in
/// `shards` parallel workers. Files ending in .jsonl are read as JSONL.
std::vector<CoocCount> scan(const std::vector<std::string>& corpus_files, const std::vector<PhrasePair>& pairs,
                            const ScanOptions& options);

std::vector<PhrasePair> load_pairs_csv(const std::string& path);
std::vector<NerStats> load_ner_csv(const std::string& path);
std::string counts_to_csv(const std::vector<CoocCount>& counts);

}  // namespace ctxsus::corpus
