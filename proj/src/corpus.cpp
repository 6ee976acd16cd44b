// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#include "ctxsus/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "ctxsus/error.hpp"
#include "ctxsus/util.hpp"
#include "json.hpp"

namespace ctxsus::corpus {

namespace {

bool is_unicode_space(char32_t cp) {
  return (cp >= 0x09 && cp <= 0x0D) || cp == 0x20 || cp == 0x85 || cp == 0xA0 || cp == 0x1680 ||
         (cp >= 0x2000 && cp <= 0x200A) || cp == 0x2028 || cp == 0x2029 || cp == 0x202F || cp == 0x205F ||
         cp == 0x3000;
}

// Length of the UTF-8 sequence at s[i] and its code point; malformed bytes
// decode as a single non-space unit.
std::size_t decode(std::string_view s, std::size_t i, char32_t& cp) {
  const auto b0 = static_cast<unsigned char>(s[i]);
  if (b0 < 0x80) {
    cp = b0;
    return 1;
  }
  std::size_t len = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    cp = 0xFFFD;
    return 1;
  }
  if (i + len > s.size()) {
    cp = 0xFFFD;
    return 1;
  }
  for (std::size_t k = 1; k < len; ++k) {
    const auto b = static_cast<unsigned char>(s[i + k]);
    if ((b & 0xC0) != 0x80) {
      cp = 0xFFFD;
      return 1;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  return len;
}

template <class T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

  void push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return items_.size() < capacity_ || closed_; });
    if (closed_) return;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
  }

  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return !items_.empty() || closed_; });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::size_t capacity_;
  std::deque<T> items_;
  bool closed_ = false;
  std::mutex mu_;
  std::condition_variable not_empty_, not_full_;
};

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    char32_t cp;
    const std::size_t len = decode(text, i, cp);
    if (is_unicode_space(cp)) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else if (!(cp < 0x80 && std::ispunct(static_cast<int>(cp)))) {
      current.append(text.substr(i, len));
    }
    i += len;
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

CooccurrenceCounter::CooccurrenceCounter(const std::vector<PhrasePair>& pairs, CountOptions options)
    : options_(options), pairs_(pairs) {
  if (options_.window < 1) fail(ErrorCode::invalid_argument, "window must be >= 1");
  std::unordered_map<std::string, std::size_t> phrase_ids;
  auto intern = [&](const std::string& phrase) {
    std::vector<std::string> toks = tokenize(phrase);
    for (auto& t : toks) t = fold(t);
    if (toks.empty()) fail(ErrorCode::invalid_argument, "phrase '" + phrase + "' has no tokens");
    std::string key;
    for (const auto& t : toks) {
      key += t;
      key.push_back('\x1f');
    }
    auto [it, inserted] = phrase_ids.try_emplace(key, phrases_.size());
    if (inserted) {
      by_first_[toks.front()].push_back(phrases_.size());
      phrases_.push_back(std::move(toks));
    }
    return it->second;
  };
  for (const auto& p : pairs_) pair_index_.push_back({intern(p.entity), intern(p.answer)});
  pairs_by_entity_phrase_.resize(phrases_.size());
  for (std::size_t i = 0; i < pair_index_.size(); ++i) pairs_by_entity_phrase_[pair_index_[i].entity_phrase].push_back(i);
  pair_counts_.assign(pairs_.size(), 0);
  phrase_freq_.assign(phrases_.size(), 0);
}

std::string CooccurrenceCounter::fold(std::string_view s) const {
  std::string out(s);
  if (options_.case_insensitive) {
    for (char& c : out)
      if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

void CooccurrenceCounter::add_document(const std::vector<std::string>& raw_tokens) {
  ++documents_;
  if (phrases_.empty() || raw_tokens.empty()) return;
  std::vector<std::string> folded;
  const std::vector<std::string>* tokens = &raw_tokens;
  if (options_.case_insensitive) {
    folded.reserve(raw_tokens.size());
    for (const auto& t : raw_tokens) folded.push_back(fold(t));
    tokens = &folded;
  }
  const auto& toks = *tokens;

  // Match start positions per phrase, ascending by construction.
  std::unordered_map<std::size_t, std::vector<std::size_t>> hits;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    auto it = by_first_.find(toks[i]);
    if (it == by_first_.end()) continue;
    for (std::size_t ph : it->second) {
      const auto& phrase = phrases_[ph];
      if (i + phrase.size() > toks.size()) continue;
      bool match = true;
      for (std::size_t k = 1; k < phrase.size() && match; ++k) match = toks[i + k] == phrase[k];
      if (match) hits[ph].push_back(i);
    }
  }
  const std::size_t w = options_.window;
  for (const auto& [ph, positions] : hits) {
    phrase_freq_[ph] += positions.size();
    for (std::size_t pi : pairs_by_entity_phrase_[ph]) {
      const auto ait = hits.find(pair_index_[pi].answer_phrase);
      if (ait == hits.end()) continue;
      const auto& answers = ait->second;
      std::uint64_t c = 0;
      for (std::size_t i : positions) {
        const std::size_t lo = i >= w ? i - w : 0;
        const auto first = std::lower_bound(answers.begin(), answers.end(), lo);
        const auto last = std::upper_bound(answers.begin(), answers.end(), i + w);
        c += static_cast<std::uint64_t>(last - first);
      }
      if (pair_index_[pi].answer_phrase == ph) c -= positions.size();
      pair_counts_[pi] += c;
    }
  }
}

void CooccurrenceCounter::merge(const CooccurrenceCounter& other) {
  if (other.pair_counts_.size() != pair_counts_.size() || other.options_.window != options_.window ||
      other.options_.case_insensitive != options_.case_insensitive) {
    fail(ErrorCode::invalid_argument, "cannot merge counters with different configuration");
  }
  for (std::size_t i = 0; i < pair_counts_.size(); ++i) pair_counts_[i] += other.pair_counts_[i];
  for (std::size_t i = 0; i < phrase_freq_.size(); ++i) phrase_freq_[i] += other.phrase_freq_[i];
  documents_ += other.documents_;
}

std::vector<CoocCount> CooccurrenceCounter::results() const {
  std::vector<CoocCount> out;
  out.reserve(pairs_.size());
  for (std::size_t i = 0; i < pairs_.size(); ++i) {
    out.push_back({pairs_[i].entity, pairs_[i].answer, options_.window, pair_counts_[i],
                   phrase_freq_[pair_index_[i].entity_phrase], phrase_freq_[pair_index_[i].answer_phrase]});
  }
  return out;
}

std::vector<CoocCount> count_cooccurrences(const std::vector<TokenizedDoc>& docs, const std::vector<PhrasePair>& pairs,
                                           CountOptions options) {
  if (pairs.empty()) return {};
  CooccurrenceCounter counter(pairs, options);
  for (const auto& d : docs) counter.add_document(d.tokens);
  return counter.results();
}

std::vector<std::string> apply_ner_exclusion(const std::vector<std::string>& candidates,
                                             const std::vector<NerStats>& ner, NerRule rule) {
  std::unordered_map<std::string, const NerStats*> by_term;
  for (const auto& s : ner) {
    if (s.entity_labeled_count > s.total_count) {
      fail(ErrorCode::invalid_argument, "NER stats for '" + s.term + "': labelled count exceeds total");
    }
    by_term[s.term] = &s;
  }
  std::vector<std::string> excluded;
  for (const auto& term : candidates) {
    auto it = by_term.find(term);
    if (it == by_term.end()) continue;
    const NerStats& s = *it->second;
    if (s.total_count <= rule.min_freq) continue;
    const double nonentity =
        1.0 - static_cast<double>(s.entity_labeled_count) / static_cast<double>(s.total_count);
    if (nonentity > rule.max_nonentity_share) excluded.push_back(term);
  }
  return excluded;
}

std::vector<CoocCount> scan(const std::vector<std::string>& corpus_files, const std::vector<PhrasePair>& pairs,
                            const ScanOptions& options) {
  if (pairs.empty()) return {};
  const std::size_t shards = std::max<std::size_t>(1, options.shards);
  using Batch = std::vector<std::string>;
  BoundedQueue<Batch> queue(std::max<std::size_t>(1, options.queue_batches));

  std::vector<CooccurrenceCounter> counters(shards, CooccurrenceCounter(pairs, options.count));
  std::vector<std::jthread> workers;
  workers.reserve(shards);
  for (std::size_t s = 0; s < shards; ++s) {
    workers.emplace_back([&, s] {
      while (auto batch = queue.pop())
        for (const auto& text : *batch) counters[s].add_text(text);
    });
  }

  try {
    for (const auto& file : corpus_files) {
      std::ifstream in(file, std::ios::binary);
      if (!in) fail(ErrorCode::io, "cannot read corpus shard " + file);
      const bool jsonl = ends_with(file, ".jsonl");
      Batch batch;
      std::string line;
      std::size_t line_no = 0;
      while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (jsonl) {
          if (line.empty()) continue;
          nlohmann::json j;
          try {
            j = nlohmann::json::parse(line);
          } catch (const nlohmann::json::exception& ex) {
            fail(ErrorCode::io, "corpus shard " + file + ":" + std::to_string(line_no) + ": " + ex.what());
          }
          if (!j.is_object() || !j.contains("text") || !j["text"].is_string()) {
            fail(ErrorCode::io, "corpus shard " + file + ":" + std::to_string(line_no) + ": missing \"text\" field");
          }
          batch.push_back(j["text"].get<std::string>());
        } else {
          batch.push_back(std::move(line));
        }
        if (batch.size() >= options.batch_docs) {
          queue.push(std::move(batch));
          batch.clear();
        }
      }
      if (in.bad()) fail(ErrorCode::io, "error reading corpus shard " + file);
      if (!batch.empty()) queue.push(std::move(batch));
    }
  } catch (...) {
    queue.close();
    throw;
  }
  queue.close();
  workers.clear();

  for (std::size_t s = 1; s < shards; ++s) counters[0].merge(counters[s]);
  return counters[0].results();
}

std::vector<PhrasePair> load_pairs_csv(const std::string& path) {
  const auto t = csv::Table::load(path);
  const auto e = t.column("entity"), a = t.column("answer");
  std::vector<PhrasePair> out;
  for (const auto& r : t.rows()) out.push_back({r[e], r[a]});
  return out;
}

std::vector<NerStats> load_ner_csv(const std::string& path) {
  const auto t = csv::Table::load(path);
  const auto term = t.column("term"), total = t.column("total_count"), labeled = t.column("entity_labeled_count");
  std::vector<NerStats> out;
  for (const auto& r : t.rows()) {
    try {
      out.push_back({r[term], std::stoull(r[total]), std::stoull(r[labeled])});
    } catch (const std::logic_error&) {
      fail(ErrorCode::invalid_argument, path + ": bad count for term '" + r[term] + "'");
    }
  }
  return out;
}

std::string counts_to_csv(const std::vector<CoocCount>& counts) {
  std::ostringstream out;
  csv::write_row(out, {"entity", "answer", "window", "count", "entity_freq", "answer_freq"});
  for (const auto& c : counts) {
    csv::write_row(out, {c.entity, c.answer, std::to_string(c.window), std::to_string(c.count),
                         std::to_string(c.entity_freq), std::to_string(c.answer_freq)});
  }
  return out.str();
}

}  // namespace ctxsus::corpus
