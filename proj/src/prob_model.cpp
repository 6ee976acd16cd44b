// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#include "ctxsus/prob_model.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>
#include <thread>

#include "ctxsus/error.hpp"
#include "httplib.h"
#include "json.hpp"

namespace ctxsus::model {

using nlohmann::json;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<double> log_softmax(const std::vector<double>& logits) {
  double mx = kNegInf;
  for (double x : logits) mx = std::max(mx, x);
  if (!std::isfinite(mx)) fail(ErrorCode::invalid_argument, "log_softmax: no finite logit");
  double s = 0.0;
  for (double x : logits) s += std::exp(x - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> log_of(const std::vector<double>& p) {
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) out[i] = p[i] > 0.0 ? std::log(p[i]) : kNegInf;
  return out;
}

bool contains_word(const std::string& text, std::string_view word) {
  std::size_t pos = 0;
  while ((pos = text.find(word, pos)) != std::string::npos) {
    const bool left = pos == 0 || !std::isalnum(static_cast<unsigned char>(text[pos - 1]));
    const std::size_t end = pos + word.size();
    const bool right = end >= text.size() || !std::isalnum(static_cast<unsigned char>(text[end]));
    if (left && right) return true;
    pos = end;
  }
  return false;
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::vector<float> floats_from_le(const std::uint8_t* p, std::size_t n) {
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<float>(get_u32(p + 4 * i));
  return out;
}

void validate_logprobs(const std::vector<float>& lp, const std::string& what) {
  if (lp.empty()) fail(ErrorCode::provider, what + ": empty distribution");
  double s = 0.0;
  for (float x : lp) {
    if (std::isnan(x) || x > 0.0f + 1e-4f) fail(ErrorCode::provider, what + ": invalid log-probability");
    s += std::exp(static_cast<double>(x));
  }
  if (std::abs(s - 1.0) > 1e-4) {
    fail(ErrorCode::provider, what + ": probabilities sum to " + std::to_string(s) + ", expected 1");
  }
}

}  // namespace

Prompt make_prompt(const std::string& context_text, const std::string& query_text, const std::string& separator,
                   std::optional<std::string> context_id, std::string query_id, std::string entity_id) {
  Prompt p;
  p.text = context_text.empty() ? query_text : context_text + separator + query_text;
  p.context_id = std::move(context_id);
  p.query_id = std::move(query_id);
  p.entity_id = std::move(entity_id);
  p.context_text = context_text;
  p.query_text = query_text;
  return p;
}

std::string Provider::generate(const Prompt&, int) {
  fail(ErrorCode::provider, provider_id() + " provider does not support generation");
}

// ---------------------------------------------------------------------------

SyntheticProvider::SyntheticProvider(SyntheticModelSpec spec, std::string model_id)
    : spec_(std::move(spec)), model_id_(std::move(model_id)) {
  if (spec_.vocab.empty()) fail(ErrorCode::config, "synthetic model needs a non-empty vocabulary");
  for (const auto& [id, e] : spec_.entities) {
    if (!e.prior.empty() && e.prior.size() != spec_.vocab.size()) {
      fail(ErrorCode::config, "synthetic prior for '" + id + "' has the wrong vocab size");
    }
    if (std::isnan(e.beta) || e.beta < 0.0) fail(ErrorCode::config, "synthetic beta for '" + id + "' must be >= 0");
  }
  for (const auto& [text, pull] : spec_.context_pulls) {
    if (pull.size() != spec_.vocab.size()) fail(ErrorCode::config, "synthetic pull has the wrong vocab size");
  }
}

std::vector<double> SyntheticProvider::prior_logits(const std::string& entity_id, const std::string& query_text) const {
  const auto it = spec_.entities.find(entity_id);
  if (it != spec_.entities.end() && !it->second.prior.empty()) {
    const auto d = info::AnswerDistribution::from_weights(it->second.prior);
    return log_of({d.probs().begin(), d.probs().end()});
  }
  Rng rng(derive_seed(spec_.seed, {"prior", entity_id, query_text}));
  std::vector<double> logits(spec_.vocab.size());
  for (double& x : logits) x = spec_.prior_noise * standard_normal(rng);
  if (auto g = spec_.gold_answers.find(entity_id); g != spec_.gold_answers.end()) {
    const auto v = std::find(spec_.vocab.begin(), spec_.vocab.end(), g->second);
    if (v != spec_.vocab.end()) logits[static_cast<std::size_t>(v - spec_.vocab.begin())] += spec_.gold_boost;
  }
  return log_softmax(logits);
}

std::vector<double> SyntheticProvider::pull_logits(const Prompt& prompt) const {
  const std::size_t v = spec_.vocab.size();
  if (prompt.context_text.empty()) return std::vector<double>(v, 0.0);
  if (auto it = spec_.context_pulls.find(prompt.context_text); it != spec_.context_pulls.end()) {
    const auto d = info::AnswerDistribution::from_weights(it->second);
    return log_of({d.probs().begin(), d.probs().end()});
  }
  Rng rng(derive_seed(spec_.seed, {"pull", prompt.context_text}));
  std::vector<double> logits(v);
  for (double& x : logits) x = spec_.pull_noise * standard_normal(rng);

  // Longest vocabulary entry mentioned in the context.
  std::size_t mentioned = v, best_len = 0;
  for (std::size_t i = 0; i < v; ++i) {
    const auto& a = spec_.vocab[i];
    if (a.size() > best_len && contains_word(prompt.context_text, a)) {
      mentioned = i;
      best_len = a.size();
    }
  }
  if (mentioned < v) {
    bool relevant = false;
    if (auto e = spec_.entities.find(prompt.entity_id); e != spec_.entities.end() && !e->second.surface.empty()) {
      relevant = prompt.context_text.find(e->second.surface) != std::string::npos;
    }
    double scale = contains_word(prompt.context_text, "not") ? spec_.negation_scale : 1.0;
    if (!relevant) scale *= spec_.irrelevant_scale;
    logits[mentioned] += spec_.answer_boost * scale;
  }
  return logits;
}

info::AnswerDistribution SyntheticProvider::distribution(const Prompt& prompt) const {
  double beta = spec_.default_beta;
  if (auto e = spec_.entities.find(prompt.entity_id); e != spec_.entities.end()) beta = e->second.beta;
  const auto prior = prior_logits(prompt.entity_id, prompt.query_text);
  const std::size_t v = spec_.vocab.size();
  if (std::isinf(beta)) {
    const auto mode = static_cast<std::size_t>(std::max_element(prior.begin(), prior.end()) - prior.begin());
    std::vector<double> onehot(v, 0.0);
    onehot[mode] = 1.0;
    return info::AnswerDistribution::from_weights(std::move(onehot));
  }
  const auto pull = pull_logits(prompt);
  std::vector<double> logits(v);
  for (std::size_t i = 0; i < v; ++i) {
    // beta == 0 must ignore the prior entirely, including -inf entries.
    const double p = beta == 0.0 ? 0.0 : beta * prior[i];
    logits[i] = p + pull[i];
  }
  const auto lsm = log_softmax(logits);
  std::vector<double> w(v);
  for (std::size_t i = 0; i < v; ++i) w[i] = std::exp(lsm[i]);
  return info::AnswerDistribution::from_weights(std::move(w));
}

std::vector<float> SyntheticProvider::next_token_logprobs(const Prompt& prompt) {
  const auto d = distribution(prompt);
  std::vector<float> out(d.vocab_size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = d[i] > 0.0 ? static_cast<float>(std::log(d[i])) : -std::numeric_limits<float>::infinity();
  }
  return out;
}

std::string SyntheticProvider::generate(const Prompt& prompt, int max_tokens) {
  if (max_tokens < 1) fail(ErrorCode::invalid_argument, "max_tokens must be >= 1");
  const auto d = distribution(prompt);
  const auto probs = d.probs();
  const auto argmax = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
  return spec_.vocab[argmax];
}

// ---------------------------------------------------------------------------

DistributionResponse parse_distribution_response(const std::string& body) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::exception& ex) {
    fail(ErrorCode::provider, std::string("malformed distribution response: ") + ex.what());
  }
  DistributionResponse r;
  try {
    r.model_id = j.value("model_id", std::string());
    const std::string encoding = j.value("encoding", std::string("json_array"));
    const auto& lp = j.at("logprobs");
    if (encoding == "base64_f32le") {
      const auto bytes = base64_decode(lp.get<std::string>());
      if (bytes.size() % 4 != 0) fail(ErrorCode::provider, "base64 payload is not a whole number of float32 values");
      r.logprobs = floats_from_le(bytes.data(), bytes.size() / 4);
    } else if (encoding == "json_array") {
      r.logprobs.reserve(lp.size());
      for (const auto& x : lp) r.logprobs.push_back(x.is_null() ? -std::numeric_limits<float>::infinity() : x.get<float>());
    } else {
      fail(ErrorCode::provider, "unknown logprob encoding '" + encoding + "'");
    }
    if (j.contains("vocab_size") && j.at("vocab_size").get<std::size_t>() != r.logprobs.size()) {
      fail(ErrorCode::provider, "vocab_size does not match logprob count");
    }
  } catch (const json::exception& ex) {
    fail(ErrorCode::provider, std::string("malformed distribution response: ") + ex.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::provider) throw;
    fail(ErrorCode::provider, e.what());
  }
  return r;
}

RemoteProvider::RemoteProvider(RemoteOptions options) : options_(std::move(options)) {
  std::string ep = options_.endpoint;
  if (ep.rfind("https://", 0) == 0) fail(ErrorCode::config, "https endpoints are not supported: " + ep);
  if (ep.rfind("http://", 0) == 0) ep = ep.substr(7);
  while (!ep.empty() && ep.back() == '/') ep.pop_back();
  const auto colon = ep.rfind(':');
  if (colon == std::string::npos) {
    host_ = ep;
  } else {
    host_ = ep.substr(0, colon);
    try {
      port_ = std::stoi(ep.substr(colon + 1));
    } catch (const std::logic_error&) {
      fail(ErrorCode::config, "bad endpoint port in " + options_.endpoint);
    }
  }
  if (host_.empty()) fail(ErrorCode::config, "bad endpoint " + options_.endpoint);
  if (options_.attempts < 1) options_.attempts = 1;
}

std::string RemoteProvider::post(const std::string& path, const std::string& body, const std::string& what) const {
  std::string last_error;
  int delay = options_.backoff_ms;
  for (int attempt = 1; attempt <= options_.attempts; ++attempt) {
    httplib::Client cli(host_, port_);
    cli.set_connection_timeout(options_.timeout_s, 0);
    cli.set_read_timeout(options_.timeout_s, 0);
    auto res = cli.Post(path, body, "application/json");
    if (res && res->status == 200) return res->body;
    if (res && res->status >= 400 && res->status < 500) {
      fail(ErrorCode::provider, what + ": " + path + " returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }
    last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    if (attempt < options_.attempts) {
      std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      delay *= 2;
    }
  }
  fail(ErrorCode::provider, what + ": " + path + " failed after " + std::to_string(options_.attempts) +
                                " attempts (" + last_error + ")");
}

RemoteProvider::Health RemoteProvider::health() const {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(options_.timeout_s, 0);
  cli.set_read_timeout(options_.timeout_s, 0);
  auto res = cli.Get("/v1/health");
  if (!res) fail(ErrorCode::provider, "health check failed: " + httplib::to_string(res.error()));
  Health h;
  h.status = res->status;
  try {
    const auto j = json::parse(res->body);
    h.model_id = j.value("model_id", std::string());
    h.vocab_size = j.value("vocab_size", std::size_t{0});
  } catch (const json::exception&) {
    // a non-JSON body still carries the status code
  }
  return h;
}

std::string RemoteProvider::model_id() const {
  std::lock_guard lock(model_mu_);
  if (model_id_.empty()) {
    const auto h = health();
    if (h.status != 200) fail(ErrorCode::provider, "sidecar not ready (HTTP " + std::to_string(h.status) + ")");
    model_id_ = h.model_id;
  }
  return model_id_;
}

std::vector<float> RemoteProvider::next_token_logprobs(const Prompt& prompt) {
  json body = {{"prompt", prompt.text}, {"encoding", options_.base64 ? "base64_f32le" : "json_array"}};
  const std::string what = "prompt " + to_hex(cache_key(provider_id(), model_id(), prompt.text));
  auto r = parse_distribution_response(post("/v1/next_token_distribution", body.dump(), what));
  return std::move(r.logprobs);
}

std::string RemoteProvider::generate(const Prompt& prompt, int max_tokens) {
  json body = {{"prompt", prompt.text}, {"max_tokens", max_tokens}};
  const std::string what = "prompt " + to_hex(cache_key(provider_id(), model_id(), prompt.text));
  const std::string resp = post("/v1/generate", body.dump(), what);
  try {
    return json::parse(resp).at("text").get<std::string>();
  } catch (const json::exception& ex) {
    fail(ErrorCode::provider, std::string("malformed generate response: ") + ex.what());
  }
}

// ---------------------------------------------------------------------------

ReplayProvider::ReplayProvider(std::string recorded_provider_id, std::string recorded_model_id)
    : recorded_provider_(std::move(recorded_provider_id)), recorded_model_(std::move(recorded_model_id)) {}

std::vector<float> ReplayProvider::next_token_logprobs(const Prompt& prompt) {
  fail(ErrorCode::provider, "replay cache miss for prompt " +
                                to_hex(cache_key(recorded_provider_, recorded_model_, prompt.text)) + ": \"" +
                                prompt.text.substr(0, 80) + "\"");
}

// ---------------------------------------------------------------------------

Digest cache_key(const std::string& provider_id, const std::string& model_id, const std::string& prompt_text) {
  std::string buf;
  buf.reserve(provider_id.size() + model_id.size() + prompt_text.size() + 2);
  buf.append(provider_id);
  buf.push_back('\0');
  buf.append(model_id);
  buf.push_back('\0');
  buf.append(prompt_text);
  return sha256(buf);
}

std::string encode_record(const CacheRecord& r) {
  std::string out(reinterpret_cast<const char*>(r.key.data()), r.key.size());
  put_u32(out, static_cast<std::uint32_t>(r.logprobs.size()));
  for (float x : r.logprobs) put_u32(out, std::bit_cast<std::uint32_t>(x));
  return out;
}

std::vector<CacheRecord> read_cache_file(const std::string& path) {
  const std::string data = read_file(path);
  const auto* p = reinterpret_cast<const unsigned char*>(data.data());
  std::vector<CacheRecord> out;
  std::size_t pos = 0;
  while (pos < data.size()) {
    if (data.size() - pos < 36) fail(ErrorCode::io, path + ": truncated cache record at byte " + std::to_string(pos));
    CacheRecord r;
    std::memcpy(r.key.data(), p + pos, 32);
    const std::uint32_t n = get_u32(p + pos + 32);
    pos += 36;
    if (n == 0 || (data.size() - pos) / 4 < n) {
      fail(ErrorCode::io, path + ": truncated cache record at byte " + std::to_string(pos - 36));
    }
    r.logprobs = floats_from_le(p + pos, n);
    pos += 4 * static_cast<std::size_t>(n);
    out.push_back(std::move(r));
  }
  return out;
}

std::size_t DistributionCache::DigestHash::operator()(const Digest& d) const noexcept {
  std::size_t h;
  std::memcpy(&h, d.data(), sizeof h);
  return h;
}

DistributionCache::DistributionCache(std::string path) : path_(std::move(path)) {
  if (path_.empty()) return;
  const std::filesystem::path p(path_);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  if (std::filesystem::exists(p)) {
    for (auto& r : read_cache_file(path_)) entries_.try_emplace(r.key, std::move(r.logprobs));
  }
  const std::string gen_path = path_ + ".gen.jsonl";
  if (std::filesystem::exists(gen_path)) {
    const std::string text = read_file(gen_path);
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t end = text.find('\n', pos);
      if (end == std::string::npos) end = text.size();
      const std::string line = text.substr(pos, end - pos);
      pos = end + 1;
      if (line.empty()) continue;
      try {
        const auto j = json::parse(line);
        const auto key_bytes = j.at("key").get<std::string>();
        Digest k{};
        if (key_bytes.size() != 64) continue;
        for (std::size_t i = 0; i < 32; ++i) k[i] = static_cast<std::uint8_t>(std::stoi(key_bytes.substr(2 * i, 2), nullptr, 16));
        generations_.try_emplace(k, j.at("text").get<std::string>());
      } catch (const std::exception& ex) {
        fail(ErrorCode::io, gen_path + ": malformed line: " + ex.what());
      }
    }
  }
  out_.open(path_, std::ios::binary | std::ios::app);
  if (!out_) fail(ErrorCode::io, "cannot open cache file " + path_ + " for appending");
}

std::optional<std::vector<float>> DistributionCache::find(const Digest& key) const {
  std::shared_lock lock(mu_);
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void DistributionCache::insert(const Digest& key, std::vector<float> logprobs) {
  std::string record;
  {
    std::unique_lock lock(mu_);
    auto [it, inserted] = entries_.try_emplace(key, std::move(logprobs));
    if (!inserted || path_.empty()) return;
    record = encode_record({key, it->second});
  }
  std::lock_guard flock(file_mu_);
  out_.write(record.data(), static_cast<std::streamsize>(record.size()));
  out_.flush();
  if (!out_) fail(ErrorCode::io, "failed to append to cache file " + path_);
}

std::size_t DistributionCache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::optional<std::string> DistributionCache::find_generation(const Digest& key) const {
  std::shared_lock lock(mu_);
  auto it = generations_.find(key);
  if (it == generations_.end()) return std::nullopt;
  return it->second;
}

void DistributionCache::insert_generation(const Digest& key, const std::string& text) {
  {
    std::unique_lock lock(mu_);
    if (!generations_.try_emplace(key, text).second || path_.empty()) return;
  }
  std::lock_guard flock(file_mu_);
  if (!gen_out_.is_open()) {
    gen_out_.open(path_ + ".gen.jsonl", std::ios::binary | std::ios::app);
    if (!gen_out_) fail(ErrorCode::io, "cannot open " + path_ + ".gen.jsonl");
  }
  gen_out_ << json({{"key", to_hex(key)}, {"text", text}}).dump() << '\n';
  gen_out_.flush();
}

// ---------------------------------------------------------------------------

DistributionSource::DistributionSource(std::shared_ptr<Provider> provider, std::shared_ptr<DistributionCache> cache,
                                       SourceOptions options)
    : provider_(std::move(provider)), cache_(std::move(cache)), options_(options) {
  if (!provider_) fail(ErrorCode::config, "DistributionSource: null provider");
  if (!cache_) cache_ = std::make_shared<DistributionCache>();
  if (options_.max_in_flight < 1) fail(ErrorCode::config, "max_in_flight must be >= 1");
}

void DistributionSource::check_vocab(std::size_t vocab, const Prompt& prompt) {
  std::lock_guard lock(vocab_mu_);
  if (!vocab_) {
    vocab_ = vocab;
  } else if (*vocab_ != vocab) {
    fail(ErrorCode::provider, "vocab size " + std::to_string(vocab) + " for prompt \"" + prompt.text.substr(0, 80) +
                                  "\" disagrees with earlier entries (" + std::to_string(*vocab_) + ")");
  }
}

std::vector<float> DistributionSource::get_logprobs(const Prompt& prompt) {
  if (prompt.text.empty()) fail(ErrorCode::invalid_argument, "empty prompt");
  const Digest key = cache_key(provider_->provider_id(), provider_->model_id(), prompt.text);
  if (options_.use_cache) {
    if (auto hit = cache_->find(key)) {
      check_vocab(hit->size(), prompt);
      return std::move(*hit);
    }
  }
  std::vector<float> lp = provider_->next_token_logprobs(prompt);
  ++backend_calls_;
  validate_logprobs(lp, "prompt " + to_hex(key));
  check_vocab(lp.size(), prompt);
  if (options_.use_cache) cache_->insert(key, lp);
  return lp;
}

info::AnswerDistribution DistributionSource::get_distribution(const Prompt& prompt) {
  const auto lp = get_logprobs(prompt);
  return info::AnswerDistribution::from_logprobs(std::span<const float>(lp));
}

std::vector<info::AnswerDistribution> DistributionSource::batch_get(const std::vector<Prompt>& prompts,
                                                                    std::size_t max_in_flight) {
  if (max_in_flight == 0) max_in_flight = options_.max_in_flight;
  std::unordered_map<std::string, std::size_t> first;
  std::vector<std::size_t> unique_idx;
  std::vector<std::size_t> slot(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    auto [it, inserted] = first.try_emplace(prompts[i].text, unique_idx.size());
    if (inserted) unique_idx.push_back(i);
    slot[i] = it->second;
  }
  std::vector<std::optional<info::AnswerDistribution>> fetched(unique_idx.size());
  parallel_for(unique_idx.size(), max_in_flight, [&](std::size_t u) {
    const Prompt& p = prompts[unique_idx[u]];
    try {
      fetched[u] = get_distribution(p);
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " [batch element " + std::to_string(unique_idx[u]) + "]");
    }
  });
  std::vector<info::AnswerDistribution> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) out.push_back(*fetched[slot[i]]);
  return out;
}

std::string DistributionSource::generate(const Prompt& prompt, int max_tokens) {
  std::string buf = "generate";
  buf.push_back('\0');
  buf += provider_->provider_id();
  buf.push_back('\0');
  buf += provider_->model_id();
  buf.push_back('\0');
  buf += std::to_string(max_tokens);
  buf.push_back('\0');
  buf += prompt.text;
  const Digest key = sha256(buf);
  if (options_.use_cache) {
    if (auto hit = cache_->find_generation(key)) return *hit;
  }
  std::string text = provider_->generate(prompt, max_tokens);
  if (options_.use_cache) cache_->insert_generation(key, text);
  return text;
}

}  // namespace ctxsus::model
