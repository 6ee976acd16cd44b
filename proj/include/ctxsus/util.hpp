// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace ctxsus {

using Rng = std::mt19937_64;

/// Uniform integer in [0, n) by rejection on the raw engine output, so that
/// sampled sequences do not depend on the standard library's distribution
/// implementation.
std::uint64_t uniform_index(Rng& rng, std::uint64_t n);

/// Uniform real in [0, 1) built from the top 53 bits of one engine draw.
double uniform_unit(Rng& rng);

/// Standard normal via Box-Muller on uniform_unit draws.
double standard_normal(Rng& rng);

template <class T>
void shuffle_in_place(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    std::swap(v[i - 1], v[j]);
  }
}

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view data);
std::string to_hex(const std::uint8_t* data, std::size_t n);
inline std::string to_hex(const Digest& d) { return to_hex(d.data(), d.size()); }

/// 64-bit seed derived from a master seed and any number of string labels.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::string_view> labels);

/// Decodes standard base64 (with padding); throws on malformed input.
std::vector<std::uint8_t> base64_decode(std::string_view text);
std::string base64_encode(const std::uint8_t* data, std::size_t n);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception thrown by any task is rethrown after all workers join.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn);

/// Formats a double with 17 significant digits so CSV round-trips are exact.
std::string format_double(double v);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

/// Resolves `path` against `base_dir` unless it is already absolute.
std::string resolve_path(const std::string& base_dir, const std::string& path);

namespace csv {

using Row = std::vector<std::string>;

/// RFC 4180 style parser: quoted fields, doubled quotes, CRLF tolerated.
std::vector<Row> parse(std::string_view text);

std::string escape(std::string_view field);
void write_row(std::ostream& out, const Row& row);

/// Header-indexed view over parsed rows.
class Table {
 public:
  static Table load(const std::string& path);
  static Table from_text(std::string_view text, const std::string& origin = "<memory>");

  const Row& header() const { return header_; }
  const std::vector<Row>& rows() const { return rows_; }
  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;

 private:
  std::string origin_;
  Row header_;
  std::vector<Row> rows_;
};

}  // namespace csv

}  // namespace ctxsus
