// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ctxsus Authors

#pragma once

// Brute-force reference implementations used by the unit and acceptance
// tests. Nothing here calls into the library; each one is the textbook
// definition written as plainly as possible.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace oracle {

inline std::vector<double> normalize(std::vector<double> w) {
  double s = 0.0;
  for (double x : w) s += x;
  for (double& x : w) x /= s;
  return w;
}

// Random probability vector; some entries are exactly zero when sparse.
inline std::vector<double> random_dist(std::mt19937_64& g, std::size_t n, bool sparse = false) {
  std::exponential_distribution<double> e(1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> w(n);
  for (auto& x : w) x = (sparse && u(g) < 0.3) ? 0.0 : e(g);
  if (std::all_of(w.begin(), w.end(), [](double x) { return x == 0.0; })) w[0] = 1.0;
  return normalize(w);
}

inline double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0) h -= x * std::log(x);
  return h;
}

inline double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0) continue;
    if (q[i] == 0) return INFINITY;
    d += p[i] * std::log(p[i] / q[i]);
  }
  return d;
}

// I(C; A) from the joint p(c, a) = w_c * rows[c][a], summed cell by cell.
inline double mutual_information(const std::vector<std::vector<double>>& rows, const std::vector<double>& w) {
  const std::size_t nc = rows.size(), na = rows[0].size();
  std::vector<std::vector<double>> joint(nc, std::vector<double>(na));
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t a = 0; a < na; ++a) joint[c][a] = w[c] * rows[c][a];
  std::vector<double> pc(nc, 0.0), pa(na, 0.0);
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t a = 0; a < na; ++a) {
      pc[c] += joint[c][a];
      pa[a] += joint[c][a];
    }
  double mi = 0.0;
  for (std::size_t c = 0; c < nc; ++c)
    for (std::size_t a = 0; a < na; ++a)
      if (joint[c][a] > 0) mi += joint[c][a] * std::log(joint[c][a] / (pc[c] * pa[a]));
  return mi;
}

// Benjamini-Hochberg: adjusted_i = min over ranks j >= rank_i of min(1, p_(j) m / j);
// reject every hypothesis whose rank is <= the largest k with p_(k) <= k alpha / m.
struct Bh {
  std::vector<double> adjusted;
  std::vector<bool> rejected;
};

inline Bh benjamini_hochberg(const std::vector<double>& p, double alpha) {
  const std::size_t m = p.size();
  std::vector<std::size_t> idx(m);
  for (std::size_t i = 0; i < m; ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
  Bh out{std::vector<double>(m), std::vector<bool>(m, false)};
  for (std::size_t r = 0; r < m; ++r) {
    double best = 1.0;
    for (std::size_t j = r; j < m; ++j) best = std::min(best, p[idx[j]] * static_cast<double>(m) / static_cast<double>(j + 1));
    out.adjusted[idx[r]] = best;
  }
  std::size_t k = 0;
  for (std::size_t r = 0; r < m; ++r)
    if (p[idx[r]] <= static_cast<double>(r + 1) * alpha / static_cast<double>(m)) k = r + 1;
  for (std::size_t r = 0; r < k; ++r) out.rejected[idx[r]] = true;
  return out;
}

// Average ranks by counting: rank = 1 + #smaller + (#equal - 1) / 2.
inline std::vector<double> ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double y : x) {
      if (y < x[i]) ++less;
      if (y == x[i]) ++equal;
    }
    r[i] = 1.0 + less + (equal - 1.0) / 2.0;
  }
  return r;
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  return pearson(ranks(x), ranks(y));
}

inline double welch(const std::vector<double>& a, const std::vector<double>& b) {
  auto mv = [](const std::vector<double>& v, double& m, double& s2) {
    m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    s2 = 0;
    for (double x : v) s2 += (x - m) * (x - m);
    s2 /= static_cast<double>(v.size() - 1);
  };
  double ma, va, mb, vb;
  mv(a, ma, va);
  mv(b, mb, vb);
  return (ma - mb) / std::sqrt(va / static_cast<double>(a.size()) + vb / static_cast<double>(b.size()));
}

// Exact permutation p-value over every split of the pooled sample.
inline double exact_permutation_p(const std::vector<double>& a, const std::vector<double>& b, bool two_sided) {
  std::vector<double> pool(a);
  pool.insert(pool.end(), b.begin(), b.end());
  const std::size_t n = pool.size(), na = a.size();
  const double obs = two_sided ? std::fabs(welch(a, b)) : welch(a, b);
  std::size_t hits = 0, total = 0;
  std::vector<bool> pick(n, false);
  std::fill(pick.begin(), pick.begin() + static_cast<long>(na), true);
  do {
    std::vector<double> x, y;
    for (std::size_t i = 0; i < n; ++i) (pick[i] ? x : y).push_back(pool[i]);
    const double t = two_sided ? std::fabs(welch(x, y)) : welch(x, y);
    if (t >= obs - 1e-12 * std::max(1.0, std::fabs(obs))) ++hits;
    ++total;
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return static_cast<double>(hits) / static_cast<double>(total);
}

// Co-occurrences by enumerating every (entity start, answer start) pair.
inline std::vector<std::size_t> starts(const std::vector<std::string>& toks, const std::vector<std::string>& phrase) {
  std::vector<std::size_t> out;
  if (phrase.empty() || phrase.size() > toks.size()) return out;
  for (std::size_t i = 0; i + phrase.size() <= toks.size(); ++i) {
    bool ok = true;
    for (std::size_t k = 0; k < phrase.size(); ++k) ok = ok && toks[i + k] == phrase[k];
    if (ok) out.push_back(i);
  }
  return out;
}

inline std::uint64_t cooccurrences(const std::vector<std::vector<std::string>>& docs,
                                   const std::vector<std::string>& entity, const std::vector<std::string>& answer,
                                   std::size_t window) {
  std::uint64_t c = 0;
  const bool same = entity == answer;
  for (const auto& d : docs) {
    const auto es = starts(d, entity);
    const auto as = starts(d, answer);
    for (std::size_t i : es)
      for (std::size_t j : as) {
        if (same && i == j) continue;
        const std::size_t dist = i > j ? i - j : j - i;
        if (dist <= window) ++c;
      }
  }
  return c;
}

// Kolmogorov-Smirnov distance between a sample and Uniform(0, 1).
inline double ks_uniform(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    d = std::max(d, static_cast<double>(i + 1) / n - x[i]);
    d = std::max(d, x[i] - static_cast<double>(i) / n);
  }
  return d;
}

}  // namespace oracle
