#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "preflab/errors.hpp"

namespace preflab {

// Logistic function with an antisymmetry guarantee: sigmoid(d) + sigmoid(-d)
// is exactly 1.0 for every finite d. The d >= 0 branch is the primitive; the
// negative branch returns its exact complement (1 - x is exact for
// x in [0.5, 1] by the Sterbenz lemma).
inline double sigmoid(double d) {
  if (d >= 0.0) {
    return 1.0 / (1.0 + std::exp(-d));
  }
  return 1.0 - 1.0 / (1.0 + std::exp(d));
}

// sigmoid(d) - 0.5, computed so that centered(d) == -centered(-d) exactly.
inline double sigmoid_centered(double d) {
  if (d >= 0.0) {
    return 1.0 / (1.0 + std::exp(-d)) - 0.5;  // exact: operand lies in [0.5, 1)
  }
  return -(1.0 / (1.0 + std::exp(d)) - 0.5);
}

// log(1 + exp(t)) without overflow.
inline double softplus(double t) {
  double m = t > 0.0 ? t : 0.0;
  return m + std::log1p(std::exp(-std::abs(t)));
}

inline double log_sum_exp(std::span<const double> values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

// Writes softmax(logits) into probs (max-subtraction form).
inline void softmax_into(std::span<const double> logits, std::span<double> probs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : logits) m = std::max(m, v);
  double s = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    probs[i] = std::exp(logits[i] - m);
    s += probs[i];
  }
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] /= s;
}

// Linear-interpolation quantile (same convention as numpy's default).
// q = 1 returns the maximum, q = 0 the minimum.
inline double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InputError("quantile: empty sample");
  if (q < 0.0 || q > 1.0) throw InputError("quantile: q outside [0,1]");
  std::sort(values.begin(), values.end());
  double pos = q * static_cast<double>(values.size() - 1);
  std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= values.size()) return values.back();
  double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

namespace detail {
inline std::vector<double> fractional_ranks(std::span<const double> v) {
  std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;  // mean rank of the tie group
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}
}  // namespace detail

// Spearman rank correlation with average ranks for ties (Pearson on ranks).
inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("spearman: need two samples of equal size >= 2");
  std::vector<double> rx = detail::fractional_ranks(x);
  std::vector<double> ry = detail::fractional_ranks(y);
  double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double dx = rx[i] - mx, dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// Shortest round-trip decimal form; the one float-to-text routine used for
// every CSV cell so outputs are byte-stable.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// FNV-1a over bytes; used to fingerprint serialized worlds and configs.
inline std::uint64_t fnv1a(std::span<const char> bytes) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

inline std::string hex16(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xF];
    v >>= 4;
  }
  return s;
}

}  // namespace preflab
