#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "dyadic/rng.hpp"

namespace dyadic {

/// Greatest integer strictly less than beta.
inline int holder_order(double beta) { return static_cast<int>(std::ceil(beta)) - 1; }

struct HolderCheckOptions {
  double lo = 0.0;  ///< sampling box [lo, hi]^d for the first point of each pair
  double hi = 1.0;
  std::size_t n_pairs = 10000;
  std::uint64_t seed = 1;
  double tol = 0.05;
  /// Pair distances are log-uniform in [min_distance_frac, 1] * (hi - lo).
  double min_distance_frac = 1e-3;
};

struct HolderCheckResult {
  double max_violation_ratio = 0.0;
  bool pass = true;
  std::size_t pairs_checked = 0;
  /// First point where a derivative estimate was not finite, if any.
  std::optional<std::vector<double>> nonfinite_point;
};

namespace detail {

// Central-difference stencils (offset, weight) for derivatives of order 0..3,
// second-order accurate; weights are for unit step.
inline std::vector<std::pair<int, double>> central_stencil(int order) {
  switch (order) {
    case 0: return {{0, 1.0}};
    case 1: return {{-1, -0.5}, {1, 0.5}};
    case 2: return {{-1, 1.0}, {0, -2.0}, {1, 1.0}};
    case 3: return {{-2, -0.5}, {-1, 1.0}, {1, -1.0}, {2, 0.5}};
    default: throw std::invalid_argument("finite-difference order above 3 unsupported");
  }
}

inline void multi_indices(int d, int total, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (static_cast<int>(cur.size()) == d - 1) {
    cur.push_back(total);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (int k = total; k >= 0; --k) {
    cur.push_back(k);
    multi_indices(d, total - k, cur, out);
    cur.pop_back();
  }
}

}  // namespace detail

/// All multi-indices s in N^d with |s| = total.
inline std::vector<std::vector<int>> multi_indices_of_order(int d, int total) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  if (d <= 0) return out;
  detail::multi_indices(d, total, cur, out);
  return out;
}

/// Finite-difference estimate of D^s g(w). Step is eps^{1/(2+|s|)} scaled by
/// the coordinate magnitude.
inline double finite_difference(const std::function<double(std::span<const double>)>& g,
                                std::span<const double> w, std::span<const int> s) {
  int total = 0;
  for (int k : s) total += k;
  if (total == 0) return g(w);
  const double eps = std::numeric_limits<double>::epsilon();
  const std::size_t d = w.size();
  std::vector<double> steps(d);
  for (std::size_t k = 0; k < d; ++k) {
    steps[k] = std::pow(eps, 1.0 / (2.0 + total)) * std::max(1.0, std::abs(w[k]));
    // Make the step exactly representable relative to w[k].
    volatile double t = w[k] + steps[k];
    steps[k] = t - w[k];
  }
  std::vector<std::vector<std::pair<int, double>>> stencils(d);
  for (std::size_t k = 0; k < d; ++k) stencils[k] = detail::central_stencil(s[k]);
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> point(d);
  double acc = 0.0;
  while (true) {
    double weight = 1.0;
    for (std::size_t k = 0; k < d; ++k) {
      const auto [off, wk] = stencils[k][idx[k]];
      point[k] = w[k] + off * steps[k];
      weight *= wk / std::pow(steps[k], s[k]);
    }
    acc += weight * g(point);
    std::size_t k = 0;
    for (; k < d; ++k) {
      if (++idx[k] < stencils[k].size()) break;
      idx[k] = 0;
    }
    if (k == d) break;
  }
  return acc;
}

/// Sampled check of g in the Holder class Sigma(beta, L) on R^d:
/// |D^s g(w) - D^s g(w')| <= L ||w - w'||_inf^{beta - l} for all |s| = l.
/// Reports the worst observed ratio lhs / rhs; passes when it is <= 1 + tol.
inline HolderCheckResult holder_membership_check(const std::function<double(std::span<const double>)>& g,
                                                 double beta, double l_const, int d,
                                                 const HolderCheckOptions& opts = {}) {
  if (!(beta > 0.0) || beta > 4.0) throw std::invalid_argument("holder check requires 0 < beta <= 4");
  if (!(l_const > 0.0)) throw std::invalid_argument("holder check requires L > 0");
  if (d <= 0) throw std::invalid_argument("holder check requires d >= 1");
  const int l = holder_order(beta);
  const double expo = beta - l;
  const auto indices = multi_indices_of_order(d, l);
  const double width = opts.hi - opts.lo;

  HolderCheckResult result;
  RandomStream rng(opts.seed, StreamTag::auxiliary, 0x401de5, static_cast<std::uint64_t>(d));
  std::vector<double> w(d), w2(d);
  for (std::size_t p = 0; p < opts.n_pairs; ++p) {
    for (int k = 0; k < d; ++k) w[k] = opts.lo + width * rng.uniform();
    const double r = width * std::pow(10.0, std::log10(opts.min_distance_frac) * rng.uniform());
    double inf_norm = 0.0;
    std::vector<double> dir(d);
    for (int k = 0; k < d; ++k) {
      dir[k] = 2.0 * rng.uniform() - 1.0;
      inf_norm = std::max(inf_norm, std::abs(dir[k]));
    }
    double dist = 0.0;
    for (int k = 0; k < d; ++k) {
      w2[k] = w[k] + r * dir[k] / inf_norm;
      dist = std::max(dist, std::abs(w2[k] - w[k]));
    }
    if (dist == 0.0) continue;
    const double rhs = l_const * std::pow(dist, expo);
    for (const auto& s : indices) {
      const double a = finite_difference(g, w, s);
      const double b = finite_difference(g, w2, s);
      if (!std::isfinite(a) || !std::isfinite(b)) {
        result.pass = false;
        if (!result.nonfinite_point) result.nonfinite_point = std::isfinite(a) ? w2 : w;
        continue;
      }
      result.max_violation_ratio = std::max(result.max_violation_ratio, std::abs(a - b) / rhs);
    }
    ++result.pairs_checked;
  }
  if (result.max_violation_ratio > 1.0 + opts.tol) result.pass = false;
  return result;
}

}  // namespace dyadic
