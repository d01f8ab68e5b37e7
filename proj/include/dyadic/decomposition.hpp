#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dyadic/dgp.hpp"
#include "dyadic/error.hpp"
#include "dyadic/estimator.hpp"
#include "dyadic/kernels.hpp"
#include "dyadic/numeric.hpp"
#include "dyadic/parallel.hpp"
#include "dyadic/rng.hpp"

namespace dyadic {

/// model: unit terms are E[Z_ij | X_i, U_i] under a gaussian-regression model
/// (needs the latent U_i). empirical: unit terms are row means of Z_ij.
enum class Projection { model, empirical };

struct HoeffdingParts {
  double statistic = 0.0;
  double mean_term = 0.0;
  double t1 = 0.0;
  double t2 = 0.0;
  std::vector<double> unit_contributions;
  double f_hat = 0.0;
};

namespace detail {

/// Tensor Gauss-Legendre nodes over the regressor support intersected with the
/// kernel window around `center`; weights carry f(x) and the kernel factor.
struct FactorQuadrature {
  int d = 1;
  std::vector<double> nodes;  // n x d
  std::vector<double> weights;
  std::size_t size() const noexcept { return weights.size(); }
  std::span<const double> node(std::size_t q) const noexcept { return {nodes.data() + q * d, std::size_t(d)}; }
};

inline FactorQuadrature factor_quadrature(const DgpSpec& spec, const KernelSpec& kernel, double h,
                                          std::span<const double> center) {
  const int d = spec.d_x;
  const auto& law = spec.regressors;
  const double r = kernel.radius();
  std::vector<std::vector<double>> ax(d), aw(d);
  for (int k = 0; k < d; ++k) {
    const double lo = std::max(law.lo, center[k] - r * h);
    const double hi = std::min(law.hi, center[k] + r * h);
    if (!(hi > lo)) return FactorQuadrature{d, {}, {}};
    composite_rule(lo, hi, 8, 8, ax[k], aw[k]);
  }
  FactorQuadrature fq{d, {}, {}};
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> x(d);
  while (true) {
    double wt = 1.0;
    for (int k = 0; k < d; ++k) {
      x[k] = ax[k][idx[k]];
      wt *= aw[k][idx[k]] * law.density1(x[k]) * kernel.univariate((x[k] - center[k]) / h);
    }
    if (wt != 0.0) {
      fq.nodes.insert(fq.nodes.end(), x.begin(), x.end());
      fq.weights.push_back(wt);
    }
    int k = 0;
    for (; k < d; ++k) {
      if (++idx[k] < ax[k].size()) break;
      idx[k] = 0;
    }
    if (k == d) break;
  }
  return fq;
}

}  // namespace detail

/// Splits the truncated kernel average at w into mean + projection + degenerate parts.
/// The identity statistic = mean_term + t1 + t2 holds by construction.
inline HoeffdingParts hoeffding_decompose(const DyadicDataset& data, const KernelSpec& kernel, double h,
                                          double tau, std::span<const double> w,
                                          Projection projection = Projection::empirical,
                                          const DgpSpec* spec = nullptr) {
  if (!(tau > 0.0)) throw ConfigError("truncation threshold must be positive");
  const auto sums = detail::kernel_sums(data, kernel, h, w, std::isfinite(tau) ? std::optional(tau) : std::nullopt);
  const int n = data.n_units, d = data.d_x;
  std::vector<double> a, b;
  detail::unit_factors(data, kernel, h, w, a, b);
  const double hd = std::pow(h, -kernel.dim);
  auto trunc = [tau](double y) { return std::abs(y) < tau ? y : 0.0; };

  HoeffdingParts parts;
  parts.statistic = sums.psi;
  parts.f_hat = sums.f;
  parts.unit_contributions.assign(n, 0.0);

  if (projection == Projection::empirical) {
    std::vector<double> row(n, 0.0);
    for (int i = 0; i < n; ++i) {
      CompensatedSum s;
      for (int j = 0; j < n; ++j) {
        if (j == i) continue;
        const double z = 0.5 * hd * (trunc(data.outcome(i, j)) * a[i] * b[j] + trunc(data.outcome(j, i)) * a[j] * b[i]);
        s += z;
      }
      row[i] = s.value();
    }
    CompensatedSum total;
    for (double r : row) total += r;
    parts.mean_term = total.value() / (static_cast<double>(n) * (n - 1));
    for (int i = 0; i < n; ++i) parts.unit_contributions[i] = row[i] / (n - 1) - parts.mean_term;
  } else {
    if (!spec || spec->kind != DgpKind::gaussian_regression) {
      throw ConfigError("model projection needs a gaussian-regression model");
    }
    if (spec->d_x != d) throw ConfigError("model and dataset disagree on d_x");
    if (data.latent_u.size() != static_cast<std::size_t>(n)) {
      throw ConfigError("model projection needs the latent unit effects of the dataset");
    }
    const std::span<const double> w1(w.data(), d), w2(w.data() + d, d);
    const auto qa = detail::factor_quadrature(*spec, kernel, h, w1);
    const auto qb = detail::factor_quadrature(*spec, kernel, h, w2);
    const double su = spec->unit_scale, sv = spec->pair_scale;
    const double sd1 = std::sqrt(su * su + sv * sv);
    const double sd2 = std::sqrt(2.0 * su * su + sv * sv);

    CompensatedSum mu;
    for (std::size_t q = 0; q < qa.size(); ++q) {
      for (std::size_t r = 0; r < qb.size(); ++r) {
        mu += qa.weights[q] * qb.weights[r] * truncated_first_moment(spec->g(qa.node(q), qb.node(r)), sd2, tau);
      }
    }
    parts.mean_term = hd * mu.value();

    std::vector<double> p(n, 0.0);
    parallel_for(n, [&](long il) {
      const int i = static_cast<int>(il);
      const auto xi = data.unit(i);
      const double shift = su * data.latent_u[i];
      CompensatedSum s;
      if (a[i] != 0.0) {
        CompensatedSum t;
        for (std::size_t q = 0; q < qb.size(); ++q) {
          t += qb.weights[q] * truncated_first_moment(spec->g(xi, qb.node(q)) + shift, sd1, tau);
        }
        s += a[i] * t.value();
      }
      if (b[i] != 0.0) {
        CompensatedSum t;
        for (std::size_t q = 0; q < qa.size(); ++q) {
          t += qa.weights[q] * truncated_first_moment(spec->g(qa.node(q), xi) + shift, sd1, tau);
        }
        s += b[i] * t.value();
      }
      p[i] = 0.5 * hd * s.value();
    });
    for (int i = 0; i < n; ++i) parts.unit_contributions[i] = p[i] - parts.mean_term;
  }

  CompensatedSum c;
  for (double v : parts.unit_contributions) c += v;
  parts.t1 = 2.0 / n * c.value();
  parts.t2 = parts.statistic - parts.mean_term - parts.t1;
  return parts;
}

struct DominanceOptions {
  Projection projection = Projection::model;
  /// Truncation threshold; infinity disables truncation.
  double tau = std::numeric_limits<double>::infinity();
  /// Hold X fixed across replications (drawn once from this seed).
  std::optional<std::uint64_t> fixed_regressor_seed;
};

struct DominanceRow {
  int n_units = 0;
  double var_t1 = 0.0;
  double var_t2 = 0.0;
  double ratio = 0.0;
  int n_used = 0;
  int n_excluded = 0;
};

inline double sample_variance(std::span<const double> v) {
  if (v.size() < 2) return std::numeric_limits<double>::quiet_NaN();
  CompensatedSum s;
  for (double x : v) s += x;
  const double m = s.value() / static_cast<double>(v.size());
  CompensatedSum q;
  for (double x : v) q += (x - m) * (x - m);
  return q.value() / static_cast<double>(v.size() - 1);
}

/// Monte Carlo variances of t1 and t2 at w across sample sizes.
inline std::vector<DominanceRow> variance_dominance(const DgpSpec& spec, const KernelSpec& kernel,
                                                    const BandwidthRule& rule, const std::vector<int>& n_list,
                                                    int reps, std::span<const double> w, std::uint64_t seed,
                                                    const DominanceOptions& opts = {}) {
  if (reps < 50) throw ConfigError("variance_dominance needs reps >= 50");
  if (static_cast<int>(w.size()) != 2 * spec.d_x) throw ConfigError("evaluation point has wrong dimension");
  std::vector<DominanceRow> rows;
  for (int n : n_list) {
    const double h = bandwidth(rule, n);
    std::vector<double> t1(reps), t2(reps);
    std::vector<char> ok(reps, 0);
    const double cutoff = eps_denom(kernel, h);
    parallel_for(reps, [&](long r) {
      const auto data = simulate(spec, n, replication_seed(seed, n, r), opts.fixed_regressor_seed);
      const auto parts = hoeffding_decompose(data, kernel, h, opts.tau, w, opts.projection, &spec);
      if (parts.f_hat > cutoff) {
        t1[r] = parts.t1;
        t2[r] = parts.t2;
        ok[r] = 1;
      }
    });
    std::vector<double> u1, u2;
    for (int r = 0; r < reps; ++r) {
      if (!ok[r]) continue;
      u1.push_back(t1[r]);
      u2.push_back(t2[r]);
    }
    DominanceRow row;
    row.n_units = n;
    row.n_used = static_cast<int>(u1.size());
    row.n_excluded = reps - row.n_used;
    row.var_t1 = sample_variance(u1);
    row.var_t2 = sample_variance(u2);
    row.ratio = row.var_t1 > 0.0 ? row.var_t2 / row.var_t1 : std::numeric_limits<double>::quiet_NaN();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace dyadic
