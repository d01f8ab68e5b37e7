#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dyadic/dgp.hpp"
#include "dyadic/error.hpp"
#include "dyadic/kernels.hpp"
#include "dyadic/numeric.hpp"
#include "dyadic/parallel.hpp"

namespace dyadic {

// ---------------------------------------------------------------------------
// Bandwidth
// ---------------------------------------------------------------------------

struct BandwidthRule {
  enum class Mode { pointwise_optimal, uniform_optimal, fixed, custom_exponent };
  Mode mode = Mode::uniform_optimal;
  double c0 = 1.0;
  double beta = 2.0;
  int d_x = 1;
  /// h = c0 N^{-exponent} in custom_exponent mode.
  double exponent = 0.2;
};

inline std::string_view mode_name(BandwidthRule::Mode m) {
  switch (m) {
    case BandwidthRule::Mode::pointwise_optimal: return "pointwise";
    case BandwidthRule::Mode::uniform_optimal: return "uniform";
    case BandwidthRule::Mode::fixed: return "fixed";
    case BandwidthRule::Mode::custom_exponent: return "exponent";
  }
  return "";
}

inline BandwidthRule::Mode parse_bandwidth_mode(std::string_view s) {
  if (s == "pointwise") return BandwidthRule::Mode::pointwise_optimal;
  if (s == "uniform") return BandwidthRule::Mode::uniform_optimal;
  if (s == "fixed") return BandwidthRule::Mode::fixed;
  if (s == "exponent") return BandwidthRule::Mode::custom_exponent;
  throw ConfigError("unknown bandwidth mode '" + std::string(s) + "'");
}

inline double bandwidth(const BandwidthRule& rule, int n_units) {
  if (n_units < 3) throw ConfigError("bandwidth needs n_units >= 3");
  if (!(rule.c0 > 0.0)) throw ConfigError("bandwidth c0 must be positive");
  const double n = n_units;
  const double rate = 1.0 / (2.0 * rule.beta + rule.d_x);
  switch (rule.mode) {
    case BandwidthRule::Mode::pointwise_optimal: return rule.c0 * std::pow(n, -rate);
    case BandwidthRule::Mode::uniform_optimal: return rule.c0 * std::pow(std::log(n) / n, rate);
    case BandwidthRule::Mode::fixed: return rule.c0;
    case BandwidthRule::Mode::custom_exponent: return rule.c0 * std::pow(n, -rule.exponent);
  }
  return rule.c0;
}

inline double a_n(int n_units, double h, int d_x) {
  const double n = n_units;
  return std::sqrt(std::log(n) / (n * std::pow(h, d_x)));
}

inline double a_n_star(int n_units, double h, int d_x, double beta) {
  return a_n(n_units, h, d_x) + std::pow(h, beta);
}

// ---------------------------------------------------------------------------
// Kernel averages
// ---------------------------------------------------------------------------

namespace detail {

inline void check_estimator_inputs(const DyadicDataset& data, const KernelSpec& kernel, double h,
                                   std::span<const double> w) {
  if (kernel.dim != 2 * data.d_x) {
    throw ConfigError("kernel dimension " + std::to_string(kernel.dim) + " does not match 2*d_x = " +
                      std::to_string(2 * data.d_x));
  }
  if (!(h > 0.0) || !std::isfinite(h)) throw ConfigError("bandwidth must be positive and finite");
  if (static_cast<int>(w.size()) != kernel.dim) throw ConfigError("evaluation point has wrong dimension");
}

/// Product kernels factor: K((W_ij - w)/h) = a_i b_j with a_i built from the
/// first d_X coordinates at X_i and b_j from the last d_X at X_j.
inline void unit_factors(const DyadicDataset& data, const KernelSpec& kernel, double h,
                         std::span<const double> w, std::vector<double>& a, std::vector<double>& b) {
  const int n = data.n_units, d = data.d_x;
  a.assign(n, 1.0);
  b.assign(n, 1.0);
  for (int i = 0; i < n; ++i) {
    const auto xi = data.unit(i);
    for (int k = 0; k < d; ++k) {
      a[i] *= kernel.univariate((xi[k] - w[k]) / h);
      b[i] *= kernel.univariate((xi[k] - w[d + k]) / h);
    }
  }
}

struct KernelSums {
  double psi = 0.0;
  double f = 0.0;
};

/// Both ordered-pair averages in one sweep. Terms with |Y| >= tau are dropped
/// from the numerator when tau is given.
inline KernelSums kernel_sums(const DyadicDataset& data, const KernelSpec& kernel, double h,
                              std::span<const double> w, std::optional<double> tau = std::nullopt) {
  check_estimator_inputs(data, kernel, h, w);
  std::vector<double> a, b;
  unit_factors(data, kernel, h, w, a, b);
  const int n = data.n_units;
  CompensatedSum psi, f;
  for (int i = 0; i < n; ++i) {
    if (a[i] == 0.0) continue;
    CompensatedSum row_psi, row_f;
    for (int j = 0; j < n; ++j) {
      if (j == i || b[j] == 0.0) continue;
      const double y = data.outcome(i, j);
      row_f += b[j];
      if (!tau || std::abs(y) < *tau) row_psi += y * b[j];
    }
    psi += a[i] * row_psi.value();
    f += a[i] * row_f.value();
  }
  const double scale = std::pow(h, -kernel.dim) / (static_cast<double>(n) * (n - 1));
  return {psi.value() * scale, f.value() * scale};
}

}  // namespace detail

inline double psi_hat(const DyadicDataset& data, const KernelSpec& kernel, double h, std::span<const double> w) {
  return detail::kernel_sums(data, kernel, h, w).psi;
}

inline double f_hat_w(const DyadicDataset& data, const KernelSpec& kernel, double h, std::span<const double> w) {
  return detail::kernel_sums(data, kernel, h, w).f;
}

inline double truncated_psi(const DyadicDataset& data, const KernelSpec& kernel, double h, double tau,
                            std::span<const double> w) {
  if (!(tau > 0.0)) throw ConfigError("truncation threshold must be positive");
  return detail::kernel_sums(data, kernel, h, w, tau).psi;
}

/// Denominator cutoff below which the ratio is reported undefined.
inline double eps_denom(const KernelSpec& kernel, double h) { return 1e-12 * kernel.k_max * std::pow(h, -kernel.dim); }

struct NwPoint {
  double g_hat = std::numeric_limits<double>::quiet_NaN();
  double f_hat = 0.0;
  double psi = 0.0;
  bool defined = false;
};

inline std::vector<NwPoint> nw_estimate(const DyadicDataset& data, const KernelSpec& kernel, double h,
                                        const std::vector<std::vector<double>>& grid) {
  std::vector<NwPoint> out(grid.size());
  const double cutoff = eps_denom(kernel, h);
  for (const auto& w : grid) detail::check_estimator_inputs(data, kernel, h, w);
  parallel_for(static_cast<long>(grid.size()), [&](long p) {
    const auto s = detail::kernel_sums(data, kernel, h, grid[p]);
    NwPoint& r = out[p];
    r.f_hat = s.f;
    r.psi = s.psi;
    if (s.f > cutoff) {
      r.g_hat = s.psi / s.f;
      r.defined = true;
    }
  });
  return out;
}

/// Rectangular grid from per-coordinate (min, max, steps) specs; last coordinate varies fastest.
struct AxisSpec {
  double lo = 0.0;
  double hi = 1.0;
  int steps = 1;
};

inline std::vector<std::vector<double>> rectangular_grid(std::span<const AxisSpec> axes) {
  std::vector<std::vector<double>> grid;
  if (axes.empty()) return grid;
  for (const auto& a : axes) {
    if (a.steps < 1) throw ConfigError("grid axis needs at least one step");
    if (a.hi < a.lo) throw ConfigError("grid axis has max < min");
  }
  std::vector<int> idx(axes.size(), 0);
  while (true) {
    std::vector<double> p(axes.size());
    for (std::size_t k = 0; k < axes.size(); ++k) {
      const auto& a = axes[k];
      p[k] = a.steps == 1 ? a.lo : a.lo + (a.hi - a.lo) * idx[k] / (a.steps - 1);
    }
    grid.push_back(std::move(p));
    std::size_t k = axes.size();
    while (k > 0) {
      --k;
      if (++idx[k] < axes[k].steps) break;
      idx[k] = 0;
      if (k == 0) return grid;
    }
  }
}

// ---------------------------------------------------------------------------
// Truncation threshold
// ---------------------------------------------------------------------------

struct TruncationRule {
  enum class Mode { geometric_mean, explicit_tau };
  /// Moment order s > 2; infinity for bounded outcomes.
  double s = std::numeric_limits<double>::infinity();
  Mode mode = Mode::geometric_mean;
  std::optional<double> tau_override;
};

struct TruncationBounds {
  double upper_inverse_rate = 0.0;  ///< a_N^{-1}
  double upper_sample = 0.0;        ///< (N / ln N) h^{1.5 d_X}
  double lower_moment = 1.0;        ///< a_N^{-1/(s-1)}
  double lower_tail = 1.0;          ///< min((N^2 phi_N)^{1/s}, (a_N h^{2 d_X})^{-1/(s-1)})
  double lower = 1.0;
  double upper = 0.0;
  double margin = 0.0;  ///< upper / lower
  std::string binding_lower;
  std::string binding_upper;
  bool feasible() const noexcept { return upper > lower; }
};

inline TruncationBounds truncation_bounds(const TruncationRule& rule, int n_units, double h, int d_x) {
  if (n_units < 3) throw ConfigError("truncation threshold needs n_units >= 3");
  if (!(rule.s > 2.0)) throw ConfigError("moment order s must exceed 2");
  if (!(h > 0.0)) throw ConfigError("bandwidth must be positive");
  const double n = n_units;
  const double a = a_n(n_units, h, d_x);
  TruncationBounds b;
  b.upper_inverse_rate = 1.0 / a;
  b.upper_sample = n / std::log(n) * std::pow(h, 1.5 * d_x);
  if (std::isfinite(rule.s)) {
    const double s = rule.s;
    const double ln = std::log(n);
    const double lnln = std::log(ln);
    const double phi = lnln * lnln * ln;
    b.lower_moment = std::pow(a, -1.0 / (s - 1.0));
    b.lower_tail = std::min(std::pow(n * n * phi, 1.0 / s), std::pow(a * std::pow(h, 2.0 * d_x), -1.0 / (s - 1.0)));
  }
  if (b.upper_inverse_rate <= b.upper_sample) {
    b.upper = b.upper_inverse_rate;
    b.binding_upper = "tau << a_N^-1";
  } else {
    b.upper = b.upper_sample;
    b.binding_upper = "tau << (N/ln N) h^(1.5 d_X)";
  }
  if (b.lower_moment >= b.lower_tail) {
    b.lower = b.lower_moment;
    b.binding_lower = "tau >> a_N^(-1/(s-1))";
  } else {
    b.lower = b.lower_tail;
    b.binding_lower = "tau >> min((N^2 phi_N)^(1/s), (a_N h^(2 d_X))^(-1/(s-1)))";
  }
  b.margin = b.upper / b.lower;
  return b;
}

/// Geometric mean of the binding bounds, or a checked explicit value.
inline double truncation_threshold(const TruncationRule& rule, int n_units, double h, int d_x) {
  const auto b = truncation_bounds(rule, n_units, h, d_x);
  auto fmt = [](double v) { return std::to_string(v); };
  if (!b.feasible()) {
    throw AssumptionViolation("truncation infeasible at N=" + std::to_string(n_units) + ": lower bound " +
                              b.binding_lower + " = " + fmt(b.lower) + " exceeds upper bound " + b.binding_upper +
                              " = " + fmt(b.upper));
  }
  if (rule.mode == TruncationRule::Mode::explicit_tau) {
    if (!rule.tau_override || !(*rule.tau_override > 0.0)) throw ConfigError("explicit truncation needs tau > 0");
    const double t = *rule.tau_override;
    if (t <= b.lower || t >= b.upper) {
      throw AssumptionViolation("explicit tau " + fmt(t) + " outside feasible interval (" + fmt(b.lower) + ", " +
                                fmt(b.upper) + ")");
    }
    return t;
  }
  return std::sqrt(b.lower * b.upper);
}

}  // namespace dyadic
