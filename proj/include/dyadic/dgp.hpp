#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dyadic/error.hpp"
#include "dyadic/numeric.hpp"
#include "dyadic/parallel.hpp"
#include "dyadic/rng.hpp"

namespace dyadic {

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Regressors X (N x d_X, row-major) and the directed outcome array Y (N x N,
/// row-major). Diagonal entries of Y hold NaN and are never read.
struct DyadicDataset {
  int n_units = 0;
  int d_x = 0;
  std::vector<double> x;
  std::vector<double> y;
  /// Unit effects U_i when the data came from the simulator; empty otherwise.
  std::vector<double> latent_u;

  std::span<const double> unit(int i) const noexcept {
    return {x.data() + static_cast<std::size_t>(i) * d_x, static_cast<std::size_t>(d_x)};
  }
  double outcome(int i, int j) const noexcept { return y[static_cast<std::size_t>(i) * n_units + j]; }
  double& outcome(int i, int j) noexcept { return y[static_cast<std::size_t>(i) * n_units + j]; }
};

/// Validates shapes and finiteness; sets the diagonal to NaN.
inline DyadicDataset make_dataset(int n_units, int d_x, std::vector<double> x, std::vector<double> y) {
  if (n_units < 2) throw ConfigError("dataset needs at least 2 units");
  if (d_x < 1) throw ConfigError("regressor dimension must be positive");
  if (x.size() != static_cast<std::size_t>(n_units) * d_x) throw ConfigError("regressor array has wrong size");
  if (y.size() != static_cast<std::size_t>(n_units) * n_units) throw ConfigError("outcome array has wrong size");
  for (double v : x) {
    if (!std::isfinite(v)) throw ConfigError("non-finite regressor value");
  }
  DyadicDataset d{n_units, d_x, std::move(x), std::move(y), {}};
  for (int i = 0; i < n_units; ++i) {
    for (int j = 0; j < n_units; ++j) {
      if (i == j) {
        d.outcome(i, j) = std::numeric_limits<double>::quiet_NaN();
      } else if (!std::isfinite(d.outcome(i, j))) {
        throw ConfigError("non-finite outcome at (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
  return d;
}

// ---------------------------------------------------------------------------
// Model specification
// ---------------------------------------------------------------------------

/// Product law of d_X iid coordinates: uniform on [lo, hi] or a normal
/// truncated to [lo, hi]. Both have bounded densities.
struct RegressorLaw {
  enum class Kind { uniform, truncated_normal };
  Kind kind = Kind::uniform;
  double lo = 0.0;
  double hi = 1.0;
  double mean = 0.5;
  double sd = 0.25;

  static RegressorLaw uniform(double lo = 0.0, double hi = 1.0) { return {Kind::uniform, lo, hi, 0.0, 1.0}; }
  static RegressorLaw truncated_normal(double mean, double sd, double lo, double hi) {
    return {Kind::truncated_normal, lo, hi, mean, sd};
  }

  std::string id() const { return kind == Kind::uniform ? "uniform" : "truncnormal"; }

  double sample(RandomStream& rng) const {
    if (kind == Kind::uniform) return lo + (hi - lo) * rng.uniform();
    while (true) {
      const double z = mean + sd * rng.normal();
      if (z >= lo && z <= hi) return z;
    }
  }

  double density1(double v) const noexcept {
    if (v < lo || v > hi) return 0.0;
    if (kind == Kind::uniform) return 1.0 / (hi - lo);
    const double z = normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd);
    return normal_pdf((v - mean) / sd) / (sd * z);
  }

  double density(std::span<const double> x) const noexcept {
    double v = 1.0;
    for (double c : x) v *= density1(c);
    return v;
  }

  /// sup_x f(x) for one coordinate.
  double sup_density1() const noexcept { return density1(std::clamp(kind == Kind::uniform ? lo : mean, lo, hi)); }
  double sup_density(int d_x) const noexcept { return std::pow(sup_density1(), d_x); }
};

using RegressionFn = std::function<double(std::span<const double>, std::span<const double>)>;
using GraphonFn =
    std::function<double(std::span<const double>, std::span<const double>, double, double, double)>;

enum class DgpKind { graphon, gaussian_regression };

struct HolderMeta {
  double beta = 2.0;
  double l_const = 1.0;
};

/// Gaussian-regression mode: Y_ij = g(X_i, X_j) + unit_scale (U_i + U_j) + pair_scale V_ij
/// with U, V standard normal (unit scales 1 give the minimax model exactly).
/// Graphon mode: Y_ij = h(X_i, X_j, U_i, U_j, V_ij).
struct DgpSpec {
  DgpKind kind = DgpKind::gaussian_regression;
  int d_x = 1;
  std::string function_id;
  RegressionFn g;
  GraphonFn h;
  /// Exact conditional mean E[Y_ij | X_i, X_j] of a graphon, when known.
  std::optional<RegressionFn> graphon_mean;
  /// |Y_ij| <= bound almost surely, when known.
  std::optional<double> bound;
  RegressorLaw regressors;
  double unit_scale = 1.0;
  double pair_scale = 1.0;
  HolderMeta holder;
};

namespace detail {

inline double sum_of(std::span<const double> v) {
  double s = 0.0;
  for (double c : v) s += c;
  return s;
}

inline std::pair<std::string_view, std::optional<double>> split_param(std::string_view id) {
  const auto colon = id.find(':');
  if (colon == std::string_view::npos) return {id, std::nullopt};
  double value = 0.0;
  const auto rest = id.substr(colon + 1);
  const auto res = std::from_chars(rest.data(), rest.data() + rest.size(), value);
  if (res.ec != std::errc{} || res.ptr != rest.data() + rest.size()) {
    throw ConfigError("bad numeric parameter in function id '" + std::string(id) + "'");
  }
  return {id.substr(0, colon), value};
}

}  // namespace detail

/// Regression functions by id: zero, constant:<c>, sin_additive, linear, product.
inline RegressionFn make_regression_function(std::string_view id) {
  const auto [name, param] = detail::split_param(id);
  if (name == "zero") return [](auto, auto) { return 0.0; };
  if (name == "constant") {
    const double c = param.value_or(1.0);
    return [c](auto, auto) { return c; };
  }
  if (name == "sin_additive") {
    return [](std::span<const double> a, std::span<const double> b) {
      double s = 0.0;
      for (double v : a) s += std::sin(v);
      for (double v : b) s += std::sin(v);
      return s;
    };
  }
  if (name == "linear") {
    return [](std::span<const double> a, std::span<const double> b) { return detail::sum_of(a) + detail::sum_of(b); };
  }
  if (name == "product") {
    return [](std::span<const double> a, std::span<const double> b) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
      return s;
    };
  }
  throw ConfigError("unknown regression function '" + std::string(id) + "'");
}

inline DgpSpec make_gaussian_regression(std::string_view g_id, int d_x,
                                        RegressorLaw law = RegressorLaw::uniform(), double unit_scale = 1.0,
                                        double pair_scale = 1.0, HolderMeta holder = {}) {
  if (d_x < 1) throw ConfigError("d_x must be positive");
  if (unit_scale < 0.0 || pair_scale < 0.0) throw ConfigError("noise scales must be nonnegative");
  DgpSpec s;
  s.kind = DgpKind::gaussian_regression;
  s.d_x = d_x;
  s.function_id = std::string(g_id);
  s.g = make_regression_function(g_id);
  s.regressors = law;
  s.unit_scale = unit_scale;
  s.pair_scale = pair_scale;
  s.holder = holder;
  return s;
}

/// Graphons by id: probit_indicator (1(U_i + U_j + sum x > 0)), sigmoid
/// (logistic of sum x + U_i + U_j + V_ij), constant:<c>.
inline DgpSpec make_graphon(std::string_view h_id, int d_x, RegressorLaw law = RegressorLaw::uniform(),
                            HolderMeta holder = {}) {
  if (d_x < 1) throw ConfigError("d_x must be positive");
  DgpSpec s;
  s.kind = DgpKind::graphon;
  s.d_x = d_x;
  s.function_id = std::string(h_id);
  s.regressors = law;
  s.holder = holder;
  const auto [name, param] = detail::split_param(h_id);
  if (name == "probit_indicator") {
    s.h = [](std::span<const double> a, std::span<const double> b, double ui, double uj, double) {
      return ui + uj + detail::sum_of(a) + detail::sum_of(b) > 0.0 ? 1.0 : 0.0;
    };
    s.graphon_mean = [](std::span<const double> a, std::span<const double> b) {
      return normal_cdf((detail::sum_of(a) + detail::sum_of(b)) / std::numbers::sqrt2);
    };
    s.bound = 1.0;
  } else if (name == "sigmoid") {
    s.h = [](std::span<const double> a, std::span<const double> b, double ui, double uj, double v) {
      return 1.0 / (1.0 + std::exp(-(detail::sum_of(a) + detail::sum_of(b) + ui + uj + v)));
    };
    s.bound = 1.0;
  } else if (name == "constant") {
    const double c = param.value_or(1.0);
    s.h = [c](auto, auto, double, double, double) { return c; };
    s.graphon_mean = [c](auto, auto) { return c; };
    s.bound = std::abs(c);
  } else {
    throw ConfigError("unknown graphon '" + std::string(h_id) + "'");
  }
  return s;
}

// ---------------------------------------------------------------------------
// Seeded latent draws
// ---------------------------------------------------------------------------

inline double unit_effect(std::uint64_t seed, int i) {
  return RandomStream(seed, StreamTag::unit, static_cast<std::uint64_t>(i)).normal();
}

/// (V_ij, V_ji) for the unordered pair {i, j}; order follows the arguments.
inline std::pair<double, double> pair_effects(std::uint64_t seed, int i, int j) {
  const int lo = std::min(i, j), hi = std::max(i, j);
  RandomStream rng(seed, StreamTag::pair, static_cast<std::uint64_t>(lo), static_cast<std::uint64_t>(hi));
  const auto [a, b] = rng.normal_pair();
  return i < j ? std::pair{a, b} : std::pair{b, a};
}

inline std::vector<double> draw_regressors(const RegressorLaw& law, std::uint64_t seed, int i, int d_x) {
  RandomStream rng(seed, StreamTag::regressor, static_cast<std::uint64_t>(i));
  std::vector<double> out(d_x);
  for (auto& v : out) v = law.sample(rng);
  return out;
}

inline double outcome_from_latents(const DgpSpec& spec, std::span<const double> xi, std::span<const double> xj,
                                   double ui, double uj, double vij) {
  if (spec.kind == DgpKind::gaussian_regression) {
    return spec.g(xi, xj) + spec.unit_scale * (ui + uj) + spec.pair_scale * vij;
  }
  return spec.h(xi, xj, ui, uj, vij);
}

/// Draws a dataset of n_units from the model. Deterministic in (spec, n_units, seed)
/// and independent of thread count. A separate regressor seed holds X fixed
/// while the latent effects vary.
inline DyadicDataset simulate(const DgpSpec& spec, int n_units, std::uint64_t seed,
                              std::optional<std::uint64_t> regressor_seed = std::nullopt) {
  if (n_units < 2) throw ConfigError("simulate requires n_units >= 2");
  const int d = spec.d_x;
  DyadicDataset data;
  data.n_units = n_units;
  data.d_x = d;
  data.x.resize(static_cast<std::size_t>(n_units) * d);
  data.latent_u.resize(n_units);
  data.y.assign(static_cast<std::size_t>(n_units) * n_units, std::numeric_limits<double>::quiet_NaN());
  for (int i = 0; i < n_units; ++i) {
    const auto xi = draw_regressors(spec.regressors, regressor_seed.value_or(seed), i, d);
    std::copy(xi.begin(), xi.end(), data.x.begin() + static_cast<std::ptrdiff_t>(i) * d);
    data.latent_u[i] = unit_effect(seed, i);
  }
  parallel_for(n_units, [&](long il) {
    const int i = static_cast<int>(il);
    for (int j = i + 1; j < n_units; ++j) {
      const auto [vij, vji] = pair_effects(seed, i, j);
      const double ui = data.latent_u[i], uj = data.latent_u[j];
      data.outcome(i, j) = outcome_from_latents(spec, data.unit(i), data.unit(j), ui, uj, vij);
      data.outcome(j, i) = outcome_from_latents(spec, data.unit(j), data.unit(i), uj, ui, vji);
    }
  });
  return data;
}

// ---------------------------------------------------------------------------
// Conditional mean and moment diagnostics
// ---------------------------------------------------------------------------

struct LatentIntegration {
  bool enabled = false;
  std::size_t draws = 200000;
  std::uint64_t seed = 1;
};

/// g(w) = E[Y_ij | X_i = w_1, X_j = w_2] at each grid point (w has length 2 d_X).
/// Graphons without a known mean need latent integration by Monte Carlo.
inline std::vector<double> true_g_on_grid(const DgpSpec& spec, const std::vector<std::vector<double>>& grid,
                                          const LatentIntegration& mc = {}) {
  std::vector<double> out(grid.size());
  const std::size_t d = static_cast<std::size_t>(spec.d_x);
  for (std::size_t p = 0; p < grid.size(); ++p) {
    const auto& w = grid[p];
    if (w.size() != 2 * d) throw ConfigError("grid point has wrong dimension");
    const std::span<const double> a(w.data(), d), b(w.data() + d, d);
    if (spec.kind == DgpKind::gaussian_regression) {
      out[p] = spec.g(a, b);
    } else if (spec.graphon_mean) {
      out[p] = (*spec.graphon_mean)(a, b);
    } else if (mc.enabled) {
      RandomStream rng(mc.seed, StreamTag::auxiliary, 0x6d65616e, p);
      CompensatedSum acc;
      for (std::size_t r = 0; r < mc.draws; ++r) {
        const double ui = rng.normal(), uj = rng.normal(), v = rng.normal();
        acc += spec.h(a, b, ui, uj, v);
      }
      out[p] = acc.value() / static_cast<double>(mc.draws);
    } else {
      throw ConfigError("graphon '" + spec.function_id +
                        "' has no closed-form conditional mean; enable latent Monte Carlo integration");
    }
  }
  return out;
}

/// Point conditional mean for a gaussian-regression model or a graphon with known mean.
inline double conditional_mean(const DgpSpec& spec, std::span<const double> a, std::span<const double> b) {
  if (spec.kind == DgpKind::gaussian_regression) return spec.g(a, b);
  if (spec.graphon_mean) return (*spec.graphon_mean)(a, b);
  throw ConfigError("graphon '" + spec.function_id + "' has no closed-form conditional mean");
}

struct DyadMomentBounds {
  double b4_hat = 0.0;  ///< sup E[|Y12|^2 | x1, x2] f(x1) f(x2)
  double b5_hat = 0.0;  ///< sup E[|Y12 Y13| | x1, x2, x3] f(x1) f(x2) f(x3)
  /// (s, sup E[|Y12|^s | x1, x2] f(x1) f(x2)) for each requested s.
  std::vector<std::pair<double, double>> cond_moment_s;
  /// Y is bounded, so every conditional moment is finite (s = infinity).
  bool bounded = false;
};

/// Monte Carlo estimates of the weighted conditional-moment suprema over a
/// grid of regressor values inside the regressor support.
inline DyadMomentBounds dyad_moment_bounds(const DgpSpec& spec, std::size_t mc_reps, std::uint64_t seed,
                                           std::vector<double> s_values = {3.0, 4.0}) {
  if (mc_reps < 1000) throw ConfigError("dyad_moment_bounds needs mc_reps >= 1000");
  const int d = spec.d_x;
  const int per_axis = d == 1 ? 9 : 3;
  std::vector<double> axis(per_axis);
  const auto& law = spec.regressors;
  for (int k = 0; k < per_axis; ++k) axis[k] = law.lo + (law.hi - law.lo) * (k + 0.5) / per_axis;

  // All points of the per-axis grid in R^d.
  std::vector<std::vector<double>> points;
  {
    std::vector<int> idx(d, 0);
    while (true) {
      std::vector<double> p(d);
      for (int k = 0; k < d; ++k) p[k] = axis[idx[k]];
      points.push_back(std::move(p));
      int k = 0;
      for (; k < d; ++k) {
        if (++idx[k] < per_axis) break;
        idx[k] = 0;
      }
      if (k == d) break;
    }
  }

  DyadMomentBounds out;
  out.bounded = spec.bound.has_value();
  out.cond_moment_s.reserve(s_values.size());
  for (double s : s_values) out.cond_moment_s.emplace_back(s, 0.0);
  const std::size_t np = points.size();

  std::uint64_t combo = 0;
  for (std::size_t i1 = 0; i1 < np; ++i1) {
    for (std::size_t i2 = 0; i2 < np; ++i2) {
      const auto& x1 = points[i1];
      const auto& x2 = points[i2];
      const double weight = law.density(x1) * law.density(x2);
      RandomStream rng(seed, StreamTag::auxiliary, 0xb4, combo++);
      CompensatedSum m2;
      std::vector<CompensatedSum> ms(s_values.size());
      for (std::size_t r = 0; r < mc_reps; ++r) {
        const double u1 = rng.normal(), u2 = rng.normal(), v = rng.normal();
        const double y = outcome_from_latents(spec, x1, x2, u1, u2, v);
        m2 += y * y;
        for (std::size_t k = 0; k < s_values.size(); ++k) ms[k] += std::pow(std::abs(y), s_values[k]);
      }
      const double b4 = m2.value() / static_cast<double>(mc_reps) * weight;
      if (!std::isfinite(b4)) throw AssumptionViolation("non-finite second moment estimate");
      out.b4_hat = std::max(out.b4_hat, b4);
      for (std::size_t k = 0; k < s_values.size(); ++k) {
        const double v = ms[k].value() / static_cast<double>(mc_reps) * weight;
        if (!std::isfinite(v)) throw AssumptionViolation("non-finite conditional moment estimate");
        out.cond_moment_s[k].second = std::max(out.cond_moment_s[k].second, v);
      }
      for (std::size_t i3 = 0; i3 < np; ++i3) {
        const auto& x3 = points[i3];
        const double w3 = weight * law.density(x3);
        RandomStream r3(seed, StreamTag::auxiliary, 0xb5, combo * 4096 + i3);
        CompensatedSum m;
        for (std::size_t r = 0; r < mc_reps; ++r) {
          const double u1 = r3.normal(), u2 = r3.normal(), u3 = r3.normal();
          const double v12 = r3.normal(), v13 = r3.normal();
          const double y12 = outcome_from_latents(spec, x1, x2, u1, u2, v12);
          const double y13 = outcome_from_latents(spec, x1, x3, u1, u3, v13);
          m += std::abs(y12 * y13);
        }
        const double b5 = m.value() / static_cast<double>(mc_reps) * w3;
        if (!std::isfinite(b5)) throw AssumptionViolation("non-finite cross moment estimate");
        out.b5_hat = std::max(out.b5_hat, b5);
      }
    }
  }
  return out;
}

}  // namespace dyadic
