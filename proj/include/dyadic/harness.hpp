#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "dyadic/dataset_io.hpp"
#include "dyadic/dgp.hpp"
#include "dyadic/error.hpp"
#include "dyadic/estimator.hpp"
#include "dyadic/kernels.hpp"
#include "dyadic/numeric.hpp"
#include "dyadic/parallel.hpp"
#include "dyadic/rng.hpp"

namespace dyadic {

// ---------------------------------------------------------------------------
// Log-log fits
// ---------------------------------------------------------------------------

struct ExponentFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();
  double r2 = std::numeric_limits<double>::quiet_NaN();
  int points_used = 0;
  int points_rejected = 0;
};

/// Two-sided 95% Student t quantile.
inline double t_quantile_975(int df) {
  static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                 2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086};
  if (df < 1) return std::numeric_limits<double>::infinity();
  if (df <= 20) return table[df - 1];
  return 1.96 + 2.5 / df;
}

/// OLS of ln(error) on ln(n_value). Points with nonpositive or non-finite
/// error are dropped and counted in points_rejected.
inline ExponentFit fit_exponent(const std::vector<std::pair<double, double>>& points) {
  std::vector<double> lx, ly;
  ExponentFit fit;
  for (const auto& [n, e] : points) {
    if (!(e > 0.0) || !std::isfinite(e) || !(n > 0.0)) {
      ++fit.points_rejected;
      continue;
    }
    lx.push_back(std::log(n));
    ly.push_back(std::log(e));
  }
  fit.points_used = static_cast<int>(lx.size());
  if (fit.points_used < 4) {
    throw ConfigError("exponent fit needs at least 4 usable points, got " + std::to_string(fit.points_used));
  }
  const double k = static_cast<double>(lx.size());
  const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / k;
  const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / k;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) throw ConfigError("exponent fit needs distinct abscissae");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    const double r = ly[i] - fit.intercept - fit.slope * lx[i];
    sse += r * r;
  }
  fit.se = std::sqrt(sse / (k - 2.0) / sxx);
  fit.r2 = syy > 0.0 ? 1.0 - sse / syy : 1.0;
  return fit;
}

// ---------------------------------------------------------------------------
// Rate experiments
// ---------------------------------------------------------------------------

enum class ErrorMode { pointwise, sup_norm };
enum class ErrorMetric { median, rmse, mean };

inline std::string_view metric_name(ErrorMetric m) {
  switch (m) {
    case ErrorMetric::median: return "median";
    case ErrorMetric::rmse: return "rmse";
    case ErrorMetric::mean: return "mean";
  }
  return "";
}

inline ErrorMetric parse_metric(std::string_view s) {
  if (s == "median") return ErrorMetric::median;
  if (s == "rmse") return ErrorMetric::rmse;
  if (s == "mean") return ErrorMetric::mean;
  throw ConfigError("unknown error metric '" + std::string(s) + "'");
}

struct RateExperiment {
  DgpSpec dgp;
  std::string kernel_id = "gaussian";
  BandwidthRule rule;
  ErrorMode mode = ErrorMode::pointwise;
  std::vector<double> w0;
  /// Sup-norm box [box_lo, box_hi]^{2 d_X} with box_steps points per axis.
  double box_lo = 0.2;
  double box_hi = 0.8;
  int box_steps = 9;
  std::vector<int> n_list;
  int reps = 100;
  std::uint64_t seed = 1;
  ErrorMetric metric = ErrorMetric::median;
};

struct RatePoint {
  int n_units = 0;
  double h = 0.0;
  double median_err = 0.0;
  double mean_err = 0.0;
  double rmse = 0.0;
  double sd = 0.0;
  /// Undefined estimates: replications (pointwise) or grid points summed over replications (sup-norm).
  long n_undefined = 0;
  long n_evaluated = 0;
  double min_f_hat = 0.0;  ///< median over replications of the grid minimum of f_hat
};

struct RateFit {
  std::vector<RatePoint> points;
  ErrorMetric metric = ErrorMetric::median;
  ErrorMode mode = ErrorMode::pointwise;
  ExponentFit fit;           ///< vs ln N (pointwise) or ln(N / ln N) (sup-norm)
  ExponentFit fit_vs_dyads;  ///< vs ln(N (N - 1))
  double theory_exponent = 0.0;
  double foil_vs_dw = 0.0;  ///< -beta / (2 beta + 2 d_X)
  double foil_vs_n = 0.0;   ///< fitted slope against the dyad count
  double ci_half_width = 0.0;
  bool dimension_conclusive = false;
  bool valid = true;
  bool degenerate = false;
  std::string note;

  double metric_value(const RatePoint& p) const {
    switch (metric) {
      case ErrorMetric::median: return p.median_err;
      case ErrorMetric::rmse: return p.rmse;
      case ErrorMetric::mean: return p.mean_err;
    }
    return p.median_err;
  }
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

/// Grid used by sup-norm experiments.
inline std::vector<std::vector<double>> experiment_grid(const RateExperiment& exp) {
  if (exp.mode == ErrorMode::pointwise) return {exp.w0};
  std::vector<AxisSpec> axes(2 * exp.dgp.d_x, AxisSpec{exp.box_lo, exp.box_hi, exp.box_steps});
  return rectangular_grid(axes);
}

inline void validate_experiment(const RateExperiment& exp) {
  if (exp.n_list.size() < 4) throw ConfigError("n_list needs at least 4 sample sizes");
  if (!std::is_sorted(exp.n_list.begin(), exp.n_list.end()) ||
      std::adjacent_find(exp.n_list.begin(), exp.n_list.end()) != exp.n_list.end()) {
    throw ConfigError("n_list must be strictly increasing");
  }
  if (exp.n_list.front() < 3) throw ConfigError("n_list entries must be >= 3");
  if (exp.reps < 50) throw ConfigError("reps must be >= 50");
  if (exp.mode == ErrorMode::pointwise && static_cast<int>(exp.w0.size()) != 2 * exp.dgp.d_x) {
    throw ConfigError("w0 must have 2*d_x coordinates");
  }
  if (exp.mode == ErrorMode::sup_norm && (exp.box_steps < 1 || !(exp.box_hi >= exp.box_lo))) {
    throw ConfigError("bad sup-norm box");
  }
  if (exp.rule.d_x != exp.dgp.d_x) throw ConfigError("bandwidth rule d_x differs from the model d_x");
}

inline RateFit run_rate_experiment(const RateExperiment& exp) {
  validate_experiment(exp);
  const KernelSpec kernel = make_kernel(exp.kernel_id, 2 * exp.dgp.d_x, exp.rule.beta);
  const auto grid = experiment_grid(exp);
  const auto truth = true_g_on_grid(exp.dgp, grid);

  RateFit out;
  out.metric = exp.metric;
  out.mode = exp.mode;
  const double beta = exp.rule.beta;
  const int dx = exp.dgp.d_x;
  out.theory_exponent = -beta / (2.0 * beta + dx);
  out.foil_vs_dw = -beta / (2.0 * beta + 2.0 * dx);

  for (int n : exp.n_list) {
    const double h = bandwidth(exp.rule, n);
    std::vector<double> err(exp.reps, std::numeric_limits<double>::quiet_NaN());
    std::vector<long> undefined(exp.reps, 0);
    std::vector<double> min_f(exp.reps, 0.0);
    parallel_for(exp.reps, [&](long r) {
      const auto data = simulate(exp.dgp, n, replication_seed(exp.seed, static_cast<std::uint64_t>(n), r));
      const auto est = nw_estimate(data, kernel, h, grid);
      double worst = 0.0;
      bool any = false;
      double mf = std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < grid.size(); ++p) {
        mf = std::min(mf, est[p].f_hat);
        if (!est[p].defined) {
          ++undefined[r];
          continue;
        }
        worst = std::max(worst, std::abs(est[p].g_hat - truth[p]));
        any = true;
      }
      min_f[r] = mf;
      if (any) err[r] = worst;
    });
    RatePoint pt;
    pt.n_units = n;
    pt.h = h;
    std::vector<double> ok;
    for (double e : err) {
      if (std::isfinite(e)) ok.push_back(e);
    }
    for (long u : undefined) pt.n_undefined += u;
    pt.n_evaluated = static_cast<long>(exp.reps) * static_cast<long>(grid.size());
    if (pt.n_undefined > 0.1 * pt.n_evaluated) {
      out.valid = false;
      out.note = "more than 10% undefined estimates at N = " + std::to_string(n);
    }
    pt.median_err = median_of(ok);
    pt.min_f_hat = median_of(min_f);
    CompensatedSum s, s2;
    for (double e : ok) {
      s += e;
      s2 += e * e;
    }
    const double k = static_cast<double>(ok.size());
    pt.mean_err = ok.empty() ? std::numeric_limits<double>::quiet_NaN() : s.value() / k;
    pt.rmse = ok.empty() ? std::numeric_limits<double>::quiet_NaN() : std::sqrt(s2.value() / k);
    if (ok.size() > 1) {
      CompensatedSum q;
      for (double e : ok) q += (e - pt.mean_err) * (e - pt.mean_err);
      pt.sd = std::sqrt(q.value() / (k - 1.0));
    }
    out.points.push_back(pt);
  }

  double scale = 0.0;
  for (double t : truth) scale = std::max(scale, std::abs(t));
  bool all_tiny = true;
  for (const auto& p : out.points) {
    if (!(out.metric_value(p) <= 1e-12 * (1.0 + scale))) all_tiny = false;
  }
  if (all_tiny) {
    out.degenerate = true;
    out.note = out.note.empty() ? "errors at machine scale; slope not identified" : out.note;
    return out;
  }

  std::vector<std::pair<double, double>> main_pts, dyad_pts;
  for (const auto& p : out.points) {
    const double n = p.n_units;
    const double x = exp.mode == ErrorMode::pointwise ? n : n / std::log(n);
    main_pts.emplace_back(x, out.metric_value(p));
    dyad_pts.emplace_back(n * (n - 1.0), out.metric_value(p));
  }
  out.fit = fit_exponent(main_pts);
  out.fit_vs_dyads = fit_exponent(dyad_pts);
  out.foil_vs_n = out.fit_vs_dyads.slope;
  out.ci_half_width = t_quantile_975(out.fit.points_used - 2) * out.fit.se;
  out.dimension_conclusive = out.ci_half_width < 0.033;
  return out;
}

/// min over the grid of f_hat; the measured stand-in for the density floor.
inline double measure_delta_n(const DyadicDataset& data, const KernelSpec& kernel, double h,
                              const std::vector<std::vector<double>>& grid) {
  if (grid.empty()) throw ConfigError("measure_delta_n needs a nonempty grid");
  double m = std::numeric_limits<double>::infinity();
  for (const auto& w : grid) m = std::min(m, f_hat_w(data, kernel, h, w));
  return m;
}

// ---------------------------------------------------------------------------
// Variance scaling of the kernel average
// ---------------------------------------------------------------------------

struct VarianceRow {
  int n_units = 0;
  double h = 0.0;
  double n_h = 0.0;  ///< N h^{d_X}
  double var_psi = 0.0;
  double scaled = 0.0;  ///< var_psi * N h^{d_X}
};

struct VarianceStudy {
  std::vector<VarianceRow> rows;
  ExponentFit fit;  ///< ln var vs ln(N h^{d_X})
  double scaled_ratio = 0.0;  ///< max / min of the scaled variances
};

inline VarianceStudy variance_study(const DgpSpec& dgp, const KernelSpec& kernel, const BandwidthRule& rule,
                                    const std::vector<int>& n_list, int reps, const std::vector<double>& w0,
                                    std::uint64_t seed) {
  if (reps < 2) throw ConfigError("variance study needs reps >= 2");
  VarianceStudy out;
  std::vector<std::pair<double, double>> pts;
  for (int n : n_list) {
    const double h = bandwidth(rule, n);
    std::vector<double> psi(reps);
    parallel_for(reps, [&](long r) {
      const auto data = simulate(dgp, n, replication_seed(seed, static_cast<std::uint64_t>(n), r));
      psi[r] = psi_hat(data, kernel, h, w0);
    });
    VarianceRow row;
    row.n_units = n;
    row.h = h;
    row.n_h = n * std::pow(h, dgp.d_x);
    CompensatedSum s;
    for (double v : psi) s += v;
    const double m = s.value() / reps;
    CompensatedSum q;
    for (double v : psi) q += (v - m) * (v - m);
    row.var_psi = q.value() / (reps - 1);
    row.scaled = row.var_psi * row.n_h;
    out.rows.push_back(row);
    pts.emplace_back(row.n_h, row.var_psi);
  }
  out.fit = fit_exponent(pts);
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& r : out.rows) {
    lo = std::min(lo, r.scaled);
    hi = std::max(hi, r.scaled);
  }
  out.scaled_ratio = hi / lo;
  return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline std::string rate_results_csv(const RateFit& fit) {
  std::string s = "N,h,median_err,mean_err,rmse,sd,n_undefined,n_evaluated,min_f_hat\n";
  for (const auto& p : fit.points) {
    s += std::to_string(p.n_units) + ',' + format_double(p.h) + ',' + format_double(p.median_err) + ',' +
         format_double(p.mean_err) + ',' + format_double(p.rmse) + ',' + format_double(p.sd) + ',' +
         std::to_string(p.n_undefined) + ',' + std::to_string(p.n_evaluated) + ',' + format_double(p.min_f_hat) +
         '\n';
  }
  return s;
}

/// Two columns (ln N, ln error) of the fitted metric.
inline std::string rate_plot_data(const RateFit& fit) {
  std::string s = "ln_N ln_err\n";
  for (const auto& p : fit.points) {
    s += format_double(std::log(static_cast<double>(p.n_units))) + ' ' + format_double(std::log(fit.metric_value(p))) +
         '\n';
  }
  return s;
}

inline nlohmann::ordered_json exponent_fit_json(const ExponentFit& f) {
  nlohmann::ordered_json j;
  j["slope"] = f.slope;
  j["intercept"] = f.intercept;
  j["se"] = f.se;
  j["r2"] = f.r2;
  j["points_used"] = f.points_used;
  j["points_rejected"] = f.points_rejected;
  return j;
}

inline nlohmann::ordered_json rate_fit_json(const RateFit& fit) {
  nlohmann::ordered_json j;
  j["mode"] = fit.mode == ErrorMode::pointwise ? "pointwise" : "sup-norm";
  j["metric"] = std::string(metric_name(fit.metric));
  j["regressor"] = fit.mode == ErrorMode::pointwise ? "ln N" : "ln(N/ln N)";
  j["fit"] = exponent_fit_json(fit.fit);
  j["fit_vs_dyads"] = exponent_fit_json(fit.fit_vs_dyads);
  j["theory_exponent"] = fit.theory_exponent;
  j["foil_exponents"] = {{"vs_n", fit.foil_vs_n}, {"vs_dw", fit.foil_vs_dw}};
  j["ci_half_width"] = fit.ci_half_width;
  j["dimension_conclusive"] = fit.dimension_conclusive;
  j["valid"] = fit.valid;
  j["degenerate"] = fit.degenerate;
  j["note"] = fit.note;
  return j;
}

}  // namespace dyadic
