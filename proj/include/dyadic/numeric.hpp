#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "dyadic/error.hpp"

namespace dyadic {

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) noexcept {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  CompensatedSum& operator+=(double x) noexcept {
    add(x);
    return *this;
  }
  double value() const noexcept { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double normal_pdf(double z) noexcept {
  return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double z) noexcept { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// E[Y 1(|Y| < tau)] for Y ~ N(mean, sd^2). tau = +inf gives the mean.
inline double truncated_first_moment(double mean, double sd, double tau) noexcept {
  if (!std::isfinite(tau)) return mean;
  if (sd <= 0.0) return std::abs(mean) < tau ? mean : 0.0;
  const double a = (-tau - mean) / sd;
  const double b = (tau - mean) / sd;
  return mean * (normal_cdf(b) - normal_cdf(a)) - sd * (normal_pdf(b) - normal_pdf(a));
}

struct GaussLegendreRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule via Newton iteration on P_n.
inline GaussLegendreRule gauss_legendre(int n) {
  GaussLegendreRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      const double pn = (n == 1) ? x : p1;
      const double pnm1 = (n == 1) ? 1.0 : p0;
      dp = n * (x * pn - pnm1) / (x * x - 1.0);
      const double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    rule.nodes[i] = x;
    rule.weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

struct QuadratureConfig {
  double tol = 1e-8;
  int points_per_panel = 8;
  int max_refinements = 10;
  /// Padding added beyond the kernel's effective support on each side.
  double pad = 5.0;
};

/// One axis of a tensor-product integration domain. `breaks` are sorted
/// interior points where the integrand may lose smoothness; panels never
/// straddle them.
struct QuadratureAxis {
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> breaks;
};

namespace detail {

inline std::vector<double> axis_segments(const QuadratureAxis& axis) {
  std::vector<double> cuts{axis.lo};
  for (double b : axis.breaks) {
    if (b > axis.lo && b < axis.hi) cuts.push_back(b);
  }
  cuts.push_back(axis.hi);
  std::sort(cuts.begin(), cuts.end());
  cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
  return cuts;
}

inline void axis_nodes(const QuadratureAxis& axis, int panels_per_segment, const GaussLegendreRule& gl,
                       std::vector<double>& x, std::vector<double>& w) {
  x.clear();
  w.clear();
  const auto cuts = axis_segments(axis);
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double width = (cuts[s + 1] - cuts[s]) / panels_per_segment;
    for (int p = 0; p < panels_per_segment; ++p) {
      const double a = cuts[s] + p * width;
      const double half = 0.5 * width;
      for (std::size_t k = 0; k < gl.nodes.size(); ++k) {
        x.push_back(a + half * (1.0 + gl.nodes[k]));
        w.push_back(half * gl.weights[k]);
      }
    }
  }
}

}  // namespace detail

/// Tensor-product Gauss-Legendre over a box, doubling the panel count per
/// segment until two successive estimates agree within cfg.tol.
/// Throws QuadratureError when max_refinements is exhausted.
inline double integrate_box(const std::function<double(std::span<const double>)>& f,
                            std::span<const QuadratureAxis> axes, const QuadratureConfig& cfg) {
  const std::size_t d = axes.size();
  const auto gl = gauss_legendre(cfg.points_per_panel);
  std::vector<std::vector<double>> xs(d), ws(d);
  std::vector<double> point(d);

  auto evaluate = [&](int panels) {
    for (std::size_t a = 0; a < d; ++a) detail::axis_nodes(axes[a], panels, gl, xs[a], ws[a]);
    std::vector<std::size_t> idx(d, 0);
    CompensatedSum total;
    while (true) {
      double weight = 1.0;
      for (std::size_t a = 0; a < d; ++a) {
        point[a] = xs[a][idx[a]];
        weight *= ws[a][idx[a]];
      }
      total += weight * f(point);
      std::size_t a = 0;
      for (; a < d; ++a) {
        if (++idx[a] < xs[a].size()) break;
        idx[a] = 0;
      }
      if (a == d) break;
    }
    return total.value();
  };

  int panels = 1;
  double previous = evaluate(panels);
  for (int r = 0; r < cfg.max_refinements; ++r) {
    panels *= 2;
    const double current = evaluate(panels);
    if (std::abs(current - previous) <= cfg.tol) return current;
    previous = current;
  }
  throw QuadratureError("quadrature did not converge: successive refinements differ by more than " +
                        std::to_string(cfg.tol));
}

inline double integrate_1d(const std::function<double(double)>& f, const QuadratureAxis& axis,
                           const QuadratureConfig& cfg) {
  const std::array<QuadratureAxis, 1> axes{axis};
  return integrate_box([&](std::span<const double> x) { return f(x[0]); }, axes, cfg);
}

/// Fixed composite Gauss-Legendre nodes/weights on [lo, hi] (no refinement).
inline void composite_rule(double lo, double hi, int panels, int points, std::vector<double>& x,
                           std::vector<double>& w) {
  const auto gl = gauss_legendre(points);
  detail::axis_nodes(QuadratureAxis{lo, hi, {}}, panels, gl, x, w);
}

}  // namespace dyadic
