#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "dyadic/error.hpp"
#include "dyadic/holder.hpp"
#include "dyadic/numeric.hpp"

namespace dyadic {

enum class KernelFamily { gaussian_product, epanechnikov_product, boxcar_product, bump_product, higher_order };

/// Univariate shape that a product kernel is built from.
enum class BaseShape { gaussian, epanechnikov, boxcar, bump };

/// Smoothness data for the covering argument. Case (a): compact support of
/// Euclidean radius `support_l` and Lipschitz constant `lambda1`. Case (b):
/// differentiable with ||grad K||_inf <= lambda1 everywhere and
/// <= lambda1 ||w||^{-nu} for ||w|| > support_l.
struct LipschitzData {
  double lambda1 = 0.0;
  double support_l = 0.0;
  std::optional<double> tail_nu;

  bool compact_case() const noexcept { return !tail_nu.has_value(); }
};

/// A product kernel K(u) = prod_k k(u_k) on R^dim with k(u) = p(u^2) * base(u),
/// together with its analytic constants.
struct KernelSpec {
  std::string id;
  KernelFamily family = KernelFamily::gaussian_product;
  BaseShape base = BaseShape::gaussian;
  int dim = 1;
  int order = 2;
  double k_max = 0.0;        ///< sup |K|
  double l1_norm = 0.0;      ///< int |K|
  double slice_bound = 0.0;  ///< sup_x int |K(x, x')| dx' (split at dim/2)
  double mass = 1.0;         ///< int K
  std::optional<LipschitzData> lipschitz;

  /// Coefficients c_k of p(u^2) = sum_k c_k u^{2k}; {1} for plain kernels.
  std::vector<double> poly{1.0};
  double bump_amplitude = 0.0;

  // Univariate constants.
  double k1_max = 0.0;
  double k1_deriv_max = 0.0;
  double k1_l1 = 0.0;
  double k1_mass = 1.0;

  /// Half-width of the univariate support (finite proxy for the Gaussian).
  double radius() const noexcept {
    switch (base) {
      case BaseShape::gaussian: return 8.0;
      case BaseShape::epanechnikov: return 1.0;
      case BaseShape::boxcar: return 0.5;
      case BaseShape::bump: return 0.5;
    }
    return 0.0;
  }
  bool compact() const noexcept { return base != BaseShape::gaussian; }

  double univariate(double u) const noexcept;
  double univariate_derivative(double u) const noexcept;

  /// K(u) without dimension checks.
  double operator()(std::span<const double> u) const noexcept {
    double v = 1.0;
    for (double x : u) {
      v *= univariate(x);
      if (v == 0.0) return 0.0;
    }
    return v;
  }
};

/// eta(u) = exp(-1/(1-u^2)) for |u| < 1, else 0.
inline double bump_eta(double u) noexcept {
  const double t = 1.0 - u * u;
  return t > 0.0 ? std::exp(-1.0 / t) : 0.0;
}

inline double bump_eta_derivative(double u) noexcept {
  const double t = 1.0 - u * u;
  if (t <= 0.0) return 0.0;
  return std::exp(-1.0 / t) * (-2.0 * u / (t * t));
}

namespace detail {

inline double base_value(BaseShape base, double a, double u) noexcept {
  switch (base) {
    case BaseShape::gaussian: return normal_pdf(u);
    case BaseShape::epanechnikov: return std::abs(u) <= 1.0 ? 0.75 * (1.0 - u * u) : 0.0;
    case BaseShape::boxcar: return std::abs(u) <= 0.5 ? 1.0 : 0.0;
    case BaseShape::bump: return a * bump_eta(2.0 * u);
  }
  return 0.0;
}

inline double base_derivative(BaseShape base, double a, double u) noexcept {
  switch (base) {
    case BaseShape::gaussian: return -u * normal_pdf(u);
    case BaseShape::epanechnikov: return std::abs(u) < 1.0 ? -1.5 * u : 0.0;
    case BaseShape::boxcar: return 0.0;
    case BaseShape::bump: return 2.0 * a * bump_eta_derivative(2.0 * u);
  }
  return 0.0;
}

inline double poly_value(const std::vector<double>& c, double u) noexcept {
  const double u2 = u * u;
  double v = 0.0;
  for (auto it = c.rbegin(); it != c.rend(); ++it) v = v * u2 + *it;
  return v;
}

inline double poly_derivative(const std::vector<double>& c, double u) noexcept {
  // d/du sum c_k u^{2k} = sum 2k c_k u^{2k-1}
  const double u2 = u * u;
  double v = 0.0;
  for (std::size_t k = c.size(); k-- > 1;) v = v * u2 + 2.0 * static_cast<double>(k) * c[k];
  return v * u;
}

/// Even moments int u^{2j} base(u) du of the normalized base shapes.
inline double base_even_moment(BaseShape base, int j) {
  switch (base) {
    case BaseShape::gaussian: {
      double m = 1.0;  // (2j-1)!!
      for (int k = 1; k <= j; ++k) m *= (2.0 * k - 1.0);
      return m;
    }
    case BaseShape::epanechnikov:
      return 0.75 * (2.0 / (2.0 * j + 1.0) - 2.0 / (2.0 * j + 3.0));
    default: throw ConfigError("higher-order construction needs a gaussian or epanechnikov base");
  }
}

/// Sign-change points of k on [-R, R], refined by bisection (kinks of |k|).
inline std::vector<double> univariate_roots(const KernelSpec& k) {
  std::vector<double> roots;
  if (k.poly.size() <= 1) return roots;
  const double r = k.radius();
  const int n = 20000;
  double prev_u = -r;
  double prev = detail::poly_value(k.poly, prev_u);
  for (int i = 1; i <= n; ++i) {
    const double u = -r + 2.0 * r * i / n;
    const double v = detail::poly_value(k.poly, u);
    if ((prev < 0.0) != (v < 0.0) && prev != 0.0) {
      double lo = prev_u, hi = u;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((detail::poly_value(k.poly, mid) < 0.0) == (prev < 0.0)) lo = mid; else hi = mid;
      }
      roots.push_back(0.5 * (lo + hi));
    }
    prev_u = u;
    prev = v;
  }
  return roots;
}

inline std::vector<double> univariate_breaks(const KernelSpec& k) {
  std::vector<double> b;
  switch (k.base) {
    case BaseShape::epanechnikov: b = {-1.0, 1.0}; break;
    case BaseShape::boxcar: b = {-0.5, 0.5}; break;
    case BaseShape::bump: b = {-0.5, 0.5}; break;
    case BaseShape::gaussian: break;
  }
  b.push_back(0.0);
  return b;
}

/// Sup of |f| on [-R, R]: dense grid, then golden-section refinement around the best cell.
template <class F>
double sup_abs(F&& f, double r) {
  const int n = 40001;
  double best = 0.0;
  double best_u = 0.0;
  const double step = 2.0 * r / (n - 1);
  for (int i = 0; i < n; ++i) {
    const double u = -r + step * i;
    const double v = std::abs(f(u));
    if (v > best) {
      best = v;
      best_u = u;
    }
  }
  double lo = best_u - step, hi = best_u + step;
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 100; ++it) {
    const double a = hi - g * (hi - lo);
    const double b = lo + g * (hi - lo);
    if (std::abs(f(a)) > std::abs(f(b))) hi = b; else lo = a;
  }
  return std::max(best, std::abs(f(0.5 * (lo + hi))));
}

inline void finalize_constants(KernelSpec& k) {
  const double r = k.radius();
  auto f = [&k](double u) { return k.univariate(u); };
  auto df = [&k](double u) { return k.univariate_derivative(u); };
  k.k1_max = sup_abs(f, r);
  k.k1_deriv_max = k.base == BaseShape::boxcar ? 0.0 : sup_abs(df, r);

  QuadratureConfig qc;
  qc.tol = 1e-12;
  qc.max_refinements = 14;
  std::vector<double> breaks = univariate_breaks(k);
  for (double root : univariate_roots(k)) breaks.push_back(root);
  const QuadratureAxis axis{-r - (k.compact() ? 0.0 : 5.0), r + (k.compact() ? 0.0 : 5.0), breaks};
  k.k1_l1 = integrate_1d([&](double u) { return std::abs(f(u)); }, axis, qc);
  k.k1_mass = integrate_1d(f, axis, qc);

  const int d = k.dim;
  const int first = d / 2;
  k.k_max = std::pow(k.k1_max, d);
  k.l1_norm = std::pow(k.k1_l1, d);
  k.mass = std::pow(k.k1_mass, d);
  k.slice_bound = std::pow(k.k1_max, first) * std::pow(k.k1_l1, d - first);

  const double sqrt_d = std::sqrt(static_cast<double>(d));
  const double grad_sup = k.k1_deriv_max * std::pow(k.k1_max, d - 1);
  if (k.base == BaseShape::boxcar) {
    k.lipschitz.reset();
  } else if (k.compact()) {
    // Euclidean Lipschitz constant: ||grad K||_2 <= sqrt(d) * sup|k'| * sup|k|^{d-1}.
    k.lipschitz = LipschitzData{sqrt_d * grad_sup, sqrt_d * r, std::nullopt};
  } else {
    // Tail bound with nu = 2 beyond L = 1, from univariate tail sups.
    const double nu = 2.0;
    const double l = 1.0;
    const int n = 60001;
    const double umax = 60.0;
    const double step = umax / (n - 1);
    std::vector<double> tail_d(n), tail_k(n);
    double md = 0.0, mk = 0.0;
    for (int i = n - 1; i >= 0; --i) {
      const double u = step * i;
      md = std::max(md, std::abs(df(u)));
      mk = std::max(mk, std::abs(f(u)));
      tail_d[i] = md;
      tail_k[i] = mk;
    }
    double lambda = grad_sup;
    for (int i = 0; i < n; ++i) {
      const double rr = l + step * i;
      // Largest coordinate of a point with Euclidean norm rr is at least rr/sqrt(d);
      // use the grid point at or below it so the tail sup is conservative.
      const double c = rr / sqrt_d;
      const std::size_t j = std::min<std::size_t>(n - 1, static_cast<std::size_t>(std::floor(c / step)));
      double bound = tail_d[j] * std::pow(k.k1_max, d - 1);
      if (d >= 2) bound = std::max(bound, k.k1_deriv_max * tail_k[j] * std::pow(k.k1_max, d - 2));
      lambda = std::max(lambda, bound * std::pow(rr, nu));
    }
    k.lipschitz = LipschitzData{lambda * (1.0 + 1e-9), l, nu};
  }
}

}  // namespace detail

inline double KernelSpec::univariate(double u) const noexcept {
  const double b = detail::base_value(base, bump_amplitude, u);
  if (b == 0.0) return 0.0;
  return poly.size() == 1 ? poly[0] * b : detail::poly_value(poly, u) * b;
}

inline double KernelSpec::univariate_derivative(double u) const noexcept {
  const double b = detail::base_value(base, bump_amplitude, u);
  const double db = detail::base_derivative(base, bump_amplitude, u);
  return detail::poly_derivative(poly, u) * b + detail::poly_value(poly, u) * db;
}

inline KernelSpec make_product_kernel(BaseShape base, int dim, double bump_amplitude = 0.0) {
  if (dim <= 0) throw ConfigError("kernel dimension must be positive");
  KernelSpec k;
  k.base = base;
  k.dim = dim;
  k.order = 2;
  switch (base) {
    case BaseShape::gaussian: k.family = KernelFamily::gaussian_product; k.id = "gaussian"; break;
    case BaseShape::epanechnikov: k.family = KernelFamily::epanechnikov_product; k.id = "epanechnikov"; break;
    case BaseShape::boxcar: k.family = KernelFamily::boxcar_product; k.id = "boxcar"; break;
    case BaseShape::bump:
      if (!(bump_amplitude > 0.0)) throw ConfigError("bump amplitude must be positive");
      k.family = KernelFamily::bump_product;
      k.id = "bump";
      k.bump_amplitude = bump_amplitude;
      break;
  }
  detail::finalize_constants(k);
  return k;
}

inline KernelSpec make_bump_kernel(int dim, double amplitude) {
  return make_product_kernel(BaseShape::bump, dim, amplitude);
}

/// Polynomial-times-base kernel with moments 1..target_order-1 vanishing in each coordinate.
inline KernelSpec make_higher_order_kernel(const KernelSpec& base, int target_order) {
  if (base.family != KernelFamily::gaussian_product && base.family != KernelFamily::epanechnikov_product) {
    throw ConfigError("higher-order kernels need a gaussian or epanechnikov base");
  }
  if (target_order != 2 && target_order != 4 && target_order != 6) {
    throw ConfigError("unsupported kernel order " + std::to_string(target_order) + " (expected 2, 4 or 6)");
  }
  if (target_order == 2) return base;
  // Solve for c_0..c_{m-1} (m = order/2): sum_k c_k mu_{2(k+j)} = [j == 0], j = 0..m-1.
  const int m = target_order / 2;
  Eigen::MatrixXd a(m, m);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
  rhs(0) = 1.0;
  for (int j = 0; j < m; ++j) {
    for (int c = 0; c < m; ++c) a(j, c) = detail::base_even_moment(base.base, j + c);
  }
  const Eigen::VectorXd coef = a.fullPivLu().solve(rhs);
  KernelSpec k = base;
  k.family = KernelFamily::higher_order;
  k.order = target_order;
  k.poly.assign(coef.data(), coef.data() + m);
  k.id = base.id + "_o" + std::to_string(target_order);
  detail::finalize_constants(k);
  return k;
}

/// Bump amplitude a such that the product bump kernel sits in Sigma(beta, 1/2)
/// with the sampled Holder ratio at (1 - margin). Found by bisection on a.
inline double calibrate_bump_amplitude(int dim, double beta, double margin = 0.1, std::uint64_t seed = 7) {
  HolderCheckOptions opts;
  opts.lo = -0.6;
  opts.hi = 0.6;
  opts.n_pairs = 4000;
  opts.seed = seed;
  auto ratio = [&](double a) {
    auto bump = [a](std::span<const double> u) {
      double v = 1.0;
      for (double x : u) v *= a * bump_eta(2.0 * x);
      return v;
    };
    return holder_membership_check(bump, beta, 0.5, dim, opts).max_violation_ratio;
  };
  const double target = 1.0 - margin;
  double lo = 1e-6, hi = 1.0;
  while (ratio(hi) < target) hi *= 2.0;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (ratio(mid) <= target) lo = mid; else hi = mid;
  }
  return lo;
}

/// Kernel ids: gaussian, epanechnikov, boxcar, bump, gaussian_o4, gaussian_o6,
/// epanechnikov_o4, epanechnikov_o6.
inline KernelSpec make_kernel(std::string_view id, int dim, double bump_beta = 2.0) {
  if (id == "gaussian") return make_product_kernel(BaseShape::gaussian, dim);
  if (id == "epanechnikov") return make_product_kernel(BaseShape::epanechnikov, dim);
  if (id == "boxcar") return make_product_kernel(BaseShape::boxcar, dim);
  if (id == "bump") return make_bump_kernel(dim, calibrate_bump_amplitude(dim, bump_beta));
  if (id == "gaussian_o4") return make_higher_order_kernel(make_product_kernel(BaseShape::gaussian, dim), 4);
  if (id == "gaussian_o6") return make_higher_order_kernel(make_product_kernel(BaseShape::gaussian, dim), 6);
  if (id == "epanechnikov_o4")
    return make_higher_order_kernel(make_product_kernel(BaseShape::epanechnikov, dim), 4);
  if (id == "epanechnikov_o6")
    return make_higher_order_kernel(make_product_kernel(BaseShape::epanechnikov, dim), 6);
  throw ConfigError("unknown kernel id '" + std::string(id) + "'");
}

/// K(u); rejects a dimension mismatch.
inline double eval_kernel(const KernelSpec& spec, std::span<const double> u) {
  if (static_cast<int>(u.size()) != spec.dim) {
    throw std::invalid_argument("kernel expects dimension " + std::to_string(spec.dim) + ", got " +
                                std::to_string(u.size()));
  }
  return spec(u);
}

/// Numerical moment int w^l K(w) dw by tensor quadrature over the padded support.
inline double kernel_moment(const KernelSpec& spec, std::span<const int> multi_index,
                            const QuadratureConfig& quad = {}) {
  if (static_cast<int>(multi_index.size()) != spec.dim) {
    throw std::invalid_argument("multi-index length must equal kernel dimension");
  }
  const double r = spec.radius() + quad.pad;
  std::vector<double> breaks = detail::univariate_breaks(spec);
  std::vector<QuadratureAxis> axes(spec.dim, QuadratureAxis{-r, r, breaks});
  auto integrand = [&](std::span<const double> w) {
    double v = spec(w);
    if (v == 0.0) return 0.0;
    for (std::size_t k = 0; k < w.size(); ++k) v *= std::pow(w[k], multi_index[k]);
    return v;
  };
  return integrate_box(integrand, axes, quad);
}

/// Dominating kernel K*: case (a) 2d L1 1(||u|| <= 2L); case (b) adds the
/// tail 2d L1 (||u|| - L)^{-nu} beyond 2L. Here 2d is the kernel dimension.
inline double dominating_kernel(const KernelSpec& spec, std::span<const double> u) {
  if (!spec.lipschitz) {
    throw ConfigError("kernel '" + spec.id + "' has no Lipschitz data (dominating kernel undefined)");
  }
  const auto& lip = *spec.lipschitz;
  double norm2 = 0.0;
  for (double x : u) norm2 += x * x;
  const double norm = std::sqrt(norm2);
  const double scale = static_cast<double>(spec.dim) * lip.lambda1;
  if (norm <= 2.0 * lip.support_l) return scale;
  if (lip.compact_case()) return 0.0;
  return scale * std::pow(norm - lip.support_l, -*lip.tail_nu);
}

}  // namespace dyadic
