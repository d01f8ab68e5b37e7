#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "dyadic/dgp.hpp"
#include "dyadic/error.hpp"
#include "dyadic/holder.hpp"
#include "dyadic/kernels.hpp"
#include "dyadic/numeric.hpp"
#include "dyadic/parallel.hpp"
#include "dyadic/rng.hpp"

namespace dyadic {

// ---------------------------------------------------------------------------
// Selection matrices and the error covariance
// ---------------------------------------------------------------------------

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Rows of t1/t2/t_script index unordered pairs i < j in lexicographic order.
/// t_big stacks two copies of t_script, one per direction of each dyad.
struct SelectionMatrices {
  int n_units = 0;
  SparseMatrix t1, t2, t_script, t_big;
};

inline SelectionMatrices build_selection(int n_units) {
  if (n_units < 2) throw ConfigError("selection matrices need N >= 2");
  const long n = n_units;
  const long pairs = n * (n - 1) / 2;
  std::vector<Eigen::Triplet<double>> e1, e2, e12, eb;
  e1.reserve(pairs);
  e2.reserve(pairs);
  e12.reserve(2 * pairs);
  eb.reserve(4 * pairs);
  long row = 0;
  for (long i = 0; i < n; ++i) {
    for (long j = i + 1; j < n; ++j, ++row) {
      e1.emplace_back(row, i, 1.0);
      e2.emplace_back(row, j, 1.0);
      e12.emplace_back(row, i, 1.0);
      e12.emplace_back(row, j, 1.0);
      eb.emplace_back(row, i, 1.0);
      eb.emplace_back(row, j, 1.0);
      eb.emplace_back(row + pairs, i, 1.0);
      eb.emplace_back(row + pairs, j, 1.0);
    }
  }
  SelectionMatrices s;
  s.n_units = n_units;
  s.t1.resize(pairs, n);
  s.t2.resize(pairs, n);
  s.t_script.resize(pairs, n);
  s.t_big.resize(2 * pairs, n);
  s.t1.setFromTriplets(e1.begin(), e1.end());
  s.t2.setFromTriplets(e2.begin(), e2.end());
  s.t_script.setFromTriplets(e12.begin(), e12.end());
  s.t_big.setFromTriplets(eb.begin(), eb.end());
  return s;
}

/// Largest N for which the N(N-1) x N(N-1) covariance is formed explicitly.
inline constexpr int kMaxDenseOmega = 40;

inline Eigen::MatrixXd omega(const SelectionMatrices& sel) {
  if (sel.n_units > kMaxDenseOmega) {
    throw ConfigError("dense covariance refused for N = " + std::to_string(sel.n_units) + " (limit " +
                      std::to_string(kMaxDenseOmega) + ")");
  }
  const Eigen::MatrixXd t = Eigen::MatrixXd(sel.t_big);
  return Eigen::MatrixXd::Identity(t.rows(), t.rows()) + t * t.transpose();
}

/// N x N core I + T'T.
inline Eigen::MatrixXd woodbury_core(const SelectionMatrices& sel) {
  const SparseMatrix tt = SparseMatrix(sel.t_big.transpose() * sel.t_big);
  return Eigen::MatrixXd::Identity(sel.n_units, sel.n_units) + Eigen::MatrixXd(tt);
}

/// (I + TT')^{-1} = I - T (I + T'T)^{-1} T', solving only the N x N core.
inline Eigen::MatrixXd omega_inverse(const SelectionMatrices& sel) {
  if (sel.n_units > kMaxDenseOmega) {
    throw ConfigError("dense covariance inverse refused for N = " + std::to_string(sel.n_units));
  }
  const Eigen::MatrixXd t = Eigen::MatrixXd(sel.t_big);
  const Eigen::LDLT<Eigen::MatrixXd> core(woodbury_core(sel));
  if (core.info() != Eigen::Success) throw std::runtime_error("Woodbury core factorization failed");
  return Eigen::MatrixXd::Identity(t.rows(), t.rows()) - t * core.solve(t.transpose());
}

namespace detail {

/// Solves (I + TT') x = b without forming the matrix.
inline Eigen::VectorXd omega_cg_solve(const SparseMatrix& t, const Eigen::VectorXd& b, double tol = 1e-14,
                                      int max_iter = 500) {
  auto apply = [&t](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    const Eigen::VectorXd tv = t.transpose() * v;
    return v + t * tv;
  };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd r = b;
  Eigen::VectorXd p = r;
  double rs = r.squaredNorm();
  const double stop = tol * tol * std::max(b.squaredNorm(), std::numeric_limits<double>::min());
  for (int it = 0; it < max_iter && rs > stop; ++it) {
    const Eigen::VectorXd ap = apply(p);
    const double alpha = rs / p.dot(ap);
    x += alpha * p;
    r -= alpha * ap;
    const double rs_new = r.squaredNorm();
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  return x;
}

}  // namespace detail

struct WoodburyGap {
  double lhs = 0.0;  ///< K'K - K'T'(I + TT')^{-1}TK, via an iterative solve in dyad space
  double rhs = 0.0;  ///< K'(I + T'T)^{-1}K, via the N x N core
  double gap = 0.0;  ///< |lhs - rhs|
};

inline WoodburyGap woodbury_gap(const SelectionMatrices& sel, const Eigen::VectorXd& k_vec) {
  if (k_vec.size() != sel.n_units) throw ConfigError("K vector length must equal N");
  const Eigen::VectorXd tk = sel.t_big * k_vec;
  const Eigen::VectorXd x = detail::omega_cg_solve(sel.t_big, tk);
  const Eigen::LDLT<Eigen::MatrixXd> core(woodbury_core(sel));
  WoodburyGap g;
  g.lhs = k_vec.squaredNorm() - tk.dot(x);
  g.rhs = k_vec.dot(core.solve(k_vec));
  g.gap = std::abs(g.lhs - g.rhs);
  return g;
}

// ---------------------------------------------------------------------------
// Hypothesis constructions
// ---------------------------------------------------------------------------

struct MinimaxConstruction {
  enum class Variant { two_point, fano };
  Variant variant = Variant::two_point;
  double beta = 2.0;
  double l_const = 1.0;
  double c0 = 1.0;
  int d_x = 1;
  int n_units = 0;
  double h = 0.0;
  KernelSpec bump;
  RegressorLaw regressors;
  std::vector<double> x10, x20;               // two-point centers
  int m = 0;                                  // fano grid points per axis
  std::vector<std::vector<double>> centers;   // fano centers, k = 1..M stored at k - 1

  int hypotheses() const noexcept { return variant == Variant::two_point ? 2 : static_cast<int>(centers.size()); }
  double k0() const { return bump(std::vector<double>(d_x, 0.0)); }
};

inline std::string_view variant_name(MinimaxConstruction::Variant v) {
  return v == MinimaxConstruction::Variant::two_point ? "two-point" : "fano";
}

inline MinimaxConstruction::Variant parse_variant(std::string_view s) {
  if (s == "two-point" || s == "two_point") return MinimaxConstruction::Variant::two_point;
  if (s == "fano") return MinimaxConstruction::Variant::fano;
  throw ConfigError("unknown minimax variant '" + std::string(s) + "'");
}

/// Two-point: h = c0 N^{-1/(2 beta + d_X)}. Fano: h = c0 (N / ln N)^{-1/(2 beta + d_X)}
/// with centers ((k - 1/2)/m, ...) and m = floor(1/h) so the supports are disjoint.
inline MinimaxConstruction make_construction(MinimaxConstruction::Variant variant, double beta, double l_const,
                                             double c0, int d_x, int n_units,
                                             RegressorLaw law = RegressorLaw::uniform(),
                                             std::vector<double> x10 = {}, std::vector<double> x20 = {}) {
  if (!(beta > 0.0) || !(l_const > 0.0) || !(c0 > 0.0)) throw ConfigError("beta, L and c0 must be positive");
  if (d_x < 1) throw ConfigError("d_x must be positive");
  if (n_units < 3) throw ConfigError("minimax construction needs N >= 3");
  MinimaxConstruction con;
  con.variant = variant;
  con.beta = beta;
  con.l_const = l_const;
  con.c0 = c0;
  con.d_x = d_x;
  con.n_units = n_units;
  con.regressors = law;
  con.bump = make_bump_kernel(d_x, calibrate_bump_amplitude(d_x, beta));
  const double n = n_units;
  const double rate = 1.0 / (2.0 * beta + d_x);
  if (variant == MinimaxConstruction::Variant::two_point) {
    con.h = c0 * std::pow(n, -rate);
    con.x10 = x10.empty() ? std::vector<double>(d_x, 0.25) : std::move(x10);
    con.x20 = x20.empty() ? std::vector<double>(d_x, 0.75) : std::move(x20);
    if (static_cast<int>(con.x10.size()) != d_x || static_cast<int>(con.x20.size()) != d_x) {
      throw ConfigError("two-point centers must have d_x coordinates");
    }
  } else {
    con.h = c0 * std::pow(n / std::log(n), -rate);
    con.m = static_cast<int>(std::floor(1.0 / con.h));
    if (con.m >= 1) {
      std::vector<int> idx(d_x, 0);
      while (true) {
        std::vector<double> c(d_x);
        for (int k = 0; k < d_x; ++k) c[k] = (idx[k] + 0.5) / con.m;
        con.centers.push_back(std::move(c));
        int k = 0;
        for (; k < d_x; ++k) {
          if (++idx[k] < con.m) break;
          idx[k] = 0;
        }
        if (k == d_x) break;
      }
    }
  }
  return con;
}

namespace detail {

inline double bump_at(const MinimaxConstruction& con, std::span<const double> x, std::span<const double> center) {
  double v = 1.0;
  for (int k = 0; k < con.d_x; ++k) {
    v *= con.bump.univariate((x[k] - center[k]) / con.h);
    if (v == 0.0) return 0.0;
  }
  return v;
}

/// Per-unit factor of the hypothesis mean: g(X_i, X_j) = kv_i + kv_j.
inline double unit_factor(const MinimaxConstruction& con, int which, std::span<const double> x) {
  if (which == 0) return 0.0;
  const double lh = con.l_const * std::pow(con.h, con.beta);
  if (con.variant == MinimaxConstruction::Variant::two_point) {
    return 0.5 * lh * (bump_at(con, x, con.x10) + bump_at(con, x, con.x20));
  }
  return lh * bump_at(con, x, con.centers[which - 1]);
}

}  // namespace detail

/// g_0 = 0; two-point g_1; fano g_k for k = 1..M. w has 2 d_X coordinates.
inline double hypothesis_g(const MinimaxConstruction& con, int which, std::span<const double> w) {
  if (static_cast<int>(w.size()) != 2 * con.d_x) throw ConfigError("hypothesis point has wrong dimension");
  if (which < 0 || which > con.hypotheses() - (con.variant == MinimaxConstruction::Variant::two_point ? 1 : 0)) {
    throw ConfigError("hypothesis index out of range");
  }
  const std::span<const double> x1(w.data(), con.d_x), x2(w.data() + con.d_x, con.d_x);
  return detail::unit_factor(con, which, x1) + detail::unit_factor(con, which, x2);
}

struct SeparationResult {
  double gap = 0.0;       ///< max over the grid of |g_k - g_l|
  double required = 0.0;  ///< 2 A psi_N
  bool pass = true;
};

/// 2 A psi_N: two-point A = L K(0) c0^beta / 2 with psi = N^{-beta/(2 beta + d_X)};
/// fano A = L K(0) c0^beta with psi = (N / ln N)^{-beta/(2 beta + d_X)}.
inline double separation_required(const MinimaxConstruction& con) {
  const double n = con.n_units;
  const double e = con.beta / (2.0 * con.beta + con.d_x);
  const double k0 = con.k0();
  if (con.variant == MinimaxConstruction::Variant::two_point) {
    return 2.0 * (con.l_const * k0 * std::pow(con.c0, con.beta) / 2.0) * std::pow(n, -e);
  }
  return 2.0 * con.l_const * k0 * std::pow(con.c0, con.beta) * std::pow(n / std::log(n), -e);
}

/// Grid containing the centers relevant to hypotheses k and l.
inline std::vector<std::vector<double>> separation_grid(const MinimaxConstruction& con, int k, int l) {
  std::vector<std::vector<double>> grid;
  auto add = [&](const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> w(a);
    w.insert(w.end(), b.begin(), b.end());
    grid.push_back(std::move(w));
  };
  if (con.variant == MinimaxConstruction::Variant::two_point) {
    add(con.x10, con.x20);
    add(con.x20, con.x10);
    add(con.x10, con.x10);
    add(con.x20, con.x20);
  } else {
    for (int which : {k, l}) {
      if (which >= 1) add(con.centers[which - 1], con.centers[which - 1]);
    }
  }
  return grid;
}

inline SeparationResult separation_check(const MinimaxConstruction& con, int k, int l,
                                         const std::vector<std::vector<double>>& grid) {
  SeparationResult r;
  for (const auto& w : grid) r.gap = std::max(r.gap, std::abs(hypothesis_g(con, k, w) - hypothesis_g(con, l, w)));
  if (k == l) {
    r.required = 0.0;
    r.pass = true;
    return r;
  }
  r.required = separation_required(con);
  r.pass = r.gap >= r.required * (1.0 - 1e-12);
  return r;
}

/// Sampled Holder check of a hypothesis on [0, 1]^{2 d_X}.
inline HolderCheckResult hypothesis_holder_check(const MinimaxConstruction& con, int which,
                                                 HolderCheckOptions opts = {}) {
  auto g = [&con, which](std::span<const double> w) { return hypothesis_g(con, which, w); };
  return holder_membership_check(g, con.beta, con.l_const, 2 * con.d_x, opts);
}

// ---------------------------------------------------------------------------
// KL divergences
// ---------------------------------------------------------------------------

struct KlEstimate {
  double kl_mean = 0.0;
  double kl_se = 0.0;
  double bound = 0.0;
  int reps = 0;
};

namespace detail {

inline void require_effective_sample(const MinimaxConstruction& con) {
  const double nh = con.n_units * std::pow(con.h, con.d_x);
  if (nh < 1.0) {
    throw AssumptionViolation("N*h^d_X = " + std::to_string(nh) + " < 1 at N = " + std::to_string(con.n_units));
  }
}

inline void mean_and_se(std::span<const double> v, double& mean, double& se) {
  CompensatedSum s;
  for (double x : v) s += x;
  mean = s.value() / static_cast<double>(v.size());
  CompensatedSum q;
  for (double x : v) q += (x - mean) * (x - mean);
  se = v.size() > 1 ? std::sqrt(q.value() / static_cast<double>(v.size() - 1) / static_cast<double>(v.size())) : 0.0;
}

inline std::vector<std::vector<double>> draw_units(const MinimaxConstruction& con, std::uint64_t seed) {
  std::vector<std::vector<double>> x(con.n_units);
  for (int i = 0; i < con.n_units; ++i) x[i] = draw_regressors(con.regressors, seed, i, con.d_x);
  return x;
}

/// 1/2 K'[I - (I + T'T)^{-1}]K.
inline double kl_form(const Eigen::LDLT<Eigen::MatrixXd>& core, const Eigen::VectorXd& k) {
  return 0.5 * (k.squaredNorm() - k.dot(core.solve(k)));
}

}  // namespace detail

/// Closed-form Gaussian KL for a fixed regressor draw, hypothesis `which` against g_0.
inline double kl_given_regressors(const MinimaxConstruction& con, int which,
                                  const std::vector<std::vector<double>>& x) {
  const auto sel = build_selection(static_cast<int>(x.size()));
  const Eigen::LDLT<Eigen::MatrixXd> core(woodbury_core(sel));
  Eigen::VectorXd k(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) k(i) = detail::unit_factor(con, which, x[i]);
  return detail::kl_form(core, k);
}

/// MC over regressor draws of KL(P_1, P_0); bound 1/2 L^2 K_max^2 B_3 c0^{2 beta + d_X}.
inline KlEstimate kl_two_point(const MinimaxConstruction& con, int mc_reps, std::uint64_t seed) {
  if (con.variant != MinimaxConstruction::Variant::two_point) throw ConfigError("kl_two_point needs the two-point variant");
  if (mc_reps < 2) throw ConfigError("kl_two_point needs mc_reps >= 2");
  detail::require_effective_sample(con);
  const auto sel = build_selection(con.n_units);
  const Eigen::LDLT<Eigen::MatrixXd> core(woodbury_core(sel));
  std::vector<double> kl(mc_reps);
  parallel_for(mc_reps, [&](long r) {
    const auto x = detail::draw_units(con, replication_seed(seed, con.n_units, r));
    Eigen::VectorXd k(con.n_units);
    for (int i = 0; i < con.n_units; ++i) k(i) = detail::unit_factor(con, 1, x[i]);
    kl[r] = detail::kl_form(core, k);
  });
  KlEstimate e;
  e.reps = mc_reps;
  detail::mean_and_se(kl, e.kl_mean, e.kl_se);
  const double kmax = con.bump.k_max;
  e.bound = 0.5 * con.l_const * con.l_const * kmax * kmax * con.regressors.sup_density(con.d_x) *
            std::pow(con.c0, 2.0 * con.beta + con.d_x);
  return e;
}

struct FanoEstimate {
  double avg_kl = 0.0;
  double avg_kl_se = 0.0;
  double bound = 0.0;          ///< 2 L^2 K_max^2 B_3 c0^{2 beta + d_X} ln N
  double alpha_implied = 0.0;  ///< avg_kl / ln M
  double alpha_bound = 0.0;    ///< bound / ln M
  int m = 0;
  int hypotheses = 0;
  double log_m = 0.0;
  double log_m_required = 0.0;  ///< (d_X / (2 beta + d_X + 1)) ln N
  bool packing_ok = false;
  int reps = 0;
};

inline FanoEstimate fano_kl_average(const MinimaxConstruction& con, int mc_reps, std::uint64_t seed) {
  if (con.variant != MinimaxConstruction::Variant::fano) throw ConfigError("fano_kl_average needs the fano variant");
  if (mc_reps < 2) throw ConfigError("fano_kl_average needs mc_reps >= 2");
  const int big_m = con.hypotheses();
  if (big_m < 2) {
    throw AssumptionViolation("packing degenerate: M_N = " + std::to_string(big_m) + " < 2 (h = " +
                              std::to_string(con.h) + ")");
  }
  detail::require_effective_sample(con);
  const auto sel = build_selection(con.n_units);
  const Eigen::LDLT<Eigen::MatrixXd> core(woodbury_core(sel));
  std::vector<double> avg(mc_reps);
  parallel_for(mc_reps, [&](long r) {
    const auto x = detail::draw_units(con, replication_seed(seed, con.n_units, r));
    CompensatedSum s;
    Eigen::VectorXd k(con.n_units);
    for (int which = 1; which <= big_m; ++which) {
      for (int i = 0; i < con.n_units; ++i) k(i) = detail::unit_factor(con, which, x[i]);
      s += detail::kl_form(core, k);
    }
    avg[r] = s.value() / big_m;
  });
  FanoEstimate e;
  e.reps = mc_reps;
  e.m = con.m;
  e.hypotheses = big_m;
  detail::mean_and_se(avg, e.avg_kl, e.avg_kl_se);
  const double n = con.n_units;
  const double kmax = con.bump.k_max;
  e.bound = 2.0 * con.l_const * con.l_const * kmax * kmax * con.regressors.sup_density(con.d_x) *
            std::pow(con.c0, 2.0 * con.beta + con.d_x) * std::log(n);
  e.log_m = std::log(static_cast<double>(big_m));
  e.alpha_implied = e.avg_kl / e.log_m;
  e.alpha_bound = e.bound / e.log_m;
  e.log_m_required = con.d_x / (2.0 * con.beta + con.d_x + 1.0) * std::log(n);
  e.packing_ok = e.log_m >= e.log_m_required;
  return e;
}

struct MomentBoundCheck {
  double mean = 0.0;
  double se = 0.0;
  double bound = 0.0;  ///< 4 h^{d_X} B_3 K_max^2
  bool pass = false;
};

/// MC estimate of E[(K((X - x10)/h) + K((X - x20)/h))^2] against its bound.
inline MomentBoundCheck k_vector_moment_check(const MinimaxConstruction& con, int draws, std::uint64_t seed) {
  if (con.variant != MinimaxConstruction::Variant::two_point) throw ConfigError("moment check needs the two-point variant");
  if (draws < 2) throw ConfigError("moment check needs draws >= 2");
  std::vector<double> v(draws);
  for (int r = 0; r < draws; ++r) {
    const auto x = draw_regressors(con.regressors, seed, r, con.d_x);
    const double s = detail::bump_at(con, x, con.x10) + detail::bump_at(con, x, con.x20);
    v[r] = s * s;
  }
  MomentBoundCheck c;
  detail::mean_and_se(v, c.mean, c.se);
  const double kmax = con.bump.k_max;
  c.bound = 4.0 * std::pow(con.h, con.d_x) * con.regressors.sup_density(con.d_x) * kmax * kmax;
  c.pass = c.mean <= c.bound + 3.0 * c.se;
  return c;
}

}  // namespace dyadic
