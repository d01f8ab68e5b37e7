#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dyadic/dataset_io.hpp"
#include "dyadic/dgp.hpp"
#include "oracles.hpp"

using namespace dyadic;

namespace {

double correlation(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sab += (a[k] - ma) * (b[k] - mb);
    saa += (a[k] - ma) * (a[k] - ma);
    sbb += (b[k] - mb) * (b[k] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / a.size() - static_cast<double>(j) / b.size()));
  }
  return d;
}

}  // namespace

TEST(Dgp, ZeroRegressionRecoversLatents) {
  const auto spec = make_gaussian_regression("zero", 1);
  const auto data = simulate(spec, 2, 42);
  const auto [v01, v10] = pair_effects(42, 0, 1);
  EXPECT_EQ(data.outcome(0, 1), unit_effect(42, 0) + unit_effect(42, 1) + v01);
  EXPECT_EQ(data.outcome(1, 0), unit_effect(42, 1) + unit_effect(42, 0) + v10);
  EXPECT_EQ(data.latent_u[0], unit_effect(42, 0));
}

TEST(Dgp, ConstantGraphonWithoutNoise) {
  const auto spec = make_graphon("constant:2.5", 2);
  const auto data = simulate(spec, 6, 3);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      if (i != j) EXPECT_EQ(data.outcome(i, j), 2.5);
    }
  }
}

TEST(Dgp, LinearModelMatchesRecomputation) {
  const auto spec = make_gaussian_regression("linear", 1);
  const auto data = simulate(spec, 3, 9);
  for (int i = 0; i < 3; ++i) {
    const auto xi = draw_regressors(spec.regressors, 9, i, 1);
    EXPECT_EQ(data.unit(i)[0], xi[0]);
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const auto xj = draw_regressors(spec.regressors, 9, j, 1);
      const auto v = pair_effects(9, i, j).first;
      const double expected = (xi[0] + xj[0]) + (unit_effect(9, i) + unit_effect(9, j)) + v;
      EXPECT_EQ(data.outcome(i, j), expected);
    }
  }
}

TEST(Dgp, DiagonalIsNaN) {
  const auto data = simulate(make_gaussian_regression("sin_additive", 1), 5, 1);
  for (int i = 0; i < 5; ++i) EXPECT_TRUE(std::isnan(data.y[i * 5 + i]));
}

TEST(Dgp, SeedDeterminism) {
  const auto spec = make_gaussian_regression("sin_additive", 2);
  const auto a = simulate(spec, 30, 77);
  const auto b = simulate(spec, 30, 77);
  EXPECT_EQ(a.x, b.x);
  for (std::size_t k = 0; k < a.y.size(); ++k) {
    if (!std::isnan(a.y[k])) EXPECT_EQ(a.y[k], b.y[k]);
  }
  const auto c = simulate(spec, 30, 78);
  EXPECT_NE(a.x, c.x);
}

TEST(Dgp, SmallerSampleIsPrefixOfLarger) {
  const auto spec = make_gaussian_regression("sin_additive", 1);
  const auto small = simulate(spec, 5, 4);
  const auto big = simulate(spec, 9, 4);
  for (int i = 0; i < 5; ++i) {
    EXPECT_EQ(small.unit(i)[0], big.unit(i)[0]);
    for (int j = 0; j < 5; ++j) {
      if (i != j) EXPECT_EQ(small.outcome(i, j), big.outcome(i, j));
    }
  }
}

TEST(Dgp, FixedRegressorSeedHoldsX) {
  const auto spec = make_gaussian_regression("sin_additive", 1);
  const auto a = simulate(spec, 10, 1, 500);
  const auto b = simulate(spec, 10, 2, 500);
  EXPECT_EQ(a.x, b.x);
  EXPECT_NE(a.outcome(0, 1), b.outcome(0, 1));
}

TEST(Dgp, RegressorLawSupportAndDensity) {
  const auto u = RegressorLaw::uniform();
  EXPECT_DOUBLE_EQ(u.density1(0.3), 1.0);
  EXPECT_DOUBLE_EQ(u.density1(1.3), 0.0);
  EXPECT_DOUBLE_EQ(u.sup_density(2), 1.0);
  const auto t = RegressorLaw::truncated_normal(0.5, 0.25, 0.0, 1.0);
  // Independent normalization check by the midpoint rule.
  double mass = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) mass += t.density1((k + 0.5) / n) / n;
  EXPECT_NEAR(mass, 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(t.sup_density1(), t.density1(0.5));
  RandomStream rng(5, StreamTag::auxiliary);
  for (int k = 0; k < 2000; ++k) {
    const double v = t.sample(rng);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Dgp, DisjointPairsUncorrelated) {
  const auto spec = make_gaussian_regression("zero", 1);
  const int reps = 20000;
  std::vector<double> y01(reps), y23(reps), y02(reps);
  for (int r = 0; r < reps; ++r) {
    const auto d = simulate(spec, 4, replication_seed(11, 4, r));
    y01[r] = d.outcome(0, 1);
    y23[r] = d.outcome(2, 3);
    y02[r] = d.outcome(0, 2);
  }
  const double se = 1.0 / std::sqrt(static_cast<double>(reps));
  EXPECT_LT(std::fabs(correlation(y01, y23)), 3.0 * se);
  // Shared unit: covariance 1, variance 3.
  EXPECT_NEAR(correlation(y01, y02), 1.0 / 3.0, 4.0 * se);
}

TEST(Dgp, RelabelledUnitsShareDistribution) {
  const auto spec = make_gaussian_regression("sin_additive", 1);
  const int reps = 4000;
  std::vector<double> a(reps), b(reps);
  for (int r = 0; r < reps; ++r) {
    const auto d = simulate(spec, 6, replication_seed(21, 6, r));
    double ra = 0.0, rb = 0.0;
    for (int j = 0; j < 6; ++j) {
      if (j != 0) ra += d.outcome(0, j);
      if (j != 4) rb += d.outcome(4, j);
    }
    a[r] = ra;
    b[r] = rb;
  }
  // Two-sample KS critical value at level 0.001.
  const double crit = 1.95 * std::sqrt(2.0 / reps);
  EXPECT_LT(ks_distance(a, b), crit);
}

TEST(Dgp, SecondMomentBoundForZeroModel) {
  const auto spec = make_gaussian_regression("zero", 1);
  const auto m = dyad_moment_bounds(spec, 20000, 3);
  EXPECT_NEAR(m.b4_hat, 3.0, 0.3);
  EXPECT_FALSE(m.bounded);
  ASSERT_EQ(m.cond_moment_s.size(), 2u);
  // E|Z|^4 for Z ~ N(0, 3) is 3 * 9 = 27.
  EXPECT_NEAR(m.cond_moment_s[1].second, 27.0, 4.0);
}

TEST(Dgp, CrossMomentMatchesBivariateNormal) {
  // E|Y12 Y13| with Var 3 and shared-unit correlation 1/3.
  const double rho = 1.0 / 3.0;
  const double analytic = 3.0 * (2.0 / M_PI) * (std::sqrt(1.0 - rho * rho) + rho * std::asin(rho));
  // Independent midpoint-rule oracle on the standard bivariate density.
  const int n = 1600;
  const double lim = 8.0, step = 2.0 * lim / n;
  const double det = 1.0 - rho * rho;
  long double acc = 0.0L;
  for (int a = 0; a < n; ++a) {
    const double x = -lim + (a + 0.5) * step;
    for (int b = 0; b < n; ++b) {
      const double y = -lim + (b + 0.5) * step;
      const double dens = std::exp(-(x * x - 2 * rho * x * y + y * y) / (2 * det)) / (2 * M_PI * std::sqrt(det));
      acc += std::fabs(x * y) * dens;
    }
  }
  const double quad = 3.0 * static_cast<double>(acc * step * step);
  EXPECT_NEAR(quad, analytic, 1e-4);
  const auto m = dyad_moment_bounds(make_gaussian_regression("zero", 1), 20000, 4);
  EXPECT_NEAR(m.b5_hat, analytic, 0.15);
}

TEST(Dgp, BoundedGraphonFlag) {
  const auto m = dyad_moment_bounds(make_graphon("sigmoid", 1), 1000, 1);
  EXPECT_TRUE(m.bounded);
  for (const auto& [s, v] : m.cond_moment_s) EXPECT_LE(v, 1.0);
  EXPECT_THROW(dyad_moment_bounds(make_graphon("sigmoid", 1), 10, 1), ConfigError);
}

TEST(Dgp, TrueRegressionOnGrid) {
  const auto sin_spec = make_gaussian_regression("sin_additive", 1);
  EXPECT_EQ(true_g_on_grid(sin_spec, {{0.0, 0.0}})[0], 0.0);
  const auto prod = make_gaussian_regression("product", 1);
  EXPECT_NEAR(true_g_on_grid(prod, {{0.5, 0.2}})[0], 0.1, 1e-15);
  const auto probit = make_graphon("probit_indicator", 1);
  EXPECT_DOUBLE_EQ(true_g_on_grid(probit, {{0.0, 0.0}})[0], 0.5);
  EXPECT_THROW(true_g_on_grid(sin_spec, {{0.0, 0.0, 0.0}}), ConfigError);
}

TEST(Dgp, ProbitMeanAgreesWithLatentIntegration) {
  auto spec = make_graphon("probit_indicator", 1);
  const std::vector<std::vector<double>> grid{{0.3, -0.1}, {0.8, 0.6}};
  const auto exact = true_g_on_grid(spec, grid);
  spec.graphon_mean.reset();
  EXPECT_THROW(true_g_on_grid(spec, grid), ConfigError);
  LatentIntegration mc;
  mc.enabled = true;
  mc.draws = 200000;
  const auto approx = true_g_on_grid(spec, grid, mc);
  for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_NEAR(approx[k], exact[k], 0.005);
}

TEST(Dgp, SigmoidNeedsIntegration) {
  const auto spec = make_graphon("sigmoid", 1);
  EXPECT_THROW(true_g_on_grid(spec, {{0.5, 0.5}}), ConfigError);
  LatentIntegration mc;
  mc.enabled = true;
  mc.draws = 100000;
  // Symmetric about zero: logistic(Z) has mean 1/2 for Z centered.
  EXPECT_NEAR(true_g_on_grid(spec, {{0.0, 0.0}}, mc)[0], 0.5, 0.005);
}

TEST(Dgp, UnknownIdsRejected) {
  EXPECT_THROW(make_regression_function("cubic"), ConfigError);
  EXPECT_THROW(make_graphon("logit", 1), ConfigError);
  EXPECT_THROW(make_gaussian_regression("zero", 0), ConfigError);
  EXPECT_THROW(simulate(make_gaussian_regression("zero", 1), 1, 1), ConfigError);
}

TEST(Dgp, MakeDatasetValidates) {
  EXPECT_THROW(make_dataset(2, 1, {0.1}, {0, 1, 1, 0}), ConfigError);
  EXPECT_THROW(make_dataset(2, 1, {0.1, 0.2}, {0, 1, 1}), ConfigError);
  const auto d = make_dataset(2, 1, {0.1, 0.2}, {0, 1, 2, 0});
  EXPECT_TRUE(std::isnan(d.outcome(0, 0)));
  EXPECT_EQ(d.outcome(1, 0), 2.0);
}

TEST(DatasetIo, RoundTripIsExact) {
  const auto data = simulate(make_gaussian_regression("sin_additive", 2), 7, 13);
  const auto back = parse_dataset(units_csv(data), pairs_csv(data));
  EXPECT_EQ(back.n_units, 7);
  EXPECT_EQ(back.d_x, 2);
  EXPECT_EQ(back.x, data.x);
  for (int i = 0; i < 7; ++i) {
    for (int j = 0; j < 7; ++j) {
      if (i != j) EXPECT_EQ(back.outcome(i, j), data.outcome(i, j));
    }
  }
}

TEST(DatasetIo, FormatDoubleIsShortestRoundTrip) {
  oracle::Lcg rng(8);
  for (int k = 0; k < 1000; ++k) {
    const double v = rng.normal() * std::pow(10.0, rng.integer(-20, 20));
    EXPECT_EQ(parse_double(format_double(v), "v"), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(std::nan("")), "nan");
}

TEST(DatasetIo, ParseErrors) {
  const std::string units = "i,x_1\n0,0.1\n1,0.2\n";
  EXPECT_THROW(parse_dataset(units, "i,j,y\n0,1,1\n"), ConfigError);
  EXPECT_THROW(parse_dataset(units, "i,j,y\n0,1,1\n0,1,2\n"), ConfigError);
  EXPECT_THROW(parse_dataset(units, "i,j,y\n0,0,1\n1,0,2\n"), ConfigError);
  EXPECT_THROW(parse_dataset(units, "i,j,y\n0,1,abc\n1,0,2\n"), ConfigError);
  EXPECT_THROW(parse_dataset("i,x_1\n0,0.1\n2,0.2\n", "i,j,y\n0,1,1\n1,0,2\n"), ConfigError);
  EXPECT_THROW(parse_dataset("", "i,j,y\n"), ConfigError);
  EXPECT_NO_THROW(parse_dataset(units, "i,j,y\n0,1,1\n1,0,2\n"));
}

TEST(DatasetIo, CompanionPaths) {
  const auto p = dataset_paths("out/d.csv");
  EXPECT_EQ(p.units, std::filesystem::path("out/d.units.csv"));
  EXPECT_EQ(p.manifest, std::filesystem::path("out/d.manifest.json"));
}
