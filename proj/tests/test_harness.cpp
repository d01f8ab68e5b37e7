#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "dyadic/cli.hpp"
#include "dyadic/harness.hpp"
#include "oracles.hpp"

using namespace dyadic;

namespace {

RateExperiment small_experiment() {
  RateExperiment e;
  e.dgp = make_gaussian_regression("sin_additive", 1);
  e.rule.mode = BandwidthRule::Mode::pointwise_optimal;
  e.rule.c0 = 0.5;
  e.w0 = {0.5, 0.5};
  e.n_list = {20, 30, 45, 70};
  e.reps = 50;
  e.seed = 3;
  return e;
}

std::vector<std::string> csv_rows(const std::string& text) {
  std::vector<std::string> rows;
  std::size_t start = 0;
  while (start < text.size()) {
    const auto end = text.find('\n', start);
    rows.push_back(text.substr(start, end - start));
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return rows;
}

}  // namespace

TEST(Fit, ExactPowerLaw) {
  std::vector<std::pair<double, double>> pts;
  for (double n : {50.0, 100.0, 200.0, 400.0, 800.0}) pts.emplace_back(n, 3.0 * std::pow(n, -0.4));
  const auto f = fit_exponent(pts);
  EXPECT_NEAR(f.slope, -0.4, 1e-12);
  EXPECT_NEAR(f.intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(f.se, 0.0, 1e-12);
  EXPECT_NEAR(f.r2, 1.0, 1e-12);
  EXPECT_EQ(f.points_used, 5);
}

TEST(Fit, MatchesHandRegression) {
  // ln-ln points (0,0), (1,1), (2,1), (3,3): sxy = 4.5, sxx = 5, so slope 0.9 and intercept -0.1.
  std::vector<std::pair<double, double>> pts{{1.0, 1.0}, {std::exp(1.0), std::exp(1.0)}, {std::exp(2.0), std::exp(1.0)},
                                             {std::exp(3.0), std::exp(3.0)}};
  const auto f = fit_exponent(pts);
  EXPECT_NEAR(f.slope, 0.9, 1e-12);
  EXPECT_NEAR(f.intercept, -0.1, 1e-12);
  double sse = 0.0;
  const double lx[] = {0, 1, 2, 3}, ly[] = {0, 1, 1, 3};
  for (int i = 0; i < 4; ++i) sse += std::pow(ly[i] + 0.1 - 0.9 * lx[i], 2);
  EXPECT_NEAR(f.se, std::sqrt(sse / 2.0 / 5.0), 1e-12);
}

TEST(Fit, RejectsUnusablePoints) {
  std::vector<std::pair<double, double>> pts{{10, 1.0}, {20, 0.5}, {40, 0.0}, {80, NAN}, {160, 0.2}, {320, 0.1}};
  const auto f = fit_exponent(pts);
  EXPECT_EQ(f.points_used, 4);
  EXPECT_EQ(f.points_rejected, 2);
  EXPECT_THROW(fit_exponent({{1, 1}, {2, 1}, {3, 1}}), ConfigError);
  EXPECT_THROW(fit_exponent({{2, 1}, {2, 2}, {2, 3}, {2, 4}}), ConfigError);
}

TEST(Fit, StudentQuantiles) {
  EXPECT_DOUBLE_EQ(t_quantile_975(1), 12.706);
  EXPECT_DOUBLE_EQ(t_quantile_975(3), 3.182);
  EXPECT_NEAR(t_quantile_975(1000), 1.96, 0.01);
  EXPECT_TRUE(std::isinf(t_quantile_975(0)));
}

TEST(Rates, GoldenExperiment) {
  const std::string dir = DYADIC_TEST_DATA_DIR;
  const auto cfg = Config::parse(read_text_file(dir + "/golden_rates.cfg"));
  const auto fit = run_rate_experiment(rate_experiment_from_config(cfg));
  const auto golden = nlohmann::json::parse(read_text_file(dir + "/golden_rates.fit.json"));
  EXPECT_NEAR(fit.fit.slope, golden["fit"]["slope"].get<double>(), 1e-9);
  EXPECT_NEAR(fit.fit_vs_dyads.slope, golden["fit_vs_dyads"]["slope"].get<double>(), 1e-9);
  const auto got = csv_rows(rate_results_csv(fit));
  const auto want = csv_rows(read_text_file(dir + "/golden_rates.csv"));
  ASSERT_EQ(got.size(), want.size());
  EXPECT_EQ(got[0], want[0]);
  for (std::size_t r = 1; r < got.size(); ++r) {
    const auto a = split_fields(got[r]), b = split_fields(want[r]);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t c = 0; c < a.size(); ++c) {
      if (a[c].empty()) continue;
      const double x = parse_double(a[c], "golden"), y = parse_double(b[c], "golden");
      EXPECT_LE(oracle::relative_gap(x, y), 1e-9) << "row " << r << " col " << c;
    }
  }
}

TEST(Rates, DyadFitIsHalfTheUnitFit) {
  const auto fit = run_rate_experiment(small_experiment());
  ASSERT_TRUE(fit.valid);
  EXPECT_NEAR(fit.fit_vs_dyads.slope, fit.fit.slope / 2.0, 0.02 * std::fabs(fit.fit.slope) + 1e-3);
  EXPECT_EQ(fit.foil_vs_n, fit.fit_vs_dyads.slope);
  EXPECT_DOUBLE_EQ(fit.theory_exponent, -0.4);
  EXPECT_NEAR(fit.foil_vs_dw, -1.0 / 3.0, 1e-15);
  EXPECT_NEAR(fit.ci_half_width, t_quantile_975(2) * fit.fit.se, 1e-15);
}

TEST(Rates, PointwiseErrorsMatchDirectRecomputation) {
  auto e = small_experiment();
  e.reps = 50;
  const auto fit = run_rate_experiment(e);
  const auto kernel = make_kernel("gaussian", 2);
  const double truth = 2.0 * std::sin(0.5);
  const int n = e.n_list[0];
  const double h = bandwidth(e.rule, n);
  std::vector<double> err;
  for (int r = 0; r < e.reps; ++r) {
    const auto d = simulate(e.dgp, n, replication_seed(e.seed, n, r));
    const auto ref = oracle::nadaraya_watson("gaussian", n, 1, d.x, d.y, h, e.w0);
    err.push_back(std::fabs(ref.g - truth));
  }
  EXPECT_NEAR(fit.points[0].median_err, median_of(err), 1e-10);
  double s2 = 0.0;
  for (double v : err) s2 += v * v;
  EXPECT_NEAR(fit.points[0].rmse, std::sqrt(s2 / err.size()), 1e-10);
}

TEST(Rates, SupNormUsesFixedBox) {
  auto e = small_experiment();
  e.mode = ErrorMode::sup_norm;
  e.rule.mode = BandwidthRule::Mode::uniform_optimal;
  e.box_steps = 3;
  const auto grid = experiment_grid(e);
  EXPECT_EQ(grid.size(), 9u);
  const auto fit = run_rate_experiment(e);
  EXPECT_EQ(fit.points[0].n_evaluated, 50 * 9);
  // Sup error dominates the center-point error.
  auto p = small_experiment();
  p.rule.mode = BandwidthRule::Mode::uniform_optimal;
  const auto center = run_rate_experiment(p);
  for (std::size_t k = 0; k < fit.points.size(); ++k) EXPECT_GE(fit.points[k].mean_err, center.points[k].mean_err);
}

TEST(Rates, DegenerateWhenErrorsVanish) {
  auto e = small_experiment();
  e.dgp = make_graphon("constant:1.5", 1);
  const auto fit = run_rate_experiment(e);
  EXPECT_TRUE(fit.degenerate);
  EXPECT_FALSE(fit.note.empty());
}

TEST(Rates, InvalidWhenWindowsEmpty) {
  auto e = small_experiment();
  e.kernel_id = "boxcar";
  e.rule.mode = BandwidthRule::Mode::fixed;
  e.rule.c0 = 0.02;
  const auto fit = run_rate_experiment(e);
  EXPECT_FALSE(fit.valid);
  EXPECT_NE(fit.note.find("undefined"), std::string::npos);
  EXPECT_GT(fit.points[0].n_undefined, 5);
}

TEST(Rates, DeterministicAcrossThreadCounts) {
  const auto e = small_experiment();
  set_thread_cap(1);
  const auto a = run_rate_experiment(e);
  set_thread_cap(3);
  const auto b = run_rate_experiment(e);
  set_thread_cap(omp_get_num_procs());
  EXPECT_EQ(rate_results_csv(a), rate_results_csv(b));
  EXPECT_EQ(rate_fit_json(a).dump(), rate_fit_json(b).dump());
}

TEST(Rates, Validation) {
  auto e = small_experiment();
  e.n_list = {20, 30, 45};
  EXPECT_THROW(validate_experiment(e), ConfigError);
  e = small_experiment();
  e.n_list = {20, 30, 30, 70};
  EXPECT_THROW(validate_experiment(e), ConfigError);
  e = small_experiment();
  e.reps = 10;
  EXPECT_THROW(validate_experiment(e), ConfigError);
  e = small_experiment();
  e.w0 = {0.5};
  EXPECT_THROW(validate_experiment(e), ConfigError);
  e = small_experiment();
  e.rule.d_x = 2;
  EXPECT_THROW(validate_experiment(e), ConfigError);
  EXPECT_THROW(parse_metric("mode"), ConfigError);
}

TEST(Rates, OutputShapes) {
  const auto fit = run_rate_experiment(small_experiment());
  const auto rows = csv_rows(rate_results_csv(fit));
  EXPECT_EQ(rows[0], "N,h,median_err,mean_err,rmse,sd,n_undefined,n_evaluated,min_f_hat");
  EXPECT_EQ(rows.size(), 5u);
  const auto plot = csv_rows(rate_plot_data(fit));
  EXPECT_EQ(plot[0], "ln_N ln_err");
  const auto j = rate_fit_json(fit);
  for (const char* key : {"mode", "metric", "fit", "fit_vs_dyads", "theory_exponent", "foil_exponents",
                          "ci_half_width", "dimension_conclusive", "valid", "degenerate"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
}

TEST(DeltaN, UniformDensityInterior) {
  const auto spec = make_gaussian_regression("zero", 1);
  const auto data = simulate(spec, 2000, 1);
  const auto k = make_kernel("epanechnikov", 2);
  std::vector<AxisSpec> axes(2, AxisSpec{0.3, 0.7, 5});
  const auto grid = rectangular_grid(axes);
  EXPECT_NEAR(measure_delta_n(data, k, 0.1, grid), 1.0, 0.2);
  std::vector<AxisSpec> outside(2, AxisSpec{0.5, 1.5, 3});
  EXPECT_NEAR(measure_delta_n(data, k, 0.1, rectangular_grid(outside)), 0.0, 1e-12);
  EXPECT_THROW(measure_delta_n(data, k, 0.1, {}), ConfigError);
}

TEST(DeltaN, MatchesBruteForce) {
  const auto data = simulate(make_gaussian_regression("zero", 1), 10, 2);
  const auto k = make_kernel("gaussian", 2);
  std::vector<AxisSpec> axes(2, AxisSpec{0.2, 0.8, 4});
  const auto grid = rectangular_grid(axes);
  double ref = INFINITY;
  for (const auto& w : grid) ref = std::min(ref, oracle::nadaraya_watson("gaussian", 10, 1, data.x, data.y, 0.3, w).f);
  EXPECT_LE(oracle::relative_gap(measure_delta_n(data, k, 0.3, grid), ref), 1e-12);
}

TEST(VarianceScaling, RowsAreConsistent) {
  BandwidthRule rule;
  rule.c0 = 0.5;
  const auto k = make_kernel("epanechnikov", 2);
  const auto st = variance_study(make_gaussian_regression("sin_additive", 1), k, rule, {30, 60, 120, 240}, 60,
                                 {0.5, 0.5}, 9);
  ASSERT_EQ(st.rows.size(), 4u);
  for (const auto& r : st.rows) {
    EXPECT_NEAR(r.n_h, r.n_units * r.h, 1e-12);
    EXPECT_NEAR(r.scaled, r.var_psi * r.n_h, 1e-15);
  }
  EXPECT_LT(st.fit.slope, 0.0);
  EXPECT_GE(st.scaled_ratio, 1.0);
  EXPECT_THROW(variance_study(make_gaussian_regression("zero", 1), k, rule, {30, 60, 120, 240}, 1, {0.5, 0.5}, 1),
               ConfigError);
}
