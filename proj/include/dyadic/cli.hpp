#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "dyadic/config.hpp"
#include "dyadic/dataset_io.hpp"
#include "dyadic/decomposition.hpp"
#include "dyadic/dgp.hpp"
#include "dyadic/error.hpp"
#include "dyadic/estimator.hpp"
#include "dyadic/harness.hpp"
#include "dyadic/kernels.hpp"
#include "dyadic/minimax.hpp"
#include "dyadic/parallel.hpp"

namespace dyadic {

inline constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// Builders from configuration
// ---------------------------------------------------------------------------

inline const std::set<std::string>& dgp_keys() {
  static const std::set<std::string> k{"dgp.kind",      "dgp.g",      "dgp.d_x",      "dgp.law",
                                       "dgp.law.lo",    "dgp.law.hi", "dgp.law.mean", "dgp.law.sd",
                                       "dgp.unit_scale", "dgp.pair_scale", "dgp.beta",  "dgp.l"};
  return k;
}

inline std::set<std::string> with_dgp_keys(std::set<std::string> keys) {
  keys.insert(dgp_keys().begin(), dgp_keys().end());
  return keys;
}

inline RegressorLaw law_from_config(const Config& c) {
  const std::string law = c.str("dgp.law", "uniform");
  const double lo = c.num("dgp.law.lo", 0.0), hi = c.num("dgp.law.hi", 1.0);
  if (!(hi > lo)) throw ConfigError("config key 'dgp.law.hi' must exceed 'dgp.law.lo'");
  if (law == "uniform") return RegressorLaw::uniform(lo, hi);
  if (law == "truncnormal") {
    const double sd = c.num("dgp.law.sd", 0.25);
    if (!(sd > 0.0)) throw ConfigError("config key 'dgp.law.sd' must be positive");
    return RegressorLaw::truncated_normal(c.num("dgp.law.mean", 0.5 * (lo + hi)), sd, lo, hi);
  }
  throw ConfigError("config key 'dgp.law': unknown law '" + law + "'");
}

inline DgpSpec dgp_from_config(const Config& c) {
  const std::string kind = c.str("dgp.kind", "theorem1");
  const long d_x = c.integer("dgp.d_x", 1);
  if (d_x < 1 || d_x > 8) throw ConfigError("config key 'dgp.d_x' must be in 1..8");
  const HolderMeta holder{c.num("dgp.beta", 2.0), c.num("dgp.l", 1.0)};
  if (!(holder.beta > 0.0) || !(holder.l_const > 0.0)) throw ConfigError("config keys 'dgp.beta', 'dgp.l' must be positive");
  if (kind == "theorem1" || kind == "gaussian-regression") {
    try {
      return make_gaussian_regression(c.str("dgp.g", "sin_additive"), static_cast<int>(d_x), law_from_config(c),
                                      c.num("dgp.unit_scale", 1.0), c.num("dgp.pair_scale", 1.0), holder);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config key 'dgp.g': ") + e.what());
    }
  }
  if (kind == "graphon") {
    if (c.has("dgp.unit_scale") || c.has("dgp.pair_scale")) {
      throw ConfigError("config key 'dgp.unit_scale'/'dgp.pair_scale' only applies to dgp.kind = theorem1");
    }
    try {
      return make_graphon(c.str("dgp.g"), static_cast<int>(d_x), law_from_config(c), holder);
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("config key 'dgp.g': ") + e.what());
    }
  }
  throw ConfigError("config key 'dgp.kind': unknown kind '" + kind + "' (theorem1 or graphon)");
}

/// "mode:c0" or "exponent:c0:e".
inline BandwidthRule bandwidth_from_config(const Config& c, int d_x, double default_beta) {
  const std::string spec = c.str("bandwidth", "uniform:1");
  const auto f = split_fields(spec, ':');
  BandwidthRule rule;
  try {
    rule.mode = parse_bandwidth_mode(f[0]);
    if (f.size() < 2) throw ConfigError("missing c0");
    rule.c0 = parse_double(f[1], "c0");
    if (rule.mode == BandwidthRule::Mode::custom_exponent) {
      if (f.size() != 3) throw ConfigError("exponent mode needs exponent:c0:e");
      rule.exponent = parse_double(f[2], "exponent");
    } else if (f.size() != 2) {
      throw ConfigError("expected mode:c0");
    }
  } catch (const ConfigError& e) {
    throw ConfigError("config key 'bandwidth': " + std::string(e.what()) + " in '" + spec + "'");
  }
  if (!(rule.c0 > 0.0)) throw ConfigError("config key 'bandwidth': c0 must be positive");
  rule.beta = c.num("bandwidth.beta", default_beta);
  if (!(rule.beta > 0.0)) throw ConfigError("config key 'bandwidth.beta' must be positive");
  rule.d_x = d_x;
  return rule;
}

inline KernelSpec kernel_from_config(const Config& c, int d_x, double beta) {
  try {
    return make_kernel(c.str("kernel", "gaussian"), 2 * d_x, beta);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config key 'kernel': ") + e.what());
  }
}

/// "lo:hi:steps" for every coordinate, or a comma list with one entry per coordinate.
inline std::vector<AxisSpec> axes_from_string(const std::string& key, const std::string& text, int coords) {
  std::vector<AxisSpec> axes;
  for (auto part : split_fields(text, ',')) {
    const auto f = split_fields(part, ':');
    if (f.size() != 3) throw ConfigError("config key '" + key + "': expected min:max:steps, got '" + std::string(part) + "'");
    try {
      axes.push_back(AxisSpec{parse_double(f[0], key), parse_double(f[1], key),
                              static_cast<int>(parse_integer(f[2], key))});
    } catch (const ConfigError&) {
      throw ConfigError("config key '" + key + "': bad axis '" + std::string(part) + "'");
    }
    if (axes.back().steps < 1 || axes.back().hi < axes.back().lo) {
      throw ConfigError("config key '" + key + "': axis needs steps >= 1 and max >= min");
    }
  }
  if (axes.size() == 1) axes.assign(coords, axes.front());
  if (static_cast<int>(axes.size()) != coords) {
    throw ConfigError("config key '" + key + "': need 1 or " + std::to_string(coords) + " axes");
  }
  return axes;
}

inline std::vector<double> point_from_config(const Config& c, const std::string& key, int coords, double fallback) {
  if (!c.has(key)) return std::vector<double>(coords, fallback);
  auto v = c.num_list(key);
  if (v.size() == 1) v.assign(coords, v.front());
  if (static_cast<int>(v.size()) != coords) {
    throw ConfigError("config key '" + key + "': need 1 or " + std::to_string(coords) + " coordinates");
  }
  return v;
}

inline const std::set<std::string>& rates_keys() {
  static const std::set<std::string> k = with_dgp_keys({"kernel", "bandwidth", "bandwidth.beta", "rates.mode",
                                                        "rates.w0", "rates.box", "rates.n_list", "rates.reps",
                                                        "rates.metric", "seed", "output.prefix"});
  return k;
}

inline RateExperiment rate_experiment_from_config(const Config& c) {
  c.require_known(rates_keys());
  RateExperiment e;
  e.dgp = dgp_from_config(c);
  e.kernel_id = c.str("kernel", "gaussian");
  e.rule = bandwidth_from_config(c, e.dgp.d_x, e.dgp.holder.beta);
  kernel_from_config(c, e.dgp.d_x, e.rule.beta);
  const std::string mode = c.str("rates.mode", "pointwise");
  if (mode == "pointwise") {
    e.mode = ErrorMode::pointwise;
  } else if (mode == "sup-norm" || mode == "sup_norm") {
    e.mode = ErrorMode::sup_norm;
  } else {
    throw ConfigError("config key 'rates.mode': expected pointwise or sup-norm, got '" + mode + "'");
  }
  e.w0 = point_from_config(c, "rates.w0", 2 * e.dgp.d_x, 0.5);
  const auto box = axes_from_string("rates.box", c.str("rates.box", "0.2:0.8:9"), 1);
  e.box_lo = box[0].lo;
  e.box_hi = box[0].hi;
  e.box_steps = box[0].steps;
  e.n_list = c.int_list("rates.n_list");
  e.reps = static_cast<int>(c.integer("rates.reps", 100));
  e.seed = c.seed("seed", 1);
  try {
    e.metric = parse_metric(c.str("rates.metric", "median"));
  } catch (const ConfigError& err) {
    throw ConfigError(std::string("config key 'rates.metric': ") + err.what());
  }
  try {
    validate_experiment(e);
  } catch (const ConfigError& err) {
    throw ConfigError(std::string("config key 'rates.*': ") + err.what());
  }
  return e;
}

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunContext {
  std::string subcommand;
  Config config;
  std::string started_at;
  std::optional<std::string> manifest_path;
};

inline void write_outputs_with_manifest(const RunContext& ctx, const std::vector<std::pair<std::filesystem::path, std::string>>& files,
                                        const std::filesystem::path& default_manifest) {
  for (const auto& [path, content] : files) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    write_text_file(path, content);
  }
  nlohmann::ordered_json m;
  m["subcommand"] = ctx.subcommand;
  m["artifact_version"] = kVersion;
  m["config_hash"] = ctx.config.hash_hex();
  m["seed"] = ctx.config.str("seed", "");
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : ctx.config.values()) cfg[k] = v;
  m["config"] = cfg;
  m["started_at"] = ctx.started_at;
  m["finished_at"] = utc_timestamp();
  nlohmann::ordered_json outs = nlohmann::ordered_json::array();
  for (const auto& f : files) outs.push_back(f.first.string());
  m["outputs"] = outs;
  const std::filesystem::path mpath = ctx.manifest_path ? std::filesystem::path(*ctx.manifest_path) : default_manifest;
  if (mpath.has_parent_path()) std::filesystem::create_directories(mpath.parent_path());
  write_text_file(mpath, m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

inline int run_simulate(const RunContext& ctx, std::ostream& out) {
  const Config& c = ctx.config;
  c.require_known(with_dgp_keys({"simulate.n", "seed", "output.path"}));
  const DgpSpec spec = dgp_from_config(c);
  const long n = c.integer("simulate.n");
  if (n < 2) throw ConfigError("config key 'simulate.n' must be >= 2");
  const auto data = simulate(spec, static_cast<int>(n), c.seed("seed", 1));
  const auto paths = dataset_paths(c.str("output.path"));
  write_outputs_with_manifest(ctx, {{paths.pairs, pairs_csv(data)}, {paths.units, units_csv(data)}}, paths.manifest);
  out << "wrote " << paths.pairs.string() << " and " << paths.units.string() << " (N = " << n << ")\n";
  return 0;
}

inline std::string estimate_csv(const std::vector<std::vector<double>>& grid, const std::vector<NwPoint>& est) {
  std::string s;
  const std::size_t d = grid.empty() ? 0 : grid.front().size();
  for (std::size_t k = 1; k <= d; ++k) s += "w_" + std::to_string(k) + ",";
  s += "f_hat,g_hat,defined\n";
  for (std::size_t p = 0; p < grid.size(); ++p) {
    for (double v : grid[p]) s += format_double(v) + ",";
    s += format_double(est[p].f_hat) + "," + format_double(est[p].g_hat) + "," + (est[p].defined ? "1" : "0") + "\n";
  }
  return s;
}

inline int run_estimate(const RunContext& ctx, std::ostream& out) {
  const Config& c = ctx.config;
  c.require_known({"data.path", "kernel", "bandwidth", "bandwidth.beta", "grid", "output.path"});
  const auto data = read_dataset(dataset_paths(c.str("data.path")));
  const auto rule = bandwidth_from_config(c, data.d_x, 2.0);
  const auto kernel = kernel_from_config(c, data.d_x, rule.beta);
  if (data.n_units < 3) throw ConfigError("config key 'data.path': estimation needs N >= 3");
  const double h = bandwidth(rule, data.n_units);
  const auto axes = axes_from_string("grid", c.str("grid", "0.2:0.8:9"), 2 * data.d_x);
  const auto grid = rectangular_grid(axes);
  const auto est = nw_estimate(data, kernel, h, grid);
  const std::string csv = estimate_csv(grid, est);
  if (c.has("output.path")) {
    const std::filesystem::path p = c.str("output.path");
    std::filesystem::path m = p;
    m.replace_extension(".manifest.json");
    write_outputs_with_manifest(ctx, {{p, csv}}, m);
    out << "wrote " << p.string() << " (" << grid.size() << " points, h = " << format_double(h) << ")\n";
  } else {
    out << csv;
  }
  return 0;
}

inline int run_rates(const RunContext& ctx, std::ostream& out) {
  const auto exp = rate_experiment_from_config(ctx.config);
  const std::string prefix = ctx.config.str("output.prefix", "rates");
  const auto fit = run_rate_experiment(exp);
  auto fit_json = rate_fit_json(fit);
  write_outputs_with_manifest(ctx,
                              {{prefix + ".csv", rate_results_csv(fit)},
                               {prefix + ".fit.json", fit_json.dump(2) + "\n"},
                               {prefix + ".plot.dat", rate_plot_data(fit)}},
                              prefix + ".manifest.json");
  out << "slope " << format_double(fit.fit.slope) << " (theory " << format_double(fit.theory_exponent)
      << "), valid = " << (fit.valid ? "true" : "false") << "\n";
  return 0;
}

inline nlohmann::ordered_json minimax_entry(const MinimaxConstruction& con, int reps, std::uint64_t seed,
                                            std::size_t holder_pairs) {
  nlohmann::ordered_json j;
  j["n"] = con.n_units;
  j["h"] = con.h;
  j["n_h"] = con.n_units * std::pow(con.h, con.d_x);
  HolderCheckOptions hopt;
  hopt.n_pairs = holder_pairs;
  hopt.seed = seed;
  const auto sel = build_selection(con.n_units);
  const auto x = detail::draw_units(con, replication_seed(seed, con.n_units, 0));
  if (con.variant == MinimaxConstruction::Variant::two_point) {
    const auto kl = kl_two_point(con, reps, seed);
    j["kl_mean"] = kl.kl_mean;
    j["kl_se"] = kl.kl_se;
    j["bound"] = kl.bound;
    j["kl_within_bound"] = kl.kl_mean <= kl.bound + 3.0 * kl.kl_se;
    const auto sep = separation_check(con, 1, 0, separation_grid(con, 1, 0));
    j["separation"] = {{"gap", sep.gap}, {"required", sep.required}, {"pass", sep.pass}};
    Eigen::VectorXd k(con.n_units);
    for (int i = 0; i < con.n_units; ++i) k(i) = detail::unit_factor(con, 1, x[i]);
    j["woodbury_max_gap"] = woodbury_gap(sel, k).gap;
  } else {
    const auto f = fano_kl_average(con, reps, seed);
    j["m"] = f.m;
    j["hypotheses"] = f.hypotheses;
    j["kl_mean"] = f.avg_kl;
    j["kl_se"] = f.avg_kl_se;
    j["bound"] = f.bound;
    j["kl_within_bound"] = f.avg_kl <= f.bound + 3.0 * f.avg_kl_se;
    j["alpha_implied"] = f.alpha_implied;
    j["alpha_bound"] = f.alpha_bound;
    j["log_m"] = f.log_m;
    j["log_m_required"] = f.log_m_required;
    j["packing_ok"] = f.packing_ok;
    double min_gap = std::numeric_limits<double>::infinity();
    double required = 0.0;
    bool pass = true;
    double worst_gap = 0.0;
    for (int a = 1; a <= f.hypotheses; ++a) {
      for (int b = a + 1; b <= f.hypotheses; ++b) {
        const auto sep = separation_check(con, a, b, separation_grid(con, a, b));
        min_gap = std::min(min_gap, sep.gap);
        required = sep.required;
        pass = pass && sep.pass;
      }
      Eigen::VectorXd k(con.n_units);
      for (int i = 0; i < con.n_units; ++i) k(i) = detail::unit_factor(con, a, x[i]);
      worst_gap = std::max(worst_gap, woodbury_gap(sel, k).gap);
    }
    j["separation"] = {{"gap", min_gap}, {"required", required}, {"pass", pass}};
    j["woodbury_max_gap"] = worst_gap;
  }
  const auto hc = hypothesis_holder_check(con, 1, hopt);
  j["holder_pass"] = hc.pass;
  j["holder_ratio"] = hc.max_violation_ratio;
  return j;
}

inline int run_minimax(const RunContext& ctx, std::ostream& out) {
  const Config& c = ctx.config;
  c.require_known({"minimax.variant", "minimax.beta", "minimax.l", "minimax.c0", "minimax.d_x", "minimax.n_list",
                   "minimax.reps", "minimax.holder_pairs", "seed", "output.path"});
  MinimaxConstruction::Variant variant;
  try {
    variant = parse_variant(c.str("minimax.variant", "two-point"));
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("config key 'minimax.variant': ") + e.what());
  }
  const double beta = c.num("minimax.beta", 2.0), l = c.num("minimax.l", 1.0), c0 = c.num("minimax.c0", 1.0);
  if (!(beta > 0.0) || beta > 4.0) throw ConfigError("config key 'minimax.beta' must be in (0, 4]");
  if (!(l > 0.0)) throw ConfigError("config key 'minimax.l' must be positive");
  if (!(c0 > 0.0)) throw ConfigError("config key 'minimax.c0' must be positive");
  const long d_x = c.integer("minimax.d_x", 1);
  if (d_x < 1 || d_x > 4) throw ConfigError("config key 'minimax.d_x' must be in 1..4");
  const auto n_list = c.int_list("minimax.n_list");
  for (int n : n_list) {
    if (n < 3) throw ConfigError("config key 'minimax.n_list': entries must be >= 3");
  }
  const long reps = c.integer("minimax.reps", 200);
  if (reps < 2) throw ConfigError("config key 'minimax.reps' must be >= 2");
  const long pairs = c.integer("minimax.holder_pairs", 2000);
  if (pairs < 1) throw ConfigError("config key 'minimax.holder_pairs' must be positive");
  const std::uint64_t seed = c.seed("seed", 1);

  nlohmann::ordered_json report;
  report["variant"] = std::string(variant_name(variant));
  report["beta"] = beta;
  report["l"] = l;
  report["c0"] = c0;
  report["d_x"] = d_x;
  report["reps"] = reps;
  report["seed"] = seed;
  nlohmann::ordered_json results = nlohmann::ordered_json::array();
  for (int n : n_list) {
    const auto con = make_construction(variant, beta, l, c0, static_cast<int>(d_x), n);
    results.push_back(minimax_entry(con, static_cast<int>(reps), seed, static_cast<std::size_t>(pairs)));
  }
  report["results"] = results;
  const std::string text = report.dump(2) + "\n";
  if (c.has("output.path")) {
    const std::filesystem::path p = c.str("output.path");
    std::filesystem::path m = p;
    m.replace_extension(".manifest.json");
    write_outputs_with_manifest(ctx, {{p, text}}, m);
    out << "wrote " << p.string() << "\n";
  } else {
    out << text;
  }
  return 0;
}

inline int run_diagnose(const RunContext& ctx, std::ostream& out) {
  const Config& c = ctx.config;
  c.require_known(with_dgp_keys({"kernel", "bandwidth", "bandwidth.beta", "diagnose.n_list", "diagnose.reps",
                                 "diagnose.w", "diagnose.projection", "diagnose.tau", "diagnose.s", "diagnose.fixed_x_seed", "seed",
                                 "output.path"}));
  const auto spec = dgp_from_config(c);
  const auto rule = bandwidth_from_config(c, spec.d_x, spec.holder.beta);
  const auto kernel = kernel_from_config(c, spec.d_x, rule.beta);
  const auto n_list = c.int_list("diagnose.n_list");
  for (int n : n_list) {
    if (n < 3) throw ConfigError("config key 'diagnose.n_list': entries must be >= 3");
  }
  const long reps = c.integer("diagnose.reps", 100);
  if (reps < 50) throw ConfigError("config key 'diagnose.reps' must be >= 50");
  const auto w = point_from_config(c, "diagnose.w", 2 * spec.d_x, 0.5);
  DominanceOptions opts;
  const std::string proj = c.str("diagnose.projection", spec.kind == DgpKind::gaussian_regression ? "model" : "empirical");
  if (proj == "model") {
    opts.projection = Projection::model;
  } else if (proj == "empirical") {
    opts.projection = Projection::empirical;
  } else {
    throw ConfigError("config key 'diagnose.projection': expected model or empirical, got '" + proj + "'");
  }
  if (opts.projection == Projection::model && spec.kind != DgpKind::gaussian_regression) {
    throw ConfigError("config key 'diagnose.projection': model projection needs dgp.kind = theorem1");
  }
  opts.tau = c.num("diagnose.tau", std::numeric_limits<double>::infinity());
  if (!(opts.tau > 0.0)) throw ConfigError("config key 'diagnose.tau' must be positive");
  if (c.has("diagnose.fixed_x_seed")) opts.fixed_regressor_seed = c.seed("diagnose.fixed_x_seed", 0);
  // With a moment order s the threshold follows the truncation rule at each N;
  // all thresholds are computed before any simulation so a refusal is immediate.
  std::vector<double> taus(n_list.size(), opts.tau);
  if (c.has("diagnose.s")) {
    if (c.has("diagnose.tau")) throw ConfigError("config keys 'diagnose.s' and 'diagnose.tau' are exclusive");
    TruncationRule tr;
    tr.s = c.num("diagnose.s");
    if (!(tr.s > 2.0)) throw ConfigError("config key 'diagnose.s' must exceed 2");
    for (std::size_t k = 0; k < n_list.size(); ++k) {
      taus[k] = truncation_threshold(tr, n_list[k], bandwidth(rule, n_list[k]), spec.d_x);
    }
  }
  std::vector<DominanceRow> rows;
  for (std::size_t k = 0; k < n_list.size(); ++k) {
    opts.tau = taus[k];
    const auto r = variance_dominance(spec, kernel, rule, {n_list[k]}, static_cast<int>(reps), w, c.seed("seed", 1), opts);
    rows.push_back(r.front());
  }
  std::string csv = "N,var_t1,var_t2,ratio,n_used,n_excluded\n";
  for (const auto& r : rows) {
    csv += std::to_string(r.n_units) + "," + format_double(r.var_t1) + "," + format_double(r.var_t2) + "," +
           format_double(r.ratio) + "," + std::to_string(r.n_used) + "," + std::to_string(r.n_excluded) + "\n";
  }
  if (c.has("output.path")) {
    const std::filesystem::path p = c.str("output.path");
    std::filesystem::path m = p;
    m.replace_extension(".manifest.json");
    write_outputs_with_manifest(ctx, {{p, csv}}, m);
    out << "wrote " << p.string() << "\n";
  } else {
    out << csv;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

struct FlagBinding {
  const char* flag;
  const char* key;
  const char* help;
};

/// Exit codes: 0 success, 1 runtime failure, 2 configuration error, 3 assumption violation.
inline int dispatch(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Dyadic Nadaraya-Watson regression: simulation, estimation, rate studies and lower-bound checks",
               "dyadic"};
  app.set_version_flag("--version", std::string("dyadic ") + kVersion);
  app.require_subcommand(1);
  app.fallthrough();
  int threads = 0;
  std::string manifest;
  app.add_option("--threads", threads, "Cap on worker threads (overrides DYADIC_THREADS)");
  app.add_option("--manifest", manifest, "Path of the run manifest (default: next to the outputs)");

  const std::vector<FlagBinding> dgp_flags = {
      {"--dgp", "dgp.kind", "Model kind: theorem1 or graphon"},
      {"--g", "dgp.g", "Regression function or graphon id"},
      {"--dx", "dgp.d_x", "Regressor dimension"},
      {"--law", "dgp.law", "Regressor law: uniform or truncnormal"},
      {"--unit-scale", "dgp.unit_scale", "Scale of the unit effects"},
      {"--pair-scale", "dgp.pair_scale", "Scale of the pair effects"},
  };
  struct Sub {
    const char* name;
    const char* help;
    std::vector<FlagBinding> flags;
    bool with_dgp;
    int (*run)(const RunContext&, std::ostream&);
  };
  const std::vector<Sub> subs = {
      {"simulate", "Draw a dyadic dataset",
       {{"--n", "simulate.n", "Number of units"}, {"--seed", "seed", "Seed"}, {"--out", "output.path", "Pair-list CSV path"}},
       true, run_simulate},
      {"estimate", "Nadaraya-Watson estimates on a grid",
       {{"--data", "data.path", "Pair-list CSV written by simulate"},
        {"--kernel", "kernel", "Kernel id"},
        {"--bandwidth", "bandwidth", "Bandwidth rule mode:c0 (pointwise, uniform, fixed) or exponent:c0:e"},
        {"--beta", "bandwidth.beta", "Smoothness used by the bandwidth rule"},
        {"--grid", "grid", "min:max:steps for all coordinates, or a comma list per coordinate"},
        {"--out", "output.path", "Output CSV (stdout if omitted)"}},
       false, run_estimate},
      {"rates", "Monte Carlo rate experiment",
       {{"--seed", "seed", "Master seed"},
        {"--reps", "rates.reps", "Replications per N"},
        {"--n", "rates.n_list", "Comma-separated N list"},
        {"--out", "output.prefix", "Output prefix"}},
       true, run_rates},
      {"minimax", "Lower-bound construction checks",
       {{"--variant", "minimax.variant", "two-point or fano"},
        {"--beta", "minimax.beta", "Smoothness beta"},
        {"--l", "minimax.l", "Holder constant L"},
        {"--c0", "minimax.c0", "Bandwidth constant c0"},
        {"--dx", "minimax.d_x", "Regressor dimension"},
        {"--n", "minimax.n_list", "Comma-separated N list"},
        {"--reps", "minimax.reps", "Monte Carlo draws of X"},
        {"--seed", "seed", "Seed"},
        {"--out", "output.path", "Output JSON (stdout if omitted)"}},
       false, run_minimax},
      {"diagnose", "Hoeffding variance-dominance table",
       {{"--kernel", "kernel", "Kernel id"},
        {"--bandwidth", "bandwidth", "Bandwidth rule mode:c0"},
        {"--n", "diagnose.n_list", "Comma-separated N list"},
        {"--reps", "diagnose.reps", "Replications per N"},
        {"--w", "diagnose.w", "Evaluation point"},
        {"--projection", "diagnose.projection", "model or empirical"},
        {"--tau", "diagnose.tau", "Truncation threshold"},
        {"--s", "diagnose.s", "Moment order; derives the threshold from the truncation rule"},
        {"--seed", "seed", "Seed"},
        {"--out", "output.path", "Output CSV (stdout if omitted)"}},
       true, run_diagnose},
  };

  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, std::string> config_paths;
  std::map<std::string, CLI::App*> apps;
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    apps[s.name] = sub;
    sub->add_option("--config", config_paths[s.name], "Key-value config file");
    auto bind = [&](const FlagBinding& b) { sub->add_option(b.flag, values[s.name][b.key], b.help); };
    for (const auto& b : s.flags) bind(b);
    if (s.with_dgp) {
      for (const auto& b : dgp_flags) bind(b);
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return 0;
    if (dynamic_cast<const CLI::RequiredError*>(&e) || dynamic_cast<const CLI::ExtrasError*>(&e)) {
      err << app.help();
    }
    return 2;
  }

  try {
    if (app.count("--threads")) {
      if (threads < 1) throw ConfigError("--threads must be >= 1");
      set_thread_cap(threads);
    } else {
      apply_thread_env();
    }
    for (const auto& s : subs) {
      CLI::App* sub = apps[s.name];
      if (!sub->parsed()) continue;
      RunContext ctx;
      ctx.subcommand = s.name;
      ctx.started_at = utc_timestamp();
      if (app.count("--manifest")) ctx.manifest_path = manifest;
      if (sub->count("--config")) ctx.config = Config::parse(read_text_file(config_paths[s.name]));
      auto overlay = [&](const FlagBinding& b) {
        if (sub->count(b.flag)) ctx.config.set(b.key, values[s.name][b.key]);
      };
      for (const auto& b : s.flags) overlay(b);
      if (s.with_dgp) {
        for (const auto& b : dgp_flags) overlay(b);
      }
      return s.run(ctx, out);
    }
    err << app.help();
    return 2;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const AssumptionViolation& e) {
    err << "assumption violation: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace dyadic
