#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "dyadic/cli.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace dyadic;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "dyadic");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / ("dyadic_cli_" + std::string(info->name()) + "_" + std::to_string(::getpid()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write_config(const std::string& name, const std::string& text) const {
    write_text_file(dir_ / name, text);
    return path(name);
  }
  std::size_t file_count() const {
    return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir_), fs::directory_iterator{}));
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, VersionExitsZero) {
  const auto r = run({"--version"});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find(kVersion), std::string::npos);
}

TEST_F(CliTest, MissingOrUnknownSubcommandIsConfigError) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"frobnicate"}).code, 2);
}

TEST_F(CliTest, UnknownConfigKeyIsNamed) {
  const auto cfg = write_config("bad.cfg", "simulate.n = 10\nsimulate.bogus = 3\noutput.path = " + path("d.csv") + "\n");
  const auto r = run({"simulate", "--config", cfg});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("simulate.bogus"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("d.csv")));
}

TEST_F(CliTest, BadValueNamesKey) {
  const auto r = run({"simulate", "--n", "ten", "--out", path("d.csv")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("simulate.n"), std::string::npos);
  const auto r2 = run({"estimate", "--data", path("d.csv"), "--bandwidth", "sideways:1"});
  EXPECT_EQ(r2.code, 2);
}

TEST_F(CliTest, MissingRequiredKeyIsNamed) {
  const auto r = run({"simulate", "--out", path("d.csv")});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("simulate.n"), std::string::npos);
}

TEST_F(CliTest, DuplicateConfigKeyRejected) {
  const auto cfg = write_config("dup.cfg", "seed = 1\nseed = 2\n");
  const auto r = run({"simulate", "--config", cfg});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("seed"), std::string::npos);
}

TEST_F(CliTest, ThreadsBelowOneRejected) {
  const auto r = run({"--threads", "0", "minimax", "--n", "10", "--reps", "2"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("--threads"), std::string::npos);
}

TEST_F(CliTest, InfeasibleTruncationIsAssumptionViolationAndWritesNothing) {
  const auto r = run({"diagnose", "--s", "2.1", "--n", "50", "--reps", "50", "--out", path("dom.csv")});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("assumption violation"), std::string::npos);
  EXPECT_EQ(file_count(), 0u);
}

TEST_F(CliTest, DegenerateFanoPackingIsAssumptionViolation) {
  const auto r = run({"minimax", "--variant", "fano", "--c0", "1", "--n", "100", "--reps", "2", "--out", path("m.json")});
  EXPECT_EQ(r.code, 3);
  EXPECT_EQ(file_count(), 0u);
}

TEST_F(CliTest, SimulateEstimateRoundTripMatchesLibrary) {
  const std::string data = path("d.csv");
  ASSERT_EQ(run({"simulate", "--n", "40", "--seed", "9", "--out", data}).code, 0);
  const auto paths = dataset_paths(data);
  ASSERT_TRUE(fs::exists(paths.pairs));
  ASSERT_TRUE(fs::exists(paths.units));
  ASSERT_TRUE(fs::exists(paths.manifest));

  const std::string est = path("est.csv");
  const auto r = run({"estimate", "--data", data, "--kernel", "epanechnikov", "--bandwidth", "pointwise:0.8", "--grid",
                      "0.3:0.7:3", "--out", est});
  ASSERT_EQ(r.code, 0) << r.err;

  // In-memory reference on the freshly simulated data; the CSV text carries
  // 17 significant digits so the reread values agree to rounding.
  const auto spec = make_gaussian_regression("sin_additive", 1, RegressorLaw::uniform(0.0, 1.0), 1.0, 1.0, {2.0, 1.0});
  const auto direct = simulate(spec, 40, 9);
  BandwidthRule rule;
  rule.mode = BandwidthRule::Mode::pointwise_optimal;
  rule.c0 = 0.8;
  rule.beta = 2.0;
  rule.d_x = 1;
  const auto kernel = make_kernel("epanechnikov", 2, 2.0);
  const std::vector<AxisSpec> axes(2, AxisSpec{0.3, 0.7, 3});
  const auto grid = rectangular_grid(axes);
  const auto ref = nw_estimate(direct, kernel, bandwidth(rule, 40), grid);

  std::istringstream lines(read_text_file(est));
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "w_1,w_2,f_hat,g_hat,defined");
  std::size_t p = 0;
  while (std::getline(lines, line)) {
    ASSERT_LT(p, grid.size());
    const auto f = split_fields(line);
    ASSERT_EQ(f.size(), 5u);
    EXPECT_NEAR(parse_double(f[0], "w1"), grid[p][0], 1e-15);
    EXPECT_NEAR(parse_double(f[1], "w2"), grid[p][1], 1e-15);
    const double fh = parse_double(f[2], "f"), gh = parse_double(f[3], "g");
    EXPECT_NEAR(fh, ref[p].f_hat, 1e-12 * std::max(1.0, std::abs(ref[p].f_hat)));
    if (ref[p].defined) {
      EXPECT_EQ(f[4], "1");
      EXPECT_NEAR(gh, ref[p].g_hat, 1e-12 * std::max(1.0, std::abs(ref[p].g_hat)));
    } else {
      EXPECT_EQ(f[4], "0");
    }
    ++p;
  }
  EXPECT_EQ(p, grid.size());
}

TEST_F(CliTest, EstimateWithoutOutPrintsCsv) {
  const std::string data = path("d.csv");
  ASSERT_EQ(run({"simulate", "--n", "12", "--out", data}).code, 0);
  const auto r = run({"estimate", "--data", data, "--grid", "0.5:0.5:1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("w_1,w_2,f_hat,g_hat,defined\n", 0), 0u);
}

TEST_F(CliTest, ManifestRecordsRun) {
  const std::string data = path("d.csv");
  ASSERT_EQ(run({"simulate", "--n", "10", "--seed", "77", "--g", "linear", "--out", data}).code, 0);
  const auto m = nlohmann::json::parse(read_text_file(dataset_paths(data).manifest));
  EXPECT_EQ(m["subcommand"], "simulate");
  EXPECT_EQ(m["artifact_version"], kVersion);
  EXPECT_EQ(m["seed"], "77");
  EXPECT_EQ(m["config"]["dgp.g"], "linear");
  EXPECT_EQ(m["config"]["simulate.n"], "10");
  ASSERT_EQ(m["outputs"].size(), 2u);
  EXPECT_EQ(m["outputs"][0], data);
  Config c;
  c.set("simulate.n", "10");
  c.set("seed", "77");
  c.set("dgp.g", "linear");
  c.set("output.path", data);
  EXPECT_EQ(m["config_hash"], c.hash_hex());
  for (const char* k : {"started_at", "finished_at"}) {
    const std::string t = m[k];
    EXPECT_EQ(t.size(), 20u);
    EXPECT_EQ(t.back(), 'Z');
  }
}

TEST_F(CliTest, ExplicitManifestPath) {
  const std::string mpath = path("sub/run.json");
  ASSERT_EQ(run({"--manifest", mpath, "minimax", "--n", "10", "--reps", "3", "--out", path("m.json")}).code, 0);
  EXPECT_TRUE(fs::exists(mpath));
  EXPECT_FALSE(fs::exists(path("m.manifest.json")));
}

TEST_F(CliTest, FlagsOverrideConfigValues) {
  const auto cfg = write_config("s.cfg", "simulate.n = 10\nseed = 3\noutput.path = " + path("a.csv") + "\n");
  ASSERT_EQ(run({"simulate", "--config", cfg, "--n", "14", "--out", path("b.csv")}).code, 0);
  EXPECT_FALSE(fs::exists(path("a.csv")));
  EXPECT_EQ(read_dataset(dataset_paths(path("b.csv"))).n_units, 14);
}

TEST(ConfigHash, StableUnderOrderAndWhitespace) {
  const auto a = Config::parse("seed = 1\nkernel=gaussian\n# note\n");
  const auto b = Config::parse("  kernel = gaussian   \n\nseed=1 # trailing\n");
  EXPECT_EQ(a.hash(), b.hash());
  const auto c = Config::parse("seed = 2\nkernel = gaussian\n");
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash_hex().size(), 16u);
}

TEST(ConfigHash, EmptyIsFnvOffset) { EXPECT_EQ(Config{}.hash(), 0xcbf29ce484222325ULL); }

TEST(ConfigHash, SingleByteByHand) {
  // Lines are "k=v\n"; fold FNV-1a by hand.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : std::string("a=b\n")) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  EXPECT_EQ(Config::parse("a = b").hash(), h);
}

TEST_F(CliTest, MinimaxRunsAreByteIdentical) {
  ASSERT_EQ(run({"minimax", "--n", "10,20", "--reps", "5", "--seed", "4", "--out", path("a.json")}).code, 0);
  ASSERT_EQ(run({"minimax", "--n", "10,20", "--reps", "5", "--seed", "4", "--out", path("b.json")}).code, 0);
  EXPECT_EQ(read_text_file(path("a.json")), read_text_file(path("b.json")));
}

TEST_F(CliTest, BinaryExitCodes) {
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  const std::string cli = DYADIC_CLI_PATH;
  EXPECT_EQ(status(cli + " --version"), 0);
  EXPECT_EQ(status(cli + " nonsense"), 2);
  EXPECT_EQ(status(cli + " diagnose --s 2.1 --n 50 --reps 50"), 3);
  EXPECT_EQ(status("DYADIC_THREADS=1 " + cli + " minimax --n 10 --reps 3"), 0);
}

TEST(ConfigLists, LongListsWithSpacesParse) {
  const auto c = Config::parse("n = 50, 100, 200, 400, 800, 1600\nw = 0.25, 0.5, 0.75, 1.125, 2.5\n");
  EXPECT_EQ(c.int_list("n"), (std::vector<int>{50, 100, 200, 400, 800, 1600}));
  EXPECT_EQ(c.num_list("w"), (std::vector<double>{0.25, 0.5, 0.75, 1.125, 2.5}));
  EXPECT_THROW(c.int_list("w"), ConfigError);
}
