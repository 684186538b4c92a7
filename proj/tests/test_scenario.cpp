#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "stringsim/errors.hpp"
#include "stringsim/scenario.hpp"

using namespace stringsim;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Message of the ConfigError raised by parsing `text`, or "" if none.
std::string config_error(const std::string& text) {
  try {
    parse_scenario(text, "case.toml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* kSmall = R"(
name = "small"
[model]
L = 6
g = 0.75
h = [0.0, 0.6]
environment = "string"
[protocol]
t_max = 1.0
dt = 0.1
shots = 40
seed = 9
[outputs]
string_breaking = true
thermal = true
twobody = true
[analysis]
compare_time = 1.0
bulk_radius = 1
)";

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "stringsim-test-scenario" / name;
  fs::remove_all(p);
  return p;
}

}  // namespace

TEST(ParseScenario, DefaultsAndLists) {
  const Scenario s = parse_scenario("name = \"x\"\n[model]\ng = 0.5\n");
  EXPECT_EQ(s.L, 13);
  EXPECT_EQ(s.beta, 0.78);
  EXPECT_EQ(s.g, std::vector<double>{0.5});
  EXPECT_EQ(s.h, std::vector<double>{0.0});
  EXPECT_EQ(s.environment, Environment::kNone);
  EXPECT_EQ(s.protocol.shots, 0);

  const Scenario t = parse_scenario(kSmall);
  EXPECT_EQ(t.L, 6);
  EXPECT_EQ(t.h, (std::vector<double>{0.0, 0.6}));
  EXPECT_EQ(t.protocol.seed, 9u);
  EXPECT_TRUE(t.outputs.twobody);
  EXPECT_EQ(t.analysis.bulk_radius, 1);
}

TEST(ParseScenario, ErrorsNameTheFieldAndLine) {
  EXPECT_EQ(config_error("name = \"x\"\n[model]\ng = 0.5\nfoo = 1\n"), "case.toml:4: model.foo: unknown key");
  EXPECT_EQ(config_error("name = \"x\"\n[model]\ng = \"big\"\n"), "case.toml:3: model.g: expected a number");
  EXPECT_EQ(config_error("name = \"x\"\n[model]\ng = 0.5\nL = 40\n"), "case.toml:4: model.L: must lie in [2, 24]");
  EXPECT_EQ(config_error("name = \"x\"\n[model]\n"), "case.toml:2: model.g: required key is missing");
  EXPECT_NE(config_error("[model]\ng = 0.5\n").find("name: required key is missing"), std::string::npos);
  EXPECT_EQ(config_error("name = \"x\"\n[model]\ng = 0.5\n[protocol]\nt_max = 1.05\ndt = 0.1\n"),
            "case.toml:5: protocol.t_max: must be an integer multiple of dt");
  EXPECT_EQ(config_error("name = \"x\"\n[model]\ng = 0.5\n[outputs]\ntwobody = true\n"),
            "case.toml:5: outputs.twobody: needs the string environment");
  EXPECT_EQ(config_error("name = \"x\"\n[model]\ng = 0.5\nenvironment = \"box\"\n"),
            "case.toml:4: model.environment: must be one of none, charge, string (got 'box')");
  // Syntax errors carry the parser's line.
  EXPECT_EQ(config_error("name = \"x\"\n[model\n").rfind("case.toml:2: ", 0), 0u);
}

TEST(ParseScenario, BundledScenariosParse) {
  for (const char* file : {"fig2_bloch.toml", "fig3_string.toml"}) {
    const Scenario s = load_scenario(fs::path(STRINGSIM_SCENARIO_DIR) / file);
    EXPECT_EQ(s.L, 13) << file;
    EXPECT_EQ(s.protocol.shots, 300) << file;
  }
  EXPECT_THROW(load_scenario("/nonexistent/x.toml"), ConfigError);
}

TEST(Grid, ProductInDeclarationOrder) {
  Scenario s;
  s.g = {0.1, 0.2};
  s.h = {0.0, 0.3, 0.6};
  const auto grid = scenario_grid(s);
  ASSERT_EQ(grid.size(), 6u);
  EXPECT_EQ(grid[1].g, 0.1);
  EXPECT_EQ(grid[1].h, 0.3);
  EXPECT_EQ(grid[3].g, 0.2);
  EXPECT_EQ(grid[3].h, 0.0);
  // Distinct points get distinct hashes.
  EXPECT_NE(spec_hash(scenario_spec(s, grid[0])), spec_hash(scenario_spec(s, grid[1])));
}

TEST(Threads, ExplicitThenEnvironmentThenHardware) {
  EXPECT_EQ(resolve_threads(3, 10), 3);
  EXPECT_EQ(resolve_threads(8, 2), 2);
  ::setenv("STRINGSIM_THREADS", "4", 1);
  EXPECT_EQ(resolve_threads(0, 10), 4);
  EXPECT_EQ(resolve_threads(2, 10), 2);
  ::setenv("STRINGSIM_THREADS", "junk", 1);
  EXPECT_GE(resolve_threads(0, 10), 1);
  ::unsetenv("STRINGSIM_THREADS");
  EXPECT_GE(resolve_threads(0, 1), 1);
  EXPECT_EQ(resolve_threads(0, 0), 1);
}

TEST(ShotAgreement, CountsPointsWithinCombinedError) {
  RealMatrix exact(1, 4), est(1, 4), se = RealMatrix::Zero(1, 4);
  exact << 0.0, 0.0, 1.0, 1.0;
  // n = 100: binomial error 0.1 at eps = 0, zero at eps = 1.
  est << 0.29, 0.31, 1.0, 0.99;
  EXPECT_DOUBLE_EQ(shot_agreement(exact, est, se, 100), 0.5);
  se(0, 3) = 0.01;
  EXPECT_DOUBLE_EQ(shot_agreement(exact, est, se, 100), 0.75);
  EXPECT_THROW(shot_agreement(exact, est, RealMatrix::Zero(2, 2), 100), InvalidArgument);
}

TEST(PointSeed, DependsOnSeedAndHashOnly) {
  EXPECT_EQ(point_seed(1, "abc"), point_seed(1, "abc"));
  EXPECT_NE(point_seed(1, "abc"), point_seed(2, "abc"));
  EXPECT_NE(point_seed(1, "abc"), point_seed(1, "abd"));
}

TEST(RunScenario, WritesEveryArtifact) {
  const fs::path out = scratch("artifacts");
  RunOptions options;
  options.out = out;
  options.threads = 1;
  const auto results = run_scenario(parse_scenario(kSmall), options);
  ASSERT_EQ(results.size(), 2u);
  for (const auto& r : results) {
    EXPECT_EQ(r.directory, out / "small" / r.spec_hash);
    for (const char* f : {"qmap.csv", "emap.csv", "qmap_shots.csv", "emap_shots.csv", "thermal.csv", "twobody.csv",
                          "fits.json", "manifest.json"})
      EXPECT_TRUE(fs::exists(r.directory / f)) << f;
    EXPECT_EQ(slurp(r.directory / "qmap.csv").rfind("time,site,value,stderr\n", 0), 0u);
    const auto manifest = nlohmann::json::parse(slurp(r.directory / "manifest.json"));
    EXPECT_EQ(manifest["spec_hash"], r.spec_hash);
    EXPECT_EQ(manifest["protocol"]["seed"], 9);
    EXPECT_EQ(manifest["version"], version_string());
    const auto fits = nlohmann::json::parse(slurp(r.directory / "fits.json"));
    EXPECT_EQ(fits, r.fits);
    EXPECT_TRUE(fits.contains("string_breaking"));
    EXPECT_TRUE(fits["thermal"].contains("T"));
    EXPECT_EQ(fits["twobody"]["broken_probability"].size(), 11u);
    EXPECT_GE(fits["shots"]["eps_within_3se"].get<double>(), 0.8);
  }
}

TEST(RunScenario, DeterministicAcrossThreadsAndGridOrder) {
  Scenario s = parse_scenario(kSmall);
  s.outputs.thermal = false;
  RunOptions a, b;
  a.out = scratch("det-a");
  a.threads = 1;
  b.out = scratch("det-b");
  b.threads = 2;
  const auto ra = run_scenario(s, a);
  std::reverse(s.h.begin(), s.h.end());
  const auto rb = run_scenario(s, b);
  ASSERT_EQ(ra.size(), 2u);
  EXPECT_EQ(ra[0].spec_hash, rb[1].spec_hash);
  for (const auto& r : ra)
    for (const char* f : {"qmap.csv", "emap.csv", "qmap_shots.csv", "emap_shots.csv", "twobody.csv", "fits.json"})
      EXPECT_EQ(slurp(r.directory / f), slurp(b.out / "small" / r.spec_hash / f)) << f;

  // A different seed changes the shots and nothing else.
  RunOptions c = a;
  c.out = scratch("det-c");
  c.seed = 10;
  const auto rc = run_scenario(s, c);
  EXPECT_EQ(slurp(ra[0].directory / "qmap.csv"), slurp(c.out / "small" / ra[0].spec_hash / "qmap.csv"));
  EXPECT_NE(slurp(ra[0].directory / "qmap_shots.csv"), slurp(c.out / "small" / ra[0].spec_hash / "qmap_shots.csv"));
}

TEST(RunScenario, ThermalOnlyWritesTheBaseline) {
  RunOptions options;
  options.out = scratch("thermal-only");
  options.thermal_only = true;
  const auto results = run_scenario(parse_scenario(kSmall), options);
  for (const auto& r : results) {
    EXPECT_TRUE(fs::exists(r.directory / "thermal.csv"));
    EXPECT_FALSE(fs::exists(r.directory / "qmap.csv"));
    EXPECT_FALSE(fs::exists(r.directory / "twobody.csv"));
    EXPECT_TRUE(r.fits["thermal"].contains("bulk_eps_minus_thermal"));
  }
}

TEST(RunScenario, ModuleErrorsCarryTheGridPoint) {
  Scenario s = parse_scenario(kSmall);
  s.outputs = OutputSelection{};
  s.h = {0.0};
  s.L = kMaxSpins + 1;  // bypasses parse-time validation
  RunOptions options;
  options.out = scratch("error");
  try {
    run_scenario(s, options);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("scenario 'small' at g=0.75"), std::string::npos) << e.what();
  }
}
