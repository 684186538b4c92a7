#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "stringsim/acceptance.hpp"
#include "stringsim/couplings.hpp"
#include "stringsim/errors.hpp"
#include "stringsim/scenario.hpp"

using namespace stringsim;

namespace {

// Exit codes: 0 success, 1 failed criteria or a module error, 2 bad config.
constexpr int kOk = 0, kFailed = 1, kConfig = 2;

void print_points(const std::vector<PointResult>& results) {
  for (const PointResult& r : results)
    std::printf("g=%g h=%g -> %s\n", r.point.g, r.point.h, r.directory.string().c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Confinement and string breaking in long-range Ising chains"};
  app.set_version_flag("--version", version_string());
  app.require_subcommand(1);

  std::string config, out = "out";
  std::uint64_t seed = 0;
  int threads = 0;

  auto add_run_options = [&](CLI::App* cmd) {
    cmd->add_option("config", config, "scenario TOML file")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "output root")->capture_default_str();
    cmd->add_option("--seed", seed, "overrides protocol.seed");
    cmd->add_option("--threads", threads, "worker threads (default: STRINGSIM_THREADS, else all cores)");
  };
  CLI::App* run = app.add_subcommand("run", "evolve every grid point and write maps, fits and manifests");
  add_run_options(run);
  CLI::App* thermal = app.add_subcommand("thermal", "thermal baseline only: thermal.csv and fits.json per point");
  add_run_options(thermal);

  CLI::App* accept = app.add_subcommand("accept", "run the acceptance criteria");
  std::vector<std::string> filter;
  double tolerance_scale = 1.0;
  bool as_json = false;
  accept->add_option("--filter", filter, "criterion ids to run")->delimiter(',');
  accept->add_option("--tolerance-scale", tolerance_scale, "multiplies every tolerance")->capture_default_str();
  accept->add_flag("--json", as_json, "print a JSON report instead of text");

  CLI::App* calib = app.add_subcommand("calibrate", "synthesize ion-trap couplings and fit the range profile");
  calib->add_option("--out", out, "directory for jij.csv, modes.csv and calibration.json")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed() || thermal->parsed()) {
      const Scenario s = load_scenario(config);
      RunOptions options;
      options.out = out;
      if (run->count("--seed") || thermal->count("--seed")) options.seed = seed;
      options.threads = threads;
      options.thermal_only = thermal->parsed();
      if (options.thermal_only && !s.outputs.thermal) throw ConfigError(config + ": outputs.thermal is false");
      print_points(run_scenario(s, options));
      return kOk;
    }
    if (accept->parsed()) {
      AcceptanceOptions options;
      options.filter = filter;
      options.tolerance_scale = tolerance_scale;
      if (!as_json)
        options.on_result = [](const CriterionResult& r) { std::printf("%s\n", format_result(r).c_str()); };
      const auto results = run_acceptance(options);
      if (as_json) std::cout << to_json(results).dump(2) << '\n';
      for (const auto& r : results)
        if (!r.passed) return kFailed;
      return kOk;
    }
    if (calib->parsed()) {
      const CalibrationReport c = calibrate();
      const std::filesystem::path dir(out);
      std::filesystem::create_directories(dir);
      std::ofstream(dir / "jij.csv") << matrix_csv(c.J / kTwoPi, "Hz");
      std::ofstream(dir / "modes.csv") << modes_csv(c.modes);
      nlohmann::json report = {{"J_Hz", c.fit.J / kTwoPi},
                               {"beta", c.fit.beta},
                               {"alpha", c.fit.alpha},
                               {"fit_residual", c.fit.residual},
                               {"nn_mean_Hz", c.nn.mean / kTwoPi},
                               {"nn_relative_spread", c.nn.relative_spread},
                               {"nnn_over_nn", c.nnn.mean / c.nn.mean},
                               {"optimizer_iterations", c.amplitudes.iterations},
                               {"optimizer_objective", c.amplitudes.objective},
                               {"rabi_rad_per_s", std::vector<double>(c.amplitudes.beams.rabi.begin(),
                                                                      c.amplitudes.beams.rabi.end())}};
      std::ofstream(dir / "calibration.json") << report.dump(2) << '\n';
      std::printf("beta=%.4f alpha=%.4f nn_spread=%.2e nnn/nn=%.4f -> %s\n", c.fit.beta, c.fit.alpha,
                  c.nn.relative_spread, c.nnn.mean / c.nn.mean, dir.string().c_str());
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailed;
  }
  return kOk;
}
