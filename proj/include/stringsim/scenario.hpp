#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stringsim/evolve.hpp"
#include "stringsim/model.hpp"

namespace stringsim {

enum class InitialState { kAuto, kKink, kString, kVacuum };

struct Protocol {
  double t_max = 3.0;
  double dt = 0.1;
  int shots = 0;  // 0 disables shot emulation
  std::uint64_t seed = 1;
  InitialState initial = InitialState::kAuto;  // auto: kink, string or vacuum by environment
};

struct OutputSelection {
  bool maps = true;
  bool bloch = false;
  bool light_cone = false;
  bool string_breaking = false;
  bool thermal = false;
  bool twobody = false;
};

struct AnalysisSettings {
  int bloch_first_bond = -6;
  int bloch_last_bond = 7;
  double light_cone_threshold = 0.5;
  int light_cone_max_distance = 5;
  double breaking_threshold = 0.25;  // q level that counts as a broken bond
  int bulk_radius = 3;               // bulk bonds and sites have |label| <= bulk_radius
  double compare_time = 3.0;         // evolved vs thermal and two-body comparisons
};

/// One config file. g and h may be lists; the grid is their product.
struct Scenario {
  std::string name;
  int L = 13;
  double J = 1.0;
  double beta = 0.78;
  std::vector<double> g{0.0};
  std::vector<double> h{0.0};
  Environment environment = Environment::kNone;
  Protocol protocol;
  OutputSelection outputs;
  AnalysisSettings analysis;
};

/// Throws ConfigError naming the offending field and its line.
Scenario parse_scenario(const std::string& text, const std::string& source_name = "<config>");
Scenario load_scenario(const std::filesystem::path& path);

struct GridPoint {
  double g = 0.0;
  double h = 0.0;
};
std::vector<GridPoint> scenario_grid(const Scenario& scenario);
HamiltonianSpec scenario_spec(const Scenario& scenario, const GridPoint& point);

struct RunOptions {
  std::filesystem::path out = "out";
  std::optional<std::uint64_t> seed;  // overrides protocol.seed
  int threads = 0;                    // 0: STRINGSIM_THREADS, else hardware
  bool thermal_only = false;          // the `thermal` verb: baseline artifacts only
};

struct PointResult {
  GridPoint point;
  std::string spec_hash;
  std::filesystem::path directory;
  nlohmann::json fits;
};

/// Runs every grid point and writes out/<name>/<spec-hash>/{qmap.csv,
/// emap.csv, fits.json, thermal.csv, twobody.csv, manifest.json}; shot maps go
/// to qmap_shots.csv and emap_shots.csv. Results come back in grid order.
std::vector<PointResult> run_scenario(const Scenario& scenario, const RunOptions& options = {});

/// Explicit request if positive, else STRINGSIM_THREADS, else the hardware
/// count; never more than `jobs` and never less than one.
int resolve_threads(int requested, int jobs);

/// Per-point shot seed derived from the run seed and the spec hash, so grid
/// order never changes the draws.
std::uint64_t point_seed(std::uint64_t seed, const std::string& spec_hash);

struct StringBreaking {
  std::optional<int> first_bond;  // first interior bond to reach the threshold
  double first_time = 0.0;        // inf when no interior bond does
  double first_bulk_time = 0.0;   // same, restricted to |bond| <= bulk_radius
  bool edge_first = false;        // first bond touches a static charge, strictly before the bulk
  double bulk_charge_time = 0.0;
  double bulk_charge = 0.0;  // sum of q over |bond| <= bulk_radius at the sample nearest compare_time
};

/// Interior bonds are origin .. origin+L; the two bonds at the chain ends sit
/// next to the static charges.
StringBreaking analyze_string_breaking(const SpatiotemporalMap& qmap, int L, int origin, const AnalysisSettings& a);

/// Fraction of (time, site) points where the shot estimate of eps lies within
/// `k` combined standard errors of the exact value. The combined error adds
/// the sample error and the binomial error sqrt((1 - eps^2)/n) in quadrature.
double shot_agreement(const RealMatrix& exact, const RealMatrix& estimate, const RealMatrix& stderr, int n_shots,
                      double k = 3.0);

std::string version_string();

}  // namespace stringsim
