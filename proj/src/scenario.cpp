#include "stringsim/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <thread>

#include <toml.hpp>

#include "stringsim/errors.hpp"
#include "stringsim/evolve.hpp"
#include "stringsim/thermal.hpp"
#include "stringsim/twobody.hpp"

#ifndef STRINGSIM_VERSION
#define STRINGSIM_VERSION "0.0.0"
#endif

namespace stringsim {

std::string version_string() { return STRINGSIM_VERSION; }

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

class TableReader {
 public:
  TableReader(const toml::table& table, std::string prefix, const std::string& source)
      : table_(table), prefix_(std::move(prefix)), source_(source) {}

  [[noreturn]] void fail(const toml::node* node, const std::string& key, const std::string& message) const {
    std::ostringstream out;
    out << source_;
    const toml::source_region& where = node ? node->source() : table_.source();
    if (where.begin.line > 0) out << ':' << where.begin.line;
    out << ": " << qualified(key) << ": " << message;
    throw ConfigError(out.str());
  }

  std::string qualified(const std::string& key) const { return prefix_.empty() ? key : prefix_ + "." + key; }

  const toml::node* find(const std::string& key) {
    seen_.insert(key);
    return table_.get(key);
  }

  const toml::table* table(const std::string& key) {
    const toml::node* n = find(key);
    if (!n) return nullptr;
    if (!n->is_table()) fail(n, key, "expected a table");
    return n->as_table();
  }

  std::string string(const std::string& key, std::optional<std::string> fallback) {
    const toml::node* n = find(key);
    if (!n) return required(key, fallback);
    if (!n->is_string()) fail(n, key, "expected a string");
    return n->as_string()->get();
  }

  double number(const std::string& key, std::optional<double> fallback) {
    const toml::node* n = find(key);
    if (!n) return required(key, fallback);
    return as_number(n, key);
  }

  std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback) {
    const toml::node* n = find(key);
    if (!n) return required(key, fallback);
    if (!n->is_integer()) fail(n, key, "expected an integer");
    return n->as_integer()->get();
  }

  bool boolean(const std::string& key, bool fallback) {
    const toml::node* n = find(key);
    if (!n) return fallback;
    if (!n->is_boolean()) fail(n, key, "expected true or false");
    return n->as_boolean()->get();
  }

  /// A number or a non-empty array of numbers.
  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback) {
    const toml::node* n = find(key);
    if (!n) return required(key, fallback);
    if (const toml::array* a = n->as_array()) {
      if (a->empty()) fail(n, key, "expected at least one value");
      std::vector<double> out;
      for (const toml::node& item : *a) out.push_back(as_number(&item, key));
      return out;
    }
    return {as_number(n, key)};
  }

  void reject_unknown() const {
    for (const auto& [key, node] : table_)
      if (!seen_.count(std::string(key.str()))) fail(&node, std::string(key.str()), "unknown key");
  }

  const toml::node* node(const std::string& key) const { return table_.get(key); }

 private:
  template <typename T>
  T required(const std::string& key, const std::optional<T>& fallback) const {
    if (!fallback) fail(nullptr, key, "required key is missing");
    return *fallback;
  }

  double as_number(const toml::node* n, const std::string& key) const {
    if (n->is_floating_point()) return n->as_floating_point()->get();
    if (n->is_integer()) return static_cast<double>(n->as_integer()->get());
    fail(n, key, "expected a number");
  }

  const toml::table& table_;
  std::string prefix_;
  const std::string& source_;
  std::set<std::string> seen_;
};

InitialState initial_from_string(const std::string& s) {
  if (s == "auto") return InitialState::kAuto;
  if (s == "kink") return InitialState::kKink;
  if (s == "string") return InitialState::kString;
  if (s == "vacuum") return InitialState::kVacuum;
  throw InvalidArgument(s);
}

std::string to_string(InitialState s) {
  switch (s) {
    case InitialState::kAuto: return "auto";
    case InitialState::kKink: return "kink";
    case InitialState::kString: return "string";
    case InitialState::kVacuum: return "vacuum";
  }
  return "auto";
}

}  // namespace

Scenario parse_scenario(const std::string& text, const std::string& source_name) {
  toml::table root;
  try {
    root = toml::parse(text, source_name);
  } catch (const toml::parse_error& e) {
    std::ostringstream out;
    out << source_name << ':' << e.source().begin.line << ": " << e.description();
    throw ConfigError(out.str());
  }

  Scenario s;
  TableReader top(root, "", source_name);
  s.name = top.string("name", std::nullopt);
  if (s.name.empty() || s.name.find_first_of("/\\ ") != std::string::npos || s.name == "." || s.name == "..")
    top.fail(top.node("name"), "name", "must be a non-empty word usable as a directory name");

  const toml::table* model = top.table("model");
  if (!model) top.fail(nullptr, "model", "required table is missing");
  {
    TableReader r(*model, "model", source_name);
    const std::int64_t L = r.integer("L", 13);
    if (L < 2 || L > kMaxSpins) r.fail(r.node("L"), "L", "must lie in [2, " + std::to_string(kMaxSpins) + "]");
    s.L = static_cast<int>(L);
    s.J = r.number("J", 1.0);
    if (!(s.J > 0.0)) r.fail(r.node("J"), "J", "must be positive");
    s.beta = r.number("beta", 0.78);
    if (!(s.beta > 0.0)) r.fail(r.node("beta"), "beta", "must be positive");
    s.g = r.numbers("g", std::nullopt);
    s.h = r.numbers("h", std::vector<double>{0.0});
    for (double g : s.g)
      if (!(g >= 0.0)) r.fail(r.node("g"), "g", "g/J must be non-negative");
    for (double h : s.h)
      if (!(h >= 0.0)) r.fail(r.node("h"), "h", "h/J must be non-negative");
    const std::string env = r.string("environment", "none");
    try {
      s.environment = environment_from_string(env);
    } catch (const Error&) {
      r.fail(r.node("environment"), "environment", "must be one of none, charge, string (got '" + env + "')");
    }
    r.reject_unknown();
  }

  if (const toml::table* protocol = top.table("protocol")) {
    TableReader r(*protocol, "protocol", source_name);
    s.protocol.t_max = r.number("t_max", s.protocol.t_max);
    s.protocol.dt = r.number("dt", s.protocol.dt);
    if (!(s.protocol.dt > 0.0)) r.fail(r.node("dt"), "dt", "must be positive");
    if (!(s.protocol.t_max >= 0.0)) r.fail(r.node("t_max"), "t_max", "must be non-negative");
    const double steps = s.protocol.t_max / s.protocol.dt;
    if (std::abs(steps - std::round(steps)) > 1e-9 * std::max(1.0, steps))
      r.fail(r.node("t_max"), "t_max", "must be an integer multiple of dt");
    const std::int64_t shots = r.integer("shots", 0);
    if (shots < 0 || shots > 100000000) r.fail(r.node("shots"), "shots", "must lie in [0, 1e8]");
    s.protocol.shots = static_cast<int>(shots);
    const std::int64_t seed = r.integer("seed", 1);
    if (seed < 0) r.fail(r.node("seed"), "seed", "must be non-negative");
    s.protocol.seed = static_cast<std::uint64_t>(seed);
    const std::string initial = r.string("initial", "auto");
    try {
      s.protocol.initial = initial_from_string(initial);
    } catch (const Error&) {
      r.fail(r.node("initial"), "initial", "must be one of auto, kink, string, vacuum");
    }
    r.reject_unknown();
  }

  if (const toml::table* outputs = top.table("outputs")) {
    TableReader r(*outputs, "outputs", source_name);
    OutputSelection& o = s.outputs;
    o.maps = r.boolean("maps", o.maps);
    o.bloch = r.boolean("bloch", o.bloch);
    o.light_cone = r.boolean("light_cone", o.light_cone);
    o.string_breaking = r.boolean("string_breaking", o.string_breaking);
    o.thermal = r.boolean("thermal", o.thermal);
    o.twobody = r.boolean("twobody", o.twobody);
    if (o.thermal && s.L > kMaxThermalSpins)
      r.fail(r.node("thermal"), "thermal", "needs L <= " + std::to_string(kMaxThermalSpins));
    if (o.twobody && s.environment != Environment::kString)
      r.fail(r.node("twobody"), "twobody", "needs the string environment");
    if (o.string_breaking && s.environment != Environment::kString)
      r.fail(r.node("string_breaking"), "string_breaking", "needs the string environment");
    r.reject_unknown();
  }

  if (const toml::table* analysis = top.table("analysis")) {
    TableReader r(*analysis, "analysis", source_name);
    AnalysisSettings& a = s.analysis;
    a.bloch_first_bond = static_cast<int>(r.integer("bloch_first_bond", a.bloch_first_bond));
    a.bloch_last_bond = static_cast<int>(r.integer("bloch_last_bond", a.bloch_last_bond));
    if (a.bloch_first_bond >= a.bloch_last_bond)
      r.fail(r.node("bloch_last_bond"), "bloch_last_bond", "must exceed bloch_first_bond");
    a.light_cone_threshold = r.number("light_cone_threshold", a.light_cone_threshold);
    if (!(a.light_cone_threshold > 0.0 && a.light_cone_threshold < 1.0))
      r.fail(r.node("light_cone_threshold"), "light_cone_threshold", "must lie in (0, 1)");
    a.light_cone_max_distance = static_cast<int>(r.integer("light_cone_max_distance", a.light_cone_max_distance));
    if (a.light_cone_max_distance < 2)
      r.fail(r.node("light_cone_max_distance"), "light_cone_max_distance", "must be at least 2");
    a.breaking_threshold = r.number("breaking_threshold", a.breaking_threshold);
    if (!(a.breaking_threshold > 0.0 && a.breaking_threshold < 1.0))
      r.fail(r.node("breaking_threshold"), "breaking_threshold", "must lie in (0, 1)");
    a.bulk_radius = static_cast<int>(r.integer("bulk_radius", a.bulk_radius));
    if (a.bulk_radius < 0) r.fail(r.node("bulk_radius"), "bulk_radius", "must be non-negative");
    a.compare_time = r.number("compare_time", a.compare_time);
    if (!(a.compare_time >= 0.0)) r.fail(r.node("compare_time"), "compare_time", "must be non-negative");
    r.reject_unknown();
  }
  top.reject_unknown();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str(), path.string());
}

std::vector<GridPoint> scenario_grid(const Scenario& scenario) {
  std::vector<GridPoint> grid;
  for (double g : scenario.g)
    for (double h : scenario.h) grid.push_back({g, h});
  return grid;
}

HamiltonianSpec scenario_spec(const Scenario& scenario, const GridPoint& point) {
  ModelParams p;
  p.L = scenario.L;
  p.J = scenario.J;
  p.beta = scenario.beta;
  p.g = point.g * scenario.J;
  p.h = point.h * scenario.J;
  p.environment = scenario.environment;
  p.origin = default_origin(scenario.L);
  return make_spec(p);
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

int resolve_threads(int requested, int jobs) {
  int n = requested;
  if (n <= 0) {
    if (const char* env = std::getenv("STRINGSIM_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end != env && *end == '\0' && v > 0) n = static_cast<int>(v);
    }
  }
  if (n <= 0) n = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return std::clamp(n, 1, std::max(jobs, 1));
}

std::uint64_t point_seed(std::uint64_t seed, const std::string& spec_hash) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : spec_hash) h = (h ^ c) * 0x100000001b3ULL;
  return CounterRng(seed).bits(h);
}

double shot_agreement(const RealMatrix& exact, const RealMatrix& estimate, const RealMatrix& stderr, int n_shots,
                      double k) {
  if (exact.rows() != estimate.rows() || exact.cols() != estimate.cols() || stderr.rows() != exact.rows() ||
      stderr.cols() != exact.cols())
    throw InvalidArgument("shot_agreement: shape mismatch");
  if (n_shots <= 0) throw InvalidArgument("shot_agreement: n_shots must be positive");
  const Eigen::Index total = exact.size();
  if (total == 0) return 1.0;
  Eigen::Index within = 0;
  for (Eigen::Index c = 0; c < exact.cols(); ++c)
    for (Eigen::Index r = 0; r < exact.rows(); ++r) {
      const double e = exact(r, c);
      const double binomial = std::max(0.0, 1.0 - e * e) / n_shots;
      const double combined = std::sqrt(stderr(r, c) * stderr(r, c) + binomial);
      if (std::abs(estimate(r, c) - e) <= k * combined) ++within;
    }
  return static_cast<double>(within) / static_cast<double>(total);
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

nlohmann::json json_number(double x) {
  if (std::isnan(x)) return nullptr;
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

SpinConfiguration initial_configuration(const Scenario& s) {
  InitialState kind = s.protocol.initial;
  if (kind == InitialState::kAuto)
    kind = s.environment == Environment::kCharge   ? InitialState::kKink
           : s.environment == Environment::kString ? InitialState::kString
                                                   : InitialState::kVacuum;
  SpinConfiguration c;
  switch (kind) {
    case InitialState::kKink: c = kink_configuration(s.L); break;
    case InitialState::kString: c = string_configuration(s.L); break;
    default: c = vacuum_configuration(s.L, s.environment); break;
  }
  // The initial state's static spins must match the Hamiltonian's environment.
  const EnvironmentTails env = make_tails(s.environment);
  c.left = env.left;
  c.right = env.right;
  return c;
}

int nearest_time_index(const std::vector<double>& times, double t) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(times.size()); ++k)
    if (std::abs(times[k] - t) < std::abs(times[best] - t)) best = k;
  return best;
}

}  // namespace

StringBreaking analyze_string_breaking(const SpatiotemporalMap& qmap, int L, int origin, const AnalysisSettings& a) {
  const std::vector<double> cross = first_crossing_times(qmap, a.breaking_threshold);
  const int left_edge = origin, right_edge = origin + L;
  StringBreaking out;
  out.first_time = out.first_bulk_time = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < qmap.labels.size(); ++c) {
    const int b = qmap.labels[c];
    if (b < left_edge || b > right_edge || std::isnan(cross[c])) continue;
    if (cross[c] < out.first_time) {
      out.first_time = cross[c];
      out.first_bond = b;
    }
    if (std::abs(b) <= a.bulk_radius) out.first_bulk_time = std::min(out.first_bulk_time, cross[c]);
  }
  out.edge_first = out.first_bond && (*out.first_bond == left_edge || *out.first_bond == right_edge) &&
                   out.first_time < out.first_bulk_time;
  const int k = nearest_time_index(qmap.times, a.compare_time);
  out.bulk_charge_time = qmap.times[k];
  for (std::size_t c = 0; c < qmap.labels.size(); ++c)
    if (std::abs(qmap.labels[c]) <= a.bulk_radius) out.bulk_charge += qmap.values(k, c);
  return out;
}

namespace {

template <typename F>
nlohmann::json guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    return {{"error", e.what()}};
  }
}

struct PointRun {
  const Scenario& s;
  const RunOptions& options;
  GridPoint point;
  std::uint64_t seed;
};

PointResult run_point(const PointRun& run) {
  const auto started = std::chrono::steady_clock::now();
  const Scenario& s = run.s;
  const HamiltonianSpec spec = scenario_spec(s, run.point);
  const IsingOperator H = build_hamiltonian(spec);
  const SpinConfiguration config = initial_configuration(s);
  const EnvironmentTails tails{config.left, config.right};
  const std::string hash = spec_hash(spec);
  const std::filesystem::path dir = run.options.out / s.name / hash;
  std::filesystem::create_directories(dir);

  PointResult result{run.point, hash, dir, nlohmann::json::object()};
  nlohmann::json& fits = result.fits;
  fits["scenario"] = s.name;
  fits["g"] = run.point.g;
  fits["h"] = run.point.h;
  fits["spec_hash"] = hash;
  std::vector<std::string> files;

  const Wavefunction psi0 = prepare_state(config);
  const double E0 = H.expectation(psi0.amplitudes);
  const bool need_dynamics = !run.options.thermal_only || s.outputs.thermal;
  const int n_steps = static_cast<int>(std::lround(s.protocol.t_max / s.protocol.dt));
  PropagationResult prop;
  if (need_dynamics) {
    prop = propagate(psi0, H, s.protocol.dt, n_steps);
    fits["krylov"] = {{"substeps", prop.stats.substeps},
                      {"max_dim_used", prop.stats.max_dim_used},
                      {"max_error_estimate", prop.stats.max_error_estimate}};
  }
  const bool full = !run.options.thermal_only;

  std::optional<SpatiotemporalMap> qmap, emap;
  if (need_dynamics) {
    qmap = charge_map(prop, tails, spec.origin);
    emap = field_map(prop, spec.origin);
  }
  if (full && s.outputs.maps) {
    write_file(dir / "qmap.csv", to_csv(*qmap));
    write_file(dir / "emap.csv", to_csv(*emap));
    files.insert(files.end(), {"qmap.csv", "emap.csv"});
  }

  if (full && s.protocol.shots > 0) {
    const CounterRng rng(run.seed);
    SpatiotemporalMap qs = *qmap, es = *emap;
    qs.stderr = RealMatrix(qs.values.rows(), qs.values.cols());
    es.stderr = RealMatrix(es.values.rows(), es.values.cols());
    for (std::size_t k = 0; k < prop.states.size(); ++k) {
      const ShotEstimate est = sample_shots(prop.states[k], tails, s.protocol.shots, rng.bits(k));
      for (std::size_t c = 0; c < est.q.size(); ++c) {
        qs.values(k, c) = est.q[c];
        (*qs.stderr)(k, c) = est.q_stderr[c];
      }
      for (std::size_t c = 0; c < est.eps.size(); ++c) {
        es.values(k, c) = est.eps[c];
        (*es.stderr)(k, c) = est.eps_stderr[c];
      }
    }
    write_file(dir / "qmap_shots.csv", to_csv(qs));
    write_file(dir / "emap_shots.csv", to_csv(es));
    files.insert(files.end(), {"qmap_shots.csv", "emap_shots.csv"});
    fits["shots"] = {{"n_shots", s.protocol.shots},
                     {"seed", run.seed},
                     {"eps_within_3se", shot_agreement(emap->values, es.values, *es.stderr, s.protocol.shots)},
                     {"q_within_3se", shot_agreement(qmap->values, qs.values, *qs.stderr, s.protocol.shots)}};
  }

  if (full && s.outputs.bloch) {
    fits["bloch"] = guarded([&]() -> nlohmann::json {
      const BlochFit b = fit_bloch(*qmap, s.analysis.bloch_first_bond, s.analysis.bloch_last_bond);
      return {{"amplitude", b.amplitude},
              {"amplitude_error", b.amplitude_error},
              {"period", b.period},
              {"period_error", b.period_error},
              {"background", b.background},
              {"predicted_amplitude", run.point.h > 0 ? json_number(2.0 * run.point.g / run.point.h) : nullptr},
              {"predicted_period", run.point.h > 0 ? json_number(M_PI / run.point.h) : nullptr}};
    });
  }

  if (full && s.outputs.light_cone) {
    fits["light_cone"] = guarded([&]() -> nlohmann::json {
      const LightConeFit f =
          fit_light_cone(*qmap, s.analysis.light_cone_threshold, s.analysis.light_cone_max_distance);
      return {{"velocity", f.velocity},
              {"intercept", f.intercept},
              {"residual", f.residual},
              {"predicted_velocity", 2.0 * run.point.g},
              {"bonds", f.bonds},
              {"arrival_times", f.arrival_times}};
    });
  }

  if (full && s.outputs.string_breaking) {
    const StringBreaking b = analyze_string_breaking(*qmap, s.L, spec.origin, s.analysis);
    fits["string_breaking"] = {{"threshold", s.analysis.breaking_threshold},
                               {"first_bond", b.first_bond ? nlohmann::json(*b.first_bond) : nlohmann::json(nullptr)},
                               {"first_time", json_number(b.first_time)},
                               {"first_bulk_time", json_number(b.first_bulk_time)},
                               {"edge_first", b.edge_first},
                               {"bulk_charge_time", b.bulk_charge_time},
                               {"bulk_charge", b.bulk_charge}};
  }

  if (s.outputs.thermal) {
    fits["thermal"] = guarded([&]() -> nlohmann::json {
      const SpectralData sd = spectrum(spec);
      const TemperatureMatch m = match_temperature(E0, sd);
      const std::vector<double> eps_th = gibbs_observable(sd, m.T);
      const std::vector<int> labels = site_labels(s.L, spec.origin);
      write_file(dir / "thermal.csv", thermal_csv(labels, eps_th));
      files.push_back("thermal.csv");
      nlohmann::json out = {{"E0", E0},
                            {"T", json_number(m.T)},
                            {"residual", m.residual},
                            {"ground_energy", sd.eigenvalues[0]},
                            {"reflection_blocks", sd.reflection_blocks},
                            {"eigen_residual", sd.max_residual}};
      if (need_dynamics) {
        const int k = nearest_time_index(emap->times, s.analysis.compare_time);
        nlohmann::json diff = nlohmann::json::array(), sites = nlohmann::json::array();
        int positive = 0, negative = 0;
        for (std::size_t c = 0; c < labels.size(); ++c) {
          if (std::abs(labels[c]) > s.analysis.bulk_radius) continue;
          const double d = emap->values(k, c) - eps_th[c];
          sites.push_back(labels[c]);
          diff.push_back(d);
          (d > 0 ? positive : negative) += d != 0.0;
        }
        out["compare_time"] = emap->times[k];
        out["bulk_sites"] = sites;
        out["bulk_eps_minus_thermal"] = diff;
        out["definite_sign"] = (positive == 0) != (negative == 0);
      }
      return out;
    });
  }

  if (full && s.outputs.twobody) {
    const PairPotential pot = pair_potential(s.J, s.beta, run.point.h * s.J, s.L, spec.origin);
    write_file(dir / "twobody.csv", potential_csv(pot));
    files.push_back("twobody.csv");
    fits["twobody"] = guarded([&]() -> nlohmann::json {
      nlohmann::json resonant = nlohmann::json::array();
      for (const auto& [l1, l2] : resonant_configs(pot, 0.1)) resonant.push_back({l1, l2});
      const TwoBodyState s0 = initial_pair_state(run.point.g * s.J, pot);
      const std::vector<TwoBodyState> states = evolve_pair(s0, build_heff(run.point.g * s.J, pot), prop.times);
      const std::uint32_t string_index = basis_index(config.dynamical);
      nlohmann::json p_pert = nlohmann::json::array(), p_exact = nlohmann::json::array();
      for (std::size_t k = 0; k < states.size(); ++k) {
        p_pert.push_back(broken_probability(states[k], s0));
        p_exact.push_back(1.0 - std::norm(prop.states[k].amplitudes[string_index]));
      }
      const int k = nearest_time_index(prop.times, s.analysis.compare_time);
      const ReconstructedObservables obs = reconstruct_observables(s0, states[k], pot.basis, config);
      int agree = 0, total = 0;
      for (std::size_t c = 0; c < obs.q.size(); ++c) {
        const double d_exact = qmap->values(k, c) - qmap->values(0, c), d_pert = obs.q[c] - qmap->values(0, c);
        if (std::abs(d_exact) < 1e-3) continue;
        ++total;
        agree += (d_exact > 0) == (d_pert > 0);
      }
      return {{"resonant_pairs", resonant},
              {"times", prop.times},
              {"broken_probability", p_pert},
              {"exact_broken_probability", p_exact},
              {"compare_time", prop.times[k]},
              {"q_sign_agreement", total ? json_number(static_cast<double>(agree) / total) : nullptr}};
    });
  }

  write_file(dir / "fits.json", fits.dump(2) + "\n");
  files.push_back("fits.json");

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  nlohmann::json manifest = {
      {"scenario", s.name},
      {"version", version_string()},
      {"spec_hash", hash},
      {"model",
       {{"L", s.L},
        {"J", s.J},
        {"beta", s.beta},
        {"g", run.point.g},
        {"h", run.point.h},
        {"environment", to_string(s.environment)},
        {"origin", spec.origin}}},
      {"protocol",
       {{"t_max", s.protocol.t_max},
        {"dt", s.protocol.dt},
        {"shots", s.protocol.shots},
        {"seed", run.options.seed.value_or(s.protocol.seed)},
        {"shot_seed", run.seed},
        {"initial", to_string(s.protocol.initial)}}},
      {"files", files},
      {"wall_time_s", wall},
      {"timestamp", utc_timestamp()}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

}  // namespace

std::vector<PointResult> run_scenario(const Scenario& scenario, const RunOptions& options) {
  const std::vector<GridPoint> grid = scenario_grid(scenario);
  const std::uint64_t seed = options.seed.value_or(scenario.protocol.seed);
  std::vector<std::optional<PointResult>> results(grid.size());
  std::vector<std::exception_ptr> errors(grid.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (std::size_t i = next++; i < grid.size(); i = next++) {
      try {
        const std::string hash = spec_hash(scenario_spec(scenario, grid[i]));
        results[i] = run_point({scenario, options, grid[i], point_seed(seed, hash)});
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int n_threads = resolve_threads(options.threads, static_cast<int>(grid.size()));
  std::vector<std::thread> pool;
  for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!errors[i]) continue;
    const std::string where =
        "scenario '" + scenario.name + "' at g=" + std::to_string(grid[i].g) + ", h=" + std::to_string(grid[i].h) + ": ";
    try {
      std::rethrow_exception(errors[i]);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    } catch (const std::exception& e) {
      throw Error(where + e.what());
    }
  }
  std::vector<PointResult> out;
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

}  // namespace stringsim
