#include "stringsim/acceptance.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "stringsim/couplings.hpp"
#include "stringsim/duality.hpp"
#include "stringsim/errors.hpp"
#include "stringsim/evolve.hpp"
#include "stringsim/krylov.hpp"
#include "stringsim/scenario.hpp"
#include "stringsim/thermal.hpp"
#include "stringsim/twobody.hpp"

#ifndef STRINGSIM_SCENARIO_DIR
#define STRINGSIM_SCENARIO_DIR "scenarios"
#endif

namespace stringsim {

namespace {

using cd = std::complex<double>;
using nlohmann::json;

// Each check returns pass/fail and fills detail and metrics; timing is added
// by the driver.
struct Check {
  std::string id;
  std::string title;
  double budget;
  std::function<void(CriterionResult&, double scale)> run;
};

std::string fmt(const char* format, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, a, b, c, d);
  return buf;
}

HamiltonianSpec model_spec(int L, Environment env, double g, double h, double beta = 0.78) {
  ModelParams p;
  p.L = L;
  p.origin = default_origin(L);
  p.g = g;
  p.h = h;
  p.beta = beta;
  p.environment = env;
  return make_spec(p);
}

RealVector shifted_spectrum(const RealMatrix& H) {
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(H, Eigen::EigenvaluesOnly);
  RealVector ev = es.eigenvalues();
  return ev.array() - ev.minCoeff();
}

// exp(-i H t) psi through a full eigendecomposition; independent of Krylov.
ComplexVector dense_evolve(const RealMatrix& H, const ComplexVector& psi, double t) {
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(H);
  const Eigen::MatrixXcd V = es.eigenvectors().cast<cd>();
  Eigen::VectorXcd c = V.adjoint() * psi;
  for (Eigen::Index k = 0; k < c.size(); ++k) c[k] *= std::exp(cd(0.0, -es.eigenvalues()[k] * t));
  return V * c;
}

SpatiotemporalMap kink_quench(double g, double h, double t_max, double dt = 0.05) {
  const HamiltonianSpec spec = model_spec(13, Environment::kCharge, g, h);
  const auto run =
      propagate(prepare_state(kink_configuration(13)), spec, dt, static_cast<int>(std::lround(t_max / dt)));
  return charge_map(run, make_tails(Environment::kCharge), spec.origin);
}

// Long-format map CSV back into label -> (time -> value, stderr).
std::map<std::pair<double, int>, std::pair<double, double>> read_map_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::map<std::pair<double, int>, std::pair<double, double>> out;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::stringstream row(line);
    std::string t, site, value, se;
    std::getline(row, t, ',');
    std::getline(row, site, ',');
    std::getline(row, value, ',');
    std::getline(row, se, ',');
    out[{std::stod(t), std::stoi(site)}] = {std::stod(value), se.empty() ? 0.0 : std::stod(se)};
  }
  return out;
}

void duality_oracle(CriterionResult& r, double scale) {
  const double tol = 1e-10 * scale;
  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  int cases = 0;
  for (int L = 2; L <= 6; ++L)
    for (int trial = 0; trial < 5; ++trial) {
      const double g = 0.1 + u(rng), h = u(rng), beta = 0.3 + 1.5 * u(rng);
      const std::pair<int, int> boundary{trial % 2, (trial / 2) % 2};
      LgtParams params = parameter_dictionary(ExpProfile{1.0, beta}, h);
      params.g = g;
      const RealVector lgt = shifted_spectrum(build_lgt_hamiltonian(params, enumerate_gauge_sector(L + 1, boundary)));
      const RealVector ising = shifted_spectrum(
          build_hamiltonian(dual_ising_spec(ExpProfile{1.0, beta}, g, h, L + 1, boundary)).to_dense());
      worst = std::max(worst, (lgt - ising).cwiseAbs().maxCoeff());
      ++cases;
    }
  r.passed = worst < tol;
  r.metrics = {{"cases", cases}, {"max_abs_dlambda", worst}, {"tolerance", tol}};
  r.detail = fmt("max |dlambda| = %.2e over %.0f cases (limit %.0e)", worst, cases, tol);
}

void potential_oracle(CriterionResult& r, double scale) {
  const double tol = 1e-10 * scale;
  const int L = 13;
  double worst = 0.0;
  for (double h : {0.0, 0.3, 0.6}) {
    const HamiltonianSpec spec = model_spec(L, Environment::kString, 0.0, h);
    const SpinConfiguration base = string_configuration(L);
    const double e0 = classical_energy(base, spec);
    const PairBasis basis(L, spec.origin);
    for (int k = 0; k < basis.size(); ++k) {
      const auto [l1, l2] = basis.pair(k);
      std::vector<int> flipped = base.dynamical;
      for (int site = l1; site < l2; ++site) flipped[site - spec.origin] = 1;
      const double v = two_body_potential(l1, l2, 1.0, 0.78, h, L, spec.origin);
      worst = std::max(worst, std::abs(v - (classical_energy(flipped, spec) - e0)));
    }
  }
  r.passed = worst < tol;
  r.metrics = {{"max_abs_error", worst}, {"tolerance", tol}};
  r.detail = fmt("max |V - dE| = %.2e J over 3 x 91 pairs (limit %.0e)", worst, tol);
}

void virtual_field_oracle(CriterionResult& r, double scale) {
  const double tol = 1e-12 * scale;
  const int L = 13;
  const ExpProfile p{1.0, 0.78};
  const EnvironmentTails ct = make_tails(Environment::kCharge), st = make_tails(Environment::kString);
  const auto bf_c = brute_force_virtual_field(ct.left, ct.right, p, L, 200);
  const auto bf_s = brute_force_virtual_field(st.left, st.right, p, L, 200);
  const auto cf_c = virtual_field_charge(p, L), cf_s = virtual_field_string(p, L);
  double worst = 0.0;
  bool antisym = true, sym = true;
  for (int i = 0; i < L; ++i) {
    worst = std::max({worst, std::abs(cf_c[i] - bf_c[i]), std::abs(cf_s[i] - bf_s[i])});
    antisym = antisym && cf_c[i] == -cf_c[L - 1 - i];
    sym = sym && cf_s[i] == cf_s[L - 1 - i];
  }
  r.passed = worst < tol && antisym && sym;
  r.metrics = {{"max_abs_error", worst}, {"tolerance", tol}, {"charge_antisymmetric", antisym}, {"string_symmetric", sym}};
  r.detail = fmt("max |closed - brute| = %.2e J (limit %.0e)", worst, tol) +
             "; charge antisymmetric: " + (antisym ? "yes" : "no") + "; string symmetric: " + (sym ? "yes" : "no");
}

void propagation_fidelity(CriterionResult& r, double scale) {
  const double tol_psi = 1e-8 * scale, tol_norm = 1e-9 * scale, tol_energy = 1e-8 * 13 * scale;
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n;
  HamiltonianSpec spec;
  spec.L = 8;
  spec.J = exp_profile(1.0, 0.3 + u(rng), 8);
  spec.g = 0.2 + u(rng);
  spec.h = u(rng);
  spec.delta_h.resize(8);
  for (double& d : spec.delta_h) d = u(rng) - 0.5;
  spec.origin = default_origin(8);
  ComplexVector psi(256);
  for (auto& x : psi) x = cd(n(rng), n(rng));
  psi.normalize();
  const auto run = propagate(Wavefunction{8, psi}, spec, 0.05, 60);
  const double dpsi =
      (run.states.back().amplitudes - dense_evolve(build_hamiltonian(spec).to_dense(), psi, 3.0)).norm();

  const HamiltonianSpec big = model_spec(13, Environment::kString, 0.75, 0.6);
  const IsingOperator H = build_hamiltonian(big);
  const auto run13 = propagate(prepare_state(string_configuration(13)), H, 0.05, 60);
  const double e0 = H.expectation(run13.states.front().amplitudes);
  double norm_drift = 0.0, energy_drift = 0.0;
  for (const auto& s : run13.states) {
    norm_drift = std::max(norm_drift, std::abs(s.norm() - 1.0));
    energy_drift = std::max(energy_drift, std::abs(H.expectation(s.amplitudes) - e0));
  }
  r.passed = dpsi < tol_psi && norm_drift < tol_norm && energy_drift < tol_energy;
  r.metrics = {{"dpsi_L8", dpsi}, {"norm_drift_L13", norm_drift}, {"energy_drift_L13", energy_drift}};
  r.detail = fmt("|dpsi| = %.1e (limit %.0e), norm drift = %.1e, energy drift = %.1e J", dpsi, tol_psi, norm_drift,
                 energy_drift);
}

void light_cone(CriterionResult& r, double scale) {
  const double tol = 0.2 * scale;
  bool ok = true;
  std::string detail;
  for (double g : {0.3, 0.5}) {
    // Long enough for the front to cross five bonds at v = 2g.
    const double t_max = 0.05 * std::ceil(3.9 / g / 0.05);
    double v = 0.0;
    try {
      v = fit_light_cone(kink_quench(g, 0.0, t_max), 0.5, 5).velocity;
    } catch (const Error&) {
      v = 0.0;
    }
    const double rel = std::abs(v - 2.0 * g) / (2.0 * g);
    ok = ok && rel <= tol;
    r.metrics[fmt("g=%.1f", g)] = {{"velocity", v}, {"predicted", 2.0 * g}, {"relative_error", rel}};
    if (!detail.empty()) detail += ", ";
    detail += fmt("g=%.1f: v = %.3f vs %.2f", g, v, 2.0 * g);
  }
  r.passed = ok;
  r.detail = detail + fmt("; limit %.3g%%", 100.0 * tol);
}

void bloch_oscillations(CriterionResult& r, double scale) {
  const double tol = 0.25 * scale, g = 0.5, h = 0.4;
  const double A0 = 2.0 * g / h, T0 = M_PI / h;
  double A = 0.0, T = 0.0;
  try {
    const BlochFit fit = fit_bloch(kink_quench(g, h, 16.0), -6, 7);
    A = fit.amplitude;
    T = fit.period;
  } catch (const Error& e) {
    r.detail = e.what();
  }
  const double eA = std::abs(A - A0) / A0, eT = std::abs(T - T0) / T0;
  r.passed = eA <= tol && eT <= tol;
  r.metrics = {{"amplitude", A}, {"period", T}, {"amplitude_relative_error", eA}, {"period_relative_error", eT}};
  r.detail = fmt("A = %.3f vs %.2f, T = %.3f vs %.3f", A, A0, T, T0) + fmt(" (limit %.3g%%)", 100.0 * tol);
}

void edge_first_breaking(CriterionResult& r, double) {
  AnalysisSettings a;
  StringBreaking result[2];
  const double hs[2] = {0.0, 0.6};
  for (int k = 0; k < 2; ++k) {
    const HamiltonianSpec spec = model_spec(13, Environment::kString, 0.75, hs[k]);
    const auto run = propagate(prepare_state(string_configuration(13)), spec, 0.05, 60);
    result[k] = analyze_string_breaking(charge_map(run, make_tails(Environment::kString), spec.origin), 13,
                                        spec.origin, a);
  }
  const StringBreaking& b = result[1];
  const bool channel = result[1].bulk_charge > result[0].bulk_charge;
  r.passed = b.edge_first && channel;
  r.metrics = {{"first_bond", b.first_bond ? json(*b.first_bond) : json(nullptr)},
               {"first_time", std::isfinite(b.first_time) ? json(b.first_time) : json(nullptr)},
               {"first_bulk_time", std::isfinite(b.first_bulk_time) ? json(b.first_bulk_time) : json(nullptr)},
               {"bulk_charge_h0", result[0].bulk_charge},
               {"bulk_charge_h06", result[1].bulk_charge}};
  r.detail = (b.first_bond ? "first bond " + std::to_string(*b.first_bond) : std::string("no bond broke")) +
             fmt(" at Jt = %.2f, bulk at Jt = %.2f; bulk charge %.4f (h=0.6) vs %.4f (h=0)", b.first_time,
                 b.first_bulk_time, result[1].bulk_charge, result[0].bulk_charge);
}

void perturbative_consistency(CriterionResult& r, double scale) {
  const double tol = 0.25 * scale, h = 0.05;
  // max over Jt in [0, 2] of |P_pert - (1 - |<string|psi(t)>|^2)|
  auto max_error = [h](double g) {
    const HamiltonianSpec spec = model_spec(13, Environment::kString, g, h);
    const SpinConfiguration base = string_configuration(13);
    const auto run = propagate(prepare_state(base), spec, 0.05, 40);
    const PairPotential pot = pair_potential(1.0, 0.78, h, 13, spec.origin);
    const TwoBodyState s0 = initial_pair_state(g, pot);
    const auto states = evolve_pair(s0, build_heff(g, pot), run.times);
    const std::uint32_t string_index = basis_index(base.dynamical);
    double err = 0.0;
    for (std::size_t k = 0; k < run.times.size(); ++k) {
      const double exact = 1.0 - std::norm(run.states[k].amplitudes[string_index]);
      err = std::max(err, std::abs(exact - broken_probability(states[k], s0)));
    }
    return err;
  };
  const double e1 = max_error(0.1), e2 = max_error(0.05);
  const double ratio = e1 / e2;
  r.passed = std::abs(ratio / 16.0 - 1.0) <= tol;
  r.metrics = {{"error_g0.1", e1}, {"error_g0.05", e2}, {"ratio", ratio}};
  r.detail = fmt("max error %.2e (g=0.1), %.2e (g=0.05), ratio %.2f vs 16", e1, e2, ratio) +
             fmt(" (limit %.3g%%)", 100.0 * tol);
}

void thermal_baseline(CriterionResult& r, double scale) {
  const double tol = 1e-10 * scale;
  const HamiltonianSpec spec = model_spec(13, Environment::kString, 0.75, 0.6);
  const IsingOperator H = build_hamiltonian(spec);
  const auto run = propagate(prepare_state(string_configuration(13)), H, 0.05, 60);
  const double E0 = H.expectation(run.states.front().amplitudes);
  const SpectralData sd = spectrum(spec);
  const TemperatureMatch m = match_temperature(E0, sd);
  const LinearOperator op = [&H](const ComplexVector& in, ComplexVector& out) { H.apply(in, out); };
  const double lanczos = lanczos_ground_energy(op, std::int64_t{1} << 13);
  const double ground_gap = std::abs(lanczos - sd.eigenvalues[0]);

  // Bulk eps(Jt = 3) against the matched thermal profile.
  const std::vector<double> eps = electric_field(run.states.back());
  const std::vector<double> eps_th = gibbs_observable(sd, m.T);
  const std::vector<int> labels = site_labels(13, spec.origin);
  int positive = 0, negative = 0;
  json diffs = json::array();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::abs(labels[i]) > 3) continue;
    const double d = eps[i] - eps_th[i];
    diffs.push_back(d);
    positive += d > 0;
    negative += d < 0;
  }
  const bool definite = (positive == 0) != (negative == 0);

  // g = 0: Gibbs traces against explicit Boltzmann sums over the 2^10 states.
  const HamiltonianSpec classical = model_spec(10, Environment::kString, 0.0, 0.6);
  const SpectralData sc = spectrum(classical);
  double gibbs_error = 0.0;
  std::vector<double> e(1u << 10);
  double e_min = 1e300;
  for (std::uint32_t s = 0; s < e.size(); ++s)
    e_min = std::min(e_min, e[s] = classical_energy(spins_from_index(s, 10), classical));
  for (double T : {0.3, 1.0, 5.0}) {
    double part = 0.0, energy = 0.0;
    std::vector<double> z(10, 0.0);
    for (std::uint32_t s = 0; s < e.size(); ++s) {
      const double w = std::exp(-(e[s] - e_min) / T);
      part += w;
      energy += w * e[s];
      const std::vector<int> spins = spins_from_index(s, 10);
      for (int i = 0; i < 10; ++i) z[i] += w * spins[i];
    }
    const std::vector<double> got = gibbs_observable(sc, T);
    for (int i = 0; i < 10; ++i) gibbs_error = std::max(gibbs_error, std::abs(got[i] - z[i] / part));
    gibbs_error = std::max(gibbs_error, std::abs(gibbs_energy(sc, T) - energy / part) / std::max(1.0, std::abs(energy / part)));
  }

  r.passed = m.residual < tol && gibbs_error < tol && definite && ground_gap < 1e-9 &&
             sd.max_residual < 1e-8 * std::max(1.0, spec.J.cwiseAbs().maxCoeff());
  r.metrics = {{"E0", E0},
               {"T", std::isfinite(m.T) ? json(m.T) : json("inf")},
               {"match_residual", m.residual},
               {"gibbs_classical_error", gibbs_error},
               {"lanczos_vs_dense_ground", ground_gap},
               {"eigen_residual", sd.max_residual},
               {"bulk_eps_minus_thermal", diffs},
               {"definite_sign", definite}};
  r.detail = fmt("T = %.4f, match residual %.1e, g=0 Gibbs error %.1e (limit %.0e)", m.T, m.residual, gibbs_error,
                 tol) +
             "; bulk eps - thermal " + (definite ? (positive ? "all positive" : "all negative") : "mixed sign");
}

void coupling_synthesis(CriterionResult& r, double scale) {
  const CalibrationReport c = calibrate();
  const double ratio = std::abs(c.nnn.mean / c.nn.mean);
  const bool ok_alpha = std::abs(c.fit.alpha) <= 0.1 * scale;
  const bool ok_beta = std::abs(c.fit.beta - 0.78) <= 0.1 * scale;
  const bool ok_spread = c.nn.relative_spread <= 0.05 * scale;
  const bool ok_ratio = std::abs(ratio - 0.29) <= 0.1 * scale;
  r.passed = ok_alpha && ok_beta && ok_spread && ok_ratio;
  r.metrics = {{"alpha", c.fit.alpha},
               {"beta", c.fit.beta},
               {"nn_relative_spread", c.nn.relative_spread},
               {"nnn_over_nn", ratio},
               {"alpha_ok", ok_alpha},
               {"beta_ok", ok_beta},
               {"spread_ok", ok_spread},
               {"ratio_ok", ok_ratio}};
  r.detail = fmt("alpha = %.3f, beta = %.3f, NN spread = %.2e, NNN/NN = %.3f", c.fit.alpha, c.fit.beta,
                 c.nn.relative_spread, ratio) +
             fmt(" (windows 0+-%.2f, 0.78+-%.2f, <=%.3f, 0.29+-%.2f)", 0.1 * scale, 0.1 * scale, 0.05 * scale,
                 0.1 * scale);
}

void shot_noise(CriterionResult& r, double scale, const std::filesystem::path& work_dir) {
  const double k = 3.0 * scale;
  Scenario s = load_scenario(std::filesystem::path(STRINGSIM_SCENARIO_DIR) / "fig3_string.toml");
  s.outputs.thermal = false;
  s.outputs.twobody = false;
  s.outputs.maps = true;
  if (s.protocol.shots <= 0) throw ConfigError("fig3_string.toml: protocol.shots must be positive");
  RunOptions options;
  options.out = work_dir;
  const auto results = run_scenario(s, options);
  int within = 0, total = 0;
  double worst = 1.0;
  for (const PointResult& p : results) {
    const auto exact = read_map_csv(p.directory / "emap.csv");
    const auto shots = read_map_csv(p.directory / "emap_shots.csv");
    int w = 0, n = 0;
    for (const auto& [key, value] : exact) {
      const auto it = shots.find(key);
      if (it == shots.end()) throw Error("emap_shots.csv lacks a point present in emap.csv");
      const double e = value.first, se = it->second.second;
      const double combined = std::sqrt(se * se + std::max(0.0, 1.0 - e * e) / s.protocol.shots);
      w += std::abs(it->second.first - e) <= k * combined;
      ++n;
    }
    within += w;
    total += n;
    worst = std::min(worst, static_cast<double>(w) / n);
  }
  const double fraction = static_cast<double>(within) / total;
  r.passed = fraction >= 0.95;
  r.metrics = {{"fraction_within", fraction}, {"worst_point_fraction", worst}, {"points", total},
               {"shots", s.protocol.shots}, {"seed", s.protocol.seed}, {"k", k}};
  r.detail = fmt("%.1f%% of %.0f (site, time) points within %.1f combined SE (need 95%%)", 100.0 * fraction, total, k);
}

}  // namespace

std::vector<std::string> criterion_ids() {
  return {"duality_oracle",   "potential_oracle",    "virtual_field_oracle",     "propagation_fidelity",
          "light_cone",       "bloch_oscillations",  "edge_first_breaking",      "perturbative_consistency",
          "thermal_baseline", "coupling_synthesis",  "shot_noise"};
}

std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& options) {
  const std::vector<Check> checks = {
      {"duality_oracle", "gauge sector and dual Ising spectra agree", 10.0, duality_oracle},
      {"potential_oracle", "two-body potential equals classical energy difference", 1.0, potential_oracle},
      {"virtual_field_oracle", "closed-form virtual fields match static-tail sums", 1.0, virtual_field_oracle},
      {"propagation_fidelity", "Krylov evolution matches dense evolution", 30.0, propagation_fidelity},
      {"light_cone", "kink front moves at 2g", 60.0, light_cone},
      {"bloch_oscillations", "Bloch amplitude 2g/h and period pi/h", 120.0, bloch_oscillations},
      {"edge_first_breaking", "string breaks at the edges first", 120.0, edge_first_breaking},
      {"perturbative_consistency", "first-order error shrinks 16x when g halves", 120.0, perturbative_consistency},
      {"thermal_baseline", "thermal matching and out-of-equilibrium bulk", 600.0, thermal_baseline},
      {"coupling_synthesis", "ion-trap couplings fit the exponential model", 60.0, coupling_synthesis},
      {"shot_noise", "300-shot estimates agree with exact eps", 60.0,
       [&options](CriterionResult& r, double scale) { shot_noise(r, scale, options.work_dir); }},
  };
  for (const std::string& id : options.filter)
    if (std::none_of(checks.begin(), checks.end(), [&id](const Check& c) { return c.id == id; }))
      throw ConfigError("unknown criterion '" + id + "'");
  if (!(options.tolerance_scale > 0.0)) throw ConfigError("tolerance scale must be positive");

  std::vector<CriterionResult> results;
  for (const Check& check : checks) {
    if (!options.filter.empty() && std::find(options.filter.begin(), options.filter.end(), check.id) == options.filter.end())
      continue;
    CriterionResult r;
    r.id = check.id;
    r.title = check.title;
    r.budget = check.budget;
    const auto start = std::chrono::steady_clock::now();
    try {
      check.run(r, options.tolerance_scale);
    } catch (const std::exception& e) {
      r.passed = false;
      r.detail = std::string("error: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (r.seconds > r.budget) {
      r.passed = false;
      r.detail += fmt("; over budget (%.1f s > %.0f s)", r.seconds, r.budget);
    }
    if (options.on_result) options.on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

std::string format_result(const CriterionResult& r) {
  return std::string(r.passed ? "PASS " : "FAIL ") + r.id + fmt(" (%.1f s / %.0f s): ", r.seconds, r.budget) + r.detail;
}

nlohmann::json to_json(const std::vector<CriterionResult>& results) {
  json out = json::array();
  for (const CriterionResult& r : results)
    out.push_back({{"id", r.id},
                   {"title", r.title},
                   {"passed", r.passed},
                   {"seconds", r.seconds},
                   {"budget", r.budget},
                   {"detail", r.detail},
                   {"metrics", r.metrics}});
  return out;
}

}  // namespace stringsim
