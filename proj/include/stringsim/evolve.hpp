#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stringsim/krylov.hpp"
#include "stringsim/model.hpp"

namespace stringsim {

/// Normalized state over the 2^L z-basis (bit k set when site k is down).
struct Wavefunction {
  int L = 0;
  ComplexVector amplitudes;

  double norm() const { return amplitudes.norm(); }
  /// |amplitude|^2 per basis state.
  RealVector probabilities() const { return amplitudes.cwiseAbs2(); }
};

Wavefunction prepare_state(const SpinConfiguration& config);

struct PropagationResult {
  std::vector<double> times;
  std::vector<Wavefunction> states;  // states[k] at times[k]; states[0] is the input
  KrylovStats stats;
};

/// Exact evolution under H in n_steps steps of length dt. Each step applies
/// exp(-i H dt) through krylov_step.
PropagationResult propagate(const Wavefunction& psi, const IsingOperator& H, double dt, int n_steps,
                            const KrylovOptions& options = {});
PropagationResult propagate(const Wavefunction& psi, const HamiltonianSpec& spec, double dt, int n_steps,
                            const KrylovOptions& options = {});

// ---------------------------------------------------------------------------
// Observables
// ---------------------------------------------------------------------------

/// Bond labels reported by charge_density: origin-1 .. origin+L+1. Bond b sits
/// between spins b-1 and b, so the first and last bonds lie entirely in the
/// environment.
std::vector<int> charge_bond_labels(int L, int origin);
std::vector<int> site_labels(int L, int origin);

/// q_b = (1 - <z_{b-1} z_b>)/2. Static spins enter as fixed +-1; a bond that
/// touches an open end carries no charge.
std::vector<double> charge_density(const Wavefunction& psi, const EnvironmentTails& tails);
/// eps_i = <z_i> on the dynamical sites.
std::vector<double> electric_field(const Wavefunction& psi);

/// Counter-based generator: output k is a SplitMix64 hash of (seed, k).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}
  std::uint64_t bits(std::uint64_t counter) const;
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform(std::uint64_t counter) const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

struct ShotEstimate {
  std::uint64_t seed = 0;
  int n_shots = 0;
  std::map<std::uint32_t, int> histogram;
  std::vector<double> q, q_stderr;      // on charge_bond_labels
  std::vector<double> eps, eps_stderr;  // on site_labels
};

/// Projective z-basis measurements drawn from |amplitude|^2. Standard errors
/// are sample standard deviations over sqrt(n).
ShotEstimate sample_shots(const Wavefunction& psi, const EnvironmentTails& tails, int n_shots, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Maps and fits
// ---------------------------------------------------------------------------

/// Time x label grid of one observable.
struct SpatiotemporalMap {
  std::string observable;  // "q" or "eps"
  std::vector<double> times;
  std::vector<int> labels;
  RealMatrix values;                 // rows: times, columns: labels
  std::optional<RealMatrix> stderr;  // same shape when present

  int column(int label) const;
};

SpatiotemporalMap charge_map(const PropagationResult& run, const EnvironmentTails& tails, int origin);
SpatiotemporalMap field_map(const PropagationResult& run, int origin);

/// Long format, one row per (time, label): time,site,value,stderr. A missing
/// stderr is written as an empty field.
std::string to_csv(const SpatiotemporalMap& map);
void to_json(nlohmann::json& j, const SpatiotemporalMap& map);

/// First time each column rises to `threshold`, linearly interpolated between
/// samples; NaN for columns that never do. A column already at or above the
/// threshold at t=0 reports times[0].
std::vector<double> first_crossing_times(const SpatiotemporalMap& map, double threshold);

struct LightConeFit {
  double velocity = 0.0;
  double intercept = 0.0;
  double residual = 0.0;  // rms of |d| - (v t + c)
  std::vector<int> bonds;
  std::vector<double> arrival_times;
};

/// Front velocity of a kink released at bond 0. Bond d counts as reached at
/// the first time q_d crosses threshold * max_t q_d (linear interpolation
/// between samples); v is the least-squares slope of |d| against arrival
/// time over 1 <= |d| <= max_distance. Bonds whose peak stays below 1e-3 are
/// never reached.
LightConeFit fit_light_cone(const SpatiotemporalMap& qmap, double threshold, int max_distance);

struct BlochFit {
  double amplitude = 0.0;
  double amplitude_error = 0.0;
  double period = 0.0;
  double period_error = 0.0;
  std::vector<double> mean_position;
  std::vector<double> spread;  // sqrt(2 Var_t) over the bond window
  double background = 0.0;     // fitted constant part of Var_t
};

/// Bloch amplitude and period of a kink released from a single bond.
///
/// The period is the first revival of q on the release bond (the column
/// holding the largest charge at t=0), refined by a parabola through the
/// neighbouring samples. An ideal Wannier-Stark packet has position variance
/// (A^2/2) sin^2(pi t / T); Var_t over [first_bond, last_bond] is fitted to
/// a sin^2(pi t / T) + c at the measured T, where c absorbs the stationary
/// pair fluctuations, and A = sqrt(2a).
BlochFit fit_bloch(const SpatiotemporalMap& qmap, int first_bond, int last_bond);

}  // namespace stringsim
