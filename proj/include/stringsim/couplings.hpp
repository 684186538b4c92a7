#pragma once

#include <string>
#include <vector>

#include "stringsim/errors.hpp"
#include "stringsim/model.hpp"

namespace stringsim {

inline constexpr double kTwoPi = 6.283185307179586476925287;

/// Transverse phonon modes of a linear ion crystal. Column k of `participation`
/// belongs to frequencies[k]; frequencies descend, so the last mode is the
/// zig-zag mode.
struct ModeData {
  RealVector frequencies;    // rad/s
  RealMatrix participation;  // ions x modes, orthonormal
};

struct BeamProfile {
  RealVector rabi;              // rad/s per ion, zero on undriven ions
  std::vector<int> phase_flip;  // +1 or -1 per ion
};

struct IonSpecies {
  double mass_kg = 170.936323 * 1.66053906660e-27;  // 171Yb+
  double charge_c = 1.602176634e-19;
};

/// Equally spaced positions centered on zero.
std::vector<double> uniform_positions(int n, double spacing_m);

/// Throws DegenerateGeometry on coincident or unsorted positions and when the
/// transverse confinement is too weak for a linear crystal.
ModeData transverse_modes(const std::vector<double>& positions_m, double radial_com_frequency,
                          const IonSpecies& species = {});

/// Radial trap frequency that puts the lowest transverse mode at `zigzag`.
double radial_frequency_for_zigzag(const std::vector<double>& positions_m, double zigzag,
                                   const IonSpecies& species = {});

struct DriveSettings {
  double omega_laser = kTwoPi * 2.78e6;  // reference frequency the detuning is applied to
  double lamb_dicke = 0.08;              // eta_{i,k} = lamb_dicke * b_{i,k}
  double resonance_floor = kTwoPi * 1e3;
};

/// J_ij = f_i f_j sum_k eta_ik eta_jk Omega_i Omega_j / (omega_L + mu - omega_k)
/// over the active ions, in the order given. f is the beam phase flip.
RealMatrix jij_from_modes(const ModeData& modes, const BeamProfile& beams, double mu,
                          const std::vector<int>& active, const DriveSettings& drive = {});

/// J'_ij = (-1)^(i+j) J_ij. An involution.
RealMatrix stagger_correction(const RealMatrix& J);

struct OptimizerOptions {
  double nnn_weight = 0.25;
  int max_iterations = 200;
  double tolerance = 1e-12;  // relative objective change that counts as converged
  bool stagger = true;       // optimize the stagger-corrected matrix
  /// Relative starting profile over the active ions; empty means uniform.
  std::vector<double> initial;
  DriveSettings drive;
};

struct AmplitudeFit {
  BeamProfile beams;
  double objective = 0.0;  // sum (J_{i,i+1}/t - 1)^2 + w Var(J_{i,i+2}/|t|), t the signed target
  int iterations = 0;
  std::vector<double> history;  // objective after each accepted step
};

/// Raised with the best iterate when the optimizer stalls before converging.
class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& what, AmplitudeFit best) : Error(what), best_(std::move(best)) {}
  const AmplitudeFit& best() const { return best_; }

 private:
  AmplitudeFit best_;
};

/// Levenberg-Marquardt over the active Rabi frequencies, starting from the
/// initial profile rescaled to hit target_nn on average. target_nn is a magnitude;
/// the sign of the NN couplings is whatever the drive produces.
AmplitudeFit optimize_amplitudes(const ModeData& modes, double mu, double target_nn, const std::vector<int>& active,
                                 const OptimizerOptions& options = {});

struct ProfileFit {
  double J = 0.0;
  double beta = 0.0;
  double alpha = 0.0;
  double residual = 0.0;  // rms of the log fit
  std::vector<double> range_average;  // index r-1 holds the mean |J_{i,i+r}|
};

/// Log-linear least squares of J_r = J exp(-beta (r-1)) r^-alpha on the
/// range-averaged magnitudes for r = 1..max_range. max_range <= 0 selects
/// max(3, (n-1)/2): longer ranges average over fewer than half the pairs and
/// carry the finite-chain cutoff. range_average always covers every range.
/// Throws IllConditioned with fewer than 3 ranges or a vanishing average.
ProfileFit fit_profile(const RealMatrix& J, int max_range = 0);

/// Mean and relative standard deviation of J_{i,i+r}.
struct RangeStats {
  double mean = 0.0;
  double relative_spread = 0.0;
};
RangeStats range_stats(const RealMatrix& J, int r);

std::string matrix_csv(const RealMatrix& M, const std::string& unit);
RealMatrix read_matrix_csv(const std::string& text);
std::string modes_csv(const ModeData& modes);

/// The synthesized experiment: 15 ions at 3.75 um, zig-zag at 2 pi 2.78 MHz,
/// mu = -2 pi 35 kHz, the central 13 ions driven.
struct CalibrationReport {
  ModeData modes;
  std::vector<int> active;
  AmplitudeFit amplitudes;
  RealMatrix J;  // stagger corrected, in the model sign convention, rad/s
  ProfileFit fit;
  RangeStats nn;
  RangeStats nnn;
};

struct CalibrationSettings {
  int ions = 15;
  int active = 13;
  double spacing_m = 3.75e-6;
  double zigzag = kTwoPi * 2.78e6;
  double mu = -kTwoPi * 35e3;
  double target_nn = kTwoPi * 0.34e3;
  OptimizerOptions optimizer;
};

CalibrationReport calibrate(const CalibrationSettings& settings = {});

}  // namespace stringsim
