#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "stringsim/model.hpp"

namespace stringsim {

/// Eigenvalues of H plus what the Gibbs traces need: the diagonal of every
/// sigma^z_i in the eigenbasis.
struct SpectralData {
  int L = 0;
  RealVector eigenvalues;                // ascending
  RealMatrix sigma_z;                    // L x dim, column n belongs to eigenvalues[n]
  std::optional<RealMatrix> eigenvectors;  // dim x dim, columns in the same order
  std::string spec_hash;
  bool reflection_blocks = false;  // solved as two mirror-parity sectors
  double max_residual = 0.0;       // max |H v - lambda v| over the sampled pairs
};

struct SpectrumOptions {
  /// Keep eigenvectors only up to this size; L=13 would need 512 MB.
  int store_eigenvectors_up_to_L = 10;
  /// Estimated peak memory above this throws MemoryLimit.
  std::int64_t memory_limit_bytes = std::int64_t{4} << 30;
  int residual_samples = 10;
  std::uint64_t residual_seed = 1;
};

inline constexpr int kMaxThermalSpins = 13;

/// Full diagonalization. When J is persymmetric and delta_h mirror symmetric,
/// H commutes with the site reflection and the two parity sectors are solved
/// separately; otherwise the whole matrix is.
SpectralData spectrum(const HamiltonianSpec& spec, const SpectrumOptions& options = {});

/// T = infinity denotes the maximally mixed state.
inline constexpr double kInfiniteTemperature = std::numeric_limits<double>::infinity();

/// Tr[H rho(T)], with Boltzmann weights shifted by the ground energy.
double gibbs_energy(const SpectralData& spectral, double T);

struct TemperatureMatch {
  double T = 0.0;
  double residual = 0.0;  // |E(T) - E0| / |E0|
};

/// Solves Tr[H rho(T)] = E0 for T > 0. E0 equal to the spectral mean returns
/// kInfiniteTemperature; E0 above the mean or at or below the ground energy
/// throws OutOfBracket.
TemperatureMatch match_temperature(double E0, const SpectralData& spectral);

/// Tr[sigma^z_i rho(T)] per site.
std::vector<double> gibbs_observable(const SpectralData& spectral, double T);

/// Thermal profile in the map CSV schema, with "thermal" in the time column.
std::string thermal_csv(const std::vector<int>& labels, const std::vector<double>& values);

}  // namespace stringsim
