#pragma once

#include <span>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stringsim/model.hpp"

namespace stringsim {

/// Classical configuration of the Z2 gauge theory on an open segment.
///
/// Link k carries the electric field n_k in {0,1}; matter site k sits between
/// links k and k+1, so there is one more link than there are sites. The two
/// outermost links are the boundary links. `origin` is the centered label of
/// links[0]; site k then corresponds to spin-chain bond `origin + k + 1`.
struct GaugeConfig {
  std::vector<int> occupations;
  std::vector<int> links;
  int origin = 0;

  int num_sites() const { return static_cast<int>(occupations.size()); }
  bool operator==(const GaugeConfig&) const = default;
};

/// Gauss law G_k = (-1)^(n_k + n_{k+1} + c^dag_k c_k) = +1 on every site.
bool satisfies_gauss_law(const GaugeConfig& gauge);

/// Spins are +-1 along a window; every adjacent pair defines one matter site.
GaugeConfig spins_to_gauge(std::span<const int> spins, int origin = 0);
/// Maps the dynamical region plus `pad` static spins on each side.
GaugeConfig spins_to_gauge(const SpinConfiguration& config, int pad = 1);

/// Rebuilds the spin window from the charges alone, starting from
/// `leftmost_spin`. The two choices of leftmost spin give globally flipped
/// windows. Throws GaussViolation on invalid input.
std::vector<int> gauge_to_spins(const GaugeConfig& gauge, int leftmost_spin);

inline constexpr int kMaxSectorSites = 14;
inline constexpr int kMaxLgtSites = 12;

/// All Gauss-law states on `num_sites` sites with the two boundary links
/// fixed, ordered lexicographically in the link configuration.
std::vector<GaugeConfig> enumerate_gauge_sector(int num_sites, std::pair<int, int> boundary_links);

struct LgtParams {
  double g = 0.0;
  double m = 0.0;
  double kappa = 0.0;
  /// v[r] for r = 0..R; entries 0 and 1 are unused and zero.
  std::vector<double> v;

  double v_at(int r) const { return r >= 0 && r < static_cast<int>(v.size()) ? v[r] : 0.0; }
};

/// Gauge-theory couplings dual to an Ising chain with couplings J_r and
/// longitudinal field h: m = 2 J_1, v_r = 4 J_r, kappa = 2h + sum_{r>=2} v_r.
/// `J_profile[r-1]` holds J_r.
LgtParams parameter_dictionary(std::span<const double> J_profile, double h);
/// Same, for J_r = J e^{-beta(r-1)}; kappa uses the closed-form tail and v_r
/// is truncated once J_r < 1e-12 J_1.
LgtParams parameter_dictionary(const ExpProfile& profile, double h);

/// Dense H_LGT restricted to a gauge sector: minimal coupling on interior
/// links, rest mass, uniform electric cost and long-range field interaction.
RealMatrix build_lgt_hamiltonian(const LgtParams& params, const std::vector<GaugeConfig>& sector);

/// Ising chain dual to a gauge sector: the interior links become the
/// dynamical spins, the boundary links become the edge spins of two
/// otherwise all-up static tails.
HamiltonianSpec dual_ising_spec(const ExpProfile& profile, double g, double h, int num_sites,
                                std::pair<int, int> boundary_links);

void to_json(nlohmann::json& j, const GaugeConfig& gauge);
void from_json(const nlohmann::json& j, GaugeConfig& gauge);

}  // namespace stringsim
