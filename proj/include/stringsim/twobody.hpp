#pragma once

#include <string>
#include <utility>
#include <vector>

#include "stringsim/model.hpp"

namespace stringsim {

/// Ordered charge pairs (l1, l2) on bonds origin <= l1 < l2 <= origin + L,
/// flattened row by row in l1.
class PairBasis {
 public:
  PairBasis(int L, int origin);

  int L() const { return L_; }
  int origin() const { return origin_; }
  int size() const { return L_ * (L_ + 1) / 2; }
  bool contains(int l1, int l2) const;
  /// Throws IndexOutOfRange for pairs outside the triangle.
  int index(int l1, int l2) const;
  std::pair<int, int> pair(int index) const;

 private:
  int L_;
  int origin_;
  std::vector<std::pair<int, int>> pairs_;
};

/// Energy of the configuration with charges on bonds l1 < l2 relative to the
/// intact string (all dynamical spins down, static charges just outside).
/// Spins l1..l2-1 are flipped up. Centered bond labels.
double two_body_potential(int l1, int l2, double J, double beta, double h, int L, int origin);
inline double two_body_potential(int l1, int l2, double J, double beta, double h, int L) {
  return two_body_potential(l1, l2, J, beta, h, L, default_origin(L));
}

/// V on every pair of the basis.
struct PairPotential {
  PairBasis basis;
  RealVector V;
  double J = 1.0;

  double at(int l1, int l2) const { return V[basis.index(l1, l2)]; }
};

PairPotential pair_potential(double J, double beta, double h, int L, int origin);
inline PairPotential pair_potential(double J, double beta, double h, int L) {
  return pair_potential(J, beta, h, L, default_origin(L));
}

struct TwoBodyState {
  ComplexVector amplitudes;
  double time = 0.0;
};

/// First-order pair amplitude i g / V_{l,l+1} on adjacent pairs.
/// Throws ResonantDenominator if some |V_{l,l+1}| < tol * J.
TwoBodyState initial_pair_state(double g, const PairPotential& potential, double tol = 1e-8);

/// Diagonal V plus hopping -g between pairs that differ by one step of one
/// charge, inside the triangle.
RealMatrix build_heff(double g, const PairPotential& potential);

/// exp(-i H_eff t) applied to state0 for each t.
std::vector<TwoBodyState> evolve_pair(const TwoBodyState& state0, const RealMatrix& heff,
                                      const std::vector<double>& times);

/// 2 (<psi1(0)|psi1(0)> - Re <psi1(0)|psi1(t)>)
double broken_probability(const TwoBodyState& state_t, const TwoBodyState& state_0);

/// Full 2^L wavefunction |base> + sum_pairs (c_t - c_0) |base with l1..l2-1
/// flipped>, renormalized. The common phase exp(-i t E_0) is dropped.
ComplexVector first_order_wavefunction(const TwoBodyState& state0, const TwoBodyState& state_t,
                                       const PairBasis& basis, const SpinConfiguration& base);

struct ReconstructedObservables {
  std::vector<double> q;    // on charge_bond_labels
  std::vector<double> eps;  // on site_labels
};

ReconstructedObservables reconstruct_observables(const TwoBodyState& state0, const TwoBodyState& state_t,
                                                 const PairBasis& basis, const SpinConfiguration& base);

/// Pairs with |V| < tol * J, sorted by separation, then by l1.
std::vector<std::pair<int, int>> resonant_configs(const PairPotential& potential, double tol);

/// l1,l2,V rows.
std::string potential_csv(const PairPotential& potential);

}  // namespace stringsim
