#include "stringsim/twobody.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "stringsim/errors.hpp"
#include "stringsim/evolve.hpp"

namespace stringsim {

PairBasis::PairBasis(int L, int origin) : L_(L), origin_(origin) {
  if (L < 1 || L > kMaxSpins) throw SizeLimit("PairBasis: L out of range");
  for (int l1 = origin; l1 <= origin + L; ++l1)
    for (int l2 = l1 + 1; l2 <= origin + L; ++l2) pairs_.emplace_back(l1, l2);
}

bool PairBasis::contains(int l1, int l2) const { return origin_ <= l1 && l1 < l2 && l2 <= origin_ + L_; }

int PairBasis::index(int l1, int l2) const {
  if (!contains(l1, l2))
    throw IndexOutOfRange("pair (" + std::to_string(l1) + "," + std::to_string(l2) + ") outside the triangle");
  // Rows a = l1 - origin hold L - a pairs each.
  const int a = l1 - origin_;
  return a * L_ - a * (a - 1) / 2 + (l2 - l1 - 1);
}

std::pair<int, int> PairBasis::pair(int index) const {
  if (index < 0 || index >= size()) throw IndexOutOfRange("pair index out of range");
  return pairs_[index];
}

double two_body_potential(int l1, int l2, double J, double beta, double h, int L, int origin) {
  if (!(origin <= l1 && l1 < l2 && l2 <= origin + L))
    throw IndexOutOfRange("two_body_potential: need origin <= l1 < l2 <= origin + L");
  // Positions counted from the left static charge: a, b in 1..L+1.
  const int a = l1 - origin + 1;
  const int b = l2 - origin + 1;
  const double x = std::exp(-beta);
  const double pref = 4.0 * J / ((1.0 - x) * (1.0 - x));
  // Grouped so that the reflection a -> L+2-b, b -> L+2-a only permutes the
  // operands of the two inner sums, which keeps V exactly mirror symmetric.
  const double bracket = ((1.0 - std::pow(x, b - a)) + (std::pow(x, b) + std::pow(x, L + 2 - a))) -
                         (std::pow(x, a) + std::pow(x, L + 2 - b));
  return pref * bracket - 2.0 * h * (l2 - l1);
}

PairPotential pair_potential(double J, double beta, double h, int L, int origin) {
  PairPotential p{PairBasis(L, origin), RealVector(L * (L + 1) / 2), J};
  for (int k = 0; k < p.basis.size(); ++k) {
    const auto [l1, l2] = p.basis.pair(k);
    p.V[k] = two_body_potential(l1, l2, J, beta, h, L, origin);
  }
  return p;
}

TwoBodyState initial_pair_state(double g, const PairPotential& potential, double tol) {
  const PairBasis& basis = potential.basis;
  TwoBodyState state{ComplexVector::Zero(basis.size()), 0.0};
  for (int l = basis.origin(); l < basis.origin() + basis.L(); ++l) {
    const double V = potential.at(l, l + 1);
    if (std::abs(V) < tol * potential.J)
      throw ResonantDenominator("initial_pair_state: V(" + std::to_string(l) + "," + std::to_string(l + 1) +
                                ") = " + std::to_string(V) + " is resonant");
    state.amplitudes[basis.index(l, l + 1)] = std::complex<double>(0.0, g / V);
  }
  return state;
}

RealMatrix build_heff(double g, const PairPotential& potential) {
  const PairBasis& basis = potential.basis;
  const int n = basis.size();
  RealMatrix H = RealMatrix::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    H(k, k) = potential.V[k];
    const auto [l1, l2] = basis.pair(k);
    const std::pair<int, int> moves[] = {{l1 - 1, l2}, {l1 + 1, l2}, {l1, l2 - 1}, {l1, l2 + 1}};
    for (const auto& [m1, m2] : moves)
      if (basis.contains(m1, m2)) H(basis.index(m1, m2), k) = -g;
  }
  return H;
}

std::vector<TwoBodyState> evolve_pair(const TwoBodyState& state0, const RealMatrix& heff,
                                      const std::vector<double>& times) {
  if (heff.rows() != state0.amplitudes.size()) throw InvalidArgument("evolve_pair: dimension mismatch");
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(heff);
  const Eigen::MatrixXcd V = es.eigenvectors().cast<std::complex<double>>();
  const Eigen::VectorXcd c0 = V.adjoint() * state0.amplitudes;
  std::vector<TwoBodyState> out;
  out.reserve(times.size());
  for (double t : times) {
    if (t == 0.0) {
      out.push_back({state0.amplitudes, state0.time});
      continue;
    }
    Eigen::VectorXcd c = c0;
    for (int k = 0; k < c.size(); ++k) c[k] *= std::exp(std::complex<double>(0.0, -es.eigenvalues()[k] * t));
    out.push_back({V * c, state0.time + t});
  }
  return out;
}

double broken_probability(const TwoBodyState& state_t, const TwoBodyState& state_0) {
  if (state_t.amplitudes.size() != state_0.amplitudes.size())
    throw InvalidArgument("broken_probability: states live on different bases");
  const auto& a = state_0.amplitudes;
  return 2.0 * (a.dot(a).real() - a.dot(state_t.amplitudes).real());
}

ComplexVector first_order_wavefunction(const TwoBodyState& state0, const TwoBodyState& state_t,
                                       const PairBasis& basis, const SpinConfiguration& base) {
  if (base.size() != basis.L()) throw InvalidArgument("first_order_wavefunction: base length differs from L");
  const int L = basis.L();
  ComplexVector psi = ComplexVector::Zero(std::int64_t{1} << L);
  const std::uint32_t base_index = basis_index(base.dynamical);
  psi[base_index] = 1.0;
  for (int k = 0; k < basis.size(); ++k) {
    const auto [l1, l2] = basis.pair(k);
    std::uint32_t idx = base_index;
    for (int site = l1; site < l2; ++site) idx ^= 1u << (site - basis.origin());
    psi[idx] += state_t.amplitudes[k] - state0.amplitudes[k];
  }
  return psi.normalized();
}

ReconstructedObservables reconstruct_observables(const TwoBodyState& state0, const TwoBodyState& state_t,
                                                 const PairBasis& basis, const SpinConfiguration& base) {
  const Wavefunction psi{basis.L(), first_order_wavefunction(state0, state_t, basis, base)};
  return {charge_density(psi, {base.left, base.right}), electric_field(psi)};
}

std::vector<std::pair<int, int>> resonant_configs(const PairPotential& potential, double tol) {
  if (!(tol > 0.0)) throw InvalidArgument("resonant_configs: tol must be positive");
  std::vector<std::pair<int, int>> out;
  for (int k = 0; k < potential.basis.size(); ++k)
    if (std::abs(potential.V[k]) < tol * potential.J) out.push_back(potential.basis.pair(k));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return std::pair(a.second - a.first, a.first) < std::pair(b.second - b.first, b.first);
  });
  return out;
}

std::string potential_csv(const PairPotential& potential) {
  std::ostringstream out;
  out << "l1,l2,V\n";
  char buf[32];
  for (int k = 0; k < potential.basis.size(); ++k) {
    const auto [l1, l2] = potential.basis.pair(k);
    std::snprintf(buf, sizeof buf, "%.12g", potential.V[k]);
    out << l1 << ',' << l2 << ',' << buf << '\n';
  }
  return out.str();
}

}  // namespace stringsim
