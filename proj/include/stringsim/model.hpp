#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace stringsim {

using RealMatrix = Eigen::MatrixXd;
using RealVector = Eigen::VectorXd;
using ComplexVector = Eigen::VectorXcd;

/// Memory cap on the dynamical region.
inline constexpr int kMaxSpins = 24;

/// Centered label of the leftmost dynamical spin, -(L-1)/2 rounded toward zero.
constexpr int default_origin(int L) { return -((L - 1) / 2); }

// ---------------------------------------------------------------------------
// Static environments
// ---------------------------------------------------------------------------

enum class TailKind {
  kOpen,             // no static spins at all
  kAllUp,
  kAllDown,
  kUpWithEdgeDown,   // the spin touching the chain is down, everything beyond is up
  kDownWithEdgeUp,
};

/// A semi-infinite static spin array attached to one end of the chain.
///
/// Spins are addressed by distance from the chain: distance 1 is the static
/// spin adjacent to the outermost dynamical spin. `prefix` overrides the
/// pattern implied by `kind` for distances 1..prefix.size().
struct StaticTail {
  TailKind kind = TailKind::kOpen;
  std::vector<int> prefix;

  bool is_open() const { return kind == TailKind::kOpen && prefix.empty(); }
  /// Spin value (+1 or -1) at the given distance. Open tails return 0.
  int spin_at(int distance) const;
};

enum class Environment { kNone, kCharge, kString };

std::string to_string(Environment env);
Environment environment_from_string(const std::string& name);

struct EnvironmentTails {
  StaticTail left;
  StaticTail right;
};

/// Charge: vacuum to the left, string to the right. String: a down edge spin
/// on each side followed by vacuum, so static charges sit just outside.
EnvironmentTails make_tails(Environment env);

/// Classical z-basis configuration of the dynamical spins plus its
/// environment. Spin values are +1 (up) or -1 (down).
struct SpinConfiguration {
  std::vector<int> dynamical;
  StaticTail left;
  StaticTail right;
  int origin = 0;  // centered label of dynamical[0]

  int size() const { return static_cast<int>(dynamical.size()); }
  /// Spin at a centered site label, expanding the tails as needed.
  int spin_at_label(int label) const;
  /// Spins at labels [first, last], inclusive.
  std::vector<int> window(int first, int last) const;
};

/// Single kink on bond 0: up to the left of label 0, down from label 0 on,
/// inside the charge environment.
SpinConfiguration kink_configuration(int L);
/// All dynamical spins down inside the string environment.
SpinConfiguration string_configuration(int L);
SpinConfiguration vacuum_configuration(int L, Environment env = Environment::kNone);

/// z-basis index: bit k is set when internal site k is down.
std::uint32_t basis_index(std::span<const int> spins);
std::vector<int> spins_from_index(std::uint32_t index, int L);

// ---------------------------------------------------------------------------
// Couplings and virtual fields
// ---------------------------------------------------------------------------

/// J_r = J exp(-beta (r - 1)) for r >= 1.
struct ExpProfile {
  double J = 1.0;
  double beta = 0.78;

  double coupling(int r) const;
  /// Sum_{r=a}^infinity J_r in closed form; a <= 0 is treated as a = 1.
  double tail_sum(int a) const;
};

/// Translationally invariant L x L matrix with zero diagonal.
RealMatrix exp_profile(double J, double beta, int L);

/// Field emulating a vacuum on the left and a semi-infinite string on the
/// right. Antisymmetric under i -> L+1-i.
std::vector<double> virtual_field_charge(const ExpProfile& profile, int L);
/// Field emulating static charges just outside both ends. Symmetric under
/// i -> L+1-i.
std::vector<double> virtual_field_string(const ExpProfile& profile, int L);
std::vector<double> virtual_field(Environment env, const ExpProfile& profile, int L);

/// Direct summation of Sum_{static j} J_|i-j| s_j over the first `cutoff`
/// static spins of each tail. Independent of the closed forms above.
std::vector<double> brute_force_virtual_field(const StaticTail& left, const StaticTail& right,
                                              const ExpProfile& profile, int L, int cutoff);

// ---------------------------------------------------------------------------
// Hamiltonian
// ---------------------------------------------------------------------------

/// H = -sum_{i<j} J_ij z_i z_j - sum_i (h + dh_i) z_i - g sum_i x_i
struct HamiltonianSpec {
  int L = 0;
  RealMatrix J;
  double g = 0.0;
  double h = 0.0;
  std::vector<double> delta_h;
  int origin = 0;

  /// Throws InvalidArgument / SizeLimit when the invariants do not hold.
  void validate() const;
  int label(int site) const { return origin + site; }
};

/// Convenience description used by scenarios: exponential couplings plus one
/// of the named environments.
struct ModelParams {
  int L = 13;
  double J = 1.0;
  double beta = 0.78;
  double g = 0.0;
  double h = 0.0;
  Environment environment = Environment::kNone;
  int origin = default_origin(13);
};

HamiltonianSpec make_spec(const ModelParams& params);

/// Matrix-free transverse-field Ising operator: a diagonal plus L single
/// spin-flip bands of uniform amplitude -g.
class IsingOperator {
 public:
  explicit IsingOperator(const HamiltonianSpec& spec);

  int num_spins() const { return L_; }
  std::int64_t dimension() const { return diag_.size(); }
  double transverse_field() const { return g_; }
  const RealVector& diagonal() const { return diag_; }

  /// out = H * in
  void apply(const ComplexVector& in, ComplexVector& out) const;
  ComplexVector operator*(const ComplexVector& in) const;
  double expectation(const ComplexVector& psi) const;

  /// Number of structurally nonzero entries (diagonal + flip bands).
  std::int64_t stored_entries() const;
  RealMatrix to_dense() const;

 private:
  int L_;
  double g_;
  RealVector diag_;
};

IsingOperator build_hamiltonian(const HamiltonianSpec& spec);

/// 16 hex digits of FNV-1a over the exact bit patterns of every field.
std::string spec_hash(const HamiltonianSpec& spec);

/// <config| H_diag |config>, using only the dynamical spins; the environment
/// enters through spec.delta_h.
double classical_energy(std::span<const int> dynamical, const HamiltonianSpec& spec);
double classical_energy(const SpinConfiguration& config, const HamiltonianSpec& spec);

}  // namespace stringsim
