#include "stringsim/model.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cmath>

#include "stringsim/errors.hpp"

namespace stringsim {

int StaticTail::spin_at(int distance) const {
  if (distance < 1) throw InvalidArgument("static tail distance must be >= 1");
  if (distance <= static_cast<int>(prefix.size())) return prefix[distance - 1];
  switch (kind) {
    case TailKind::kOpen:
      return 0;
    case TailKind::kAllUp:
      return 1;
    case TailKind::kAllDown:
      return -1;
    case TailKind::kUpWithEdgeDown:
      return distance == 1 ? -1 : 1;
    case TailKind::kDownWithEdgeUp:
      return distance == 1 ? 1 : -1;
  }
  return 0;
}

std::string to_string(Environment env) {
  switch (env) {
    case Environment::kNone:
      return "none";
    case Environment::kCharge:
      return "charge";
    case Environment::kString:
      return "string";
  }
  return "none";
}

Environment environment_from_string(const std::string& name) {
  if (name == "none") return Environment::kNone;
  if (name == "charge") return Environment::kCharge;
  if (name == "string") return Environment::kString;
  throw InvalidArgument("unknown environment '" + name + "' (expected none, charge or string)");
}

EnvironmentTails make_tails(Environment env) {
  switch (env) {
    case Environment::kNone:
      return {};
    case Environment::kCharge:
      return {StaticTail{TailKind::kAllUp, {}}, StaticTail{TailKind::kAllDown, {}}};
    case Environment::kString:
      return {StaticTail{TailKind::kUpWithEdgeDown, {}}, StaticTail{TailKind::kUpWithEdgeDown, {}}};
  }
  return {};
}

int SpinConfiguration::spin_at_label(int label) const {
  const int site = label - origin;
  if (site < 0) return left.spin_at(-site);
  if (site >= size()) return right.spin_at(site - size() + 1);
  return dynamical[site];
}

std::vector<int> SpinConfiguration::window(int first, int last) const {
  std::vector<int> out;
  out.reserve(last >= first ? last - first + 1 : 0);
  for (int label = first; label <= last; ++label) out.push_back(spin_at_label(label));
  return out;
}

namespace {

SpinConfiguration with_environment(std::vector<int> spins, Environment env) {
  const int L = static_cast<int>(spins.size());
  auto tails = make_tails(env);
  return SpinConfiguration{std::move(spins), tails.left, tails.right, default_origin(L)};
}

}  // namespace

SpinConfiguration kink_configuration(int L) {
  std::vector<int> spins(L);
  const int origin = default_origin(L);
  for (int k = 0; k < L; ++k) spins[k] = origin + k < 0 ? 1 : -1;
  return with_environment(std::move(spins), Environment::kCharge);
}

SpinConfiguration string_configuration(int L) {
  return with_environment(std::vector<int>(L, -1), Environment::kString);
}

SpinConfiguration vacuum_configuration(int L, Environment env) {
  return with_environment(std::vector<int>(L, 1), env);
}

std::uint32_t basis_index(std::span<const int> spins) {
  std::uint32_t index = 0;
  for (std::size_t k = 0; k < spins.size(); ++k)
    if (spins[k] < 0) index |= (1u << k);
  return index;
}

std::vector<int> spins_from_index(std::uint32_t index, int L) {
  std::vector<int> spins(L);
  for (int k = 0; k < L; ++k) spins[k] = (index >> k) & 1u ? -1 : 1;
  return spins;
}

double ExpProfile::coupling(int r) const {
  if (r < 1) return 0.0;
  return J * std::exp(-beta * (r - 1));
}

double ExpProfile::tail_sum(int a) const {
  if (a < 1) a = 1;
  return J * std::exp(-beta * (a - 1)) / (1.0 - std::exp(-beta));
}

RealMatrix exp_profile(double J, double beta, int L) {
  if (!(J > 0.0) || !(beta > 0.0)) throw InvalidArgument("exp_profile requires J > 0 and beta > 0");
  const ExpProfile profile{J, beta};
  RealMatrix out = RealMatrix::Zero(L, L);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < L; ++j)
      if (i != j) out(i, j) = profile.coupling(std::abs(i - j));
  return out;
}

// Sites run i = 1..L in the formulas below; the vector index is i - 1.
std::vector<double> virtual_field_charge(const ExpProfile& profile, int L) {
  std::vector<double> out(L);
  for (int i = 1; i <= L; ++i) out[i - 1] = profile.tail_sum(i) - profile.tail_sum(L + 1 - i);
  return out;
}

std::vector<double> virtual_field_string(const ExpProfile& profile, int L) {
  std::vector<double> out(L);
  // Each side's contribution is formed once and added in a fixed order so the
  // field is exactly mirror symmetric.
  const auto side = [&](int a) { return -profile.coupling(a) + profile.tail_sum(a + 1); };
  for (int i = 1; i <= L; ++i) {
    const double near = side(std::min(i, L + 1 - i));
    const double far = side(std::max(i, L + 1 - i));
    out[i - 1] = near + far;
  }
  return out;
}

std::vector<double> virtual_field(Environment env, const ExpProfile& profile, int L) {
  switch (env) {
    case Environment::kNone:
      return std::vector<double>(L, 0.0);
    case Environment::kCharge:
      return virtual_field_charge(profile, L);
    case Environment::kString:
      return virtual_field_string(profile, L);
  }
  return std::vector<double>(L, 0.0);
}

std::vector<double> brute_force_virtual_field(const StaticTail& left, const StaticTail& right,
                                              const ExpProfile& profile, int L, int cutoff) {
  std::vector<double> out(L, 0.0);
  for (int k = 0; k < L; ++k) {
    // Farthest spins first so the small terms accumulate before the large ones.
    double sum = 0.0;
    for (int d = cutoff; d >= 1; --d) {
      sum += profile.coupling(k + d) * left.spin_at(d);
      sum += profile.coupling(L - k - 1 + d) * right.spin_at(d);
    }
    out[k] = sum;
  }
  return out;
}

void HamiltonianSpec::validate() const {
  if (L < 1) throw InvalidArgument("HamiltonianSpec: L must be positive");
  if (L > kMaxSpins) throw SizeLimit("HamiltonianSpec: L=" + std::to_string(L) + " exceeds cap of 24 spins");
  if (J.rows() != L || J.cols() != L) throw InvalidArgument("HamiltonianSpec: J must be L x L");
  if (static_cast<int>(delta_h.size()) != L)
    throw InvalidArgument("HamiltonianSpec: delta_h must have L entries");
  for (int i = 0; i < L; ++i) {
    if (J(i, i) != 0.0) throw InvalidArgument("HamiltonianSpec: J must have zero diagonal");
    for (int j = i + 1; j < L; ++j)
      if (J(i, j) != J(j, i)) throw InvalidArgument("HamiltonianSpec: J must be symmetric");
  }
}

HamiltonianSpec make_spec(const ModelParams& p) {
  HamiltonianSpec spec;
  spec.L = p.L;
  spec.J = exp_profile(p.J, p.beta, p.L);
  spec.g = p.g;
  spec.h = p.h;
  spec.delta_h = virtual_field(p.environment, ExpProfile{p.J, p.beta}, p.L);
  spec.origin = p.origin;
  spec.validate();
  return spec;
}

IsingOperator::IsingOperator(const HamiltonianSpec& spec) : L_(spec.L), g_(spec.g) {
  spec.validate();
  const std::int64_t dim = std::int64_t{1} << L_;
  diag_.resize(dim);
  std::vector<double> field(L_);
  for (int i = 0; i < L_; ++i) field[i] = spec.h + spec.delta_h[i];
  for (std::int64_t s = 0; s < dim; ++s) {
    double e = 0.0;
    for (int i = 0; i < L_; ++i) {
      const double zi = (s >> i) & 1 ? -1.0 : 1.0;
      e -= field[i] * zi;
      for (int j = i + 1; j < L_; ++j) {
        const double zj = (s >> j) & 1 ? -1.0 : 1.0;
        e -= spec.J(i, j) * zi * zj;
      }
    }
    diag_[s] = e;
  }
}

void IsingOperator::apply(const ComplexVector& in, ComplexVector& out) const {
  const std::int64_t dim = diag_.size();
  out.resize(dim);
  const std::complex<double>* x = in.data();
  std::complex<double>* y = out.data();
  for (std::int64_t s = 0; s < dim; ++s) {
    std::complex<double> flips = 0.0;
    for (int k = 0; k < L_; ++k) flips += x[s ^ (std::int64_t{1} << k)];
    y[s] = diag_[s] * x[s] - g_ * flips;
  }
}

ComplexVector IsingOperator::operator*(const ComplexVector& in) const {
  ComplexVector out;
  apply(in, out);
  return out;
}

double IsingOperator::expectation(const ComplexVector& psi) const {
  ComplexVector hpsi;
  apply(psi, hpsi);
  return psi.dot(hpsi).real();
}

std::int64_t IsingOperator::stored_entries() const {
  const std::int64_t dim = diag_.size();
  return g_ == 0.0 ? dim : dim * (L_ + 1);
}

RealMatrix IsingOperator::to_dense() const {
  const std::int64_t dim = diag_.size();
  RealMatrix H = RealMatrix::Zero(dim, dim);
  for (std::int64_t s = 0; s < dim; ++s) {
    H(s, s) = diag_[s];
    for (int k = 0; k < L_; ++k) H(s ^ (std::int64_t{1} << k), s) = -g_;
  }
  return H;
}

IsingOperator build_hamiltonian(const HamiltonianSpec& spec) { return IsingOperator(spec); }

double classical_energy(std::span<const int> dynamical, const HamiltonianSpec& spec) {
  if (static_cast<int>(dynamical.size()) != spec.L)
    throw InvalidArgument("classical_energy: configuration length does not match spec.L");
  double e = 0.0;
  for (int i = 0; i < spec.L; ++i) {
    e -= (spec.h + spec.delta_h[i]) * dynamical[i];
    for (int j = i + 1; j < spec.L; ++j) e -= spec.J(i, j) * dynamical[i] * dynamical[j];
  }
  return e;
}

double classical_energy(const SpinConfiguration& config, const HamiltonianSpec& spec) {
  return classical_energy(std::span<const int>(config.dynamical), spec);
}

std::string spec_hash(const HamiltonianSpec& spec) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t k = 0; k < n; ++k) {
      h ^= bytes[k];
      h *= 0x100000001b3ULL;
    }
  };
  auto feed_double = [&feed](double x) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(x == 0.0 ? 0.0 : x);
    feed(&bits, sizeof bits);
  };
  const std::int64_t ints[] = {spec.L, spec.origin};
  feed(ints, sizeof ints);
  feed_double(spec.g);
  feed_double(spec.h);
  for (int i = 0; i < spec.J.rows(); ++i)
    for (int j = 0; j < spec.J.cols(); ++j) feed_double(spec.J(i, j));
  for (double d : spec.delta_h) feed_double(d);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace stringsim
