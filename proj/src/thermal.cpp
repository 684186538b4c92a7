#include "stringsim/thermal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <sstream>

#include <lapacke.h>

#include <boost/math/tools/toms748_solve.hpp>

#include "stringsim/errors.hpp"

namespace stringsim {

namespace {

std::uint32_t reflect(std::uint32_t s, int L) {
  std::uint32_t r = 0;
  for (int i = 0; i < L; ++i)
    if ((s >> i) & 1u) r |= 1u << (L - 1 - i);
  return r;
}

bool mirror_symmetric(const HamiltonianSpec& spec) {
  const int L = spec.L;
  for (int i = 0; i < L; ++i) {
    if (spec.delta_h[i] != spec.delta_h[L - 1 - i]) return false;
    for (int j = 0; j < L; ++j)
      if (spec.J(i, j) != spec.J(L - 1 - i, L - 1 - j)) return false;
  }
  return true;
}

// In-place symmetric eigensolve; A is overwritten by the eigenvectors.
RealVector dense_eigensolve(RealMatrix& A) {
  const lapack_int n = static_cast<lapack_int>(A.rows());
  RealVector w(n);
  if (n == 0) return w;
  const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, A.data(), n, w.data());
  if (info != 0) throw ToleranceNotMet("dsyevd failed with info " + std::to_string(info));
  return w;
}

RealMatrix site_z(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b, int L) {
  // Column k: (z(a_k) + z(b_k)) / 2.
  RealMatrix Z(L, a.size());
  for (std::size_t k = 0; k < a.size(); ++k)
    for (int i = 0; i < L; ++i) Z(i, k) = 0.5 * ((((a[k] >> i) & 1u) ? -1.0 : 1.0) + (((b[k] >> i) & 1u) ? -1.0 : 1.0));
  return Z;
}

struct Sector {
  RealVector values;
  RealMatrix vectors;                // over the sector basis
  std::vector<std::uint32_t> reps;   // representative s_a
  std::vector<double> weight;        // amplitude of s_a (and +-R s_a) in v_a
  int parity = 1;
  bool mirrored = true;  // false: reps is the plain z basis
};

// Parity sector of the reflection R: basis v_a = n_a (|s_a> + parity |R s_a>)
// with s_a <= R s_a; self-mirrored s_a appear only in the even sector.
Sector reflection_sector(const IsingOperator& H, int L, int parity) {
  const std::uint32_t dim = 1u << L;
  Sector sec;
  sec.parity = parity;
  std::vector<int> rep_index(dim, -1);
  for (std::uint32_t s = 0; s < dim; ++s) {
    const std::uint32_t r = reflect(s, L);
    if (s > r) continue;
    if (s == r && parity < 0) continue;
    rep_index[s] = static_cast<int>(sec.reps.size());
    sec.reps.push_back(s);
    sec.weight.push_back(s == r ? 1.0 : M_SQRT1_2);
  }
  const int n = static_cast<int>(sec.reps.size());
  RealMatrix M = RealMatrix::Zero(n, n);
  const RealVector& d = H.diagonal();
  const double g = H.transverse_field();
  // H v_b stays in the sector, so <v_a|H v_b> = c_a (H v_b)[s_a] with
  // c_a = sqrt(2) on pair orbits and 1 on self-mirrored states.
  for (int b = 0; b < n; ++b) {
    const std::uint32_t sb = sec.reps[b];
    const std::uint32_t rb = reflect(sb, L);
    const double nb = sec.weight[b];
    const std::uint32_t members[2] = {sb, rb};
    const double coef[2] = {nb, parity * nb};
    const int count = sb == rb ? 1 : 2;
    for (int m = 0; m < count; ++m) {
      const std::uint32_t s = members[m];
      const auto add = [&](std::uint32_t target, double value) {
        const int a = rep_index[target];
        if (a < 0) return;
        M(a, b) += value * (sec.weight[a] == 1.0 ? 1.0 : 2.0 * sec.weight[a]);
      };
      add(s, coef[m] * d[s]);
      if (g != 0.0)
        for (int i = 0; i < L; ++i) add(s ^ (1u << i), -g * coef[m]);
    }
  }
  sec.values = dense_eigensolve(M);
  sec.vectors = std::move(M);
  return sec;
}

ComplexVector sector_to_full(const Sector& sec, int column, int L) {
  ComplexVector v = ComplexVector::Zero(std::int64_t{1} << L);
  for (std::size_t a = 0; a < sec.reps.size(); ++a) {
    const double c = sec.vectors(a, column) * sec.weight[a];
    const std::uint32_t s = sec.reps[a], r = sec.mirrored ? reflect(s, L) : s;
    if (s == r) {
      v[s] += c;
    } else {
      v[s] += c;
      v[r] += sec.parity * c;
    }
  }
  return v;
}

double residual(const IsingOperator& H, const ComplexVector& v, double lambda) {
  ComplexVector Hv(v.size());
  H.apply(v, Hv);
  return (Hv - lambda * v).norm();
}

}  // namespace

SpectralData spectrum(const HamiltonianSpec& spec, const SpectrumOptions& options) {
  spec.validate();
  const int L = spec.L;
  if (L > kMaxThermalSpins) throw SizeLimit("spectrum: L=" + std::to_string(L) + " exceeds the dense cap of 13");
  const std::int64_t dim = std::int64_t{1} << L;
  const bool blocks = mirror_symmetric(spec) && L >= 2;
  // Matrix plus dsyevd workspace (about 2 n^2 doubles) per solve.
  const std::int64_t n_solve = blocks ? dim / 2 + (std::int64_t{1} << ((L + 1) / 2)) : dim;
  const std::int64_t bytes = 3 * n_solve * n_solve * std::int64_t{8};
  if (bytes > options.memory_limit_bytes)
    throw MemoryLimit("spectrum: needs about " + std::to_string(bytes >> 20) + " MB");

  const IsingOperator H = build_hamiltonian(spec);
  SpectralData out;
  out.L = L;
  out.spec_hash = spec_hash(spec);
  out.reflection_blocks = blocks;
  const bool keep_vectors = L <= options.store_eigenvectors_up_to_L;

  struct Entry {
    double value;
    int sector;
    int column;
  };
  std::vector<Entry> entries;
  std::vector<Sector> sectors;
  std::vector<RealMatrix> sector_sz;

  if (blocks) {
    for (int parity : {1, -1}) {
      sectors.push_back(reflection_sector(H, L, parity));
      const Sector& sec = sectors.back();
      std::vector<std::uint32_t> mirrored(sec.reps.size());
      for (std::size_t a = 0; a < sec.reps.size(); ++a) mirrored[a] = reflect(sec.reps[a], L);
      // In v_a the two orbit members carry equal weight, so a sector state
      // puts |u_a|^2 on the orbit and sees the orbit-averaged z.
      sector_sz.push_back(site_z(sec.reps, mirrored, L) * sec.vectors.cwiseAbs2());
    }
  } else {
    Sector full;
    full.mirrored = false;
    RealMatrix M = H.to_dense();
    full.values = dense_eigensolve(M);
    full.vectors = std::move(M);
    full.reps.resize(dim);
    std::iota(full.reps.begin(), full.reps.end(), 0u);
    full.weight.assign(dim, 1.0);
    sector_sz.push_back(site_z(full.reps, full.reps, L) * full.vectors.cwiseAbs2());
    sectors.push_back(std::move(full));
  }
  for (std::size_t k = 0; k < sectors.size(); ++k)
    for (int c = 0; c < sectors[k].values.size(); ++c) entries.push_back({sectors[k].values[c], static_cast<int>(k), c});
  std::stable_sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) { return a.value < b.value; });

  out.eigenvalues.resize(dim);
  out.sigma_z.resize(L, dim);
  if (keep_vectors) out.eigenvectors = RealMatrix(dim, dim);
  for (std::int64_t n = 0; n < dim; ++n) {
    const Entry& e = entries[n];
    out.eigenvalues[n] = e.value;
    out.sigma_z.col(n) = sector_sz[e.sector].col(e.column);
    if (keep_vectors) out.eigenvectors->col(n) = sector_to_full(sectors[e.sector], e.column, L).real();
  }

  std::mt19937_64 rng(options.residual_seed);
  std::uniform_int_distribution<std::int64_t> pick(0, dim - 1);
  for (int k = 0; k < options.residual_samples; ++k) {
    const Entry& e = entries[pick(rng)];
    out.max_residual = std::max(out.max_residual, residual(H, sector_to_full(sectors[e.sector], e.column, L), e.value));
  }
  if (out.max_residual > 1e-8 * std::max(1.0, spec.J.cwiseAbs().maxCoeff()))
    throw ToleranceNotMet("spectrum: eigenpair residual " + std::to_string(out.max_residual));
  return out;
}

namespace {

// Boltzmann weights at inverse temperature b, shifted by the ground energy.
RealVector weights(const SpectralData& spectral, double b) {
  const double e_min = spectral.eigenvalues[0];
  return (-(spectral.eigenvalues.array() - e_min) * b).exp().matrix();
}

double energy_at_beta(const SpectralData& spectral, double b) {
  const RealVector w = weights(spectral, b);
  return w.dot(spectral.eigenvalues) / w.sum();
}

}  // namespace

double gibbs_energy(const SpectralData& spectral, double T) {
  if (!(T > 0.0)) throw InvalidArgument("gibbs_energy: T must be positive");
  return energy_at_beta(spectral, std::isinf(T) ? 0.0 : 1.0 / T);
}

TemperatureMatch match_temperature(double E0, const SpectralData& spectral) {
  const double e_min = spectral.eigenvalues[0];
  const double mean = spectral.eigenvalues.mean();
  const double width = spectral.eigenvalues[spectral.eigenvalues.size() - 1] - e_min;
  const double scale = std::max(std::abs(E0), 1e-300);
  if (std::abs(E0 - mean) <= 1e-12 * std::max(1.0, std::abs(mean))) return {kInfiniteTemperature, 0.0};
  if (E0 > mean) throw OutOfBracket("match_temperature: E0 lies above the infinite-temperature mean");
  if (E0 <= e_min) throw OutOfBracket("match_temperature: E0 lies at or below the ground energy");

  // E(b) decreases monotonically from the mean at b=0 toward e_min.
  double hi = 1.0 / std::max(width, 1e-12);
  while (energy_at_beta(spectral, hi) > E0) {
    hi *= 2.0;
    if (hi > 1e300) throw OutOfBracket("match_temperature: no finite temperature reaches E0");
  }
  const auto f = [&](double b) { return energy_at_beta(spectral, b) - E0; };
  std::uintmax_t max_iter = 500;
  const auto [lo_b, hi_b] = boost::math::tools::toms748_solve(f, 0.0, hi, mean - E0, f(hi),
                                                             boost::math::tools::eps_tolerance<double>(52), max_iter);
  // Pick the bracket end with the smaller residual.
  const double b = std::abs(f(lo_b)) < std::abs(f(hi_b)) ? lo_b : hi_b;
  TemperatureMatch m{1.0 / b, std::abs(f(b)) / scale};
  return m;
}

std::vector<double> gibbs_observable(const SpectralData& spectral, double T) {
  if (!(T > 0.0)) throw InvalidArgument("gibbs_observable: T must be positive");
  const RealVector w = weights(spectral, std::isinf(T) ? 0.0 : 1.0 / T);
  const RealVector z = spectral.sigma_z * w / w.sum();
  return {z.data(), z.data() + z.size()};
}

std::string thermal_csv(const std::vector<int>& labels, const std::vector<double>& values) {
  if (labels.size() != values.size()) throw InvalidArgument("thermal_csv: label and value counts differ");
  std::ostringstream out;
  out << "time,site,value,stderr\n";
  char buf[32];
  for (std::size_t k = 0; k < labels.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.12g", values[k]);
    out << "thermal," << labels[k] << ',' << buf << ",\n";
  }
  return out.str();
}

}  // namespace stringsim
