#include "stringsim/duality.hpp"

#include <cmath>
#include <map>
#include <string>

#include "stringsim/errors.hpp"

namespace stringsim {

bool satisfies_gauss_law(const GaugeConfig& gauge) {
  if (gauge.links.size() != gauge.occupations.size() + 1) return false;
  for (std::size_t k = 0; k < gauge.occupations.size(); ++k) {
    if ((gauge.links[k] + gauge.links[k + 1] + gauge.occupations[k]) % 2 != 0) return false;
  }
  return true;
}

GaugeConfig spins_to_gauge(std::span<const int> spins, int origin) {
  if (spins.size() < 2) throw InvalidArgument("spins_to_gauge needs at least two spins");
  GaugeConfig out;
  out.origin = origin;
  out.links.reserve(spins.size());
  for (int s : spins) {
    if (s != 1 && s != -1) throw InvalidArgument("spins_to_gauge: spin values must be +1 or -1");
    out.links.push_back((1 - s) / 2);
  }
  out.occupations.reserve(spins.size() - 1);
  for (std::size_t k = 0; k + 1 < spins.size(); ++k) out.occupations.push_back(spins[k] != spins[k + 1] ? 1 : 0);
  return out;
}

GaugeConfig spins_to_gauge(const SpinConfiguration& config, int pad) {
  if (pad < 1) throw InvalidArgument("spins_to_gauge: pad must be >= 1");
  const int first = config.origin - pad;
  const int last = config.origin + config.size() - 1 + pad;
  const auto spins = config.window(first, last);
  for (int s : spins)
    if (s == 0) throw InvalidArgument("spins_to_gauge: open tails do not define boundary spins");
  return spins_to_gauge(spins, first);
}

std::vector<int> gauge_to_spins(const GaugeConfig& gauge, int leftmost_spin) {
  if (leftmost_spin != 1 && leftmost_spin != -1) throw InvalidArgument("leftmost_spin must be +1 or -1");
  if (!satisfies_gauss_law(gauge)) throw GaussViolation("gauge configuration violates Gauss's law");
  std::vector<int> spins;
  spins.reserve(gauge.links.size());
  spins.push_back(leftmost_spin);
  for (int occ : gauge.occupations) spins.push_back(occ ? -spins.back() : spins.back());
  return spins;
}

std::vector<GaugeConfig> enumerate_gauge_sector(int num_sites, std::pair<int, int> boundary_links) {
  if (num_sites < 1) throw InvalidArgument("enumerate_gauge_sector: need at least one site");
  if (num_sites > kMaxSectorSites)
    throw SizeLimit("enumerate_gauge_sector: " + std::to_string(num_sites) + " sites exceeds cap of 14");
  const auto [b0, b1] = boundary_links;
  if ((b0 != 0 && b0 != 1) || (b1 != 0 && b1 != 1)) throw InvalidArgument("boundary links must be 0 or 1");

  const int interior = num_sites - 1;
  std::vector<GaugeConfig> sector;
  sector.reserve(std::size_t{1} << interior);
  for (std::uint32_t code = 0; code < (1u << interior); ++code) {
    GaugeConfig c;
    c.links.resize(num_sites + 1);
    c.links.front() = b0;
    c.links.back() = b1;
    // The first interior link is the most significant bit.
    for (int k = 0; k < interior; ++k) c.links[k + 1] = (code >> (interior - 1 - k)) & 1u;
    c.occupations.resize(num_sites);
    for (int k = 0; k < num_sites; ++k) c.occupations[k] = (c.links[k] + c.links[k + 1]) % 2;
    sector.push_back(std::move(c));
  }
  return sector;
}

namespace {

constexpr double kTruncation = 1e-12;

LgtParams from_couplings(std::span<const double> J_profile, double h, double tail_beyond) {
  if (J_profile.empty() || !(J_profile[0] > 0.0)) throw InvalidProfile("parameter_dictionary requires J_1 > 0");
  LgtParams p;
  p.m = 2.0 * J_profile[0];
  p.v.assign(J_profile.size() + 1, 0.0);
  double sum = 0.0;
  for (std::size_t r = 2; r <= J_profile.size(); ++r) {
    p.v[r] = 4.0 * J_profile[r - 1];
    sum += J_profile[r - 1];
  }
  p.kappa = 2.0 * h + 4.0 * (sum + tail_beyond);
  return p;
}

}  // namespace

LgtParams parameter_dictionary(std::span<const double> J_profile, double h) {
  for (double Jr : J_profile)
    if (!std::isfinite(Jr)) throw InvalidProfile("parameter_dictionary: non-finite coupling");
  return from_couplings(J_profile, h, 0.0);
}

LgtParams parameter_dictionary(const ExpProfile& profile, double h) {
  if (!(profile.J > 0.0)) throw InvalidProfile("parameter_dictionary requires J_1 > 0");
  if (!(profile.beta > 0.0)) throw InvalidProfile("parameter_dictionary requires a decaying profile");
  std::vector<double> couplings;
  for (int r = 1; profile.coupling(r) >= kTruncation * profile.J; ++r) couplings.push_back(profile.coupling(r));
  const int R = static_cast<int>(couplings.size());
  return from_couplings(couplings, h, profile.tail_sum(R + 1));
}

namespace {

// Jordan-Wigner signs with creation operators ordered by ascending site.
// Each returns 0 when the operator annihilates the state.
int annihilate(std::vector<int>& occ, int site) {
  if (!occ[site]) return 0;
  int parity = 0;
  for (int k = 0; k < site; ++k) parity += occ[k];
  occ[site] = 0;
  return parity % 2 ? -1 : 1;
}

int create(std::vector<int>& occ, int site) {
  if (occ[site]) return 0;
  int parity = 0;
  for (int k = 0; k < site; ++k) parity += occ[k];
  occ[site] = 1;
  return parity % 2 ? -1 : 1;
}

struct FermionTerm {
  // Applied right to left: second, then first.
  bool first_create;
  int first_site;
  bool second_create;
  int second_site;
};

}  // namespace

RealMatrix build_lgt_hamiltonian(const LgtParams& params, const std::vector<GaugeConfig>& sector) {
  if (sector.empty()) return RealMatrix(0, 0);
  const int num_sites = sector.front().num_sites();
  if (num_sites > kMaxLgtSites)
    throw SizeLimit("build_lgt_hamiltonian: " + std::to_string(num_sites) + " sites exceeds cap of 12");

  std::map<std::vector<int>, int> index;
  for (std::size_t a = 0; a < sector.size(); ++a) {
    if (!satisfies_gauss_law(sector[a])) throw GaussViolation("build_lgt_hamiltonian: sector state violates Gauss's law");
    if (sector[a].num_sites() != num_sites) throw InvalidArgument("build_lgt_hamiltonian: mixed sector sizes");
    index.emplace(sector[a].links, static_cast<int>(a));
  }

  const int n = static_cast<int>(sector.size());
  RealMatrix H = RealMatrix::Zero(n, n);
  const int num_links = num_sites + 1;

  for (int a = 0; a < n; ++a) {
    const GaugeConfig& c = sector[a];
    double diag = 0.0;
    for (int occ : c.occupations) diag += params.m * occ;
    for (int k = 0; k < num_links; ++k) {
      diag += params.kappa * c.links[k];
      for (int r = 2; k + r < num_links; ++r) diag -= params.v_at(r) * c.links[k] * c.links[k + r];
    }
    H(a, a) += diag;

    // Minimal coupling on interior link j, which joins sites j-1 and j.
    for (int j = 1; j < num_links - 1; ++j) {
      const int left = j - 1;
      const int right = j;
      const FermionTerm terms[] = {
          {true, left, false, right},   // c^dag_l c_{l+1}
          {true, right, false, left},   // c^dag_{l+1} c_l
          {true, left, true, right},    // c^dag_l c^dag_{l+1}
          {false, right, false, left},  // c_{l+1} c_l
      };
      for (const auto& t : terms) {
        std::vector<int> occ = c.occupations;
        int sign = t.second_create ? create(occ, t.second_site) : annihilate(occ, t.second_site);
        if (!sign) continue;
        const int s2 = t.first_create ? create(occ, t.first_site) : annihilate(occ, t.first_site);
        if (!s2) continue;
        sign *= s2;
        std::vector<int> links = c.links;
        links[j] ^= 1;
        const auto it = index.find(links);
        if (it == index.end()) throw GaussViolation("build_lgt_hamiltonian: sector is not closed under the coupling");
        if (sector[it->second].occupations != occ)
          throw GaussViolation("build_lgt_hamiltonian: coupling produced a non-gauge-invariant state");
        H(it->second, a) += -params.g * sign;
      }
    }
  }
  return H;
}

HamiltonianSpec dual_ising_spec(const ExpProfile& profile, double g, double h, int num_sites,
                                std::pair<int, int> boundary_links) {
  const int L = num_sites - 1;
  if (L < 1) throw InvalidArgument("dual_ising_spec: need at least one interior link");
  const StaticTail left{TailKind::kAllUp, {1 - 2 * boundary_links.first}};
  const StaticTail right{TailKind::kAllUp, {1 - 2 * boundary_links.second}};
  HamiltonianSpec spec;
  spec.L = L;
  spec.J = exp_profile(profile.J, profile.beta, L);
  spec.g = g;
  spec.h = h;
  // Converged to double precision long before the cutoff for beta >= 0.2.
  spec.delta_h = brute_force_virtual_field(left, right, profile, L, 400);
  spec.origin = default_origin(L);
  spec.validate();
  return spec;
}

void to_json(nlohmann::json& j, const GaugeConfig& gauge) {
  j = nlohmann::json{{"occupations", gauge.occupations}, {"links", gauge.links}};
}

void from_json(const nlohmann::json& j, GaugeConfig& gauge) {
  j.at("occupations").get_to(gauge.occupations);
  j.at("links").get_to(gauge.links);
  gauge.origin = j.value("origin", 0);
}

}  // namespace stringsim
