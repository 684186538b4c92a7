#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include <unsupported/Eigen/MatrixFunctions>

#include "stringsim/errors.hpp"
#include "stringsim/evolve.hpp"
#include "stringsim/twobody.hpp"

using namespace stringsim;

namespace {

using cd = std::complex<double>;

HamiltonianSpec string_spec(int L, double beta, double h, double g = 0.0) {
  ModelParams params;
  params.L = L;
  params.origin = default_origin(L);
  params.beta = beta;
  params.g = g;
  params.h = h;
  params.environment = Environment::kString;
  return make_spec(params);
}

double bulk_pair_weight(const TwoBodyState& state, const PairBasis& basis) {
  double w = 0.0;
  for (int k = 0; k < basis.size(); ++k) {
    const auto [l1, l2] = basis.pair(k);
    if (l2 - l1 > 1) w += std::norm(state.amplitudes[k]);
  }
  return w / state.amplitudes.squaredNorm();
}

}  // namespace

TEST(PairBasis, TriangleCountAndBijection) {
  const PairBasis basis(13, -6);
  EXPECT_EQ(basis.size(), 91);
  std::set<std::pair<int, int>> seen;
  for (int k = 0; k < basis.size(); ++k) {
    const auto p = basis.pair(k);
    EXPECT_EQ(basis.index(p.first, p.second), k);
    EXPECT_LE(-6, p.first);
    EXPECT_LT(p.first, p.second);
    EXPECT_LE(p.second, 7);
    seen.insert(p);
  }
  EXPECT_EQ(seen.size(), 91u);
  EXPECT_THROW(basis.index(-7, 0), IndexOutOfRange);
  EXPECT_THROW(basis.index(3, 3), IndexOutOfRange);
  EXPECT_THROW(two_body_potential(0, 8, 1.0, 0.78, 0.0, 13), IndexOutOfRange);
}

TEST(TwoBodyPotential, EqualsClassicalEnergyDifference) {
  for (int L : {5, 9, 13}) {
    for (double beta : {0.5, 0.78, 1.2}) {
      for (double h : {0.0, 0.3, 0.6}) {
        const auto spec = string_spec(L, beta, h);
        const auto base = string_configuration(L);
        const double e0 = classical_energy(base, spec);
        const PairBasis basis(L, spec.origin);
        for (int k = 0; k < basis.size(); ++k) {
          const auto [l1, l2] = basis.pair(k);
          auto flipped = base.dynamical;
          for (int site = l1; site < l2; ++site) flipped[site - spec.origin] = 1;
          EXPECT_NEAR(two_body_potential(l1, l2, 1.0, beta, h, L), classical_energy(flipped, spec) - e0, 1e-10)
              << "L=" << L << " beta=" << beta << " h=" << h << " pair " << l1 << "," << l2;
        }
      }
    }
  }
}

TEST(TwoBodyPotential, ReflectionSymmetryIsExact) {
  for (double h : {0.0, 0.3, 0.6}) {
    const auto pot = pair_potential(1.0, 0.78, h, 13);
    for (int k = 0; k < pot.basis.size(); ++k) {
      const auto [l1, l2] = pot.basis.pair(k);
      EXPECT_EQ(pot.V[k], pot.at(1 - l2, 1 - l1));
    }
  }
}

TEST(TwoBodyPotential, StringTensionMakesDistantPairsNegative) {
  EXPECT_GT(pair_potential(1.0, 0.78, 0.0, 13).at(-6, 7), 0.0);
  EXPECT_LT(pair_potential(1.0, 0.78, 0.6, 13).at(-6, 7), 0.0);
}

TEST(TwoBodyPotential, CentralAdjacentPairIsHighest) {
  const auto pot = pair_potential(1.0, 0.78, 0.0, 13);
  double best = -1e300;
  int best_l = 0;
  for (int l = -6; l < 7; ++l) {
    EXPECT_GT(pot.at(l, l + 1), 0.0);
    if (pot.at(l, l + 1) > best) {
      best = pot.at(l, l + 1);
      best_l = l;
    }
  }
  // Bonds 0 and 1 straddle the center symmetrically.
  EXPECT_EQ(best_l, 0);
}

TEST(InitialPairState, AdjacentSupportPeakedAtEdges) {
  const auto pot = pair_potential(1.0, 0.78, 0.3, 13);
  const auto s = initial_pair_state(0.1, pot);
  int argmax = 0;
  for (int k = 0; k < pot.basis.size(); ++k) {
    const auto [l1, l2] = pot.basis.pair(k);
    if (l2 - l1 != 1) EXPECT_EQ(s.amplitudes[k], cd(0.0, 0.0));
    if (std::abs(s.amplitudes[k]) > std::abs(s.amplitudes[argmax])) argmax = k;
    EXPECT_EQ(std::norm(s.amplitudes[k]), std::norm(s.amplitudes[pot.basis.index(1 - l2, 1 - l1)]));
  }
  const auto peak = pot.basis.pair(argmax);
  EXPECT_TRUE(peak == std::make_pair(-6, -5) || peak == std::make_pair(6, 7));
  EXPECT_EQ(std::abs(s.amplitudes[pot.basis.index(-6, -5)]), std::abs(s.amplitudes[pot.basis.index(6, 7)]));
}

TEST(InitialPairState, NormLinearInCoupling) {
  const auto pot = pair_potential(1.0, 0.78, 0.3, 13);
  const double n1 = initial_pair_state(1e-3, pot).amplitudes.norm();
  const double n2 = initial_pair_state(2e-3, pot).amplitudes.norm();
  EXPECT_NEAR(n2 / n1, 2.0, 1e-12);
  EXPECT_EQ(initial_pair_state(0.0, pot).amplitudes.norm(), 0.0);
}

TEST(InitialPairState, ResonantDenominatorIsReported) {
  // Tune h so that the edge adjacent pair costs nothing.
  const double v0 = two_body_potential(-6, -5, 1.0, 0.78, 0.0, 13);
  const auto pot = pair_potential(1.0, 0.78, v0 / 2.0, 13);
  EXPECT_THROW(initial_pair_state(0.1, pot), ResonantDenominator);
}

TEST(Heff, ThreeStateTriangle) {
  const auto pot = pair_potential(1.0, 0.78, 0.2, 2);
  ASSERT_EQ(pot.basis.origin(), 0);
  const RealMatrix H = build_heff(0.3, pot);
  RealMatrix expected(3, 3);
  expected << pot.at(0, 1), -0.3, 0.0, -0.3, pot.at(0, 2), -0.3, 0.0, -0.3, pot.at(1, 2);
  EXPECT_EQ(pot.basis.index(0, 1), 0);
  EXPECT_EQ(pot.basis.index(0, 2), 1);
  EXPECT_EQ(pot.basis.index(1, 2), 2);
  EXPECT_EQ(H, expected);
}

TEST(Heff, StructureAndSymmetry) {
  const auto pot = pair_potential(1.0, 0.78, 0.6, 13);
  const RealMatrix H = build_heff(0.75, pot);
  EXPECT_EQ(H, H.transpose());
  for (int r = 0; r < H.rows(); ++r) {
    int degree = 0;
    for (int c = 0; c < H.cols(); ++c)
      if (r != c && H(r, c) != 0.0) ++degree;
    EXPECT_LE(degree, 4);
  }
  const RealMatrix H0 = build_heff(0.0, pot);
  EXPECT_EQ(H0, RealMatrix(pot.V.asDiagonal()));
}

TEST(EvolvePair, MatchesMatrixExponential) {
  const auto pot = pair_potential(1.0, 0.78, 0.6, 13);
  const RealMatrix H = build_heff(0.75, pot);
  const auto s0 = initial_pair_state(0.75, pot);
  const auto states = evolve_pair(s0, H, {0.0, 1.0, 3.0});
  EXPECT_EQ(states[0].amplitudes, s0.amplitudes);
  for (std::size_t k = 1; k < states.size(); ++k) {
    const double t = states[k].time;
    const Eigen::MatrixXcd U = (Eigen::MatrixXcd(H.cast<cd>()) * cd(0.0, -t)).exp();
    EXPECT_LT((states[k].amplitudes - U * s0.amplitudes).norm(), 1e-12);
    EXPECT_NEAR(states[k].amplitudes.norm(), s0.amplitudes.norm(), 1e-10);
  }
}

TEST(EvolvePair, StringTensionOpensBulkChannel) {
  const PairBasis basis(13, -6);
  double bulk[2];
  for (int k = 0; k < 2; ++k) {
    const auto pot = pair_potential(1.0, 0.78, k == 0 ? 0.0 : 0.6, 13);
    const auto s0 = initial_pair_state(0.75, pot);
    bulk[k] = bulk_pair_weight(evolve_pair(s0, build_heff(0.75, pot), {3.0}).front(), basis);
  }
  EXPECT_GT(bulk[1], bulk[0]);
}

TEST(BrokenProbability, BoundsAndOrigin) {
  const auto pot = pair_potential(1.0, 0.78, 0.6, 13);
  const auto s0 = initial_pair_state(0.3, pot);
  std::vector<double> times;
  for (int k = 0; k <= 60; ++k) times.push_back(0.1 * k);
  const auto states = evolve_pair(s0, build_heff(0.3, pot), times);
  EXPECT_EQ(broken_probability(states[0], s0), 0.0);
  const double bound = 4.0 * s0.amplitudes.squaredNorm();
  for (const auto& s : states) {
    const double p = broken_probability(s, s0);
    EXPECT_GE(p, -1e-15);
    EXPECT_LE(p, bound + 1e-15);
  }
}

TEST(BrokenProbability, FirstOrderErrorScalesAsFourthPower) {
  // max over Jt in [0,2] of |P_pert - (1 - |<psi0|psi(t)>|^2)|
  auto max_error = [](double g) {
    const double h = 0.05;
    const auto run = propagate(prepare_state(string_configuration(13)), string_spec(13, 0.78, h, g), 0.05, 40);
    const auto pot = pair_potential(1.0, 0.78, h, 13);
    const auto s0 = initial_pair_state(g, pot);
    const auto states = evolve_pair(s0, build_heff(g, pot), run.times);
    double err = 0.0;
    for (std::size_t k = 0; k < run.times.size(); ++k) {
      const double exact = 1.0 - std::norm(run.states[k].amplitudes[8191]);
      err = std::max(err, std::abs(exact - broken_probability(states[k], s0)));
    }
    return err;
  };
  const double ratio = max_error(0.1) / max_error(0.05);
  EXPECT_GT(ratio, 12.0);
  EXPECT_LT(ratio, 20.0);
}

TEST(Reconstruct, FrozenAtZeroCoupling) {
  const auto pot = pair_potential(1.0, 0.78, 0.6, 13);
  const auto s0 = initial_pair_state(0.0, pot);
  const auto st = evolve_pair(s0, build_heff(0.0, pot), {2.0}).front();
  const auto base = string_configuration(13);
  const auto obs = reconstruct_observables(s0, st, pot.basis, base);
  const auto classical = charge_density(prepare_state(base), make_tails(Environment::kString));
  EXPECT_EQ(obs.q, classical);
  for (double e : obs.eps) EXPECT_EQ(e, -1.0);
}

TEST(Reconstruct, QualitativelyMatchesExactDynamics) {
  // Sign agreement of q(t) - q(0) on the dynamical bonds at Jt = 3.
  const double g = 0.75;
  for (double h : {0.0, 0.6}) {
    const auto spec = string_spec(13, 0.78, h, g);
    const auto run = propagate(prepare_state(string_configuration(13)), spec, 0.05, 60);
    const auto tails = make_tails(Environment::kString);
    const auto q0 = charge_density(run.states.front(), tails);
    const auto q_exact = charge_density(run.states.back(), tails);

    const auto pot = pair_potential(1.0, 0.78, h, 13);
    const auto s0 = initial_pair_state(g, pot);
    const auto st = evolve_pair(s0, build_heff(g, pot), {3.0}).front();
    const auto obs = reconstruct_observables(s0, st, pot.basis, string_configuration(13));
    int agree = 0, total = 0;
    for (std::size_t k = 0; k < q0.size(); ++k) {
      EXPECT_GE(obs.q[k], -1e-12);
      EXPECT_LE(obs.q[k], 1.0 + 1e-12);
      const double d_exact = q_exact[k] - q0[k], d_pert = obs.q[k] - q0[k];
      if (std::abs(d_exact) < 1e-3) continue;
      ++total;
      if ((d_exact > 0) == (d_pert > 0)) ++agree;
    }
    EXPECT_GE(agree, 0.8 * total) << "h=" << h;
  }
}

TEST(ResonantConfigs, NoneWithoutStringTension) {
  EXPECT_TRUE(resonant_configs(pair_potential(1.0, 0.78, 0.0, 13), 0.3).empty());
}

TEST(ResonantConfigs, ContourMovesInwardWithTension) {
  int previous_negative = 0;
  int previous_min_separation = 100;
  for (double h : {0.2, 0.4, 0.6, 0.8}) {
    const auto pot = pair_potential(1.0, 0.78, h, 13);
    int negative = 0, min_separation = 100;
    for (int k = 0; k < pot.basis.size(); ++k) {
      if (pot.V[k] < 0.0) {
        ++negative;
        const auto [l1, l2] = pot.basis.pair(k);
        min_separation = std::min(min_separation, l2 - l1);
      }
    }
    EXPECT_GE(negative, previous_negative);
    EXPECT_LE(min_separation, previous_min_separation);
    previous_negative = negative;
    previous_min_separation = min_separation;
  }
  EXPECT_GT(previous_negative, 0);
}

TEST(ResonantConfigs, SortedAndReflectionPaired) {
  const auto pot = pair_potential(1.0, 0.78, 0.6, 13);
  const auto res = resonant_configs(pot, 0.5);
  ASSERT_FALSE(res.empty());
  std::set<std::pair<int, int>> set(res.begin(), res.end());
  for (const auto& [l1, l2] : res) EXPECT_TRUE(set.count({1 - l2, 1 - l1}));
  for (std::size_t k = 1; k < res.size(); ++k)
    EXPECT_LE(res[k - 1].second - res[k - 1].first, res[k].second - res[k].first);
  for (const auto& [l1, l2] : res) EXPECT_LT(std::abs(pot.at(l1, l2)), 0.5);
}

TEST(PotentialCsv, HeaderAndRows) {
  const auto csv = potential_csv(pair_potential(1.0, 0.78, 0.2, 2));
  EXPECT_EQ(csv.rfind("l1,l2,V\n0,1,", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
}
