#include <cmath>
#include <numeric>
#include <vector>

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "stringsim/couplings.hpp"

using namespace stringsim;

namespace {

constexpr double kSpacing = 3.75e-6;

// Transverse Hessian written out from the Coulomb potential, without the
// library's helper.
RealMatrix oracle_hessian(const std::vector<double>& z, double omega_x) {
  const IonSpecies ion;
  const double k = 8.9875517923e9 * ion.charge_c * ion.charge_c / ion.mass_kg;
  const int n = static_cast<int>(z.size());
  RealMatrix K(n, n);
  for (int i = 0; i < n; ++i) {
    double diag = omega_x * omega_x;
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double d3 = std::pow(std::abs(z[i] - z[j]), 3);
      K(i, j) = k / d3;
      diag -= k / d3;
    }
    K(i, i) = diag;
  }
  return K;
}

ModeData crystal_modes() {
  const std::vector<double> z = uniform_positions(15, kSpacing);
  return transverse_modes(z, radial_frequency_for_zigzag(z, kTwoPi * 2.78e6));
}

std::vector<int> central(int n_ions, int n_active) {
  std::vector<int> a(n_active);
  std::iota(a.begin(), a.end(), (n_ions - n_active) / 2);
  return a;
}

RealMatrix exponential_matrix(int n, double J, double beta, double alpha) {
  RealMatrix M = RealMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) {
        const int r = std::abs(i - j);
        M(i, j) = J * std::exp(-beta * (r - 1)) * std::pow(r, -alpha);
      }
  return M;
}

}  // namespace

TEST(Modes, TwoIonsHaveComAndStretch) {
  const std::vector<double> z = uniform_positions(2, kSpacing);
  const double wx = kTwoPi * 3e6;
  const ModeData m = transverse_modes(z, wx);
  ASSERT_EQ(m.frequencies.size(), 2);
  EXPECT_NEAR(m.frequencies[0], wx, 1e-6 * wx);
  EXPECT_NEAR(m.participation(0, 0), M_SQRT1_2, 1e-12);
  EXPECT_NEAR(m.participation(1, 0), M_SQRT1_2, 1e-12);
  EXPECT_NEAR(m.participation(0, 1), -m.participation(1, 1), 1e-12);
  const RealMatrix K = oracle_hessian(z, wx);
  EXPECT_NEAR(m.frequencies[1], std::sqrt(K(0, 0) - K(0, 1)), 1e-6 * wx);
}

TEST(Modes, FifteenIonChainHasAlternatingZigZag) {
  const ModeData m = crystal_modes();
  const int n = 15;
  EXPECT_NEAR(m.frequencies[n - 1], kTwoPi * 2.78e6, 1e-3);
  for (int k = 1; k < n; ++k) EXPECT_GT(m.frequencies[k - 1], m.frequencies[k]);
  for (int i = 1; i < n; ++i) EXPECT_LT(m.participation(i, n - 1) * m.participation(i - 1, n - 1), 0.0);
  EXPECT_LT((m.participation.transpose() * m.participation - RealMatrix::Identity(n, n)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Modes, HessianResidualIsSmall) {
  const std::vector<double> z = uniform_positions(15, kSpacing);
  const double wx = radial_frequency_for_zigzag(z, kTwoPi * 2.78e6);
  const ModeData m = transverse_modes(z, wx);
  const RealMatrix K = oracle_hessian(z, wx);
  const RealMatrix w2 = m.frequencies.array().square().matrix().asDiagonal();
  // Relative to the eigenvalue scale omega^2 ~ 3e14.
  EXPECT_LT((K * m.participation - m.participation * w2).norm() / (wx * wx), 1e-9);
}

TEST(Modes, DegenerateGeometryIsRejected) {
  EXPECT_THROW(transverse_modes({0.0, 0.0}, 1e7), DegenerateGeometry);
  EXPECT_THROW(transverse_modes({1e-6, 0.0}, 1e7), DegenerateGeometry);
  EXPECT_THROW(transverse_modes({0.0}, 1e7), DegenerateGeometry);
  // Too weak a radial trap buckles the chain.
  EXPECT_THROW(transverse_modes(uniform_positions(15, kSpacing), kTwoPi * 1e5), DegenerateGeometry);
}

TEST(Jij, ZeroDriveGivesZeroMatrix) {
  const ModeData m = crystal_modes();
  const BeamProfile beams{RealVector::Zero(15), {}};
  EXPECT_EQ(jij_from_modes(m, beams, -kTwoPi * 35e3, central(15, 13)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Jij, SymmetricAndQuadraticInRabiScale) {
  const ModeData m = crystal_modes();
  BeamProfile beams{RealVector::LinSpaced(15, 1.0, 2.0) * 1e5, {}};
  const std::vector<int> active = central(15, 13);
  const RealMatrix J = jij_from_modes(m, beams, -kTwoPi * 35e3, active);
  EXPECT_EQ((J - J.transpose()).cwiseAbs().maxCoeff(), 0.0);
  beams.rabi *= 3.0;
  const RealMatrix J3 = jij_from_modes(m, beams, -kTwoPi * 35e3, active);
  EXPECT_LT((J3 - 9.0 * J).cwiseAbs().maxCoeff(), 1e-12 * J.cwiseAbs().maxCoeff() * 9.0);
}

TEST(Jij, MatchesDirectModeSum) {
  const ModeData m = crystal_modes();
  BeamProfile beams{RealVector::Constant(15, 2e5), {}};
  const double mu = -kTwoPi * 35e3;
  const RealMatrix J = jij_from_modes(m, beams, mu, {3, 4, 9});
  double sum = 0.0;
  for (int k = 0; k < 15; ++k)
    sum += 0.08 * m.participation(4, k) * 0.08 * m.participation(9, k) * 2e5 * 2e5 /
           (kTwoPi * 2.78e6 + mu - m.frequencies[k]);
  EXPECT_NEAR(J(1, 2), sum, 1e-12 * std::abs(sum));
}

TEST(Jij, RawCouplingsAreStaggered) {
  const ModeData m = crystal_modes();
  const BeamProfile beams{RealVector::Constant(15, 2e5), {}};
  const RealMatrix J = jij_from_modes(m, beams, -kTwoPi * 35e3, central(15, 13));
  for (int i = 0; i + 2 < 13; ++i) EXPECT_LT(J(i, i + 1) * J(i, i + 2), 0.0);
}

TEST(Jij, ResonantDriveThrows) {
  const ModeData m = crystal_modes();
  const BeamProfile beams{RealVector::Constant(15, 2e5), {}};
  // mu = 0 drives the zig-zag mode itself.
  EXPECT_THROW(jij_from_modes(m, beams, 0.0, central(15, 13)), ResonanceError);
  EXPECT_THROW(jij_from_modes(m, beams, -kTwoPi * 35e3, {15}), IndexOutOfRange);
}

TEST(Stagger, InvolutionAndSignCorrection) {
  const RealMatrix J = exponential_matrix(9, 1.0, 0.5, 0.0);
  const RealMatrix S = stagger_correction(J);
  EXPECT_EQ(stagger_correction(S), J);
  // A checkerboard input comes out all positive.
  EXPECT_GE(stagger_correction(S).minCoeff(), 0.0);
  Eigen::SelfAdjointEigenSolver<RealMatrix> a(J, Eigen::EigenvaluesOnly), b(S, Eigen::EigenvaluesOnly);
  EXPECT_LT((a.eigenvalues() - b.eigenvalues()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Optimize, TwoActiveIonsAreSolvedExactly) {
  const ModeData m = crystal_modes();
  const AmplitudeFit fit = optimize_amplitudes(m, -kTwoPi * 35e3, kTwoPi * 340.0, {6, 7});
  EXPECT_LT(fit.objective, 1e-20);
  const RealMatrix J = stagger_correction(jij_from_modes(m, fit.beams, -kTwoPi * 35e3, {6, 7}));
  EXPECT_NEAR(std::abs(J(0, 1)), kTwoPi * 340.0, 1e-8 * kTwoPi * 340.0);
}

TEST(Optimize, ObjectiveNeverIncreasesAndProfileIsEdgeHeavy) {
  const ModeData m = crystal_modes();
  const std::vector<int> active = central(15, 13);
  const AmplitudeFit fit = optimize_amplitudes(m, -kTwoPi * 35e3, kTwoPi * 340.0, active);
  for (std::size_t k = 1; k < fit.history.size(); ++k) EXPECT_LE(fit.history[k], fit.history[k - 1]);
  const RealVector& w = fit.beams.rabi;
  EXPECT_GT(w[active.front()], w[7]);
  EXPECT_GT(w[active.back()], w[7]);
  // Larger drive where the zig-zag participation is smaller.
  EXPECT_LT(std::abs(m.participation(active.front(), 14)), std::abs(m.participation(7, 14)));
  EXPECT_EQ(w[0], 0.0);
  EXPECT_EQ(w[14], 0.0);
  const RealMatrix J = stagger_correction(jij_from_modes(m, fit.beams, -kTwoPi * 35e3, active));
  EXPECT_LE(range_stats(J, 1).relative_spread, 0.05);
}

TEST(Optimize, MirrorSymmetricStartsReachTheSameProfile) {
  const ModeData m = crystal_modes();
  const std::vector<int> active = central(15, 13);
  const AmplitudeFit base = optimize_amplitudes(m, -kTwoPi * 35e3, kTwoPi * 340.0, active);
  OptimizerOptions opts;
  for (int a = 0; a < 13; ++a) opts.initial.push_back(1.0 + 0.1 * std::cos(0.7 * (a - 6)));
  const AmplitudeFit other = optimize_amplitudes(m, -kTwoPi * 35e3, kTwoPi * 340.0, active, opts);
  for (int i : active) {
    EXPECT_NEAR(other.beams.rabi[i], base.beams.rabi[i], 1e-4 * base.beams.rabi[i]);
    EXPECT_NEAR(base.beams.rabi[i], base.beams.rabi[14 - i], 1e-5 * base.beams.rabi[i]);
  }
}

TEST(Optimize, StallReportsTheBestIterate) {
  const ModeData m = crystal_modes();
  OptimizerOptions opts;
  opts.max_iterations = 1;
  opts.tolerance = 0.0;
  try {
    optimize_amplitudes(m, -kTwoPi * 35e3, kTwoPi * 340.0, central(15, 13), opts);
    FAIL() << "expected NoConvergence";
  } catch (const NoConvergence& e) {
    EXPECT_EQ(e.best().iterations, 1);
    EXPECT_GT(e.best().beams.rabi[7], 0.0);
  }
}

TEST(FitProfile, RecoversExactModels) {
  const ProfileFit e = fit_profile(exponential_matrix(13, 2.0, 0.78, 0.0));
  EXPECT_NEAR(e.beta, 0.78, 1e-6);
  EXPECT_NEAR(e.alpha, 0.0, 1e-6);
  EXPECT_NEAR(e.J, 2.0, 1e-9);
  const ProfileFit p = fit_profile(exponential_matrix(13, 1.0, 0.0, 1.5), 12);
  EXPECT_NEAR(p.alpha, 1.5, 1e-6);
  EXPECT_NEAR(p.beta, 0.0, 1e-6);
  EXPECT_EQ(p.range_average.size(), 12u);
}

TEST(FitProfile, ScaleEquivariantAndSignBlind) {
  const RealMatrix M = stagger_correction(exponential_matrix(11, 1.0, 0.6, 0.3));
  const ProfileFit a = fit_profile(M);
  const ProfileFit b = fit_profile(-7.0 * M);
  EXPECT_NEAR(b.J, 7.0 * a.J, 1e-9 * b.J);
  EXPECT_NEAR(b.beta, a.beta, 1e-9);
  EXPECT_NEAR(b.alpha, a.alpha, 1e-9);
}

TEST(FitProfile, TooFewRangesAreIllConditioned) {
  EXPECT_THROW(fit_profile(exponential_matrix(3, 1.0, 0.5, 0.0)), IllConditioned);
  EXPECT_THROW(fit_profile(RealMatrix::Zero(6, 6)), IllConditioned);
}

TEST(CouplingsCsv, MatrixRoundTrip) {
  const RealMatrix M = exponential_matrix(5, kTwoPi * 340.0, 0.78, 0.0);
  const std::string text = matrix_csv(M, "rad/s");
  EXPECT_EQ(text.rfind("# unit: rad/s\n", 0), 0u);
  EXPECT_EQ(read_matrix_csv(text), M);
  const ModeData m = crystal_modes();
  const RealMatrix back = read_matrix_csv(modes_csv(m));
  EXPECT_EQ(back.row(0).transpose(), m.frequencies);
  EXPECT_EQ(back.bottomRows(15), m.participation);
}
