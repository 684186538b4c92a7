#include "stringsim/krylov.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <random>
#include <vector>

#include <Eigen/Eigenvalues>

#include "stringsim/errors.hpp"

namespace stringsim {

namespace {

using cd = std::complex<double>;

struct LanczosBasis {
  std::vector<ComplexVector> V;
  std::vector<double> alpha;
  std::vector<double> beta;  // beta[j] couples V[j] and V[j+1]
  bool invariant = false;

  int size() const { return static_cast<int>(alpha.size()); }
};

// Orthogonalizes w against the basis twice; throws when orthogonality cannot
// be restored. `scale` is the norm of H v, the size of the rounding noise.
void reorthogonalize(const std::vector<ComplexVector>& V, ComplexVector& w, double scale) {
  for (int pass = 0; pass < 2; ++pass)
    for (const auto& v : V) w -= v.dot(w) * v;
  const double nw = w.norm();
  for (const auto& v : V)
    if (std::abs(v.dot(w)) > 1e-8 * nw + 1e-12 * scale)
      throw KrylovBreakdown("Lanczos basis lost orthogonality after reorthogonalization");
}

// exp(-i tau T) e_1 for the leading k x k block of the tridiagonal matrix.
Eigen::VectorXcd small_exp(const LanczosBasis& basis, int k, double tau) {
  RealMatrix T = RealMatrix::Zero(k, k);
  for (int j = 0; j < k; ++j) {
    T(j, j) = basis.alpha[j];
    if (j + 1 < k) T(j, j + 1) = T(j + 1, j) = basis.beta[j];
  }
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(T);
  const RealMatrix& Q = es.eigenvectors();
  Eigen::VectorXcd phase(k);
  for (int j = 0; j < k; ++j) phase[j] = std::exp(cd(0.0, -tau * es.eigenvalues()[j])) * Q(0, j);
  return Q.cast<cd>() * phase;
}

// Grows the basis by one vector; returns the new off-diagonal element and
// stores |H v| in `scale_out`.
double extend(const LinearOperator& H, LanczosBasis& basis, ComplexVector& w, double* scale_out = nullptr) {
  const int j = basis.size();
  const ComplexVector& v = basis.V[j];
  H(v, w);
  const double scale = w.norm();
  const double a = v.dot(w).real();
  if (!std::isfinite(a)) throw KrylovBreakdown("non-finite Lanczos coefficient");
  basis.alpha.push_back(a);
  w -= a * v;
  if (j > 0) w -= basis.beta[j - 1] * basis.V[j - 1];
  reorthogonalize(basis.V, w, scale);
  const double b = w.norm();
  if (!std::isfinite(b)) throw KrylovBreakdown("non-finite Lanczos coefficient");
  basis.beta.push_back(b);
  if (scale_out) *scale_out = scale;
  return b;
}

}  // namespace

void krylov_step(const LinearOperator& H, ComplexVector& psi, double tau, const KrylovOptions& options,
                 KrylovStats* stats) {
  if (options.max_dim < 2) throw InvalidArgument("krylov_step: max_dim must be >= 2");
  const double norm = psi.norm();
  if (norm == 0.0 || tau == 0.0) return;

  double remaining = tau;
  double step = tau;
  ComplexVector w(psi.size());
  while (std::abs(remaining) > 0.0) {
    if (std::abs(step) > std::abs(remaining)) step = remaining;

    LanczosBasis basis;
    basis.V.push_back(psi / psi.norm());
    const double scale = psi.norm();
    // The basis does not depend on the step, so a failed step is retried on
    // the same basis at half the length.
    Eigen::VectorXcd c;
    double err = 0.0;
    int used = 0;
    for (int halvings = 0;; ++halvings) {
      bool accepted = false;
      while (!accepted) {
        const int k = basis.size();
        if (k == options.max_dim || basis.invariant) break;
        double last_scale = 0.0;
        const double b = extend(H, basis, w, &last_scale);
        c = small_exp(basis, k + 1, step);
        if (b < 1e-13 * std::max(1.0, last_scale)) {
          basis.invariant = true;
          err = 0.0;
        } else {
          err = b * std::abs(c[k]) * scale;
          basis.V.push_back(w / b);
        }
        used = k + 1;
        if (err < options.tolerance) accepted = true;
      }
      if (!accepted) {
        c = small_exp(basis, basis.size(), step);
        err = basis.invariant ? 0.0 : basis.beta.back() * std::abs(c[basis.size() - 1]) * scale;
        used = basis.size();
        accepted = err < options.tolerance;
      }
      if (accepted) break;
      if (halvings >= options.max_halvings)
        throw ToleranceNotMet("krylov_step: error estimate " + std::to_string(err) + " after maximal step halving");
      step *= 0.5;
    }

    ComplexVector next = ComplexVector::Zero(psi.size());
    for (int j = 0; j < used; ++j) next += c[j] * basis.V[j];
    psi = scale * next;
    remaining -= step;
    if (stats) {
      ++stats->substeps;
      stats->max_dim_used = std::max(stats->max_dim_used, used);
      stats->max_error_estimate = std::max(stats->max_error_estimate, err);
    }
  }
}

double lanczos_ground_energy(const LinearOperator& H, std::int64_t dim, double tolerance, int max_iterations) {
  if (dim < 1) throw InvalidArgument("lanczos_ground_energy: empty operator");
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> normal;
  ComplexVector start(dim);
  for (auto& x : start) x = normal(rng);
  start.normalize();

  const int block = static_cast<int>(std::min<std::int64_t>(dim, 120));
  double previous = std::numeric_limits<double>::infinity();
  ComplexVector w(dim);
  for (int restart = 0, total = 0; total < max_iterations; ++restart) {
    LanczosBasis basis;
    basis.V.push_back(start);
    for (int k = 0; k < block; ++k) {
      double scale = 0.0;
      const double b = extend(H, basis, w, &scale);
      ++total;
      if (b < 1e-13 * std::max(1.0, scale)) {
        basis.invariant = true;
        break;
      }
      if (k + 1 < block) basis.V.push_back(w / b);
    }
    const int k = basis.size();
    RealMatrix T = RealMatrix::Zero(k, k);
    for (int j = 0; j < k; ++j) {
      T(j, j) = basis.alpha[j];
      if (j + 1 < k) T(j, j + 1) = T(j + 1, j) = basis.beta[j];
    }
    Eigen::SelfAdjointEigenSolver<RealMatrix> es(T);
    const double theta = es.eigenvalues()[0];
    const double residual = basis.invariant ? 0.0 : basis.beta.back() * std::abs(es.eigenvectors()(k - 1, 0));
    if (residual < tolerance * std::max(1.0, std::abs(theta)) ||
        std::abs(theta - previous) < 1e-3 * tolerance * std::max(1.0, std::abs(theta)))
      return theta;
    previous = theta;
    // Restart from the current Ritz vector.
    start.setZero();
    for (int j = 0; j < k; ++j) start += es.eigenvectors()(j, 0) * basis.V[j];
    start.normalize();
  }
  throw ToleranceNotMet("lanczos_ground_energy: no convergence");
}

}  // namespace stringsim
