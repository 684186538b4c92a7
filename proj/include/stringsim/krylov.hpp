#pragma once

#include <functional>

#include "stringsim/model.hpp"

namespace stringsim {

struct KrylovOptions {
  int max_dim = 30;
  /// Bound on the a-posteriori error of every accepted substep.
  double tolerance = 1e-10;
  /// Step halving stops after this many levels and throws ToleranceNotMet.
  int max_halvings = 20;
};

struct KrylovStats {
  int substeps = 0;
  int max_dim_used = 0;
  double max_error_estimate = 0.0;
};

using LinearOperator = std::function<void(const ComplexVector&, ComplexVector&)>;

/// psi <- exp(-i H tau) psi for Hermitian H given matrix-free.
///
/// Lanczos with full reorthogonalization; the subspace grows until the
/// error estimate beta_m |e_m^T exp(-i tau T_m) e_1| falls below tolerance,
/// otherwise the step is halved. An invariant subspace ends the expansion
/// early and is exact.
void krylov_step(const LinearOperator& H, ComplexVector& psi, double tau, const KrylovOptions& options,
                 KrylovStats* stats = nullptr);

/// Smallest eigenvalue of a real symmetric operator by restarted Lanczos.
double lanczos_ground_energy(const LinearOperator& H, std::int64_t dim, double tolerance = 1e-12,
                             int max_iterations = 2000);

}  // namespace stringsim
