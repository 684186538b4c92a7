#include "stringsim/couplings.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <Eigen/Eigenvalues>

namespace stringsim {

namespace {

constexpr double kCoulomb = 8.9875517923e9;  // 1 / (4 pi eps0), SI

void check_positions(const std::vector<double>& z) {
  if (z.size() < 2) throw DegenerateGeometry("transverse_modes: need at least two ions");
  for (std::size_t i = 1; i < z.size(); ++i)
    if (!(z[i] > z[i - 1])) throw DegenerateGeometry("transverse_modes: positions must be strictly increasing");
}

// Coulomb part of the mass-weighted transverse Hessian; the trap adds
// omega_x^2 on the diagonal.
RealMatrix coulomb_hessian(const std::vector<double>& z, const IonSpecies& species) {
  const int n = static_cast<int>(z.size());
  const double k = kCoulomb * species.charge_c * species.charge_c / species.mass_kg;
  RealMatrix K = RealMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double c = k / std::pow(std::abs(z[i] - z[j]), 3);
      K(i, j) = c;
      K(i, i) -= c;
    }
  return K;
}

}  // namespace

std::vector<double> uniform_positions(int n, double spacing_m) {
  std::vector<double> z(n);
  for (int i = 0; i < n; ++i) z[i] = (i - 0.5 * (n - 1)) * spacing_m;
  return z;
}

ModeData transverse_modes(const std::vector<double>& positions_m, double radial_com_frequency,
                          const IonSpecies& species) {
  check_positions(positions_m);
  const int n = static_cast<int>(positions_m.size());
  RealMatrix K = coulomb_hessian(positions_m, species);
  K.diagonal().array() += radial_com_frequency * radial_com_frequency;
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(K);
  if (es.eigenvalues()[0] <= 0.0) throw DegenerateGeometry("transverse_modes: linear crystal is unstable");
  ModeData m{RealVector(n), RealMatrix(n, n)};
  for (int k = 0; k < n; ++k) {
    // Ascending eigenvalues, descending frequencies.
    const int src = n - 1 - k;
    m.frequencies[k] = std::sqrt(es.eigenvalues()[src]);
    RealVector b = es.eigenvectors().col(src);
    // Sign convention: first nonzero entry positive.
    for (int i = 0; i < n; ++i)
      if (std::abs(b[i]) > 1e-12) {
        if (b[i] < 0) b = -b;
        break;
      }
    m.participation.col(k) = b;
  }
  return m;
}

double radial_frequency_for_zigzag(const std::vector<double>& positions_m, double zigzag, const IonSpecies& species) {
  check_positions(positions_m);
  // Every transverse eigenvalue is omega_x^2 plus an eigenvalue of the
  // Coulomb part; the zig-zag mode takes the most negative one.
  Eigen::SelfAdjointEigenSolver<RealMatrix> es(coulomb_hessian(positions_m, species), Eigen::EigenvaluesOnly);
  return std::sqrt(zigzag * zigzag - es.eigenvalues()[0]);
}

RealMatrix jij_from_modes(const ModeData& modes, const BeamProfile& beams, double mu, const std::vector<int>& active,
                          const DriveSettings& drive) {
  const int n_ions = static_cast<int>(modes.participation.rows());
  if (beams.rabi.size() != n_ions) throw InvalidArgument("jij_from_modes: one Rabi frequency per ion required");
  for (int i = 0; i < n_ions; ++i)
    if (beams.rabi[i] < 0.0) throw InvalidArgument("jij_from_modes: Rabi frequencies must be non-negative");
  for (int i : active)
    if (i < 0 || i >= n_ions) throw IndexOutOfRange("jij_from_modes: active ion out of range");
  const int n_modes = static_cast<int>(modes.frequencies.size());
  RealVector inv_detuning(n_modes);
  for (int k = 0; k < n_modes; ++k) {
    const double d = drive.omega_laser + mu - modes.frequencies[k];
    if (std::abs(d) < drive.resonance_floor)
      throw ResonanceError("jij_from_modes: drive within the resonance floor of mode " + std::to_string(k));
    inv_detuning[k] = 1.0 / d;
  }
  const auto flip = [&](int i) { return beams.phase_flip.empty() ? 1.0 : static_cast<double>(beams.phase_flip[i]); };
  const int n = static_cast<int>(active.size());
  const double eta2 = drive.lamb_dicke * drive.lamb_dicke;
  RealMatrix J = RealMatrix::Zero(n, n);
  for (int a = 0; a < n; ++a)
    for (int c = a + 1; c < n; ++c) {
      const int i = active[a], j = active[c];
      double sum = 0.0;
      for (int k = 0; k < n_modes; ++k)
        sum += modes.participation(i, k) * modes.participation(j, k) * inv_detuning[k];
      J(a, c) = J(c, a) = eta2 * beams.rabi[i] * beams.rabi[j] * flip(i) * flip(j) * sum;
    }
  return J;
}

RealMatrix stagger_correction(const RealMatrix& J) {
  if (J.rows() != J.cols()) throw InvalidArgument("stagger_correction: matrix must be square");
  RealMatrix out = J;
  for (int i = 0; i < J.rows(); ++i)
    for (int j = 0; j < J.cols(); ++j)
      if ((i + j) % 2 != 0) out(i, j) = -J(i, j);
  return out;
}

RangeStats range_stats(const RealMatrix& J, int r) {
  const int n = static_cast<int>(J.rows());
  if (r < 1 || r >= n) throw InvalidArgument("range_stats: range outside the matrix");
  RealVector v(n - r);
  for (int i = 0; i + r < n; ++i) v[i] = J(i, i + r);
  const double mean = v.mean();
  const double var = v.size() > 1 ? (v.array() - mean).square().sum() / v.size() : 0.0;
  return {mean, mean != 0.0 ? std::sqrt(var) / std::abs(mean) : 0.0};
}

namespace {

struct Problem {
  const ModeData& modes;
  double mu;
  double target;
  const std::vector<int>& active;
  const OptimizerOptions& options;

  RealMatrix couplings(const RealVector& x) const {
    BeamProfile beams{RealVector::Zero(modes.participation.rows()), {}};
    for (std::size_t a = 0; a < active.size(); ++a) beams.rabi[active[a]] = std::abs(x[a]);
    const RealMatrix J = jij_from_modes(modes, beams, mu, active, options.drive);
    return options.stagger ? stagger_correction(J) : J;
  }

  // Residuals whose squared norm is the objective.
  RealVector residuals(const RealVector& x) const {
    const RealMatrix J = couplings(x);
    const int n = static_cast<int>(J.rows());
    const int n_nn = n - 1;
    const int n_nnn = std::max(n - 2, 0);
    RealVector r(n_nn + n_nnn);
    for (int i = 0; i < n_nn; ++i) r[i] = J(i, i + 1) / target - 1.0;
    if (n_nnn > 0) {
      double mean = 0.0;
      for (int i = 0; i < n_nnn; ++i) mean += J(i, i + 2);
      mean /= n_nnn;
      const double s = std::sqrt(options.nnn_weight / n_nnn);
      for (int i = 0; i < n_nnn; ++i) r[n_nn + i] = s * (J(i, i + 2) - mean) / target;
    }
    return r;
  }
};

}  // namespace

AmplitudeFit optimize_amplitudes(const ModeData& modes, double mu, double target_nn, const std::vector<int>& active,
                                 const OptimizerOptions& options) {
  if (active.size() < 2) throw InvalidArgument("optimize_amplitudes: need at least two active ions");
  if (!(target_nn > 0.0)) throw InvalidArgument("optimize_amplitudes: target must be positive");
  Problem p{modes, mu, target_nn, active, options};
  const int n = static_cast<int>(active.size());

  RealVector x = RealVector::Ones(n);
  if (!options.initial.empty()) {
    if (static_cast<int>(options.initial.size()) != n)
      throw InvalidArgument("optimize_amplitudes: initial profile needs one entry per active ion");
    for (int a = 0; a < n; ++a) x[a] = options.initial[a];
  }
  {
    const RealMatrix J = p.couplings(x);
    double mean = 0.0;
    for (int i = 0; i + 1 < n; ++i) mean += J(i, i + 1);
    mean /= n - 1;
    if (mean == 0.0) throw InvalidArgument("optimize_amplitudes: the drive produces no NN coupling");
    p.target = std::copysign(target_nn, mean);
    x *= std::sqrt(p.target / mean);
  }

  AmplitudeFit fit;
  RealVector r = p.residuals(x);
  double f = r.squaredNorm();
  double lambda = 1e-3;
  bool converged = false;
  int it = 0;
  for (; it < options.max_iterations && !converged; ++it) {
    // Forward-difference Jacobian.
    RealMatrix Jac(r.size(), n);
    for (int a = 0; a < n; ++a) {
      RealVector xp = x;
      const double step = 1e-7 * std::max(std::abs(x[a]), 1.0);
      xp[a] += step;
      Jac.col(a) = (p.residuals(xp) - r) / step;
    }
    const RealMatrix JtJ = Jac.transpose() * Jac;
    const RealVector g = Jac.transpose() * r;
    bool accepted = false;
    while (lambda < 1e12) {
      RealMatrix A = JtJ;
      A.diagonal() += lambda * JtJ.diagonal().cwiseMax(1e-30 * JtJ.diagonal().maxCoeff() + 1e-300);
      const RealVector dx = A.ldlt().solve(-g);
      const RealVector x_new = x + dx;
      const RealVector r_new = p.residuals(x_new);
      const double f_new = r_new.squaredNorm();
      if (f_new <= f) {
        const double change = f - f_new;
        x = x_new;
        r = r_new;
        fit.history.push_back(f_new);
        converged = change <= options.tolerance * std::max(f, 1e-300) || f_new < 1e-28;
        f = f_new;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 4.0;
    }
    // No downhill step at any damping: a stationary point to working precision.
    if (!accepted) converged = true;
  }

  fit.beams.rabi = RealVector::Zero(modes.participation.rows());
  for (int a = 0; a < n; ++a) fit.beams.rabi[active[a]] = std::abs(x[a]);
  fit.beams.phase_flip.assign(modes.participation.rows(), 1);
  fit.objective = f;
  fit.iterations = it;
  if (!converged)
    throw NoConvergence("optimize_amplitudes: no convergence in " + std::to_string(options.max_iterations) +
                            " iterations",
                        fit);
  return fit;
}

ProfileFit fit_profile(const RealMatrix& J, int max_range) {
  const int n = static_cast<int>(J.rows());
  if (J.cols() != n) throw InvalidArgument("fit_profile: matrix must be square");
  if (n - 1 < 3) throw IllConditioned("fit_profile: need at least 3 distinct ranges");
  const int ranges = max_range > 0 ? std::min(max_range, n - 1) : std::min(std::max(3, (n - 1) / 2), n - 1);
  if (ranges < 3) throw IllConditioned("fit_profile: need at least 3 fitted ranges");
  ProfileFit fit;
  for (int r = 1; r < n; ++r) {
    double s = 0.0;
    for (int i = 0; i + r < n; ++i) s += std::abs(J(i, i + r));
    fit.range_average.push_back(s / (n - r));
  }
  RealMatrix A(ranges, 3);
  RealVector y(ranges);
  for (int r = 1; r <= ranges; ++r) {
    const double s = fit.range_average[r - 1];
    if (!(s > 0.0)) throw IllConditioned("fit_profile: range " + std::to_string(r) + " averages to zero");
    A(r - 1, 0) = 1.0;
    A(r - 1, 1) = -(r - 1.0);
    A(r - 1, 2) = -std::log(static_cast<double>(r));
    y[r - 1] = std::log(s);
  }
  const Eigen::ColPivHouseholderQR<RealMatrix> qr(A);
  if (qr.rank() < 3) throw IllConditioned("fit_profile: design matrix is rank deficient");
  const RealVector c = qr.solve(y);
  fit.J = std::exp(c[0]);
  fit.beta = c[1];
  fit.alpha = c[2];
  fit.residual = std::sqrt((A * c - y).squaredNorm() / ranges);
  return fit;
}

std::string matrix_csv(const RealMatrix& M, const std::string& unit) {
  std::ostringstream out;
  out << "# unit: " << unit << '\n';
  for (int j = 0; j < M.cols(); ++j) out << (j ? "," : "") << "c" << j;
  out << '\n';
  char buf[40];
  for (int i = 0; i < M.rows(); ++i) {
    for (int j = 0; j < M.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", M(i, j));
      out << (j ? "," : "") << buf;
    }
    out << '\n';
  }
  return out.str();
}

RealMatrix read_matrix_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::vector<double>> rows;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw InvalidArgument("read_matrix_csv: bad number '" + cell + "'");
      }
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw InvalidArgument("read_matrix_csv: ragged rows");
    rows.push_back(std::move(row));
  }
  RealMatrix M(rows.size(), rows.empty() ? 0 : rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) M(i, j) = rows[i][j];
  return M;
}

std::string modes_csv(const ModeData& modes) {
  RealMatrix M(modes.participation.rows() + 1, modes.participation.cols());
  M.row(0) = modes.frequencies.transpose();
  M.bottomRows(modes.participation.rows()) = modes.participation;
  std::string body = matrix_csv(M, "row 0: rad/s; rows 1..N: participation b_{i,k}");
  return body;
}

CalibrationReport calibrate(const CalibrationSettings& s) {
  if (s.active > s.ions || s.active < 2) throw InvalidArgument("calibrate: active ion count out of range");
  const std::vector<double> z = uniform_positions(s.ions, s.spacing_m);
  CalibrationReport rep;
  rep.modes = transverse_modes(z, radial_frequency_for_zigzag(z, s.zigzag));
  const int skip = (s.ions - s.active) / 2;
  rep.active.resize(s.active);
  std::iota(rep.active.begin(), rep.active.end(), skip);
  OptimizerOptions opt = s.optimizer;
  opt.drive.omega_laser = s.zigzag;
  rep.amplitudes = optimize_amplitudes(rep.modes, s.mu, s.target_nn, rep.active, opt);
  const RealMatrix raw = jij_from_modes(rep.modes, rep.amplitudes.beams, s.mu, rep.active, opt.drive);
  // The ion Hamiltonian reads +sum J_ij s_i s_j; the model uses -sum J_ij z_i z_j.
  rep.J = -(opt.stagger ? stagger_correction(raw) : raw);
  rep.fit = fit_profile(rep.J);
  rep.nn = range_stats(rep.J, 1);
  rep.nnn = range_stats(rep.J, 2);
  return rep;
}

}  // namespace stringsim
