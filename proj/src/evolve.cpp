#include "stringsim/evolve.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "stringsim/errors.hpp"

namespace stringsim {

Wavefunction prepare_state(const SpinConfiguration& config) {
  const int L = config.size();
  if (L < 1 || L > kMaxSpins) throw SizeLimit("prepare_state: L out of range");
  Wavefunction psi;
  psi.L = L;
  psi.amplitudes = ComplexVector::Zero(std::int64_t{1} << L);
  psi.amplitudes[basis_index(config.dynamical)] = 1.0;
  return psi;
}

PropagationResult propagate(const Wavefunction& psi, const IsingOperator& H, double dt, int n_steps,
                            const KrylovOptions& options) {
  if (psi.amplitudes.size() != H.dimension()) throw InvalidArgument("propagate: state and operator dimensions differ");
  if (n_steps < 0 || !(dt > 0.0)) throw InvalidArgument("propagate: need dt > 0 and n_steps >= 0");
  const LinearOperator op = [&H](const ComplexVector& in, ComplexVector& out) { H.apply(in, out); };
  PropagationResult result;
  result.times.reserve(n_steps + 1);
  result.states.reserve(n_steps + 1);
  result.times.push_back(0.0);
  result.states.push_back(psi);
  ComplexVector current = psi.amplitudes;
  for (int k = 1; k <= n_steps; ++k) {
    krylov_step(op, current, dt, options, &result.stats);
    result.times.push_back(k * dt);
    result.states.push_back(Wavefunction{psi.L, current});
  }
  return result;
}

PropagationResult propagate(const Wavefunction& psi, const HamiltonianSpec& spec, double dt, int n_steps,
                            const KrylovOptions& options) {
  return propagate(psi, build_hamiltonian(spec), dt, n_steps, options);
}

std::vector<int> charge_bond_labels(int L, int origin) {
  std::vector<int> labels(L + 3);
  std::iota(labels.begin(), labels.end(), origin - 1);
  return labels;
}

std::vector<int> site_labels(int L, int origin) {
  std::vector<int> labels(L);
  std::iota(labels.begin(), labels.end(), origin);
  return labels;
}

namespace {

struct Moments {
  std::vector<double> z;   // <z_i>
  std::vector<double> zz;  // <z_i z_{i+1}>
};

Moments moments(const Wavefunction& psi) {
  const int L = psi.L;
  Moments m{std::vector<double>(L, 0.0), std::vector<double>(std::max(L - 1, 0), 0.0)};
  const std::int64_t dim = psi.amplitudes.size();
  for (std::int64_t idx = 0; idx < dim; ++idx) {
    const double p = std::norm(psi.amplitudes[idx]);
    if (p == 0.0) continue;
    for (int i = 0; i < L; ++i) {
      const bool down = (idx >> i) & 1;
      m.z[i] += down ? -p : p;
      if (i + 1 < L) m.zz[i] += (down != static_cast<bool>((idx >> (i + 1)) & 1)) ? -p : p;
    }
  }
  return m;
}

// Internal position p: p < 0 is the left tail at distance -p, p >= L the
// right tail at distance p - L + 1. Returns 0 for an open tail.
int static_spin(const EnvironmentTails& tails, int L, int p) {
  if (p < 0) return tails.left.spin_at(-p);
  return tails.right.spin_at(p - L + 1);
}

// q on bond k of charge_bond_labels, i.e. between positions k-2 and k-1,
// given a way to evaluate <z> and <z z> on dynamical positions.
template <class Z, class ZZ>
std::vector<double> bond_charges(const EnvironmentTails& tails, int L, Z&& z, ZZ&& zz) {
  std::vector<double> q(L + 3, 0.0);
  for (int k = 0; k < L + 3; ++k) {
    const int a = k - 2, b = k - 1;
    const bool a_dyn = a >= 0 && a < L, b_dyn = b >= 0 && b < L;
    double corr;
    if (a_dyn && b_dyn) {
      corr = zz(a);
    } else if (a_dyn || b_dyn) {
      const int s = static_spin(tails, L, a_dyn ? b : a);
      if (s == 0) continue;
      corr = s * z(a_dyn ? a : b);
    } else {
      const int sa = static_spin(tails, L, a), sb = static_spin(tails, L, b);
      if (sa == 0 || sb == 0) continue;
      corr = sa * sb;
    }
    q[k] = 0.5 * (1.0 - corr);
  }
  return q;
}

}  // namespace

std::vector<double> charge_density(const Wavefunction& psi, const EnvironmentTails& tails) {
  const Moments m = moments(psi);
  return bond_charges(
      tails, psi.L, [&](int i) { return m.z[i]; }, [&](int i) { return m.zz[i]; });
}

std::vector<double> electric_field(const Wavefunction& psi) { return moments(psi).z; }

std::uint64_t CounterRng::bits(std::uint64_t counter) const {
  // SplitMix64 finalizer over a Weyl sequence position determined by
  // (seed, counter); streams for different seeds are decorrelated by a
  // first hashing round on the seed.
  auto mix = [](std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  const std::uint64_t key = mix(seed_ + 0x9e3779b97f4a7c15ULL);
  return mix(key + (counter + 1) * 0x9e3779b97f4a7c15ULL);
}

double CounterRng::uniform(std::uint64_t counter) const {
  return static_cast<double>(bits(counter) >> 11) * 0x1.0p-53;
}

ShotEstimate sample_shots(const Wavefunction& psi, const EnvironmentTails& tails, int n_shots, std::uint64_t seed) {
  if (n_shots < 1) throw InvalidArgument("sample_shots: n_shots must be >= 1");
  const int L = psi.L;
  const RealVector p = psi.probabilities();
  std::vector<double> cdf(p.size());
  std::partial_sum(p.begin(), p.end(), cdf.begin());
  const double total = cdf.back();

  ShotEstimate out;
  out.seed = seed;
  out.n_shots = n_shots;
  const CounterRng rng(seed);
  for (int shot = 0; shot < n_shots; ++shot) {
    const double u = rng.uniform(static_cast<std::uint64_t>(shot)) * total;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    // Never land on a zero-probability state at the top of the range.
    while (it != cdf.begin() && (it == cdf.end() || p[it - cdf.begin()] == 0.0)) --it;
    ++out.histogram[static_cast<std::uint32_t>(it - cdf.begin())];
  }

  // Per-shot values are classical, so every observable is an average of
  // per-shot numbers; accumulate first and second moments.
  std::vector<double> z_sum(L, 0.0), z_sq(L, 0.0);
  std::vector<double> q_sum(L + 3, 0.0), q_sq(L + 3, 0.0);
  for (const auto& [idx, count] : out.histogram) {
    std::vector<double> z(L);
    for (int i = 0; i < L; ++i) z[i] = ((idx >> i) & 1u) ? -1.0 : 1.0;
    const auto q = bond_charges(
        tails, L, [&](int i) { return z[i]; }, [&](int i) { return z[i] * z[i + 1]; });
    for (int i = 0; i < L; ++i) {
      z_sum[i] += count * z[i];
      z_sq[i] += count * z[i] * z[i];
    }
    for (int k = 0; k < L + 3; ++k) {
      q_sum[k] += count * q[k];
      q_sq[k] += count * q[k] * q[k];
    }
  }
  const double n = n_shots;
  auto stderr_of = [n](double sum, double sq) {
    if (n < 2) return 0.0;
    const double mean = sum / n;
    const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1));
    return std::sqrt(var / n);
  };
  for (int i = 0; i < L; ++i) {
    out.eps.push_back(z_sum[i] / n);
    out.eps_stderr.push_back(stderr_of(z_sum[i], z_sq[i]));
  }
  for (int k = 0; k < L + 3; ++k) {
    out.q.push_back(q_sum[k] / n);
    out.q_stderr.push_back(stderr_of(q_sum[k], q_sq[k]));
  }
  return out;
}

int SpatiotemporalMap::column(int label) const {
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw IndexOutOfRange("SpatiotemporalMap: label " + std::to_string(label) + " not present");
  return static_cast<int>(it - labels.begin());
}

SpatiotemporalMap charge_map(const PropagationResult& run, const EnvironmentTails& tails, int origin) {
  SpatiotemporalMap map;
  map.observable = "q";
  map.times = run.times;
  const int L = run.states.empty() ? 0 : run.states.front().L;
  map.labels = charge_bond_labels(L, origin);
  map.values.resize(run.states.size(), map.labels.size());
  for (std::size_t t = 0; t < run.states.size(); ++t) {
    const auto q = charge_density(run.states[t], tails);
    for (std::size_t k = 0; k < q.size(); ++k) map.values(t, k) = q[k];
  }
  return map;
}

SpatiotemporalMap field_map(const PropagationResult& run, int origin) {
  SpatiotemporalMap map;
  map.observable = "eps";
  map.times = run.times;
  const int L = run.states.empty() ? 0 : run.states.front().L;
  map.labels = site_labels(L, origin);
  map.values.resize(run.states.size(), L);
  for (std::size_t t = 0; t < run.states.size(); ++t) {
    const auto eps = electric_field(run.states[t]);
    for (int i = 0; i < L; ++i) map.values(t, i) = eps[i];
  }
  return map;
}

namespace {

std::string format_number(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

}  // namespace

std::string to_csv(const SpatiotemporalMap& map) {
  std::ostringstream out;
  out << "time,site,value,stderr\n";
  for (std::size_t t = 0; t < map.times.size(); ++t) {
    for (std::size_t k = 0; k < map.labels.size(); ++k) {
      out << format_number(map.times[t]) << ',' << map.labels[k] << ',' << format_number(map.values(t, k)) << ',';
      if (map.stderr) out << format_number((*map.stderr)(t, k));
      out << '\n';
    }
  }
  return out.str();
}

void to_json(nlohmann::json& j, const SpatiotemporalMap& map) {
  auto grid = [](const RealMatrix& m) {
    std::vector<std::vector<double>> rows(m.rows(), std::vector<double>(m.cols()));
    for (int r = 0; r < m.rows(); ++r)
      for (int c = 0; c < m.cols(); ++c) rows[r][c] = m(r, c);
    return rows;
  };
  j = nlohmann::json{{"observable", map.observable}, {"times", map.times}, {"sites", map.labels},
                     {"values", grid(map.values)}};
  if (map.stderr) j["stderr"] = grid(*map.stderr);
}

std::vector<double> first_crossing_times(const SpatiotemporalMap& map, double threshold) {
  const int nt = static_cast<int>(map.times.size());
  std::vector<double> out(map.labels.size(), std::numeric_limits<double>::quiet_NaN());
  if (nt == 0) return out;
  for (std::size_t c = 0; c < map.labels.size(); ++c) {
    if (map.values(0, c) >= threshold) {
      out[c] = map.times[0];
      continue;
    }
    for (int k = 1; k < nt; ++k) {
      const double v0 = map.values(k - 1, c), v1 = map.values(k, c);
      if (v1 >= threshold) {
        out[c] = map.times[k - 1] + (threshold - v0) / (v1 - v0) * (map.times[k] - map.times[k - 1]);
        break;
      }
    }
  }
  return out;
}

LightConeFit fit_light_cone(const SpatiotemporalMap& qmap, double threshold, int max_distance) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw InvalidArgument("fit_light_cone: threshold must lie in (0,1)");
  LightConeFit fit;
  const int nt = static_cast<int>(qmap.times.size());
  for (int d = -max_distance; d <= max_distance; ++d) {
    if (d == 0) continue;
    const auto it = std::find(qmap.labels.begin(), qmap.labels.end(), d);
    if (it == qmap.labels.end()) continue;
    const int col = static_cast<int>(it - qmap.labels.begin());
    const double peak = qmap.values.col(col).maxCoeff();
    if (peak < 1e-3) continue;
    const double level = threshold * peak;
    for (int k = 1; k < nt; ++k) {
      const double q0 = qmap.values(k - 1, col), q1 = qmap.values(k, col);
      if (q1 >= level) {
        const double frac = q1 > q0 ? (level - q0) / (q1 - q0) : 1.0;
        fit.bonds.push_back(d);
        fit.arrival_times.push_back(qmap.times[k - 1] + std::clamp(frac, 0.0, 1.0) * (qmap.times[k] - qmap.times[k - 1]));
        break;
      }
    }
  }
  int farthest = 0;
  for (int d : fit.bonds) farthest = std::max(farthest, std::abs(d));
  if (farthest < 2) throw InsufficientSpread("fit_light_cone: the front never leaves +-1 site");

  const int n = static_cast<int>(fit.bonds.size());
  double st = 0, sd = 0, stt = 0, std_ = 0;
  for (int k = 0; k < n; ++k) {
    const double t = fit.arrival_times[k], d = std::abs(fit.bonds[k]);
    st += t;
    sd += d;
    stt += t * t;
    std_ += t * d;
  }
  const double denom = n * stt - st * st;
  if (!(std::abs(denom) > 0.0)) throw InsufficientSpread("fit_light_cone: arrival times are degenerate");
  fit.velocity = (n * std_ - st * sd) / denom;
  fit.intercept = (sd - fit.velocity * st) / n;
  double rss = 0.0;
  for (int k = 0; k < n; ++k) {
    const double r = std::abs(fit.bonds[k]) - (fit.velocity * fit.arrival_times[k] + fit.intercept);
    rss += r * r;
  }
  fit.residual = std::sqrt(rss / n);
  return fit;
}

BlochFit fit_bloch(const SpatiotemporalMap& qmap, int first_bond, int last_bond) {
  const int nt = static_cast<int>(qmap.times.size());
  if (nt < 4) throw NoOscillation("fit_bloch: need at least four time samples");
  BlochFit fit;
  std::vector<double> var(nt);
  for (int t = 0; t < nt; ++t) {
    double w = 0, m1 = 0, m2 = 0;
    for (int b = first_bond; b <= last_bond; ++b) {
      const double q = qmap.values(t, qmap.column(b));
      w += q;
      m1 += q * b;
      m2 += q * b * b;
    }
    if (!(w > 0.0)) throw NoOscillation("fit_bloch: no charge inside the bond window");
    const double mean = m1 / w;
    var[t] = std::max(0.0, m2 / w - mean * mean);
    fit.mean_position.push_back(mean);
    fit.spread.push_back(std::sqrt(2.0 * var[t]));
  }

  // Period: first revival of the charge on the release bond. Crossings use
  // two levels so that fast pair fluctuations cannot fake a return.
  int release = 0;
  qmap.values.row(0).maxCoeff(&release);
  const RealVector q0 = qmap.values.col(release);
  const double depth = q0[0] - q0.minCoeff();
  if (depth < 0.2 * q0[0]) throw NoOscillation("fit_bloch: the charge never leaves the release bond");
  const double low = q0[0] - 0.75 * depth, high = q0[0] - 0.25 * depth;
  int t = 1;
  while (t < nt && q0[t] > low) ++t;
  while (t < nt && q0[t] < high) ++t;
  if (t >= nt) throw NoOscillation("fit_bloch: no revival of the release bond inside the window");
  int peak = t;
  for (; t < nt && q0[t] >= low; ++t)
    if (q0[t] > q0[peak]) peak = t;
  double shift = 0.0;
  if (peak > 0 && peak + 1 < nt) {
    const double curvature = q0[peak - 1] - 2.0 * q0[peak] + q0[peak + 1];
    if (curvature < 0.0) shift = std::clamp(0.5 * (q0[peak - 1] - q0[peak + 1]) / curvature, -0.5, 0.5);
  }
  const double dt = qmap.times[1] - qmap.times[0];
  fit.period = qmap.times[peak] + shift * dt;
  fit.period_error = 0.5 * dt;

  // Amplitude: Var_t = a sin^2(pi t / T) + c at the measured period.
  const double omega = M_PI / fit.period;
  Eigen::MatrixXd X(nt, 2);
  Eigen::VectorXd Y(nt);
  for (int k = 0; k < nt; ++k) {
    const double s = std::sin(omega * qmap.times[k]);
    X(k, 0) = s * s;
    X(k, 1) = 1.0;
    Y[k] = var[k];
  }
  const Eigen::Matrix2d XtX = X.transpose() * X;
  const Eigen::Vector2d coef = XtX.ldlt().solve(X.transpose() * Y);
  if (!(coef[0] > 0.0)) throw NoOscillation("fit_bloch: the charge spread does not oscillate with the revival period");
  const double sigma2 = (X * coef - Y).squaredNorm() / std::max(1, nt - 2);
  const double a_error = std::sqrt(sigma2 * XtX.inverse()(0, 0));
  fit.amplitude = std::sqrt(2.0 * coef[0]);
  fit.amplitude_error = a_error / fit.amplitude;
  fit.background = coef[1];
  return fit;
}

}  // namespace stringsim
