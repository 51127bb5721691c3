#pragma once

// Exterior sound-soft Helmholtz scattering by a star-shaped obstacle.
//
// The scattered field is the combined potential
//   u^s(x) = int_{dD} { dPhi(x,y)/dnu(y) - i eta Phi(x,y) } phi(y) ds(y),
// and the Dirichlet trace gives (I/2 + D - i eta S) phi = -u^i.  The system is
// discretized with the trigonometric Nystrom rule: kernels are split into
// ln(4 sin^2((t - tau)/2)) * K1 + K2 and the log part is integrated with exact
// weights on 2n equidistant nodes.

#include <Eigen/Dense>
#include <boost/math/special_functions/bessel.hpp>

#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "randscat/error.hpp"
#include "randscat/geometry.hpp"
#include "randscat/gp_model.hpp"
#include "randscat/parallel.hpp"

namespace randscat {

using cplx = std::complex<double>;

namespace detail {

using bessel_policy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;

struct Bessel01 {
  double j0, j1, y0, y1;
};

inline Bessel01 bessel01(double x) {
  const bessel_policy pol;
  return {boost::math::cyl_bessel_j(0, x, pol), boost::math::cyl_bessel_j(1, x, pol),
          boost::math::cyl_neumann(0, x, pol), boost::math::cyl_neumann(1, x, pol)};
}

/// Weights of the periodic rule for int ln(4 sin^2((t - tau)/2)) f(tau) dtau on
/// N = 2n nodes, as a function of the index offset (t - tau = 2 pi d / N):
///   R(d) = -(2 pi/n) sum_{m=1}^{n-1} cos(m s)/m - (pi/n^2) cos(n s).
inline std::vector<double> log_weights(int n_nodes) {
  const int n = n_nodes / 2;
  std::vector<double> cos_table(static_cast<std::size_t>(n_nodes));
  for (int i = 0; i < n_nodes; ++i) cos_table[static_cast<std::size_t>(i)] = std::cos(kTwoPi * i / n_nodes);
  std::vector<double> w(static_cast<std::size_t>(n_nodes));
  for (int d = 0; d < n_nodes; ++d) {
    double s = 0.0;
    for (int m = 1; m < n; ++m) s += cos_table[static_cast<std::size_t>((static_cast<long long>(m) * d) % n_nodes)] / m;
    const double last = (d % 2 == 0) ? 1.0 : -1.0;  // cos(n * 2 pi d / 2n)
    w[static_cast<std::size_t>(d)] = -(kTwoPi / n) * s - (std::numbers::pi / (static_cast<double>(n) * n)) * last;
  }
  return w;
}

/// Log weights at an arbitrary parameter offset s = t - t_j.
inline double log_weight_at(int n_nodes, double s) {
  const int n = n_nodes / 2;
  double sum = 0.0;
  for (int m = 1; m < n; ++m) sum += std::cos(m * s) / m;
  return -(kTwoPi / n) * sum - (std::numbers::pi / (static_cast<double>(n) * n)) * std::cos(n * s);
}

struct KernelParts {
  cplx k1;  // coefficient of the log singularity
  cplx k2;  // remainder
};

/// Combined kernel (L - i eta M)(t, tau) split into log and smooth parts for
/// t != tau.  x_t: target point; source quantities at tau.
inline KernelParts combined_kernel(double k, double eta, const Eigen::Vector2d& x_t,
                                   const Eigen::Vector2d& x_tau, const Eigen::Vector2d& n_tau,
                                   double speed_tau, double log_term, const Bessel01& b) {
  const Eigen::Vector2d diff = x_t - x_tau;
  const double r = diff.norm();
  const double proj = n_tau.dot(diff) / r;  // n(tau).(x(t) - x(tau)) / |x(t) - x(tau)|
  const cplx i(0.0, 1.0);
  const cplx h0(b.j0, b.y0);
  const cplx h1(b.j1, b.y1);
  const cplx l = 0.5 * i * k * proj * h1;
  const double l1 = -k / kTwoPi * proj * b.j1;
  const cplx m = 0.5 * i * h0 * speed_tau;
  const double m1 = -b.j0 * speed_tau / kTwoPi;
  const cplx k1 = l1 - i * eta * m1;
  const cplx full = l - i * eta * m;
  return {k1, full - k1 * log_term};
}

}  // namespace detail

/// Plane wave e^{i k x.d}.
inline cplx incident_field(double k, const Eigen::Vector2d& d, const Eigen::Vector2d& x) {
  const double phase = k * x.dot(d);
  return {std::cos(phase), std::sin(phase)};
}

inline Eigen::Vector2d direction(double angle) { return {std::cos(angle), std::sin(angle)}; }

/// x_m = (cos 2 pi m / M, sin 2 pi m / M).
inline std::vector<double> observation_angles(int m) { return uniform_grid(m); }

struct BIESystem {
  double k = 0.0;
  double eta = 0.0;
  BoundaryDiscretization boundary;
  Eigen::MatrixXcd matrix;  // Nystrom matrix of I/2 + D - i eta S
  Eigen::PartialPivLU<Eigen::MatrixXcd> lu;
  double condition_estimate = 1.0;
};

inline constexpr double kSingularCondition = 1e14;

inline BIESystem assemble(const BoundaryDiscretization& bd, double k, double eta) {
  if (!(k > 0.0)) fail(ErrorKind::InvalidArgument, "wavenumber must be positive");
  const int nn = bd.n_nodes;
  if (nn < 16 || nn % 2 != 0)
    fail(ErrorKind::InvalidArgument, "Nystrom rule needs an even node count >= 16, got " + std::to_string(nn));
  const int n = nn / 2;
  const double w_smooth = std::numbers::pi / n;
  const auto w_log = detail::log_weights(nn);
  const cplx i(0.0, 1.0);

  std::vector<double> log_term(static_cast<std::size_t>(nn));
  for (int d = 1; d < nn; ++d) {
    const double s = std::sin(std::numbers::pi * d / nn);
    log_term[static_cast<std::size_t>(d)] = std::log(4.0 * s * s);
  }

  BIESystem sys;
  sys.k = k;
  sys.eta = eta;
  sys.boundary = bd;
  Eigen::MatrixXcd a(nn, nn);
  const Eigen::Matrix2Xd nvec = bd.normals.array().rowwise() * bd.jacobian.transpose().array();

  for (int r = 0; r < nn; ++r) {
    const double speed = bd.jacobian(r);
    const double l2 = nvec.col(r).dot(bd.derivative2.col(r)) / (kTwoPi * speed * speed);
    const cplx m2 = (0.5 * i - std::numbers::egamma / std::numbers::pi -
                     std::log(0.5 * k * speed) / std::numbers::pi) * speed;
    const cplx k1 = -i * eta * (-speed / kTwoPi);
    const cplx k2 = l2 - i * eta * m2;
    a(r, r) = 1.0 + w_log[0] * k1 + w_smooth * k2;
    for (int c = r + 1; c < nn; ++c) {
      const double dist = (bd.points.col(r) - bd.points.col(c)).norm();
      const auto b = detail::bessel01(k * dist);
      const int off = c - r;
      const double lg = log_term[static_cast<std::size_t>(off)];
      const auto rc = detail::combined_kernel(k, eta, bd.points.col(r), bd.points.col(c), nvec.col(c),
                                              bd.jacobian(c), lg, b);
      const auto cr = detail::combined_kernel(k, eta, bd.points.col(c), bd.points.col(r), nvec.col(r),
                                              bd.jacobian(r), lg, b);
      a(r, c) = w_log[static_cast<std::size_t>(nn - off)] * rc.k1 + w_smooth * rc.k2;
      a(c, r) = w_log[static_cast<std::size_t>(off)] * cr.k1 + w_smooth * cr.k2;
    }
  }
  sys.matrix = 0.5 * a;
  sys.lu.compute(sys.matrix);
  const double rc = sys.lu.rcond();
  sys.condition_estimate = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
  if (!(sys.condition_estimate <= kSingularCondition))
    fail(ErrorKind::SingularSystem, "condition estimate " + std::to_string(sys.condition_estimate) +
                                        " at k = " + std::to_string(k));
  return sys;
}

/// -u^i sampled at the boundary nodes.
inline Eigen::VectorXcd dirichlet_rhs(const BoundaryDiscretization& bd, double k, const Eigen::Vector2d& d) {
  Eigen::VectorXcd rhs(bd.n_nodes);
  for (int j = 0; j < bd.n_nodes; ++j) rhs(j) = -incident_field(k, d, bd.points.col(j));
  return rhs;
}

inline Eigen::VectorXcd solve_density(const BIESystem& sys, const Eigen::VectorXcd& rhs) {
  if (rhs.size() != sys.matrix.rows())
    fail(ErrorKind::InvalidArgument, "rhs length " + std::to_string(rhs.size()) + " != " +
                                         std::to_string(sys.matrix.rows()));
  return sys.lu.solve(rhs);
}

inline Eigen::MatrixXcd solve_density(const BIESystem& sys, const Eigen::MatrixXcd& rhs) {
  return sys.lu.solve(rhs);
}

/// u^inf(x) = e^{-i pi/4}/sqrt(8 pi k) int {k nu.x + eta} e^{-i k x.y} phi ds,
/// trapezoid rule in the boundary parameter.
inline Eigen::VectorXcd far_field_directions(const BoundaryDiscretization& bd, const Eigen::VectorXcd& phi,
                                             double k, double eta, const Eigen::Matrix2Xd& directions) {
  const cplx prefactor = std::polar(1.0 / std::sqrt(8.0 * std::numbers::pi * k), -std::numbers::pi / 4.0);
  const double w = kTwoPi / bd.n_nodes;
  Eigen::VectorXcd out(directions.cols());
  for (Eigen::Index m = 0; m < directions.cols(); ++m) {
    const Eigen::Vector2d xhat = directions.col(m);
    cplx sum = 0.0;
    for (int j = 0; j < bd.n_nodes; ++j) {
      const double weight = (k * bd.normals.col(j).dot(xhat) + eta) * bd.jacobian(j);
      const double phase = -k * xhat.dot(bd.points.col(j));
      sum += weight * cplx(std::cos(phase), std::sin(phase)) * phi(j);
    }
    out(m) = prefactor * w * sum;
  }
  return out;
}

inline Eigen::VectorXcd far_field(const BoundaryDiscretization& bd, const Eigen::VectorXcd& phi, double k,
                                  double eta, const std::vector<double>& obs_angles) {
  Eigen::Matrix2Xd dirs(2, static_cast<Eigen::Index>(obs_angles.size()));
  for (std::size_t m = 0; m < obs_angles.size(); ++m) dirs.col(static_cast<Eigen::Index>(m)) = direction(obs_angles[m]);
  return far_field_directions(bd, phi, k, eta, dirs);
}

struct ForwardConfig {
  int n_nodes = 128;          // N_f
  double coupling_ratio = 1;  // eta = coupling_ratio * k
};

/// F(p, k): far field of the obstacle bounded by radius p for plane-wave
/// incidence d, observed at the given angles.
inline Eigen::VectorXcd far_field_map(const RadiusParams& p, const Eigen::Vector2d& center, double k,
                                      const Eigen::Vector2d& d, const std::vector<double>& obs_angles,
                                      const ForwardConfig& cfg = {}) {
  const auto bd = discretize(p, center, cfg.n_nodes);
  const double eta = cfg.coupling_ratio * k;
  const auto sys = assemble(bd, k, eta);
  const auto phi = solve_density(sys, dirichlet_rhs(bd, k, d));
  return far_field(bd, phi, k, eta, obs_angles);
}

/// max_m |u^inf(x_m, d) - u^inf(-d, -x_m)|.
inline double reciprocity_residual(const BoundaryDiscretization& bd, double k, double eta,
                                   const Eigen::Vector2d& d, const std::vector<double>& obs_angles) {
  const auto sys = assemble(bd, k, eta);
  const auto phi_d = solve_density(sys, dirichlet_rhs(bd, k, d));
  const auto forward = far_field(bd, phi_d, k, eta, obs_angles);
  const auto m = static_cast<Eigen::Index>(obs_angles.size());
  Eigen::MatrixXcd rhs(bd.n_nodes, m);
  for (Eigen::Index c = 0; c < m; ++c)
    rhs.col(c) = dirichlet_rhs(bd, k, -direction(obs_angles[static_cast<std::size_t>(c)]));
  const Eigen::MatrixXcd phis = solve_density(sys, rhs);
  Eigen::Matrix2Xd minus_d(2, 1);
  minus_d.col(0) = -d;
  double worst = 0.0;
  for (Eigen::Index c = 0; c < m; ++c) {
    const Eigen::VectorXcd back = far_field_directions(bd, phis.col(c), k, eta, minus_d);
    worst = std::max(worst, std::abs(forward(c) - back(0)));
  }
  return worst;
}

/// Boundary-condition check away from the nodes: the density is
/// trigonometrically interpolated, the boundary trace of the combined
/// potential is evaluated with the log-quadrature weights at each check point,
/// and compared against -u^i.  Returns max |u^s + u^i| over the check points.
inline double boundary_condition_residual(const RadiusParams& p, const BIESystem& sys, const Eigen::VectorXcd& phi,
                                          const Eigen::Vector2d& d, const std::vector<double>& check_params) {
  const auto& bd = sys.boundary;
  const int nn = bd.n_nodes;
  const int n = nn / 2;
  const double k = sys.k;
  const double eta = sys.eta;
  const Eigen::Matrix2Xd nvec = bd.normals.array().rowwise() * bd.jacobian.transpose().array();
  double worst = 0.0;
  for (double t : check_params) {
    const RadiusJet jet = radius_jet(p, t);
    const Eigen::Vector2d x_t = bd.center + jet.r * direction(t);
    // trigonometric interpolation of the nodal density
    cplx phi_t = 0.0;
    for (int j = 0; j < nn; ++j) {
      const double s = t - bd.theta[static_cast<std::size_t>(j)];
      double kern = 1.0 + std::cos(n * s);
      for (int m = 1; m < n; ++m) kern += 2.0 * std::cos(m * s);
      phi_t += kern / nn * phi(j);
    }
    cplx integral = 0.0;
    for (int j = 0; j < nn; ++j) {
      const double s = t - bd.theta[static_cast<std::size_t>(j)];
      const double sn = std::sin(0.5 * s);
      const double lg = std::log(4.0 * sn * sn);
      const double dist = (x_t - bd.points.col(j)).norm();
      const auto b = detail::bessel01(k * dist);
      const auto parts = detail::combined_kernel(k, eta, x_t, bd.points.col(j), nvec.col(j), bd.jacobian(j), lg, b);
      integral += (detail::log_weight_at(nn, s) * parts.k1 + (std::numbers::pi / n) * parts.k2) * phi(j);
    }
    const cplx us = 0.5 * phi_t + 0.5 * integral;
    worst = std::max(worst, std::abs(us + incident_field(k, d, x_t)));
  }
  return worst;
}

/// u + delta * (|u| / |xi|) * xi with xi complex Gaussian (i.i.d. real and
/// imaginary parts); exact relative noise level delta.
inline Eigen::VectorXcd add_relative_noise(const Eigen::VectorXcd& u, double delta, std::uint64_t seed) {
  if (delta == 0.0) return u;
  std::mt19937_64 rng(mix_seed(seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXcd xi(u.size());
  for (Eigen::Index m = 0; m < u.size(); ++m) {
    const double re = normal(rng);
    const double im = normal(rng);
    xi(m) = cplx(re, im);
  }
  return u + (delta * u.norm() / xi.norm()) * xi;
}

struct FarFieldDataset {
  std::vector<double> obs_angles;
  std::vector<double> wavenumbers;
  Eigen::Vector2d incident_dir{-1.0, 0.0};
  double noise_level = 0.0;
  std::uint64_t noise_seed = 0;
  std::vector<int> realization_ids;
  std::vector<std::uint64_t> sample_seeds;
  // [s][j] -> far field over observation angles
  std::vector<std::vector<Eigen::VectorXcd>> clean;
  std::vector<std::vector<Eigen::VectorXcd>> noisy;

  std::size_t n_samples() const { return clean.size(); }
};

inline void validate_dataset_axes(const std::vector<double>& wavenumbers, const std::vector<double>& obs_angles,
                                  const Eigen::Vector2d& d) {
  if (obs_angles.empty()) fail(ErrorKind::InvalidArgument, "need at least one observation direction");
  if (wavenumbers.empty()) fail(ErrorKind::InvalidArgument, "need at least one wavenumber");
  for (std::size_t j = 0; j < wavenumbers.size(); ++j) {
    if (!(wavenumbers[j] > 0.0)) fail(ErrorKind::InvalidArgument, "wavenumbers must be positive");
    if (j > 0 && !(wavenumbers[j] > wavenumbers[j - 1]))
      fail(ErrorKind::InvalidArgument, "wavenumbers must be strictly increasing");
  }
  if (std::abs(d.norm() - 1.0) > 1e-12) fail(ErrorKind::InvalidArgument, "incident direction must be a unit vector");
}

/// Clean and noisy far fields of every sample at every wavenumber. Noise for
/// (s, j) is drawn from its own stream so results do not depend on `workers`.
inline FarFieldDataset generate_dataset(const std::vector<BoundarySample>& samples,
                                        const std::vector<double>& wavenumbers,
                                        const std::vector<double>& obs_angles, const Eigen::Vector2d& d,
                                        double delta, std::uint64_t seed, const ForwardConfig& cfg = {},
                                        int workers = 1) {
  validate_dataset_axes(wavenumbers, obs_angles, d);
  if (!(delta >= 0.0)) fail(ErrorKind::InvalidArgument, "noise level must be nonnegative");
  FarFieldDataset ds;
  ds.obs_angles = obs_angles;
  ds.wavenumbers = wavenumbers;
  ds.incident_dir = d;
  ds.noise_level = delta;
  ds.noise_seed = seed;
  const std::size_t ns = samples.size();
  const std::size_t nk = wavenumbers.size();
  ds.clean.assign(ns, std::vector<Eigen::VectorXcd>(nk));
  ds.noisy.assign(ns, std::vector<Eigen::VectorXcd>(nk));
  for (const auto& s : samples) {
    ds.realization_ids.push_back(s.realization_id);
    ds.sample_seeds.push_back(s.seed);
  }
  parallel_for(ns * nk, workers, [&](std::size_t idx) {
    const std::size_t s = idx / nk;
    const std::size_t j = idx % nk;
    try {
      ds.clean[s][j] = far_field_map(samples[s].params, samples[s].center, wavenumbers[j], d, obs_angles, cfg);
    } catch (const Error& e) {
      throw Error(e.kind(), e.message() + " (sample " + std::to_string(samples[s].realization_id) +
                                ", k = " + std::to_string(wavenumbers[j]) + ")");
    }
    ds.noisy[s][j] = add_relative_noise(
        ds.clean[s][j], delta, derive_seed(seed, static_cast<std::uint64_t>(samples[s].realization_id), j + 1));
  });
  return ds;
}

}  // namespace randscat
