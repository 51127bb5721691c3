#pragma once

// Gaussian kernel on the circle measured in geodesic (shortest-arc) distance,
// its cosine series, the projection that makes it positive semi-definite, and
// the spectrum of the induced covariance operator on L2[0, 2pi).
//
// The spectral routines are templated on the scalar type.  The raw geodesic
// kernel violates positive semi-definiteness only at the level of its kink at
// t = pi, which for short correlation lengths sits far below double precision
// roundoff; evaluating with boost::multiprecision resolves it.

#include <boost/math/constants/constants.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "randscat/error.hpp"
#include "randscat/geometry.hpp"

namespace randscat {

template <class Real>
Real two_pi() {
  return boost::math::constants::two_pi<Real>();
}

/// min{|a - b| mod 2pi, 2pi - (|a - b| mod 2pi)}, in [0, pi].
template <class Real>
Real geodesic_distance(Real a, Real b) {
  using std::abs;
  using std::fmod;
  using std::min;
  const Real period = two_pi<Real>();
  Real d = fmod(abs(a - b), period);
  return min(d, Real(period - d));
}

/// sigma^2 exp(-d(t, 0)^2 / ell^2).
template <class Real>
Real cov_geod(Real t, Real sigma, Real ell) {
  using std::exp;
  const Real d = geodesic_distance(t, Real(0));
  return sigma * sigma * exp(-(d * d) / (ell * ell));
}

/// Trapezoid cosine coefficients of an even 2pi-periodic kernel:
///   a_0 = (1/2pi) int C,  a_j = (1/pi) int C cos(j t).
/// `kernel` is called with Real arguments on the grid t_m = 2 pi m / n_quad.
template <class Real, class Kernel>
std::vector<Real> cosine_coefficients(Kernel&& kernel, int n_coeff, int n_quad) {
  using std::cos;
  if (n_coeff < 1) fail(ErrorKind::InvalidArgument, "n_coeff must be positive");
  if (n_quad < 4 * n_coeff)
    fail(ErrorKind::QuadratureTooCoarse, "n_quad = " + std::to_string(n_quad) +
                                             " < 4 * n_coeff = " + std::to_string(4 * n_coeff));
  const Real period = two_pi<Real>();
  std::vector<Real> values(static_cast<std::size_t>(n_quad));
  std::vector<Real> cos_table(static_cast<std::size_t>(n_quad));
  for (int m = 0; m < n_quad; ++m) {
    const Real t = period * Real(m) / Real(n_quad);
    values[static_cast<std::size_t>(m)] = kernel(t);
    cos_table[static_cast<std::size_t>(m)] = cos(t);
  }
  std::vector<Real> a(static_cast<std::size_t>(n_coeff), Real(0));
  for (int j = 0; j < n_coeff; ++j) {
    Real sum(0);
    long long idx = 0;
    for (int m = 0; m < n_quad; ++m) {
      sum += values[static_cast<std::size_t>(m)] * cos_table[static_cast<std::size_t>(idx)];
      idx += j;
      if (idx >= n_quad) idx -= n_quad;
    }
    a[static_cast<std::size_t>(j)] = (j == 0 ? Real(1) : Real(2)) * sum / Real(n_quad);
  }
  return a;
}

/// max{a_j, 0} elementwise.
template <class Real>
std::vector<Real> project_nonneg(std::span<const Real> a) {
  std::vector<Real> out(a.begin(), a.end());
  for (auto& v : out)
    if (v < Real(0)) v = Real(0);
  return out;
}

inline std::vector<double> project_nonneg(const std::vector<double>& a) {
  return project_nonneg<double>(std::span<const double>(a));
}

/// lambda_0 = 2 pi a_0, lambda_j = pi a_j (j >= 1, multiplicity two).
inline std::vector<double> operator_eigenvalues(std::span<const double> a_corr) {
  std::vector<double> lambda(a_corr.size());
  for (std::size_t j = 0; j < a_corr.size(); ++j) {
    if (a_corr[j] < 0.0)
      fail(ErrorKind::NegativeCoefficient,
           "coefficient " + std::to_string(j) + " = " + std::to_string(a_corr[j]));
    lambda[j] = (j == 0 ? kTwoPi : std::numbers::pi) * a_corr[j];
  }
  return lambda;
}

/// Closed-form spectrum of the Gaussian kernel on the real line, used as the
/// regression model: sqrt(pi) sigma^2 ell exp(-ell^2 j^2 / 4).
inline double model_eigenvalue(double sigma, double ell, double j) {
  return std::sqrt(std::numbers::pi) * sigma * sigma * ell * std::exp(-ell * ell * j * j / 4.0);
}

struct CovarianceModel {
  double sigma = 0.0;
  double ell = 1.0;
  int n_coeff = 50;
  int n_quad = 400;
  std::vector<double> a_raw;
  std::vector<double> a_corr;
  std::vector<double> lambda;

  /// Raw geodesic coefficients -> projection -> operator spectrum. The
  /// trapezoid sums run in 50-digit arithmetic so the sign of the tiny high-j
  /// coefficients is resolved; very large grids fall back to double.
  static CovarianceModel build(double sigma, double ell, int n_coeff = 50, int n_quad = 400) {
    if (!(sigma >= 0.0) || !(ell > 0.0))
      fail(ErrorKind::InvalidArgument, "need sigma >= 0 and ell > 0");
    CovarianceModel m;
    m.sigma = sigma;
    m.ell = ell;
    m.n_coeff = n_coeff;
    m.n_quad = n_quad;
    if (static_cast<double>(n_coeff) * n_quad <= 4e6) {
      using Wide = boost::multiprecision::cpp_bin_float_50;
      const Wide s(sigma), l(ell);
      const auto wide = cosine_coefficients<Wide>([&](const Wide& t) { return cov_geod(t, s, l); }, n_coeff, n_quad);
      for (const auto& v : wide) m.a_raw.push_back(static_cast<double>(v));
    } else {
      m.a_raw = cosine_coefficients<double>(
          [sigma, ell](double t) { return cov_geod(t, sigma, ell); }, n_coeff, n_quad);
    }
    m.a_corr = project_nonneg(m.a_raw);
    m.lambda = operator_eigenvalues(m.a_corr);
    return m;
  }

  /// Corrected kernel a~_0 + sum_j a~_j cos(j t).
  double corrected(double t) const {
    double v = a_corr.empty() ? 0.0 : a_corr[0];
    for (std::size_t j = 1; j < a_corr.size(); ++j) v += a_corr[j] * std::cos(static_cast<double>(j) * t);
    return v;
  }
};

inline double corrected_kernel_eval(const CovarianceModel& model, double t) { return model.corrected(t); }

template <class Real>
struct CirculantSpectrum {
  int n = 0;
  std::vector<Real> mu;  // real parts, indexed by mode j = 0..n-1
  Real max_imag = Real(0);
  Real min_mu = Real(0);
  int argmin = 0;
};

/// Eigenvalues of the circulant Gram matrix K_mn = C(theta_m - theta_n) on n
/// uniform nodes: mu_j = sum_m C(theta_m) exp(-i j theta_m).
template <class Real, class Kernel>
CirculantSpectrum<Real> circulant_spectrum(Kernel&& kernel, int n) {
  using std::abs;
  using std::cos;
  using std::sin;
  if (n < 1) fail(ErrorKind::InvalidArgument, "circulant size must be positive");
  const Real period = two_pi<Real>();
  std::vector<Real> values(static_cast<std::size_t>(n));
  std::vector<Real> cos_table(static_cast<std::size_t>(n));
  std::vector<Real> sin_table(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) {
    const Real t = period * Real(m) / Real(n);
    values[static_cast<std::size_t>(m)] = kernel(t);
    cos_table[static_cast<std::size_t>(m)] = cos(t);
    sin_table[static_cast<std::size_t>(m)] = sin(t);
  }
  CirculantSpectrum<Real> out;
  out.n = n;
  out.mu.assign(static_cast<std::size_t>(n), Real(0));
  for (int j = 0; j < n; ++j) {
    Real re(0);
    Real im(0);
    long long idx = 0;
    for (int m = 0; m < n; ++m) {
      re += values[static_cast<std::size_t>(m)] * cos_table[static_cast<std::size_t>(idx)];
      im -= values[static_cast<std::size_t>(m)] * sin_table[static_cast<std::size_t>(idx)];
      idx += j;
      if (idx >= n) idx -= n;
    }
    out.mu[static_cast<std::size_t>(j)] = re;
    if (abs(im) > out.max_imag) out.max_imag = abs(im);
  }
  const auto it = std::min_element(out.mu.begin(), out.mu.end());
  out.min_mu = *it;
  out.argmin = static_cast<int>(it - out.mu.begin());
  return out;
}

}  // namespace randscat
