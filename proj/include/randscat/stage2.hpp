#pragma once

// Fluctuation statistics from reconstructed radii: empirical covariance on the
// angular grid, quadrature-weighted spectrum, cos/sin pair grouping and a
// log-linear fit log(lambda_j) = A - B j^2 giving (sigma, ell).

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "randscat/error.hpp"
#include "randscat/geometry.hpp"

namespace randscat {

/// Column s is radii[s] - mean (pointwise sample mean when `mean` is empty).
inline Eigen::MatrixXd fluctuation_matrix(const std::vector<std::vector<double>>& radii,
                                          std::vector<double> mean = {}) {
  if (radii.size() < 2) fail(ErrorKind::TooFewSamples, "need at least 2 records, got " + std::to_string(radii.size()));
  const std::size_t n = radii[0].size();
  for (const auto& r : radii)
    if (r.size() != n) fail(ErrorKind::InvalidArgument, "records sampled on different grids");
  if (mean.empty()) {
    mean.assign(n, 0.0);
    for (const auto& r : radii)
      for (std::size_t i = 0; i < n; ++i) mean[i] += r[i];
    for (auto& v : mean) v /= static_cast<double>(radii.size());
  }
  if (mean.size() != n) fail(ErrorKind::InvalidArgument, "mean radius has the wrong length");
  Eigen::MatrixXd out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(radii.size()));
  for (std::size_t s = 0; s < radii.size(); ++s)
    for (std::size_t i = 0; i < n; ++i)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = radii[s][i] - mean[i];
  return out;
}

/// R R^T / (N_s - 1), exactly symmetric.
inline Eigen::MatrixXd empirical_covariance(const Eigen::MatrixXd& fluct) {
  if (fluct.cols() < 2) fail(ErrorKind::TooFewSamples, "need at least 2 samples");
  Eigen::MatrixXd c = fluct * fluct.transpose() / static_cast<double>(fluct.cols() - 1);
  // symmetrize bitwise: the product may differ in the last ulp across the diagonal
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = i + 1; j < c.cols(); ++j) c(j, i) = c(i, j);
  return c;
}

struct Spectrum {
  std::vector<double> mu;      // matrix eigenvalues, descending
  std::vector<double> lambda;  // w * mu
  double weight = 0.0;         // 2 pi / N_theta
};

inline constexpr double kNegativeEigenTolerance = 1e-12;

/// Symmetric eigendecomposition, descending. Negative eigenvalues beyond
/// roundoff (-1e-12 relative to max(1, |mu|_max)) are an error; smaller ones
/// are floored to zero.
inline Spectrum spectrum(const Eigen::MatrixXd& c, int n_theta) {
  if (c.rows() != c.cols()) fail(ErrorKind::InvalidArgument, "covariance must be square");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(c, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) fail(ErrorKind::InvalidArgument, "eigensolver failed");
  Spectrum out;
  out.weight = kTwoPi / n_theta;
  const Eigen::VectorXd ev = eig.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  for (Eigen::Index i = ev.size() - 1; i >= 0; --i) {
    double v = ev(i);
    if (v < -kNegativeEigenTolerance * scale)
      fail(ErrorKind::NonPositiveEigenvalue, "covariance eigenvalue " + std::to_string(v) + " below roundoff");
    if (v < 0.0) v = 0.0;
    out.mu.push_back(v);
    out.lambda.push_back(out.weight * v);
  }
  return out;
}

/// g_0 = l_0, g_j = (l_{2j-1} + l_{2j}) / 2, for j = 0..n_groups-1.
inline std::vector<double> group_pairs(const std::vector<double>& lambda_sorted, int n_groups) {
  if (n_groups < 1 || lambda_sorted.size() < 2 * static_cast<std::size_t>(n_groups) - 1)
    fail(ErrorKind::InsufficientModes, std::to_string(lambda_sorted.size()) + " eigenvalues cannot form " +
                                           std::to_string(n_groups) + " groups");
  std::vector<double> g(static_cast<std::size_t>(n_groups));
  g[0] = lambda_sorted[0];
  for (std::size_t j = 1; j < g.size(); ++j) g[j] = 0.5 * (lambda_sorted[2 * j - 1] + lambda_sorted[2 * j]);
  return g;
}

/// Ungrouped counterpart: the leading n values as they come.
inline std::vector<double> leading(const std::vector<double>& lambda_sorted, int n) {
  if (lambda_sorted.size() < static_cast<std::size_t>(n))
    fail(ErrorKind::InsufficientModes, "not enough eigenvalues");
  return {lambda_sorted.begin(), lambda_sorted.begin() + n};
}

struct LogLinearFit {
  double a = 0.0;  // intercept
  double b = 0.0;  // decay rate in j^2
  std::vector<double> residuals;
};

/// Least squares for log(lambda_j) = A - B j^2 over j = 0..n_fit, via the 2x2
/// normal equations.
inline LogLinearFit log_linear_fit(const std::vector<double>& grouped, int n_fit) {
  if (n_fit < 1 || grouped.size() < static_cast<std::size_t>(n_fit) + 1)
    fail(ErrorKind::InsufficientModes, "fit over j = 0.." + std::to_string(n_fit) + " needs " +
                                           std::to_string(n_fit + 1) + " grouped eigenvalues");
  const int n = n_fit + 1;
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
  for (int j = 0; j < n; ++j) {
    const double l = grouped[static_cast<std::size_t>(j)];
    if (!(l > 0.0))
      fail(ErrorKind::NonPositiveEigenvalue, "lambda_" + std::to_string(j) + " = " + std::to_string(l));
    x[static_cast<std::size_t>(j)] = static_cast<double>(j) * j;
    y[static_cast<std::size_t>(j)] = std::log(l);
    sx += x[static_cast<std::size_t>(j)];
    sy += y[static_cast<std::size_t>(j)];
    sxx += x[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
    sxy += x[static_cast<std::size_t>(j)] * y[static_cast<std::size_t>(j)];
  }
  const double det = n * sxx - sx * sx;
  if (!(std::abs(det) > 0.0)) fail(ErrorKind::DegenerateDesign, "all abscissae coincide");
  // y = A + s x with slope s = -B
  const double slope = (n * sxy - sx * sy) / det;
  LogLinearFit fit;
  fit.a = (sy - slope * sx) / n;
  fit.b = -slope;
  for (int j = 0; j < n; ++j)
    fit.residuals.push_back(y[static_cast<std::size_t>(j)] - (fit.a - fit.b * x[static_cast<std::size_t>(j)]));
  return fit;
}

struct Hyperparams {
  double sigma = 0.0;
  double ell = 0.0;
};

/// ell = sqrt(max(4B, 0)), sigma = sqrt(e^A / (sqrt(pi) ell)).
inline Hyperparams hyperparams_from_fit(double a, double b) {
  const double ell = std::sqrt(std::max(4.0 * b, 0.0));
  if (!(ell > 0.0)) fail(ErrorKind::DegenerateSlope, "fitted decay rate B = " + std::to_string(b) + " is not positive");
  return {std::sqrt(std::exp(a) / (std::sqrt(std::numbers::pi) * ell)), ell};
}

struct StatsEstimate {
  std::vector<double> mu_rec;
  std::vector<double> lambda_rec;  // descending, w * mu_rec
  std::vector<double> grouped;     // values used by the fit, indexed by frequency
  double weight = 0.0;
  double a_fit = 0.0;
  double b_fit = 0.0;
  double sigma_est = 0.0;
  double ell_est = 0.0;
  int n_kl_fit = 4;
  bool grouped_fit = true;
  int n_samples_used = 0;
};

/// Full second stage on radii sampled on a uniform n_theta grid.
inline StatsEstimate estimate_statistics(const std::vector<std::vector<double>>& radii, int n_kl_fit = 4,
                                         bool grouped = true) {
  const auto fl = fluctuation_matrix(radii);
  const auto c = empirical_covariance(fl);
  const auto sp = spectrum(c, static_cast<int>(fl.rows()));
  StatsEstimate est;
  est.mu_rec = sp.mu;
  est.lambda_rec = sp.lambda;
  est.weight = sp.weight;
  est.n_kl_fit = n_kl_fit;
  est.grouped_fit = grouped;
  est.n_samples_used = static_cast<int>(radii.size());
  est.grouped = grouped ? group_pairs(sp.lambda, n_kl_fit + 1) : leading(sp.lambda, n_kl_fit + 1);
  const auto fit = log_linear_fit(est.grouped, n_kl_fit);
  est.a_fit = fit.a;
  est.b_fit = fit.b;
  const auto hp = hyperparams_from_fit(fit.a, fit.b);
  est.sigma_est = hp.sigma;
  est.ell_est = hp.ell;
  return est;
}

}  // namespace randscat
