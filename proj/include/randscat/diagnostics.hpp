#pragma once

// Numerical checks of the structural statements behind the method: PSD of the
// corrected kernel on every circulant grid, convergence of scaled circulant
// eigenvalues to the operator spectrum, the Gaussian tail bound between the
// operator spectrum and its closed form, Weyl stability of covariance
// eigenvalues, and the sensitivity of the log-linear fit.

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "randscat/covariance.hpp"
#include "randscat/gp_model.hpp"
#include "randscat/stage2.hpp"

namespace randscat {

enum class CheckStatus { Pass, Fail, NotApplicable };

inline const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::Pass: return "PASS";
    case CheckStatus::Fail: return "FAIL";
    case CheckStatus::NotApplicable: return "N/A";
  }
  return "?";
}

struct CheckReport {
  std::string name;
  CheckStatus status = CheckStatus::Fail;
  double measured = 0.0;
  double bound = 0.0;
  double margin = 0.0;  // bound - measured
  std::vector<std::pair<std::string, double>> params;
  std::string note;

  bool pass() const { return status == CheckStatus::Pass; }
};

namespace detail {

inline CheckReport finish(CheckReport r, bool ok) {
  r.margin = r.bound - r.measured;
  r.status = ok ? CheckStatus::Pass : CheckStatus::Fail;
  return r;
}

inline double symmetric_norm2(const Eigen::MatrixXd& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

inline Eigen::VectorXd sorted_eigenvalues(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
  return eig.eigenvalues();  // ascending
}

inline Eigen::MatrixXd random_symmetric(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = normal(rng);
  return a;
}

}  // namespace detail

inline const std::vector<int>& default_psd_grids() {
  static const std::vector<int> grids{16, 64, 256, 400, 1024};
  return grids;
}

/// Worst negativity max(0, -min mu) of the corrected kernel over the grids.
inline CheckReport check_psd_corrected(const CovarianceModel& model, const std::vector<int>& grids) {
  CheckReport r;
  r.name = "psd_corrected";
  r.bound = 1e-10;
  double worst = -std::numeric_limits<double>::infinity();
  for (int n : grids) {
    const auto cs = circulant_spectrum<double>([&](double t) { return model.corrected(t); }, n);
    worst = std::max(worst, -cs.min_mu);
  }
  r.measured = std::max(worst, 0.0);
  r.params = {{"sigma", model.sigma}, {"ell", model.ell}, {"min_mu", -worst}};
  return detail::finish(r, r.measured <= r.bound);
}

/// Scans grids in increasing order for a negative circulant eigenvalue of the
/// raw geodesic kernel, in 50-digit arithmetic. measured = min mu at the
/// witness (or over all grids when none is found); passes iff negative.
inline CheckReport check_psd_raw_witness(double sigma, double ell, std::vector<int> grids) {
  using Wide = boost::multiprecision::cpp_bin_float_50;
  std::sort(grids.begin(), grids.end());
  CheckReport r;
  r.name = "psd_raw_witness";
  r.bound = 0.0;
  const Wide s(sigma), l(ell);
  double best = std::numeric_limits<double>::infinity();
  int witness = 0;
  int mode = -1;
  for (int n : grids) {
    const auto cs = circulant_spectrum<Wide>([&](const Wide& t) { return cov_geod(t, s, l); }, n);
    if (cs.min_mu < 0) {
      best = static_cast<double>(cs.min_mu);
      witness = n;
      mode = cs.argmin;
      break;
    }
    best = std::min(best, static_cast<double>(cs.min_mu));
  }
  r.measured = best;
  r.params = {{"sigma", sigma}, {"ell", ell}, {"witness_n_theta", witness}, {"witness_mode", mode}};
  r.note = witness > 0 ? "negative eigenvalue of the raw kernel found" : "raw kernel PSD on every tested grid";
  r.margin = -best;
  r.status = witness > 0 ? CheckStatus::Pass : CheckStatus::Fail;
  return r;
}

/// max_{j <= j_max} |(2pi/N) mu_j - lambda_j| / lambda_j with mu from the raw
/// kernel sampled on N nodes and lambda from the model.
inline CheckReport check_spectrum_scaling(const CovarianceModel& model, int n_theta, int j_max, double tol = 1e-6) {
  CheckReport r;
  r.name = "spectrum_scaling";
  r.bound = tol;
  if (j_max >= static_cast<int>(model.lambda.size()) || 2 * j_max >= n_theta)
    fail(ErrorKind::InvalidArgument, "j_max exceeds the available modes");
  const auto cs = circulant_spectrum<double>(
      [&](double t) { return cov_geod(t, model.sigma, model.ell); }, n_theta);
  const double w = kTwoPi / n_theta;
  double worst = 0.0;
  for (int j = 0; j <= j_max; ++j) {
    const double lam = model.lambda[static_cast<std::size_t>(j)];
    const double rel = std::abs(w * cs.mu[static_cast<std::size_t>(j)] - lam) / lam;
    worst = std::max(worst, rel);
  }
  r.measured = worst;
  r.params = {{"sigma", model.sigma}, {"ell", model.ell}, {"n_theta", n_theta}, {"j_max", j_max}};
  return detail::finish(r, worst <= tol);
}

/// Corrected kernel PSD on all grids, a raw-kernel witness, and convergence of
/// the scaled spectrum at the largest grid.
inline CheckReport check_psd_equivalence(double sigma, double ell,
                                         const std::vector<int>& grids = default_psd_grids()) {
  const auto model = CovarianceModel::build(sigma, ell);
  auto corrected = check_psd_corrected(model, grids);
  const auto raw = check_psd_raw_witness(sigma, ell, grids);
  const auto scaling = check_spectrum_scaling(model, *std::max_element(grids.begin(), grids.end()), 10);
  corrected.name = "psd_equivalence";
  corrected.params.emplace_back("raw_witness_n_theta", raw.params[2].second);
  corrected.params.emplace_back("raw_min_mu", raw.measured);
  corrected.params.emplace_back("scaling_rel_error", scaling.measured);
  const bool ok = corrected.pass() && raw.pass() && scaling.pass();
  if (!raw.pass()) corrected.note = raw.note;
  if (!scaling.pass()) corrected.note += (corrected.note.empty() ? "" : "; ") + std::string("scaled spectrum off");
  return detail::finish(corrected, ok);
}

/// 2 sigma^2 int_0^pi exp(-t^2/ell^2) cos(j t) dt, the exact operator
/// eigenvalue of the geodesic kernel, in 50-digit arithmetic.
inline boost::multiprecision::cpp_bin_float_50 exact_operator_eigenvalue(double sigma, double ell, int j) {
  using Wide = boost::multiprecision::cpp_bin_float_50;
  const Wide l(ell), s(sigma);
  auto f = [&](const Wide& t) { return exp(-(t * t) / (l * l)) * cos(Wide(j) * t); };
  const Wide integral = boost::math::quadrature::gauss_kronrod<Wide, 61>::integrate(
      f, Wide(0), boost::math::constants::pi<Wide>(), 15, Wide(1e-40));
  return 2 * s * s * integral;
}

/// max_{j <= j_max} |lambda_j - lambda_j^mod| against the tail bound
/// safety * sigma^2 ell^2 exp(-pi^2/ell^2) / pi.
inline CheckReport check_asymptotic_relation(double sigma, double ell, int j_max = 10, double safety = 2.0) {
  using Wide = boost::multiprecision::cpp_bin_float_50;
  CheckReport r;
  r.name = "asymptotic_relation";
  r.params = {{"sigma", sigma}, {"ell", ell}, {"j_max", j_max}};
  if (!(ell > 0.0) || ell > 1.5) {
    r.status = CheckStatus::NotApplicable;
    r.note = "requires 0 < ell <= 1.5";
    return r;
  }
  const Wide pi = boost::math::constants::pi<Wide>();
  const Wide s(sigma), l(ell);
  Wide worst(0);
  for (int j = 0; j <= j_max; ++j) {
    const Wide model = sqrt(pi) * s * s * l * exp(-(l * l) * Wide(j) * Wide(j) / 4);
    const Wide gap = abs(exact_operator_eigenvalue(sigma, ell, j) - model);
    if (gap > worst) worst = gap;
  }
  const Wide bound = Wide(safety) * s * s * l * l * exp(-(pi * pi) / (l * l)) / pi;
  r.measured = static_cast<double>(worst);
  r.bound = static_cast<double>(bound);
  r.margin = static_cast<double>(bound - worst);
  r.status = worst <= bound ? CheckStatus::Pass : CheckStatus::Fail;
  return r;
}

/// max_j |mu_j(A + E) - mu_j(A)| - ||E||_2 for symmetric A, E.
inline double weyl_excess(const Eigen::MatrixXd& a, const Eigen::MatrixXd& e) {
  const Eigen::VectorXd m0 = detail::sorted_eigenvalues(a);
  const Eigen::VectorXd m1 = detail::sorted_eigenvalues(a + e);
  return (m1 - m0).cwiseAbs().maxCoeff() - detail::symmetric_norm2(e);
}

inline CheckReport check_weyl(int dim = 50, int trials = 100, std::uint64_t seed = 1) {
  if (dim < 2 || trials < 1) fail(ErrorKind::InvalidArgument, "need dim >= 2 and trials >= 1");
  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_real_distribution<double> log_scale(-6.0, 1.0);
  CheckReport r;
  r.name = "weyl";
  r.bound = 1e-10;
  double worst = -std::numeric_limits<double>::infinity();
  for (int t = 0; t < trials; ++t) {
    const Eigen::MatrixXd a = detail::random_symmetric(dim, rng);
    const Eigen::MatrixXd e = std::pow(10.0, log_scale(rng)) * detail::random_symmetric(dim, rng);
    worst = std::max(worst, weyl_excess(a, e));
  }
  r.measured = worst;
  r.params = {{"dim", dim}, {"trials", trials}, {"seed", static_cast<double>(seed)}};
  return detail::finish(r, worst <= r.bound);
}

/// Columns of x_true and x_rec are paired samples on a common grid. Checks
///   ||S_rec - S||_2 <= N/(N-1) (2 sqrt(M_x) eps + eps^2)
/// and the same bound per eigenvalue, with S = X X^T/(N-1),
/// M_x = mean ||x_s||^2 and eps^2 = mean ||x_rec_s - x_s||^2.
inline CheckReport check_covariance_perturbation(const Eigen::MatrixXd& x_true, const Eigen::MatrixXd& x_rec) {
  if (x_true.rows() != x_rec.rows() || x_true.cols() != x_rec.cols())
    fail(ErrorKind::InvalidArgument, "sample sets are not paired");
  const Eigen::Index n = x_true.cols();
  if (n < 2) fail(ErrorKind::TooFewSamples, "need at least 2 paired samples");
  const double nd = static_cast<double>(n);
  const Eigen::MatrixXd s_true = empirical_covariance(x_true);
  const Eigen::MatrixXd s_rec = empirical_covariance(x_rec);
  const double gap = detail::symmetric_norm2(s_rec - s_true);
  const double eig_gap =
      (detail::sorted_eigenvalues(s_rec) - detail::sorted_eigenvalues(s_true)).cwiseAbs().maxCoeff();
  const double m_x = x_true.colwise().squaredNorm().sum() / nd;
  const double eps = std::sqrt((x_rec - x_true).colwise().squaredNorm().sum() / nd);
  CheckReport r;
  r.name = "covariance_perturbation";
  r.bound = nd / (nd - 1.0) * (2.0 * std::sqrt(m_x) * eps + eps * eps);
  r.measured = std::max(gap, eig_gap);
  r.params = {{"n_samples", nd},    {"n_grid", static_cast<double>(x_true.rows())},
              {"M_x", m_x},         {"eps", eps},
              {"norm_gap", gap},    {"eigenvalue_gap", eig_gap}};
  // roundoff allowance for the exact-equality case
  const double slack = 64 * std::numeric_limits<double>::epsilon() * (s_true.norm() + s_rec.norm());
  return detail::finish(r, r.measured <= r.bound + slack);
}

/// Least-squares map P = (X^T X)^{-1} X^T for the design rows (1, -j^2), j = 0..n_kl.
inline Eigen::MatrixXd fit_design_pseudoinverse(int n_kl) {
  Eigen::MatrixXd x(n_kl + 1, 2);
  for (int j = 0; j <= n_kl; ++j) {
    x(j, 0) = 1.0;
    x(j, 1) = -static_cast<double>(j) * j;
  }
  return (x.transpose() * x).inverse() * x.transpose();
}

/// Log perturbation: with c0 = min lambda_ref and E = max |lambda_hat - lambda_ref|,
/// checks max |log lambda_hat - log lambda_ref| <= (2/c0) E, valid when E <= c0/2.
inline CheckReport check_log_perturbation(const std::vector<double>& lambda_hat, const std::vector<double>& lambda_ref) {
  if (lambda_hat.size() != lambda_ref.size() || lambda_hat.empty())
    fail(ErrorKind::InvalidArgument, "eigenvalue lists must be nonempty and of equal length");
  const double c0 = *std::min_element(lambda_ref.begin(), lambda_ref.end());
  double e = 0.0;
  for (std::size_t j = 0; j < lambda_hat.size(); ++j) e = std::max(e, std::abs(lambda_hat[j] - lambda_ref[j]));
  CheckReport r;
  r.name = "log_perturbation";
  r.params = {{"c0", c0}, {"E_lambda", e}};
  if (!(c0 > 0.0) || e > 0.5 * c0) {
    r.status = CheckStatus::NotApplicable;
    r.note = "E_lambda > c0/2: outside the regime of the bound";
    return r;
  }
  double worst = 0.0;
  for (std::size_t j = 0; j < lambda_hat.size(); ++j)
    worst = std::max(worst, std::abs(std::log(lambda_hat[j]) - std::log(lambda_ref[j])));
  r.measured = worst;
  r.bound = 2.0 / c0 * e;
  return detail::finish(r, worst <= r.bound * (1 + 1e-12));
}

/// Perturbs the model spectrum of (sigma*, ell*) by |e_j| <= E_lambda for each
/// level and compares the drift |A_fit - A*| + |B_fit - B*| with
/// C1 E_lambda, C1 = sqrt(2) sqrt(n_kl + 1) ||P||_2 (2/c0).
/// measured is the largest drift / E_lambda over admissible levels; levels with
/// E_lambda > c0/2 are skipped and counted in params.
inline CheckReport check_fit_stability(int n_kl, const std::vector<double>& levels, double sigma = 0.05,
                                       double ell = 1.0, int trials = 200, std::uint64_t seed = 1) {
  if (n_kl < 2) fail(ErrorKind::InvalidArgument, "fit stability needs n_kl >= 2");
  std::vector<double> ref(static_cast<std::size_t>(n_kl) + 1);
  for (int j = 0; j <= n_kl; ++j) ref[static_cast<std::size_t>(j)] = model_eigenvalue(sigma, ell, j);
  const double c0 = *std::min_element(ref.begin(), ref.end());
  const double a_star = std::log(std::sqrt(std::numbers::pi) * sigma * sigma * ell);
  const double b_star = ell * ell / 4.0;
  const double p_norm = Eigen::JacobiSVD<Eigen::MatrixXd>(fit_design_pseudoinverse(n_kl)).singularValues()(0);
  const double c1 = std::sqrt(2.0) * std::sqrt(n_kl + 1.0) * p_norm * (2.0 / c0);

  std::mt19937_64 rng(mix_seed(seed));
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  double worst = 0.0;
  double worst_hyper = 0.0;
  int admissible = 0;
  int skipped = 0;
  bool zero_ok = true;
  for (double level : levels) {
    if (level > 0.5 * c0) {
      ++skipped;
      continue;
    }
    ++admissible;
    for (int t = 0; t < trials; ++t) {
      std::vector<double> lam = ref;
      for (auto& v : lam) v += level * (t % 2 == 0 ? (coin(rng) ? 1.0 : -1.0) : unit(rng));
      const auto fit = log_linear_fit(lam, n_kl);
      const double drift = std::abs(fit.a - a_star) + std::abs(fit.b - b_star);
      if (level == 0.0) {
        zero_ok = zero_ok && drift <= 1e-12;
        break;
      }
      worst = std::max(worst, drift / level);
      if (fit.b > 0.0) {
        const auto hp = hyperparams_from_fit(fit.a, fit.b);
        worst_hyper = std::max(worst_hyper, (std::abs(hp.sigma - sigma) + std::abs(hp.ell - ell)) / level);
      }
    }
  }
  CheckReport r;
  r.name = "fit_stability";
  r.measured = worst;
  r.bound = c1;
  r.params = {{"n_kl", n_kl},        {"sigma", sigma},          {"ell", ell},
              {"c0", c0},            {"design_norm", p_norm},   {"admissible_levels", admissible},
              {"skipped_levels", skipped}, {"hyper_lipschitz", worst_hyper}};
  if (admissible == 0) {
    r.status = CheckStatus::NotApplicable;
    r.note = "every level exceeds c0/2";
    return r;
  }
  if (skipped > 0) r.note = std::to_string(skipped) + " level(s) outside E_lambda <= c0/2 not assessed";
  return detail::finish(r, zero_ok && worst <= c1);
}

}  // namespace randscat
