#pragma once

// Per-realization mean-shape reconstruction.  A regularized nonlinear fit at
// the lowest wavenumber is followed by recursive linearization through the
// remaining wavenumbers.  Complex far-field residuals are realified as
// sqrt(2 pi / M) (Re, Im) so that half their squared norm is the discrete
// L2(S^1) misfit (pi/M) sum |F - u|^2.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "randscat/error.hpp"
#include "randscat/forward.hpp"
#include "randscat/geometry.hpp"
#include "randscat/parallel.hpp"

namespace randscat {

struct InversionConfig {
  double gamma = 1e-4;         // low-frequency Tikhonov weight
  double alpha = 0.1;          // recursive-linearization regularization
  double alpha_repair = 0.5;
  double eps_fd = 1e-5;
  double tol = 1e-3;           // relative step stop
  int max_iter_low = 50;
  int max_iter_per_freq = 5;
  int order = 5;               // N_r
  double initial_radius = 1.2;
  int n_theta = 400;           // grid for the radius norm and QC
  int m_last = 3;              // QC window
  double ill_conditioned = 1e10;
  ForwardConfig forward{64, 1.0};

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0)) fail(ErrorKind::InvalidArgument, std::string(name) + " must be positive");
    };
    positive(gamma, "gamma");
    positive(alpha, "alpha");
    positive(alpha_repair, "alpha_repair");
    positive(eps_fd, "eps_fd");
    positive(tol, "tol");
    positive(initial_radius, "initial_radius");
    if (!(tol < 1.0)) fail(ErrorKind::InvalidArgument, "tol must be < 1");
    if (max_iter_low < 1 || max_iter_per_freq < 1 || order < 0 || n_theta < 2 * order + 2 || m_last < 1)
      fail(ErrorKind::InvalidArgument, "inversion iteration counts and grid sizes must be positive");
  }
};

/// Observation setup shared by every forward evaluation of one inversion.
struct ForwardProblem {
  std::vector<double> obs_angles;
  Eigen::Vector2d incident_dir{-1.0, 0.0};
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  ForwardConfig forward;

  Eigen::VectorXcd operator()(const RadiusParams& p, double k) const {
    return far_field_map(p, center, k, incident_dir, obs_angles, forward);
  }
  double residual_weight() const { return std::sqrt(kTwoPi / static_cast<double>(obs_angles.size())); }
};

/// (pi/M) sum_m |F(p, k) - u|^2.
inline double misfit(const Eigen::VectorXcd& f, const Eigen::VectorXcd& data) {
  return std::numbers::pi / static_cast<double>(data.size()) * (f - data).squaredNorm();
}

inline double objective(const ForwardProblem& fp, const RadiusParams& p, double k, const Eigen::VectorXcd& data) {
  return misfit(fp(p, k), data);
}

/// Discrete L2[0, 2pi) norm squared of the radius on an n_theta grid.
inline double radius_norm_squared(const RadiusParams& p, int n_theta) {
  return grid_l2_squared(radius_on_grid(p, n_theta));
}

inline double objective_regularized(const ForwardProblem& fp, const RadiusParams& p, double k,
                                    const Eigen::VectorXcd& data, double gamma, int n_theta) {
  return objective(fp, p, k, data) + 0.5 * gamma * radius_norm_squared(p, n_theta);
}

inline Eigen::VectorXd realify(const Eigen::VectorXcd& z, double weight) {
  Eigen::VectorXd out(2 * z.size());
  out.head(z.size()) = weight * z.real();
  out.tail(z.size()) = weight * z.imag();
  return out;
}

inline Eigen::MatrixXd realify(const Eigen::MatrixXcd& z, double weight) {
  Eigen::MatrixXd out(2 * z.rows(), z.cols());
  out.topRows(z.rows()) = weight * z.real();
  out.bottomRows(z.rows()) = weight * z.imag();
  return out;
}

/// Forward-difference Jacobian of the far field with respect to p; `base`
/// is F(p, k) when already available.
inline Eigen::MatrixXcd jacobian_fd(const ForwardProblem& fp, const RadiusParams& p, double k, double eps,
                                    const Eigen::VectorXcd* base = nullptr) {
  const Eigen::VectorXcd f0 = base ? *base : fp(p, k);
  Eigen::MatrixXcd jac(f0.size(), static_cast<Eigen::Index>(p.size()));
  for (std::size_t q = 0; q < p.size(); ++q) {
    RadiusParams shifted = p;
    shifted.coefficients[q] += eps;
    jac.col(static_cast<Eigen::Index>(q)) = (fp(shifted, k) - f0) / eps;
  }
  return jac;
}

/// Gram matrix W of the grid norm, so that (2 pi / N) sum r(theta_i)^2 = p^T W p.
inline Eigen::MatrixXd radius_gram(int order, int n_theta) {
  const auto theta = uniform_grid(n_theta);
  const Eigen::MatrixXd b = radius_basis(order, theta);
  return (kTwoPi / n_theta) * (b.transpose() * b);
}

struct LowFreqResult {
  RadiusParams p;
  double initial_value = 0.0;
  double final_value = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;  // accepted objective values, starting with the initial one
};

inline Eigen::VectorXd to_vector(const RadiusParams& p) {
  return Eigen::Map<const Eigen::VectorXd>(p.coefficients.data(), static_cast<Eigen::Index>(p.size()));
}

inline RadiusParams from_vector(const Eigen::VectorXd& v) {
  return RadiusParams(std::vector<double>(v.data(), v.data() + v.size()));
}

/// Damped Gauss-Newton (Levenberg-Marquardt) on the regularized objective.
/// Only descent steps are accepted; the damping grows until a trial step
/// decreases the objective or becomes shorter than the stopping tolerance.
inline LowFreqResult low_freq_solve(const ForwardProblem& fp, const Eigen::VectorXcd& data, double k,
                                    const RadiusParams& p0, const InversionConfig& cfg) {
  require_positive(p0, cfg.n_theta);
  const double w = fp.residual_weight();
  const Eigen::MatrixXd gram = radius_gram(p0.order(), cfg.n_theta);
  const auto n = static_cast<Eigen::Index>(p0.size());

  LowFreqResult res;
  res.p = p0;
  Eigen::VectorXcd f = fp(p0, k);
  Eigen::VectorXd pv = to_vector(p0);
  double value = misfit(f, data) + 0.5 * cfg.gamma * pv.dot(gram * pv);
  res.initial_value = value;
  res.history.push_back(value);

  double mu = -1.0;
  for (int it = 0; it < cfg.max_iter_low; ++it) {
    res.iterations = it + 1;
    const Eigen::MatrixXd jr = realify(jacobian_fd(fp, res.p, k, cfg.eps_fd, &f), w);
    const Eigen::VectorXd rr = realify(Eigen::VectorXcd(f - data), w);
    const Eigen::MatrixXd h = jr.transpose() * jr + cfg.gamma * gram;
    const Eigen::VectorXd grad = jr.transpose() * rr + cfg.gamma * gram * pv;
    if (mu < 0.0) mu = 1e-3 * h.diagonal().maxCoeff();

    bool accepted = false;
    bool step_small = false;
    for (int tries = 0; tries < 60; ++tries) {
      const Eigen::MatrixXd damped = h + mu * Eigen::MatrixXd::Identity(n, n);
      const Eigen::VectorXd step = damped.ldlt().solve(-grad);
      if (step.norm() <= cfg.tol * pv.norm()) {
        step_small = true;
        break;
      }
      const Eigen::VectorXd trial_v = pv + step;
      const RadiusParams trial = from_vector(trial_v);
      if (is_positive(trial, cfg.n_theta)) {
        Eigen::VectorXcd f_trial;
        bool solved = true;
        try {
          f_trial = fp(trial, k);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::SingularSystem) throw;
          solved = false;
        }
        if (solved) {
          const double v_trial = misfit(f_trial, data) + 0.5 * cfg.gamma * trial_v.dot(gram * trial_v);
          if (v_trial < value) {
            const bool small = step.norm() <= cfg.tol * trial_v.norm();
            pv = trial_v;
            res.p = trial;
            f = f_trial;
            value = v_trial;
            res.history.push_back(value);
            mu = std::max(mu / 3.0, 1e-12);
            accepted = true;
            step_small = small;
            break;
          }
        }
      }
      mu *= 4.0;
      if (mu > 1e16) break;
    }
    if (step_small) {
      res.converged = true;
      break;
    }
    if (!accepted)
      fail(ErrorKind::LineSearchFailed, "no damping gives descent at iteration " + std::to_string(it + 1) +
                                            " (objective " + std::to_string(value) + ")");
  }
  res.final_value = value;
  return res;
}

struct NormalSolve {
  Eigen::VectorXd step;
  double condition = 1.0;
  double residual = 0.0;  // |(A^T A + alpha I) dp + A^T g| / |A^T g|
};

/// (A^T A + alpha I) dp = -A^T g for realified A and g.
inline NormalSolve solve_normal_equations(const Eigen::MatrixXd& a, const Eigen::VectorXd& g, double alpha,
                                          double max_condition = 1e10) {
  const auto n = a.cols();
  const Eigen::MatrixXd lhs = a.transpose() * a + alpha * Eigen::MatrixXd::Identity(n, n);
  const Eigen::VectorXd rhs = -(a.transpose() * g);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(lhs, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  NormalSolve out;
  out.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(out.condition <= max_condition))
    fail(ErrorKind::IllConditioned, "normal matrix condition " + std::to_string(out.condition));
  const Eigen::LLT<Eigen::MatrixXd> llt(lhs);
  if (llt.info() != Eigen::Success) fail(ErrorKind::IllConditioned, "normal matrix not positive definite");
  out.step = llt.solve(rhs);
  const double rn = rhs.norm();
  out.residual = rn > 0.0 ? (lhs * out.step - rhs).norm() / rn : (lhs * out.step).norm();
  return out;
}

struct RlaStep {
  RadiusParams p;
  Eigen::VectorXcd residual;  // g = F(p_j, k) - u
  Eigen::VectorXd step;       // dp
  double condition = 1.0;
  double normal_residual = 0.0;
};

/// One linearized update at wavenumber k: dp solves the regularized normal
/// equations; halved until the updated radius is positive.
inline RlaStep rla_step(const ForwardProblem& fp, const RadiusParams& p, double k, const Eigen::VectorXcd& data,
                        double alpha, const InversionConfig& cfg, const Eigen::VectorXcd* f_at_p = nullptr) {
  const double w = fp.residual_weight();
  RlaStep out;
  const Eigen::VectorXcd f = f_at_p ? *f_at_p : fp(p, k);
  out.residual = f - data;
  const Eigen::MatrixXd a = realify(jacobian_fd(fp, p, k, cfg.eps_fd, &f), w);
  const Eigen::VectorXd g = realify(out.residual, w);
  const auto ns = solve_normal_equations(a, g, alpha, cfg.ill_conditioned);
  out.condition = ns.condition;
  out.normal_residual = ns.residual;
  out.step = ns.step;
  const Eigen::VectorXd pv = to_vector(p);
  for (int halvings = 0;; ++halvings) {
    RadiusParams trial = from_vector(pv + out.step);
    if (is_positive(trial, cfg.n_theta)) {
      out.p = std::move(trial);
      return out;
    }
    if (halvings >= 20) fail(ErrorKind::NonPositiveRadius, "update leaves the radius nonpositive");
    out.step *= 0.5;
  }
}

struct QcMetrics {
  double eta_max = 0.0;
  double g_final = 0.0;
};

struct InversionRecord {
  int realization_id = 0;
  std::vector<RadiusParams> trajectory;  // p after each wavenumber
  std::vector<double> objective;         // regularized objective at (p_j, k_j)
  RadiusParams p_final;
  QcMetrics qc;
  bool ok = true;
  std::string failure;
  bool repaired = false;
  double alpha_used = 0.1;
  int low_freq_iterations = 0;
  double max_condition = 0.0;
};

/// eta_max over the last m_last continuation steps and the final objective.
inline QcMetrics qc_metrics(const InversionRecord& rec, int m_last, int n_theta) {
  const int nk = static_cast<int>(rec.trajectory.size());
  if (nk < m_last + 1)
    fail(ErrorKind::InvalidArgument, "trajectory of length " + std::to_string(nk) + " too short for window " +
                                         std::to_string(m_last));
  QcMetrics qc;
  for (int j = nk - 1 - m_last; j < nk - 1; ++j) {
    const auto r0 = radius_on_grid(rec.trajectory[static_cast<std::size_t>(j)], n_theta);
    const auto r1 = radius_on_grid(rec.trajectory[static_cast<std::size_t>(j) + 1], n_theta);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < r0.size(); ++i) {
      num += (r1[i] - r0[i]) * (r1[i] - r0[i]);
      den += r1[i] * r1[i];
    }
    qc.eta_max = std::max(qc.eta_max, std::sqrt(num / den));
  }
  qc.g_final = rec.objective.empty() ? 0.0 : rec.objective.back();
  return qc;
}

/// Multi-frequency reconstruction of one realization. Numerical failures are
/// recorded in the returned record rather than thrown.
inline InversionRecord invert_sample(const FarFieldDataset& ds, std::size_t s, const InversionConfig& cfg,
                                     double alpha, const ForwardProblem& fp) {
  InversionRecord rec;
  rec.realization_id = ds.realization_ids.empty() ? static_cast<int>(s) : ds.realization_ids[s];
  rec.alpha_used = alpha;
  const auto& data = ds.noisy[s];
  const auto& ks = ds.wavenumbers;
  try {
    const auto low = low_freq_solve(fp, data[0], ks[0], RadiusParams::circle(cfg.initial_radius, cfg.order), cfg);
    rec.low_freq_iterations = low.iterations;
    RadiusParams p = low.p;
    rec.trajectory.push_back(p);
    rec.objective.push_back(low.final_value);
    for (std::size_t j = 1; j < ks.size(); ++j) {
      const double k = ks[j];
      Eigen::VectorXcd f = fp(p, k);
      for (int it = 0; it < cfg.max_iter_per_freq; ++it) {
        const auto step = rla_step(fp, p, k, data[j], alpha, cfg, &f);
        rec.max_condition = std::max(rec.max_condition, step.condition);
        const double rel = step.step.norm() / to_vector(step.p).norm();
        p = step.p;
        f = fp(p, k);
        if (rel < cfg.tol) break;
      }
      rec.trajectory.push_back(p);
      rec.objective.push_back(misfit(f, data[j]) + 0.5 * cfg.gamma * radius_norm_squared(p, cfg.n_theta));
    }
    rec.p_final = p;
    // short frequency sweeps use the whole trajectory as the window
    const int window = std::min(cfg.m_last, static_cast<int>(rec.trajectory.size()) - 1);
    rec.qc = window > 0 ? qc_metrics(rec, window, cfg.n_theta) : QcMetrics{0.0, rec.objective.back()};
  } catch (const Error& e) {
    rec.ok = false;
    rec.failure = e.what();
  }
  return rec;
}

inline ForwardProblem forward_problem_for(const FarFieldDataset& ds, const InversionConfig& cfg) {
  ForwardProblem fp;
  fp.obs_angles = ds.obs_angles;
  fp.incident_dir = ds.incident_dir;
  fp.forward = cfg.forward;
  return fp;
}

inline InversionRecord invert_sample(const FarFieldDataset& ds, std::size_t s, const InversionConfig& cfg) {
  cfg.validate();
  return invert_sample(ds, s, cfg, cfg.alpha, forward_problem_for(ds, cfg));
}

/// All realizations, in dataset order, independent of `workers`.
inline std::vector<InversionRecord> invert_all(const FarFieldDataset& ds, const InversionConfig& cfg,
                                               int workers = 1) {
  cfg.validate();
  const auto fp = forward_problem_for(ds, cfg);
  std::vector<InversionRecord> records(ds.n_samples());
  parallel_for(records.size(), workers, [&](std::size_t s) { records[s] = invert_sample(ds, s, cfg, cfg.alpha, fp); });
  return records;
}

/// Empirical quantile with linear interpolation between order statistics.
inline double empirical_quantile(std::vector<double> v, double q) {
  if (v.empty()) fail(ErrorKind::InvalidArgument, "quantile of empty set");
  std::sort(v.begin(), v.end());
  const double h = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Indices of successful records with eta_max and G_final at or below their
/// q_eta and q_g empirical quantiles (computed over successful records).
inline std::vector<std::size_t> qc_screen(const std::vector<InversionRecord>& records, double q_eta = 0.85,
                                          double q_g = 0.90) {
  if (records.size() < 3) fail(ErrorKind::TooFewSamples, "QC screening needs at least 3 records");
  std::vector<double> etas;
  std::vector<double> gs;
  for (const auto& r : records)
    if (r.ok) {
      etas.push_back(r.qc.eta_max);
      gs.push_back(r.qc.g_final);
    }
  std::vector<std::size_t> keep;
  if (!etas.empty()) {
    const double te = empirical_quantile(etas, q_eta);
    const double tg = empirical_quantile(gs, q_g);
    for (std::size_t s = 0; s < records.size(); ++s)
      if (records[s].ok && records[s].qc.eta_max <= te && records[s].qc.g_final <= tg) keep.push_back(s);
  }
  if (keep.empty()) fail(ErrorKind::AllRejected, "no record passes QC");
  return keep;
}

/// Re-runs the listed records with alpha_repair. A record is replaced when the
/// original failed and the re-run succeeds, or when both QC metrics improve.
inline std::vector<InversionRecord> repair_outliers(const FarFieldDataset& ds, std::vector<InversionRecord> records,
                                                    const std::vector<std::size_t>& indices, const InversionConfig& cfg,
                                                    int workers = 1) {
  const auto fp = forward_problem_for(ds, cfg);
  for (auto s : indices)
    if (s >= records.size()) fail(ErrorKind::InvalidArgument, "repair index out of range");
  std::vector<InversionRecord> reruns(indices.size());
  parallel_for(indices.size(), workers,
               [&](std::size_t i) { reruns[i] = invert_sample(ds, indices[i], cfg, cfg.alpha_repair, fp); });
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto& old = records[indices[i]];
    auto& fresh = reruns[i];
    if (!fresh.ok) continue;
    const bool better = !old.ok || (fresh.qc.eta_max < old.qc.eta_max && fresh.qc.g_final < old.qc.g_final);
    if (better) {
      fresh.repaired = true;
      old = std::move(fresh);
    }
  }
  return records;
}

/// Records outside the QC-accepted set, failed ones included.
inline std::vector<std::size_t> qc_outliers(const std::vector<InversionRecord>& records, double q_eta,
                                            double q_g) {
  std::vector<std::size_t> keep;
  try {
    keep = qc_screen(records, q_eta, q_g);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::AllRejected) throw;
  }
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < records.size(); ++s)
    if (std::find(keep.begin(), keep.end(), s) == keep.end()) out.push_back(s);
  return out;
}

struct MeanShape {
  std::vector<double> theta;
  std::vector<double> radius;
  RadiusParams params;
};

inline MeanShape mean_shape(const std::vector<InversionRecord>& records, const std::vector<std::size_t>& accepted,
                            int n_theta) {
  if (accepted.empty()) fail(ErrorKind::AllRejected, "mean shape of an empty set");
  int order = 0;
  for (auto s : accepted) order = std::max(order, records.at(s).p_final.order());
  std::vector<double> sum(2 * static_cast<std::size_t>(order) + 1, 0.0);
  MeanShape out;
  out.theta = uniform_grid(n_theta);
  out.radius.assign(static_cast<std::size_t>(n_theta), 0.0);
  for (auto s : accepted) {
    const auto& p = records[s].p_final;
    for (std::size_t q = 0; q < p.size(); ++q) sum[q] += p.coefficients[q];
    const auto r = radius_on_grid(p, out.theta);
    for (std::size_t i = 0; i < r.size(); ++i) out.radius[i] += r[i];
  }
  const double inv = 1.0 / static_cast<double>(accepted.size());
  for (auto& v : sum) v *= inv;
  for (auto& v : out.radius) v *= inv;
  out.params = RadiusParams(std::move(sum));
  return out;
}

}  // namespace randscat
