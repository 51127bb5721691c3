#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "randscat/experiment.hpp"
#include "randscat/stage1.hpp"

using namespace randscat;

namespace {

ForwardProblem small_problem() {
  ForwardProblem fp;
  fp.obs_angles = observation_angles(32);
  fp.forward = {64, 1.0};
  return fp;
}

InversionConfig small_config() {
  InversionConfig cfg;
  cfg.order = 3;
  cfg.n_theta = 64;
  cfg.forward = {64, 1.0};
  return cfg;
}

Eigen::VectorXcd data_for(const RadiusParams& p, double k) {
  auto fp = small_problem();
  fp.forward.n_nodes = 128;
  return fp(p, k);
}

FarFieldDataset circle_dataset(int n_samples, double delta) {
  const auto basis = build_basis(CovarianceModel::build(0.05, 1.0));
  std::vector<BoundarySample> samples;
  for (int s = 1; s <= n_samples; ++s)
    samples.push_back(
        sample_boundary(RadiusParams::circle(1.0), basis, Eigen::Vector2d::Zero(), 64, derive_seed(11, s), s));
  return generate_dataset(samples, {1.0, 2.0, 3.0, 4.0}, observation_angles(32), Eigen::Vector2d(-1.0, 0.0), delta,
                          derive_seed(11, 0), {128, 1.0});
}

InversionRecord record_with(std::vector<RadiusParams> trajectory, double g = 0.0) {
  InversionRecord r;
  r.trajectory = std::move(trajectory);
  r.p_final = r.trajectory.back();
  r.objective.assign(r.trajectory.size(), g);
  return r;
}

}  // namespace

TEST(Objective, NonnegativeAndZeroOnOwnData) {
  const auto fp = small_problem();
  const auto circle = RadiusParams::circle(1.0, 3);
  const auto data = fp(circle, 2.0);
  EXPECT_EQ(objective(fp, circle, 2.0, data), 0.0);
  EXPECT_LT(objective(fp, circle, 2.0, data_for(circle, 2.0)), 1e-20);
  EXPECT_GE(objective(fp, RadiusParams::circle(1.1, 3), 2.0, data), 0.0);
  EXPECT_GT(objective(fp, RadiusParams::circle(1.1, 3), 2.0, data), 0.0);
}

TEST(Objective, NoiseFloorMatchesNormalization) {
  const auto fp = small_problem();
  const auto circle = RadiusParams::circle(1.0);
  const auto clean = fp(circle, 1.0);
  const auto noisy = add_relative_noise(clean, 0.05, 3);
  const double l2 = kTwoPi / 32 * clean.squaredNorm();
  EXPECT_NEAR(objective(fp, circle, 1.0, noisy), 0.5 * 0.05 * 0.05 * l2, 1e-15);
}

TEST(Objective, RegularizationTerm) {
  const auto fp = small_problem();
  const auto p = pear_radius();
  const auto data = data_for(RadiusParams::circle(1.0), 1.0);
  EXPECT_EQ(objective_regularized(fp, p, 1.0, data, 0.0, 64), objective(fp, p, 1.0, data));
  double prev = -1.0;
  for (double g : {0.0, 1e-4, 1e-2, 1.0}) {
    const double v = objective_regularized(fp, p, 1.0, data, g, 64);
    EXPECT_GE(v, prev);
    prev = v;
  }
  // the pear's L2 norm: 2 pi (1.5^2 + 0.3^2 / 2)
  EXPECT_NEAR(radius_norm_squared(p, 64), kTwoPi * (2.25 + 0.045), 1e-12);
  EXPECT_THROW(objective_regularized(fp, RadiusParams::circle(0.0), 1.0, data, 1e-2, 64), Error);
}

TEST(Jacobian, MatchesCentralDifferences) {
  const auto fp = small_problem();
  const auto p = RadiusParams::circle(1.0, 2);
  const double eps = 1e-5;
  const auto jac = jacobian_fd(fp, p, 1.0, eps);
  for (Eigen::Index q = 0; q < jac.cols(); ++q) {
    RadiusParams plus = p, minus = p;
    plus.coefficients[static_cast<std::size_t>(q)] += 1e-4;
    minus.coefficients[static_cast<std::size_t>(q)] -= 1e-4;
    const Eigen::VectorXcd central = (fp(plus, 1.0) - fp(minus, 1.0)) / 2e-4;
    EXPECT_LE((jac.col(q) - central).norm(), 1e-4 * central.norm()) << q;
  }
}

TEST(Jacobian, FirstOrderSignature) {
  const auto fp = small_problem();
  const auto p = pear_radius();
  auto gap = [&](double eps) { return (jacobian_fd(fp, p, 2.0, 2 * eps) - jacobian_fd(fp, p, 2.0, eps)).norm(); };
  const double ratio = gap(2e-3) / gap(1e-3);
  EXPECT_NEAR(ratio, 2.0, 0.1);
}

TEST(Jacobian, HalvingStability) {
  const auto fp = small_problem();
  const auto p = pear_radius();
  const auto a = jacobian_fd(fp, p, 2.0, 1e-5);
  const auto b = jacobian_fd(fp, p, 2.0, 5e-6);
  EXPECT_LE((a - b).norm(), 1e-4 * a.norm());
}

TEST(LowFrequency, RecoversCircleRadius) {
  const auto fp = small_problem();
  const auto data = data_for(RadiusParams::circle(1.0), 1.0);
  const auto cfg = small_config();
  const auto res = low_freq_solve(fp, data, 1.0, RadiusParams::circle(1.2, 3), cfg);
  EXPECT_NEAR(res.p.a(0), 1.0, 5e-2);
  EXPECT_LE(res.final_value, res.initial_value);
  ASSERT_FALSE(res.history.empty());
  EXPECT_EQ(res.history.front(), res.initial_value);
  for (std::size_t i = 1; i < res.history.size(); ++i) EXPECT_LE(res.history[i], res.history[i - 1]);
}

TEST(LowFrequency, StartingAtTruthStopsImmediately) {
  const auto fp = small_problem();
  const auto truth = RadiusParams::circle(1.0, 3);
  auto cfg = small_config();
  cfg.gamma = 1e-10;
  const auto res = low_freq_solve(fp, fp(truth, 1.0), 1.0, truth, cfg);
  EXPECT_TRUE(res.converged);
  EXPECT_EQ(res.iterations, 1);
  EXPECT_EQ(res.p.coefficients, truth.coefficients);
}

TEST(LowFrequency, DefaultRegularizationBiasIsSmall) {
  // with gamma > 0 the truth is not the regularized minimizer; the solver
  // moves off it by a small shrinkage and then stops
  const auto fp = small_problem();
  const auto truth = RadiusParams::circle(1.0, 3);
  const auto res = low_freq_solve(fp, fp(truth, 1.0), 1.0, truth, small_config());
  EXPECT_TRUE(res.converged);
  EXPECT_LE(res.iterations, 3);
  EXPECT_LE(res.final_value, res.initial_value);
  EXPECT_NEAR(res.p.a(0), 1.0, 1e-2);
}

TEST(Rla, ZeroResidualGivesZeroStep) {
  const auto fp = small_problem();
  const auto p = pear_radius();
  const auto step = rla_step(fp, p, 3.0, fp(p, 3.0), 0.1, small_config());
  EXPECT_EQ(step.step.norm(), 0.0);
  EXPECT_EQ(step.p.coefficients, p.coefficients);
}

TEST(Rla, HugeAlphaGivesVanishingStep) {
  const auto fp = small_problem();
  const auto p = RadiusParams::circle(1.05, 3);
  const auto data = data_for(RadiusParams::circle(1.0), 2.0);
  const double alpha = 1e12;
  const auto step = rla_step(fp, p, 2.0, data, alpha, small_config());
  const double w = fp.residual_weight();
  const Eigen::MatrixXd a = realify(jacobian_fd(fp, p, 2.0, 1e-5), w);
  const Eigen::VectorXd g = realify(Eigen::VectorXcd(fp(p, 2.0) - data), w);
  EXPECT_LE(step.step.norm(), (a.transpose() * g).norm() / alpha * (1 + 1e-12));
}

TEST(Rla, ReducesLinearizedResidual) {
  const auto fp = small_problem();
  const auto p = RadiusParams::circle(1.05, 3);
  const auto data = data_for(RadiusParams::circle(1.0), 2.0);
  const auto step = rla_step(fp, p, 2.0, data, 0.1, small_config());
  const double w = fp.residual_weight();
  const Eigen::MatrixXd a = realify(jacobian_fd(fp, p, 2.0, 1e-5), w);
  const Eigen::VectorXd g = realify(step.residual, w);
  EXPECT_LT((g + a * step.step).norm(), g.norm());
  EXPECT_LE(step.normal_residual, 1e-10);
  EXPECT_LT(objective(fp, step.p, 2.0, data), objective(fp, p, 2.0, data));
}

TEST(NormalEquations, ResidualAndConditioning) {
  Eigen::MatrixXd a(6, 3);
  a << 1, 2, 0, 0, 1, 1, 3, 0, 1, 1, 1, 1, 0, 2, 5, 1, 0, 0;
  Eigen::VectorXd g(6);
  g << 1, -2, 0.5, 3, 0, 1;
  const auto ns = solve_normal_equations(a, g, 0.1);
  EXPECT_LE(ns.residual, 1e-10);
  try {
    solve_normal_equations(Eigen::MatrixXd::Zero(4, 2), Eigen::VectorXd::Ones(4), 1e-3, 10.0);
  } catch (...) {
    FAIL() << "alpha I alone is perfectly conditioned";
  }
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(4, 2);
  bad(0, 0) = 1e6;
  try {
    solve_normal_equations(bad, Eigen::VectorXd::Ones(4), 1e-3, 1e10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IllConditioned);
  }
}

TEST(Qc, Metrics) {
  const auto p = RadiusParams::circle(1.0);
  EXPECT_EQ(qc_metrics(record_with({p, p, p, p}, 0.3), 3, 64).eta_max, 0.0);
  EXPECT_EQ(qc_metrics(record_with({p, p, p, p}, 0.3), 3, 64).g_final, 0.3);
  const auto rec = record_with({p, p, RadiusParams::circle(1.5), RadiusParams::circle(2.0)});
  EXPECT_NEAR(qc_metrics(rec, 1, 64).eta_max, 0.25, 1e-14);
  EXPECT_NEAR(qc_metrics(rec, 3, 64).eta_max, 1.0 / 3.0, 1e-14);
  EXPECT_THROW(qc_metrics(rec, 4, 64), Error);
}

TEST(Qc, Screen) {
  std::vector<InversionRecord> same(5, record_with({RadiusParams::circle(1.0)}));
  for (auto& r : same) r.qc = {0.01, 0.2};
  EXPECT_EQ(qc_screen(same).size(), 5u);

  std::vector<InversionRecord> recs(10, record_with({RadiusParams::circle(1.0)}));
  for (std::size_t s = 0; s < recs.size(); ++s) recs[s].qc = {0.01 + 1e-4 * static_cast<double>(s), 0.2};
  recs[4].qc.eta_max = 0.1;
  const auto keep = qc_screen(recs);
  EXPECT_EQ(std::count(keep.begin(), keep.end(), 4u), 0);
  EXPECT_EQ(qc_outliers(recs, 0.85, 0.90).front(), 4u);

  try {
    qc_screen(std::vector<InversionRecord>(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::TooFewSamples);
  }
  for (auto& r : recs) r.ok = false;
  try {
    qc_screen(recs);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AllRejected);
  }
}

TEST(Qc, Quantile) {
  EXPECT_EQ(empirical_quantile({3.0, 1.0, 2.0}, 0.5), 2.0);
  EXPECT_EQ(empirical_quantile({1.0, 2.0}, 0.25), 1.25);
  EXPECT_EQ(empirical_quantile({4.0}, 0.9), 4.0);
}

TEST(MeanShape, Cases) {
  const auto pear = pear_radius();
  const auto one = mean_shape({record_with({pear})}, {0}, 64);
  const auto r = radius_on_grid(pear, 64);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_DOUBLE_EQ(one.radius[i], r[i]);

  RadiusParams mirror = pear;
  for (auto& c : mirror.coefficients) c = -c;
  mirror.coefficients[0] = 2.0 - pear.coefficients[0];
  const auto two = mean_shape({record_with({pear}), record_with({mirror})}, {0, 1}, 64);
  for (double v : two.radius) EXPECT_NEAR(v, 1.0, 1e-15);

  const auto mixed = mean_shape({record_with({pear}), record_with({RadiusParams::circle(1.2)})}, {0, 1}, 64);
  const auto from_params = radius_on_grid(mixed.params, 64);
  for (std::size_t i = 0; i < from_params.size(); ++i) EXPECT_NEAR(from_params[i], mixed.radius[i], 1e-14);

  try {
    mean_shape({record_with({pear})}, {}, 64);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::AllRejected);
  }
}

TEST(Invert, NoiselessCircleSampleAndDeterminism) {
  const auto ds = circle_dataset(3, 0.0);
  const auto cfg = small_config();
  const auto a = invert_all(ds, cfg, 1);
  const auto b = invert_all(ds, cfg, 2);
  for (std::size_t s = 0; s < a.size(); ++s) {
    ASSERT_TRUE(a[s].ok) << a[s].failure;
    EXPECT_EQ(a[s].trajectory.size(), 4u);
    EXPECT_EQ(a[s].p_final.coefficients, b[s].p_final.coefficients);
    EXPECT_EQ(a[s].objective, b[s].objective);
    const auto recomputed = qc_metrics(a[s], 3, cfg.n_theta);
    EXPECT_EQ(recomputed.eta_max, a[s].qc.eta_max);
    EXPECT_EQ(recomputed.g_final, a[s].qc.g_final);
    EXPECT_NEAR(a[s].p_final.a(0), 1.0, 0.05);
  }
}

TEST(Repair, HealthySampleUnchanged) {
  const auto ds = circle_dataset(3, 0.05);
  auto cfg = small_config();
  cfg.alpha_repair = cfg.alpha;
  const auto recs = invert_all(ds, cfg);
  const auto fixed = repair_outliers(ds, recs, {0, 1, 2}, cfg);
  for (std::size_t s = 0; s < recs.size(); ++s) {
    EXPECT_FALSE(fixed[s].repaired);
    EXPECT_EQ(fixed[s].p_final.coefficients, recs[s].p_final.coefficients);
  }
  EXPECT_THROW(repair_outliers(ds, recs, {7}, cfg), Error);
}
