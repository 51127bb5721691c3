#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "randscat/experiment.hpp"
#include "randscat/forward.hpp"

using namespace randscat;

namespace {

double rel_l2(const Eigen::VectorXcd& a, const Eigen::VectorXcd& b) { return (a - b).norm() / b.norm(); }

Eigen::VectorXcd circle_oracle(double k, double radius, double phi_d, const std::vector<double>& obs) {
  Eigen::VectorXcd u(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t m = 0; m < obs.size(); ++m)
    u(static_cast<Eigen::Index>(m)) = oracle::circle_far_field(k, radius, phi_d, obs[m]);
  return u;
}

const Eigen::Vector2d kLeft(-1.0, 0.0);

}  // namespace

TEST(IncidentField, Values) {
  EXPECT_EQ(incident_field(3.0, kLeft, Eigen::Vector2d::Zero()), cplx(1.0, 0.0));
  const cplx v = incident_field(1.0, kLeft, Eigen::Vector2d(1.0, 0.0));
  EXPECT_NEAR(std::abs(v - std::polar(1.0, -1.0)), 0.0, 1e-15);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 50; ++i)
    EXPECT_NEAR(std::abs(incident_field(u(rng), direction(u(rng)), Eigen::Vector2d(u(rng), u(rng)))), 1.0, 1e-14);
}

TEST(FarField, CircleMatchesSeriesOracle) {
  const auto obs = observation_angles(200);
  for (int k = 1; k <= 8; ++k) {
    const auto u = far_field_map(RadiusParams::circle(1.0), Eigen::Vector2d::Zero(), k, kLeft, obs, {128, 1.0});
    EXPECT_LE(rel_l2(u, circle_oracle(k, 1.0, std::numbers::pi, obs)), 1e-8) << "k = " << k;
  }
}

TEST(FarField, ShiftedCircleMatchesTranslatedOracle) {
  const auto obs = observation_angles(64);
  const Eigen::Vector2d c(0.3, -0.2);
  const double k = 3.0;
  const auto u = far_field_map(RadiusParams::circle(0.8), c, k, kLeft, obs, {128, 1.0});
  auto ref = circle_oracle(k, 0.8, std::numbers::pi, obs);
  // translation by c multiplies the far field by e^{ik c.(d - x)}
  for (std::size_t m = 0; m < obs.size(); ++m)
    ref(static_cast<Eigen::Index>(m)) *= std::polar(1.0, k * c.dot(kLeft - direction(obs[m])));
  EXPECT_LE(rel_l2(u, ref), 1e-8);
}

TEST(FarField, SelfConvergence) {
  const auto obs = observation_angles(100);
  for (double k : {1.0, 8.0}) {
    const auto a = far_field_map(RadiusParams::circle(1.0), Eigen::Vector2d::Zero(), k, kLeft, obs, {64, 1.0});
    const auto b = far_field_map(RadiusParams::circle(1.0), Eigen::Vector2d::Zero(), k, kLeft, obs, {128, 1.0});
    EXPECT_LT(rel_l2(a, b), 1e-10) << k;
  }
}

TEST(FarField, SpectralConvergenceOnPear) {
  const auto obs = observation_angles(50);
  const auto pear = pear_radius();
  const auto ref = far_field_map(pear, Eigen::Vector2d::Zero(), 4.0, kLeft, obs, {256, 1.0});
  double prev = 1.0;
  for (int n : {32, 64, 128}) {
    const double e = rel_l2(far_field_map(pear, Eigen::Vector2d::Zero(), 4.0, kLeft, obs, {n, 1.0}), ref);
    EXPECT_LT(e, prev / 10.0) << n;
    prev = e;
  }
  EXPECT_LT(prev, 1e-8);
}

TEST(FarField, ZeroDensityGivesZero) {
  const auto bd = discretize(RadiusParams::circle(1.0), 32);
  const auto u = far_field(bd, Eigen::VectorXcd::Zero(32), 2.0, 2.0, observation_angles(10));
  EXPECT_EQ(u.norm(), 0.0);
}

TEST(FarField, Reciprocity) {
  const auto obs = observation_angles(200);
  struct Shape {
    RadiusParams p;
    int nodes;
  };
  for (const auto& [p, nodes] : {Shape{RadiusParams::circle(1.0), 128}, Shape{pear_radius(), 128},
                                 Shape{flower_radius(), 256}})
    for (double k : {4.0, 8.0}) {
      const auto bd = discretize(p, nodes);
      EXPECT_LE(reciprocity_residual(bd, k, k, kLeft, obs), 1e-6) << "k = " << k << " nodes " << nodes;
    }
}

TEST(FarField, RotationFrameConsistency) {
  const double phi = 0.37;
  RadiusParams rotated = pear_radius();
  rotated.coefficients[5] = -0.3 * std::sin(3 * phi);
  rotated.coefficients[6] = 0.3 * std::cos(3 * phi);
  const std::vector<double> obs{0.1, 1.3, 2.9, 4.4};
  std::vector<double> obs_rot;
  for (double a : obs) obs_rot.push_back(a + phi);
  const double k = 5.0;
  const auto u = far_field_map(pear_radius(), Eigen::Vector2d::Zero(), k, kLeft, obs);
  const auto v = far_field_map(rotated, Eigen::Vector2d::Zero(), k, direction(std::numbers::pi + phi), obs_rot);
  EXPECT_LE(rel_l2(v, u), 1e-9);
}

TEST(Solve, ZeroRhsLinearityAndResidual) {
  const auto bd = discretize(pear_radius(), 64);
  const auto sys = assemble(bd, 3.0, 3.0);
  EXPECT_EQ(solve_density(sys, Eigen::VectorXcd(Eigen::VectorXcd::Zero(64))).norm(), 0.0);
  const auto rhs = dirichlet_rhs(bd, 3.0, kLeft);
  const auto phi = solve_density(sys, rhs);
  const auto phi2 = solve_density(sys, Eigen::VectorXcd(2.0 * rhs));
  EXPECT_LE((phi2 - 2.0 * phi).norm(), 1e-12 * phi.norm());
  EXPECT_LE((sys.matrix * phi - rhs).norm() / rhs.norm(), 1e-10);
}

TEST(Solve, BoundaryConditionOffNodes) {
  const auto p = RadiusParams::circle(1.0);
  const auto bd = discretize(p, 64);
  const auto sys = assemble(bd, 1.0, 1.0);
  const auto phi = solve_density(sys, dirichlet_rhs(bd, 1.0, kLeft));
  std::vector<double> t;
  for (int i = 0; i < 17; ++i) t.push_back(0.05 + kTwoPi * i / 17);
  EXPECT_LE(boundary_condition_residual(p, sys, phi, kLeft, t), 1e-10);
  const auto pear = pear_radius();
  const auto bdp = discretize(pear, 128);
  const auto sysp = assemble(bdp, 4.0, 4.0);
  const auto phip = solve_density(sysp, dirichlet_rhs(bdp, 4.0, kLeft));
  EXPECT_LE(boundary_condition_residual(pear, sysp, phip, kLeft, t), 1e-8);
}

TEST(Assemble, RejectsBadInput) {
  const auto bd = discretize(RadiusParams::circle(1.0), 8);
  EXPECT_THROW(assemble(bd, 1.0, 1.0), Error);
  const auto ok = discretize(RadiusParams::circle(1.0), 16);
  EXPECT_THROW(assemble(ok, 0.0, 1.0), Error);
}

TEST(Noise, RelativeLevelIsExact) {
  Eigen::VectorXcd u(50);
  for (int i = 0; i < 50; ++i) u(i) = cplx(std::cos(i), std::sin(0.3 * i) + 0.2);
  for (double delta : {0.0, 0.05, 0.3}) {
    const auto v = add_relative_noise(u, delta, 17);
    EXPECT_NEAR((v - u).norm() / u.norm(), delta, 1e-14);
  }
  EXPECT_EQ(add_relative_noise(u, 0.05, 17), add_relative_noise(u, 0.05, 17));
  EXPECT_NE(add_relative_noise(u, 0.05, 17), add_relative_noise(u, 0.05, 18));
}

TEST(Dataset, CleanEqualsNoisyWithoutNoiseAndIsDeterministic) {
  const auto basis = build_basis(CovarianceModel::build(0.05, 1.0));
  std::vector<BoundarySample> samples;
  for (int s = 1; s <= 2; ++s)
    samples.push_back(sample_boundary(RadiusParams::circle(1.0), basis, Eigen::Vector2d::Zero(), 100,
                                      derive_seed(1, s), s));
  const auto obs = observation_angles(20);
  const auto a = generate_dataset(samples, {1.0, 2.0}, obs, kLeft, 0.0, 5, {64, 1.0}, 1);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(a.clean[s][j], a.noisy[s][j]);
  const auto b = generate_dataset(samples, {1.0, 2.0}, obs, kLeft, 0.05, 5, {64, 1.0}, 1);
  const auto c = generate_dataset(samples, {1.0, 2.0}, obs, kLeft, 0.05, 5, {64, 1.0}, 2);
  for (std::size_t s = 0; s < 2; ++s)
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_EQ(b.noisy[s][j], c.noisy[s][j]);
      EXPECT_NEAR((b.noisy[s][j] - b.clean[s][j]).norm() / b.clean[s][j].norm(), 0.05, 1e-14);
    }
}

TEST(Dataset, AxisValidation) {
  const auto obs = observation_angles(4);
  auto kind_of = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::Io;
  };
  EXPECT_EQ(kind_of([&] { validate_dataset_axes({}, obs, kLeft); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([&] { validate_dataset_axes({1.0}, {}, kLeft); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([&] { validate_dataset_axes({2.0, 1.0}, obs, kLeft); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([&] { validate_dataset_axes({-1.0}, obs, kLeft); }), ErrorKind::InvalidArgument);
  EXPECT_EQ(kind_of([&] { validate_dataset_axes({1.0}, obs, Eigen::Vector2d(1.0, 1.0)); }),
            ErrorKind::InvalidArgument);
}
