#pragma once

// Star-shaped boundaries r(theta)(cos theta, sin theta) + x0 with a truncated
// trigonometric radius.  Coefficient order is fixed everywhere (Jacobian
// columns, JSON, averaging):
//
//   p = (a0, a1, b1, a2, b2, ..., aN, bN),   r = a0 + sum_m a_m cos(m t) + b_m sin(m t)

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "randscat/error.hpp"

namespace randscat {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct RadiusParams {
  std::vector<double> coefficients{1.0};

  RadiusParams() = default;
  explicit RadiusParams(std::vector<double> c) : coefficients(std::move(c)) {
    if (coefficients.empty() || coefficients.size() % 2 == 0)
      fail(ErrorKind::InvalidArgument,
           "radius parameter vector must have odd length 2*N_r+1, got " +
               std::to_string(coefficients.size()));
  }

  /// Circle of radius r0 expressed at Fourier order `order`.
  static RadiusParams circle(double r0, int order = 0) {
    std::vector<double> c(2 * static_cast<std::size_t>(order) + 1, 0.0);
    c[0] = r0;
    return RadiusParams(std::move(c));
  }

  std::size_t size() const { return coefficients.size(); }
  int order() const { return static_cast<int>((coefficients.size() - 1) / 2); }

  double a(int m) const { return m == 0 ? coefficients[0] : coefficients[2 * m - 1]; }
  double b(int m) const { return coefficients[2 * m]; }
  double& a(int m) { return m == 0 ? coefficients[0] : coefficients[2 * m - 1]; }
  double& b(int m) { return coefficients[2 * m]; }

  /// Same shape expressed at a (possibly higher) order; truncates if lower.
  RadiusParams with_order(int order) const {
    std::vector<double> c(2 * static_cast<std::size_t>(order) + 1, 0.0);
    for (std::size_t i = 0; i < std::min(c.size(), coefficients.size()); ++i) c[i] = coefficients[i];
    return RadiusParams(std::move(c));
  }

  friend bool operator==(const RadiusParams&, const RadiusParams&) = default;
};

inline RadiusParams operator+(const RadiusParams& lhs, const RadiusParams& rhs) {
  const int order = std::max(lhs.order(), rhs.order());
  RadiusParams out = lhs.with_order(order);
  for (std::size_t i = 0; i < rhs.size(); ++i) out.coefficients[i] += rhs.coefficients[i];
  return out;
}

/// Value, first and second theta-derivative of the radius.
struct RadiusJet {
  double r;
  double dr;
  double d2r;
};

inline RadiusJet radius_jet(const RadiusParams& p, double theta) {
  RadiusJet jet{p.coefficients[0], 0.0, 0.0};
  for (int m = 1; m <= p.order(); ++m) {
    const double c = std::cos(m * theta);
    const double s = std::sin(m * theta);
    const double am = p.a(m);
    const double bm = p.b(m);
    jet.r += am * c + bm * s;
    jet.dr += m * (-am * s + bm * c);
    jet.d2r += -static_cast<double>(m * m) * (am * c + bm * s);
  }
  return jet;
}

inline double radius_eval(const RadiusParams& p, double theta) { return radius_jet(p, theta).r; }

/// theta_i = 2 pi i / n, i = 0..n-1.
inline std::vector<double> uniform_grid(int n) {
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = kTwoPi * i / n;
  return t;
}

inline std::vector<double> radius_on_grid(const RadiusParams& p, std::span<const double> thetas) {
  std::vector<double> r(thetas.size());
  for (std::size_t i = 0; i < thetas.size(); ++i) r[i] = radius_eval(p, thetas[i]);
  return r;
}

inline std::vector<double> radius_on_grid(const RadiusParams& p, int n) {
  const auto t = uniform_grid(n);
  return radius_on_grid(p, t);
}

/// Trigonometric basis matrix B with B(i, q) = d r(theta_i) / d p_q.
inline Eigen::MatrixXd radius_basis(int order, std::span<const double> thetas) {
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(thetas.size()), 2 * order + 1);
  for (Eigen::Index i = 0; i < basis.rows(); ++i) {
    const double t = thetas[static_cast<std::size_t>(i)];
    basis(i, 0) = 1.0;
    for (int m = 1; m <= order; ++m) {
      basis(i, 2 * m - 1) = std::cos(m * t);
      basis(i, 2 * m) = std::sin(m * t);
    }
  }
  return basis;
}

/// Throws NonPositiveRadius naming the first offending node.
inline void require_positive(const RadiusParams& p, int n_check = 400) {
  const auto t = uniform_grid(n_check);
  for (double theta : t) {
    const double r = radius_eval(p, theta);
    if (!(r > 0.0))
      fail(ErrorKind::NonPositiveRadius,
           "r(" + std::to_string(theta) + ") = " + std::to_string(r));
  }
}

inline bool is_positive(const RadiusParams& p, int n_check = 400) {
  const auto t = uniform_grid(n_check);
  for (double theta : t)
    if (!(radius_eval(p, theta) > 0.0)) return false;
  return true;
}

struct BoundaryDiscretization {
  int n_nodes = 0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  std::vector<double> theta;
  Eigen::Matrix2Xd points;
  Eigen::Matrix2Xd derivative;   // x'(theta)
  Eigen::Matrix2Xd derivative2;  // x''(theta)
  Eigen::Matrix2Xd normals;      // outward unit normals
  Eigen::VectorXd jacobian;      // |x'(theta)|
};

/// Samples the boundary on N uniform nodes using the analytic derivatives of
/// the trigonometric radius. N must be even (trigonometric Nystrom rule).
inline BoundaryDiscretization discretize(const RadiusParams& p, const Eigen::Vector2d& center,
                                         int n_nodes) {
  if (n_nodes < 2 || n_nodes % 2 != 0)
    fail(ErrorKind::InvalidArgument, "node count must be even, got " + std::to_string(n_nodes));
  BoundaryDiscretization bd;
  bd.n_nodes = n_nodes;
  bd.center = center;
  bd.theta = uniform_grid(n_nodes);
  bd.points.resize(2, n_nodes);
  bd.derivative.resize(2, n_nodes);
  bd.derivative2.resize(2, n_nodes);
  bd.normals.resize(2, n_nodes);
  bd.jacobian.resize(n_nodes);
  for (int i = 0; i < n_nodes; ++i) {
    const double t = bd.theta[static_cast<std::size_t>(i)];
    const RadiusJet jet = radius_jet(p, t);
    if (!(jet.r > 0.0))
      fail(ErrorKind::NonPositiveRadius,
           "r(" + std::to_string(t) + ") = " + std::to_string(jet.r));
    const Eigen::Vector2d e(std::cos(t), std::sin(t));
    const Eigen::Vector2d e_perp(-std::sin(t), std::cos(t));
    bd.points.col(i) = center + jet.r * e;
    bd.derivative.col(i) = jet.dr * e + jet.r * e_perp;
    bd.derivative2.col(i) = (jet.d2r - jet.r) * e + 2.0 * jet.dr * e_perp;
    const double speed = bd.derivative.col(i).norm();
    bd.jacobian(i) = speed;
    bd.normals.col(i) = Eigen::Vector2d(bd.derivative(1, i), -bd.derivative(0, i)) / speed;
  }
  return bd;
}

inline BoundaryDiscretization discretize(const RadiusParams& p, int n_nodes) {
  return discretize(p, Eigen::Vector2d::Zero(), n_nodes);
}

/// Discrete Fourier coefficients of samples on a uniform grid, truncated at
/// `order`. Exact for trigonometric polynomials of degree <= order when the
/// grid has at least 2*order+2 nodes.
inline RadiusParams fourier_project(std::span<const double> values, int order) {
  const auto n = static_cast<int>(values.size());
  if (order < 0 || n < 2 * order + 2)
    fail(ErrorKind::GridTooCoarse, "need at least " + std::to_string(2 * order + 2) +
                                       " samples for order " + std::to_string(order) + ", got " +
                                       std::to_string(n));
  std::vector<double> c(2 * static_cast<std::size_t>(order) + 1, 0.0);
  for (int i = 0; i < n; ++i) c[0] += values[static_cast<std::size_t>(i)];
  c[0] /= n;
  for (int m = 1; m <= order; ++m) {
    double sa = 0.0;
    double sb = 0.0;
    for (int i = 0; i < n; ++i) {
      // exact index reduction keeps large m*i well conditioned
      const double t = kTwoPi * static_cast<double>((static_cast<long long>(m) * i) % n) / n;
      sa += values[static_cast<std::size_t>(i)] * std::cos(t);
      sb += values[static_cast<std::size_t>(i)] * std::sin(t);
    }
    c[2 * static_cast<std::size_t>(m) - 1] = 2.0 * sa / n;
    c[2 * static_cast<std::size_t>(m)] = 2.0 * sb / n;
  }
  return RadiusParams(std::move(c));
}

/// Discrete L2[0, 2pi) norm squared of samples on a uniform grid.
inline double grid_l2_squared(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v * v;
  return s * kTwoPi / static_cast<double>(values.size());
}

}  // namespace randscat
