#pragma once

// Truncated Karhunen-Loeve expansion of the radial fluctuation
//
//   dr(theta) = sqrt(l_0) xi_0 phi_0 + sum_{j=1}^{N_KL} sqrt(l_j) (xi_js phi_js + xi_jc phi_jc)
//
// with phi_0 = 1/sqrt(2 pi), phi_jc = cos(j theta)/sqrt(pi), phi_js = sin(j theta)/sqrt(pi).
// xi is stored as (xi_0, xi_1s, xi_1c, xi_2s, xi_2c, ...).

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "randscat/covariance.hpp"
#include "randscat/error.hpp"
#include "randscat/geometry.hpp"

namespace randscat {

enum class ModeKind { Constant, Cos, Sin };

inline double eigenfunction_eval(int j, ModeKind kind, double theta) {
  if ((j == 0) != (kind == ModeKind::Constant) || j < 0)
    fail(ErrorKind::InvalidMode, "mode (" + std::to_string(j) + ", " +
                                     (kind == ModeKind::Constant ? "const" :
                                      kind == ModeKind::Cos      ? "cos" : "sin") + ")");
  static const double inv_sqrt_2pi = 1.0 / std::sqrt(kTwoPi);
  static const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  switch (kind) {
    case ModeKind::Constant: return inv_sqrt_2pi;
    case ModeKind::Cos: return inv_sqrt_pi * std::cos(j * theta);
    case ModeKind::Sin: return inv_sqrt_pi * std::sin(j * theta);
  }
  return 0.0;
}

struct KLBasis {
  std::vector<double> lambda;  // grouped by frequency, lambda[0..n_modes]
  int n_modes = 0;             // N_KL
  double truncation_threshold = 1e-6;

  std::size_t n_xi() const { return 2 * static_cast<std::size_t>(n_modes) + 1; }

  /// FNV-1a over the bit patterns of the retained eigenvalues; identifies the
  /// basis in sample sidecars.
  std::string hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffU;
        h *= 1099511628211ULL;
      }
    };
    mix(static_cast<std::uint64_t>(n_modes));
    for (double l : lambda) {
      std::uint64_t bits;
      std::memcpy(&bits, &l, sizeof bits);
      mix(bits);
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }
};

/// Keeps the leading frequencies j = 0..N_KL with lambda_j >= threshold.
inline KLBasis build_basis(const CovarianceModel& model, double threshold = 1e-6) {
  KLBasis basis;
  basis.truncation_threshold = threshold;
  for (double l : model.lambda) {
    if (!(l >= threshold)) break;
    basis.lambda.push_back(l);
  }
  if (basis.lambda.empty())
    fail(ErrorKind::EmptyBasis, "no eigenvalue passes threshold " + std::to_string(threshold));
  basis.n_modes = static_cast<int>(basis.lambda.size()) - 1;
  return basis;
}

/// splitmix64 finalizer, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of stream `stream` under base seed `seed`; stable across runs and
/// independent of scheduling order.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream = 0) {
  return mix_seed(mix_seed(mix_seed(seed) ^ stream) ^ (substream * 0x632be59bd9b4e019ULL));
}

inline std::vector<double> draw_xi(const KLBasis& basis, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> xi(basis.n_xi());
  for (auto& v : xi) v = normal(rng);
  return xi;
}

/// Trigonometric coefficients of the fluctuation for given xi, in RadiusParams order.
inline RadiusParams fluctuation_params(const KLBasis& basis, std::span<const double> xi) {
  if (xi.size() != basis.n_xi())
    fail(ErrorKind::InvalidArgument, "xi has " + std::to_string(xi.size()) + " entries, basis needs " +
                                         std::to_string(basis.n_xi()));
  std::vector<double> c(basis.n_xi(), 0.0);
  c[0] = std::sqrt(basis.lambda[0]) * xi[0] / std::sqrt(kTwoPi);
  const double inv_sqrt_pi = 1.0 / std::sqrt(std::numbers::pi);
  for (int j = 1; j <= basis.n_modes; ++j) {
    const double amp = std::sqrt(basis.lambda[static_cast<std::size_t>(j)]) * inv_sqrt_pi;
    const double xs = xi[2 * static_cast<std::size_t>(j) - 1];
    const double xc = xi[2 * static_cast<std::size_t>(j)];
    c[2 * static_cast<std::size_t>(j) - 1] = amp * xc;  // cos coefficient a_j
    c[2 * static_cast<std::size_t>(j)] = amp * xs;      // sin coefficient b_j
  }
  return RadiusParams(std::move(c));
}

/// Direct evaluation of the truncated expansion at the given angles.
inline std::vector<double> expand_fluctuation(const KLBasis& basis, std::span<const double> xi,
                                              std::span<const double> thetas) {
  if (xi.size() != basis.n_xi())
    fail(ErrorKind::InvalidArgument, "xi size does not match basis");
  std::vector<double> dr(thetas.size(), 0.0);
  for (std::size_t i = 0; i < thetas.size(); ++i) {
    const double t = thetas[i];
    double v = std::sqrt(basis.lambda[0]) * xi[0] * eigenfunction_eval(0, ModeKind::Constant, t);
    for (int j = 1; j <= basis.n_modes; ++j) {
      const double s = std::sqrt(basis.lambda[static_cast<std::size_t>(j)]);
      v += s * (xi[2 * static_cast<std::size_t>(j) - 1] * eigenfunction_eval(j, ModeKind::Sin, t) +
                xi[2 * static_cast<std::size_t>(j)] * eigenfunction_eval(j, ModeKind::Cos, t));
    }
    dr[i] = v;
  }
  return dr;
}

inline std::vector<double> sample_fluctuation(const KLBasis& basis, std::span<const double> thetas,
                                              std::uint64_t seed) {
  const auto xi = draw_xi(basis, seed);
  return expand_fluctuation(basis, xi, thetas);
}

struct BoundarySample {
  int realization_id = 0;
  std::uint64_t seed = 0;
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  std::vector<double> xi;
  std::vector<double> theta;
  std::vector<double> delta_r;
  std::vector<double> radius;
  RadiusParams params;  // baseline + fluctuation, exact trigonometric form
};

/// Perturbed boundary r_true + dr on an n_theta grid. Rejects samples whose
/// radius is not positive at every grid node and on a fine check grid.
inline BoundarySample sample_boundary(const RadiusParams& baseline, const KLBasis& basis,
                                      const Eigen::Vector2d& center, int n_theta, std::uint64_t seed,
                                      int realization_id = 0) {
  BoundarySample s;
  s.realization_id = realization_id;
  s.seed = seed;
  s.center = center;
  s.xi = draw_xi(basis, seed);
  s.theta = uniform_grid(n_theta);
  s.delta_r = expand_fluctuation(basis, s.xi, s.theta);
  s.params = baseline + fluctuation_params(basis, s.xi);
  s.radius.resize(s.theta.size());
  for (std::size_t i = 0; i < s.theta.size(); ++i) {
    s.radius[i] = radius_eval(baseline, s.theta[i]) + s.delta_r[i];
    if (!(s.radius[i] > 0.0))
      fail(ErrorKind::NonPositiveRadius, "sample " + std::to_string(realization_id) + " (seed " +
                                             std::to_string(seed) + ") has r(" +
                                             std::to_string(s.theta[i]) + ") = " +
                                             std::to_string(s.radius[i]));
  }
  require_positive(s.params, std::max(n_theta, 400));
  return s;
}

}  // namespace randscat
