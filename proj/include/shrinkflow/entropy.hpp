#pragma once

#include <cmath>
#include <cstddef>
#include <limits>

#include <Eigen/Dense>

#include "shrinkflow/geometry.hpp"
#include "shrinkflow/optimize.hpp"

namespace shrinkflow {

struct EntropySearchConfig {
  double log_t0_min = -3.0;
  double log_t0_max = 3.0;
  double x0_bound = 5.0;
  std::size_t grid_points = 11;  // per search dimension
  double simplex_tol = 1e-8;
  std::size_t max_iter = 4000;
};

struct EntropyResult {
  double lambda = 0.0;
  double t0 = 1.0;
  Eigen::Vector2d x0 = Eigen::Vector2d::Zero();
  bool converged = false;
};

/// sup over t0 > 0 and x0 of F(t0 M + x0): coarse grid, then Nelder-Mead.
/// Surfaces of revolution are searched over axial translations only.
inline EntropyResult entropy(const Surface& M, const EntropySearchConfig& cfg = {}) {
  require(cfg.grid_points >= 2, ErrorCode::InvalidArgument, "entropy grid needs at least 2 points per axis");
  require(cfg.log_t0_max > cfg.log_t0_min && cfg.x0_bound > 0.0, ErrorCode::InvalidArgument, "empty entropy search region");
  const bool curve = M.kind() == SurfaceKind::Curve;
  const Eigen::Index dim = curve ? 3 : 2;

  auto unpack = [&](const Eigen::VectorXd& v, double& t0, Eigen::Vector2d& x0) {
    t0 = std::exp(v(0));
    x0 = curve ? Eigen::Vector2d(v(1), v(2)) : Eigen::Vector2d(0.0, v(1));
  };
  auto objective = [&](const Eigen::VectorXd& v) {
    double t0;
    Eigen::Vector2d x0;
    unpack(v, t0, x0);
    return -gaussian_area_transformed(M, t0, x0);
  };

  const std::size_t m = cfg.grid_points;
  auto node = [&](std::size_t k, double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(m - 1);
  };
  Eigen::VectorXd best(dim), v(dim);
  double best_val = std::numeric_limits<double>::infinity();
  const std::size_t total = curve ? m * m * m : m * m;
  for (std::size_t idx = 0; idx < total; ++idx) {
    std::size_t rest = idx;
    v(0) = node(rest % m, cfg.log_t0_min, cfg.log_t0_max);
    rest /= m;
    for (Eigen::Index d = 1; d < dim; ++d) {
      v(d) = node(rest % m, -cfg.x0_bound, cfg.x0_bound);
      rest /= m;
    }
    const double f = objective(v);
    if (f < best_val) {
      best_val = f;
      best = v;
    }
  }

  NelderMeadOptions opt;
  opt.initial_step = 0.5 * (cfg.log_t0_max - cfg.log_t0_min) / static_cast<double>(m - 1);
  opt.x_tol = cfg.simplex_tol;
  opt.max_iter = cfg.max_iter;
  const auto res = nelder_mead(objective, best, opt);

  EntropyResult out;
  out.lambda = -res.value;
  unpack(res.x, out.t0, out.x0);
  out.converged = res.converged;
  return out;
}

}  // namespace shrinkflow
