#pragma once

// Discrete Lyapunov-Schmidt reduction at a shrinker: kernel projection Pi,
// the inverse Psi of Nbar = Pi + N, and the reduced function f = F o Psi on
// kernel coordinates.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "shrinkflow/errors.hpp"
#include "shrinkflow/geometry.hpp"
#include "shrinkflow/graph.hpp"
#include "shrinkflow/shrinker.hpp"

namespace shrinkflow {

struct ReductionOptions {
  double kernel_tol = 1e-8;
  // when positive, the m eigenfields of smallest |lambda| act as the kernel
  std::size_t synthetic_kernel = 0;
  std::size_t k_max = 24;
  double newton_tol = 1e-10;
  int max_iter = 30;
  double basin = 0.5;                   // Psi refuses ||v||_Q beyond this
  double singular_threshold = 1e-10;    // on |eigenvalue| of Pi + L_u
  double fd_step = 1e-4;                // centred differences in kernel coordinates
};

struct ReducedValue {
  double f = 0.0;
  Eigen::VectorXd grad;  // in Q-orthonormal kernel coordinates
};

class Reduction {
 public:
  Reduction(Surface base, ReductionOptions opt) : base_(std::move(base)), opt_(opt), q_(q_weights(base_)) {
    const auto sd = spectrum(base_, opt_.k_max);
    std::vector<Eigen::Index> idx;
    if (opt_.synthetic_kernel > 0) {
      require(opt_.synthetic_kernel <= static_cast<std::size_t>(sd.eigenvalues.size()), ErrorCode::InvalidArgument,
              "synthetic kernel larger than the computed spectrum");
      std::vector<Eigen::Index> order(static_cast<std::size_t>(sd.eigenvalues.size()));
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        return std::abs(sd.eigenvalues(a)) < std::abs(sd.eigenvalues(b));
      });
      idx.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(opt_.synthetic_kernel));
      std::sort(idx.begin(), idx.end());
    } else {
      for (Eigen::Index i = 0; i < sd.eigenvalues.size(); ++i)
        if (std::abs(sd.eigenvalues(i)) < opt_.kernel_tol) idx.push_back(i);
    }
    const auto N = static_cast<Eigen::Index>(base_.size());
    kernel_.resize(N, static_cast<Eigen::Index>(idx.size()));
    kernel_eigenvalues_.resize(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      kernel_.col(static_cast<Eigen::Index>(j)) = sd.eigenfields.col(idx[j]);
      kernel_eigenvalues_(static_cast<Eigen::Index>(j)) = sd.eigenvalues(idx[j]);
    }
    projection_ = kernel_ * kernel_.transpose() * q_.asDiagonal();
  }

  const Surface& base() const { return base_; }
  const ReductionOptions& options() const { return opt_; }
  const Eigen::MatrixXd& kernel() const { return kernel_; }
  const Eigen::VectorXd& kernel_eigenvalues() const { return kernel_eigenvalues_; }
  const Eigen::MatrixXd& projection() const { return projection_; }
  Eigen::Index dim() const { return kernel_.cols(); }
  bool synthetic() const { return opt_.synthetic_kernel > 0; }
  std::size_t cache_size() const { return cache_.size(); }

  /// Kernel coordinates c = K^T W u of Pi u.
  Eigen::VectorXd coordinates(const Eigen::VectorXd& u) const { return kernel_.transpose() * q_.asDiagonal() * u; }

  Eigen::VectorXd nbar(const Eigen::VectorXd& u) const { return projection_ * u + gradient_operator(base_, u); }

  /// u with Nbar(u) = v, by full Newton from u = 0.
  Eigen::VectorXd psi(const Eigen::VectorXd& v) {
    require(static_cast<std::size_t>(v.size()) == base_.size(), ErrorCode::GridMismatch, "psi: field size does not match base");
    for (const auto& [key, val] : cache_)
      if (key.size() == v.size() && key == v) return val;
    require(q_norm(base_, v) < opt_.basin, ErrorCode::NoConvergence, "psi: ||v||_Q is outside the Newton basin");
    Eigen::VectorXd u = Eigen::VectorXd::Zero(v.size());
    Eigen::VectorXd r = nbar(u) - v;
    int it = 0;
    while (q_norm(base_, r) >= opt_.newton_tol) {
      require(it < opt_.max_iter, ErrorCode::NoConvergence, "psi: Newton did not converge");
      const Eigen::MatrixXd J = projection_ + linearization(base_, u);
      if (it == 0) {
        const double m = detail::min_abs_eigenvalue(J);
        require(m >= opt_.singular_threshold, ErrorCode::SingularLinearization,
                "psi: Pi + L has |eigenvalue| " + std::to_string(m));
      }
      u -= J.partialPivLu().solve(r);
      r = nbar(u) - v;
      ++it;
    }
    if (cache_.size() == kCacheLimit) cache_.erase(cache_.begin());
    cache_.emplace_back(v, u);
    return u;
  }

  /// f(c) = F(Psi(K c)) and its gradient by centred differences.
  ReducedValue reduced_function(const Eigen::VectorXd& c) {
    require(c.size() == dim(), ErrorCode::InvalidArgument, "reduced_function: wrong number of kernel coordinates");
    ReducedValue out;
    auto f = [&](const Eigen::VectorXd& x) { return graph_area(base_, psi(kernel_ * x)); };
    out.f = f(c);
    out.grad = Eigen::VectorXd::Zero(dim());
    for (Eigen::Index i = 0; i < dim(); ++i) {
      Eigen::VectorXd e = Eigen::VectorXd::Zero(dim());
      e(i) = opt_.fd_step;
      out.grad(i) = (f(c + e) - f(c - e)) / (2.0 * opt_.fd_step);
    }
    return out;
  }

 private:
  Surface base_;
  ReductionOptions opt_;
  Eigen::VectorXd q_;
  Eigen::MatrixXd kernel_;
  Eigen::VectorXd kernel_eigenvalues_;
  Eigen::MatrixXd projection_;
  static constexpr std::size_t kCacheLimit = 512;
  std::vector<std::pair<Eigen::VectorXd, Eigen::VectorXd>> cache_;
};

inline Reduction build_reduction(const Surface& base, const ReductionOptions& opt = {}) { return Reduction(base, opt); }

/// max |Pi^2 - Pi| and max |W Pi - (W Pi)^T|, relative to max |W Pi|.
inline std::pair<double, double> projection_defects(const Reduction& red) {
  const Eigen::MatrixXd& P = red.projection();
  const double idem = P.size() ? (P * P - P).cwiseAbs().maxCoeff() : 0.0;
  if (red.dim() == 0) return {idem, 0.0};
  return {idem, q_asymmetry(P, q_weights(red.base()))};
}

// ---- ratio ladders ---------------------------------------------------------

// ||N(u)||_Q below this is roundoff at a critical point
inline constexpr double kCriticalFloor = 1e-12;

/// |F(u) - f(Pi u)| / ||N(u)||_Q^2, zero at a critical u by convention.
inline double reduced_F_ratio(Reduction& red, const Eigen::VectorXd& u) {
  const double n = q_norm(red.base(), gradient_operator(red.base(), u));
  if (n < kCriticalFloor) return 0.0;
  const double Fu = graph_area(red.base(), u);
  const double f = graph_area(red.base(), red.psi(red.kernel() * red.coordinates(u)));
  return std::abs(Fu - f) / (n * n);
}

/// |grad_K f|(Pi u) / ||N(u)||_Q, zero at a critical u or with an empty kernel.
inline double reduced_grad_ratio(Reduction& red, const Eigen::VectorXd& u) {
  const double n = q_norm(red.base(), gradient_operator(red.base(), u));
  if (n < kCriticalFloor || red.dim() == 0) return 0.0;
  return red.reduced_function(red.coordinates(u)).grad.norm() / n;
}

struct RatioLadder {
  std::vector<double> eps;
  std::vector<double> F_ratio, grad_ratio, remainder_ratio;
  double F_spread = 1.0, grad_spread = 1.0, remainder_spread = 1.0;  // max / min over the ladder
};

inline double ladder_spread(const std::vector<double>& v) {
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  if (v.empty() || *hi == 0.0) return 1.0;
  return *lo > 0.0 ? *hi / *lo : std::numeric_limits<double>::infinity();
}

/// Ratios along u_eps = eps * u, plus the Frechet remainder of N at 0 in the
/// direction u. Default ladder 0.1, 0.05, 0.025, 0.0125.
inline RatioLadder ratio_ladder(Reduction& red, const Eigen::VectorXd& u,
                                const std::vector<double>& eps = {0.1, 0.05, 0.025, 0.0125}) {
  RatioLadder lad;
  lad.eps = eps;
  for (double e : eps) {
    lad.F_ratio.push_back(reduced_F_ratio(red, e * u));
    lad.grad_ratio.push_back(reduced_grad_ratio(red, e * u));
  }
  lad.remainder_ratio = frechet_remainder(red.base(), Eigen::VectorXd::Zero(u.size()), u, eps).ratios;
  lad.F_spread = ladder_spread(lad.F_ratio);
  lad.grad_spread = red.dim() ? ladder_spread(lad.grad_ratio) : 1.0;
  lad.remainder_spread = ladder_spread(lad.remainder_ratio);
  return lad;
}

inline nlohmann::json to_json(const RatioLadder& lad) {
  return {{"eps", lad.eps},
          {"reduced_F_ratio", lad.F_ratio},
          {"reduced_grad_ratio", lad.grad_ratio},
          {"remainder_ratio", lad.remainder_ratio},
          {"F_spread", lad.F_spread},
          {"grad_spread", lad.grad_spread},
          {"remainder_spread", lad.remainder_spread}};
}

// ---- reduced landscape -------------------------------------------------------

struct ReducedSample {
  Eigen::VectorXd c;
  double f = 0.0;
  double grad_norm = 0.0;
};

/// f on a tensor grid over [-extent, extent]^m for m <= 2, and along each
/// coordinate axis otherwise.
inline std::vector<ReducedSample> reduced_samples(Reduction& red, double extent, int points_per_axis) {
  require(points_per_axis >= 2 && extent > 0.0, ErrorCode::InvalidArgument, "reduced_samples needs >= 2 points and extent > 0");
  const Eigen::Index m = red.dim();
  std::vector<ReducedSample> out;
  auto node = [&](int i) { return -extent + 2.0 * extent * i / (points_per_axis - 1); };
  auto add = [&](const Eigen::VectorXd& c) {
    const auto rv = red.reduced_function(c);
    out.push_back({c, rv.f, rv.grad.norm()});
  };
  if (m == 1) {
    for (int i = 0; i < points_per_axis; ++i) add(Eigen::VectorXd::Constant(1, node(i)));
  } else if (m == 2) {
    for (int i = 0; i < points_per_axis; ++i)
      for (int j = 0; j < points_per_axis; ++j) add(Eigen::Vector2d(node(i), node(j)));
  } else {
    for (Eigen::Index a = 0; a < m; ++a)
      for (int i = 0; i < points_per_axis; ++i) {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(m);
        c(a) = node(i);
        add(c);
      }
  }
  return out;
}

inline void write_reduced_csv(std::ostream& os, const std::vector<ReducedSample>& samples, bool synthetic) {
  const Eigen::Index m = samples.empty() ? 0 : samples.front().c.size();
  for (Eigen::Index i = 0; i < m; ++i) os << 'c' << i << ',';
  os << "f,grad_norm,synthetic_kernel\n" << std::setprecision(17);
  for (const auto& s : samples) {
    for (Eigen::Index i = 0; i < m; ++i) os << s.c(i) << ',';
    os << s.f << ',' << s.grad_norm << ',' << (synthetic ? 1 : 0) << '\n';
  }
}

}  // namespace shrinkflow
