#pragma once

// Fourier collocation on uniform parameter grids.
//
// Two grid layouts are supported:
//   Periodic: theta_j = 2 pi j / n, j = 0..n-1 (closed loops).
//   Capped:   theta_j = pi (j + 1/2) / n, j = 0..n-1 (pole-to-pole profiles).
//             Fields are extended across the poles by reflection with a
//             parity (+1 even, -1 odd) and differentiated as 2n-periodic data.

#include <cmath>
#include <complex>
#include <cstddef>
#include <memory>
#include <numbers>
#include <vector>

#include <Eigen/Dense>

#include "shrinkflow/errors.hpp"

namespace shrinkflow {

enum class Topology { Periodic, Capped };

enum class Parity { Even, Odd };

namespace detail {

// Trefethen's periodic spectral differentiation matrices on n points.
inline void periodic_diff_matrices(std::size_t n, Eigen::MatrixXd& d1, Eigen::MatrixXd& d2) {
  const double h = 2.0 * std::numbers::pi / static_cast<double>(n);
  const auto N = static_cast<Eigen::Index>(n);
  d1.setZero(N, N);
  d2.setZero(N, N);
  const bool even = n % 2 == 0;
  const double diag2 = even ? -std::numbers::pi * std::numbers::pi / (3.0 * h * h) - 1.0 / 6.0
                            : -std::numbers::pi * std::numbers::pi / (3.0 * h * h) + 1.0 / 12.0;
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = 0; j < N; ++j) {
      if (i == j) {
        d2(i, j) = diag2;
        continue;
      }
      const auto k = i - j;
      const double sign = (k % 2 == 0) ? 1.0 : -1.0;
      const double x = 0.5 * static_cast<double>(k) * h;
      if (even) {
        d1(i, j) = 0.5 * sign / std::tan(x);
        d2(i, j) = -0.5 * sign / (std::sin(x) * std::sin(x));
      } else {
        d1(i, j) = 0.5 * sign / std::sin(x);
        d2(i, j) = -0.5 * sign / (std::sin(x) * std::tan(x));
      }
    }
  }
}

// Fejer's first rule for int_0^pi g(theta) sin(theta) dtheta at the
// cell-centred nodes.
inline Eigen::VectorXd fejer_weights(std::size_t n) {
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::VectorXd w(N);
  for (Eigen::Index j = 0; j < N; ++j) {
    const double theta = std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(n);
    double s = 0.0;
    for (std::size_t k = 1; k <= n / 2; ++k) {
      const double kk = static_cast<double>(k);
      s += std::cos(2.0 * kk * theta) / (4.0 * kk * kk - 1.0);
    }
    w(j) = 2.0 / static_cast<double>(n) * (1.0 - 2.0 * s);
  }
  return w;
}

}  // namespace detail

/// Immutable collocation data shared by every field living on a grid.
class SpectralGrid {
 public:
  SpectralGrid(std::size_t n, Topology topology) : n_(n), topology_(topology) {
    require(n >= 4, ErrorCode::InvalidArgument, "spectral grid needs at least 4 points");
    const auto N = static_cast<Eigen::Index>(n);
    theta_.resize(N);
    if (topology == Topology::Periodic) {
      for (Eigen::Index j = 0; j < N; ++j) theta_(j) = 2.0 * std::numbers::pi * static_cast<double>(j) / static_cast<double>(n);
      detail::periodic_diff_matrices(n, d1_even_, d2_even_);
      d1_odd_ = d1_even_;
      d2_odd_ = d2_even_;
      weights_ = Eigen::VectorXd::Constant(N, 2.0 * std::numbers::pi / static_cast<double>(n));
    } else {
      for (Eigen::Index j = 0; j < N; ++j) theta_(j) = std::numbers::pi * (static_cast<double>(j) + 0.5) / static_cast<double>(n);
      Eigen::MatrixXd p1, p2;
      detail::periodic_diff_matrices(2 * n, p1, p2);
      d1_even_.resize(N, N);
      d2_even_.resize(N, N);
      d1_odd_.resize(N, N);
      d2_odd_.resize(N, N);
      // Extended node 2n-1-k is the mirror image of node k.
      for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index k = 0; k < N; ++k) {
          const Eigen::Index m = 2 * N - 1 - k;
          d1_even_(i, k) = p1(i, k) + p1(i, m);
          d2_even_(i, k) = p2(i, k) + p2(i, m);
          d1_odd_(i, k) = p1(i, k) - p1(i, m);
          d2_odd_(i, k) = p2(i, k) - p2(i, m);
        }
      }
      weights_ = detail::fejer_weights(n);
    }
  }

  std::size_t size() const { return n_; }
  Topology topology() const { return topology_; }
  const Eigen::VectorXd& theta() const { return theta_; }

  /// Parameter spacing (uniform in both layouts).
  double spacing() const {
    return topology_ == Topology::Periodic ? 2.0 * std::numbers::pi / static_cast<double>(n_)
                                           : std::numbers::pi / static_cast<double>(n_);
  }

  /// Quadrature weights in theta. Periodic: trapezoid. Capped: Fejer weights
  /// that already contain the sin(theta) factor of the polar area element.
  const Eigen::VectorXd& weights() const { return weights_; }

  const Eigen::MatrixXd& d1(Parity p = Parity::Even) const { return p == Parity::Even ? d1_even_ : d1_odd_; }
  const Eigen::MatrixXd& d2(Parity p = Parity::Even) const { return p == Parity::Even ? d2_even_ : d2_odd_; }

  Eigen::VectorXd diff(const Eigen::VectorXd& f, Parity p = Parity::Even) const { return d1(p) * f; }
  Eigen::VectorXd diff2(const Eigen::VectorXd& f, Parity p = Parity::Even) const { return d2(p) * f; }

 private:
  std::size_t n_;
  Topology topology_;
  Eigen::VectorXd theta_;
  Eigen::VectorXd weights_;
  Eigen::MatrixXd d1_even_, d2_even_, d1_odd_, d2_odd_;
};

inline std::shared_ptr<const SpectralGrid> make_grid(std::size_t n, Topology topology) {
  return std::make_shared<const SpectralGrid>(n, topology);
}

/// Trigonometric interpolant of periodic samples taken at
/// theta0 + 2 pi j / n, evaluable at any theta.
class TrigInterpolant {
 public:
  explicit TrigInterpolant(const Eigen::VectorXd& samples, double theta0 = 0.0)
      : n_(static_cast<std::size_t>(samples.size())), theta0_(theta0) {
    const auto N = samples.size();
    const std::size_t kmax = n_ / 2;
    coeffs_.assign(kmax + 1, std::complex<double>(0.0, 0.0));
    for (std::size_t k = 0; k <= kmax; ++k) {
      std::complex<double> c(0.0, 0.0);
      for (Eigen::Index j = 0; j < N; ++j) {
        const double a = -2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(j) / static_cast<double>(n_);
        c += samples(j) * std::complex<double>(std::cos(a), std::sin(a));
      }
      coeffs_[k] = c / static_cast<double>(n_);
    }
  }

  double operator()(double theta) const { return evaluate(theta, 0); }

  double derivative(double theta) const { return evaluate(theta, 1); }

  double mean() const { return coeffs_[0].real(); }

  /// Antiderivative of the non-constant part (zero mean, periodic).
  double zero_mean_antiderivative(double theta) const {
    theta -= theta0_;
    double s = 0.0;
    const std::size_t kmax = n_ / 2;
    for (std::size_t k = 1; k <= kmax; ++k) {
      const double kk = static_cast<double>(k);
      const double factor = (n_ % 2 == 0 && k == kmax) ? 1.0 : 2.0;
      // Re(c e^{ik theta}) integrates to Im(c e^{ik theta}) / k.
      const std::complex<double> e(std::cos(kk * theta), std::sin(kk * theta));
      s += factor * (coeffs_[k] * e).imag() / kk;
    }
    return s;
  }

 private:
  double evaluate(double theta, int order) const {
    theta -= theta0_;
    double s = order == 0 ? coeffs_[0].real() : 0.0;
    const std::size_t kmax = n_ / 2;
    for (std::size_t k = 1; k <= kmax; ++k) {
      const double kk = static_cast<double>(k);
      const std::complex<double> e(std::cos(kk * theta), std::sin(kk * theta));
      const std::complex<double> term = coeffs_[k] * e;
      // The Nyquist term is taken as its real (cosine) part only.
      const double factor = (n_ % 2 == 0 && k == kmax) ? 1.0 : 2.0;
      if (order == 0) {
        s += factor * term.real();
      } else {
        s += factor * (-kk * term.imag());
      }
    }
    return s;
  }

  std::size_t n_;
  double theta0_;
  std::vector<std::complex<double>> coeffs_;
};

}  // namespace shrinkflow
