#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "shrinkflow/dual.hpp"
#include "shrinkflow/optimize.hpp"
#include "shrinkflow/spectral.hpp"

using namespace shrinkflow;

namespace {

Eigen::VectorXd sample(const SpectralGrid& g, double (*f)(double)) {
  Eigen::VectorXd v(g.theta().size());
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f(g.theta()(i));
  return v;
}

}  // namespace

TEST(Spectral, PeriodicDerivativesOfTrigPolynomials) {
  for (std::size_t n : {16u, 17u, 64u}) {
    SpectralGrid g(n, Topology::Periodic);
    auto f = sample(g, [](double t) { return std::sin(3 * t) + 0.5 * std::cos(t); });
    auto df = sample(g, [](double t) { return 3 * std::cos(3 * t) - 0.5 * std::sin(t); });
    auto ddf = sample(g, [](double t) { return -9 * std::sin(3 * t) - 0.5 * std::cos(t); });
    EXPECT_LT((g.diff(f) - df).cwiseAbs().maxCoeff(), 1e-11) << n;
    EXPECT_LT((g.diff2(f) - ddf).cwiseAbs().maxCoeff(), 1e-9) << n;
  }
}

TEST(Spectral, CappedParityDerivatives) {
  SpectralGrid g(48, Topology::Capped);
  // sin is odd about both poles, cos is even.
  auto s = sample(g, [](double t) { return std::sin(t) + 0.2 * std::sin(3 * t); });
  auto ds = sample(g, [](double t) { return std::cos(t) + 0.6 * std::cos(3 * t); });
  auto dds = sample(g, [](double t) { return -std::sin(t) - 1.8 * std::sin(3 * t); });
  EXPECT_LT((g.diff(s, Parity::Odd) - ds).cwiseAbs().maxCoeff(), 1e-11);
  EXPECT_LT((g.diff2(s, Parity::Odd) - dds).cwiseAbs().maxCoeff(), 1e-9);
  auto c = sample(g, [](double t) { return std::cos(2 * t); });
  auto dc = sample(g, [](double t) { return -2 * std::sin(2 * t); });
  EXPECT_LT((g.diff(c, Parity::Even) - dc).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(Spectral, FejerWeightsIntegrateSinMeasure) {
  SpectralGrid g(40, Topology::Capped);
  // int_0^pi cos^2(t) sin(t) dt = 2/3, int_0^pi sin(t) dt = 2
  EXPECT_NEAR(g.weights().sum(), 2.0, 1e-14);
  auto c2 = sample(g, [](double t) { return std::cos(t) * std::cos(t); });
  EXPECT_NEAR(c2.dot(g.weights()), 2.0 / 3.0, 1e-14);
}

TEST(Spectral, TrigInterpolantReproducesBandLimitedData) {
  SpectralGrid g(32, Topology::Periodic);
  auto f = sample(g, [](double t) { return 1.0 + std::cos(2 * t) - 0.3 * std::sin(5 * t); });
  TrigInterpolant p(f);
  for (double t : {0.1, 1.7, 4.0}) {
    EXPECT_NEAR(p(t), 1.0 + std::cos(2 * t) - 0.3 * std::sin(5 * t), 1e-13);
    EXPECT_NEAR(p.derivative(t), -2 * std::sin(2 * t) - 1.5 * std::cos(5 * t), 1e-12);
    EXPECT_NEAR(p.zero_mean_antiderivative(t) - p.zero_mean_antiderivative(0.0),
                0.5 * std::sin(2 * t) + 0.06 * (std::cos(5 * t) - 1.0), 1e-13);
  }
  EXPECT_NEAR(p.mean(), 1.0, 1e-14);
}

TEST(Spectral, TrigInterpolantWithOffset) {
  const double t0 = 0.3;
  Eigen::VectorXd v(20);
  for (int j = 0; j < 20; ++j) v(j) = std::cos(t0 + 2 * std::numbers::pi * j / 20.0);
  TrigInterpolant p(v, t0);
  EXPECT_NEAR(p(1.234), std::cos(1.234), 1e-13);
}

TEST(Spectral, RejectsTinyGrids) { EXPECT_THROW(SpectralGrid(3, Topology::Periodic), Error); }

TEST(Dual, ProductQuotientAndTranscendentals) {
  using D = Dual<2>;
  const D x = D::variable(1.5, 0), y = D::variable(-0.7, 1);
  const D f = exp(x * y) / sqrt(x + 2.0);
  const double fv = std::exp(1.5 * -0.7) / std::sqrt(3.5);
  EXPECT_NEAR(f.v, fv, 1e-15);
  EXPECT_NEAR(f.d[0], fv * (-0.7 - 0.5 / 3.5), 1e-14);
  EXPECT_NEAR(f.d[1], fv * 1.5, 1e-14);
}

TEST(Optimize, NelderMeadFindsRosenbrockMinimum) {
  auto rosen = [](const Eigen::VectorXd& v) {
    return 100 * std::pow(v(1) - v(0) * v(0), 2) + std::pow(1 - v(0), 2);
  };
  NelderMeadOptions opt;
  opt.x_tol = 1e-10;
  auto r = nelder_mead(rosen, Eigen::Vector2d(-1.2, 1.0), opt);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.x(0), 1.0, 1e-7);
  EXPECT_NEAR(r.x(1), 1.0, 1e-7);
}

TEST(Optimize, BisectionAndBracketFailure) {
  auto r = bisect([](double x) { return x * x - 2.0; }, 0.0, 2.0);
  EXPECT_NEAR(r.x, std::numbers::sqrt2, 1e-12);
  try {
    bisect([](double x) { return x * x + 1.0; }, -1.0, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BracketFailure);
  }
}

TEST(Optimize, LineFit) {
  auto fit = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
  EXPECT_NEAR(fit.slope, 2.0, 1e-14);
  EXPECT_NEAR(fit.intercept, 1.0, 1e-14);
}
