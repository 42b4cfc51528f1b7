#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "shrinkflow/loja.hpp"

using namespace shrinkflow;

namespace {

const double kSqrt2 = std::numbers::sqrt2;
const double kFSigma = 2 * kSqrt2 * std::numbers::pi * std::exp(-0.5);

const Surface& circle() {
  static const Surface c = build_circle(kSqrt2, 64);
  return c;
}

// eps cos 2theta at enclosed area 2 pi, run until |grad| < 1e-6
const FlowTrajectory& converging_run() {
  static const FlowTrajectory traj = [] {
    const auto& c = circle();
    FlowOptions o;
    o.converge_tol = 1e-6;
    o.snapshot_stride = 50;
    const Eigen::VectorXd u0 = (0.05 * (2 * c.grid().theta().array()).cos() + (std::sqrt(2 - 0.00125) - kSqrt2)).matrix();
    return run_graph_flow(c, u0, 40.0, o);
  }();
  return traj;
}

const FlowTrajectory& stationary_run() {
  static const FlowTrajectory traj = [] {
    FlowOptions o;
    o.stop_on_converge = false;
    o.snapshot_stride = 10;
    return run_graph_flow(circle(), Eigen::VectorXd::Zero(64), 2.5, o);
  }();
  return traj;
}

// Independent summation of the dyadic series in long double.
long double direct_series(double beta, double gamma, double c1, int terms) {
  const long double p = 1.0L / (1.0L - beta);
  long double s = 0.0L;
  for (int j = 1; j <= terms; ++j) s += std::pow(2.0L, gamma * j) * std::pow(c1 + std::pow(2.0L, j + 1), -p);
  return s;
}

}  // namespace

TEST(Loja, StationaryTrajectoryHasNothingToCheck) {
  auto r = loja_check(stationary_run(), kFSigma, 0.5);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_EQ(r.checked, 0u);  // roundoff only
  for (const auto& s : r.samples) {
    EXPECT_LT(s.lhs, 1e-20);
    EXPECT_LT(s.rhs, 1e-20);
  }
}

TEST(Loja, ConvergingCircleSatisfiesTheInequality) {
  const auto& traj = converging_run();
  ASSERT_EQ(traj.termination, Termination::Converged);
  auto r = loja_check(traj, kFSigma, 0.5);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_GT(r.checked, traj.records.size() / 2);
  EXPECT_NEAR(r.fitted.at("slope"), 1.0, 0.1);
  EXPECT_GT(r.fitted.at("beta_max"), 0.8);
  EXPECT_LT(r.worst_ratio, 1.0);
}

TEST(Loja, BetaNearOneStillHolds) {
  const auto& traj = converging_run();
  auto half = loja_check(traj, kFSigma, 0.5);
  auto near_one = loja_check(traj, kFSigma, 0.99);
  EXPECT_EQ(near_one.violations, 0u);
  EXPECT_GT(near_one.checked, 0u);
  EXPECT_NE(near_one.fitted.at("threshold"), half.fitted.at("threshold"));
}

TEST(Loja, RegressionCsv) {
  auto r = loja_check(converging_run(), kFSigma, 0.5);
  std::ostringstream os;
  write_regression_csv(os, r);
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "log_x,log_y,in_fit");
  EXPECT_EQ(to_json(r)["violations"], 0);
}

TEST(Decay, EqualityCase) {
  // G' = -G^{3/2}, G(0) = 1 gives G = (1 + t/2)^{-2}
  for (double t : {0.0, 0.3, 1.0, 7.5, 100.0})
    EXPECT_NEAR(decay_bound(1.0, 0.5, t, DecayDirection::Decreasing), std::pow(1 + t / 2, -2.0), 1e-15);
  std::vector<double> ts, Gs;
  for (int k = 0; k <= 400; ++k) {
    ts.push_back(0.025 * k);
    Gs.push_back(std::pow(1 + ts.back() / 2, -2.0));
  }
  auto rep = check_decay(ts, Gs, 0.5);
  EXPECT_EQ(rep.direction, DecayDirection::Decreasing);
  EXPECT_EQ(rep.violations, 0u);
  EXPECT_NEAR(rep.worst_ratio, 1.0, 1e-12);
  EXPECT_GE(rep.hypothesis_margin, 1.0);
}

TEST(Decay, IncreasingMirror) {
  // G' = +G^{3/2} ending at G(T) = 1: G(t) = (1 + (T - t)/2)^{-2}
  const double T = 5.0;
  std::vector<double> ts, Gs;
  for (int k = 0; k <= 200; ++k) {
    ts.push_back(T * k / 200.0);
    Gs.push_back(std::pow(1 + (T - ts.back()) / 2, -2.0));
  }
  auto rep = check_decay(ts, Gs, 0.5);
  EXPECT_EQ(rep.direction, DecayDirection::Increasing);
  EXPECT_EQ(rep.violations, 0u);
  EXPECT_NEAR(rep.worst_ratio, 1.0, 1e-12);
  EXPECT_NEAR(decay_bound(1.0, 0.5, 1.0, DecayDirection::Increasing, T), std::pow(1 + 2.0, -2.0), 1e-15);
}

TEST(Decay, ZeroSeries) {
  auto rep = check_decay({0.0, 1.0, 2.0}, {0.0, 0.0, 0.0}, 0.5);
  EXPECT_EQ(rep.violations, 0u);
  EXPECT_EQ(decay_bound(0.0, 0.5, 3.0, DecayDirection::Decreasing), 0.0);
}

TEST(Decay, HypothesisFailures) {
  std::vector<double> ts, slow, wiggle;
  for (int k = 0; k <= 50; ++k) {
    ts.push_back(0.02 * k);
    slow.push_back(4.0 * std::exp(-ts.back()));  // |G'| = G < G^{3/2} while G > 1
    wiggle.push_back(1.0 + 0.1 * std::sin(10 * ts.back()));
  }
  for (const auto& G : {slow, wiggle}) {
    try {
      check_decay(ts, G, 0.5);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::HypothesisFail);
    }
  }
  EXPECT_THROW(decay_bound(1.0, 1.0, 0.0, DecayDirection::Decreasing), Error);
}

TEST(Decay, JitteredSyntheticSeries) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> B(0.1, 0.9), G0(0.05, 2.0);
  int failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto dir = trial % 2 ? DecayDirection::Increasing : DecayDirection::Decreasing;
    const double beta = B(rng);
    auto [t, G] = synthetic_decay_series(beta, G0(rng), 4.0, 200, 0.5, rng, dir);
    auto rep = check_decay(t, G, beta);
    EXPECT_EQ(rep.direction, dir);
    failures += rep.violations > 0;
    EXPECT_LE(rep.worst_ratio, 1.0 + 1e-9);
  }
  EXPECT_EQ(failures, 0);
}

TEST(GeometricSeries, WorkedExample) {
  auto g = geometric_series_bound(0.5, 1.5, 1.0);
  EXPECT_TRUE(g.holds);
  const long double direct = direct_series(0.5, 1.5, 1.0, 400);
  EXPECT_NEAR(static_cast<double>(direct), g.lhs_partial, 1e-12);
  EXPECT_NEAR(g.lhs_partial + g.tail, 0.50, 0.01);
  EXPECT_NEAR(g.rhs, 4 / std::sqrt(3.0), 1e-14);
  EXPECT_NEAR(g.rhs_as_printed, 1 / std::sqrt(3.0), 1e-14);
}

TEST(GeometricSeries, HoldsOnSampledTriples) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  int violations = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double beta = 0.01 + 0.98 * U(rng);
    const double p = 1 / (1 - beta);
    const double gamma = 1 + (p - 1) * (0.001 + 0.998 * U(rng));
    const double c1 = std::pow(10.0, -2 + 4 * U(rng));
    const auto g = geometric_series_bound(beta, gamma, c1);
    violations += !g.holds;
    EXPECT_GE(g.tail, 0.0);
  }
  EXPECT_EQ(violations, 0);
}

TEST(GeometricSeries, TailMajorizesTheRest) {
  const auto coarse = geometric_series_bound(0.5, 1.9, 0.3, 20);
  const auto fine = geometric_series_bound(0.5, 1.9, 0.3, 2000);
  EXPECT_GE(coarse.lhs_partial + coarse.tail, fine.lhs_partial + fine.tail);
  EXPECT_GE(coarse.lhs_partial + coarse.tail, fine.lhs_partial);
}

TEST(GeometricSeries, LargeOffsetDrivesBothSidesToZero) {
  double prev_lhs = 1e300, prev_rhs = 1e300;
  for (double c1 : {10.0, 100.0, 1000.0}) {
    const auto g = geometric_series_bound(0.5, 1.5, c1);
    const double lhs = g.lhs_partial + g.tail;
    EXPECT_LT(lhs, prev_lhs);
    EXPECT_LT(g.rhs, prev_rhs);
    EXPECT_GT(lhs / g.rhs, 0.0);
    EXPECT_LT(lhs / g.rhs, 1.0);
    prev_lhs = lhs;
    prev_rhs = g.rhs;
  }
}

TEST(GeometricSeries, RejectsOutsideHypothesis) {
  EXPECT_THROW(geometric_series_bound(0.5, 2.0, 1.0), Error);  // gamma = 1/(1-beta)
  EXPECT_THROW(geometric_series_bound(0.5, 1.0, 1.0), Error);
  EXPECT_THROW(geometric_series_bound(0.5, 1.5, 0.0), Error);
  EXPECT_THROW(geometric_series_bound(1.0, 1.5, 1.0), Error);
}

TEST(WeightedIntegral, StationaryIsZero) {
  auto r = weighted_integral_check(stationary_run(), kFSigma, 0.5, 1.5);
  for (const auto& s : r.samples) EXPECT_LT(s.lhs, 1e-20);  // roundoff
  EXPECT_EQ(r.violations, 0u);
}

TEST(WeightedIntegral, FittedConstantIsStableAcrossPrefixes) {
  auto r = weighted_integral_check(converging_run(), kFSigma, 0.5, 1.5);
  ASSERT_TRUE(r.fitted.count("C_first"));
  EXPECT_GT(r.fitted.at("C_first"), 0.0);
  EXPECT_LE(r.fitted.at("C_first_spread"), 3.0);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_FALSE(r.fitted.count("C_mirror"));  // F stays above F_Sigma
}

TEST(WeightedIntegral, MirrorInterval) {
  // Reversed-in-time copy of the converging run: F increases towards F_Sigma
  // from below, so everything sits on the mirror interval.
  const auto& src = converging_run();
  FlowTrajectory rev;
  const double T = src.records.back().t;
  for (auto it = src.records.rbegin(); it != src.records.rend(); ++it) {
    FlowRecord r = *it;
    r.t = T - it->t;
    r.F = 2 * kFSigma - it->F;
    rev.records.push_back(r);
  }
  auto r = weighted_integral_check(rev, kFSigma, 0.5, 1.5, 0.0);
  ASSERT_TRUE(r.fitted.count("C_mirror"));
  EXPECT_GT(r.fitted.at("C_mirror"), 0.0);
  EXPECT_FALSE(r.fitted.count("C_first"));
  // Leaving exponentially, the integral scales like G while the right side
  // scales like G^{1/4}: the constant is set by the longest window.
  EXPECT_EQ(r.violations, 0u);
  EXPECT_NEAR(r.samples.back().lhs / r.samples.back().rhs, 1.0, 1e-12);
}

TEST(WeightedIntegral, RejectsGammaOutsideRange) {
  EXPECT_THROW(weighted_integral_check(stationary_run(), kFSigma, 0.5, 2.0), Error);
  EXPECT_THROW(weighted_integral_check(stationary_run(), kFSigma, 0.5, 0.9), Error);
}

TEST(Drift, EmptyWindow) {
  auto d = drift_bound_check(converging_run(), circle(), 1.0, 1.0);
  EXPECT_EQ(d.lhs, 0.0);
  EXPECT_EQ(d.delta_F, 0.0);
  EXPECT_EQ(d.velocity_l1, 0.0);
}

TEST(Drift, ConvergingTail) {
  const auto& traj = converging_run();
  auto st = drift_study(traj, circle());
  EXPECT_GE(st.fitted_exponent, 0.25);
  ASSERT_EQ(st.tail.size(), 5u);
  EXPECT_LE(st.C_drift_spread, 3.0);
  EXPECT_LE(st.C_dist_spread, 3.0);
  for (const auto& d : st.tail) {
    EXPECT_LE(d.lhs, st.C_drift * std::pow(d.delta_F, 0.25) * (1 + 1e-12));
    EXPECT_LE(d.lhs, st.C_dist * d.velocity_l1 * (1 + 1e-12));
  }
  // the drift to the end shrinks as the window start approaches it
  for (std::size_t i = 1; i < st.all.size(); ++i) EXPECT_LE(st.all[i].lhs, st.all[i - 1].lhs * (1 + 1e-9)) << i;
}

TEST(Drift, IntrinsicRunsAreNotGraphical) {
  FlowOptions o;
  o.snapshot_stride = 5;
  auto traj = run_curve_flow(circle(), 0.1, o);
  try {
    drift_bound_check(traj, circle(), 0.0, 0.05);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotGraphical);
  }
}
