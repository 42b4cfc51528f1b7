#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "shrinkflow/entropy.hpp"
#include "shrinkflow/group.hpp"
#include "shrinkflow/shrinker.hpp"

using namespace shrinkflow;

namespace {

const double kSqrt2 = std::numbers::sqrt2;
const double kPi = std::numbers::pi;

GroupElement random_element(std::mt19937& rng, bool with_flip = true) {
  std::uniform_real_distribution<double> angle(-kPi, kPi), shift(-1.0, 1.0), log_scale(std::log(0.5), std::log(2.0));
  GroupElement g;
  g.angle = angle(rng);
  g.flip = with_flip && (rng() & 1u);
  g.x0 = Eigen::Vector2d(shift(rng), shift(rng));
  g.a = std::exp(log_scale(rng));
  return g;
}

Surface ellipse() { return build_ellipse(kSqrt2 * 1.2, kSqrt2 / 1.2, 64); }

FlowTrajectory stored_ellipse_flow(double horizon) {
  FlowOptions o;
  o.snapshot_stride = 1;
  return run_curve_flow(ellipse(), horizon, o);
}

}  // namespace

TEST(Group, CompositionAndInverse) {
  std::mt19937 rng(7);
  const Points x = ellipse().points();
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = random_element(rng), h = random_element(rng);
    EXPECT_LT(((g * h).apply(x) - g.apply(h.apply(x))).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(((g.inverse() * g).apply(x) - x).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((g.apply(g.inverse().apply(x)) - x).cwiseAbs().maxCoeff(), 1e-12);
    const auto gh = (g * h) * g, g_hg = g * (h * g);
    EXPECT_LT((gh.apply(x) - g_hg.apply(x)).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Group, IdentityIsExact) {
  const auto e = ellipse();
  const Surface m = apply_group(GroupElement::identity(), e);
  EXPECT_EQ((m.points() - e.points()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Group, ScalingDividesCurvature) {
  GroupElement g;
  g.a = 2.0;
  for (const auto& s : {ellipse(), build_sphere(2.0, 48)}) {
    const Surface m = apply_group(g, s);
    EXPECT_LT((2.0 * m.geometry().H - s.geometry().H).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Group, RevolutionRejectsOffAxisMotion) {
  GroupElement g;
  g.angle = 0.3;
  EXPECT_THROW(apply_group(g, build_sphere(2.0, 32)), Error);
  g = {};
  g.x0 = Eigen::Vector2d(0.1, 0.0);
  EXPECT_THROW(apply_group(g, build_sphere(2.0, 32)), Error);
  g = {};
  g.a = -1.0;
  EXPECT_THROW(apply_group(g, ellipse()), Error);
}

TEST(Group, EntropyIsInvariant) {
  std::mt19937 rng(11);
  const auto e = ellipse();
  const double lambda = entropy(e).lambda;
  for (int trial = 0; trial < 3; ++trial) {
    auto g = random_element(rng);
    g.x0 *= 0.5;  // stay well inside the translation search box
    EXPECT_NEAR(entropy(apply_group(g, e)).lambda, lambda, 1e-6);
  }
}

TEST(OrbitDistance, ZeroOnTheOrbit) {
  const auto e = ellipse();
  EXPECT_LT(orbit_distance(e, e).d, 1e-9);
  std::mt19937 rng(3);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto g = random_element(rng, false);
    worst = std::max(worst, orbit_distance(apply_group(g, e), e).d);
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(OrbitDistance, BumpStaysAtItsSize) {
  const auto c = build_circle(kSqrt2, 64);
  const Eigen::ArrayXd th = c.grid().theta().array() - kPi;
  const Eigen::VectorXd bump = (0.1 * (-th.square() / 0.1).exp()).matrix();
  const auto od = orbit_distance(graph_embedding(c, bump), c);
  EXPECT_GT(od.d, 0.01);
  EXPECT_LE(od.d, 0.1);
}

TEST(OrbitDistance, RevolutionOrbit) {
  const auto s = build_sphere(2.0, 48);
  GroupElement g;
  g.a = 1.3;
  g.x0 = Eigen::Vector2d(0.0, 0.4);
  g.flip = true;
  const auto od = orbit_distance(apply_group(g, s), s);
  EXPECT_LT(od.d, 1e-6);
  EXPECT_NEAR(od.g.a, 1.3, 1e-5);
}

TEST(OrbitDistance, TranslationModeIsNotAnEscape) {
  // The sphere pushed along e_z is far from the base as a graph but close
  // to a translate of it.
  const auto s = build_sphere(2.0, 48);
  const Eigen::VectorXd u = 0.15 * s.grid().theta().array().cos().matrix();
  EXPECT_GT(u.cwiseAbs().maxCoeff(), 0.1);
  EXPECT_LT(orbit_distance(graph_embedding(s, u), s).d, 0.02);
}

TEST(Comeback, KnownWindow) {
  const auto s = comeback_schedule(1.0, 2.0, 1.0);
  EXPECT_NEAR(s.t0, 1 - std::exp(-2.0), 1e-15);
  EXPECT_NEAR(s.t0, 0.864665, 1e-6);
  EXPECT_NEAR(s.Tbar, -std::log(1 + std::exp(-1.0) - std::exp(-2.0)), 1e-15);
  EXPECT_NEAR(s.Tbar, -0.2090805, 1e-6);
  EXPECT_EQ(s.a, 1.0);
  const auto c = comeback_schedule(1.0, 2.0, 1.0, Eigen::Vector2d::Zero(), {}, ComebackConvention::Consistent);
  EXPECT_EQ(c.t0, 0.0);
  EXPECT_NEAR(c.a, std::exp(1.0), 1e-15);
  EXPECT_NEAR(c.Tbar, -1.0, 1e-14);  // b = 1 replays the stored window one-to-one
}

TEST(Comeback, TimeIdentitiesHoldForRandomWindows) {
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> T(-3.0, 6.0), B(0.05, 3.0);
  for (auto conv : {ComebackConvention::Literal, ComebackConvention::Consistent}) {
    for (int trial = 0; trial < 1000; ++trial) {
      double T1 = T(rng), T2 = T(rng);
      if (T1 == T2) continue;
      if (T1 > T2) std::swap(T1, T2);
      const auto s = comeback_schedule(T1, T2, B(rng), Eigen::Vector2d::Zero(), {}, conv);
      const auto [d0, d1] = s.identity_defects();
      EXPECT_LT(d0, 1e-12);
      EXPECT_LT(d1, 1e-12);
      EXPECT_LT(s.Tbar, 0.0);
    }
  }
}

TEST(Comeback, SmallScaleShrinksTheWindow) {
  double prev = -1e300;
  for (double b : {1.0, 0.1, 1e-3, 1e-6}) {
    const auto s = comeback_schedule(1.0, 2.0, b);
    EXPECT_GT(s.Tbar, prev);
    EXPECT_LT(s.Tbar, 0.0);
    prev = s.Tbar;
  }
  // Tbar ~ -b^2 (e^{-T1} - e^{-T2}) to first order
  EXPECT_NEAR(comeback_schedule(1.0, 2.0, 1e-6).Tbar, -1e-12 * (std::exp(-1.0) - std::exp(-2.0)), 1e-24);
}

TEST(Comeback, InvalidWindows) {
  for (auto [T1, T2, b] : {std::tuple{2.0, 1.0, 1.0}, std::tuple{1.0, 1.0, 1.0}, std::tuple{1.0, 2.0, 0.0}}) {
    try {
      comeback_schedule(T1, T2, b);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidWindow);
    }
  }
}

TEST(Replay, IdentityParametersReproduceTheTrajectory) {
  const auto traj = stored_ellipse_flow(1.0);
  std::vector<double> times;
  for (std::size_t k = 0; k < traj.snapshots.size(); k += 25) times.push_back(traj.snapshots[k].t);
  const auto r = renormalized_flow(traj, ellipse(), Eigen::Vector2d::Zero(), 0.0, 1.0, times);
  for (std::size_t i = 0; i < times.size(); ++i)
    EXPECT_LT((r.snapshots[i].points - traj.snapshots[25 * i].points).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Replay, StationaryShrinkerReplaysAsAShrinkingCircle) {
  // Mbar = Sigma gives Mt = a e^{t/2} (sqrt(-s) Sigma + x0) with a^2 s = t0 - e^{-t},
  // a circle of radius sqrt(2 (1 - t0 e^t)) about a e^{t/2} x0.
  const auto c = build_circle(kSqrt2, 64);
  FlowOptions o;
  o.stop_on_converge = false;
  o.snapshot_stride = 1;
  const auto traj = run_curve_flow(c, 3.0, o);
  const double t0 = 0.3, a = 1.7;
  const Eigen::Vector2d x0(0.2, -0.1);
  const auto r = renormalized_flow(traj, c, x0, t0, a, {-0.5, 0.0, 0.5});
  for (const auto& snap : r.snapshots) {
    const Eigen::RowVector2d centre = a * std::exp(0.5 * snap.t) * x0.transpose();
    const Eigen::VectorXd radius = (snap.points.rowwise() - centre).rowwise().norm();
    const double expected = std::sqrt(2.0 * (1.0 - t0 * std::exp(snap.t)));
    EXPECT_LT((radius.array() - expected).abs().maxCoeff(), 1e-9) << snap.t;
  }
}

TEST(Replay, ConventionsAtTheWindowEnd) {
  const auto traj = stored_ellipse_flow(1.2);
  const Eigen::Vector2d y0(0.3, -0.2);
  const double T1 = 0.5, T2 = 1.0, b = 0.8;
  const Points at_T2 = detail::interpolate_snapshots(traj, T2);
  const auto e = ellipse();

  const auto c = comeback_schedule(T1, T2, b, y0, {}, ComebackConvention::Consistent);
  const auto rc = replay(traj, e, c, {c.Tbar, 0.0});
  const Points want_c = (b * (at_T2.rowwise() + y0.transpose()).array()).matrix();
  EXPECT_LT((rc.snapshots.back().points - want_c).cwiseAbs().maxCoeff(), 1e-4);

  const auto l = comeback_schedule(T1, T2, b, y0, {}, ComebackConvention::Literal);
  const Points want_l = (b * ((std::exp(-0.5 * T2) * at_T2).rowwise() + y0.transpose()).array()).matrix();
  const auto rl = replay(traj, e, l, {0.0});
  EXPECT_LT((rl.snapshots.back().points - want_l).cwiseAbs().maxCoeff(), 1e-4);

  // the window start lands on the stored state at T1
  const Points at_T1 = detail::interpolate_snapshots(traj, T1);
  const double scale = b * std::exp(0.5 * (T2 + c.Tbar)) * std::exp(-0.5 * T1);
  const Points want_start = (scale * at_T1).rowwise() + (b * std::exp(0.5 * c.Tbar) * y0).transpose();
  EXPECT_LT((rc.snapshots.front().points - want_start).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Replay, RotationFromTheSchedule) {
  const auto traj = stored_ellipse_flow(1.2);
  GroupElement g;
  g.angle = 0.7;
  const auto plain = replay(traj, ellipse(), comeback_schedule(0.5, 1.0, 1.0), {0.0});
  const auto turned = replay(traj, ellipse(), comeback_schedule(0.5, 1.0, 1.0, Eigen::Vector2d::Zero(), g), {0.0});
  EXPECT_LT((turned.snapshots[0].points - g.apply(plain.snapshots[0].points)).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Replay, OutOfRangeTimes) {
  const auto traj = stored_ellipse_flow(0.5);
  const auto e = ellipse();
  auto code = [&](double t0, double a, double t) {
    try {
      renormalized_flow(traj, e, Eigen::Vector2d::Zero(), t0, a, {t});
    } catch (const Error& err) {
      return err.code();
    }
    return ErrorCode::InvalidArgument;
  };
  EXPECT_EQ(code(1.0, 1.0, 0.0), ErrorCode::RangeError);   // MCF time 0
  EXPECT_EQ(code(0.0, 1.0, 2.0), ErrorCode::RangeError);   // beyond the stored horizon
  EXPECT_EQ(code(0.0, 1.0, -0.1), ErrorCode::RangeError);  // before the first snapshot
  EXPECT_THROW(renormalized_flow(traj, e, Eigen::Vector2d::Zero(), 0.0, 0.0, {0.0}), Error);
}

TEST(NoReturn, StableDataNeverLeaves) {
  const auto c = build_circle(kSqrt2, 64);
  const Eigen::VectorXd u0 = (0.02 * (2.0 * c.grid().theta().array()).cos() + (std::sqrt(2 - 0.0002) - kSqrt2)).matrix();
  NoReturnOptions o;
  o.horizon = 8.0;
  o.observe_every = 0.2;
  const auto r = no_return_experiment(c, u0, o);
  EXPECT_EQ(r.verdict, ReturnVerdict::NeverLeft);
  EXPECT_FALSE(r.t_exit);
  ASSERT_GE(r.distances.size(), 2u);
  EXPECT_LT(r.distances.back().second, r.distances.front().second);
  EXPECT_EQ(to_json(r)["verdict"], "NEVER_LEFT");
}

TEST(NoReturn, ThresholdsMustBeOrdered) {
  NoReturnOptions o;
  o.delta1 = 0.2;
  EXPECT_THROW(no_return_experiment(build_circle(kSqrt2, 32), Eigen::VectorXd::Zero(32), o), Error);
}

TEST(NoReturn, TorusUnstableDirectionEscapes) {
  ShootingOptions so;
  so.n_samples = 128;
  const auto t = shoot_angenent_torus(so);
  const auto& base = *t.profile;
  const auto rep = stability_report(base);
  Eigen::VectorXd v = rep.unstable_fields.front();
  v /= v.cwiseAbs().maxCoeff();
  const auto r = no_return_experiment(base, 0.02 * v);  // this sign pinches the profile onto the axis
  EXPECT_EQ(r.verdict, ReturnVerdict::NoReturn);
  ASSERT_TRUE(r.t_exit);
  EXPECT_GT(r.distances.back().second, 0.1);
  const auto j = to_json(r);
  EXPECT_EQ(j["verdict"], "NO_RETURN");
  EXPECT_FALSE(j.contains("t_return"));
}
