#include <cmath>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>

#include "shrinkflow/shrinker.hpp"

using namespace shrinkflow;

namespace {

const double kSqrt2 = std::numbers::sqrt2;

const ShootingResult& torus() {
  static const ShootingResult t = shoot_angenent_torus();
  return t;
}

}  // namespace

TEST(Newton, ZeroIsAlreadyCritical) {
  auto c = build_circle(kSqrt2, 128);
  auto r = newton_find_shrinker(c, Eigen::VectorXd::Zero(128));
  EXPECT_EQ(r.iterations, 0);
  EXPECT_EQ(r.u.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Newton, ConstantOffsetReturnsQuadratically) {
  auto c = build_circle(kSqrt2, 128);
  auto r = newton_find_shrinker(c, Eigen::VectorXd::Constant(128, 0.1));
  EXPECT_LT(r.residuals.back(), 1e-10);
  EXPECT_LT(r.u.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_TRUE(r.quadratic);
  ASSERT_GE(r.error_ratios.size(), 2u);
  for (double ratio : r.error_ratios) EXPECT_LT(ratio, 1.0);
}

TEST(Newton, MixedPerturbationReturns) {
  auto c = build_circle(kSqrt2, 128);
  Eigen::VectorXd u0 = (0.05 * (2 * c.grid().theta().array()).cos() + 0.05).matrix();
  auto r = newton_find_shrinker(c, u0);
  EXPECT_LT(r.residuals.back(), 1e-10);
  EXPECT_LT(r.u.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_TRUE(r.quadratic);
}

TEST(Newton, SphereOffsetReturns) {
  auto s = build_sphere(2.0, 48);
  auto r = newton_find_shrinker(s, Eigen::VectorXd::Constant(48, -0.1));
  EXPECT_LT(r.residuals.back(), 1e-10);
  EXPECT_LT(r.u.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Newton, ErrorPaths) {
  auto c = build_circle(kSqrt2, 64);
  NewtonOptions one;
  one.max_iter = 1;
  EXPECT_THROW(newton_find_shrinker(c, Eigen::VectorXd::Constant(64, 0.1), one), Error);
  NewtonOptions strict;
  strict.singular_threshold = 10.0;  // every eigenvalue counts as singular
  try {
    newton_find_shrinker(c, Eigen::VectorXd::Constant(64, 0.1), strict);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SingularLinearization);
  }
}

TEST(Spectrum, CircleMatchesFourierModes) {
  auto c = build_circle(kSqrt2, 256);
  auto sd = spectrum(c, 17);
  // 1 - k^2/2 with multiplicity two for k >= 1
  EXPECT_NEAR(sd.eigenvalues(0), 1.0, 1e-10);
  for (int k = 1; k <= 8; ++k) {
    EXPECT_NEAR(sd.eigenvalues(2 * k - 1), 1 - k * k / 2.0, 1e-4) << k;
    EXPECT_NEAR(sd.eigenvalues(2 * k), 1 - k * k / 2.0, 1e-4) << k;
  }
  EXPECT_LT(sd.orthonormality_residual, 1e-10);
  EXPECT_LT(sd.eigen_residual, 1e-8);
  EXPECT_EQ(sd.markers[0], ModeMarker::Dilation);
  EXPECT_EQ(sd.markers[1], ModeMarker::Translation);
  EXPECT_EQ(sd.markers[2], ModeMarker::Translation);
  EXPECT_EQ(sd.markers[3], ModeMarker::None);
  EXPECT_FALSE(sd.approximate);
}

TEST(Spectrum, CircleEigenvaluesConvergeUnderRefinement) {
  auto a = spectrum(build_circle(kSqrt2, 128), 17);
  auto b = spectrum(build_circle(kSqrt2, 256), 17);
  EXPECT_LT((a.eigenvalues - b.eigenvalues).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Spectrum, SphereAxisymmetricSector) {
  auto sd = spectrum(build_sphere(2.0, 64), 7);
  for (int k = 0; k <= 6; ++k) EXPECT_NEAR(sd.eigenvalues(k), 1 - k * (k + 1) / 4.0, 1e-3) << k;
  EXPECT_EQ(sd.markers[0], ModeMarker::Dilation);
  EXPECT_EQ(sd.markers[1], ModeMarker::Translation);
  EXPECT_LT(sd.orthonormality_residual, 1e-10);
  EXPECT_LT(sd.eigen_residual, 1e-8);
}

TEST(Spectrum, GroupIdentitiesOnEveryShrinker) {
  for (const auto& s : {build_circle(kSqrt2, 256), build_sphere(2.0, 64), *torus().profile}) {
    auto gi = group_identities(s);
    EXPECT_LT(gi.dilation, 1e-6);
    EXPECT_LT(gi.translation, 1e-6);
  }
}

TEST(Spectrum, CsvColumns) {
  std::ostringstream os;
  write_spectrum_csv(os, spectrum(build_circle(kSqrt2, 32), 3));
  std::istringstream in(os.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "index,eigenvalue,marker");
  std::getline(in, line);
  EXPECT_EQ(line.substr(0, 2), "0,");
  EXPECT_EQ(line.substr(line.rfind(',') + 1), "dilation");
  std::getline(in, line);
  EXPECT_EQ(line.substr(line.rfind(',') + 1), "translation");
}

TEST(Stability, CircleAndSphereAreStableModuloGroup) {
  auto c = stability_report(build_circle(kSqrt2, 128));
  EXPECT_EQ(c.verdict, StabilityVerdict::Stable);
  EXPECT_EQ(c.positive, 3);
  EXPECT_EQ(c.group_modes, 3);
  EXPECT_EQ(c.sector, "full");
  auto s = stability_report(build_sphere(2.0, 48));
  EXPECT_EQ(s.verdict, StabilityVerdict::Stable);
  EXPECT_EQ(s.group_modes, 2);
  EXPECT_EQ(s.sector, "axisymmetric");
}

TEST(Stability, TorusIsUnstable) {
  const auto& base = *torus().profile;
  auto rep = stability_report(base);
  EXPECT_EQ(rep.verdict, StabilityVerdict::Unstable);
  ASSERT_GE(rep.index, 1);
  const auto gf = group_fields(base);
  const auto& v = rep.unstable_fields.front();
  EXPECT_LT(std::abs(q_inner(base, v, gf.dilation)) / q_norm(base, gf.dilation), 1e-6);
  EXPECT_LT(std::abs(q_inner(base, v, gf.translations[0])) / q_norm(base, gf.translations[0]), 1e-6);
  EXPECT_GT(rep.unstable_eigenvalues.front(), 0.0);
}

TEST(Stability, NearZeroEigenvalueIsAmbiguous) {
  StabilityOptions wide;
  wide.ambiguity = 1.5;  // -1 now counts as indistinguishable from 0
  auto rep = stability_report(build_circle(kSqrt2, 64), wide);
  EXPECT_EQ(rep.verdict, StabilityVerdict::Ambiguous);
  EXPECT_FALSE(rep.note.empty());
}

TEST(Shooting, TorusClosesAndIsAShrinker) {
  const auto& t = torus();
  EXPECT_TRUE(t.success);
  EXPECT_LT(t.residual_sup, 1e-5);
  EXPECT_LT(std::abs(t.closure_defect), 1e-9);
  EXPECT_GT(gaussian_area(*t.profile), 16 * std::numbers::pi / std::exp(1.0));
  EXPECT_GT(t.return_radius, 2.0 * kSqrt2);
  EXPECT_LT(t.r0, kSqrt2);
  EXPECT_EQ(t.profile->kind(), SurfaceKind::Revolution);
  EXPECT_EQ(t.profile->topology(), Topology::Periodic);
}

TEST(Shooting, DefectIsMonotoneAcrossBracket) {
  const auto& table = torus().defect_table;
  ASSERT_GE(table.size(), 3u);
  for (std::size_t i = 1; i < table.size(); ++i) EXPECT_LT(table[i].second, table[i - 1].second);
  EXPECT_GT(table.front().second, 0.0);
  EXPECT_LT(table.back().second, 0.0);
}

TEST(Shooting, RefinedProfileAgrees) {
  ShootingOptions fine;
  fine.n_samples = 384;
  auto t = shoot_angenent_torus(fine);
  EXPECT_NEAR(t.r0, torus().r0, 1e-11);
  EXPECT_NEAR(gaussian_area(*t.profile), gaussian_area(*torus().profile), 1e-9);
}

TEST(Shooting, BracketWithoutSignChangeFails) {
  ShootingOptions o;
  o.r0_lo = 2.5;
  o.r0_hi = 2.7;
  try {
    shoot_angenent_torus(o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BracketFailure);
  }
  o.r0_hi = 3.0;
  EXPECT_THROW(shoot_angenent_torus(o), Error);
}

TEST(Shooting, ProfileRoundTripsThroughJson) {
  auto back = surface_from_json(to_json(*torus().profile));
  EXPECT_NEAR(gaussian_area(back), gaussian_area(*torus().profile), 1e-14);
}
