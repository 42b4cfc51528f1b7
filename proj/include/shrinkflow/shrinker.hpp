#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include "shrinkflow/errors.hpp"
#include "shrinkflow/geometry.hpp"
#include "shrinkflow/graph.hpp"
#include "shrinkflow/optimize.hpp"

namespace shrinkflow {

// ---- Newton on N(u) = 0 ----------------------------------------------------

struct NewtonOptions {
  double tol = 1e-10;
  int max_iter = 30;
  double singular_threshold = 1e-8;
  double ratio_bound = 1e3;  // e_{k+1}/e_k^2 above this is not called quadratic
};

struct NewtonResult {
  Eigen::VectorXd u;
  int iterations = 0;
  std::vector<double> residuals;     // ||N(u_k)||_Q
  std::vector<double> error_ratios;  // e_{k+1} / e_k^2 on steps above roundoff
  bool quadratic = true;
  double min_abs_eigenvalue = 0.0;   // of the last Jacobian factored
};

namespace detail {

inline double min_abs_eigenvalue(const Eigen::MatrixXd& L) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(L, false);
  return es.eigenvalues().cwiseAbs().minCoeff();
}

}  // namespace detail

/// Newton iteration u <- u - L_u^{-1} N(u) with the exact Jacobian.
inline NewtonResult newton_find_shrinker(const Surface& base, const Eigen::VectorXd& u0, const NewtonOptions& opt = {}) {
  NewtonResult res;
  res.u = u0;
  Eigen::VectorXd N = gradient_operator(base, res.u);
  res.residuals.push_back(q_norm(base, N));
  const double floor = 1e3 * std::numeric_limits<double>::epsilon() * std::max(1.0, gaussian_area(base));
  while (res.residuals.back() >= opt.tol) {
    require(res.iterations < opt.max_iter, ErrorCode::NoConvergence,
            "Newton did not reach " + std::to_string(opt.tol) + " in " + std::to_string(opt.max_iter) + " iterations");
    const Eigen::MatrixXd L = linearization(base, res.u);
    res.min_abs_eigenvalue = detail::min_abs_eigenvalue(L);
    require(res.min_abs_eigenvalue >= opt.singular_threshold, ErrorCode::SingularLinearization,
            "smallest |eigenvalue| of L_u is " + std::to_string(res.min_abs_eigenvalue));
    res.u -= L.partialPivLu().solve(N);
    N = gradient_operator(base, res.u);
    res.residuals.push_back(q_norm(base, N));
    ++res.iterations;
    const double prev = res.residuals[res.residuals.size() - 2];
    if (res.residuals.back() > floor) res.error_ratios.push_back(res.residuals.back() / (prev * prev));
  }
  // only the final three informative ratios enter the certificate
  const auto first = res.error_ratios.size() > 3 ? res.error_ratios.end() - 3 : res.error_ratios.begin();
  res.quadratic = std::all_of(first, res.error_ratios.end(), [&](double r) { return r <= opt.ratio_bound; });
  return res;
}

// ---- spectrum of L ---------------------------------------------------------

enum class ModeMarker { None, Dilation, Translation };

inline std::string to_string(ModeMarker m) {
  switch (m) {
    case ModeMarker::Dilation: return "dilation";
    case ModeMarker::Translation: return "translation";
    default: return "";
  }
}

struct SpectralDecomposition {
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenfields;   // columns, Q-orthonormal
  std::vector<ModeMarker> markers;
  double orthonormality_residual = 0.0;  // max |V^T W V - I|
  double eigen_residual = 0.0;           // max ||L v - lambda v||_Q
  bool approximate = false;              // base residual was not small
};

/// Group-mode fields of a base: H (dilations) and <n, e_i> (translations).
/// Revolution bases only carry the axial translation.
struct GroupFields {
  Eigen::VectorXd dilation;
  std::vector<Eigen::VectorXd> translations;
};

inline GroupFields group_fields(const Surface& base) {
  GroupFields g;
  g.dilation = base.geometry().H;
  if (base.kind() == SurfaceKind::Curve) g.translations.push_back(base.geometry().normal.col(0));
  g.translations.push_back(base.geometry().normal.col(1));
  return g;
}

namespace detail {

// Q-orthonormal basis of a set of fields (modified Gram-Schmidt, twice).
inline Eigen::MatrixXd q_orthonormal_basis(const std::vector<Eigen::VectorXd>& fields, const Eigen::VectorXd& q) {
  Eigen::MatrixXd B(q.size(), 0);
  for (const auto& f : fields) {
    Eigen::VectorXd v = f;
    for (int pass = 0; pass < 2; ++pass)
      for (Eigen::Index j = 0; j < B.cols(); ++j) v -= B.col(j).dot(q.asDiagonal() * v) * B.col(j);
    const double n = std::sqrt(v.dot(q.asDiagonal() * v));
    if (n <= 1e-12 * std::sqrt(f.dot(q.asDiagonal() * f))) continue;
    B.conservativeResize(Eigen::NoChange, B.cols() + 1);
    B.col(B.cols() - 1) = v / n;
  }
  return B;
}

// Fraction of the Q-norm of v captured by the span of the orthonormal basis B.
inline double captured_fraction(const Eigen::VectorXd& v, const Eigen::MatrixXd& B, const Eigen::VectorXd& q) {
  if (B.cols() == 0) return 0.0;
  const Eigen::VectorXd c = B.transpose() * (q.asDiagonal() * v);
  return c.norm() / std::sqrt(v.dot(q.asDiagonal() * v));
}

}  // namespace detail

/// Top k_max eigenpairs of the second variation operator at the base.
inline SpectralDecomposition spectrum(const Surface& base, std::size_t k_max, double marker_tol = 1e-3) {
  const Eigen::MatrixXd L = second_variation(base);
  const Eigen::VectorXd q = q_weights(base);
  const auto N = L.rows();
  const auto K = static_cast<Eigen::Index>(std::min<std::size_t>(k_max, static_cast<std::size_t>(N)));
  SpectralDecomposition sd;
  sd.approximate = base.shrinker_residual().cwiseAbs().maxCoeff() > 1e-6;
  sd.eigenvalues.resize(K);
  sd.eigenfields.resize(N, K);
  if (base.topology() == Topology::Periodic) {
    const Eigen::VectorXd sq = q.cwiseSqrt();
    Eigen::MatrixXd S = sq.asDiagonal() * L * sq.cwiseInverse().asDiagonal();
    S = 0.5 * (S + S.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    for (Eigen::Index k = 0; k < K; ++k) {
      sd.eigenvalues(k) = es.eigenvalues()(N - 1 - k);
      sd.eigenfields.col(k) = sq.cwiseInverse().asDiagonal() * es.eigenvectors().col(N - 1 - k);
    }
  } else {
    Eigen::EigenSolver<Eigen::MatrixXd> es(L);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(N));
    for (Eigen::Index i = 0; i < N; ++i) order[static_cast<std::size_t>(i)] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return es.eigenvalues()(a).real() > es.eigenvalues()(b).real(); });
    std::vector<Eigen::VectorXd> fields;
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto i = order[static_cast<std::size_t>(k)];
      sd.eigenvalues(k) = es.eigenvalues()(i).real();
      fields.push_back(es.eigenvectors().col(i).real());
    }
    const Eigen::MatrixXd B = detail::q_orthonormal_basis(fields, q);
    require(B.cols() == K, ErrorCode::SingularLinearization, "eigenfields of L are linearly dependent");
    sd.eigenfields = B;
  }
  // sign convention: the largest-magnitude sample of each eigenfield is positive
  for (Eigen::Index k = 0; k < K; ++k) {
    Eigen::Index imax;
    sd.eigenfields.col(k).cwiseAbs().maxCoeff(&imax);
    if (sd.eigenfields(imax, k) < 0) sd.eigenfields.col(k) *= -1.0;
  }
  const Eigen::MatrixXd gram = sd.eigenfields.transpose() * q.asDiagonal() * sd.eigenfields;
  sd.orthonormality_residual = (gram - Eigen::MatrixXd::Identity(K, K)).cwiseAbs().maxCoeff();

  const auto gf = group_fields(base);
  const Eigen::MatrixXd Bd = detail::q_orthonormal_basis({gf.dilation}, q);
  const Eigen::MatrixXd Bt = detail::q_orthonormal_basis(gf.translations, q);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::VectorXd v = sd.eigenfields.col(k);
    const Eigen::VectorXd r = L * v - sd.eigenvalues(k) * v;
    sd.eigen_residual = std::max(sd.eigen_residual, std::sqrt(r.dot(q.asDiagonal() * r)));
    if (detail::captured_fraction(v, Bd, q) > 1 - marker_tol)
      sd.markers.push_back(ModeMarker::Dilation);
    else if (detail::captured_fraction(v, Bt, q) > 1 - marker_tol)
      sd.markers.push_back(ModeMarker::Translation);
    else
      sd.markers.push_back(ModeMarker::None);
  }
  return sd;
}

/// Relative Q-norm residuals of L H = H and L <n, e_i> = <n, e_i>/2.
struct GroupIdentities {
  double dilation = 0.0;
  double translation = 0.0;  // worst over the available directions
};

inline GroupIdentities group_identities(const Surface& base) {
  const Eigen::MatrixXd L = second_variation(base);
  const auto gf = group_fields(base);
  auto rel = [&](const Eigen::VectorXd& f, double lambda) {
    return q_norm(base, L * f - lambda * f) / q_norm(base, f);
  };
  GroupIdentities gi;
  gi.dilation = rel(gf.dilation, 1.0);
  for (const auto& t : gf.translations) gi.translation = std::max(gi.translation, rel(t, 0.5));
  return gi;
}

inline void write_spectrum_csv(std::ostream& os, const SpectralDecomposition& sd) {
  os << "index,eigenvalue,marker\n";
  os.precision(17);
  for (Eigen::Index k = 0; k < sd.eigenvalues.size(); ++k)
    os << k << ',' << sd.eigenvalues(k) << ',' << to_string(sd.markers[static_cast<std::size_t>(k)]) << '\n';
}

// ---- stability -------------------------------------------------------------

enum class StabilityVerdict { Stable, Unstable, Ambiguous };

inline std::string to_string(StabilityVerdict v) {
  switch (v) {
    case StabilityVerdict::Stable: return "stable";
    case StabilityVerdict::Unstable: return "unstable";
    default: return "ambiguous";
  }
}

struct StabilityOptions {
  std::size_t k_max = 24;
  double ambiguity = 1e-6;      // distance of an eigenvalue to 0, 1/2 or 1 that is not resolved
  double orthogonality = 1e-3;  // captured fraction below which a mode is orthogonal to the group span
};

struct StabilityReport {
  StabilityVerdict verdict = StabilityVerdict::Stable;
  int positive = 0;      // eigenvalues > ambiguity
  int group_modes = 0;   // positive modes lying in span{H, <n, e_i>}
  int index = 0;         // positive modes Q-orthogonal to that span
  std::vector<double> unstable_eigenvalues;
  std::vector<Eigen::VectorXd> unstable_fields;
  std::string sector;    // "full" or "axisymmetric"
  std::string note;
  SpectralDecomposition spectrum;
};

/// Stability modulo translations and dilations.
inline StabilityReport stability_report(const Surface& base, const StabilityOptions& opt = {}) {
  StabilityReport rep;
  rep.sector = base.kind() == SurfaceKind::Curve ? "full" : "axisymmetric";
  rep.spectrum = spectrum(base, opt.k_max);
  const Eigen::VectorXd q = q_weights(base);
  const auto gf = group_fields(base);
  std::vector<Eigen::VectorXd> all = gf.translations;
  all.insert(all.begin(), gf.dilation);
  const Eigen::MatrixXd G = detail::q_orthonormal_basis(all, q);
  bool ambiguous = false;
  for (Eigen::Index k = 0; k < rep.spectrum.eigenvalues.size(); ++k) {
    const double lam = rep.spectrum.eigenvalues(k);
    if (std::abs(lam) < opt.ambiguity) {
      ambiguous = true;
      rep.note += "eigenvalue " + std::to_string(lam) + " within threshold of 0; ";
      continue;
    }
    if (lam <= 0) continue;
    ++rep.positive;
    const double frac = detail::captured_fraction(rep.spectrum.eigenfields.col(k), G, q);
    if (frac > 1 - opt.orthogonality) {
      ++rep.group_modes;
    } else if (frac < opt.orthogonality) {
      if (std::abs(lam - 0.5) < opt.ambiguity || std::abs(lam - 1.0) < opt.ambiguity) {
        ambiguous = true;
        rep.note += "non-group eigenvalue " + std::to_string(lam) + " degenerate with a group mode; ";
      }
      ++rep.index;
      rep.unstable_eigenvalues.push_back(lam);
      rep.unstable_fields.emplace_back(rep.spectrum.eigenfields.col(k));
    } else {
      ambiguous = true;
      rep.note += "positive mode " + std::to_string(lam) + " mixes with the group span; ";
    }
  }
  rep.verdict = ambiguous ? StabilityVerdict::Ambiguous : rep.index > 0 ? StabilityVerdict::Unstable : StabilityVerdict::Stable;
  return rep;
}

// ---- Angenent torus by shooting -------------------------------------------

struct ShootingOptions {
  double r0_lo = 0.3;
  double r0_hi = 0.6;
  double ode_tol = 1e-12;
  double max_arclength = 30.0;
  double min_step = 1e-14;
  double r0_tol = 1e-13;
  std::size_t n_samples = 256;
  double residual_tol = 1e-5;
  double closure_tol = 1e-9;
  std::size_t scan_points = 7;  // tabulated defect values across the bracket
};

struct ShootingResult {
  double r0 = 0.0;
  double return_radius = 0.0;
  double half_length = 0.0;
  double closure_defect = 0.0;
  double residual_sup = 0.0;
  int iterations = 0;
  bool success = false;
  std::vector<std::pair<double, double>> defect_table;  // (r0, defect)
  std::optional<Surface> profile;
};

namespace detail {

// Shrinker profile (r, z, alpha) by arclength: alpha' = <x,n>/2 - n_r/r
// with n = (sin alpha, -cos alpha). The equation is orientation free.
using ShootState = std::array<double, 3>;

inline void shooting_rhs(const ShootState& y, ShootState& dy, double /*s*/) {
  const double r = y[0], z = y[1], a = y[2];
  const double ca = std::cos(a), sa = std::sin(a);
  dy[0] = ca;
  dy[1] = sa;
  dy[2] = 0.5 * (r * sa - z * ca) - sa / r;
}

struct HalfProfile {
  double defect = 0.0;  // cos alpha at the first downward crossing of z = 0
  double length = 0.0;
  ShootState end{};
};

// Integrates from (r0, 0) launched vertically until z returns to 0.
inline HalfProfile shoot(double r0, const ShootingOptions& opt) {
  namespace odeint = boost::numeric::odeint;
  using Stepper = odeint::runge_kutta_dopri5<ShootState>;
  auto stepper = odeint::make_dense_output(opt.ode_tol, opt.ode_tol, Stepper());
  ShootState y{r0, 0.0, std::numbers::pi / 2};
  stepper.initialize(y, 0.0, 1e-3);
  while (true) {
    const auto [s0, s1] = stepper.do_step(shooting_rhs);
    require(s1 - s0 > opt.min_step, ErrorCode::StiffODE, "shooting step size underflow at r0 = " + std::to_string(r0));
    const ShootState& cur = stepper.current_state();
    require(cur[0] > 1e-6, ErrorCode::StiffODE, "profile reached the axis at r0 = " + std::to_string(r0));
    require(s1 < opt.max_arclength, ErrorCode::NoConvergence, "profile did not return to z = 0 at r0 = " + std::to_string(r0));
    if (s0 > 0.0 && cur[1] <= 0.0 && stepper.previous_state()[1] > 0.0) {
      ShootState tmp;
      auto zf = [&](double s) {
        stepper.calc_state(s, tmp);
        return tmp[1];
      };
      const auto root = bisect(zf, s0, s1, 1e-15);
      HalfProfile h;
      h.length = root.x;
      stepper.calc_state(root.x, h.end);
      h.defect = std::cos(h.end[2]);
      return h;
    }
  }
}

// Samples the closed profile (half profile plus its mirror in z = 0) at
// equal arclength on a periodic grid of n points.
inline Points sample_closed_profile(double r0, double half_length, std::size_t n, const ShootingOptions& opt) {
  namespace odeint = boost::numeric::odeint;
  using Stepper = odeint::runge_kutta_dopri5<ShootState>;
  const double total = 2.0 * half_length;
  std::vector<double> targets;
  for (std::size_t j = 0; j < n; ++j) {
    const double s = total * static_cast<double>(j) / static_cast<double>(n);
    targets.push_back(s <= half_length ? s : total - s);
  }
  std::vector<std::size_t> order(n);
  for (std::size_t j = 0; j < n; ++j) order[j] = j;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return targets[a] < targets[b]; });
  // Exact integrator stops at each target: dense-output interpolation noise
  // is amplified by the fourth derivatives inside L.
  std::vector<double> times;
  for (std::size_t j : order) times.push_back(targets[j]);
  std::vector<ShootState> states;
  ShootState y{r0, 0.0, std::numbers::pi / 2};
  odeint::integrate_times(odeint::make_controlled(opt.ode_tol, opt.ode_tol, Stepper()), shooting_rhs, y, times.begin(),
                          times.end(), 1e-3, [&](const ShootState& x, double) { states.push_back(x); });
  Points P(static_cast<Eigen::Index>(n), 2);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    const bool mirrored = total * static_cast<double>(j) / static_cast<double>(n) > half_length;
    P(static_cast<Eigen::Index>(j), 0) = states[k][0];
    P(static_cast<Eigen::Index>(j), 1) = mirrored ? -states[k][1] : states[k][1];
  }
  return P;
}

}  // namespace detail

/// Closure defect cos(alpha) where the half profile launched at r0 returns to z = 0.
inline double closure_defect(double r0, const ShootingOptions& opt = {}) { return detail::shoot(r0, opt).defect; }

inline ShootingResult shoot_angenent_torus(const ShootingOptions& opt = {}) {
  require(opt.r0_lo > 0.0 && opt.r0_hi > opt.r0_lo && opt.r0_hi < 2.0 * std::numbers::sqrt2, ErrorCode::InvalidArgument,
          "shooting bracket must lie inside (0, 2 sqrt 2)");
  ShootingResult res;
  for (std::size_t i = 0; i < opt.scan_points; ++i) {
    const double r0 = opt.r0_lo + (opt.r0_hi - opt.r0_lo) * static_cast<double>(i) / static_cast<double>(opt.scan_points - 1);
    res.defect_table.emplace_back(r0, closure_defect(r0, opt));
  }
  const auto root = bisect([&](double r0) { return closure_defect(r0, opt); }, opt.r0_lo, opt.r0_hi, opt.r0_tol);
  res.r0 = root.x;
  res.iterations = root.iterations;
  const auto half = detail::shoot(res.r0, opt);
  res.closure_defect = half.defect;
  res.half_length = half.length;
  res.return_radius = half.end[0];
  auto grid = make_grid(opt.n_samples, Topology::Periodic);
  res.profile.emplace(SurfaceKind::Revolution, grid, detail::sample_closed_profile(res.r0, half.length, opt.n_samples, opt));
  res.residual_sup = res.profile->shrinker_residual().cwiseAbs().maxCoeff();
  res.success = res.residual_sup < opt.residual_tol && std::abs(res.closure_defect) < opt.closure_tol &&
                !self_intersects(res.profile->points(), true);
  return res;
}

}  // namespace shrinkflow
