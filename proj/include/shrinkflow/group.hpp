#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "shrinkflow/errors.hpp"
#include "shrinkflow/flow.hpp"
#include "shrinkflow/geometry.hpp"
#include "shrinkflow/optimize.hpp"

namespace shrinkflow {

/// Element of the conformal linear group acting by x -> a (R x + x0), where
/// R is a rotation by `angle`, preceded by the reflection z -> -z when `flip`.
/// Revolution states only admit angle 0 and axial x0.
struct GroupElement {
  double angle = 0.0;
  bool flip = false;
  Eigen::Vector2d x0 = Eigen::Vector2d::Zero();
  double a = 1.0;

  static GroupElement identity() { return {}; }

  Eigen::Matrix2d linear() const {
    const double c = std::cos(angle), s = std::sin(angle);
    Eigen::Matrix2d R;
    R << c, -s, s, c;
    if (flip) R.col(1) *= -1.0;
    return R;
  }

  Points apply(const Points& p) const {
    if (angle == 0.0 && !flip) return (a * (p.rowwise() + x0.transpose()).array()).matrix();
    const Eigen::Matrix2d R = linear();
    return (a * ((p * R.transpose()).rowwise() + x0.transpose()).array()).matrix();
  }

  Eigen::Vector2d apply(const Eigen::Vector2d& x) const { return a * (linear() * x + x0); }

  GroupElement inverse() const {
    GroupElement g;
    g.flip = flip;
    g.angle = flip ? angle : -angle;  // a reflection is its own inverse
    g.a = 1.0 / a;
    g.x0 = -a * (g.linear() * x0);
    return g;
  }

  /// (g * h)(x) = g(h(x)).
  friend GroupElement operator*(const GroupElement& g, const GroupElement& h) {
    GroupElement r;
    const Eigen::Matrix2d R = g.linear() * h.linear();
    r.flip = R.determinant() < 0.0;
    const Eigen::Matrix2d rot = r.flip ? Eigen::Matrix2d(R * Eigen::Vector2d(1.0, -1.0).asDiagonal()) : R;
    r.angle = std::atan2(rot(1, 0), rot(0, 0));
    r.a = g.a * h.a;
    r.x0 = g.linear() * h.x0 + g.x0 / h.a;
    return r;
  }
};

inline nlohmann::json to_json(const GroupElement& g) {
  return {{"angle", g.angle}, {"flip", g.flip}, {"x0", {g.x0(0), g.x0(1)}}, {"a", g.a}};
}

inline Surface apply_group(const GroupElement& g, const Surface& M) {
  require(g.a > 0.0, ErrorCode::InvalidArgument, "group scale must be positive");
  if (M.kind() == SurfaceKind::Revolution)
    require(g.angle == 0.0 && g.x0(0) == 0.0, ErrorCode::InvalidArgument,
            "revolution states only admit axial translations and the z-reflection");
  return M.with_points(g.apply(M.points()), M.t());
}

// ---- distance to the orbit of a base ---------------------------------------

namespace detail {

// Mean over the points of p of the squared distance to the polyline q.
inline double mean_sq_distance(const Points& p, const Points& q, bool closed) {
  const auto n = q.rows();
  const auto segments = closed ? n : n - 1;
  double total = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const Eigen::RowVector2d x = p.row(i);
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < segments; ++j) {
      const Eigen::RowVector2d A = q.row(j), B = q.row((j + 1) % n);
      const Eigen::RowVector2d AB = B - A;
      const double len2 = AB.squaredNorm();
      const double s = len2 > 0.0 ? std::clamp((x - A).dot(AB) / len2, 0.0, 1.0) : 0.0;
      best = std::min(best, (x - A - s * AB).squaredNorm());
    }
    total += best;
  }
  return total / static_cast<double>(p.rows());
}

struct Moments {
  Eigen::Vector2d centroid;
  double rms = 0.0;
};

// Arclength-weighted centroid and RMS radius of a sampled profile.
inline Moments moments(const Surface& M) {
  const auto& G = M.geometry();
  const Eigen::VectorXd w = G.speed.cwiseProduct(M.grid().weights());
  Moments m;
  m.centroid = (M.points().transpose() * w) / w.sum();
  if (M.kind() == SurfaceKind::Revolution) m.centroid(0) = 0.0;
  m.rms = std::sqrt(((M.points().rowwise() - m.centroid.transpose()).rowwise().squaredNorm().transpose() * w)(0) / w.sum());
  return m;
}

}  // namespace detail

/// Symmetric mean-squared point-to-curve distance between two sampled states.
inline double symmetric_distance(const Surface& M, const Points& other) {
  const bool closed = M.topology() == Topology::Periodic;
  return std::sqrt(0.5 * (detail::mean_sq_distance(M.points(), other, closed) +
                          detail::mean_sq_distance(other, M.points(), closed)));
}

struct OrbitOptions {
  int angle_seeds = 12;
  double x_tol = 1e-10;
  int max_iter = 4000;
  double initial_step = 0.05;
  std::optional<GroupElement> warm_start;
};

struct OrbitDistance {
  double d = 0.0;
  GroupElement g;
  bool converged = false;
};

/// inf over g of the symmetric distance between M and g(base): a moment
/// based seed per trial rotation or reflection, then Nelder-Mead on
/// (log a, translation, angle).
inline OrbitDistance orbit_distance(const Surface& M, const Surface& base, const OrbitOptions& opt = {}) {
  require(M.kind() == base.kind(), ErrorCode::InvalidArgument, "orbit_distance needs states of the same kind");
  const bool rev = M.kind() == SurfaceKind::Revolution;
  const bool closed = base.topology() == Topology::Periodic;
  auto distance = [&](const GroupElement& g) {
    const Points gp = g.apply(base.points());
    return std::sqrt(0.5 * (detail::mean_sq_distance(M.points(), gp, closed) + detail::mean_sq_distance(gp, M.points(), closed)));
  };
  const auto mm = detail::moments(M), mb = detail::moments(base);

  std::vector<GroupElement> seeds;
  if (opt.warm_start) seeds.push_back(*opt.warm_start);
  const int rotations = rev ? 1 : std::max(1, opt.angle_seeds);
  for (bool flip : {false, true}) {
    if (flip && !rev) continue;  // reflections of curves are not in the orientation-preserving search
    for (int k = 0; k < rotations; ++k) {
      GroupElement g;
      g.flip = flip;
      g.angle = rev ? 0.0 : 2.0 * std::numbers::pi * k / rotations;
      g.a = mm.rms / mb.rms;
      g.x0 = mm.centroid / g.a - g.linear() * mb.centroid;
      if (rev) g.x0(0) = 0.0;
      seeds.push_back(g);
    }
  }
  auto best_seed = std::min_element(seeds.begin(), seeds.end(),
                                    [&](const GroupElement& x, const GroupElement& y) { return distance(x) < distance(y); });
  const GroupElement seed = *best_seed;

  auto unpack = [&](const Eigen::VectorXd& p) {
    GroupElement g = seed;
    g.a = std::exp(p(0));
    if (rev) {
      g.x0 = Eigen::Vector2d(0.0, p(1));
    } else {
      g.x0 = Eigen::Vector2d(p(1), p(2));
      g.angle = p(3);
    }
    return g;
  };
  Eigen::VectorXd p0(rev ? 2 : 4);
  p0(0) = std::log(seed.a);
  if (rev) {
    p0(1) = seed.x0(1);
  } else {
    p0 << std::log(seed.a), seed.x0(0), seed.x0(1), seed.angle;
  }
  NelderMeadOptions nm;
  nm.initial_step = opt.initial_step;
  nm.x_tol = opt.x_tol;
  nm.max_iter = opt.max_iter;
  const auto res = nelder_mead([&](const Eigen::VectorXd& p) { return distance(unpack(p)); }, p0, nm);
  OrbitDistance out;
  out.g = unpack(res.x);
  out.d = res.value;
  out.converged = res.converged;
  if (distance(seed) < out.d) {
    out.g = seed;
    out.d = distance(seed);
  }
  return out;
}

// ---- comeback schedule -----------------------------------------------------

/// Literal: x0 = y0, t0 = 1 - b^2 e^{-T2}, a = b; the replay at t = 0 is
///   b (M_{-e^{-T2}} + y0) = b (e^{-T2/2} Mbar_{T2} + y0).
/// Consistent: a = b e^{T2/2}, t0 = 1 - b^2, x0 = e^{-T2/2} y0; the replay
/// at t = 0 is b (Mbar_{T2} + y0). Both map [Tbar, 0] onto MCF times
/// [-e^{-T1}, -e^{-T2}].
enum class ComebackConvention { Literal, Consistent };

inline std::string to_string(ComebackConvention c) { return c == ComebackConvention::Literal ? "literal" : "consistent"; }

struct ComebackSchedule {
  double T1 = 0.0, T2 = 0.0, b = 1.0;
  Eigen::Vector2d y0 = Eigen::Vector2d::Zero();
  GroupElement g;
  ComebackConvention convention = ComebackConvention::Literal;
  double t0 = 0.0, a = 1.0, Tbar = 0.0;
  Eigen::Vector2d x0 = Eigen::Vector2d::Zero();

  /// Rescaled time t -> MCF time a^{-2} (t0 - e^{-t}).
  double correspondence(double t) const { return (t0 - std::exp(-t)) / (a * a); }

  /// |correspondence(0) + e^{-T2}| and |correspondence(Tbar) + e^{-T1}|.
  std::pair<double, double> identity_defects() const {
    return {std::abs(correspondence(0.0) + std::exp(-T2)), std::abs(correspondence(Tbar) + std::exp(-T1))};
  }
};

inline ComebackSchedule comeback_schedule(double T1, double T2, double b, const Eigen::Vector2d& y0 = Eigen::Vector2d::Zero(),
                                          const GroupElement& g = {}, ComebackConvention conv = ComebackConvention::Literal) {
  require(T1 < T2, ErrorCode::InvalidWindow, "comeback schedule needs T1 < T2");
  require(b > 0.0, ErrorCode::InvalidWindow, "comeback schedule needs b > 0");
  ComebackSchedule s;
  s.T1 = T1;
  s.T2 = T2;
  s.b = b;
  s.y0 = y0;
  s.g = g;
  s.convention = conv;
  double arg;
  if (conv == ComebackConvention::Literal) {
    s.a = b;
    s.t0 = 1.0 - b * b * std::exp(-T2);
    s.x0 = y0;
    arg = -b * b * (std::exp(-T2) - std::exp(-T1));
  } else {
    s.a = b * std::exp(0.5 * T2);
    s.t0 = 1.0 - b * b;
    s.x0 = std::exp(-0.5 * T2) * y0;
    arg = b * b * std::expm1(T2 - T1);
  }
  // arg is the log argument minus one, kept separate so small b stays accurate
  require(arg > -1.0, ErrorCode::InvalidWindow, "log argument of the replay window is not positive");
  s.Tbar = -std::log1p(arg);
  return s;
}

// ---- replay through the MCF correspondence ---------------------------------

namespace detail {

// Points of a stored rescaled trajectory at rescaled time tau, linear in time.
inline Points interpolate_snapshots(const FlowTrajectory& traj, double tau) {
  const auto& S = traj.snapshots;
  require(!S.empty(), ErrorCode::RangeError, "trajectory has no snapshots");
  const double eps = 1e-12 * std::max(1.0, std::abs(tau));
  require(tau >= S.front().t - eps && tau <= S.back().t + eps, ErrorCode::RangeError,
          "rescaled time " + std::to_string(tau) + " is outside the stored snapshots [" + std::to_string(S.front().t) + ", " +
              std::to_string(S.back().t) + "]");
  auto hi = std::lower_bound(S.begin(), S.end(), tau, [](const Snapshot& s, double v) { return s.t < v; });
  if (hi == S.end()) return S.back().points;
  if (hi == S.begin() || hi->t == tau) return hi->points;
  const auto lo = hi - 1;
  const double w = (tau - lo->t) / (hi->t - lo->t);
  return (1.0 - w) * lo->points + w * hi->points;
}

}  // namespace detail

/// Replays a stored rescaled trajectory as
///   Mt(x0, t0, a) = (a / sqrt(e^{-t})) (M_{a^{-2}(t0 - e^{-t})} + x0),
/// with MCF samples M_s = sqrt(-s) Mbar_{-log(-s)} and linear time interpolation.
inline FlowTrajectory renormalized_flow(const FlowTrajectory& traj, const Surface& like, const Eigen::Vector2d& x0, double t0,
                                        double a, const std::vector<double>& times) {
  require(a > 0.0, ErrorCode::InvalidArgument, "replay scale must be positive");
  FlowTrajectory out;
  out.kind = traj.kind;
  out.termination = Termination::Horizon;
  for (double t : times) {
    const double s = (t0 - std::exp(-t)) / (a * a);
    require(s < 0.0, ErrorCode::RangeError, "MCF time " + std::to_string(s) + " is not before the singular time");
    const double tau = -std::log(-s);
    const Points mcf = std::sqrt(-s) * detail::interpolate_snapshots(traj, tau);
    const Points P = ((a * std::exp(0.5 * t)) * (mcf.rowwise() + x0.transpose()).array()).matrix();
    const Surface M = like.with_points(P, t);
    FlowRecord r;
    r.t = t;
    r.F = gaussian_area(M);
    const Eigen::ArrayXd V = M.shrinker_residual().array();
    const Eigen::ArrayXd area = M.geometry().gauss.array() * M.geometry().measure.array();
    r.grad_norm2 = (V.square() * area).sum();
    r.vel_l1 = (V.abs() * area).sum();
    out.records.push_back(r);
    out.snapshots.push_back({t, Eigen::VectorXd(), P});
  }
  if (!out.snapshots.empty()) out.final_state = like.with_points(out.snapshots.back().points, out.snapshots.back().t);
  return out;
}

inline FlowTrajectory replay(const FlowTrajectory& traj, const Surface& like, const ComebackSchedule& s,
                             const std::vector<double>& times) {
  FlowTrajectory out = renormalized_flow(traj, like, s.x0, s.t0, s.a, times);
  if (s.g.angle != 0.0 || s.g.flip) {
    GroupElement rot;
    rot.angle = s.g.angle;
    rot.flip = s.g.flip;
    for (auto& snap : out.snapshots) snap.points = rot.apply(snap.points);
    if (out.final_state) out.final_state = apply_group(rot, *out.final_state);
  }
  return out;
}

// ---- no-return experiments -------------------------------------------------

enum class ReturnVerdict { NoReturn, Returned, NeverLeft };

inline std::string to_string(ReturnVerdict v) {
  switch (v) {
    case ReturnVerdict::NoReturn: return "NO_RETURN";
    case ReturnVerdict::Returned: return "RETURNED";
    default: return "NEVER_LEFT";
  }
}

struct NoReturnOptions {
  double delta1 = 0.05;
  double delta2 = 0.1;
  double horizon = 40.0;
  double observe_every = 0.1;  // rescaled time between orbit-distance samples
  FlowOptions flow;
  OrbitOptions orbit;
  bool curve_fallback = true;  // continue with the intrinsic flow after the graph overflows
  double collapse_fraction = 0.25;  // intrinsic phase ends once length drops below this share
};

struct NoReturnResult {
  ReturnVerdict verdict = ReturnVerdict::NeverLeft;
  std::optional<double> t_exit;
  std::optional<double> t_return;
  double min_dist_after_exit = std::numeric_limits<double>::infinity();
  double max_graph_distance = 0.0;  // sup |u| over the graphical part
  std::vector<std::pair<double, double>> distances;  // (t, orbit distance)
  FlowTrajectory graph_phase;
  std::optional<FlowTrajectory> curve_phase;
  Termination termination = Termination::Horizon;
};

inline nlohmann::json to_json(const NoReturnResult& r) {
  nlohmann::json j{{"verdict", to_string(r.verdict)},
                   {"t_exit", r.t_exit ? nlohmann::json(*r.t_exit) : nlohmann::json(nullptr)},
                   {"min_dist_after_exit", r.t_exit ? nlohmann::json(r.min_dist_after_exit) : nlohmann::json(nullptr)},
                   {"termination", to_string(r.termination)},
                   {"evidence", "sampled minimisation over the group; not a proof"}};
  if (r.t_return) j["t_return"] = *r.t_return;
  return j;
}

/// Flows base + u0 and classifies the orbit-distance history against (delta1, delta2).
inline NoReturnResult no_return_experiment(const Surface& base, const Eigen::VectorXd& u0, const NoReturnOptions& opt = {}) {
  require(opt.delta1 < opt.delta2, ErrorCode::InvalidArgument, "no-return thresholds need delta1 < delta2");
  NoReturnResult res;
  GroupElement last = GroupElement::identity();
  auto observer = [&](const Surface& M) {
    OrbitOptions oo = opt.orbit;
    oo.warm_start = last;
    const auto od = orbit_distance(M, base, oo);
    last = od.g;
    return od.d;
  };

  FlowOptions fo = opt.flow;
  fo.stop_on_converge = false;
  fo.observer = observer;
  fo.observe_stride = 0;
  fo.observe_interval = opt.observe_every;
  res.graph_phase = run_graph_flow(base, u0, opt.horizon, fo);
  res.termination = res.graph_phase.termination;
  for (const auto& r : res.graph_phase.records) {
    if (!std::isnan(r.orbit_dist)) res.distances.emplace_back(r.t, r.orbit_dist);
    res.max_graph_distance = std::max(res.max_graph_distance, r.sup_u);
  }
  const double t_graph = res.graph_phase.records.back().t;
  if (res.termination == Termination::GraphOverflow && opt.curve_fallback && base.topology() == Topology::Periodic &&
      t_graph < opt.horizon) {
    // the last accepted graph state, carried on by the intrinsic flow
    const Surface start = base.with_points(res.graph_phase.snapshots.back().points, t_graph);
    fo.collapse_fraction = opt.collapse_fraction;
    res.curve_phase = run_curve_flow(start, opt.horizon - t_graph, fo);
    res.termination = res.curve_phase->termination;
    for (const auto& r : res.curve_phase->records)
      if (!std::isnan(r.orbit_dist) && r.t > t_graph) res.distances.emplace_back(r.t, r.orbit_dist);
  }

  for (const auto& [t, d] : res.distances) {
    if (!res.t_exit) {
      if (d > opt.delta2) res.t_exit = t;
      continue;
    }
    res.min_dist_after_exit = std::min(res.min_dist_after_exit, d);
    if (d < opt.delta1 && !res.t_return) res.t_return = t;
  }
  res.verdict = !res.t_exit ? ReturnVerdict::NeverLeft : res.t_return ? ReturnVerdict::Returned : ReturnVerdict::NoReturn;
  return res;
}

}  // namespace shrinkflow
