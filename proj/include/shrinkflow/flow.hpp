#pragma once

// Time stepping of the rescaled flow x_t = (<x,n>/2 - H) n.
//
// Graphical runs evolve u_t = M u over a fixed base. Intrinsic runs move the
// sample points of a periodic curve/profile by the normal velocity and then
// redistribute them at equal arclength.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shrinkflow/errors.hpp"
#include "shrinkflow/geometry.hpp"
#include "shrinkflow/graph.hpp"

namespace shrinkflow {

enum class Scheme { RK4, SemiImplicit };

enum class Termination { Horizon, Converged, GraphOverflow, Blowup, SelfIntersection };

inline std::string to_string(Termination t) {
  switch (t) {
    case Termination::Horizon: return "horizon";
    case Termination::Converged: return "converged";
    case Termination::GraphOverflow: return "GraphOverflow";
    case Termination::Blowup: return "blowup";
    case Termination::SelfIntersection: return "SelfIntersection";
  }
  return "unknown";
}

struct FlowOptions {
  Scheme scheme = Scheme::RK4;
  double sigma = 0.2;        // dt = sigma h^2
  double dt = 0.0;           // explicit override when positive
  double converge_tol = 1e-9;
  bool stop_on_converge = true;
  double reach_fraction = 0.8;
  double max_slope = 2.0;
  double blowup = 1e6;
  std::size_t snapshot_stride = 0;  // 0: initial and final only
  std::size_t max_steps = 10'000'000;
  // intrinsic runs
  std::size_t intersection_every = 10;
  double max_curvature = 100.0;
  double collapse_fraction = 0.0;  // stop once length < fraction * initial length
  // optional orbit-distance observer, called every observe_stride steps or
  // every observe_interval of rescaled time, and on the final state
  std::function<double(const Surface&)> observer;
  std::size_t observe_stride = 0;
  double observe_interval = 0.0;
};

struct FlowRecord {
  double t = 0.0;
  double F = 0.0;
  double grad_norm2 = 0.0;
  double vel_l1 = 0.0;
  double sup_u = std::numeric_limits<double>::quiet_NaN();
  double sup_du = std::numeric_limits<double>::quiet_NaN();
  double orbit_dist = std::numeric_limits<double>::quiet_NaN();
  double dt = 0.0;
};

struct Snapshot {
  double t = 0.0;
  Eigen::VectorXd u;  // empty for intrinsic runs
  Points points;
};

struct FlowTrajectory {
  SurfaceKind kind = SurfaceKind::Curve;
  std::vector<FlowRecord> records;
  std::vector<Snapshot> snapshots;
  Termination termination = Termination::Horizon;
  std::string message;
  std::optional<Surface> final_state;
  Eigen::VectorXd final_u;  // graphical runs only
};

namespace detail {

class ObserveClock {
 public:
  explicit ObserveClock(const FlowOptions& opt, double t0)
      : on_(static_cast<bool>(opt.observer) && (opt.observe_stride > 0 || opt.observe_interval > 0.0)),
        stride_(opt.observe_stride),
        interval_(opt.observe_interval),
        next_(t0) {}

  bool enabled() const { return on_; }

  bool due(std::size_t k, double t) {
    if (!on_) return false;
    if (stride_ > 0) return k % stride_ == 0;
    if (t + 1e-12 < next_) return false;
    next_ = t + interval_;
    return true;
  }

 private:
  bool on_;
  std::size_t stride_;
  double interval_;
  double next_;
};

}  // namespace detail

/// The graph of u over the base as a surface in its own right.
inline Surface graph_embedding(const Surface& base, const Eigen::VectorXd& u, double t = 0.0) {
  Points p = base.points() + (base.geometry().normal.array().colwise() * u.array()).matrix();
  return base.with_points(std::move(p), t);
}

/// Time step dt = sigma h^2 with h the smallest arclength spacing.
inline double default_dt(const Surface& base, double sigma) {
  const auto& s = base.geometry().arclength;
  double h = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 1; i < s.size(); ++i) h = std::min(h, s(i) - s(i - 1));
  if (base.topology() == Topology::Periodic) h = std::min(h, base.geometry().length - s(s.size() - 1) + s(0));
  else h = std::min(h, 2.0 * s(0));
  return sigma * h * h;
}

namespace detail {

inline double max_slope(const Surface& base, const Eigen::VectorXd& u) {
  return ((base.grid().d1() * u).array() / base.geometry().speed.array()).abs().maxCoeff();
}

// Returns sup|grad u|.
inline double check_graph_state(const Surface& base, const Eigen::VectorXd& u, const FlowOptions& opt) {
  require(u.allFinite(), ErrorCode::Blowup, "non-finite graph function");
  const double sup = u.cwiseAbs().maxCoeff();
  require(sup <= opt.blowup, ErrorCode::Blowup, "sup|u| exceeds the blowup threshold");
  require(sup <= opt.reach_fraction * base.geometry().reach, ErrorCode::GraphOverflow,
          "sup|u| left the graphical neighbourhood");
  const double slope = max_slope(base, u);
  require(slope <= opt.max_slope, ErrorCode::GraphOverflow, "sup|grad u| left the graphical neighbourhood");
  return slope;
}

inline Eigen::VectorXd rk4_step(const Surface& base, const Eigen::VectorXd& u, const Eigen::VectorXd& k1, double dt) {
  const Eigen::VectorXd k2 = flow_operator(base, u + 0.5 * dt * k1);
  const Eigen::VectorXd k3 = flow_operator(base, u + 0.5 * dt * k2);
  const Eigen::VectorXd k4 = flow_operator(base, u + dt * k3);
  return u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// Implicit-linear stepper state; the factorisation depends on dt only.
class SemiImplicitSolver {
 public:
  SemiImplicitSolver(const Surface& base, double dt) : L0_(second_variation(base)) {
    const auto N = L0_.rows();
    lu_.compute(Eigen::MatrixXd::Identity(N, N) - dt * L0_);
    dt_ = dt;
  }
  double dt() const { return dt_; }
  Eigen::VectorXd step(const Surface& base, const Eigen::VectorXd& u) const {
    const Eigen::VectorXd rhs = u + dt_ * (flow_operator(base, u) - L0_ * u);
    return lu_.solve(rhs);
  }

 private:
  Eigen::MatrixXd L0_;
  Eigen::PartialPivLU<Eigen::MatrixXd> lu_;
  double dt_ = 0.0;
};

/// One step of u_t = M u.
inline Eigen::VectorXd step_graph(const Surface& base, const Eigen::VectorXd& u, double dt, Scheme scheme = Scheme::RK4) {
  require(dt > 0.0, ErrorCode::InvalidArgument, "time step must be positive");
  check_field(base, u);
  if (scheme == Scheme::SemiImplicit) return SemiImplicitSolver(base, dt).step(base, u);
  return detail::rk4_step(base, u, flow_operator(base, u), dt);
}

/// Graphical rescaled flow over a base. Errors during the run end it and are
/// reported as the termination reason.
inline FlowTrajectory run_graph_flow(const Surface& base, const Eigen::VectorXd& u0, double horizon, const FlowOptions& opt = {}) {
  require(horizon >= 0.0, ErrorCode::InvalidArgument, "horizon must be non-negative");
  check_field(base, u0);
  FlowTrajectory traj;
  traj.kind = base.kind();
  const double dt = opt.dt > 0.0 ? opt.dt : default_dt(base, opt.sigma);
  std::optional<SemiImplicitSolver> implicit;
  if (opt.scheme == Scheme::SemiImplicit) implicit.emplace(base, dt);

  detail::ObserveClock clock(opt, 0.0);
  auto record = [&](double t, const Eigen::VectorXd& u, const GraphQuantities& q, double step_dt, std::size_t k, double slope) {
    FlowRecord r;
    r.t = t;
    r.F = q.F;
    r.grad_norm2 = q.grad_norm2;
    r.vel_l1 = q.vel_l1;
    r.sup_u = u.cwiseAbs().maxCoeff();
    r.sup_du = slope;
    r.dt = step_dt;
    if (clock.due(k, t)) r.orbit_dist = opt.observer(graph_embedding(base, u, t));
    traj.records.push_back(r);
  };
  auto snapshot = [&](double t, const Eigen::VectorXd& u) {
    traj.snapshots.push_back({t, u, graph_embedding(base, u, t).points()});
  };

  Eigen::VectorXd u = u0;
  double t = 0.0;
  GraphQuantities q = graph_quantities(base, u);
  record(t, u, q, 0.0, 0, detail::max_slope(base, u));
  snapshot(t, u);
  std::size_t k = 0;
  traj.termination = Termination::Horizon;
  auto converged = [&]() { return opt.stop_on_converge && q_norm(base, q.flow) < opt.converge_tol; };
  if (converged()) {
    traj.termination = Termination::Converged;
  } else {
    try {
      while (t < horizon - 1e-12 && k < opt.max_steps) {
        const double h = std::min(dt, horizon - t);
        Eigen::VectorXd next = !implicit ? detail::rk4_step(base, u, q.flow, h)
                               : h == dt ? implicit->step(base, u)
                                         : step_graph(base, u, h, opt.scheme);
        const double slope = detail::check_graph_state(base, next, opt);
        u = std::move(next);
        t += h;
        ++k;
        q = graph_quantities(base, u);
        record(t, u, q, h, k, slope);
        if (opt.snapshot_stride > 0 && k % opt.snapshot_stride == 0) snapshot(t, u);
        if (converged()) {
          traj.termination = Termination::Converged;
          break;
        }
      }
    } catch (const Error& e) {
      traj.termination = e.code() == ErrorCode::GraphOverflow ? Termination::GraphOverflow : Termination::Blowup;
      traj.message = e.what();
    }
  }
  if (traj.snapshots.back().t != t) snapshot(t, u);
  traj.final_u = u;
  traj.final_state = graph_embedding(base, u, t);
  if (clock.enabled() && std::isnan(traj.records.back().orbit_dist)) traj.records.back().orbit_dist = opt.observer(*traj.final_state);
  return traj;
}

// ---- intrinsic curve flow -------------------------------------------------

namespace detail {

struct LightGeometry {
  Points normal;
  Eigen::VectorXd kappa, H, xdotn, gauss, measure;
};

// Geometry needed for the velocity and the diagnostics of a periodic
// curve/profile, without the quadratic-cost reach and arclength tables.
inline LightGeometry light_geometry(SurfaceKind kind, const SpectralGrid& g, const Points& P) {
  const auto N = P.rows();
  LightGeometry G;
  const Points dp = g.d1() * P;
  const Points ddp = g.d2() * P;
  const Eigen::VectorXd speed = dp.rowwise().norm();
  const double sg = shoelace(P) >= 0.0 ? 1.0 : -1.0;
  G.normal.resize(N, 2);
  G.normal.col(0) = sg * dp.col(1).cwiseQuotient(speed);
  G.normal.col(1) = -sg * dp.col(0).cwiseQuotient(speed);
  G.kappa = (sg * (dp.col(0).array() * ddp.col(1).array() - dp.col(1).array() * ddp.col(0).array()) / speed.array().cube()).matrix();
  G.H = G.kappa;
  if (kind == SurfaceKind::Revolution) G.H.array() += G.normal.col(0).array() / P.col(0).array();
  G.xdotn = (P.array() * G.normal.array()).rowwise().sum();
  G.gauss = (-0.25 * P.rowwise().squaredNorm().array()).exp();
  G.measure = speed * g.spacing();
  if (kind == SurfaceKind::Revolution) G.measure.array() *= 2.0 * std::numbers::pi * P.col(0).array();
  return G;
}

inline Points normal_velocity(SurfaceKind kind, const SpectralGrid& g, const Points& P) {
  const auto G = light_geometry(kind, g, P);
  const Eigen::ArrayXd V = 0.5 * G.xdotn.array() - G.H.array();
  return (G.normal.array().colwise() * V).matrix();
}

// Redistributes a closed periodic curve to equal arclength spacing using
// its trigonometric interpolant; s(theta) is inverted by Newton's method.
class EqualArclength {
 public:
  explicit EqualArclength(std::size_t n) : n_(n), kmax_(n / 2) {
    const auto N = static_cast<Eigen::Index>(n);
    cos_.resize(static_cast<Eigen::Index>(kmax_ + 1), N);
    sin_.resize(static_cast<Eigen::Index>(kmax_ + 1), N);
    for (std::size_t k = 0; k <= kmax_; ++k) {
      for (Eigen::Index j = 0; j < N; ++j) {
        const double a = 2.0 * std::numbers::pi * static_cast<double>(k) * static_cast<double>(j) / static_cast<double>(n);
        cos_(static_cast<Eigen::Index>(k), j) = std::cos(a);
        sin_(static_cast<Eigen::Index>(k), j) = std::sin(a);
      }
    }
  }

  Points operator()(const SpectralGrid& g, const Points& P) const {
    const auto N = P.rows();
    const Points dp = g.d1() * P;
    const Eigen::VectorXd speed = dp.rowwise().norm();
    // Real Fourier coefficients: f = a0 + sum fac_k (a_k cos k t + b_k sin k t).
    const Eigen::VectorXd sa = cos_ * speed / static_cast<double>(n_);
    const Eigen::VectorXd sb = sin_ * speed / static_cast<double>(n_);
    const Eigen::MatrixXd xa = cos_ * P / static_cast<double>(n_);
    const Eigen::MatrixXd xb = sin_ * P / static_cast<double>(n_);
    const double mean = sa(0);
    const double length = 2.0 * std::numbers::pi * mean;

    std::vector<std::complex<double>> e(kmax_ + 1);
    auto powers = [&](double theta) {
      const std::complex<double> z(std::cos(theta), std::sin(theta));
      e[0] = 1.0;
      for (std::size_t k = 1; k <= kmax_; ++k) e[k] = e[k - 1] * z;
    };
    // Exponential filter on the top modes: a sawtooth in the parametrisation
    // aliases near Nyquist, where d1 is blind, and grows without it.
    auto factor = [&](std::size_t k) {
      if (n_ % 2 == 0 && k == kmax_) return 0.0;
      const double x = static_cast<double>(k) / static_cast<double>(kmax_);
      return 2.0 * std::exp(-36.0 * std::pow(x, 36));
    };
    // s(theta) - s(0) and s'(theta) from the speed coefficients.
    auto arclength = [&](double theta, double& ds) {
      powers(theta);
      double s = mean * theta;
      ds = mean;
      for (std::size_t k = 1; k <= kmax_; ++k) {
        const auto K = static_cast<Eigen::Index>(k);
        const double kk = static_cast<double>(k);
        const double c = e[k].real(), sn = e[k].imag();
        s += factor(k) * (sa(K) * sn + sb(K) * (1.0 - c)) / kk;
        ds += factor(k) * (sa(K) * c + sb(K) * sn);
      }
      return s;
    };

    Points out(N, 2);
    out.row(0) = P.row(0);
    double theta = 0.0, ds_prev = speed(0);
    for (Eigen::Index j = 1; j < N; ++j) {
      const double target = length * static_cast<double>(j) / static_cast<double>(N);
      theta += length / static_cast<double>(N) / ds_prev;
      for (int it = 0; it < 30; ++it) {
        double ds;
        const double f = arclength(theta, ds) - target;
        const double step = f / ds;
        theta -= step;
        ds_prev = ds;
        if (std::abs(step) < 1e-14) break;
      }
      powers(theta);
      for (int c = 0; c < 2; ++c) {
        double v = xa(0, c);
        for (std::size_t k = 1; k <= kmax_; ++k) {
          const auto K = static_cast<Eigen::Index>(k);
          v += factor(k) * (xa(K, c) * e[k].real() + xb(K, c) * e[k].imag());
        }
        out(j, c) = v;
      }
    }
    return out;
  }

 private:
  std::size_t n_, kmax_;
  Eigen::MatrixXd cos_, sin_;
};

}  // namespace detail

/// Intrinsic rescaled flow of a closed periodic curve or torus profile.
inline FlowTrajectory run_curve_flow(const Surface& curve0, double horizon, const FlowOptions& opt = {}) {
  require(curve0.topology() == Topology::Periodic, ErrorCode::InvalidArgument,
          "intrinsic flow needs a periodic curve or profile");
  require(!self_intersects(curve0.points(), true), ErrorCode::SelfIntersection, "initial curve is not simple");
  const auto& g = curve0.grid();
  const auto kind = curve0.kind();
  const auto N = static_cast<Eigen::Index>(curve0.size());
  const detail::EqualArclength redistribute(curve0.size());

  FlowTrajectory traj;
  traj.kind = kind;
  Points P = redistribute(g, curve0.points());
  double t = curve0.t();
  const double t_start = t;

  detail::ObserveClock clock(opt, t);
  auto diagnostics = [&](const Points& X, double step_dt, std::size_t k) {
    const auto G = detail::light_geometry(kind, g, X);
    const Eigen::ArrayXd V = 0.5 * G.xdotn.array() - G.H.array();
    const Eigen::ArrayXd area = G.gauss.array() * G.measure.array();
    FlowRecord r;
    r.t = t;
    r.F = area.sum();
    r.grad_norm2 = (V.square() * area).sum();
    r.vel_l1 = (V.abs() * area).sum();
    r.dt = step_dt;
    if (clock.due(k, t)) r.orbit_dist = opt.observer(curve0.with_points(X, t));
    traj.records.push_back(r);
    return G.kappa.cwiseAbs().maxCoeff();
  };

  diagnostics(P, 0.0, 0);
  traj.snapshots.push_back({t, Eigen::VectorXd(), P});
  traj.termination = Termination::Horizon;
  std::size_t k = 0;
  auto length = [&](const Points& X) { return (g.d1() * X).rowwise().norm().sum() * g.spacing(); };
  const double len0 = length(P);
  // last state that passed every check, and its record
  Points good_P = P;
  double good_t = t;
  std::size_t good_record = 0;
  try {
    while (t < t_start + horizon - 1e-12 && k < opt.max_steps) {
      const double len = length(P);
      require(len >= opt.collapse_fraction * len0, ErrorCode::Blowup, "curve length collapsed");
      double h;
      if (opt.dt > 0.0) {
        h = opt.dt;
      } else {
        const double hs = len / static_cast<double>(N);
        h = opt.sigma * hs * hs;
      }
      h = std::min(h, t_start + horizon - t);
      const Points k1 = detail::normal_velocity(kind, g, P);
      const Points k2 = detail::normal_velocity(kind, g, P + 0.5 * h * k1);
      const Points k3 = detail::normal_velocity(kind, g, P + 0.5 * h * k2);
      const Points k4 = detail::normal_velocity(kind, g, P + h * k3);
      Points next = P + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      require(next.allFinite(), ErrorCode::Blowup, "non-finite curve samples");
      if (kind == SurfaceKind::Revolution)
        require(next.col(0).minCoeff() > 0.0, ErrorCode::Blowup, "profile reached the axis");
      P = redistribute(g, next);
      if (kind == SurfaceKind::Revolution)
        require(P.col(0).minCoeff() > 0.0, ErrorCode::Blowup, "profile reached the axis");
      t += h;
      ++k;
      const double kmax = diagnostics(P, h, k);
      require(kmax <= opt.max_curvature, ErrorCode::Blowup, "curvature exceeded the blowup threshold");
      require(P.cwiseAbs().maxCoeff() <= opt.blowup, ErrorCode::Blowup, "curve escaped to infinity");
      if (opt.intersection_every > 0 && k % opt.intersection_every == 0)
        require(!self_intersects(P, true), ErrorCode::SelfIntersection, "curve self-intersected");
      good_P = P;
      good_t = t;
      good_record = traj.records.size() - 1;
      if (opt.snapshot_stride > 0 && k % opt.snapshot_stride == 0) traj.snapshots.push_back({t, Eigen::VectorXd(), P});
      if (opt.stop_on_converge && std::sqrt(traj.records.back().grad_norm2) < opt.converge_tol) {
        traj.termination = Termination::Converged;
        break;
      }
    }
  } catch (const Error& e) {
    traj.termination = e.code() == ErrorCode::SelfIntersection ? Termination::SelfIntersection : Termination::Blowup;
    traj.message = e.what();
  }
  if (traj.snapshots.back().t != good_t) traj.snapshots.push_back({good_t, Eigen::VectorXd(), good_P});
  try {
    traj.final_state = curve0.with_points(good_P, good_t);
    auto& last = traj.records[good_record];
    if (clock.enabled() && std::isnan(last.orbit_dist)) last.orbit_dist = opt.observer(*traj.final_state);
  } catch (const Error&) {
    // a degenerate final curve is still reported through the records
  }
  return traj;
}

// ---- diagnostics ------------------------------------------------------------

struct IdentityResidual {
  std::vector<double> t;
  std::vector<double> residual;  // |dF/dt + G| / G at interior records
  std::vector<bool> resolved;    // false where roundoff in F dominates dF
  double max_resolved = 0.0;
};

/// Centred-difference check of dF/dt = -grad_norm2 along a trajectory.
/// Residuals are 0 when both sides are below 1e-12.
inline IdentityResidual gradient_identity_residual(const FlowTrajectory& traj, double t_min = -1e300, double t_max = 1e300) {
  const auto& R = traj.records;
  require(R.size() >= 3, ErrorCode::InvalidArgument, "gradient identity needs at least three records");
  IdentityResidual out;
  const double eps = std::numeric_limits<double>::epsilon();
  for (std::size_t k = 1; k + 1 < R.size(); ++k) {
    if (R[k].t < t_min || R[k].t > t_max) continue;
    const double span = R[k + 1].t - R[k - 1].t;
    const double dF = (R[k + 1].F - R[k - 1].F) / span;
    const double G = R[k].grad_norm2;
    double res;
    bool resolved = true;
    if (std::abs(dF) < 1e-12 && G < 1e-12) {
      res = 0.0;
    } else {
      res = std::abs(dF + G) / std::max(G, 1e-300);
      // change of F over the stencil must dominate its rounding error
      resolved = G * span > 1e3 * eps * std::abs(R[k].F);
    }
    out.t.push_back(R[k].t);
    out.residual.push_back(res);
    out.resolved.push_back(resolved);
    if (resolved) out.max_resolved = std::max(out.max_resolved, res);
  }
  return out;
}

inline void write_trajectory_csv(std::ostream& os, const FlowTrajectory& traj) {
  os << "t,F,grad_norm2,sup_u,sup_du,orbit_dist,dt,vel_l1\n";
  os << std::setprecision(17);
  for (const auto& r : traj.records) {
    os << r.t << ',' << r.F << ',' << r.grad_norm2 << ',' << r.sup_u << ',' << r.sup_du << ',' << r.orbit_dist << ','
       << r.dt << ',' << r.vel_l1 << '\n';
  }
}

}  // namespace shrinkflow
