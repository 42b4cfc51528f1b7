#pragma once

// Quantitative inequalities measured along rescaled flows: the gradient
// inequality near a shrinker, the ODE decay bound it implies, the dyadic
// series estimate, the weighted time integrals and the drift bound.
// Every constant here is fitted from data and reported with its window.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "shrinkflow/errors.hpp"
#include "shrinkflow/flow.hpp"
#include "shrinkflow/geometry.hpp"
#include "shrinkflow/optimize.hpp"

namespace shrinkflow {

struct InequalitySample {
  double t = 0.0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct InequalityReport {
  std::string name;
  std::vector<InequalitySample> samples;
  std::map<std::string, double> fitted;
  std::size_t checked = 0;  // samples inside the fitted window
  std::size_t violations = 0;
  double worst_ratio = 0.0;  // max lhs / rhs over checked samples
  // log-log data behind the fitted slope, with a flag for the fit window
  std::vector<double> log_x, log_y;
  std::vector<bool> in_fit;
};

inline nlohmann::json to_json(const InequalityReport& r) {
  nlohmann::json fitted = nlohmann::json::object();
  for (const auto& [k, v] : r.fitted) fitted[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
  return {{"name", r.name},
          {"samples", r.samples.size()},
          {"checked", r.checked},
          {"violations", r.violations},
          {"worst_ratio", r.worst_ratio},
          {"fitted", fitted}};
}

inline void write_inequality_csv(std::ostream& os, const InequalityReport& r) {
  os << "t,lhs,rhs\n" << std::setprecision(17);
  for (const auto& s : r.samples) os << s.t << ',' << s.lhs << ',' << s.rhs << '\n';
}

inline void write_regression_csv(std::ostream& os, const InequalityReport& r) {
  os << "log_x,log_y,in_fit\n" << std::setprecision(17);
  for (std::size_t i = 0; i < r.log_x.size(); ++i) os << r.log_x[i] << ',' << r.log_y[i] << ',' << (r.in_fit[i] ? 1 : 0) << '\n';
}

namespace detail {

inline void require_beta(double beta) {
  require(beta > 0.0 && beta < 1.0, ErrorCode::InvalidArgument, "beta must lie in (0, 1)");
}

// Samples with lhs in [floor_lhs, threshold_lhs) are checked.
inline void count_violations(InequalityReport& r, double threshold_lhs, double floor_lhs = 0.0) {
  for (const auto& s : r.samples) {
    if (s.lhs >= threshold_lhs || (floor_lhs > 0.0 && s.lhs < floor_lhs)) continue;
    ++r.checked;
    if (s.rhs > 0.0) r.worst_ratio = std::max(r.worst_ratio, s.lhs / s.rhs);
    if (s.lhs > s.rhs * (1.0 + 1e-12)) ++r.violations;
  }
}

// Trapezoid rule of f(record, t) over [a, b] on the record grid; records at
// clipped ends are interpolated linearly.
template <class Fn>
double record_integral(const std::vector<FlowRecord>& rec, double a, double b, Fn&& f) {
  if (b <= a || rec.size() < 2) return 0.0;
  auto lerp = [&](std::size_t i, double t) {
    if (t == rec[i].t) return rec[i];
    if (t == rec[i + 1].t) return rec[i + 1];
    const double w = (t - rec[i].t) / (rec[i + 1].t - rec[i].t);
    FlowRecord r;
    r.t = t;
    r.F = (1.0 - w) * rec[i].F + w * rec[i + 1].F;
    r.grad_norm2 = (1.0 - w) * rec[i].grad_norm2 + w * rec[i + 1].grad_norm2;
    r.vel_l1 = (1.0 - w) * rec[i].vel_l1 + w * rec[i + 1].vel_l1;
    return r;
  };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < rec.size(); ++i) {
    const double lo = std::max(a, rec[i].t), hi = std::min(b, rec[i + 1].t);
    if (hi <= lo) continue;
    total += 0.5 * (hi - lo) * (f(lerp(i, lo), lo) + f(lerp(i, hi), hi));
  }
  return total;
}

inline double record_value(const std::vector<FlowRecord>& rec, double t, double FlowRecord::*field) {
  require(!rec.empty(), ErrorCode::RangeError, "trajectory has no records");
  const double eps = 1e-12 * std::max(1.0, std::abs(t));
  require(t >= rec.front().t - eps && t <= rec.back().t + eps, ErrorCode::RangeError, "time outside the recorded range");
  auto hi = std::lower_bound(rec.begin(), rec.end(), t, [](const FlowRecord& r, double v) { return r.t < v; });
  if (hi == rec.end()) return rec.back().*field;
  if (hi == rec.begin() || hi->t == t) return (*hi).*field;
  const auto lo = hi - 1;
  const double w = (t - lo->t) / (hi->t - lo->t);
  return (1.0 - w) * ((*lo).*field) + w * ((*hi).*field);
}

}  // namespace detail

// ---- gradient inequality ------------------------------------------------------

struct LojaOptions {
  double floor = 1e-10;         // |F - F_Sigma| below floor * F_Sigma is roundoff
  double tail_fraction = 0.5;   // slope fit over this trailing share of the usable samples
  double safety = 0.5;          // threshold = safety * fitted crossing
};

/// |F - F_Sigma|^{2-beta} <= grad_norm2 per record. The slope s and offset c
/// of log|F - F_Sigma| = s log grad_norm2 + log c are fitted on the tail;
/// the fitted relation crosses the inequality at |dF|*, and only samples
/// below safety * |dF|* (and above the roundoff floor) are checked.
/// Admissible beta < 2 - 1/s.
inline InequalityReport loja_check(const FlowTrajectory& traj, double F_sigma, double beta, const LojaOptions& opt = {}) {
  detail::require_beta(beta);
  InequalityReport r;
  r.name = "loja";
  std::vector<double> lx, ly;
  for (const auto& rec : traj.records) {
    const double dF = std::abs(rec.F - F_sigma);
    r.samples.push_back({rec.t, std::pow(dF, 2.0 - beta), rec.grad_norm2});
    if (dF > opt.floor * std::abs(F_sigma) && rec.grad_norm2 > 0.0) {
      r.log_x.push_back(std::log(rec.grad_norm2));
      r.log_y.push_back(std::log(dF));
      r.in_fit.push_back(false);
    }
  }
  const std::size_t n = r.log_x.size();
  const std::size_t first = n - static_cast<std::size_t>(std::floor(opt.tail_fraction * static_cast<double>(n)));
  for (std::size_t i = first; i < n; ++i) {
    lx.push_back(r.log_x[i]);
    ly.push_back(r.log_y[i]);
    r.in_fit[i] = true;
  }
  r.fitted["loja_beta"] = beta;
  r.fitted["fit_count"] = static_cast<double>(lx.size());
  double threshold = std::numeric_limits<double>::infinity();
  if (lx.size() >= 3) {
    const auto fit = fit_line(lx, ly);
    const double s = fit.slope, c = std::exp(fit.intercept);
    r.fitted["slope"] = s;
    r.fitted["log_c"] = fit.intercept;
    r.fitted["beta_max"] = std::min(1.0, 2.0 - 1.0 / s);
    const double e = s * (2.0 - beta) - 1.0;
    if (e > 0.0) {
      const double g_star = std::pow(c, -(2.0 - beta) / e);
      threshold = opt.safety * c * std::pow(g_star, s);
    }
  }
  // fitted threshold on |dF|, stored on the lhs scale for counting
  r.fitted["threshold"] = threshold;
  detail::count_violations(r, std::isfinite(threshold) ? std::pow(threshold, 2.0 - beta) : threshold,
                           std::pow(opt.floor * std::abs(F_sigma), 2.0 - beta));
  return r;
}

// ---- ODE decay bound ---------------------------------------------------------

enum class DecayDirection { Decreasing, Increasing };

/// Bound on G(t) from |G|^{2-beta} <= |G'|: (G(0)^{beta-1} + (1-beta) t)^{-1/(1-beta)}
/// when decreasing, and the same with G(T) and T - t when increasing.
inline double decay_bound(double G_ref, double beta, double t, DecayDirection dir, double T = 0.0) {
  detail::require_beta(beta);
  require(G_ref >= 0.0, ErrorCode::InvalidArgument, "decay bound needs G >= 0");
  if (G_ref == 0.0) return 0.0;
  const double elapsed = dir == DecayDirection::Decreasing ? t : T - t;
  return std::pow(std::pow(G_ref, beta - 1.0) + (1.0 - beta) * elapsed, -1.0 / (1.0 - beta));
}

struct DecayReport {
  DecayDirection direction = DecayDirection::Decreasing;
  double hypothesis_margin = std::numeric_limits<double>::infinity();  // min |dG/dt| / min(G)^{2-beta}
  double worst_ratio = 0.0;                                            // max G / bound
  std::size_t violations = 0;
};

/// Checks the hypothesis on every interval (by the mean value theorem the
/// difference quotient must dominate the smaller endpoint value), then the
/// conclusion at every sample.
inline DecayReport check_decay(const std::vector<double>& t, const std::vector<double>& G, double beta, double rel_tol = 1e-9) {
  detail::require_beta(beta);
  require(t.size() == G.size() && t.size() >= 2, ErrorCode::InvalidArgument, "decay series needs matching t and G");
  DecayReport rep;
  bool down = false, up = false;
  for (std::size_t i = 0; i + 1 < t.size(); ++i) {
    require(t[i + 1] > t[i], ErrorCode::InvalidArgument, "decay series times must increase");
    require(G[i] >= 0.0 && G[i + 1] >= 0.0, ErrorCode::HypothesisFail, "G must be non-negative");
    const double slope = (G[i + 1] - G[i]) / (t[i + 1] - t[i]);
    down |= slope < 0.0;
    up |= slope > 0.0;
    const double need = std::pow(std::min(G[i], G[i + 1]), 2.0 - beta);
    if (need > 0.0) rep.hypothesis_margin = std::min(rep.hypothesis_margin, std::abs(slope) / need);
  }
  require(!(down && up), ErrorCode::HypothesisFail, "G' changes sign");
  require(rep.hypothesis_margin >= 1.0 - rel_tol, ErrorCode::HypothesisFail,
          "|G|^{2-beta} <= |G'| fails discretely (margin " + std::to_string(rep.hypothesis_margin) + ")");
  rep.direction = up ? DecayDirection::Increasing : DecayDirection::Decreasing;
  const double T = t.back();
  const double G_ref = up ? G.back() : G.front();
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double b = decay_bound(G_ref, beta, t[i] - t.front(), rep.direction, T - t.front());
    if (b > 0.0) rep.worst_ratio = std::max(rep.worst_ratio, G[i] / b);
    if (G[i] > b * (1.0 + rel_tol)) ++rep.violations;
  }
  return rep;
}

/// Exact samples of G' = -/+ (1 + j) G^{2-beta} with j piecewise constant per
/// step, drawn uniformly from [0, jitter]. Decreasing series start from G_ref
/// at t = 0; increasing ones end at G_ref at t = T.
inline std::pair<std::vector<double>, std::vector<double>> synthetic_decay_series(double beta, double G_ref, double T,
                                                                                  std::size_t steps, double jitter,
                                                                                  std::mt19937_64& rng,
                                                                                  DecayDirection dir) {
  detail::require_beta(beta);
  require(G_ref > 0.0 && T > 0.0 && steps >= 1, ErrorCode::InvalidArgument, "synthetic series needs G_ref, T > 0");
  std::uniform_real_distribution<double> J(0.0, jitter);
  std::vector<double> t(steps + 1), G(steps + 1);
  const double h = T / static_cast<double>(steps);
  // w = G^{beta-1} grows by (1-beta)(1+j)h per step away from the reference end
  double w = std::pow(G_ref, beta - 1.0);
  for (std::size_t k = 0; k <= steps; ++k) {
    const std::size_t idx = dir == DecayDirection::Decreasing ? k : steps - k;
    t[idx] = static_cast<double>(idx) * h;
    G[idx] = std::pow(w, -1.0 / (1.0 - beta));
    w += (1.0 - beta) * (1.0 + J(rng)) * h;
  }
  return {t, G};
}

// ---- dyadic series -------------------------------------------------------------

struct GeometricSeriesBound {
  double lhs_partial = 0.0;  // sum over 1 <= j <= j_max
  double tail = 0.0;         // majorant of the sum over j > j_max
  double rhs = 0.0;
  double rhs_as_printed = 0.0;  // 2 (p - gamma) (2 + c1)^{gamma - p}, which is not a bound near gamma = p
  bool holds = false;
};

/// sum_{j>=1} 2^{gamma j} (c1 + 2^{j+1})^{-p}, p = 1/(1-beta), against
/// 2 int_2^inf (c1 + r)^{gamma - 1 - p} dr = 2 (2 + c1)^{gamma - p} / (p - gamma).
/// Terms beyond j_max are bounded by 2^{-p} 2^{(gamma - p) j}.
inline GeometricSeriesBound geometric_series_bound(double beta, double gamma, double c1, std::size_t j_max = 400) {
  detail::require_beta(beta);
  const double p = 1.0 / (1.0 - beta);
  require(gamma > 1.0 && gamma < p, ErrorCode::InvalidArgument, "gamma must lie in (1, 1/(1-beta))");
  require(c1 > 0.0, ErrorCode::InvalidArgument, "c1 must be positive");
  const double ln2 = std::numbers::ln2;
  GeometricSeriesBound out;
  for (std::size_t j = 1; j <= j_max; ++j) {
    const double jd = static_cast<double>(j);
    const double log_base = (jd + 1.0) * ln2 + std::log1p(c1 * std::exp(-(jd + 1.0) * ln2));
    out.lhs_partial += std::exp(gamma * jd * ln2 - p * log_base);
  }
  const double ratio = std::exp((gamma - p) * ln2);
  out.tail = std::exp(-p * ln2 + (gamma - p) * ln2 * static_cast<double>(j_max + 1)) / (1.0 - ratio);
  out.rhs = 2.0 * std::pow(2.0 + c1, gamma - p) / (p - gamma);
  out.rhs_as_printed = 2.0 * (p - gamma) * std::pow(2.0 + c1, gamma - p);
  out.holds = out.lhs_partial + out.tail <= out.rhs;
  return out;
}

// ---- weighted time integrals ---------------------------------------------------

/// int_1^s r^gamma grad_norm2 dr against (F(0) - F(s))^{1 - gamma (1 - beta)}
/// on prefixes s of the interval where F >= F_Sigma, and the (T - r)
/// weighted mirror on the interval after s_split. C is fitted per prefix;
/// the report carries its spread.
inline InequalityReport weighted_integral_check(const FlowTrajectory& traj, double F_sigma, double beta, double gamma,
                                                std::optional<double> s_split = std::nullopt, std::size_t prefixes = 8) {
  detail::require_beta(beta);
  require(gamma > 1.0 && gamma < 1.0 / (1.0 - beta), ErrorCode::InvalidArgument, "gamma must lie in (1, 1/(1-beta))");
  require(prefixes >= 1, ErrorCode::InvalidArgument, "need at least one prefix");
  require(!traj.records.empty(), ErrorCode::RangeError, "trajectory has no records");
  const auto& rec = traj.records;
  const double t0 = rec.front().t, T = rec.back().t;
  double split = T;
  if (s_split) {
    split = *s_split;
  } else {
    for (const auto& x : rec)
      if (x.F < F_sigma) {
        split = x.t;
        break;
      }
  }
  const double expo = 1.0 - gamma * (1.0 - beta);
  InequalityReport r;
  r.name = "weighted_integral";
  r.fitted["gamma"] = gamma;
  r.fitted["loja_beta"] = beta;
  r.fitted["s_split"] = split;
  std::vector<double> C;
  std::vector<double> bases;
  // first interval, time measured from the trajectory start
  if (split - t0 > 1.0) {
    const double F0 = rec.front().F;
    for (std::size_t k = 1; k <= prefixes; ++k) {
      const double s = t0 + 1.0 + (split - t0 - 1.0) * static_cast<double>(k) / static_cast<double>(prefixes);
      const double I = detail::record_integral(rec, t0 + 1.0, s, [&](const FlowRecord& x, double t) {
        return std::pow(t - t0, gamma) * x.grad_norm2;
      });
      const double base = std::pow(std::max(0.0, F0 - detail::record_value(rec, s, &FlowRecord::F)), expo);
      r.samples.push_back({s, I, base});
      bases.push_back(base);
      C.push_back(base > 0.0 ? I / base : (I == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()));
    }
  }
  // mirror on [split, T_k] for growing end times T_k
  std::vector<double> Cm;
  if (T - split > 1.0) {
    const double Fs = detail::record_value(rec, split, &FlowRecord::F);
    for (std::size_t k = 1; k <= prefixes; ++k) {
      const double Tk = split + 1.0 + (T - split - 1.0) * static_cast<double>(k) / static_cast<double>(prefixes);
      const double I = detail::record_integral(rec, split, Tk - 1.0, [&](const FlowRecord& x, double t) {
        return std::pow(Tk - t, gamma) * x.grad_norm2;
      });
      const double base = std::pow(std::max(0.0, Fs - detail::record_value(rec, Tk, &FlowRecord::F)), expo);
      r.samples.push_back({Tk, I, base});
      bases.push_back(base);
      Cm.push_back(base > 0.0 ? I / base : (I == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()));
    }
  }
  auto spread = [](const std::vector<double>& v) {
    const double hi = *std::max_element(v.begin(), v.end()), lo = *std::min_element(v.begin(), v.end());
    return hi == 0.0 ? 1.0 : (lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
  };
  double C_fit = 0.0;
  if (!C.empty()) {
    r.fitted["C_first"] = *std::max_element(C.begin(), C.end());
    r.fitted["C_first_spread"] = spread(C);
    C_fit = std::max(C_fit, r.fitted["C_first"]);
  }
  if (!Cm.empty()) {
    r.fitted["C_mirror"] = *std::max_element(Cm.begin(), Cm.end());
    r.fitted["C_mirror_spread"] = spread(Cm);
    C_fit = std::max(C_fit, r.fitted["C_mirror"]);
  }
  // samples carry (integral, C_fit * base)
  for (std::size_t i = 0; i < r.samples.size(); ++i) r.samples[i].rhs = C_fit * bases[i];
  detail::count_violations(r, std::numeric_limits<double>::infinity());
  return r;
}

// ---- drift bound -----------------------------------------------------------------

struct DriftSample {
  double t1 = 0.0, t2 = 0.0;
  double lhs = 0.0;          // int_Sigma |u(t2) - u(t1)|
  double delta_F = 0.0;      // F(t1) - F(t2)
  double velocity_l1 = 0.0;  // int_{t1}^{t2} int |<x,n>/2 - H| e^{-|x|^2/4}
};

namespace detail {

inline Eigen::VectorXd snapshot_u(const FlowTrajectory& traj, double t) {
  const auto& S = traj.snapshots;
  require(!S.empty(), ErrorCode::RangeError, "trajectory has no snapshots");
  const double eps = 1e-12 * std::max(1.0, std::abs(t));
  require(t >= S.front().t - eps && t <= S.back().t + eps, ErrorCode::RangeError, "time outside the stored snapshots");
  auto hi = std::lower_bound(S.begin(), S.end(), t, [](const Snapshot& s, double v) { return s.t < v; });
  if (hi == S.end()) hi = S.end() - 1;
  if (hi == S.begin() || std::abs(hi->t - t) <= eps) {
    require(hi->u.size() > 0, ErrorCode::NotGraphical, "snapshot is not a graph over the base");
    return hi->u;
  }
  const auto lo = hi - 1;
  require(lo->u.size() > 0 && hi->u.size() > 0, ErrorCode::NotGraphical, "snapshot is not a graph over the base");
  const double w = (t - lo->t) / (hi->t - lo->t);
  return (1.0 - w) * lo->u + w * hi->u;
}

}  // namespace detail

inline DriftSample drift_bound_check(const FlowTrajectory& traj, const Surface& base, double t1, double t2) {
  require(t1 <= t2, ErrorCode::InvalidArgument, "drift window needs t1 <= t2");
  DriftSample d;
  d.t1 = t1;
  d.t2 = t2;
  if (t1 == t2) return d;
  const Eigen::VectorXd du = detail::snapshot_u(traj, t2) - detail::snapshot_u(traj, t1);
  require(static_cast<std::size_t>(du.size()) == base.size(), ErrorCode::GridMismatch, "trajectory and base grids differ");
  d.lhs = du.cwiseAbs().dot(base.geometry().measure);
  d.delta_F = detail::record_value(traj.records, t1, &FlowRecord::F) - detail::record_value(traj.records, t2, &FlowRecord::F);
  d.velocity_l1 = detail::record_integral(traj.records, t1, t2, [](const FlowRecord& x, double) { return x.vel_l1; });
  return d;
}

struct DriftOptions {
  double drift_beta = 0.25;
  std::size_t windows = 5;      // nested tail windows
  double ladder = 2.0;          // delta_F shrinks by this factor between nested windows
  double tail_start = 0.5;      // tail windows start after this share of the run
  double floor = 1e-10;         // delta_F below floor * F is roundoff
};

struct DriftStudy {
  std::vector<DriftSample> all;   // [t_i, T] for every stored snapshot
  std::vector<DriftSample> tail;  // the nested windows
  double fitted_exponent = std::numeric_limits<double>::quiet_NaN();  // log lhs on log delta_F over all usable windows
  double C_drift = 0.0, C_drift_spread = 0.0;  // lhs / delta_F^{drift_beta} over the nested windows
  double C_dist = 0.0, C_dist_spread = 0.0;    // lhs / velocity_l1 over the nested windows
};

/// Windows [t_i, T] ending at the last snapshot. The nested tail windows are
/// picked along a geometric ladder in delta_F starting at the first window
/// past tail_start * T.
inline DriftStudy drift_study(const FlowTrajectory& traj, const Surface& base, const DriftOptions& opt = {}) {
  require(traj.snapshots.size() >= 2, ErrorCode::RangeError, "drift study needs stored snapshots");
  require(opt.windows >= 1 && opt.ladder > 1.0, ErrorCode::InvalidArgument, "drift ladder needs windows >= 1, ladder > 1");
  DriftStudy st;
  const double T = traj.snapshots.back().t, t0 = traj.snapshots.front().t;
  const double F_end = traj.records.back().F;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i + 1 < traj.snapshots.size(); ++i) {
    const auto d = drift_bound_check(traj, base, traj.snapshots[i].t, T);
    st.all.push_back(d);
    if (d.delta_F > opt.floor * std::abs(F_end) && d.lhs > 0.0) {
      lx.push_back(std::log(d.delta_F));
      ly.push_back(std::log(d.lhs));
    }
  }
  if (lx.size() >= 3) st.fitted_exponent = fit_line(lx, ly).slope;

  const double t_tail = t0 + opt.tail_start * (T - t0);
  double target = -1.0;
  for (const auto& d : st.all) {
    if (d.t1 < t_tail || d.delta_F <= opt.floor * std::abs(F_end)) continue;
    if (target < 0.0) target = d.delta_F;
    if (d.delta_F <= target) {
      st.tail.push_back(d);
      target /= opt.ladder;
      if (st.tail.size() == opt.windows) break;
    }
  }
  if (!st.tail.empty()) {
    std::vector<double> cd, cl;
    for (const auto& d : st.tail) {
      cd.push_back(d.lhs / std::pow(d.delta_F, opt.drift_beta));
      cl.push_back(d.velocity_l1 > 0.0 ? d.lhs / d.velocity_l1 : 0.0);
    }
    auto [dlo, dhi] = std::minmax_element(cd.begin(), cd.end());
    auto [llo, lhi] = std::minmax_element(cl.begin(), cl.end());
    st.C_drift = *dhi;
    st.C_drift_spread = *dlo > 0.0 ? *dhi / *dlo : std::numeric_limits<double>::infinity();
    st.C_dist = *lhi;
    st.C_dist_spread = *llo > 0.0 ? *lhi / *llo : std::numeric_limits<double>::infinity();
  }
  return st;
}

inline nlohmann::json to_json(const DriftStudy& st, const DriftOptions& opt = {}) {
  nlohmann::json windows = nlohmann::json::array();
  for (const auto& d : st.tail)
    windows.push_back({{"t1", d.t1}, {"t2", d.t2}, {"lhs", d.lhs}, {"delta_F", d.delta_F}, {"velocity_l1", d.velocity_l1}});
  return {{"drift_beta", opt.drift_beta},
          {"fitted_exponent", std::isfinite(st.fitted_exponent) ? nlohmann::json(st.fitted_exponent) : nlohmann::json(nullptr)},
          {"C_drift", st.C_drift},
          {"C_drift_spread", st.C_drift_spread},
          {"C_dist", st.C_dist},
          {"C_dist_spread", st.C_dist_spread},
          {"windows", windows}};
}

}  // namespace shrinkflow
