#pragma once

// Acceptance criteria A1-A13 as runnable checks with pinned tolerances,
// grouped into the suites exposed by `shrinkflow verify`.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "shrinkflow/errors.hpp"
#include "shrinkflow/experiment.hpp"
#include "shrinkflow/flow.hpp"
#include "shrinkflow/geometry.hpp"
#include "shrinkflow/graph.hpp"
#include "shrinkflow/group.hpp"
#include "shrinkflow/loja.hpp"
#include "shrinkflow/reduction.hpp"
#include "shrinkflow/shrinker.hpp"

namespace shrinkflow {

/// Pinned acceptance tolerances. `verify --tolerances` may overlay a JSON
/// object onto these (unknown keys are rejected).
inline const nlohmann::json& acceptance_tolerances() {
  static const nlohmann::json t = {
      {"a1_circle_rel", 1e-6},   {"a1_sphere_rel", 1e-5},     {"a2_rel", 1e-6},
      {"a3_circle", 1e-4},       {"a3_sphere", 1e-3},         {"a3_group_rel", 1e-6},
      {"a4_residual", 1e-3},     {"a4_refinement_gain", 2.0}, {"a5_rate_rel", 0.1},
      {"a6_identity", 1e-12},    {"a6_replay_sup", 1e-4},     {"a8_slope_min", 0.9},
      {"a8_slope_max", 1.1},     {"a9_spread", 3.0},          {"a10_residual", 1e-10},
      {"a10_torus_residual", 1e-5}, {"a11_orthogonality", 1e-6}, {"a11_orbit_max", 0.02},
      {"a11_graph_min", 0.1},    {"a12_roundtrip", 1e-8},     {"a12_ladder_spread", 10.0},
      {"a12_remainder_spread", 2.0},
  };
  return t;
}

class Tolerances {
 public:
  Tolerances() : j_(acceptance_tolerances()) {}
  explicit Tolerances(const nlohmann::json& overrides) : j_(detail::overlay(acceptance_tolerances(), overrides, "tolerances")) {
    for (const auto& [k, v] : j_.items())
      if (!v.is_number()) detail::config_fail("tolerances." + k, "expected a number");
  }
  double operator[](const std::string& key) const { return j_.at(key).get<double>(); }
  const nlohmann::json& json() const { return j_; }

 private:
  nlohmann::json j_;
};

struct CriterionResult {
  std::string id;
  std::string title;
  bool pass = false;
  nlohmann::json measured = nlohmann::json::object();
};

inline nlohmann::json to_json(const CriterionResult& c) {
  return {{"id", c.id}, {"title", c.title}, {"pass", c.pass}, {"measured", c.measured}};
}

/// One line per criterion: "A1 PASS Functional values {measured}".
inline std::string format_line(const CriterionResult& c) {
  return c.id + (c.pass ? " PASS " : " FAIL ") + c.title + " " + c.measured.dump();
}

struct SuiteReport {
  std::string suite;
  std::vector<CriterionResult> criteria;
  std::vector<Artifact> artifacts;  // paths prefixed with the criterion id
  bool passed() const {
    return std::all_of(criteria.begin(), criteria.end(), [](const CriterionResult& c) { return c.pass; });
  }
};

inline nlohmann::json to_json(const SuiteReport& r) {
  nlohmann::json cs = nlohmann::json::array();
  for (const auto& c : r.criteria) cs.push_back(to_json(c));
  return {{"suite", r.suite}, {"passed", r.passed()}, {"criteria", cs}};
}

inline const std::map<std::string, std::vector<std::string>>& suites() {
  static const std::map<std::string, std::vector<std::string>> s = {
      {"geometry", {"A1", "A2"}},
      {"calculus", {"A7"}},
      {"flow", {"A4", "A5", "A6"}},
      {"spectrum", {"A3", "A10"}},
      {"loja", {"A8", "A9"}},
      {"noreturn", {"A11"}},
      {"lsreduce", {"A12"}},
      {"all", {"A1", "A2", "A3", "A4", "A5", "A6", "A7", "A8", "A9", "A10", "A11", "A12"}},
  };
  return s;
}

namespace detail {

inline const double kSqrt2 = std::numbers::sqrt2;

inline double rel_err(double x, double ref) { return std::abs(x - ref) / std::abs(ref); }

inline Eigen::VectorXd cos_field(const Surface& s, double k) { return (k * s.grid().theta().array()).cos().matrix(); }

// eps cos k theta on the circle sqrt 2 with the constant keeping the area 2 pi.
inline Eigen::VectorXd area_neutral_mode(const Surface& c, int k, double eps) {
  return (eps * cos_field(c, k)).array() + (std::sqrt(2.0 - eps * eps / 2.0) - kSqrt2);
}

// Shared expensive objects, built on first use within one suite run.
struct AcceptanceContext {
  std::optional<ShootingResult> torus;          // default resolution
  std::optional<ShootingResult> torus_coarse;   // N = 128 for the flow experiments
  std::optional<FlowTrajectory> converging;     // the circle run behind A8 and A9

  const ShootingResult& shooting() {
    if (!torus) torus = shoot_angenent_torus();
    return *torus;
  }
  const ShootingResult& shooting_coarse() {
    if (!torus_coarse) {
      ShootingOptions so;
      so.n_samples = 128;
      torus_coarse = shoot_angenent_torus(so);
    }
    return *torus_coarse;
  }
  const FlowTrajectory& converging_run() {
    if (!converging) {
      const auto c = build_circle(kSqrt2, 64);
      FlowOptions o;
      o.converge_tol = 1e-6;
      o.snapshot_stride = 50;
      converging = run_graph_flow(c, area_neutral_mode(c, 2, 0.05), 40.0, o);
    }
    return *converging;
  }
};

class Collector {
 public:
  Collector(std::string id, std::vector<Artifact>& out) : id_(std::move(id)), out_(out) {}
  template <class F>
  void csv(const std::string& name, F&& write) {
    out_.push_back({id_ + "/" + name, render(std::forward<F>(write))});
  }
  void json(const std::string& name, const nlohmann::json& j) { out_.push_back({id_ + "/" + name, j.dump(2)}); }

 private:
  std::string id_;
  std::vector<Artifact>& out_;
};

inline CriterionResult a1(const Tolerances& tol, AcceptanceContext&, Collector&) {
  CriterionResult r{"A1", "Functional values"};
  const double Fc = gaussian_area(build_circle(kSqrt2, 512));
  const double Fs = gaussian_area(build_sphere(2.0, 64));
  const double ec = rel_err(Fc, 2 * kSqrt2 * std::numbers::pi * std::exp(-0.5));
  const double es = rel_err(Fs, 16 * std::numbers::pi / std::exp(1.0));
  r.measured = {{"F_circle", Fc}, {"F_circle_reference", 5.38946}, {"circle_rel_err", ec}, {"F_sphere", Fs}, {"sphere_rel_err", es}};
  r.pass = ec < tol["a1_circle_rel"] && es < tol["a1_sphere_rel"];
  return r;
}

inline CriterionResult a2(const Tolerances& tol, AcceptanceContext&, Collector& out) {
  CriterionResult r{"A2", "Taylor table"};
  double worst = 0.0;
  bool complete = true;
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [name, base] : {std::pair{"circle", build_circle(kSqrt2, 64)}, std::pair{"sphere", build_sphere(2.0, 48)}}) {
    const auto rep = taylor_check(base);
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : rep.entries) entries.push_back({{"name", e.name}, {"max_rel_error", e.max_rel_error}});
    per[name] = {{"max_rel_error", rep.max_error()}, {"entries", rep.entries.size()}};
    out.json(std::string("taylor_") + name + ".json", entries);
    worst = std::max(worst, rep.max_error());
    complete = complete && rep.entries.size() == 8;
  }
  r.measured = {{"max_rel_error", worst}, {"bases", per}};
  r.pass = complete && worst < tol["a2_rel"];
  return r;
}

inline CriterionResult a3(const Tolerances& tol, AcceptanceContext& ctx, Collector& out) {
  CriterionResult r{"A3", "Spectrum"};
  const auto sc = spectrum(build_circle(kSqrt2, 256), 17);
  double ec = 0.0;
  ec = std::max(ec, std::abs(sc.eigenvalues(0) - 1.0));
  for (int k = 1; k <= 8; ++k)
    for (int m : {2 * k - 1, 2 * k}) ec = std::max(ec, std::abs(sc.eigenvalues(m) - (1.0 - k * k / 2.0)));
  const auto ss = spectrum(build_sphere(2.0, 64), 7);
  double es = 0.0;
  for (int k = 0; k <= 6; ++k) es = std::max(es, std::abs(ss.eigenvalues(k) - (1.0 - k * (k + 1) / 4.0)));
  double eg = 0.0;
  const Surface circle = build_circle(kSqrt2, 256), sphere = build_sphere(2.0, 64);
  const Surface& torus = *ctx.shooting().profile;
  nlohmann::json gi = nlohmann::json::object();
  for (const auto& [name, base] : {std::pair<const char*, const Surface*>{"circle", &circle}, {"sphere", &sphere}, {"torus", &torus}}) {
    const auto g = group_identities(*base);
    gi[name] = {{"dilation", g.dilation}, {"translation", g.translation}};
    eg = std::max({eg, g.dilation, g.translation});
  }
  out.csv("spectrum_circle.csv", [&](std::ostream& os) { write_spectrum_csv(os, sc); });
  out.csv("spectrum_sphere.csv", [&](std::ostream& os) { write_spectrum_csv(os, ss); });
  out.csv("spectrum_torus.csv", [&](std::ostream& os) { write_spectrum_csv(os, spectrum(torus, 12)); });
  r.measured = {{"circle_max_err", ec}, {"sphere_max_err", es}, {"group_identity_max_rel", eg}, {"group_identities", gi}};
  r.pass = ec < tol["a3_circle"] && es < tol["a3_sphere"] && eg < tol["a3_group_rel"];
  return r;
}

inline CriterionResult a4(const Tolerances& tol, AcceptanceContext&, Collector& out) {
  CriterionResult r{"A4", "Gradient identity"};
  std::vector<double> res;
  for (std::size_t n : {128u, 256u}) {
    const auto c = build_circle(kSqrt2, n);
    const auto traj = run_graph_flow(c, area_neutral_mode(c, 2, 0.05), 1.0);
    res.push_back(gradient_identity_residual(traj, 0.0, 1.0).max_resolved);
    out.csv("trajectory_" + std::to_string(n) + ".csv", [&](std::ostream& os) { write_trajectory_csv(os, traj); });
  }
  r.measured = {{"residual_128", res[0]}, {"residual_256", res[1]}, {"refinement_gain", res[0] / res[1]}};
  r.pass = res[0] < tol["a4_residual"] && res[1] < tol["a4_residual"] && res[0] / res[1] >= tol["a4_refinement_gain"];
  return r;
}

inline CriterionResult a5(const Tolerances& tol, AcceptanceContext&, Collector& out) {
  CriterionResult r{"A5", "Linear decay rates"};
  const auto c = build_circle(kSqrt2, 64);
  r.pass = true;
  for (auto [k, lambda] : {std::pair{0, 1.0}, std::pair{2, -1.0}}) {
    const auto traj = run_graph_flow(c, 1e-4 * cos_field(c, k), 2.0);
    // rate from the sup norm between t = 1 and t = 2
    double s1 = 0.0;
    for (const auto& rec : traj.records)
      if (s1 == 0.0 && rec.t >= 1.0 - 1e-9) s1 = rec.sup_u;
    const double rate = std::log(traj.records.back().sup_u / s1) / (traj.records.back().t - 1.0);
    const double err = rel_err(rate, lambda);
    r.measured["mode_" + std::to_string(k)] = {{"eigenvalue", lambda}, {"rate", rate}, {"rel_err", err}};
    r.pass = r.pass && err < tol["a5_rate_rel"];
    out.csv("trajectory_k" + std::to_string(k) + ".csv", [&](std::ostream& os) { write_trajectory_csv(os, traj); });
  }
  return r;
}

inline CriterionResult a6(const Tolerances& tol, AcceptanceContext&, Collector& out) {
  CriterionResult r{"A6", "Comeback schedule"};
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> T(-3.0, 6.0), B(0.05, 3.0);
  double worst = 0.0;
  std::size_t windows = 0;
  for (auto conv : {ComebackConvention::Literal, ComebackConvention::Consistent}) {
    for (int trial = 0; trial < 1000; ++trial) {
      double T1 = T(rng), T2 = T(rng);
      if (T1 == T2) continue;
      if (T1 > T2) std::swap(T1, T2);
      const auto s = comeback_schedule(T1, T2, B(rng), Eigen::Vector2d::Zero(), {}, conv);
      const auto [d0, d1] = s.identity_defects();
      worst = std::max({worst, d0, d1});
      ++windows;
    }
  }
  const auto e = build_ellipse(kSqrt2 * 1.2, kSqrt2 / 1.2, 64);
  FlowOptions o;
  o.snapshot_stride = 1;
  const auto traj = run_curve_flow(e, 1.2, o);
  const Eigen::Vector2d y0(0.3, -0.2);
  double replay_err = 0.0;
  for (auto conv : {ComebackConvention::Literal, ComebackConvention::Consistent}) {
    const auto s = comeback_schedule(0.5, 1.0, 0.8, y0, {}, conv);
    std::vector<double> times;
    for (int i = 0; i <= 20; ++i) times.push_back(s.Tbar * (1.0 - i / 20.0));
    const auto rp = replay(traj, e, s, times);
    const Points want = expected_replay_end(s, interpolate_snapshots(traj, s.T2));
    replay_err = std::max(replay_err, (rp.snapshots.back().points - want).cwiseAbs().maxCoeff());
    out.csv("replay_" + to_string(conv) + ".csv", [&](std::ostream& os) { write_trajectory_csv(os, rp); });
  }
  r.measured = {{"windows", windows}, {"max_identity_defect", worst}, {"replay_end_sup_err", replay_err}};
  r.pass = windows >= 1000 && worst < tol["a6_identity"] && replay_err < tol["a6_replay_sup"];
  return r;
}

inline CriterionResult a7(const Tolerances&, AcceptanceContext&, Collector& out) {
  CriterionResult r{"A7", "Calculus identities"};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::size_t series_violations = 0, tail_failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double beta = 0.01 + 0.98 * U(rng);
    const double p = 1 / (1 - beta);
    const double gamma = 1 + (p - 1) * (0.001 + 0.998 * U(rng));
    const double c1 = std::pow(10.0, -2 + 4 * U(rng));
    const auto coarse = geometric_series_bound(beta, gamma, c1, 40);
    const auto fine = geometric_series_bound(beta, gamma, c1);
    series_violations += !fine.holds;
    tail_failures += !(coarse.tail >= 0.0 && coarse.lhs_partial + coarse.tail >= fine.lhs_partial * (1 - 1e-12));
  }
  // equality case G = (1 + t/2)^{-2} at beta = 1/2
  std::vector<double> ts, Gs;
  for (int k = 0; k <= 400; ++k) {
    ts.push_back(0.025 * k);
    Gs.push_back(std::pow(1 + ts.back() / 2, -2.0));
  }
  const auto eq = check_decay(ts, Gs, 0.5);
  std::size_t jitter_failures = 0;
  std::uniform_real_distribution<double> B(0.1, 0.9), G0(0.05, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const auto dir = trial % 2 ? DecayDirection::Increasing : DecayDirection::Decreasing;
    const double beta = B(rng);
    auto [t, G] = synthetic_decay_series(beta, G0(rng), 4.0, 200, 0.5, rng, dir);
    const auto rep = check_decay(t, G, beta);
    jitter_failures += rep.violations > 0 || rep.direction != dir;
  }
  const auto example = geometric_series_bound(0.5, 1.5, 1.0);
  out.json("worked_example.json", {{"beta", 0.5}, {"gamma", 1.5}, {"c1", 1.0}, {"lhs", example.lhs_partial + example.tail},
                                    {"rhs", example.rhs}, {"rhs_as_printed", example.rhs_as_printed}});
  r.measured = {{"series_triples", 1000},
                {"series_violations", series_violations},
                {"tail_failures", tail_failures},
                {"equality_violations", eq.violations},
                {"equality_worst_ratio", eq.worst_ratio},
                {"jittered_series", 100},
                {"jitter_failures", jitter_failures}};
  r.pass = series_violations == 0 && tail_failures == 0 && eq.violations == 0 && jitter_failures == 0;
  return r;
}

inline CriterionResult a8(const Tolerances& tol, AcceptanceContext& ctx, Collector& out) {
  CriterionResult r{"A8", "Gradient inequality"};
  const auto c = build_circle(kSqrt2, 64);
  const double F_sigma = gaussian_area(c);
  FlowOptions o;
  o.converge_tol = 1e-6;
  const auto second = run_graph_flow(c, area_neutral_mode(c, 3, 0.03), 40.0, o);
  std::size_t violations = 0, checked = 0;
  double slope = 0.0;
  nlohmann::json runs = nlohmann::json::array();
  for (const FlowTrajectory* traj : {&ctx.converging_run(), &second}) {
    const auto rep = loja_check(*traj, F_sigma, 0.5);
    violations += rep.violations;
    checked += rep.checked;
    runs.push_back({{"termination", to_string(traj->termination)},
                    {"checked", rep.checked},
                    {"violations", rep.violations},
                    {"slope", rep.fitted.at("slope")}});
    if (traj == &ctx.converging_run()) {
      slope = rep.fitted.at("slope");
      out.csv("loja.csv", [&](std::ostream& os) { write_inequality_csv(os, rep); });
      out.csv("loja_regression.csv", [&](std::ostream& os) { write_regression_csv(os, rep); });
      auto j = shrinkflow::to_json(rep);
      j["beta"] = 0.5;
      out.json("loja_report.json", j);
      out.csv("trajectory.csv", [&](std::ostream& os) { write_trajectory_csv(os, *traj); });
    }
  }
  r.measured = {{"beta", 0.5}, {"checked", checked}, {"violations", violations}, {"slope", slope}, {"runs", runs}};
  r.pass = checked > 0 && violations == 0 && slope >= tol["a8_slope_min"] && slope <= tol["a8_slope_max"];
  return r;
}

inline CriterionResult a9(const Tolerances& tol, AcceptanceContext& ctx, Collector& out) {
  CriterionResult r{"A9", "Drift bound"};
  const auto st = drift_study(ctx.converging_run(), build_circle(kSqrt2, 64));
  bool bound = true;
  for (const auto& d : st.tail) bound = bound && d.lhs <= st.C_drift * std::pow(d.delta_F, 0.25) * (1 + 1e-12);
  out.json("drift.json", to_json(st));
  r.measured = {{"windows", st.tail.size()},
                {"fitted_exponent", st.fitted_exponent},
                {"C_drift", st.C_drift},
                {"C_drift_spread", st.C_drift_spread},
                {"C_dist", st.C_dist},
                {"C_dist_spread", st.C_dist_spread}};
  r.pass = st.tail.size() >= 3 && bound && st.C_drift_spread <= tol["a9_spread"] && st.C_dist_spread <= tol["a9_spread"];
  return r;
}

inline CriterionResult a10(const Tolerances& tol, AcceptanceContext& ctx, Collector& out) {
  CriterionResult r{"A10", "Shrinker finding"};
  const auto c = build_circle(kSqrt2, 128);
  std::vector<Eigen::VectorXd> starts{Eigen::VectorXd::Constant(128, 0.1),
                                      (0.05 * cos_field(c, 2)).array() + 0.05};
  std::mt19937_64 rng(10);
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd u = random_smooth_field(c, rng, 4, 1.0);
    starts.push_back(0.1 * u / u.cwiseAbs().maxCoeff());
  }
  double worst = 0.0;
  bool quadratic = true;
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& u0 : starts) {
    const auto nr = newton_find_shrinker(c, u0);
    worst = std::max(worst, nr.residuals.back());
    quadratic = quadratic && nr.quadratic;
    runs.push_back({{"iterations", nr.iterations}, {"residuals", nr.residuals}, {"quadratic", nr.quadratic}});
  }
  const auto& t = ctx.shooting();
  const double Ft = gaussian_area(*t.profile), Fs = 16 * std::numbers::pi / std::exp(1.0);
  out.json("newton.json", runs);
  out.csv("torus_geometry.csv", [&](std::ostream& os) { write_geometry_csv(os, *t.profile); });
  r.measured = {{"newton_max_residual", worst}, {"newton_quadratic", quadratic}, {"starts", starts.size()},
                {"torus_r0", t.r0},           {"torus_residual_sup", t.residual_sup}, {"torus_closure_defect", t.closure_defect},
                {"F_torus", Ft},              {"F_sphere", Fs}};
  r.pass = worst < tol["a10_residual"] && quadratic && t.success && t.residual_sup < tol["a10_torus_residual"] && Ft > Fs;
  return r;
}

inline CriterionResult a11(const Tolerances& tol, AcceptanceContext& ctx, Collector& out) {
  CriterionResult r{"A11", "Instability and no-return"};
  const auto& t = ctx.shooting_coarse();
  const Surface& torus = *t.profile;
  const auto rep = stability_report(torus);
  const auto gf = group_fields(torus);
  bool unstable = rep.verdict == StabilityVerdict::Unstable && !rep.unstable_fields.empty();
  double orth = 0.0;
  if (unstable) {
    const auto& v = rep.unstable_fields.front();
    orth = std::max(std::abs(q_inner(torus, v, gf.dilation)) / q_norm(torus, gf.dilation),
                    std::abs(q_inner(torus, v, gf.translations[0])) / q_norm(torus, gf.translations[0]));
    unstable = rep.unstable_eigenvalues.front() > 0.0 && orth < tol["a11_orthogonality"];
  }

  NoReturnOptions no;
  no.delta1 = 0.05;
  no.delta2 = 0.1;
  no.horizon = 40.0;
  std::size_t no_return = 0;
  nlohmann::json runs = nlohmann::json::array();
  ExperimentConfig cfg = default_config();
  cfg.perturbation.type = "unstable";
  cfg.perturbation.amplitude = 0.02;
  cfg.perturbation.mix = 0.1;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    cfg.seed = seed;
    const auto res = no_return_experiment(torus, build_perturbation(cfg, torus), no);
    no_return += res.verdict == ReturnVerdict::NoReturn;
    runs.push_back({{"seed", seed},
                    {"verdict", to_string(res.verdict)},
                    {"t_exit", res.t_exit ? nlohmann::json(*res.t_exit) : nlohmann::json(nullptr)},
                    {"termination", to_string(res.termination)}});
    if (seed == 1)
      out.csv("torus_distances.csv", [&](std::ostream& os) {
        os << "t,orbit_dist\n" << std::setprecision(17);
        for (const auto& [tt, d] : res.distances) os << tt << ',' << d << '\n';
      });
  }

  // translating spheres: far from the base as graphs, on the orbit throughout
  const auto sphere = build_sphere(2.0, 48);
  double orbit_max = 0.0, graph_min = std::numeric_limits<double>::infinity();
  NoReturnOptions so;
  so.horizon = 6.0;
  so.observe_every = 0.25;
  for (double sign : {1.0, -1.0}) {
    const auto res = no_return_experiment(sphere, sign * 0.02 * cos_field(sphere, 1), so);
    for (const auto& [tt, d] : res.distances) orbit_max = std::max(orbit_max, d);
    graph_min = std::min(graph_min, res.max_graph_distance);
    if (sign > 0)
      out.csv("sphere_distances.csv", [&](std::ostream& os) {
        os << "t,orbit_dist\n" << std::setprecision(17);
        for (const auto& [tt, d] : res.distances) os << tt << ',' << d << '\n';
      });
  }
  out.json("torus_runs.json", runs);
  r.measured = {{"torus_verdict", to_string(rep.verdict)},
                {"unstable_eigenvalue", rep.unstable_eigenvalues.empty() ? nlohmann::json(nullptr)
                                                                           : nlohmann::json(rep.unstable_eigenvalues.front())},
                {"group_overlap", orth},
                {"runs", 20},
                {"no_return", no_return},
                {"sphere_orbit_max", orbit_max},
                {"sphere_graph_distance_min", graph_min}};
  r.pass = unstable && no_return == 20 && orbit_max < tol["a11_orbit_max"] && graph_min > tol["a11_graph_min"];
  return r;
}

inline CriterionResult a12(const Tolerances& tol, AcceptanceContext&, Collector& out) {
  CriterionResult r{"A12", "Lyapunov-Schmidt reduction"};
  ReductionOptions ro;
  ro.synthetic_kernel = 2;
  auto red = build_reduction(build_circle(kSqrt2, 64), ro);
  auto empty = build_reduction(build_sphere(2.0, 48));
  std::mt19937_64 rng(12);
  double worst = 0.0;
  for (Reduction* rd : {&red, &empty}) {
    for (int i = 0; i < 100; ++i) {
      const Eigen::VectorXd u = random_smooth_field(rd->base(), rng, 6, 0.02);
      worst = std::max(worst, (rd->psi(rd->nbar(u)) - u).cwiseAbs().maxCoeff());
      const Eigen::VectorXd v = random_smooth_field(rd->base(), rng, 6, 0.02);
      worst = std::max(worst, (rd->nbar(rd->psi(v)) - v).cwiseAbs().maxCoeff());
    }
  }
  double Fs = 1.0, gs = 1.0, rs = 1.0;
  nlohmann::json ladders = nlohmann::json::array();
  for (int i = 0; i < 3; ++i) {
    const auto lad = ratio_ladder(red, random_smooth_field(red.base(), rng, 5, 1.0));
    Fs = std::max(Fs, lad.F_spread);
    gs = std::max(gs, lad.grad_spread);
    rs = std::max(rs, lad.remainder_spread);
    ladders.push_back(to_json(lad));
  }
  out.json("ladders.json", ladders);
  const auto samples = reduced_samples(red, 0.05, 9);
  out.csv("reduced.csv", [&](std::ostream& os) { write_reduced_csv(os, samples, red.synthetic()); });
  r.measured = {{"kernel_dim", red.dim()},     {"synthetic_kernel", true}, {"roundtrip_max", worst},
                {"F_ratio_spread", Fs},         {"grad_ratio_spread", gs},  {"remainder_spread", rs}};
  r.pass = worst < tol["a12_roundtrip"] && Fs <= tol["a12_ladder_spread"] && gs <= tol["a12_ladder_spread"] &&
           rs <= tol["a12_remainder_spread"];
  return r;
}

using CriterionFn = CriterionResult (*)(const Tolerances&, AcceptanceContext&, Collector&);

inline const std::map<std::string, CriterionFn>& criteria() {
  static const std::map<std::string, CriterionFn> c = {{"A1", a1}, {"A2", a2},   {"A3", a3},   {"A4", a4},
                                                       {"A5", a5}, {"A6", a6},   {"A7", a7},   {"A8", a8},
                                                       {"A9", a9}, {"A10", a10}, {"A11", a11}, {"A12", a12}};
  return c;
}

}  // namespace detail

/// Runs one suite. A criterion that throws is reported as failed with the
/// error message; `on_result` sees each criterion as it completes.
inline SuiteReport run_suite(const std::string& suite, const Tolerances& tol = {},
                             const std::function<void(const CriterionResult&)>& on_result = {}) {
  const auto it = suites().find(suite);
  require(it != suites().end(), ErrorCode::ConfigError, "unknown suite '" + suite + "'");
  SuiteReport rep;
  rep.suite = suite;
  detail::AcceptanceContext ctx;
  for (const auto& id : it->second) {
    detail::Collector out(id, rep.artifacts);
    CriterionResult c;
    try {
      c = detail::criteria().at(id)(tol, ctx, out);
    } catch (const Error& e) {
      c.id = id;
      c.title = "raised an error";
      c.pass = false;
      c.measured = {{"error", e.what()}};
    }
    if (on_result) on_result(c);
    rep.criteria.push_back(std::move(c));
  }
  return rep;
}

/// A13: the CSV artifacts of two runs of the same suite must agree byte for byte.
inline CriterionResult determinism(const SuiteReport& first, const SuiteReport& second) {
  auto csvs = [](const SuiteReport& r) {
    std::map<std::string, const std::string*> m;
    for (const auto& a : r.artifacts)
      if (a.name.ends_with(".csv")) m[a.name] = &a.content;
    return m;
  };
  const auto a = csvs(first), b = csvs(second);
  nlohmann::json differing = nlohmann::json::array();
  std::size_t bytes = 0;
  for (const auto& [name, content] : a) {
    bytes += content->size();
    const auto it = b.find(name);
    if (it == b.end() || *it->second != *content) differing.push_back(name);
  }
  for (const auto& [name, content] : b)
    if (!a.contains(name)) differing.push_back(name);
  CriterionResult r{"A13", "Determinism", differing.empty() && !a.empty(), {}};
  r.measured = {{"csv_files", a.size()}, {"csv_bytes", bytes}, {"differing", differing}};
  return r;
}

/// run_suite, plus A13 for the "all" suite: the suite runs a second time and
/// its CSV artifacts are compared with the first run.
inline SuiteReport run_verify(const std::string& suite, const Tolerances& tol = {},
                              const std::function<void(const CriterionResult&)>& on_result = {}) {
  SuiteReport rep = run_suite(suite, tol, on_result);
  if (suite == "all") {
    auto c = determinism(rep, run_suite(suite, tol));
    if (on_result) on_result(c);
    rep.criteria.push_back(std::move(c));
  }
  return rep;
}

}  // namespace shrinkflow
