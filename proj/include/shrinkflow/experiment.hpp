#pragma once

// Experiment configurations (JSON with a single defaults table) and the
// in-memory execution of one experiment into named artifacts.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "shrinkflow/entropy.hpp"
#include "shrinkflow/errors.hpp"
#include "shrinkflow/flow.hpp"
#include "shrinkflow/geometry.hpp"
#include "shrinkflow/graph.hpp"
#include "shrinkflow/group.hpp"
#include "shrinkflow/loja.hpp"
#include "shrinkflow/reduction.hpp"
#include "shrinkflow/shrinker.hpp"

namespace shrinkflow {

inline constexpr const char* kVersion = "0.1.0";

/// The defaults table. A user config is overlaid onto this object key by
/// key; keys that do not appear here are rejected.
///
///   kind              flow | spectrum | find | shoot | entropy | loja | noreturn | lsreduce | replay
///   base.shape        circle | sphere | ellipse | torus; radius null means the shrinker radius
///   perturbation.type none | mode | area_neutral | unstable | random
///   numeric.*         step control, tolerances, thresholds and exponents
///   replay.*          comeback window (T1, T2, b, y0) and the replay sampling
inline const nlohmann::json& config_defaults() {
  static const nlohmann::json d = {
      {"kind", "flow"},
      {"name", ""},
      {"seed", 0u},
      {"output_dir", ""},
      {"snapshot_stride", 0u},
      {"base",
       {{"shape", "circle"}, {"radius", nullptr}, {"semi_axes", {1.697056274847714, 1.1785113019775793}}, {"n_samples", 128u}}},
      {"perturbation", {{"type", "none"}, {"mode", 2u}, {"amplitude", 0.0}, {"k_max", 6u}, {"mix", 0.0}}},
      {"numeric",
       {{"scheme", "rk4"},
        {"sigma", 0.2},
        {"dt", 0.0},
        {"horizon", 10.0},
        {"converge_tol", 1e-9},
        {"stop_on_converge", true},
        {"newton_tol", 1e-10},
        {"newton_max_iter", 30u},
        {"k_max", 24u},
        {"delta1", 0.05},
        {"delta2", 0.1},
        {"observe_every", 0.1},
        {"collapse_fraction", 0.25},
        {"beta", 0.5},
        {"gamma", 1.5},
        {"drift_beta", 0.25},
        {"loja_floor", 1e-10},
        {"kernel_tol", 1e-8},
        {"synthetic_kernel", 0u},
        {"basin", 0.5},
        {"roundtrip_samples", 20u},
        {"roundtrip_norm", 0.02},
        {"ladder", {0.1, 0.05, 0.025, 0.0125}},
        {"landscape_extent", 0.05},
        {"landscape_points", 9u},
        {"entropy_log_t0", {-3.0, 3.0}},
        {"entropy_x0_bound", 5.0},
        {"entropy_grid", 11u},
        {"entropy_simplex_tol", 1e-8}}},
      {"replay", {{"T1", 0.5}, {"T2", 1.0}, {"b", 1.0}, {"y0", {0.0, 0.0}}, {"convention", "literal"}, {"steps", 20u}}},
  };
  return d;
}

struct BaseSpec {
  std::string shape;
  std::optional<double> radius;
  std::array<double, 2> semi_axes{};
  std::size_t n_samples = 0;
  bool operator==(const BaseSpec&) const = default;
};

struct PerturbationSpec {
  std::string type;
  std::size_t mode = 0;
  double amplitude = 0.0;
  std::size_t k_max = 0;
  double mix = 0.0;  // share of seeded random field mixed into the unstable mode
  bool operator==(const PerturbationSpec&) const = default;
};

struct NumericSettings {
  std::string scheme;
  double sigma = 0.0, dt = 0.0, horizon = 0.0, converge_tol = 0.0;
  bool stop_on_converge = true;
  double newton_tol = 0.0;
  std::size_t newton_max_iter = 0, k_max = 0;
  double delta1 = 0.0, delta2 = 0.0, observe_every = 0.0, collapse_fraction = 0.0;
  double beta = 0.0, gamma = 0.0, drift_beta = 0.0, loja_floor = 0.0;
  double kernel_tol = 0.0;
  std::size_t synthetic_kernel = 0;
  double basin = 0.0;
  std::size_t roundtrip_samples = 0;
  double roundtrip_norm = 0.0;
  std::vector<double> ladder;
  double landscape_extent = 0.0;
  std::size_t landscape_points = 0;
  std::array<double, 2> entropy_log_t0{};
  double entropy_x0_bound = 0.0;
  std::size_t entropy_grid = 0;
  double entropy_simplex_tol = 0.0;
  bool operator==(const NumericSettings&) const = default;
};

struct ReplaySpec {
  double T1 = 0.0, T2 = 0.0, b = 0.0;
  std::array<double, 2> y0{};
  std::string convention;
  std::size_t steps = 0;
  bool operator==(const ReplaySpec&) const = default;
};

struct ExperimentConfig {
  std::string kind;
  std::string name;
  std::uint64_t seed = 0;
  std::string output_dir;
  std::size_t snapshot_stride = 0;
  BaseSpec base;
  PerturbationSpec perturbation;
  NumericSettings numeric;
  ReplaySpec replay;
  bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

using nlohmann::json;

inline void config_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::ConfigError, path + ": " + what);
}

// Overlays `user` onto `defaults`, rejecting unknown keys.
inline json overlay(const json& defaults, const json& user, const std::string& path) {
  if (!user.is_object()) config_fail(path.empty() ? "config" : path, "expected an object");
  json out = defaults;
  for (const auto& [key, value] : user.items()) {
    const std::string p = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key)) config_fail(p, "unknown key");
    out[key] = defaults[key].is_object() ? overlay(defaults[key], value, p) : value;
  }
  return out;
}

inline const json& field(const json& j, const std::string& path) {
  const json* cur = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    cur = &cur->at(path.substr(start, dot - start));
    if (dot == std::string::npos) return *cur;
    start = dot + 1;
  }
}

inline double get_double(const json& j, const std::string& path) {
  const auto& v = field(j, path);
  if (!v.is_number()) config_fail(path, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) config_fail(path, "must be finite");
  return x;
}

inline std::uint64_t get_uint(const json& j, const std::string& path) {
  const auto& v = field(j, path);
  if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0))
    config_fail(path, "expected a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::string get_string(const json& j, const std::string& path) {
  const auto& v = field(j, path);
  if (!v.is_string()) config_fail(path, "expected a string");
  return v.get<std::string>();
}

inline bool get_bool(const json& j, const std::string& path) {
  const auto& v = field(j, path);
  if (!v.is_boolean()) config_fail(path, "expected true or false");
  return v.get<bool>();
}

inline std::vector<double> get_doubles(const json& j, const std::string& path, std::size_t exact = 0) {
  const auto& v = field(j, path);
  if (!v.is_array()) config_fail(path, "expected an array of numbers");
  if (exact && v.size() != exact) config_fail(path, "expected " + std::to_string(exact) + " numbers");
  std::vector<double> out;
  for (const auto& x : v) {
    if (!x.is_number() || !std::isfinite(x.get<double>())) config_fail(path, "expected finite numbers");
    out.push_back(x.get<double>());
  }
  return out;
}

inline std::array<double, 2> get_pair(const json& j, const std::string& path) {
  const auto v = get_doubles(j, path, 2);
  return {v[0], v[1]};
}

inline void one_of(const std::string& value, std::initializer_list<const char*> allowed, const std::string& path) {
  for (const char* a : allowed)
    if (value == a) return;
  config_fail(path, "unsupported value '" + value + "'");
}

inline void positive(double x, const std::string& path) {
  if (!(x > 0.0)) config_fail(path, "must be positive");
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  using detail::config_fail;
  using detail::positive;
  detail::one_of(c.kind, {"flow", "spectrum", "find", "shoot", "entropy", "loja", "noreturn", "lsreduce", "replay"}, "kind");
  detail::one_of(c.base.shape, {"circle", "sphere", "ellipse", "torus"}, "base.shape");
  detail::one_of(c.perturbation.type, {"none", "mode", "area_neutral", "unstable", "random"}, "perturbation.type");
  detail::one_of(c.numeric.scheme, {"rk4", "semi_implicit"}, "numeric.scheme");
  detail::one_of(c.replay.convention, {"literal", "consistent"}, "replay.convention");
  if (c.base.radius) positive(*c.base.radius, "base.radius");
  positive(c.base.semi_axes[0], "base.semi_axes");
  positive(c.base.semi_axes[1], "base.semi_axes");
  if (c.base.n_samples < (c.base.shape == "sphere" ? 32u : 16u)) config_fail("base.n_samples", "too few samples for the shape");
  const auto& n = c.numeric;
  for (auto [x, p] : {std::pair{n.sigma, "numeric.sigma"}, {n.horizon, "numeric.horizon"}, {n.converge_tol, "numeric.converge_tol"},
                      {n.newton_tol, "numeric.newton_tol"}, {n.observe_every, "numeric.observe_every"},
                      {n.loja_floor, "numeric.loja_floor"}, {n.kernel_tol, "numeric.kernel_tol"}, {n.basin, "numeric.basin"},
                      {n.roundtrip_norm, "numeric.roundtrip_norm"}, {n.landscape_extent, "numeric.landscape_extent"},
                      {n.entropy_x0_bound, "numeric.entropy_x0_bound"}, {n.entropy_simplex_tol, "numeric.entropy_simplex_tol"},
                      {n.delta1, "numeric.delta1"}, {n.drift_beta, "numeric.drift_beta"}})
    positive(x, p);
  if (n.dt < 0.0) config_fail("numeric.dt", "must be zero (automatic) or positive");
  if (n.delta1 >= n.delta2) config_fail("numeric.delta2", "must exceed delta1");
  if (!(n.beta > 0.0 && n.beta < 1.0)) config_fail("numeric.beta", "must lie in (0, 1)");
  if (!(n.gamma > 1.0 && n.gamma < 1.0 / (1.0 - n.beta))) config_fail("numeric.gamma", "must lie in (1, 1/(1-beta))");
  if (n.collapse_fraction < 0.0 || n.collapse_fraction >= 1.0) config_fail("numeric.collapse_fraction", "must lie in [0, 1)");
  if (n.newton_max_iter == 0) config_fail("numeric.newton_max_iter", "must be positive");
  if (n.k_max == 0) config_fail("numeric.k_max", "must be positive");
  if (n.ladder.empty()) config_fail("numeric.ladder", "needs at least one step");
  for (double e : n.ladder) positive(e, "numeric.ladder");
  if (n.landscape_points == 0) config_fail("numeric.landscape_points", "must be positive");
  if (n.entropy_grid < 2) config_fail("numeric.entropy_grid", "needs at least two nodes");
  if (n.entropy_log_t0[0] >= n.entropy_log_t0[1]) config_fail("numeric.entropy_log_t0", "needs min < max");
  if (c.replay.T1 >= c.replay.T2) config_fail("replay.T2", "must exceed T1");
  positive(c.replay.b, "replay.b");
  if (c.replay.steps == 0) config_fail("replay.steps", "must be positive");

  const bool curve = c.base.shape == "circle" || c.base.shape == "ellipse";
  if (c.base.shape == "ellipse" && c.perturbation.type != "none")
    config_fail("perturbation.type", "an ellipse is flowed as given; perturb a shrinker base instead");
  if (c.base.shape == "ellipse" && c.kind != "flow" && c.kind != "replay" && c.kind != "entropy")
    config_fail("base.shape", "ellipse bases only support flow, replay and entropy");
  if (c.perturbation.type == "area_neutral" && c.base.shape != "circle")
    config_fail("perturbation.type", "area_neutral is defined on circles only");
  if (c.kind == "replay" && !curve) config_fail("base.shape", "replay runs the intrinsic curve flow; use circle or ellipse");
  if (c.kind == "replay" && n.horizon < c.replay.T2) config_fail("numeric.horizon", "replay needs horizon >= replay.T2");
  if (c.kind == "loja" && c.snapshot_stride == 0) config_fail("snapshot_stride", "loja runs need stored snapshots");
  if (c.perturbation.mix < 0.0) config_fail("perturbation.mix", "must be non-negative");
}

/// Parses and validates a config object; raises ConfigError on any problem.
inline ExperimentConfig config_from_json(const nlohmann::json& user) {
  using namespace detail;
  const json j = overlay(config_defaults(), user, "");
  ExperimentConfig c;
  c.kind = get_string(j, "kind");
  c.name = get_string(j, "name");
  c.seed = get_uint(j, "seed");
  c.output_dir = get_string(j, "output_dir");
  c.snapshot_stride = get_uint(j, "snapshot_stride");
  c.base.shape = get_string(j, "base.shape");
  if (!field(j, "base.radius").is_null()) c.base.radius = get_double(j, "base.radius");
  c.base.semi_axes = get_pair(j, "base.semi_axes");
  c.base.n_samples = get_uint(j, "base.n_samples");
  c.perturbation.type = get_string(j, "perturbation.type");
  c.perturbation.mode = get_uint(j, "perturbation.mode");
  c.perturbation.amplitude = get_double(j, "perturbation.amplitude");
  c.perturbation.k_max = get_uint(j, "perturbation.k_max");
  c.perturbation.mix = get_double(j, "perturbation.mix");
  auto& n = c.numeric;
  n.scheme = get_string(j, "numeric.scheme");
  n.sigma = get_double(j, "numeric.sigma");
  n.dt = get_double(j, "numeric.dt");
  n.horizon = get_double(j, "numeric.horizon");
  n.converge_tol = get_double(j, "numeric.converge_tol");
  n.stop_on_converge = get_bool(j, "numeric.stop_on_converge");
  n.newton_tol = get_double(j, "numeric.newton_tol");
  n.newton_max_iter = get_uint(j, "numeric.newton_max_iter");
  n.k_max = get_uint(j, "numeric.k_max");
  n.delta1 = get_double(j, "numeric.delta1");
  n.delta2 = get_double(j, "numeric.delta2");
  n.observe_every = get_double(j, "numeric.observe_every");
  n.collapse_fraction = get_double(j, "numeric.collapse_fraction");
  n.beta = get_double(j, "numeric.beta");
  n.gamma = get_double(j, "numeric.gamma");
  n.drift_beta = get_double(j, "numeric.drift_beta");
  n.loja_floor = get_double(j, "numeric.loja_floor");
  n.kernel_tol = get_double(j, "numeric.kernel_tol");
  n.synthetic_kernel = get_uint(j, "numeric.synthetic_kernel");
  n.basin = get_double(j, "numeric.basin");
  n.roundtrip_samples = get_uint(j, "numeric.roundtrip_samples");
  n.roundtrip_norm = get_double(j, "numeric.roundtrip_norm");
  n.ladder = get_doubles(j, "numeric.ladder");
  n.landscape_extent = get_double(j, "numeric.landscape_extent");
  n.landscape_points = get_uint(j, "numeric.landscape_points");
  n.entropy_log_t0 = get_pair(j, "numeric.entropy_log_t0");
  n.entropy_x0_bound = get_double(j, "numeric.entropy_x0_bound");
  n.entropy_grid = get_uint(j, "numeric.entropy_grid");
  n.entropy_simplex_tol = get_double(j, "numeric.entropy_simplex_tol");
  c.replay.T1 = get_double(j, "replay.T1");
  c.replay.T2 = get_double(j, "replay.T2");
  c.replay.b = get_double(j, "replay.b");
  c.replay.y0 = get_pair(j, "replay.y0");
  c.replay.convention = get_string(j, "replay.convention");
  c.replay.steps = get_uint(j, "replay.steps");
  validate(c);
  return c;
}

inline ExperimentConfig config_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ConfigError, std::string("malformed JSON: ") + e.what());
  }
  return config_from_json(j);
}

inline ExperimentConfig default_config() { return config_from_json(nlohmann::json::object()); }

inline nlohmann::json to_json(const ExperimentConfig& c) {
  const auto& n = c.numeric;
  return {{"kind", c.kind},
          {"name", c.name},
          {"seed", c.seed},
          {"output_dir", c.output_dir},
          {"snapshot_stride", c.snapshot_stride},
          {"base",
           {{"shape", c.base.shape},
            {"radius", c.base.radius ? nlohmann::json(*c.base.radius) : nlohmann::json(nullptr)},
            {"semi_axes", c.base.semi_axes},
            {"n_samples", c.base.n_samples}}},
          {"perturbation",
           {{"type", c.perturbation.type},
            {"mode", c.perturbation.mode},
            {"amplitude", c.perturbation.amplitude},
            {"k_max", c.perturbation.k_max},
            {"mix", c.perturbation.mix}}},
          {"numeric",
           {{"scheme", n.scheme},
            {"sigma", n.sigma},
            {"dt", n.dt},
            {"horizon", n.horizon},
            {"converge_tol", n.converge_tol},
            {"stop_on_converge", n.stop_on_converge},
            {"newton_tol", n.newton_tol},
            {"newton_max_iter", n.newton_max_iter},
            {"k_max", n.k_max},
            {"delta1", n.delta1},
            {"delta2", n.delta2},
            {"observe_every", n.observe_every},
            {"collapse_fraction", n.collapse_fraction},
            {"beta", n.beta},
            {"gamma", n.gamma},
            {"drift_beta", n.drift_beta},
            {"loja_floor", n.loja_floor},
            {"kernel_tol", n.kernel_tol},
            {"synthetic_kernel", n.synthetic_kernel},
            {"basin", n.basin},
            {"roundtrip_samples", n.roundtrip_samples},
            {"roundtrip_norm", n.roundtrip_norm},
            {"ladder", n.ladder},
            {"landscape_extent", n.landscape_extent},
            {"landscape_points", n.landscape_points},
            {"entropy_log_t0", n.entropy_log_t0},
            {"entropy_x0_bound", n.entropy_x0_bound},
            {"entropy_grid", n.entropy_grid},
            {"entropy_simplex_tol", n.entropy_simplex_tol}}},
          {"replay",
           {{"T1", c.replay.T1},
            {"T2", c.replay.T2},
            {"b", c.replay.b},
            {"y0", c.replay.y0},
            {"convention", c.replay.convention},
            {"steps", c.replay.steps}}}};
}

// ---- running ---------------------------------------------------------------

enum class RunStatus { Success, NumericFailure, VerdictNegative };

inline int exit_code(RunStatus s) {
  switch (s) {
    case RunStatus::Success: return 0;
    case RunStatus::NumericFailure: return 3;
    default: return 4;
  }
}

inline std::string to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Success: return "success";
    case RunStatus::NumericFailure: return "numeric_failure";
    default: return "verdict_negative";
  }
}

struct Artifact {
  std::string name;     // relative path inside the run directory
  std::string content;
};

struct ExperimentResult {
  RunStatus status = RunStatus::Success;
  std::string reason;
  nlohmann::json report = nlohmann::json::object();
  std::vector<Artifact> artifacts;  // report.json last
};

/// Snapshots as {kind, topology, n_samples, snapshots: [{t, points, u?}]}.
inline nlohmann::json snapshots_to_json(const FlowTrajectory& traj, const Surface& like) {
  nlohmann::json snaps = nlohmann::json::array();
  for (const auto& s : traj.snapshots) {
    nlohmann::json pts = nlohmann::json::array();
    for (Eigen::Index i = 0; i < s.points.rows(); ++i) pts.push_back({s.points(i, 0), s.points(i, 1)});
    nlohmann::json e{{"t", s.t}, {"points", pts}};
    if (s.u.size()) e["u"] = std::vector<double>(s.u.data(), s.u.data() + s.u.size());
    snaps.push_back(std::move(e));
  }
  return {{"kind", to_string(like.kind())}, {"topology", to_string(like.topology())}, {"n_samples", like.size()}, {"snapshots", snaps}};
}

struct StoredTrajectory {
  FlowTrajectory traj;
  Surface like;  // the first snapshot
};

inline StoredTrajectory snapshots_from_json(const nlohmann::json& j) {
  try {
    const auto& snaps = j.at("snapshots");
    require(!snaps.empty(), ErrorCode::ConfigError, "trajectory file has no snapshots");
    FlowTrajectory traj;
    traj.kind = j.at("kind").get<std::string>() == "curve" ? SurfaceKind::Curve : SurfaceKind::Revolution;
    std::optional<Surface> like;
    for (const auto& e : snaps) {
      nlohmann::json state{{"kind", j.at("kind")}, {"topology", j.at("topology")}, {"points", e.at("points")}, {"t", e.at("t")}};
      Surface M = surface_from_json(state);
      Snapshot s;
      s.t = M.t();
      s.points = M.points();
      if (e.contains("u")) {
        const auto u = e.at("u").get<std::vector<double>>();
        s.u = Eigen::Map<const Eigen::VectorXd>(u.data(), static_cast<Eigen::Index>(u.size()));
      }
      traj.snapshots.push_back(std::move(s));
      if (!like) like = std::move(M);
    }
    return {std::move(traj), std::move(*like)};
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("bad trajectory json: ") + e.what());
  }
}

inline Surface build_base(const BaseSpec& b) {
  const auto n = b.n_samples;
  if (b.shape == "circle") return build_circle(b.radius.value_or(std::numbers::sqrt2), n);
  if (b.shape == "sphere") return build_sphere(b.radius.value_or(2.0), n);
  if (b.shape == "ellipse") return build_ellipse(b.semi_axes[0], b.semi_axes[1], n);
  ShootingOptions so;
  so.n_samples = n;
  auto res = shoot_angenent_torus(so);
  require(res.success, ErrorCode::NoConvergence, "torus shooting did not close within tolerance");
  return std::move(*res.profile);
}

inline Eigen::VectorXd build_perturbation(const ExperimentConfig& c, const Surface& base) {
  const auto& p = c.perturbation;
  const Eigen::ArrayXd th = base.grid().theta().array();
  const double k = static_cast<double>(p.mode);
  if (p.type == "none") return Eigen::VectorXd::Zero(th.size());
  if (p.type == "mode") return p.amplitude * (k * th).cos().matrix();
  if (p.type == "area_neutral") {
    // eps cos k theta plus the constant that keeps the enclosed area pi R^2
    const double R = c.base.radius.value_or(std::numbers::sqrt2);
    require(p.mode >= 1 && p.amplitude * p.amplitude < 2.0 * R * R, ErrorCode::ConfigError,
            "perturbation: area_neutral needs mode >= 1 and amplitude < sqrt 2 R");
    return (p.amplitude * (k * th).cos()).matrix().array() + (std::sqrt(R * R - p.amplitude * p.amplitude / 2) - R);
  }
  std::mt19937_64 rng(c.seed);
  if (p.type == "random") return random_smooth_field(base, rng, static_cast<int>(p.k_max), p.amplitude);
  StabilityOptions so;
  so.k_max = c.numeric.k_max;
  const auto rep = stability_report(base, so);
  require(!rep.unstable_fields.empty(), ErrorCode::HypothesisFail, "perturbation: base has no unstable mode outside the group span");
  Eigen::VectorXd v = rep.unstable_fields.front();
  v /= v.cwiseAbs().maxCoeff();
  if (std::bernoulli_distribution(0.5)(rng)) v = -v;
  if (p.mix > 0.0) {
    Eigen::VectorXd w = random_smooth_field(base, rng, static_cast<int>(p.k_max), 1.0);
    v += p.mix * w / w.cwiseAbs().maxCoeff();
  }
  return p.amplitude * v / v.cwiseAbs().maxCoeff();
}

namespace detail {

template <class F>
std::string render(F&& write) {
  std::ostringstream os;
  write(os);
  return os.str();
}

inline FlowOptions flow_options(const ExperimentConfig& c) {
  FlowOptions fo;
  fo.scheme = c.numeric.scheme == "rk4" ? Scheme::RK4 : Scheme::SemiImplicit;
  fo.sigma = c.numeric.sigma;
  fo.dt = c.numeric.dt;
  fo.converge_tol = c.numeric.converge_tol;
  fo.stop_on_converge = c.numeric.stop_on_converge;
  fo.snapshot_stride = c.snapshot_stride;
  return fo;
}

inline nlohmann::json flow_summary(const FlowTrajectory& traj) {
  const auto& R = traj.records;
  bool monotone = true;
  for (std::size_t k = 1; k < R.size(); ++k) monotone = monotone && R[k].F <= R[k - 1].F + 1e-10 * (1.0 + std::abs(R[k - 1].F));
  nlohmann::json j{{"termination", to_string(traj.termination)},
                   {"message", traj.message},
                   {"records", R.size()},
                   {"t_final", R.back().t},
                   {"F_initial", R.front().F},
                   {"F_final", R.back().F},
                   {"F_monotone", monotone}};
  if (R.size() >= 3) j["gradient_identity_residual"] = gradient_identity_residual(traj).max_resolved;
  return j;
}

inline bool numeric_failure(Termination t) { return t == Termination::Blowup || t == Termination::SelfIntersection; }

inline Points expected_replay_end(const ComebackSchedule& s, const Points& at_T2) {
  const double scale = s.convention == ComebackConvention::Consistent ? 1.0 : std::exp(-0.5 * s.T2);
  return (s.b * ((scale * at_T2).rowwise() + s.y0.transpose()).array()).matrix();
}

}  // namespace detail

/// Runs one experiment in memory. ConfigError propagates; every other
/// library error becomes a numeric failure carrying its message.
inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  validate(c);
  ExperimentResult res;
  auto add = [&](std::string name, std::string content) { res.artifacts.push_back({std::move(name), std::move(content)}); };
  auto& rep = res.report;
  rep["kind"] = c.kind;
  rep["seed"] = c.seed;
  try {
    const Surface base = build_base(c.base);
    const Eigen::VectorXd u0 = build_perturbation(c, base);
    const double F_sigma = gaussian_area(base);
    rep["F_base"] = F_sigma;
    const auto fo = detail::flow_options(c);

    if (c.kind == "flow") {
      const auto traj = c.base.shape == "ellipse" ? run_curve_flow(base, c.numeric.horizon, fo)
                                                  : run_graph_flow(base, u0, c.numeric.horizon, fo);
      rep["flow"] = detail::flow_summary(traj);
      add("trajectory.csv", detail::render([&](std::ostream& os) { write_trajectory_csv(os, traj); }));
      add("snapshots.json", snapshots_to_json(traj, base).dump());
      if (detail::numeric_failure(traj.termination)) {
        res.status = RunStatus::NumericFailure;
        res.reason = traj.message;
      }
    } else if (c.kind == "spectrum") {
      StabilityOptions so;
      so.k_max = c.numeric.k_max;
      const auto st = stability_report(base, so);
      const auto gi = group_identities(base);
      rep["stability"] = {{"verdict", to_string(st.verdict)},
                          {"positive", st.positive},
                          {"group_modes", st.group_modes},
                          {"index", st.index},
                          {"unstable_eigenvalues", st.unstable_eigenvalues},
                          {"sector", st.sector},
                          {"note", st.note}};
      rep["spectrum"] = {{"orthonormality_residual", st.spectrum.orthonormality_residual},
                         {"eigen_residual", st.spectrum.eigen_residual},
                         {"approximate", st.spectrum.approximate}};
      rep["group_identities"] = {{"dilation", gi.dilation}, {"translation", gi.translation}};
      add("spectrum.csv", detail::render([&](std::ostream& os) { write_spectrum_csv(os, st.spectrum); }));
    } else if (c.kind == "find") {
      NewtonOptions no;
      no.tol = c.numeric.newton_tol;
      no.max_iter = static_cast<int>(c.numeric.newton_max_iter);
      const auto nr = newton_find_shrinker(base, u0, no);
      rep["newton"] = {{"iterations", nr.iterations},
                       {"residuals", nr.residuals},
                       {"error_ratios", nr.error_ratios},
                       {"quadratic", nr.quadratic},
                       {"sup_u", nr.u.size() ? nr.u.cwiseAbs().maxCoeff() : 0.0}};
      add("state.json", to_json(graph_embedding(base, nr.u)).dump());
    } else if (c.kind == "shoot") {
      ShootingOptions so;
      so.n_samples = c.base.n_samples;
      const auto sr = shoot_angenent_torus(so);
      nlohmann::json table = nlohmann::json::array();
      for (const auto& [r0, d] : sr.defect_table) table.push_back({r0, d});
      rep["shooting"] = {{"r0", sr.r0},
                         {"return_radius", sr.return_radius},
                         {"half_length", sr.half_length},
                         {"closure_defect", sr.closure_defect},
                         {"residual_sup", sr.residual_sup},
                         {"iterations", sr.iterations},
                         {"success", sr.success},
                         {"F", gaussian_area(*sr.profile)},
                         {"defect_table", table}};
      add("profile.json", to_json(*sr.profile).dump());
      add("geometry.csv", detail::render([&](std::ostream& os) { write_geometry_csv(os, *sr.profile); }));
      if (!sr.success) {
        res.status = RunStatus::NumericFailure;
        res.reason = "shooting did not meet the residual or closure tolerance";
      }
    } else if (c.kind == "entropy") {
      const Surface M = c.base.shape == "ellipse" ? base : graph_embedding(base, u0);
      EntropySearchConfig ec;
      ec.log_t0_min = c.numeric.entropy_log_t0[0];
      ec.log_t0_max = c.numeric.entropy_log_t0[1];
      ec.x0_bound = c.numeric.entropy_x0_bound;
      ec.grid_points = c.numeric.entropy_grid;
      ec.simplex_tol = c.numeric.entropy_simplex_tol;
      const auto er = entropy(M, ec);
      rep["entropy"] = {{"lambda", er.lambda}, {"t0", er.t0}, {"x0", {er.x0(0), er.x0(1)}}, {"converged", er.converged},
                        {"F", gaussian_area(M)}};
    } else if (c.kind == "loja") {
      const auto traj = run_graph_flow(base, u0, c.numeric.horizon, fo);
      rep["flow"] = detail::flow_summary(traj);
      LojaOptions lo;
      lo.floor = c.numeric.loja_floor;
      const auto lr = loja_check(traj, F_sigma, c.numeric.beta, lo);
      const auto wr = weighted_integral_check(traj, F_sigma, c.numeric.beta, c.numeric.gamma);
      DriftOptions dop;
      dop.drift_beta = c.numeric.drift_beta;
      dop.floor = c.numeric.loja_floor;
      const auto ds = drift_study(traj, base, dop);
      rep["loja"] = to_json(lr);
      rep["loja"]["beta"] = c.numeric.beta;
      rep["weighted_integral"] = to_json(wr);
      rep["drift"] = to_json(ds, dop);
      add("trajectory.csv", detail::render([&](std::ostream& os) { write_trajectory_csv(os, traj); }));
      add("loja.csv", detail::render([&](std::ostream& os) { write_inequality_csv(os, lr); }));
      add("loja_regression.csv", detail::render([&](std::ostream& os) { write_regression_csv(os, lr); }));
      add("weighted_integral.csv", detail::render([&](std::ostream& os) { write_inequality_csv(os, wr); }));
      if (detail::numeric_failure(traj.termination)) {
        res.status = RunStatus::NumericFailure;
        res.reason = traj.message;
      } else if (lr.violations > 0) {
        res.status = RunStatus::VerdictNegative;
        res.reason = std::to_string(lr.violations) + " gradient-inequality violations below the fitted threshold";
      }
    } else if (c.kind == "noreturn") {
      NoReturnOptions no;
      no.delta1 = c.numeric.delta1;
      no.delta2 = c.numeric.delta2;
      no.horizon = c.numeric.horizon;
      no.observe_every = c.numeric.observe_every;
      no.collapse_fraction = c.numeric.collapse_fraction;
      no.flow = fo;
      const auto nr = no_return_experiment(base, u0, no);
      rep["verdict"] = to_json(nr);
      rep["verdict"]["max_graph_distance"] = nr.max_graph_distance;
      rep["verdict"]["delta1"] = no.delta1;
      rep["verdict"]["delta2"] = no.delta2;
      add("distances.csv", detail::render([&](std::ostream& os) {
            os << "t,orbit_dist\n" << std::setprecision(17);
            for (const auto& [t, d] : nr.distances) os << t << ',' << d << '\n';
          }));
      add("trajectory.csv", detail::render([&](std::ostream& os) { write_trajectory_csv(os, nr.graph_phase); }));
      if (nr.curve_phase)
        add("curve_trajectory.csv", detail::render([&](std::ostream& os) { write_trajectory_csv(os, *nr.curve_phase); }));
      if (nr.verdict == ReturnVerdict::Returned) {
        res.status = RunStatus::VerdictNegative;
        res.reason = "trajectory returned to the delta1 neighbourhood of the orbit";
      }
    } else if (c.kind == "lsreduce") {
      ReductionOptions ro;
      ro.kernel_tol = c.numeric.kernel_tol;
      ro.synthetic_kernel = c.numeric.synthetic_kernel;
      ro.k_max = c.numeric.k_max;
      ro.newton_tol = c.numeric.newton_tol;
      ro.max_iter = static_cast<int>(c.numeric.newton_max_iter);
      ro.basin = c.numeric.basin;
      auto red = build_reduction(base, ro);
      const auto [idem, asym] = projection_defects(red);
      std::mt19937_64 rng(c.seed ^ 0x5eedULL);
      double worst_u = 0.0, worst_v = 0.0;
      for (std::size_t i = 0; i < c.numeric.roundtrip_samples; ++i) {
        const Eigen::VectorXd u = random_smooth_field(base, rng, 6, c.numeric.roundtrip_norm);
        worst_u = std::max(worst_u, (red.psi(red.nbar(u)) - u).cwiseAbs().maxCoeff());
        const Eigen::VectorXd v = random_smooth_field(base, rng, 6, c.numeric.roundtrip_norm);
        worst_v = std::max(worst_v, (red.nbar(red.psi(v)) - v).cwiseAbs().maxCoeff());
      }
      const Eigen::VectorXd dir = u0.cwiseAbs().maxCoeff() > 0.0 ? u0 : random_smooth_field(base, rng, 5, 1.0);
      const auto lad = ratio_ladder(red, dir, c.numeric.ladder);
      rep["reduction"] = {{"dim", red.dim()},
                          {"synthetic_kernel", red.synthetic()},
                          {"kernel_eigenvalues", std::vector<double>(red.kernel_eigenvalues().data(),
                                                                     red.kernel_eigenvalues().data() + red.dim())},
                          {"idempotency_defect", idem},
                          {"q_asymmetry", asym},
                          {"roundtrip_psi_nbar", worst_u},
                          {"roundtrip_nbar_psi", worst_v},
                          {"ladder", to_json(lad)}};
      if (red.dim() > 0) {
        const auto samples =
            reduced_samples(red, c.numeric.landscape_extent, static_cast<int>(c.numeric.landscape_points));
        add("reduced.csv", detail::render([&](std::ostream& os) { write_reduced_csv(os, samples, red.synthetic()); }));
      }
    } else if (c.kind == "replay") {
      const Surface curve0 = c.base.shape == "ellipse" ? base : graph_embedding(base, u0);
      FlowOptions stored = fo;
      stored.snapshot_stride = 1;
      stored.stop_on_converge = false;
      const auto traj = run_curve_flow(curve0, c.numeric.horizon, stored);
      require(!detail::numeric_failure(traj.termination), ErrorCode::Blowup, "source flow failed: " + traj.message);
      const Eigen::Vector2d y0(c.replay.y0[0], c.replay.y0[1]);
      const auto conv = c.replay.convention == "literal" ? ComebackConvention::Literal : ComebackConvention::Consistent;
      const auto s = comeback_schedule(c.replay.T1, c.replay.T2, c.replay.b, y0, {}, conv);
      std::vector<double> times;
      for (std::size_t i = 0; i <= c.replay.steps; ++i)
        times.push_back(s.Tbar * (1.0 - static_cast<double>(i) / static_cast<double>(c.replay.steps)));
      const auto rp = replay(traj, curve0, s, times);
      const Points want = detail::expected_replay_end(s, detail::interpolate_snapshots(traj, s.T2));
      const auto [d0, d1] = s.identity_defects();
      rep["schedule"] = {{"T1", s.T1},           {"T2", s.T2},   {"b", s.b},   {"convention", to_string(s.convention)},
                         {"t0", s.t0},           {"a", s.a},     {"Tbar", s.Tbar}, {"x0", {s.x0(0), s.x0(1)}},
                         {"identity_defects", {d0, d1}}};
      rep["end_state_error"] = (rp.snapshots.back().points - want).cwiseAbs().maxCoeff();
      rep["source_flow"] = detail::flow_summary(traj);
      add("trajectory.csv", detail::render([&](std::ostream& os) { write_trajectory_csv(os, traj); }));
      add("snapshots.json", snapshots_to_json(traj, curve0).dump());
      add("replay.csv", detail::render([&](std::ostream& os) { write_trajectory_csv(os, rp); }));
    }
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    res.status = RunStatus::NumericFailure;
    res.reason = e.what();
    res.artifacts.clear();
  }
  rep["status"] = to_string(res.status);
  rep["exit_code"] = exit_code(res.status);
  if (!res.reason.empty()) rep["reason"] = res.reason;
  add("report.json", rep.dump(2));
  return res;
}

/// Replays a stored trajectory (as written by snapshots_to_json) through the
/// comeback schedule for the window [T1, T2] at scale b.
inline ExperimentResult run_replay(const StoredTrajectory& st, const ReplaySpec& spec) {
  require(spec.T1 < spec.T2 && spec.b > 0.0 && spec.steps > 0, ErrorCode::ConfigError,
          "replay needs T1 < T2, b > 0 and steps > 0");
  ExperimentResult res;
  auto& rep = res.report;
  rep["kind"] = "replay";
  try {
    const Eigen::Vector2d y0(spec.y0[0], spec.y0[1]);
    const auto conv = spec.convention == "literal" ? ComebackConvention::Literal : ComebackConvention::Consistent;
    const auto s = comeback_schedule(spec.T1, spec.T2, spec.b, y0, {}, conv);
    std::vector<double> times;
    for (std::size_t i = 0; i <= spec.steps; ++i)
      times.push_back(s.Tbar * (1.0 - static_cast<double>(i) / static_cast<double>(spec.steps)));
    const auto rp = replay(st.traj, st.like, s, times);
    const Points want = detail::expected_replay_end(s, detail::interpolate_snapshots(st.traj, s.T2));
    rep["schedule"] = {{"T1", s.T1}, {"T2", s.T2}, {"b", s.b}, {"convention", to_string(s.convention)},
                       {"t0", s.t0}, {"a", s.a},   {"Tbar", s.Tbar}, {"x0", {s.x0(0), s.x0(1)}}};
    rep["end_state_error"] = (rp.snapshots.back().points - want).cwiseAbs().maxCoeff();
    res.artifacts.push_back({"replay.csv", detail::render([&](std::ostream& os) { write_trajectory_csv(os, rp); })});
    res.artifacts.push_back({"replay_snapshots.json", snapshots_to_json(rp, st.like).dump()});
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ConfigError) throw;
    res.status = RunStatus::NumericFailure;
    res.reason = e.what();
    res.artifacts.clear();
  }
  rep["status"] = to_string(res.status);
  rep["exit_code"] = exit_code(res.status);
  if (!res.reason.empty()) rep["reason"] = res.reason;
  res.artifacts.push_back({"report.json", rep.dump(2)});
  return res;
}

}  // namespace shrinkflow
