#pragma once

// Sampled closed hypersurfaces: plane curves and axisymmetric surfaces given
// by a profile curve in the (r, z) half-plane.
//
// Sign conventions: the unit normal points outward and H = div n, so a round
// sphere of radius R has H = 2/R and a circle of radius R has H = 1/R.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <iomanip>
#include <limits>
#include <memory>
#include <numbers>
#include <ostream>
#include <string>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "shrinkflow/errors.hpp"
#include "shrinkflow/spectral.hpp"

namespace shrinkflow {

enum class SurfaceKind { Curve, Revolution };

inline std::string to_string(SurfaceKind k) { return k == SurfaceKind::Curve ? "curve" : "revolution"; }
inline std::string to_string(Topology t) { return t == Topology::Periodic ? "periodic" : "capped"; }

/// Column-pair of sample coordinates: (x, y) for curves, (r, z) for profiles.
using Points = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Per-sample geometric data derived from the points.
struct Geometry {
  Points dp, ddp;         // first and second theta derivatives
  Points normal;          // outward unit normal
  Points dnormal, ddnormal;
  Eigen::VectorXd speed;  // |p_theta|
  Eigen::VectorXd kappa;  // curvature of the curve / profile
  Eigen::VectorXd H;      // mean curvature
  Eigen::VectorXd A2;     // |A|^2
  Eigen::VectorXd xdotn;  // <x, n>
  Eigen::VectorXd gauss;  // exp(-|x|^2 / 4)
  Eigen::VectorXd measure;  // quadrature weight of the area element
  Eigen::VectorXd arclength;
  double length = 0.0;
  double orientation = 1.0;  // sign of the enclosed (shoelace) area
  double reach = 0.0;
};

/// A closed sampled hypersurface with eagerly cached geometry. Serves both as
/// a base shrinker and as an evolving state (with time stamp t).
class Surface {
 public:
  Surface(SurfaceKind kind, std::shared_ptr<const SpectralGrid> grid, Points points, double t = 0.0)
      : kind_(kind), grid_(std::move(grid)), points_(std::move(points)), t_(t) {
    require(grid_ != nullptr, ErrorCode::InvalidArgument, "surface needs a grid");
    require(static_cast<std::size_t>(points_.rows()) == grid_->size(), ErrorCode::GridMismatch,
            "point count does not match grid size");
    require(kind_ == SurfaceKind::Revolution || grid_->topology() == Topology::Periodic, ErrorCode::InvalidArgument,
            "plane curves must be periodic");
    require(points_.allFinite(), ErrorCode::InvalidArgument, "non-finite sample coordinates");
    if (kind_ == SurfaceKind::Revolution)
      require(points_.col(0).minCoeff() > 0.0, ErrorCode::InvalidArgument, "profile must satisfy r > 0");
    compute();
  }

  SurfaceKind kind() const { return kind_; }
  Topology topology() const { return grid_->topology(); }
  const SpectralGrid& grid() const { return *grid_; }
  const std::shared_ptr<const SpectralGrid>& grid_ptr() const { return grid_; }
  std::size_t size() const { return grid_->size(); }
  const Points& points() const { return points_; }
  double t() const { return t_; }
  const Geometry& geometry() const { return geo_; }

  /// Intrinsic dimension of the hypersurface (1 for curves, 2 for surfaces).
  int dimension() const { return kind_ == SurfaceKind::Curve ? 1 : 2; }

  Parity parity(int column) const {
    if (topology() == Topology::Periodic) return Parity::Even;
    return column == 0 ? Parity::Odd : Parity::Even;
  }

  Surface with_points(Points p, double t) const { return Surface(kind_, grid_, std::move(p), t); }
  Surface with_time(double t) const { return Surface(kind_, grid_, points_, t); }

  /// Shrinker residual H - <x, n>/2 per sample.
  Eigen::VectorXd shrinker_residual() const { return geo_.H - 0.5 * geo_.xdotn; }

 private:
  void compute();

  SurfaceKind kind_;
  std::shared_ptr<const SpectralGrid> grid_;
  Points points_;
  double t_;
  Geometry geo_;
};

using BaseShrinker = Surface;
using ImmersedState = Surface;

namespace detail {

inline double shoelace(const Points& p) {
  double a = 0.0;
  const auto n = p.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto j = (i + 1) % n;
    a += p(i, 0) * p(j, 1) - p(j, 0) * p(i, 1);
  }
  return 0.5 * a;
}

// Cumulative arclength from theta = 0 by integrating the trigonometric
// interpolant of the speed (extended by reflection on capped grids).
inline Eigen::VectorXd cumulative_arclength(const SpectralGrid& grid, const Eigen::VectorXd& speed, double& length) {
  const auto N = speed.size();
  Eigen::VectorXd s(N);
  if (grid.topology() == Topology::Periodic) {
    const TrigInterpolant f(speed);
    length = 2.0 * std::numbers::pi * f.mean();
    const double a0 = f.zero_mean_antiderivative(0.0);
    for (Eigen::Index j = 0; j < N; ++j) s(j) = f.mean() * grid.theta()(j) + f.zero_mean_antiderivative(grid.theta()(j)) - a0;
  } else {
    Eigen::VectorXd ext(2 * N);
    for (Eigen::Index j = 0; j < N; ++j) {
      ext(j) = speed(j);
      ext(2 * N - 1 - j) = speed(j);
    }
    const TrigInterpolant f(ext, grid.theta()(0));
    length = std::numbers::pi * f.mean();
    const double a0 = f.zero_mean_antiderivative(0.0);
    for (Eigen::Index j = 0; j < N; ++j) s(j) = f.mean() * grid.theta()(j) + f.zero_mean_antiderivative(grid.theta()(j)) - a0;
  }
  return s;
}

}  // namespace detail

inline void Surface::compute() {
  const auto& g = *grid_;
  const auto N = points_.rows();
  const bool rev = kind_ == SurfaceKind::Revolution;
  auto& G = geo_;

  G.dp.resize(N, 2);
  G.ddp.resize(N, 2);
  for (int c = 0; c < 2; ++c) {
    G.dp.col(c) = g.d1(parity(c)) * points_.col(c);
    G.ddp.col(c) = g.d2(parity(c)) * points_.col(c);
  }
  G.speed = G.dp.rowwise().norm();
  require(G.speed.minCoeff() > 0.0, ErrorCode::InvalidArgument, "degenerate parametrisation (zero speed)");

  G.orientation = detail::shoelace(points_) >= 0.0 ? 1.0 : -1.0;
  const double sg = G.orientation;

  G.normal.resize(N, 2);
  G.kappa.resize(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double ta = G.dp(i, 0) / G.speed(i), tb = G.dp(i, 1) / G.speed(i);
    G.normal(i, 0) = sg * tb;
    G.normal(i, 1) = -sg * ta;
    const double cross = G.dp(i, 0) * G.ddp(i, 1) - G.dp(i, 1) * G.ddp(i, 0);
    G.kappa(i) = sg * cross / std::pow(G.speed(i), 3);
  }
  G.dnormal.resize(N, 2);
  G.ddnormal.resize(N, 2);
  for (int c = 0; c < 2; ++c) {
    G.dnormal.col(c) = g.d1(parity(c)) * G.normal.col(c);
    G.ddnormal.col(c) = g.d2(parity(c)) * G.normal.col(c);
  }

  G.H = G.kappa;
  G.A2 = G.kappa.array().square();
  if (rev) {
    const Eigen::ArrayXd rot = G.normal.col(0).array() / points_.col(0).array();
    G.H.array() += rot;
    G.A2.array() += rot.square();
  }
  G.xdotn = (points_.array() * G.normal.array()).rowwise().sum();
  G.gauss = (-0.25 * points_.rowwise().squaredNorm().array()).exp();

  if (!rev) {
    G.measure = G.speed.cwiseProduct(g.weights());
  } else if (topology() == Topology::Periodic) {
    G.measure = 2.0 * std::numbers::pi * points_.col(0).cwiseProduct(G.speed).cwiseProduct(g.weights());
  } else {
    const Eigen::ArrayXd sin_t = g.theta().array().sin();
    G.measure = (2.0 * std::numbers::pi * points_.col(0).array() / sin_t * G.speed.array() * g.weights().array()).matrix();
  }

  G.arclength = detail::cumulative_arclength(g, G.speed, G.length);

  // Reach: bounded by the focal distance 1/max|A| and by half the distance
  // between samples that are far apart along the curve.
  const double amax = std::sqrt(G.A2.maxCoeff());
  const double focal = amax > 0.0 ? 1.0 / amax : std::numeric_limits<double>::infinity();
  const double sep = amax > 0.0 ? std::numbers::pi / amax : std::numeric_limits<double>::infinity();
  double dmin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index j = i + 1; j < N; ++j) {
      double ds = std::abs(G.arclength(j) - G.arclength(i));
      if (topology() == Topology::Periodic) ds = std::min(ds, G.length - ds);
      if (ds >= sep) dmin = std::min(dmin, (points_.row(i) - points_.row(j)).norm());
    }
    if (rev) {
      // Distance to the mirror image across the axis; the shortest path on the
      // surface between them passes through a pole.
      for (Eigen::Index j = 0; j < N; ++j) {
        double ds = std::numeric_limits<double>::infinity();
        if (topology() == Topology::Capped)
          ds = std::min(G.arclength(i) + G.arclength(j), 2.0 * G.length - G.arclength(i) - G.arclength(j));
        if (ds >= sep) {
          const double dr = points_(i, 0) + points_(j, 0), dz = points_(i, 1) - points_(j, 1);
          dmin = std::min(dmin, std::hypot(dr, dz));
        }
      }
    }
  }
  G.reach = std::min(focal, 0.5 * dmin);
}

/// Uniform-in-angle circle of the given radius about the origin.
inline Surface build_circle(double radius, std::size_t n_samples) {
  require(radius > 0.0, ErrorCode::InvalidArgument, "circle radius must be positive");
  require(n_samples >= 16, ErrorCode::InvalidArgument, "circle needs at least 16 samples");
  auto grid = make_grid(n_samples, Topology::Periodic);
  Points p(static_cast<Eigen::Index>(n_samples), 2);
  p.col(0) = radius * grid->theta().array().cos();
  p.col(1) = radius * grid->theta().array().sin();
  return Surface(SurfaceKind::Curve, grid, std::move(p));
}

/// Axis-aligned ellipse with semi-axes (a, b), sampled uniformly in angle.
inline Surface build_ellipse(double a, double b, std::size_t n_samples) {
  require(a > 0.0 && b > 0.0, ErrorCode::InvalidArgument, "ellipse semi-axes must be positive");
  require(n_samples >= 16, ErrorCode::InvalidArgument, "ellipse needs at least 16 samples");
  auto grid = make_grid(n_samples, Topology::Periodic);
  Points p(static_cast<Eigen::Index>(n_samples), 2);
  p.col(0) = a * grid->theta().array().cos();
  p.col(1) = b * grid->theta().array().sin();
  return Surface(SurfaceKind::Curve, grid, std::move(p));
}

/// Round sphere as a surface of revolution; the profile runs from the north
/// pole to the south pole on the cell-centred polar grid.
inline Surface build_sphere(double radius, std::size_t n_samples) {
  require(radius > 0.0, ErrorCode::InvalidArgument, "sphere radius must be positive");
  require(n_samples >= 32, ErrorCode::InvalidArgument, "sphere needs at least 32 samples");
  auto grid = make_grid(n_samples, Topology::Capped);
  Points p(static_cast<Eigen::Index>(n_samples), 2);
  p.col(0) = radius * grid->theta().array().sin();
  p.col(1) = radius * grid->theta().array().cos();
  return Surface(SurfaceKind::Revolution, grid, std::move(p));
}

/// Gaussian area F = integral of exp(-|x|^2/4) over the hypersurface.
inline double gaussian_area(const Surface& M) { return M.geometry().gauss.dot(M.geometry().measure); }

/// F(t0 M + x0) without rebuilding the surface. For surfaces of revolution
/// only the axial component x0(1) is meaningful.
inline double gaussian_area_transformed(const Surface& M, double t0, const Eigen::Vector2d& x0) {
  const auto& P = M.points();
  const auto& mu = M.geometry().measure;
  const double jac = std::pow(t0, M.dimension());
  double F = 0.0;
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    double r2;
    if (M.kind() == SurfaceKind::Curve) {
      r2 = (t0 * P.row(i).transpose() + x0).squaredNorm();
    } else {
      const double r = t0 * P(i, 0), z = t0 * P(i, 1) + x0(1);
      r2 = r * r + z * z;
    }
    F += std::exp(-0.25 * r2) * mu(i);
  }
  return jac * F;
}

/// Tangential derivatives of a scalar field on a surface, with respect to
/// arclength along the curve/profile.
struct FieldDerivatives {
  Eigen::VectorXd ds, dss;
};

inline FieldDerivatives arclength_derivatives(const Surface& M, const Eigen::VectorXd& u) {
  const auto& g = M.grid();
  const auto& G = M.geometry();
  const Eigen::VectorXd ut = g.d1() * u;
  const Eigen::VectorXd utt = g.d2() * u;
  const Eigen::ArrayXd sp = G.speed.array();
  const Eigen::ArrayXd tang = (G.dp.array() * G.ddp.array()).rowwise().sum() / sp.square();
  FieldDerivatives d;
  d.ds = (ut.array() / sp).matrix();
  d.dss = ((utt.array() - tang * ut.array()) / sp.square()).matrix();
  return d;
}

struct SupNorms {
  double c0 = 0.0, c1 = 0.0, c2 = 0.0, holder = 0.0;
};

/// Discrete sup norms of a field and the Holder seminorm of the field over
/// all sample pairs (ambient distance).
inline SupNorms sup_norms(const Surface& M, const Eigen::VectorXd& u, double alpha = 0.5) {
  require(static_cast<std::size_t>(u.size()) == M.size(), ErrorCode::GridMismatch, "field size does not match grid");
  SupNorms s;
  if (u.size() == 0) return s;
  const auto d = arclength_derivatives(M, u);
  s.c0 = u.cwiseAbs().maxCoeff();
  s.c1 = d.ds.cwiseAbs().maxCoeff();
  s.c2 = d.dss.cwiseAbs().maxCoeff();
  const auto& P = M.points();
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    for (Eigen::Index j = i + 1; j < u.size(); ++j) {
      const double dist = (P.row(i) - P.row(j)).norm();
      if (dist > 0.0) s.holder = std::max(s.holder, std::abs(u(i) - u(j)) / std::pow(dist, alpha));
    }
  }
  return s;
}

/// True when two non-adjacent polygon edges cross.
inline bool self_intersects(const Points& p, bool closed) {
  const auto n = p.rows();
  const auto edges = closed ? n : n - 1;
  auto orient = [](const Eigen::RowVector2d& a, const Eigen::RowVector2d& b, const Eigen::RowVector2d& c) {
    return (b(0) - a(0)) * (c(1) - a(1)) - (b(1) - a(1)) * (c(0) - a(0));
  };
  for (Eigen::Index i = 0; i < edges; ++i) {
    const Eigen::RowVector2d a = p.row(i), b = p.row((i + 1) % n);
    for (Eigen::Index j = i + 2; j < edges; ++j) {
      if (closed && i == 0 && j == n - 1) continue;
      const Eigen::RowVector2d c = p.row(j), d = p.row((j + 1) % n);
      const double o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
      if (((o1 > 0) != (o2 > 0)) && ((o3 > 0) != (o4 > 0)) && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0) return true;
    }
  }
  return false;
}

inline nlohmann::json to_json(const Surface& M) {
  nlohmann::json pts = nlohmann::json::array();
  for (Eigen::Index i = 0; i < M.points().rows(); ++i) pts.push_back({M.points()(i, 0), M.points()(i, 1)});
  return {{"kind", to_string(M.kind())},
          {"topology", to_string(M.topology())},
          {"n_samples", M.size()},
          {"points", pts},
          {"t", M.t()}};
}

inline Surface surface_from_json(const nlohmann::json& j) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    require(kind == "curve" || kind == "revolution", ErrorCode::ConfigError, "unknown surface kind '" + kind + "'");
    const std::string topo = j.value("topology", kind == "curve" ? std::string("periodic") : std::string("capped"));
    require(topo == "periodic" || topo == "capped", ErrorCode::ConfigError, "unknown topology '" + topo + "'");
    const auto& pts = j.at("points");
    const auto n = pts.size();
    require(j.value("n_samples", n) == n, ErrorCode::ConfigError, "n_samples does not match points");
    Points p(static_cast<Eigen::Index>(n), 2);
    for (std::size_t i = 0; i < n; ++i) {
      p(static_cast<Eigen::Index>(i), 0) = pts.at(i).at(0).get<double>();
      p(static_cast<Eigen::Index>(i), 1) = pts.at(i).at(1).get<double>();
    }
    return Surface(kind == "curve" ? SurfaceKind::Curve : SurfaceKind::Revolution,
                   make_grid(n, topo == "periodic" ? Topology::Periodic : Topology::Capped), std::move(p),
                   j.value("t", 0.0));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("bad state json: ") + e.what());
  }
}

/// Per-sample geometry table: s, x, y|r, z, H, A2, xdotn, weight.
inline void write_geometry_csv(std::ostream& os, const Surface& M) {
  const auto& G = M.geometry();
  os << (M.kind() == SurfaceKind::Curve ? "s,x,y,H,A2,xdotn,weight\n" : "s,r,z,H,A2,xdotn,weight\n");
  os << std::setprecision(17);
  for (Eigen::Index i = 0; i < M.points().rows(); ++i) {
    os << G.arclength(i) << ',' << M.points()(i, 0) << ',' << M.points()(i, 1) << ',' << G.H(i) << ',' << G.A2(i)
       << ',' << G.xdotn(i) << ',' << G.gauss(i) * G.measure(i) << '\n';
  }
}

}  // namespace shrinkflow
