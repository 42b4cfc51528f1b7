#pragma once

// Normal graphs p + u(p) n(p) over a sampled base surface.
//
// All graph quantities are computed from the explicit embedding. The
// pointwise kernel is templated on the scalar so that the Jacobian of the
// gradient operator can be taken exactly with dual numbers.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "shrinkflow/dual.hpp"
#include "shrinkflow/errors.hpp"
#include "shrinkflow/geometry.hpp"

namespace shrinkflow {

template <class T>
struct GraphPoint {
  T nu, w, eta, Hu, zeta;
  T flow;       // M = w (eta/2 - H_u)
  T grad;       // N = zeta M
  T gauss;      // exp(-|X|^2/4)
};

namespace detail {

template <class T>
GraphPoint<T> graph_point(const Surface& base, Eigen::Index i, const T& s, const T& st, const T& stt) {
  using std::exp;
  using std::sqrt;
  const auto& P = base.points();
  const auto& G = base.geometry();
  const double sg = G.orientation;
  const bool rev = base.kind() == SurfaceKind::Revolution;

  std::array<T, 2> X, Xt, Xtt;
  for (int c = 0; c < 2; ++c) {
    const double n = G.normal(i, c), nt = G.dnormal(i, c), ntt = G.ddnormal(i, c);
    X[c] = P(i, c) + s * n;
    Xt[c] = G.dp(i, c) + st * n + s * nt;
    Xtt[c] = G.ddp(i, c) + stt * n + 2.0 * st * nt + s * ntt;
  }
  const T len = sqrt(Xt[0] * Xt[0] + Xt[1] * Xt[1]);
  const T nu0 = sg * Xt[1] / len;
  const T nu1 = -sg * Xt[0] / len;
  const T kappa = sg * (Xt[0] * Xtt[1] - Xt[1] * Xtt[0]) / (len * len * len);

  GraphPoint<T> out;
  out.Hu = rev ? kappa + nu0 / X[0] : kappa;
  out.eta = X[0] * nu0 + X[1] * nu1;
  out.w = 1.0 / (G.normal(i, 0) * nu0 + G.normal(i, 1) * nu1);
  out.nu = rev ? X[0] * len / (P(i, 0) * G.speed(i)) : len / G.speed(i);
  const T X2 = X[0] * X[0] + X[1] * X[1];
  const double p2 = P.row(i).squaredNorm();
  out.gauss = exp(-0.25 * X2);
  out.zeta = out.nu / (out.w * out.w) * exp(0.25 * (p2 - X2));
  out.flow = out.w * (0.5 * out.eta - out.Hu);
  out.grad = out.zeta * out.flow;
  return out;
}

}  // namespace detail

/// Per-sample quantities of the graph of u.
struct GraphQuantities {
  Eigen::VectorXd nu, w, eta, Hu, zeta;
  Eigen::VectorXd flow;   // M u
  Eigen::VectorXd grad;   // N u
  Eigen::VectorXd gauss;  // exp(-|X|^2/4)
  double F = 0.0;           // Gaussian area of the graph
  double grad_norm2 = 0.0;  // integral of |<x,n>/2 - H|^2 exp(-|x|^2/4) over the graph
  double vel_l1 = 0.0;      // integral of |<x,n>/2 - H| exp(-|x|^2/4) over the graph
};

inline void check_field(const Surface& base, const Eigen::VectorXd& u) {
  require(static_cast<std::size_t>(u.size()) == base.size(), ErrorCode::GridMismatch, "field size does not match base grid");
  require(u.allFinite(), ErrorCode::Blowup, "non-finite graph function");
  const double sup = u.cwiseAbs().maxCoeff();
  require(sup < base.geometry().reach, ErrorCode::GraphOverflow,
          "sup|u| = " + std::to_string(sup) + " is not below the reach " + std::to_string(base.geometry().reach));
}

inline GraphQuantities graph_quantities(const Surface& base, const Eigen::VectorXd& u) {
  check_field(base, u);
  const auto& g = base.grid();
  const Eigen::VectorXd ut = g.d1() * u;
  const Eigen::VectorXd utt = g.d2() * u;
  const auto N = u.size();
  GraphQuantities q;
  for (auto* v : {&q.nu, &q.w, &q.eta, &q.Hu, &q.zeta, &q.flow, &q.grad, &q.gauss}) v->resize(N);
  const auto& mu = base.geometry().measure;
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto p = detail::graph_point<double>(base, i, u(i), ut(i), utt(i));
    q.nu(i) = p.nu;
    q.w(i) = p.w;
    q.eta(i) = p.eta;
    q.Hu(i) = p.Hu;
    q.zeta(i) = p.zeta;
    q.flow(i) = p.flow;
    q.grad(i) = p.grad;
    q.gauss(i) = p.gauss;
    const double area = p.gauss * p.nu * mu(i);
    const double normal_speed = p.flow / p.w;
    q.F += area;
    q.grad_norm2 += normal_speed * normal_speed * area;
    q.vel_l1 += std::abs(normal_speed) * area;
  }
  require(q.w.minCoeff() > 0.0, ErrorCode::GraphOverflow, "graph normal turned against the base normal");
  return q;
}

inline Eigen::VectorXd flow_operator(const Surface& base, const Eigen::VectorXd& u) { return graph_quantities(base, u).flow; }

inline Eigen::VectorXd gradient_operator(const Surface& base, const Eigen::VectorXd& u) {
  return graph_quantities(base, u).grad;
}

inline double graph_area(const Surface& base, const Eigen::VectorXd& u) { return graph_quantities(base, u).F; }

/// Q weights: exp(-|p|^2/4) times the area quadrature weight.
inline Eigen::VectorXd q_weights(const Surface& base) {
  return base.geometry().gauss.cwiseProduct(base.geometry().measure);
}

inline double q_inner(const Surface& base, const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  require(static_cast<std::size_t>(u.size()) == base.size() && u.size() == v.size(), ErrorCode::GridMismatch,
          "q_inner: field sizes do not match base grid");
  return (u.array() * v.array() * q_weights(base).array()).sum();
}

inline double q_norm(const Surface& base, const Eigen::VectorXd& u) { return std::sqrt(std::max(0.0, q_inner(base, u, u))); }

/// Smooth random field: sum over 0 <= k <= k_max of Gaussian coefficients
/// of cos k theta (and sin k theta on periodic grids) with 1/(1+k^2)
/// decay, scaled to the given Q norm.
inline Eigen::VectorXd random_smooth_field(const Surface& base, std::mt19937_64& rng, int k_max, double norm) {
  require(k_max >= 0 && norm >= 0.0, ErrorCode::InvalidArgument, "random field needs k_max >= 0 and norm >= 0");
  std::normal_distribution<double> Z(0.0, 1.0);
  const Eigen::ArrayXd th = base.grid().theta().array();
  const bool periodic = base.topology() == Topology::Periodic;
  Eigen::VectorXd u = Eigen::VectorXd::Zero(th.size());
  for (int k = 0; k <= k_max; ++k) {
    const double decay = 1.0 / (1.0 + k * k);
    u.array() += decay * Z(rng) * (k * th).cos();
    if (periodic && k > 0) u.array() += decay * Z(rng) * (k * th).sin();
  }
  const double n = q_norm(base, u);
  return n > 0.0 ? Eigen::VectorXd(u * (norm / n)) : u;
}

/// Weighted W^{2,2} norm: u^2 + |grad u|^2 + |Hess u|^2 in the Q measure.
inline double q2_norm(const Surface& base, const Eigen::VectorXd& u) {
  require(static_cast<std::size_t>(u.size()) == base.size(), ErrorCode::GridMismatch, "q2_norm: field size does not match base grid");
  const auto d = arclength_derivatives(base, u);
  Eigen::ArrayXd hess2 = d.dss.array().square();
  if (base.kind() == SurfaceKind::Revolution) {
    const Eigen::ArrayXd rs = base.geometry().dp.col(0).array() / base.geometry().speed.array();
    hess2 += (rs * d.ds.array() / base.points().col(0).array()).square();
  }
  const Eigen::ArrayXd dens = u.array().square() + d.ds.array().square() + hess2;
  return std::sqrt((dens * q_weights(base).array()).sum());
}

/// Exact Jacobian of the discrete gradient operator at u.
inline Eigen::MatrixXd linearization(const Surface& base, const Eigen::VectorXd& u) {
  check_field(base, u);
  using D = Dual<3>;
  const auto& g = base.grid();
  const Eigen::VectorXd ut = g.d1() * u;
  const Eigen::VectorXd utt = g.d2() * u;
  const auto N = u.size();
  Eigen::VectorXd a(N), b(N), c(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto p = detail::graph_point<D>(base, i, D::variable(u(i), 0), D::variable(ut(i), 1), D::variable(utt(i), 2));
    c(i) = p.grad.d[0];
    b(i) = p.grad.d[1];
    a(i) = p.grad.d[2];
  }
  Eigen::MatrixXd L = a.asDiagonal() * g.d2() + b.asDiagonal() * g.d1();
  L.diagonal() += c;
  return L;
}

/// Q-symmetric part of an operator: (L + W^{-1} L^T W)/2 with W = diag(q).
inline Eigen::MatrixXd q_symmetrize(const Eigen::MatrixXd& L, const Eigen::VectorXd& q) {
  const Eigen::VectorXd qi = q.cwiseInverse();
  return 0.5 * (L + qi.asDiagonal() * L.transpose() * q.asDiagonal());
}

/// Second variation operator at u = 0:
///   L = Laplacian + |A|^2 - <p, grad .>/2 + 1/2,
/// assembled from its coefficients by collocation. On periodic grids the
/// trapezoid weights are pointwise densities, so the matrix is additionally
/// made exactly Q-self-adjoint. Fejer weights on capped grids are not, and
/// there the collocation matrix is Q-self-adjoint only on resolved modes.
inline Eigen::MatrixXd second_variation(const Surface& base) {
  const auto& g = base.grid();
  const auto& G = base.geometry();
  const auto& P = base.points();
  const auto N = P.rows();
  Eigen::VectorXd c2(N), c1(N), c0(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    const double sp2 = G.speed(i) * G.speed(i);
    const double tang = G.dp.row(i).dot(G.ddp.row(i));
    c2(i) = 1.0 / sp2;
    c1(i) = -tang / (sp2 * sp2) - 0.5 * P.row(i).dot(G.dp.row(i)) / sp2;
    if (base.kind() == SurfaceKind::Revolution) c1(i) += G.dp(i, 0) / (P(i, 0) * sp2);
    c0(i) = G.A2(i) + 0.5;
  }
  Eigen::MatrixXd L = c2.asDiagonal() * g.d2() + c1.asDiagonal() * g.d1();
  L.diagonal() += c0;
  if (base.topology() == Topology::Periodic) return q_symmetrize(L, q_weights(base));
  return L;
}

/// Largest |(W L)_{ij} - (W L)_{ji}| relative to max |W L|.
inline double q_asymmetry(const Eigen::MatrixXd& L, const Eigen::VectorXd& q) {
  const Eigen::MatrixXd WL = q.asDiagonal() * L;
  return (WL - WL.transpose()).cwiseAbs().maxCoeff() / WL.cwiseAbs().maxCoeff();
}

// ---- Taylor coefficients at u = 0 ------------------------------------------

struct TaylorEntry {
  std::string name;
  double max_rel_error = 0.0;
  double sample_estimate = 0.0;  // estimate at sample 0
  double sample_exact = 0.0;
};

struct TaylorReport {
  std::vector<TaylorEntry> entries;
  double max_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
};

namespace detail {

// Richardson-extrapolated centred differences (two levels).
inline double richardson_d1(const std::function<double(double)>& f, double h) {
  auto d = [&](double k) { return (f(k) - f(-k)) / (2.0 * k); };
  const double r1 = (4.0 * d(h / 2) - d(h)) / 3.0;
  const double r2 = (4.0 * d(h / 4) - d(h / 2)) / 3.0;
  return (16.0 * r2 - r1) / 15.0;
}

inline double richardson_d2(const std::function<double(double)>& f, double h) {
  const double f0 = f(0.0);
  auto d = [&](double k) { return (f(k) - 2.0 * f0 + f(-k)) / (k * k); };
  const double r1 = (4.0 * d(h / 2) - d(h)) / 3.0;
  const double r2 = (4.0 * d(h / 4) - d(h / 2)) / 3.0;
  return (16.0 * r2 - r1) / 15.0;
}

}  // namespace detail

/// Checks the Taylor coefficients of w, nu, eta in the height s and the
/// tangential gradient y at (p, 0, 0) against their geometric values.
inline TaylorReport taylor_check(const Surface& base, double h = 1e-2) {
  const auto& G = base.geometry();
  const auto& P = base.points();
  const auto N = P.rows();

  struct Probe {
    const char* name;
    int var;    // 0: s, 1: y
    int order;  // 1 or 2
    int field;  // 0: w, 1: nu, 2: eta
    std::function<double(Eigen::Index)> exact;
  };
  const std::vector<Probe> probes = {
      {"d_s w", 0, 1, 0, [](Eigen::Index) { return 0.0; }},
      {"d_y w", 1, 1, 0, [](Eigen::Index) { return 0.0; }},
      {"d_yy w", 1, 2, 0, [](Eigen::Index) { return 1.0; }},
      {"d_s nu", 0, 1, 1, [&](Eigen::Index i) { return G.H(i); }},
      {"d_ss nu", 0, 2, 1, [&](Eigen::Index i) { return G.H(i) * G.H(i) - G.A2(i); }},
      {"d_yy nu", 1, 2, 1, [](Eigen::Index) { return 1.0; }},
      {"d_s eta", 0, 1, 2, [](Eigen::Index) { return 1.0; }},
      {"d_y eta", 1, 1, 2, [&](Eigen::Index i) { return -P.row(i).dot(G.dp.row(i)) / G.speed(i); }},
  };

  TaylorReport rep;
  for (const auto& pr : probes) {
    TaylorEntry e;
    e.name = pr.name;
    for (Eigen::Index i = 0; i < N; ++i) {
      auto f = [&](double x) {
        const double s = pr.var == 0 ? x : 0.0;
        const double st = pr.var == 1 ? x * G.speed(i) : 0.0;
        const auto q = detail::graph_point<double>(base, i, s, st, 0.0);
        return pr.field == 0 ? q.w : pr.field == 1 ? q.nu : q.eta;
      };
      const double est = pr.order == 1 ? detail::richardson_d1(f, h) : detail::richardson_d2(f, h);
      const double ex = pr.exact(i);
      e.max_rel_error = std::max(e.max_rel_error, std::abs(est - ex) / std::max(std::abs(ex), 1.0));
      if (i == 0) {
        e.sample_estimate = est;
        e.sample_exact = ex;
      }
    }
    rep.entries.push_back(e);
  }
  return rep;
}

// ---- Frechet remainder ----------------------------------------------------

struct RemainderReport {
  std::vector<double> eps;
  std::vector<double> ratios;  // ||N(u+ev) - N(u) - e L_u v||_Q / e^2
  bool bounded = true;         // no growth beyond 2x between consecutive eps
  double max_growth = 0.0;
};

inline RemainderReport frechet_remainder(const Surface& base, const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                                         const std::vector<double>& eps_list) {
  RemainderReport rep;
  const Eigen::VectorXd Nu = gradient_operator(base, u);
  const Eigen::VectorXd Lv = linearization(base, u) * v;
  for (double e : eps_list) {
    const Eigen::VectorXd r = gradient_operator(base, u + e * v) - Nu - e * Lv;
    rep.eps.push_back(e);
    rep.ratios.push_back(q_norm(base, r) / (e * e));
  }
  for (std::size_t k = 1; k < rep.ratios.size(); ++k) {
    if (rep.ratios[k - 1] <= 0.0) continue;
    const double growth = rep.ratios[k] / rep.ratios[k - 1];
    rep.max_growth = std::max(rep.max_growth, growth);
    if (growth > 2.0) rep.bounded = false;
  }
  return rep;
}

}  // namespace shrinkflow
