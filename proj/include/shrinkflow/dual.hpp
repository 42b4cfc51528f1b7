#pragma once

// Forward-mode dual numbers with a fixed number of derivative slots.
// Only the operations used by the pointwise graph kernel are provided.

#include <array>
#include <cmath>
#include <cstddef>

namespace shrinkflow {

template <std::size_t K>
struct Dual {
  double v = 0.0;
  std::array<double, K> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: implicit promotion of constants is intended

  static Dual variable(double value, std::size_t slot) {
    Dual x(value);
    x.d[slot] = 1.0;
    return x;
  }

  Dual& operator+=(const Dual& o) {
    v += o.v;
    for (std::size_t k = 0; k < K; ++k) d[k] += o.d[k];
    return *this;
  }
  Dual& operator-=(const Dual& o) {
    v -= o.v;
    for (std::size_t k = 0; k < K; ++k) d[k] -= o.d[k];
    return *this;
  }
  Dual& operator*=(const Dual& o) {
    for (std::size_t k = 0; k < K; ++k) d[k] = d[k] * o.v + v * o.d[k];
    v *= o.v;
    return *this;
  }
  Dual& operator/=(const Dual& o) {
    const double inv = 1.0 / o.v;
    for (std::size_t k = 0; k < K; ++k) d[k] = (d[k] - v * inv * o.d[k]) * inv;
    v *= inv;
    return *this;
  }
};

template <std::size_t K> Dual<K> operator+(Dual<K> a, const Dual<K>& b) { return a += b; }
template <std::size_t K> Dual<K> operator-(Dual<K> a, const Dual<K>& b) { return a -= b; }
template <std::size_t K> Dual<K> operator*(Dual<K> a, const Dual<K>& b) { return a *= b; }
template <std::size_t K> Dual<K> operator/(Dual<K> a, const Dual<K>& b) { return a /= b; }
template <std::size_t K> Dual<K> operator+(Dual<K> a, double b) { a.v += b; return a; }
template <std::size_t K> Dual<K> operator+(double b, Dual<K> a) { a.v += b; return a; }
template <std::size_t K> Dual<K> operator-(Dual<K> a, double b) { a.v -= b; return a; }
template <std::size_t K> Dual<K> operator-(double b, const Dual<K>& a) { return Dual<K>(b) - a; }
template <std::size_t K> Dual<K> operator*(Dual<K> a, double b) {
  a.v *= b;
  for (auto& x : a.d) x *= b;
  return a;
}
template <std::size_t K> Dual<K> operator*(double b, Dual<K> a) { return a * b; }
template <std::size_t K> Dual<K> operator/(Dual<K> a, double b) { return a * (1.0 / b); }
template <std::size_t K> Dual<K> operator/(double b, const Dual<K>& a) { return Dual<K>(b) / a; }
template <std::size_t K> Dual<K> operator-(Dual<K> a) { return a * -1.0; }

template <std::size_t K>
Dual<K> sqrt(const Dual<K>& a) {
  Dual<K> r(std::sqrt(a.v));
  const double g = 0.5 / r.v;
  for (std::size_t k = 0; k < K; ++k) r.d[k] = g * a.d[k];
  return r;
}

template <std::size_t K>
Dual<K> exp(const Dual<K>& a) {
  Dual<K> r(std::exp(a.v));
  for (std::size_t k = 0; k < K; ++k) r.d[k] = r.v * a.d[k];
  return r;
}

inline double value_of(double x) { return x; }
template <std::size_t K> double value_of(const Dual<K>& x) { return x.v; }

}  // namespace shrinkflow
