#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/Core>

namespace boapta {

/// Forward-mode dual number carrying N partial derivatives.
template <int N>
struct Dual {
  using Grad = Eigen::Matrix<double, N, 1>;
  double v = 0.0;
  Grad d = Grad::Zero();

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT: constants promote implicitly
  Dual(double value, const Grad& grad) : v(value), d(grad) {}

  static Dual variable(double value, int index) {
    Dual out(value);
    out.d[index] = 1.0;
    return out;
  }

  Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  Dual& operator*=(const Dual& o) { d = d * o.v + o.d * v; v *= o.v; return *this; }
  Dual& operator/=(const Dual& o) { d = (d * o.v - o.d * v) / (o.v * o.v); v /= o.v; return *this; }
};

template <int N> Dual<N> operator+(Dual<N> a, const Dual<N>& b) { return a += b; }
template <int N> Dual<N> operator-(Dual<N> a, const Dual<N>& b) { return a -= b; }
template <int N> Dual<N> operator*(Dual<N> a, const Dual<N>& b) { return a *= b; }
template <int N> Dual<N> operator/(Dual<N> a, const Dual<N>& b) { return a /= b; }
template <int N> Dual<N> operator+(Dual<N> a, double b) { a.v += b; return a; }
template <int N> Dual<N> operator+(double b, Dual<N> a) { a.v += b; return a; }
template <int N> Dual<N> operator-(Dual<N> a, double b) { a.v -= b; return a; }
template <int N> Dual<N> operator-(double b, const Dual<N>& a) { return Dual<N>(b - a.v, -a.d); }
template <int N> Dual<N> operator-(const Dual<N>& a) { return Dual<N>(-a.v, -a.d); }
template <int N> Dual<N> operator*(Dual<N> a, double b) { a.v *= b; a.d *= b; return a; }
template <int N> Dual<N> operator*(double b, Dual<N> a) { a.v *= b; a.d *= b; return a; }
template <int N> Dual<N> operator/(Dual<N> a, double b) { a.v /= b; a.d /= b; return a; }
template <int N> Dual<N> operator/(double b, const Dual<N>& a) { return Dual<N>(b / a.v, -b * a.d / (a.v * a.v)); }

template <int N> bool operator<(const Dual<N>& a, const Dual<N>& b) { return a.v < b.v; }
template <int N> bool operator>(const Dual<N>& a, const Dual<N>& b) { return a.v > b.v; }

template <int N> Dual<N> exp(const Dual<N>& a) { const double e = std::exp(a.v); return Dual<N>(e, a.d * e); }
template <int N> Dual<N> log(const Dual<N>& a) { return Dual<N>(std::log(a.v), a.d / a.v); }

inline double value_of(double x) { return x; }
template <int N> double value_of(const Dual<N>& x) { return x.v; }

/// Digamma function psi(x) for x > 0.
inline double digamma(double x) {
  if (!(x > 0.0)) throw std::domain_error("digamma: argument must be positive");
  double acc = 0.0;
  while (x < 6.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  return acc + std::log(x) - 0.5 * inv -
         inv2 * (1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 * (1.0 / 132)))));
}

inline double lgamma_of(double x) { return std::lgamma(x); }
template <int N> Dual<N> lgamma_of(const Dual<N>& a) { return Dual<N>(std::lgamma(a.v), a.d * digamma(a.v)); }

namespace detail {

// Continued fraction of the incomplete beta (modified Lentz).
template <typename T>
T betacf(const T& a, const T& b, const T& x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  auto guard = [](T& t) {
    if (std::abs(value_of(t)) < kTiny) t = T(kTiny);
  };
  const T qab = a + b;
  const T qap = a + 1.0;
  const T qam = a - 1.0;
  T c(1.0);
  T d = 1.0 - qab * x / qap;
  guard(d);
  d = 1.0 / d;
  T h = d;
  for (int m = 1; m <= 20000; ++m) {
    const double m2 = 2.0 * m;
    T aa = m * (b - static_cast<double>(m)) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    guard(d);
    c = 1.0 + aa / c;
    guard(c);
    d = 1.0 / d;
    h *= d * c;
    aa = -((a + static_cast<double>(m)) * (qab + static_cast<double>(m)) * x) / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    guard(d);
    c = 1.0 + aa / c;
    guard(c);
    d = 1.0 / d;
    const T del = d * c;
    h *= del;
    bool done = std::abs(value_of(del) - 1.0) < kEps;
    if constexpr (!std::is_same_v<T, double>) done = done && del.d.cwiseAbs().maxCoeff() < kEps;
    if (done) return h;
  }
  throw std::runtime_error("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).  Works for T = double or Dual<N>,
/// giving exact partial derivatives with respect to whichever of x, a, b
/// carry derivative seeds.
template <typename T>
T betainc(const T& x, const T& a, const T& b) {
  if (!(value_of(a) > 0.0) || !(value_of(b) > 0.0)) throw std::domain_error("betainc: a and b must be positive");
  const double xv = value_of(x);
  if (!(xv >= 0.0 && xv <= 1.0)) throw std::domain_error("betainc: x outside [0, 1]");
  if (xv == 0.0) return T(0.0);
  if (xv == 1.0) return T(1.0);
  using std::exp;
  using std::log;
  const T front = exp(a * log(x) + b * log(1.0 - x) + lgamma_of(a + b) - lgamma_of(a) - lgamma_of(b));
  if (xv < (value_of(a) + 1.0) / (value_of(a) + value_of(b) + 2.0)) return front * detail::betacf(a, b, x) / a;
  return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

/// Beta(a, b) density at x in (0, 1).
inline double beta_pdf(double x, double a, double b) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) + std::lgamma(a + b) - std::lgamma(a) -
                  std::lgamma(b));
}

inline double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// log Psi(x), accurate in the far lower tail.
inline double log_normal_cdf(double x) {
  if (x > -30.0) return std::log(normal_cdf(x));
  const double x2 = x * x;
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) +
         std::log1p(-1.0 / x2 + 3.0 / (x2 * x2));
}

/// phi(x) / Psi(x) (inverse Mills ratio), accurate in the far lower tail.
inline double normal_hazard(double x) {
  if (x > -30.0) return normal_pdf(x) / normal_cdf(x);
  const double x2 = x * x;
  return -x / (1.0 - 1.0 / x2 + 3.0 / (x2 * x2));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace boapta
