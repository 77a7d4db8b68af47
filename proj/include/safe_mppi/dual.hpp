// Copyright 2026 The safe_mppi Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Forward-mode dual numbers and the dense vector/matrix aliases shared by
// every module. A Dual<T> carries one directional derivative; nesting
// (Dual<Dual<double>>) yields second and higher derivatives, which is how
// barrier Hessians and rectified barriers are differentiated.

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <ostream>
#include <tuple>
#include <type_traits>

#include <Eigen/Core>

namespace safe_mppi {

template <class T>
struct Dual;

template <class T>
struct is_dual : std::false_type {};
template <class T>
struct is_dual<Dual<T>> : std::true_type {};

template <class T>
struct Dual {
  T v{};  // value
  T d{};  // derivative along the seeded direction

  Dual() = default;
  Dual(T value, T derivative) : v(value), d(derivative) {}
  template <class S>
    requires std::is_arithmetic_v<S>
  Dual(S s) : v(static_cast<double>(s)), d(0.0) {}  // NOLINT: implicit lift
  template <class S>
    requires(is_dual<T>::value && std::is_same_v<S, T>)
  explicit Dual(S s) : v(s), d(0.0) {}

  Dual& operator+=(const Dual& o) { v += o.v; d += o.d; return *this; }
  Dual& operator-=(const Dual& o) { v -= o.v; d -= o.d; return *this; }
  Dual& operator*=(const Dual& o) { *this = *this * o; return *this; }
  Dual& operator/=(const Dual& o) { *this = *this / o; return *this; }

  friend Dual operator+(const Dual& a, const Dual& b) { return {a.v + b.v, a.d + b.d}; }
  friend Dual operator-(const Dual& a, const Dual& b) { return {a.v - b.v, a.d - b.d}; }
  friend Dual operator-(const Dual& a) { return {-a.v, -a.d}; }
  friend Dual operator+(const Dual& a) { return a; }
  friend Dual operator*(const Dual& a, const Dual& b) {
    return {a.v * b.v, a.d * b.v + a.v * b.d};
  }
  friend Dual operator/(const Dual& a, const Dual& b) {
    T inv = T(1.0) / b.v;
    T q = a.v * inv;
    return {q, (a.d - q * b.d) * inv};
  }

  friend bool operator<(const Dual& a, const Dual& b) { return a.v < b.v; }
  friend bool operator>(const Dual& a, const Dual& b) { return a.v > b.v; }
  friend bool operator<=(const Dual& a, const Dual& b) { return a.v <= b.v; }
  friend bool operator>=(const Dual& a, const Dual& b) { return a.v >= b.v; }
  friend bool operator==(const Dual& a, const Dual& b) { return a.v == b.v; }
  friend bool operator!=(const Dual& a, const Dual& b) { return a.v != b.v; }

  friend std::ostream& operator<<(std::ostream& os, const Dual& a) {
    return os << "(" << a.v << " + " << a.d << "e)";
  }
};

/// Innermost double value of a possibly nested dual.
inline double value_of(double x) { return x; }
template <class T>
double value_of(const Dual<T>& x) {
  return value_of(x.v);
}

template <class T>
Dual<T> sin(const Dual<T>& a) {
  using std::cos;
  using std::sin;
  return {sin(a.v), a.d * cos(a.v)};
}
template <class T>
Dual<T> cos(const Dual<T>& a) {
  using std::cos;
  using std::sin;
  return {cos(a.v), -(a.d * sin(a.v))};
}
template <class T>
Dual<T> tan(const Dual<T>& a) {
  using std::cos;
  using std::tan;
  T c = cos(a.v);
  return {tan(a.v), a.d / (c * c)};
}
template <class T>
Dual<T> exp(const Dual<T>& a) {
  using std::exp;
  T e = exp(a.v);
  return {e, a.d * e};
}
template <class T>
Dual<T> log(const Dual<T>& a) {
  using std::log;
  return {log(a.v), a.d / a.v};
}
template <class T>
Dual<T> sqrt(const Dual<T>& a) {
  using std::sqrt;
  T s = sqrt(a.v);
  return {s, a.d / (T(2.0) * s)};
}
template <class T>
Dual<T> abs(const Dual<T>& a) {
  return value_of(a) < 0.0 ? -a : a;
}
template <class T>
Dual<T> pow(const Dual<T>& a, double p) {
  using std::pow;
  return {pow(a.v, p), a.d * (p * pow(a.v, p - 1.0))};
}
template <class T>
Dual<T> tanh(const Dual<T>& a) {
  using std::tanh;
  T t = tanh(a.v);
  return {t, a.d * (T(1.0) - t * t)};
}
template <class T>
Dual<T> atan2(const Dual<T>& y, const Dual<T>& x) {
  using std::atan2;
  T r2 = x.v * x.v + y.v * y.v;
  return {atan2(y.v, x.v), (x.v * y.d - y.v * x.d) / r2};
}
template <class T>
bool isfinite(const Dual<T>& a) {
  using std::isfinite;
  return isfinite(a.v) && isfinite(a.d);
}
template <class T>
bool isnan(const Dual<T>& a) {
  using std::isnan;
  return isnan(a.v) || isnan(a.d);
}
template <class T>
bool isinf(const Dual<T>& a) {
  using std::isinf;
  return isinf(a.v) || isinf(a.d);
}
template <class T>
Dual<T> abs2(const Dual<T>& a) {
  return a * a;
}
template <class T>
const Dual<T>& conj(const Dual<T>& a) {
  return a;
}
template <class T>
const Dual<T>& real(const Dual<T>& a) {
  return a;
}
template <class T>
Dual<T> imag(const Dual<T>&) {
  return Dual<T>(0.0);
}

// Derivative ladder: level k carries k nested dual layers.
using D1 = Dual<double>;
using D2 = Dual<D1>;
using D3 = Dual<D2>;
using D4 = Dual<D3>;

inline constexpr int kLadderLevels = 5;

template <int Level>
struct LevelScalar;
template <>
struct LevelScalar<0> { using type = double; };
template <>
struct LevelScalar<1> { using type = D1; };
template <>
struct LevelScalar<2> { using type = D2; };
template <>
struct LevelScalar<3> { using type = D3; };
template <>
struct LevelScalar<4> { using type = D4; };
template <int Level>
using LevelScalarT = typename LevelScalar<Level>::type;

template <class T>
inline constexpr int level_of = 0;
template <class T>
inline constexpr int level_of<Dual<T>> = 1 + level_of<T>;

// Largest state/input dimension handled without heap allocation.
inline constexpr int kMaxDim = 8;

template <class T>
using VecX = Eigen::Matrix<T, Eigen::Dynamic, 1, 0, kMaxDim, 1>;
template <class T>
using MatX = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim, kMaxDim>;

using Vec = VecX<double>;
using Mat = MatX<double>;

/// One std::function per ladder level, all built from the same generic callable.
template <template <class> class Sig>
class Ladder {
 public:
  Ladder() = default;

  template <class F>
  static Ladder from_generic(const F& f) {
    Ladder out;
    out.set<double>(f);
    out.set<D1>(f);
    out.set<D2>(f);
    out.set<D3>(f);
    out.set<D4>(f);
    return out;
  }

  template <class T>
  const std::function<Sig<T>>& at() const {
    return std::get<std::function<Sig<T>>>(fns_);
  }
  template <class T>
  void set(std::function<Sig<T>> fn) {
    std::get<std::function<Sig<T>>>(fns_) = std::move(fn);
  }
  template <class T>
  bool has() const {
    return static_cast<bool>(at<T>());
  }
  /// Highest level with a callable, or -1 when empty.
  int depth() const {
    int d = -1;
    if (has<double>()) d = 0;
    if (has<D1>()) d = 1;
    if (has<D2>()) d = 2;
    if (has<D3>()) d = 3;
    if (has<D4>()) d = 4;
    return d;
  }

 private:
  std::tuple<std::function<Sig<double>>, std::function<Sig<D1>>, std::function<Sig<D2>>,
             std::function<Sig<D3>>, std::function<Sig<D4>>>
      fns_;
};

template <class T>
using ScalarFnSig = T(const VecX<T>&);
template <class T>
using VectorFnSig = VecX<T>(const VecX<T>&);
template <class T>
using MatrixFnSig = MatX<T>(const VecX<T>&);

/// Seeds x with a unit tangent along `dir`.
template <class T>
VecX<Dual<T>> seed_direction(const VecX<T>& x, int dir) {
  VecX<Dual<T>> out(x.size());
  for (int i = 0; i < x.size(); ++i) out(i) = Dual<T>(x(i), T(i == dir ? 1.0 : 0.0));
  return out;
}

template <class T>
VecX<Dual<T>> lift(const VecX<T>& x) {
  VecX<Dual<T>> out(x.size());
  for (int i = 0; i < x.size(); ++i) out(i) = Dual<T>(x(i), T(0.0));
  return out;
}

/// Gradient of a scalar function evaluated one level up.
template <class T, class F>
VecX<T> gradient(const F& f_dual, const VecX<T>& x) {
  VecX<T> g(x.size());
  for (int j = 0; j < x.size(); ++j) g(j) = f_dual(seed_direction(x, j)).d;
  return g;
}

/// Hessian from a function evaluated two levels up.
template <class T, class F>
MatX<T> hessian(const F& f_dual2, const VecX<T>& x) {
  const int n = static_cast<int>(x.size());
  MatX<T> h(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      VecX<Dual<Dual<T>>> xx(n);
      for (int k = 0; k < n; ++k) {
        xx(k) = Dual<Dual<T>>(Dual<T>(x(k), T(k == j ? 1.0 : 0.0)),
                              Dual<T>(T(k == i ? 1.0 : 0.0), T(0.0)));
      }
      h(i, j) = f_dual2(xx).d.d;
      h(j, i) = h(i, j);
    }
  }
  return h;
}

/// Jacobian of a vector function evaluated one level up; column j is d f / d x_j.
template <class T, class F>
MatX<T> jacobian(const F& f_dual, const VecX<T>& x) {
  MatX<T> jac;
  for (int j = 0; j < x.size(); ++j) {
    VecX<Dual<T>> y = f_dual(seed_direction(x, j));
    if (j == 0) jac.resize(y.size(), x.size());
    for (int i = 0; i < y.size(); ++i) jac(i, j) = y(i).d;
  }
  return jac;
}

}  // namespace safe_mppi

namespace Eigen {

template <class T>
struct NumTraits<safe_mppi::Dual<T>> : NumTraits<double> {
  using Real = safe_mppi::Dual<T>;
  using NonInteger = safe_mppi::Dual<T>;
  using Nested = safe_mppi::Dual<T>;
  using Literal = safe_mppi::Dual<T>;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 3,
    MulCost = 3
  };
  static Real epsilon() { return Real(std::numeric_limits<double>::epsilon()); }
  static Real dummy_precision() { return Real(1e-12); }
  static Real highest() { return Real(std::numeric_limits<double>::max()); }
  static Real lowest() { return Real(std::numeric_limits<double>::lowest()); }
  static int digits10() { return std::numeric_limits<double>::digits10; }
};

}  // namespace Eigen
