#pragma once

// Truncated multivariate Taylor polynomials in four real variables.
//
// A Jet<D> holds the Taylor coefficients of a function around a base point,
// up to total degree D. Arithmetic on jets propagates derivatives exactly (to
// rounding), so evaluating a potential on seeded coordinate jets yields all of
// its partial derivatives through order D in one pass.

#include <array>
#include <cmath>
#include <cstddef>
#include <type_traits>

namespace smcf {

namespace jet_detail {

constexpr int binom(int n, int k) {
  int r = 1;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

template <int D>
struct Tables {
  static constexpr int kSize = binom(D + 4, 4);
  std::array<std::array<int, 4>, kSize> exps{};
  std::array<int, kSize> degree{};
  std::array<int, (D + 1) * (D + 1) * (D + 1) * (D + 1)> lookup{};
  // Products of monomials whose degree stays within D: (lhs, rhs, out).
  static constexpr int kTriples = [] {
    int count = 0;
    for (int da = 0; da <= D; ++da)
      for (int db = 0; db + da <= D; ++db) count += binom(da + 3, 3) * binom(db + 3, 3);
    return count;
  }();
  std::array<std::array<int, 3>, kTriples> triples{};

  static constexpr int key(const std::array<int, 4>& e) {
    return ((e[0] * (D + 1) + e[1]) * (D + 1) + e[2]) * (D + 1) + e[3];
  }

  constexpr Tables() {
    for (auto& v : lookup) v = -1;
    int n = 0;
    for (int d = 0; d <= D; ++d)
      for (int a = d; a >= 0; --a)
        for (int b = d - a; b >= 0; --b)
          for (int c = d - a - b; c >= 0; --c) {
            const int e = d - a - b - c;
            exps[n] = {a, b, c, e};
            degree[n] = d;
            lookup[key(exps[n])] = n;
            ++n;
          }
    int t = 0;
    for (int i = 0; i < kSize; ++i)
      for (int j = 0; j < kSize; ++j) {
        if (degree[i] + degree[j] > D) continue;
        std::array<int, 4> s{};
        for (int v = 0; v < 4; ++v) s[v] = exps[i][v] + exps[j][v];
        triples[t++] = {i, j, lookup[key(s)]};
      }
  }
};

template <int D>
inline constexpr Tables<D> kTables{};

}  // namespace jet_detail

template <int D>
class Jet {
 public:
  static constexpr int kDegree = D;
  static constexpr int kSize = jet_detail::Tables<D>::kSize;

  Jet() = default;
  Jet(double c) { coef_[0] = c; }  // NOLINT: implicit promotion from constants is intended

  static Jet variable(int index, double value) {
    Jet j(value);
    j.coef_[static_cast<std::size_t>(1 + index)] = 1.0;
    return j;
  }

  double value() const { return coef_[0]; }
  double coefficient(int n) const { return coef_[static_cast<std::size_t>(n)]; }

  // Partial derivative d^|e| / dx^e at the base point.
  double derivative(const std::array<int, 4>& e) const {
    const auto& tab = jet_detail::kTables<D>;
    const int idx = tab.lookup[jet_detail::Tables<D>::key(e)];
    double fact = 1.0;
    for (int v = 0; v < 4; ++v)
      for (int k = 2; k <= e[v]; ++k) fact *= k;
    return fact * coef_[static_cast<std::size_t>(idx)];
  }

  Jet& operator+=(const Jet& o) {
    for (int i = 0; i < kSize; ++i) coef_[i] += o.coef_[i];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (int i = 0; i < kSize; ++i) coef_[i] -= o.coef_[i];
    return *this;
  }
  Jet& operator*=(double s) {
    for (auto& c : coef_) c *= s;
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator-(Jet a) { return a *= -1.0; }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r(0.0);
    for (const auto& t : jet_detail::kTables<D>.triples) r.coef_[t[2]] += a.coef_[t[0]] * b.coef_[t[1]];
    return r;
  }
  friend Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }
  friend Jet operator/(Jet a, double s) { return a *= (1.0 / s); }

  // f(a) given f and its derivatives f^(k)(a0), k = 0..D, at a0 = a.value().
  static Jet compose(const Jet& a, const std::array<double, D + 1>& derivs) {
    Jet delta = a;
    delta.coef_[0] = 0.0;
    double fact = 1.0;
    for (int k = 2; k <= D; ++k) fact *= k;
    Jet r(derivs[D] / fact);
    for (int k = D - 1; k >= 0; --k) {
      fact /= (k + 1);
      r = r * delta;
      r.coef_[0] += derivs[static_cast<std::size_t>(k)] / fact;
    }
    return r;
  }

  friend Jet reciprocal(const Jet& a) {
    const double x = a.value();
    std::array<double, D + 1> d{};
    double v = 1.0 / x;
    for (int k = 0; k <= D; ++k) {
      d[static_cast<std::size_t>(k)] = v;
      v *= -(k + 1) / x;
    }
    return compose(a, d);
  }
  friend Jet log(const Jet& a) {
    const double x = a.value();
    std::array<double, D + 1> d{};
    d[0] = std::log(x);
    double v = 1.0 / x;
    for (int k = 1; k <= D; ++k) {
      d[static_cast<std::size_t>(k)] = v;
      v *= -k / x;
    }
    return compose(a, d);
  }
  friend Jet exp(const Jet& a) {
    std::array<double, D + 1> d{};
    d.fill(std::exp(a.value()));
    return compose(a, d);
  }

 private:
  std::array<double, kSize> coef_{};
};

inline double reciprocal(double x) { return 1.0 / x; }

template <class T>
inline double scalar_value(const T& t) {
  if constexpr (std::is_same_v<T, double>) {
    return t;
  } else {
    return t.value();
  }
}

}  // namespace smcf
