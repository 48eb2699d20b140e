#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Dense>

namespace smcf {

using Vec4 = Eigen::Vector4d;
using Mat4 = Eigen::Matrix4d;
using Mat2 = Eigen::Matrix2d;
using Vec2 = Eigen::Vector2d;

// Dense rank-3 array over a 4-dimensional index space, row-major (i, j, k).
struct Tensor3 {
  std::array<double, 64> a{};

  double& operator()(int i, int j, int k) { return a[static_cast<std::size_t>((i * 4 + j) * 4 + k)]; }
  double operator()(int i, int j, int k) const { return a[static_cast<std::size_t>((i * 4 + j) * 4 + k)]; }
};

// Dense rank-4 array over a 4-dimensional index space, row-major (i, j, k, l).
struct Tensor4 {
  std::array<double, 256> a{};

  double& operator()(int i, int j, int k, int l) {
    return a[static_cast<std::size_t>(((i * 4 + j) * 4 + k) * 4 + l)];
  }
  double operator()(int i, int j, int k, int l) const {
    return a[static_cast<std::size_t>(((i * 4 + j) * 4 + k) * 4 + l)];
  }
};

// T(X, Y, Z, W) for a rank-4 covariant tensor.
inline double contract(const Tensor4& t, const Vec4& x, const Vec4& y, const Vec4& z, const Vec4& w) {
  double acc = 0.0;
  for (int i = 0; i < 4; ++i) {
    if (x[i] == 0.0) continue;
    for (int j = 0; j < 4; ++j) {
      const double xy = x[i] * y[j];
      if (xy == 0.0) continue;
      for (int k = 0; k < 4; ++k) {
        const double xyz = xy * z[k];
        if (xyz == 0.0) continue;
        for (int l = 0; l < 4; ++l) acc += xyz * w[l] * t(i, j, k, l);
      }
    }
  }
  return acc;
}

// Components of t in the basis given by the columns of e: t'(a,b,c,d) = t(e_a, e_b, e_c, e_d).
inline Tensor4 change_basis(const Tensor4& t, const Mat4& e) {
  Tensor4 tmp1, tmp2;
  // Contract one slot at a time to keep the cost at 4 * 4^5.
  for (int a = 0; a < 4; ++a)
    for (int j = 0; j < 4; ++j)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          double s = 0.0;
          for (int i = 0; i < 4; ++i) s += e(i, a) * t(i, j, k, l);
          tmp1(a, j, k, l) = s;
        }
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int k = 0; k < 4; ++k)
        for (int l = 0; l < 4; ++l) {
          double s = 0.0;
          for (int j = 0; j < 4; ++j) s += e(j, b) * tmp1(a, j, k, l);
          tmp2(a, b, k, l) = s;
        }
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 4; ++c)
        for (int l = 0; l < 4; ++l) {
          double s = 0.0;
          for (int k = 0; k < 4; ++k) s += e(k, c) * tmp2(a, b, k, l);
          tmp1(a, b, c, l) = s;
        }
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      for (int c = 0; c < 4; ++c)
        for (int d = 0; d < 4; ++d) {
          double s = 0.0;
          for (int l = 0; l < 4; ++l) s += e(l, d) * tmp1(a, b, c, l);
          tmp2(a, b, c, d) = s;
        }
  return tmp2;
}

}  // namespace smcf
