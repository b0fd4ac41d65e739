// Dense linear algebra for the tiny matrices this library works with
// (dimensions up to 9).  Row-major storage, no pivoting tricks beyond what
// partial pivoting needs at these sizes.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "errors.hpp"

namespace critset {

using Vec = std::vector<double>;

struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, 0.0) {}

  double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

inline Vec matvec(const Mat& m, const Vec& x) {
  require(static_cast<int>(x.size()) == m.cols, "matvec: size mismatch");
  Vec y(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    double s = 0.0;
    for (int c = 0; c < m.cols; ++c) s += m(r, c) * x[c];
    y[r] = s;
  }
  return y;
}

inline double frobenius(const Mat& m) {
  double s = 0.0;
  for (double v : m.a) s += v * v;
  return std::sqrt(s);
}

inline double frobenius_dist(const Mat& x, const Mat& y) {
  require(x.rows == y.rows && x.cols == y.cols, "frobenius_dist: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.a.size(); ++i) {
    const double d = x.a[i] - y.a[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline double norm2(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double dist2(const Vec& x, const Vec& y) {
  require(x.size() == y.size(), "dist2: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// Determinant by LU with partial pivoting.
inline double det(Mat m) {
  require(m.rows == m.cols, "det: matrix not square");
  const int n = m.rows;
  double d = 1.0;
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int r = k + 1; r < n; ++r)
      if (std::abs(m(r, k)) > std::abs(m(piv, k))) piv = r;
    if (m(piv, k) == 0.0) return 0.0;
    if (piv != k) {
      for (int c = 0; c < n; ++c) std::swap(m(piv, c), m(k, c));
      d = -d;
    }
    d *= m(k, k);
    for (int r = k + 1; r < n; ++r) {
      const double f = m(r, k) / m(k, k);
      for (int c = k; c < n; ++c) m(r, c) -= f * m(k, c);
    }
  }
  return d;
}

// Inverse by Gauss-Jordan with partial pivoting; throws on a singular input.
inline Mat inverse(Mat m) {
  require(m.rows == m.cols, "inverse: matrix not square");
  const int n = m.rows;
  Mat inv = Mat::identity(n);
  for (int k = 0; k < n; ++k) {
    int piv = k;
    for (int r = k + 1; r < n; ++r)
      if (std::abs(m(r, k)) > std::abs(m(piv, k))) piv = r;
    if (m(piv, k) == 0.0) throw internal_error("inverse: singular matrix");
    if (piv != k) {
      for (int c = 0; c < n; ++c) {
        std::swap(m(piv, c), m(k, c));
        std::swap(inv(piv, c), inv(k, c));
      }
    }
    const double p = m(k, k);
    for (int c = 0; c < n; ++c) {
      m(k, c) /= p;
      inv(k, c) /= p;
    }
    for (int r = 0; r < n; ++r) {
      if (r == k) continue;
      const double f = m(r, k);
      if (f == 0.0) continue;
      for (int c = 0; c < n; ++c) {
        m(r, c) -= f * m(k, c);
        inv(r, c) -= f * inv(k, c);
      }
    }
  }
  return inv;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
// Plenty at n <= 9; returns the eigenvalues in ascending order.
inline Vec symmetric_eigenvalues(Mat s) {
  require(s.rows == s.cols, "symmetric_eigenvalues: matrix not square");
  const int n = s.rows;
  if (n == 1) return {s(0, 0)};
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) off += s(p, q) * s(p, q);
    if (off < 1e-30) break;
    for (int p = 0; p < n; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = s(p, q);
        if (apq == 0.0) continue;
        const double theta = (s(q, q) - s(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (int k = 0; k < n; ++k) {
          const double skp = s(k, p), skq = s(k, q);
          s(k, p) = c * skp - sn * skq;
          s(k, q) = sn * skp + c * skq;
        }
        for (int k = 0; k < n; ++k) {
          const double spk = s(p, k), sqk = s(q, k);
          s(p, k) = c * spk - sn * sqk;
          s(q, k) = sn * spk + c * sqk;
        }
      }
    }
  }
  Vec ev(n);
  for (int i = 0; i < n; ++i) ev[i] = s(i, i);
  std::sort(ev.begin(), ev.end());
  return ev;
}

// Smallest singular value of a rows x cols matrix with rows <= cols,
// computed from the Gram matrix J J^T.
inline double sigma_min(const Mat& j) {
  require(j.rows <= j.cols, "sigma_min: expected a wide matrix");
  const int m = j.rows;
  Mat gram(m, m);
  for (int r = 0; r < m; ++r) {
    for (int c = r; c < m; ++c) {
      double s = 0.0;
      for (int k = 0; k < j.cols; ++k) s += j(r, k) * j(c, k);
      gram(r, c) = s;
      gram(c, r) = s;
    }
  }
  const Vec ev = symmetric_eigenvalues(gram);
  return std::sqrt(std::max(0.0, ev.front()));
}

inline double int_pow(double x, int n) {
  if (n < 0) return 1.0 / int_pow(x, -n);
  double r = 1.0, b = x;
  while (n > 0) {
    if (n & 1) r *= b;
    b *= b;
    n >>= 1;
  }
  return r;
}

inline std::uint64_t factorial_u64(int n) {
  std::uint64_t f = 1;
  for (int i = 2; i <= n; ++i) f *= static_cast<std::uint64_t>(i);
  return f;
}

}  // namespace critset
