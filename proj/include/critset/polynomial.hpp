// Dense-ish multivariate polynomials over at most 8 variables, used for the
// per-simplex critical polynomials.  Exponent tuples are packed 8 bits per
// variable into a 64-bit key; terms live in an ordered map so every
// construction and iteration order is deterministic.
#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace critset {

class Poly {
 public:
  explicit Poly(int nvars = 0) : nvars_(nvars) {
    require(nvars >= 0 && nvars <= 8, "Poly: supports up to 8 variables");
  }

  static Poly constant(int nvars, double c) {
    Poly p(nvars);
    if (c != 0.0) p.terms_[0] = c;
    return p;
  }

  static Poly variable(int nvars, int var) {
    require(var >= 0 && var < nvars, "Poly::variable: index out of range");
    Poly p(nvars);
    p.terms_[std::uint64_t(1) << (8 * var)] = 1.0;
    return p;
  }

  int nvars() const { return nvars_; }
  const std::map<std::uint64_t, double>& terms() const { return terms_; }
  bool empty() const { return terms_.empty(); }

  static int key_exponent(std::uint64_t key, int var) {
    return static_cast<int>((key >> (8 * var)) & 0xffu);
  }

  void add_term(std::uint64_t key, double coeff) {
    if (coeff == 0.0) return;
    const double v = (terms_[key] += coeff);
    if (v == 0.0) terms_.erase(key);
  }

  Poly& operator+=(const Poly& o) {
    for (const auto& [k, c] : o.terms_) add_term(k, c);
    return *this;
  }

  Poly& operator-=(const Poly& o) {
    for (const auto& [k, c] : o.terms_) add_term(k, -c);
    return *this;
  }

  friend Poly operator+(Poly a, const Poly& b) { return a += b; }
  friend Poly operator-(Poly a, const Poly& b) { return a -= b; }

  friend Poly operator*(const Poly& a, const Poly& b) {
    Poly r(a.nvars_);
    for (const auto& [ka, ca] : a.terms_) {
      for (const auto& [kb, cb] : b.terms_) {
        // Per-variable exponents stay below 2^8 for the degree-<=16 use here.
        r.add_term(ka + kb, ca * cb);
      }
    }
    return r;
  }

  Poly& scale(double s) {
    if (s == 0.0) {
      terms_.clear();
      return *this;
    }
    for (auto& [k, c] : terms_) c *= s;
    return *this;
  }

  int total_degree() const {
    int deg = 0;
    for (const auto& [k, c] : terms_) {
      int sum = 0;
      for (int v = 0; v < nvars_; ++v) sum += key_exponent(k, v);
      deg = std::max(deg, sum);
    }
    return deg;
  }

  // Sum of absolute coefficients; the natural scale for degeneracy tests.
  double l1() const {
    double s = 0.0;
    for (const auto& [k, c] : terms_) s += std::abs(c);
    return s;
  }

  bool all_finite() const {
    for (const auto& [k, c] : terms_)
      if (!std::isfinite(c)) return false;
    return true;
  }

  double eval(const Vec& x) const {
    require(static_cast<int>(x.size()) == nvars_, "Poly::eval: dimension mismatch");
    // Power tables per variable up to the max exponent present.
    int max_exp[8] = {0};
    for (const auto& [k, c] : terms_)
      for (int v = 0; v < nvars_; ++v)
        max_exp[v] = std::max(max_exp[v], key_exponent(k, v));
    double pows[8][32];
    for (int v = 0; v < nvars_; ++v) {
      require(max_exp[v] < 32, "Poly::eval: exponent too large");
      pows[v][0] = 1.0;
      for (int e = 1; e <= max_exp[v]; ++e) pows[v][e] = pows[v][e - 1] * x[v];
    }
    double s = 0.0;
    for (const auto& [k, c] : terms_) {
      double t = c;
      for (int v = 0; v < nvars_; ++v) t *= pows[v][key_exponent(k, v)];
      s += t;
    }
    return s;
  }

 private:
  int nvars_;
  std::map<std::uint64_t, double> terms_;
};

// Determinant of an n x n matrix of polynomials by cofactor expansion along
// the first column; fine for n <= 4.
inline Poly poly_det(const std::vector<std::vector<Poly>>& m) {
  const std::size_t n = m.size();
  require(n >= 1 && n <= 4, "poly_det: supports 1x1 .. 4x4");
  for (const auto& row : m) require(row.size() == n, "poly_det: matrix not square");
  if (n == 1) return m[0][0];
  Poly acc(m[0][0].nvars());
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<std::vector<Poly>> minor;
    minor.reserve(n - 1);
    for (std::size_t rr = 0; rr < n; ++rr) {
      if (rr == r) continue;
      std::vector<Poly> row;
      row.reserve(n - 1);
      for (std::size_t cc = 1; cc < n; ++cc) row.push_back(m[rr][cc]);
      minor.push_back(std::move(row));
    }
    Poly term = m[r][0] * poly_det(minor);
    if (r % 2 == 1) term.scale(-1.0);
    acc += term;
  }
  return acc;
}

// Permanent-style magnitude bound: same expansion with all-plus signs over a
// matrix of nonnegative scalars.  Used as the cancellation-free gauge when
// deciding whether a computed determinant is numerically zero.
inline double scalar_permanent(const std::vector<std::vector<double>>& m) {
  const std::size_t n = m.size();
  require(n >= 1 && n <= 4, "scalar_permanent: supports 1x1 .. 4x4");
  if (n == 1) return m[0][0];
  double acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<std::vector<double>> minor;
    minor.reserve(n - 1);
    for (std::size_t rr = 0; rr < n; ++rr) {
      if (rr == r) continue;
      std::vector<double> row;
      row.reserve(n - 1);
      for (std::size_t cc = 1; cc < n; ++cc) row.push_back(m[rr][cc]);
      minor.push_back(std::move(row));
    }
    acc += m[r][0] * scalar_permanent(minor);
  }
  return acc;
}

}  // namespace critset
