// Simplicial decomposition of the unit cube and the delta-mesh built from it.
//
// The unit d-cube splits into 2^(d-1) d! simplices by recursive coning: every
// face of the cube is a (d-1)-cube, decomposed recursively, and each face
// simplex is coned to the cube center.  The apex (cube/face center) is always
// the LAST vertex.  A side-length-ell grid cube reuses the unit shapes through
// scale + translation, so the per-shape inverse matrices are computed once.
//
// Exactness note: unit-shape vertex coordinates lie in {0, 1/2, 1}, the edge
// matrix A has dyadic entries with |det A| = 2^(1-d), and its inverse has
// integer entries.  The inverse is rounded to those integers and verified, so
// barycentric coordinates of lattice vertices are computed exactly when the
// grid resolution is a power of two.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "errors.hpp"
#include "linalg.hpp"

namespace critset {

struct SimplexShape {
  std::vector<Vec> vertices;           // d+1 unit-cube points, apex last
  std::vector<std::vector<int>> half;  // doubled coordinates, integers in {0,1,2}
  Mat a_unit;                          // columns v_j - apex
  Mat a_unit_inv;                      // exact integer entries
  double abs_det = 0.0;                // |det a_unit| = 2^(1-d)
};

namespace detail {

inline std::vector<std::vector<Vec>> cone_vertex_lists(int d) {
  if (d == 1) return {{Vec{0.0}, Vec{1.0}}};
  const std::vector<std::vector<Vec>> faces = cone_vertex_lists(d - 1);
  std::vector<std::vector<Vec>> out;
  out.reserve(static_cast<std::size_t>(2 * d) * faces.size());
  Vec center(d, 0.5);
  for (int axis = 0; axis < d; ++axis) {
    for (int side = 0; side <= 1; ++side) {
      for (const auto& face_simplex : faces) {
        std::vector<Vec> verts;
        verts.reserve(face_simplex.size() + 1);
        for (const Vec& fv : face_simplex) {
          Vec v(d);
          int src = 0;
          for (int a = 0; a < d; ++a)
            v[a] = (a == axis) ? static_cast<double>(side) : fv[src++];
          verts.push_back(std::move(v));
        }
        verts.push_back(center);
        out.push_back(std::move(verts));
      }
    }
  }
  return out;
}

}  // namespace detail

inline std::vector<SimplexShape> decompose_unit_cube(int d) {
  if (d < 1 || d > 8) throw range_error("decompose_unit_cube supports dimensions 1..8");
  const double expected_det = int_pow(0.5, d - 1);
  std::vector<SimplexShape> shapes;
  for (auto& verts : detail::cone_vertex_lists(d)) {
    SimplexShape s;
    s.vertices = std::move(verts);
    s.half.reserve(s.vertices.size());
    for (const Vec& v : s.vertices) {
      std::vector<int> h(d);
      for (int a = 0; a < d; ++a) {
        h[a] = static_cast<int>(std::lround(2.0 * v[a]));
        require(h[a] >= 0 && h[a] <= 2 && h[a] * 0.5 == v[a],
                "decompose_unit_cube: vertex off the half lattice");
      }
      s.half.push_back(std::move(h));
    }
    s.a_unit = Mat(d, d);
    const Vec& apex = s.vertices.back();
    for (int j = 0; j < d; ++j)
      for (int r = 0; r < d; ++r) s.a_unit(r, j) = s.vertices[j][r] - apex[r];
    s.abs_det = std::abs(det(s.a_unit));
    require(std::abs(s.abs_det - expected_det) < 1e-12, "decompose_unit_cube: wrong determinant");

    // Round the numeric inverse to its exact integer entries and verify.
    s.a_unit_inv = inverse(s.a_unit);
    for (double& e : s.a_unit_inv.a) {
      const double r = std::round(e);
      require(std::abs(e - r) < 1e-6, "decompose_unit_cube: inverse not near-integer");
      e = r;
    }
    for (int r = 0; r < d; ++r) {
      for (int c = 0; c < d; ++c) {
        double p = 0.0;
        for (int k = 0; k < d; ++k) p += s.a_unit_inv(r, k) * s.a_unit(k, c);
        require(p == (r == c ? 1.0 : 0.0), "decompose_unit_cube: inverse check failed");
      }
    }
    shapes.push_back(std::move(s));
  }
  const std::size_t expected =
      (static_cast<std::size_t>(1) << (d - 1)) * static_cast<std::size_t>(factorial_u64(d));
  require(shapes.size() == expected, "decompose_unit_cube: wrong simplex count");
  return shapes;
}

struct Simplex {
  std::vector<Vec> vertices;  // apex last
  Mat a;                      // columns v_j - apex
  Mat a_inv;
  std::int64_t cube_index = 0;
  int simplex_index = 0;

  double volume() const {
    return std::abs(det(a)) / static_cast<double>(factorial_u64(a.rows));
  }
};

struct Barycentric {
  Vec alpha;    // d+1 coordinates, sum exactly 1
  double d_sq;  // sum of squared coordinates, >= 1/(d+1) inside
  Mat dalpha;   // (d+1) x d gradient rows, constant per simplex

  bool contains(double tol = 1e-9) const {
    for (double a : alpha)
      if (a < -tol) return false;
    return true;
  }
};

namespace detail {

// alpha for local offset u = x - apex given the inverse edge matrix.
inline Barycentric barycentric_from_inv(const Mat& a_inv, const Vec& u) {
  const int d = a_inv.rows;
  Barycentric bc;
  bc.alpha.assign(d + 1, 0.0);
  double sum = 0.0;
  for (int j = 0; j < d; ++j) {
    double s = 0.0;
    for (int c = 0; c < d; ++c) s += a_inv(j, c) * u[c];
    bc.alpha[j] = s;
    sum += s;
  }
  bc.alpha[d] = 1.0 - sum;
  bc.d_sq = 0.0;
  for (double a : bc.alpha) bc.d_sq += a * a;
  bc.dalpha = Mat(d + 1, d);
  for (int j = 0; j < d; ++j)
    for (int c = 0; c < d; ++c) bc.dalpha(j, c) = a_inv(j, c);
  for (int c = 0; c < d; ++c) {
    double colsum = 0.0;
    for (int j = 0; j < d; ++j) colsum += a_inv(j, c);
    bc.dalpha(d, c) = -colsum;
  }
  return bc;
}

}  // namespace detail

inline Barycentric barycentric(const Simplex& s, const Vec& x) {
  const int d = s.a.rows;
  Vec u(d);
  for (int a = 0; a < d; ++a) u[a] = x[a] - s.vertices.back()[a];
  return detail::barycentric_from_inv(s.a_inv, u);
}

// Uniform lattice of K^d cubes of side 1/K covering [0,1]^d, each carrying
// the unit-cube simplex shapes.
class CubeGrid {
 public:
  CubeGrid(int d, double delta) : d_(d), delta_target_(delta) {
    if (d < 1 || d > 8) throw range_error("grid dimension must lie in 1..8");
    if (!(delta > 0.0)) throw range_error("mesh size must be positive");
    // Snap near-integer 1/delta down so K = ceil(1/delta) is immune to the
    // usual 1/(1/x) float noise.
    const double r = 1.0 / std::min(delta, 1.0);
    const double fl = std::floor(r);
    k_ = static_cast<std::int64_t>((r - fl < 1e-9) ? fl : fl + 1.0);
    if (k_ < 1) k_ = 1;
    ell_ = 1.0 / static_cast<double>(k_);
    shapes_ = decompose_unit_cube(d);
    cube_count_ = 1;
    for (int a = 0; a < d_; ++a) {
      cube_count_ *= k_;
      if (cube_count_ > (std::int64_t(1) << 62) / (k_ + 1))
        throw range_error("grid too fine: cube count overflows");
    }
  }

  int dim() const { return d_; }
  std::int64_t cubes_per_axis() const { return k_; }
  double side() const { return ell_; }
  double delta_target() const { return delta_target_; }
  std::int64_t cube_count() const { return cube_count_; }
  const std::vector<SimplexShape>& shapes() const { return shapes_; }
  int shapes_per_cube() const { return static_cast<int>(shapes_.size()); }
  std::int64_t simplex_count() const { return cube_count_ * shapes_per_cube(); }

  // Flat cube index: axis 0 least significant.
  std::vector<std::int64_t> cube_coords(std::int64_t iota) const {
    std::vector<std::int64_t> c(d_);
    for (int a = 0; a < d_; ++a) {
      c[a] = iota % k_;
      iota /= k_;
    }
    return c;
  }

  std::int64_t cube_index(const std::vector<std::int64_t>& coords) const {
    std::int64_t idx = 0;
    for (int a = d_ - 1; a >= 0; --a) idx = idx * k_ + coords[a];
    return idx;
  }

  Vec cube_origin(std::int64_t iota) const {
    const auto c = cube_coords(iota);
    Vec o(d_);
    for (int a = 0; a < d_; ++a) o[a] = static_cast<double>(c[a]) * ell_;
    return o;
  }

  Simplex simplex(std::int64_t iota, int k) const {
    require(iota >= 0 && iota < cube_count_, "simplex: cube index out of range");
    require(k >= 0 && k < shapes_per_cube(), "simplex: shape index out of range");
    const SimplexShape& shape = shapes_[static_cast<std::size_t>(k)];
    const Vec origin = cube_origin(iota);
    Simplex s;
    s.cube_index = iota;
    s.simplex_index = k;
    s.vertices.reserve(shape.vertices.size());
    for (const Vec& uv : shape.vertices) {
      Vec v(d_);
      for (int a = 0; a < d_; ++a) v[a] = origin[a] + ell_ * uv[a];
      s.vertices.push_back(std::move(v));
    }
    s.a = shape.a_unit;
    for (double& e : s.a.a) e *= ell_;
    s.a_inv = shape.a_unit_inv;
    for (double& e : s.a_inv.a) e /= ell_;
    return s;
  }

  // 64-bit key of a simplex vertex from doubled lattice coordinates
  // (2*cube_coord + doubled unit coordinate).  Identical across every simplex
  // and cube sharing the vertex, which is what makes cached vertex data agree
  // bitwise on shared faces.
  std::uint64_t vertex_key(const std::vector<std::int64_t>& cube, const std::vector<int>& half) const {
    const int bits = d_ <= 3 ? 21 : 8;
    std::uint64_t key = 0;
    for (int a = 0; a < d_; ++a) {
      const std::uint64_t c = static_cast<std::uint64_t>(2 * cube[a] + half[a]);
      require(c < (std::uint64_t(1) << bits), "vertex_key: lattice coordinate too large");
      key = (key << bits) | c;
    }
    return key;
  }

  // Position of a doubled-lattice vertex; exact for power-of-two K.
  Vec vertex_position(const std::vector<std::int64_t>& cube, const std::vector<int>& half) const {
    Vec v(d_);
    for (int a = 0; a < d_; ++a)
      v[a] = (static_cast<double>(cube[a]) + 0.5 * half[a]) * ell_;
    return v;
  }

  struct Location {
    std::int64_t cube = 0;
    int shape = 0;
    Barycentric bc;
  };

  // Owning simplex of x with the lowest (cube, shape) index pair; points on
  // shared faces belong to every adjacent simplex, ties broken by the
  // iteration order.
  Location locate(const Vec& x) const {
    require(static_cast<int>(x.size()) == d_, "locate: dimension mismatch");
    for (int a = 0; a < d_; ++a)
      if (!(x[a] >= -1e-9 && x[a] <= 1.0 + 1e-9))
        throw eval_error("locate: point outside the unit cube");

    // Candidate cube indices per axis: the containing cube plus neighbors
    // when x sits within 1e-9 cells of a lattice plane.
    std::array<std::array<std::int64_t, 2>, 8> cands{};
    std::array<int, 8> ncands{};
    for (int a = 0; a < d_; ++a) {
      const double t = x[a] * static_cast<double>(k_);
      std::int64_t base = static_cast<std::int64_t>(std::floor(t));
      if (base < 0) base = 0;
      if (base > k_ - 1) base = k_ - 1;
      int n = 0;
      if (t - static_cast<double>(base) < 1e-9 && base > 0) cands[a][n++] = base - 1;
      cands[a][n++] = base;
      ncands[a] = n;
    }

    // Enumerate candidate cubes in ascending flat-index order (axis-0 fastest
    // and candidates sorted ascending already).
    std::vector<std::int64_t> coords(d_);
    Location best;
    double best_min_alpha = -1.0;
    bool found_best = false;
    std::array<int, 8> pick{};
    for (;;) {
      for (int a = 0; a < d_; ++a) coords[a] = cands[a][pick[a]];
      const std::int64_t iota = cube_index(coords);
      Vec xi(d_);
      for (int a = 0; a < d_; ++a)
        xi[a] = x[a] * static_cast<double>(k_) - static_cast<double>(coords[a]);
      for (int k = 0; k < shapes_per_cube(); ++k) {
        const SimplexShape& shape = shapes_[static_cast<std::size_t>(k)];
        Vec u(d_);
        for (int a = 0; a < d_; ++a) u[a] = xi[a] - shape.vertices.back()[a];
        Barycentric bc = detail::barycentric_from_inv(shape.a_unit_inv, u);
        double min_alpha = bc.alpha[0];
        for (double al : bc.alpha) min_alpha = std::min(min_alpha, al);
        if (min_alpha >= -1e-9) {
          // Rescale gradients from unit-cube to grid coordinates.
          for (double& e : bc.dalpha.a) e /= ell_;
          return {iota, k, std::move(bc)};
        }
        if (!found_best || min_alpha > best_min_alpha) {
          best_min_alpha = min_alpha;
          best = {iota, k, bc};
          found_best = true;
        }
      }
      int a = 0;
      while (a < d_ && ++pick[a] == ncands[a]) pick[a++] = 0;
      if (a == d_) break;
    }
    if (found_best && best_min_alpha >= -1e-6) {
      for (double& e : best.bc.dalpha.a) e /= ell_;
      return best;
    }
    throw internal_error("locate: no simplex contains the point");
  }

 private:
  int d_;
  double delta_target_;
  std::int64_t k_ = 1;
  double ell_ = 1.0;
  std::int64_t cube_count_ = 1;
  std::vector<SimplexShape> shapes_;
};

inline CubeGrid build_grid(int d, double delta) { return CubeGrid(d, delta); }

}  // namespace critset
