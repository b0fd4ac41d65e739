// Numerical estimation of H^(d-1) for critical sets and polynomial zero sets
// at d <= 3: sign-change counting on lines, marching squares on the plane,
// marching tetrahedra (Kuhn split per cell) in space.  Zero sets are clipped
// to simplices by their barycentric half-spaces, and pieces are kept only
// where Dg is actually rank-deficient, because a critical polynomial's zero
// set may strictly contain the critical set.
//
// Estimates carry an uncertainty from resolution refinement; sums are reduced
// pairwise so results do not depend on thread count.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "decomposition.hpp"
#include "linalg.hpp"
#include "perturbation.hpp"
#include "util.hpp"

namespace critset {

struct MeasureEstimate {
  double value = 0.0;
  std::string method;        // "crossing-count", "marching", or "box-counting"
  int resolution = 0;        // grid cells per axis actually used
  double uncertainty = 0.0;  // half-width from resolution refinement
};

struct GeometryCollector {
  std::vector<double> points;                        // d=1 root coordinates
  std::vector<std::array<double, 6>> segments;       // d=2: x0 y0 x1 y1 (z slots 0)
  std::vector<std::array<double, 9>> triangles;      // d=3: three xyz corners
};

namespace detail {

using P3 = std::array<double, 3>;

inline P3 lerp3(const P3& a, const P3& b, double t) {
  return {a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), a[2] + t * (b[2] - a[2])};
}

// Zero crossing on an edge whose endpoint values have opposite signs
// (zeros count as positive, so va - vb is never 0 here).
inline P3 edge_zero(const P3& a, const P3& b, double va, double vb) {
  double t = va / (va - vb);
  t = std::clamp(t, 0.0, 1.0);
  return lerp3(a, b, t);
}

inline double seg_length(const P3& a, const P3& b) {
  const double dx = b[0] - a[0], dy = b[1] - a[1], dz = b[2] - a[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double tri_area(const P3& a, const P3& b, const P3& c) {
  const double ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
  const double vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
  const double cx = uy * vz - uz * vy;
  const double cy = uz * vx - ux * vz;
  const double cz = ux * vy - uy * vx;
  return 0.5 * std::sqrt(cx * cx + cy * cy + cz * cz);
}

// Intersection of the half-spaces alpha_j(x) = n_j . x + off_j >= -tol,
// materialized from a simplex's barycentric coordinate functionals.
struct ConvexClip {
  int d = 0;
  int count = 0;
  std::array<P3, 4> n{};
  std::array<double, 4> off{};
  double tol = 1e-12;

  double value(int j, const P3& p) const {
    double s = off[static_cast<std::size_t>(j)];
    for (int a = 0; a < d; ++a) s += n[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] * p[static_cast<std::size_t>(a)];
    return s;
  }
};

inline ConvexClip simplex_clip(const Simplex& s) {
  ConvexClip c;
  c.d = s.a_inv.rows;
  c.count = c.d + 1;
  const Vec& apex = s.vertices.back();
  P3 nsum{};
  double osum = 0.0;
  for (int j = 0; j < c.d; ++j) {
    double off = 0.0;
    for (int a = 0; a < c.d; ++a) {
      c.n[static_cast<std::size_t>(j)][static_cast<std::size_t>(a)] = s.a_inv(j, a);
      off -= s.a_inv(j, a) * apex[static_cast<std::size_t>(a)];
      nsum[static_cast<std::size_t>(a)] -= s.a_inv(j, a);
    }
    c.off[static_cast<std::size_t>(j)] = off;
    osum += off;
  }
  c.n[static_cast<std::size_t>(c.d)] = nsum;
  c.off[static_cast<std::size_t>(c.d)] = 1.0 - osum;
  return c;
}

inline bool clip_segment(const ConvexClip& c, P3& a, P3& b) {
  double t0 = 0.0, t1 = 1.0;
  for (int j = 0; j < c.count; ++j) {
    const double fa = c.value(j, a);
    const double fb = c.value(j, b);
    const double den = fb - fa;
    if (std::abs(den) < 1e-300) {
      if (fa < -c.tol) return false;
      continue;
    }
    const double t = (-c.tol - fa) / den;
    if (den > 0.0) t0 = std::max(t0, t);
    else t1 = std::min(t1, t);
    if (t0 >= t1) return false;
  }
  const P3 na = lerp3(a, b, t0);
  const P3 nb = lerp3(a, b, t1);
  a = na;
  b = nb;
  return true;
}

// Sutherland-Hodgman; a triangle against <= 4 planes stays under 8 vertices.
inline int clip_polygon(const ConvexClip& c, P3* pts, int n) {
  std::array<P3, 8> buf;
  for (int j = 0; j < c.count; ++j) {
    int m = 0;
    for (int i = 0; i < n; ++i) {
      const P3& cur = pts[i];
      const P3& nxt = pts[(i + 1) % n];
      const double fc = c.value(j, cur);
      const double fn = c.value(j, nxt);
      const bool ic = fc >= -c.tol;
      const bool in = fn >= -c.tol;
      if (ic) buf[static_cast<std::size_t>(m++)] = cur;
      if (ic != in) {
        const double t = (-c.tol - fc) / (fn - fc);
        buf[static_cast<std::size_t>(m++)] = lerp3(cur, nxt, t);
      }
    }
    n = m;
    for (int i = 0; i < n; ++i) pts[i] = buf[static_cast<std::size_t>(i)];
    if (n == 0) return 0;
  }
  return n;
}

// Marching squares over the cell index box [ilo,ihi) x [jlo,jhi) of the
// res-lattice.  keep(midpoint) filters pieces after clipping.
template <class Field, class Keep>
double march_squares(const Field& field, int res, int ilo, int ihi, int jlo, int jhi,
                     const ConvexClip* clip, const Keep& keep, GeometryCollector* collect) {
  const double h = 1.0 / static_cast<double>(res);
  const int ni = ihi - ilo + 1;
  const int nj = jhi - jlo + 1;
  if (ni <= 1 || nj <= 1) return 0.0;
  std::vector<double> vals(static_cast<std::size_t>(ni) * static_cast<std::size_t>(nj));
  for (int ci = 0; ci < ni; ++ci)
    for (int cj = 0; cj < nj; ++cj) {
      const P3 p{static_cast<double>(ilo + ci) * h, static_cast<double>(jlo + cj) * h, 0.0};
      vals[static_cast<std::size_t>(ci) * static_cast<std::size_t>(nj) + static_cast<std::size_t>(cj)] = field(p);
    }
  const auto val = [&](int ci, int cj) {
    return vals[static_cast<std::size_t>(ci) * static_cast<std::size_t>(nj) + static_cast<std::size_t>(cj)];
  };

  double total = 0.0;
  const auto emit = [&](P3 a, P3 b) {
    if (clip && !clip_segment(*clip, a, b)) return;
    const P3 mid = lerp3(a, b, 0.5);
    if (!keep(mid)) return;
    total += seg_length(a, b);
    if (collect) collect->segments.push_back({a[0], a[1], 0.0, b[0], b[1], 0.0});
  };

  for (int ci = 0; ci + 1 < ni; ++ci) {
    for (int cj = 0; cj + 1 < nj; ++cj) {
      const double x0 = static_cast<double>(ilo + ci) * h;
      const double y0 = static_cast<double>(jlo + cj) * h;
      // Corners counterclockwise, edge e_r joins corner r and r+1.
      const P3 cpos[4] = {{x0, y0, 0.0}, {x0 + h, y0, 0.0}, {x0 + h, y0 + h, 0.0}, {x0, y0 + h, 0.0}};
      const double cv[4] = {val(ci, cj), val(ci + 1, cj), val(ci + 1, cj + 1), val(ci, cj + 1)};
      bool sgn[4];
      for (int r = 0; r < 4; ++r) sgn[r] = cv[r] >= 0.0;
      int ncross = 0;
      P3 cpt[4];
      for (int r = 0; r < 4; ++r) {
        const int q = (r + 1) % 4;
        if (sgn[r] != sgn[q]) cpt[ncross++] = edge_zero(cpos[r], cpos[q], cv[r], cv[q]);
      }
      if (ncross == 0) continue;
      if (ncross == 2) {
        emit(cpt[0], cpt[1]);
      } else {
        // Saddle: corners alternate in sign; the center sample decides which
        // diagonal the level set separates.
        const P3 center{x0 + 0.5 * h, y0 + 0.5 * h, 0.0};
        const bool cs = field(center) >= 0.0;
        // cross[] is (0,1,2,3); pair around the corners whose sign differs
        // from the center.
        if (cs == sgn[0]) {
          emit(cpt[0], cpt[1]);  // isolates corner 1
          emit(cpt[2], cpt[3]);  // isolates corner 3
        } else {
          emit(cpt[3], cpt[0]);  // isolates corner 0
          emit(cpt[1], cpt[2]);  // isolates corner 2
        }
      }
    }
  }
  return total;
}

// Kuhn split of a cell into 6 tetrahedra; vertices are cube corners, so
// adjacent cells extract matching surface pieces.
inline constexpr int kKuhnPerm[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                        {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};

template <class Field, class Keep>
double march_tets(const Field& field, int res, const std::array<int, 3>& lo,
                  const std::array<int, 3>& hi, const ConvexClip* clip, const Keep& keep,
                  GeometryCollector* collect) {
  const double h = 1.0 / static_cast<double>(res);
  const int n0 = hi[0] - lo[0] + 1, n1 = hi[1] - lo[1] + 1, n2 = hi[2] - lo[2] + 1;
  if (n0 <= 1 || n1 <= 1 || n2 <= 1) return 0.0;
  std::vector<double> vals(static_cast<std::size_t>(n0) * static_cast<std::size_t>(n1) *
                           static_cast<std::size_t>(n2));
  const auto idx = [&](int a, int b, int c) {
    return (static_cast<std::size_t>(a) * static_cast<std::size_t>(n1) + static_cast<std::size_t>(b)) *
               static_cast<std::size_t>(n2) +
           static_cast<std::size_t>(c);
  };
  for (int a = 0; a < n0; ++a)
    for (int b = 0; b < n1; ++b)
      for (int c = 0; c < n2; ++c) {
        const P3 p{static_cast<double>(lo[0] + a) * h, static_cast<double>(lo[1] + b) * h,
                   static_cast<double>(lo[2] + c) * h};
        vals[idx(a, b, c)] = field(p);
      }

  double total = 0.0;
  const auto emit_tri = [&](P3 a, P3 b, P3 c) {
    P3 poly[8] = {a, b, c};
    int n = 3;
    if (clip) {
      n = clip_polygon(*clip, poly, n);
      if (n < 3) return;
    }
    P3 centroid{};
    for (int i = 0; i < n; ++i)
      for (int ax = 0; ax < 3; ++ax) centroid[static_cast<std::size_t>(ax)] += poly[i][static_cast<std::size_t>(ax)] / n;
    if (!keep(centroid)) return;
    for (int i = 1; i + 1 < n; ++i) {
      total += tri_area(poly[0], poly[i], poly[i + 1]);
      if (collect)
        collect->triangles.push_back({poly[0][0], poly[0][1], poly[0][2], poly[i][0], poly[i][1],
                                      poly[i][2], poly[i + 1][0], poly[i + 1][1], poly[i + 1][2]});
    }
  };

  const auto march_one = [&](const P3 tp[4], const double tv[4]) {
    int pos = 0;
    for (int r = 0; r < 4; ++r)
      if (tv[r] >= 0.0) pos |= 1 << r;
    if (pos == 0 || pos == 15) return;
    int npos = 0;
    for (int r = 0; r < 4; ++r) npos += (pos >> r) & 1;
    if (npos == 1 || npos == 3) {
      int lone = -1;
      for (int r = 0; r < 4; ++r)
        if (((pos >> r) & 1) == (npos == 1 ? 1 : 0)) lone = r;
      P3 q[3];
      int m = 0;
      for (int r = 0; r < 4; ++r)
        if (r != lone) q[m++] = edge_zero(tp[lone], tp[r], tv[lone], tv[r]);
      emit_tri(q[0], q[1], q[2]);
    } else {
      int p[2], g[2], np = 0, ng = 0;
      for (int r = 0; r < 4; ++r)
        ((pos >> r) & 1) ? p[np++] = r : g[ng++] = r;
      const P3 q0 = edge_zero(tp[p[0]], tp[g[0]], tv[p[0]], tv[g[0]]);
      const P3 q1 = edge_zero(tp[p[0]], tp[g[1]], tv[p[0]], tv[g[1]]);
      const P3 q2 = edge_zero(tp[p[1]], tp[g[1]], tv[p[1]], tv[g[1]]);
      const P3 q3 = edge_zero(tp[p[1]], tp[g[0]], tv[p[1]], tv[g[0]]);
      emit_tri(q0, q1, q2);
      emit_tri(q0, q2, q3);
    }
  };

  for (int a = 0; a + 1 < n0; ++a)
    for (int b = 0; b + 1 < n1; ++b)
      for (int c = 0; c + 1 < n2; ++c) {
        double cv[8];
        P3 cp[8];
        for (int bit = 0; bit < 8; ++bit) {
          const int da = bit & 1, db = (bit >> 1) & 1, dc = (bit >> 2) & 1;
          cv[bit] = vals[idx(a + da, b + db, c + dc)];
          cp[bit] = {static_cast<double>(lo[0] + a + da) * h, static_cast<double>(lo[1] + b + db) * h,
                     static_cast<double>(lo[2] + c + dc) * h};
        }
        bool any = false, all = true;
        for (int bit = 0; bit < 8; ++bit) {
          const bool s = cv[bit] >= 0.0;
          any |= s;
          all &= s;
        }
        if (!any || all) continue;
        for (const auto& perm : kKuhnPerm) {
          int mask = 0;
          P3 tp[4];
          double tv[4];
          tp[0] = cp[0];
          tv[0] = cv[0];
          for (int step = 0; step < 3; ++step) {
            mask |= 1 << perm[step];
            tp[step + 1] = cp[mask];
            tv[step + 1] = cv[mask];
          }
          march_one(tp, tv);
        }
      }
  return total;
}

// Root localization on [lo, hi]: uniform sampling at the lattice density,
// sign-change brackets refined by bisection.  Exact zeros at sample points
// are roots themselves.  keep(x) filters candidates.
template <class Field1, class Keep>
void roots_1d(const Field1& field, int res, double lo, double hi, const Keep& keep,
              std::vector<double>& out) {
  const int n = std::max(8, static_cast<int>(std::ceil((hi - lo) * res)) * 8);
  std::vector<double> xs(static_cast<std::size_t>(n) + 1), vs(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) {
    xs[static_cast<std::size_t>(i)] = lo + (hi - lo) * static_cast<double>(i) / n;
    vs[static_cast<std::size_t>(i)] = field(xs[static_cast<std::size_t>(i)]);
  }
  for (int i = 0; i <= n; ++i) {
    if (vs[static_cast<std::size_t>(i)] == 0.0) {
      if (keep(xs[static_cast<std::size_t>(i)])) out.push_back(xs[static_cast<std::size_t>(i)]);
      continue;
    }
    if (i == n) break;
    if (vs[static_cast<std::size_t>(i)] * vs[static_cast<std::size_t>(i) + 1] < 0.0) {
      double a = xs[static_cast<std::size_t>(i)], b = xs[static_cast<std::size_t>(i) + 1];
      double fa = vs[static_cast<std::size_t>(i)];
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (a + b);
        const double fm = field(mid);
        if (fm == 0.0) {
          a = b = mid;
          break;
        }
        if ((fa < 0.0) == (fm < 0.0)) {
          a = mid;
          fa = fm;
        } else {
          b = mid;
        }
      }
      const double root = 0.5 * (a + b);
      if (keep(root)) out.push_back(root);
    }
  }
}

inline std::int64_t dedup_count(std::vector<double>& roots, double tol = 1e-10) {
  std::sort(roots.begin(), roots.end());
  std::int64_t count = 0;
  double last = -1e300;
  for (double r : roots) {
    if (r - last > tol) ++count;
    last = r;
  }
  return count;
}

// Per-simplex lattice: never coarser than the mesh itself, else corner
// interpolation would be driven by polynomial values far outside the simplex.
inline int snap_resolution(int res, int cubes_per_axis) {
  if (res >= cubes_per_axis) return res;
  return res * static_cast<int>(std::ceil(static_cast<double>(cubes_per_axis) / res));
}

// Flat evaluator for a critical polynomial in its local frame.
struct CompiledPoly {
  struct Term {
    double coeff;
    std::array<int, 3> e;
  };
  int d = 0;
  double inv_ell = 0.0;
  P3 apex{};
  std::vector<Term> terms;

  static CompiledPoly compile(const CriticalPolynomial& cp, int d) {
    CompiledPoly out;
    out.d = d;
    out.inv_ell = 1.0 / cp.ell;
    for (int a = 0; a < d; ++a) out.apex[static_cast<std::size_t>(a)] = cp.apex[static_cast<std::size_t>(a)];
    out.terms.reserve(cp.p.terms().size());
    for (const auto& [key, coeff] : cp.p.terms()) {
      Term t{coeff, {0, 0, 0}};
      for (int a = 0; a < d; ++a) t.e[static_cast<std::size_t>(a)] = Poly::key_exponent(key, a);
      out.terms.push_back(t);
    }
    return out;
  }

  double operator()(const P3& x) const {
    double xi[3] = {0.0, 0.0, 0.0};
    for (int a = 0; a < d; ++a)
      xi[a] = (x[static_cast<std::size_t>(a)] - apex[static_cast<std::size_t>(a)]) * inv_ell;
    double sum = 0.0;
    for (const Term& t : terms) {
      double mono = t.coeff;
      for (int a = 0; a < d; ++a)
        for (int r = 0; r < t.e[static_cast<std::size_t>(a)]; ++r) mono *= xi[a];
      sum += mono;
    }
    return sum;
  }
};

}  // namespace detail

// H^(d-1) of {field = 0} inside the unit cube, or inside one simplex.
inline MeasureEstimate zero_set_measure(const std::function<double(const Vec&)>& field, int d,
                                        int res, const std::optional<Simplex>& clip_to = std::nullopt,
                                        GeometryCollector* collect = nullptr) {
  if (d < 1 || d > 3) throw config_error("zero_set_measure: d must be 1, 2, or 3");
  if (res < 4) throw config_error("zero_set_measure: resolution must be at least 4");
  using detail::P3;
  const auto f3 = [&](const P3& p) {
    Vec x(static_cast<std::size_t>(d));
    for (int a = 0; a < d; ++a) x[static_cast<std::size_t>(a)] = p[static_cast<std::size_t>(a)];
    return field(x);
  };
  const auto keep = [](const P3&) { return true; };

  std::optional<detail::ConvexClip> clip;
  std::array<int, 3> lo{0, 0, 0}, hi{res, res, res};
  if (clip_to) {
    clip = detail::simplex_clip(*clip_to);
    for (int a = 0; a < d; ++a) {
      double mn = 1e300, mx = -1e300;
      for (const Vec& v : clip_to->vertices) {
        mn = std::min(mn, v[static_cast<std::size_t>(a)]);
        mx = std::max(mx, v[static_cast<std::size_t>(a)]);
      }
      lo[static_cast<std::size_t>(a)] = std::max(0, static_cast<int>(std::floor(mn * res)));
      hi[static_cast<std::size_t>(a)] = std::min(res, static_cast<int>(std::ceil(mx * res)));
    }
  }
  const detail::ConvexClip* cl = clip ? &*clip : nullptr;

  const auto run = [&](int r, GeometryCollector* gc) -> double {
    std::array<int, 3> rlo{}, rhi{};
    for (int a = 0; a < 3; ++a) {
      rlo[static_cast<std::size_t>(a)] = lo[static_cast<std::size_t>(a)] * r / res;
      rhi[static_cast<std::size_t>(a)] =
          std::min(r, (hi[static_cast<std::size_t>(a)] * r + res - 1) / res);
    }
    if (d == 1) {
      std::vector<double> roots;
      const double a0 = static_cast<double>(rlo[0]) / r, a1 = static_cast<double>(rhi[0]) / r;
      detail::roots_1d([&](double x) { return f3({x, 0.0, 0.0}); }, r, a0, a1,
                       [](double) { return true; }, roots);
      if (gc)
        for (double x : roots) gc->points.push_back(x);
      return static_cast<double>(detail::dedup_count(roots));
    }
    if (d == 2)
      return detail::march_squares(f3, r, rlo[0], rhi[0], rlo[1], rhi[1], cl, keep, gc);
    return detail::march_tets(f3, r, rlo, rhi, cl, keep, gc);
  };

  MeasureEstimate est;
  est.method = d == 1 ? "crossing-count" : "marching";
  est.resolution = res;
  est.value = run(res, collect);
  const double comp = run(std::max(4, res / 2), nullptr);
  est.uncertainty = std::abs(est.value - comp);
  return est;
}

// Worst-case zero-set measure of one simplex's critical polynomial:
// d 2^(2m) delta^(d-1).
inline double mn0_bound(int d, int m, double delta) {
  if (m < 1 || m > d) throw config_error("mn0_bound: needs 1 <= m <= d");
  if (!(delta > 0.0)) throw config_error("mn0_bound: delta must be positive");
  return d * int_pow(2.0, 2 * m) * int_pow(delta, d - 1);
}

struct CellMask {
  int dim = 0;
  int resolution = 0;
  std::vector<std::uint8_t> cells;  // axis 0 fastest

  std::int64_t marked() const {
    std::int64_t n = 0;
    for (std::uint8_t c : cells) n += c;
    return n;
  }
};

// Cell marked iff the m-th singular value of Dg at the cell center is below tol.
inline CellMask critical_set_mask(const C1Map& g, int res, double tol) {
  const int d = g.dim_in();
  if (d > 3) throw config_error("critical_set_mask: d must be at most 3");
  if (res < 8) throw config_error("critical_set_mask: resolution must be at least 8");
  CellMask mask;
  mask.dim = d;
  mask.resolution = res;
  std::int64_t total = 1;
  for (int a = 0; a < d; ++a) total *= res;
  mask.cells.assign(static_cast<std::size_t>(total), 0);
  const double h = 1.0 / res;
  parallel_for(total, [&](std::int64_t flat) {
    Vec x(static_cast<std::size_t>(d));
    std::int64_t rem = flat;
    for (int a = 0; a < d; ++a) {
      x[static_cast<std::size_t>(a)] = (static_cast<double>(rem % res) + 0.5) * h;
      rem /= res;
    }
    if (sigma_min(g.jacobian(x)) < tol) mask.cells[static_cast<std::size_t>(flat)] = 1;
  });
  return mask;
}

// Marked cells x cell-size^(d-1): a factor-2 sanity heuristic, not a
// certification, so the uncertainty spans the whole value.
inline MeasureEstimate box_count_estimate(const CellMask& mask) {
  MeasureEstimate est;
  est.method = "box-counting";
  est.resolution = mask.resolution;
  const double h = 1.0 / mask.resolution;
  est.value = static_cast<double>(mask.marked()) * int_pow(h, mask.dim - 1);
  est.uncertainty = est.value;
  return est;
}

struct MeasureOptions {
  std::optional<double> sigma_tol_abs;  // default: max(1, |Dg|_F) / resolution
  bool apply_mask = true;               // drop pieces where Dg has full rank
};

struct CriticalSetMeasure {
  MeasureEstimate estimate;     // the finite, transverse part
  std::int64_t simplex_count = 0;
  std::int64_t flat_critical = 0;   // simplices whose whole body is critical
  std::int64_t indeterminate = 0;   // vanished polynomial without the affine explanation
  bool finite = true;               // false iff flat_critical > 0
};

// Sum over simplices of the measured zero set of each critical polynomial,
// clipped to the simplex and filtered by rank deficiency of Dg.
inline CriticalSetMeasure measure_critical_set(const BlendedApproximant& g, int res,
                                               const MeasureOptions& opts = {},
                                               GeometryCollector* collect = nullptr) {
  using detail::P3;
  const int d = g.dim_in();
  if (d > 3) throw config_error("measure_critical_set: d must be at most 3");
  if (res < 8) throw config_error("measure_critical_set: resolution must be at least 8");
  const CubeGrid& grid = g.grid();
  const int kk = static_cast<int>(grid.cubes_per_axis());

  const int res_main = detail::snap_resolution(res, kk);
  int res_comp = detail::snap_resolution(std::max(4, res / 2), kk);
  if (res_comp == res_main) res_comp = 2 * res_main;

  const std::int64_t cubes = grid.cube_count();
  const int per_cube = grid.shapes_per_cube();
  std::vector<double> part_main(static_cast<std::size_t>(cubes), 0.0);
  std::vector<double> part_comp(static_cast<std::size_t>(cubes), 0.0);
  std::vector<std::int64_t> part_flat(static_cast<std::size_t>(cubes), 0);
  std::vector<std::int64_t> part_ind(static_cast<std::size_t>(cubes), 0);
  // d=1 measures are root counts; collect and deduplicate across simplices.
  std::vector<double> roots_main, roots_comp;

  const auto process_cube = [&](std::int64_t iota) {
    for (int k = 0; k < per_cube; ++k) {
      const CriticalPolynomial cp = g.critical_polynomial(iota, k);
      using Kind = CriticalPolynomial::Kind;
      if (cp.kind == Kind::flat_noncritical) continue;
      if (cp.kind == Kind::flat_critical) {
        ++part_flat[static_cast<std::size_t>(iota)];
        continue;
      }
      if (cp.kind == Kind::indeterminate) {
        ++part_ind[static_cast<std::size_t>(iota)];
        continue;
      }
      const detail::CompiledPoly field = detail::CompiledPoly::compile(cp, d);
      const Simplex sx = grid.simplex(iota, k);
      const detail::ConvexClip clip = detail::simplex_clip(sx);

      const auto keep = [&](const P3& probe) {
        if (!opts.apply_mask) return true;
        Vec x(static_cast<std::size_t>(d));
        for (int a = 0; a < d; ++a) x[static_cast<std::size_t>(a)] = probe[static_cast<std::size_t>(a)];
        const Mat jac = g.eval_on_simplex(iota, k, x).second;
        // Extraction places pieces within one lattice cell of the true zero
        // sheet, so below sigma ~ h the rank test cannot distinguish the
        // piece from a genuinely critical point; anything clearly above that
        // scale is a zero of the leading-block determinant with surviving
        // rank, which is exactly what the mask must drop.
        const double tol = opts.sigma_tol_abs
                               ? *opts.sigma_tol_abs
                               : std::max(1.0, frobenius(jac)) / static_cast<double>(res_main);
        return sigma_min(jac) < tol;
      };

      double blo[3], bhi[3];
      for (int a = 0; a < d; ++a) {
        blo[a] = 1e300;
        bhi[a] = -1e300;
        for (const Vec& v : sx.vertices) {
          blo[a] = std::min(blo[a], v[static_cast<std::size_t>(a)]);
          bhi[a] = std::max(bhi[a], v[static_cast<std::size_t>(a)]);
        }
      }

      const auto run = [&](int r, GeometryCollector* gc) -> double {
        std::array<int, 3> rlo{0, 0, 0}, rhi{0, 0, 0};
        for (int a = 0; a < d; ++a) {
          rlo[static_cast<std::size_t>(a)] =
              std::max(0, static_cast<int>(std::floor(blo[a] * r - 1e-9)));
          rhi[static_cast<std::size_t>(a)] =
              std::min(r, static_cast<int>(std::ceil(bhi[a] * r + 1e-9)));
        }
        if (d == 2)
          return detail::march_squares(field, r, rlo[0], rhi[0], rlo[1], rhi[1], &clip, keep, gc);
        return detail::march_tets(field, r, rlo, rhi, &clip, keep, gc);
      };

      if (d == 1) {
        const double x0 = sx.vertices[0][0], x1 = sx.vertices[1][0];
        const double lo = std::min(x0, x1), hi = std::max(x0, x1);
        detail::roots_1d([&](double x) { return field({x, 0.0, 0.0}); }, res_main, lo, hi,
                         [&](double x) { return keep({x, 0.0, 0.0}); }, roots_main);
        detail::roots_1d([&](double x) { return field({x, 0.0, 0.0}); }, res_comp, lo, hi,
                         [&](double x) { return keep({x, 0.0, 0.0}); }, roots_comp);
      } else {
        part_main[static_cast<std::size_t>(iota)] += run(res_main, collect);
        part_comp[static_cast<std::size_t>(iota)] += run(res_comp, nullptr);
      }
    }
  };

  // Geometry collection appends to shared vectors, so it runs serially.
  if (collect || d == 1) {
    for (std::int64_t iota = 0; iota < cubes; ++iota) process_cube(iota);
  } else {
    parallel_for(cubes, process_cube, 8);
  }

  CriticalSetMeasure out;
  out.simplex_count = cubes * per_cube;
  for (std::int64_t iota = 0; iota < cubes; ++iota) {
    out.flat_critical += part_flat[static_cast<std::size_t>(iota)];
    out.indeterminate += part_ind[static_cast<std::size_t>(iota)];
  }
  out.finite = out.flat_critical == 0;
  out.estimate.method = d == 1 ? "crossing-count" : "marching";
  out.estimate.resolution = res_main;
  if (d == 1) {
    if (collect)
      for (double r : roots_main) collect->points.push_back(r);
    out.estimate.value = static_cast<double>(detail::dedup_count(roots_main));
    out.estimate.uncertainty =
        std::abs(out.estimate.value - static_cast<double>(detail::dedup_count(roots_comp)));
  } else {
    out.estimate.value = pairwise_sum(part_main);
    out.estimate.uncertainty = std::abs(out.estimate.value - pairwise_sum(part_comp));
  }
  return out;
}

}  // namespace critset
