// The blended piecewise-rational approximant and its certificates.
//
// Given a C1 map f on the unit cube and a mesh size delta, every grid vertex
// carries the linearization w_j(x) = f(v_j) + Df(v_j)(x - v_j).  On each
// simplex the approximant blends the d+1 vertex patches with weights
// beta_j = alpha_j^2 / sum_l alpha_l^2, which reproduces f and Df exactly at
// vertices and keeps adjacent simplices consistent because vertex data is
// cached once per lattice point.
//
// The per-simplex critical polynomial is det of the leading m x m block of
// D(x)^2 Dg(x), assembled symbolically in scaled local coordinates
// xi = (x - apex)/ell to keep coefficients O(1); its zero set contains every
// rank-deficient point of g on the simplex.
#pragma once

#include <memory>
#include <optional>
#include <random>
#include <set>
#include <unordered_map>
#include <utility>
#include <vector>

#include "decomposition.hpp"
#include "map.hpp"
#include "modulus.hpp"
#include "polynomial.hpp"
#include "util.hpp"

namespace critset {

struct BlendWeights {
  Vec beta;   // d+1 weights, sum 1
  Mat dbeta;  // (d+1) x d gradients, rows sum to 0
};

inline BlendWeights blend_weights(const Barycentric& bc) {
  const int n = bc.dalpha.rows;
  const int d = bc.dalpha.cols;
  BlendWeights w;
  w.beta.assign(n, 0.0);
  w.dbeta = Mat(n, d);
  const double dsq = bc.d_sq;
  require(dsq > 0.0, "blend_weights: degenerate coordinates");
  Vec s(d, 0.0);
  for (int l = 0; l < n; ++l)
    for (int c = 0; c < d; ++c) s[c] += bc.alpha[l] * bc.dalpha(l, c);
  const double inv = 1.0 / dsq;
  const double inv2 = inv * inv;
  for (int j = 0; j < n; ++j) {
    const double aj = bc.alpha[j];
    w.beta[j] = aj * aj * inv;
    const double f = 2.0 * aj * inv2;
    for (int c = 0; c < d; ++c)
      w.dbeta(j, c) = f * (dsq * bc.dalpha(j, c) - aj * s[c]);
  }
  return w;
}

struct LinearPatch {
  Vec vertex;
  Vec value;
  Mat jacobian;

  Vec eval(const Vec& x) const {
    Vec y = value;
    for (int r = 0; r < jacobian.rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < jacobian.cols; ++c) s += jacobian(r, c) * (x[c] - vertex[c]);
      y[r] += s;
    }
    return y;
  }
};

// One simplex's critical polynomial in local coordinates xi = (x - apex)/ell.
struct CriticalPolynomial {
  enum class Kind {
    regular,            // meaningful polynomial, extract its zero set
    flat_noncritical,   // g affine with full rank here: no critical points
    flat_critical,      // g affine and rank-deficient: the whole simplex is critical
    indeterminate       // polynomial vanished without the affine explanation
  };

  std::int64_t cube_index = 0;
  int simplex_index = 0;
  Vec apex;
  double ell = 0.0;
  Poly p;                 // in xi; same zero set as the x-frame polynomial
  int degree_bound = 0;   // 4m
  double gauge = 0.0;     // cancellation-free coefficient scale
  Kind kind = Kind::regular;

  double eval_at(const Vec& x) const {
    Vec xi(x.size());
    for (std::size_t a = 0; a < x.size(); ++a) xi[a] = (x[a] - apex[a]) / ell;
    return p.eval(xi);
  }
};

class BlendedApproximant final : public C1Map {
 public:
  struct VertexRecord {
    Vec position;
    Vec value;
    Mat jacobian;
  };

  BlendedApproximant(std::shared_ptr<const C1Map> f, double delta,
                     std::optional<Modulus> modulus = std::nullopt)
      : f_(std::move(f)), grid_(f_->dim_in(), delta), modulus_(std::move(modulus)) {
    m_ = f_->dim_out();
    require(m_ >= 1 && m_ <= f_->dim_in(), "approximant: needs 1 <= m <= d");
    if (modulus_) {
      const BetaCalibration cal(grid_.dim(), *modulus_);
      c1_bound_ = cal.beta(grid_.delta_target());
    }
    build_vertex_cache();
  }

  int dim_in() const override { return grid_.dim(); }
  int dim_out() const override { return m_; }
  const CubeGrid& grid() const { return grid_; }
  const C1Map& base_map() const { return *f_; }
  const std::optional<Modulus>& modulus() const { return modulus_; }

  double delta() const { return grid_.delta_target(); }
  double epsilon() const { return epsilon_; }
  void set_epsilon(double e) { epsilon_ = e; }
  // Right-hand side of the calibration inequality at the built mesh size;
  // NaN when no modulus was supplied.
  double c1_bound() const { return c1_bound_; }
  bool critical_set_free() const { return critical_set_free_; }
  void set_critical_set_free(bool v) { critical_set_free_ = v; }

  std::size_t vertex_count() const { return vertices_.size(); }
  const VertexRecord& vertex(std::size_t i) const { return vertices_[i]; }

  Vec value(const Vec& x) const override { return value_and_jacobian(x).first; }
  Mat jacobian(const Vec& x) const override { return value_and_jacobian(x).second; }

  std::pair<Vec, Mat> value_and_jacobian(const Vec& x) const override {
    const CubeGrid::Location loc = grid_.locate(x);
    return eval_with(loc.cube, loc.shape, loc.bc, x);
  }

  // Evaluation pinned to a specific simplex; x need not be inside it.
  std::pair<Vec, Mat> eval_on_simplex(std::int64_t iota, int k, const Vec& x) const {
    return eval_with(iota, k, barycentric_on(iota, k, x), x);
  }

  Barycentric barycentric_on(std::int64_t iota, int k, const Vec& x) const {
    const SimplexShape& shape = grid_.shapes()[static_cast<std::size_t>(k)];
    const auto coords = grid_.cube_coords(iota);
    const int d = grid_.dim();
    Vec u(d);
    for (int a = 0; a < d; ++a) {
      const double xi = x[a] * static_cast<double>(grid_.cubes_per_axis()) -
                        static_cast<double>(coords[a]);
      u[a] = xi - shape.vertices.back()[a];
    }
    Barycentric bc = detail::barycentric_from_inv(shape.a_unit_inv, u);
    for (double& e : bc.dalpha.a) e /= grid_.side();
    return bc;
  }

  const VertexRecord& vertex_record(std::int64_t iota, int k, int j) const {
    const SimplexShape& shape = grid_.shapes()[static_cast<std::size_t>(k)];
    const auto coords = grid_.cube_coords(iota);
    const std::uint64_t key = grid_.vertex_key(coords, shape.half[static_cast<std::size_t>(j)]);
    const auto it = index_.find(key);
    require(it != index_.end(), "vertex cache miss");
    return vertices_[static_cast<std::size_t>(it->second)];
  }

  LinearPatch patch(std::int64_t iota, int k, int j) const {
    const VertexRecord& r = vertex_record(iota, k, j);
    return {r.position, r.value, r.jacobian};
  }

  CriticalPolynomial critical_polynomial(std::int64_t iota, int k) const;

 private:
  std::pair<Vec, Mat> eval_with(std::int64_t iota, int k, const Barycentric& bc,
                                const Vec& x) const {
    const int d = grid_.dim();
    const BlendWeights w = blend_weights(bc);
    Vec val(m_, 0.0);
    Mat jac(m_, d);
    for (int j = 0; j <= d; ++j) {
      const VertexRecord& r = vertex_record(iota, k, j);
      // w_j(x) = f(v_j) + Df(v_j)(x - v_j)
      Vec wj(m_);
      for (int i = 0; i < m_; ++i) {
        double s = r.value[i];
        for (int c = 0; c < d; ++c) s += r.jacobian(i, c) * (x[c] - r.position[c]);
        wj[i] = s;
      }
      const double bj = w.beta[j];
      for (int i = 0; i < m_; ++i) {
        val[i] += bj * wj[i];
        for (int c = 0; c < d; ++c)
          jac(i, c) += wj[i] * w.dbeta(j, c) + bj * r.jacobian(i, c);
      }
    }
    return {std::move(val), std::move(jac)};
  }

  void build_vertex_cache() {
    // Distinct in-cube vertex patterns over all shapes, in a fixed order.
    std::set<std::vector<int>> pattern_set;
    for (const SimplexShape& s : grid_.shapes())
      for (const auto& h : s.half) pattern_set.insert(h);
    const std::vector<std::vector<int>> patterns(pattern_set.begin(), pattern_set.end());

    const std::int64_t cubes = grid_.cube_count();
    index_.reserve(static_cast<std::size_t>(cubes) * patterns.size() / 2 + 16);
    for (std::int64_t iota = 0; iota < cubes; ++iota) {
      const auto coords = grid_.cube_coords(iota);
      for (const auto& h : patterns) {
        const std::uint64_t key = grid_.vertex_key(coords, h);
        if (index_.emplace(key, static_cast<std::int64_t>(vertices_.size())).second) {
          VertexRecord r;
          r.position = grid_.vertex_position(coords, h);
          vertices_.push_back(std::move(r));
        }
      }
    }
    parallel_for(static_cast<std::int64_t>(vertices_.size()), [&](std::int64_t i) {
      VertexRecord& r = vertices_[static_cast<std::size_t>(i)];
      auto [v, j] = f_->value_and_jacobian(r.position);
      r.value = std::move(v);
      r.jacobian = std::move(j);
    });
  }

  std::shared_ptr<const C1Map> f_;
  CubeGrid grid_;
  std::optional<Modulus> modulus_;
  int m_ = 1;
  double epsilon_ = std::numeric_limits<double>::quiet_NaN();
  double c1_bound_ = std::numeric_limits<double>::quiet_NaN();
  bool critical_set_free_ = false;

  std::unordered_map<std::uint64_t, std::int64_t> index_;
  std::vector<VertexRecord> vertices_;
};

inline CriticalPolynomial BlendedApproximant::critical_polynomial(std::int64_t iota,
                                                                  int k) const {
  const int d = grid_.dim();
  const int m = m_;
  require(m <= 4, "critical_polynomial: m <= 4 supported");
  const SimplexShape& shape = grid_.shapes()[static_cast<std::size_t>(k)];
  const double ell = grid_.side();

  std::vector<const VertexRecord*> recs(static_cast<std::size_t>(d) + 1);
  for (int j = 0; j <= d; ++j) recs[static_cast<std::size_t>(j)] = &vertex_record(iota, k, j);
  const Vec& apex = recs.back()->position;

  CriticalPolynomial out;
  out.cube_index = iota;
  out.simplex_index = k;
  out.apex = apex;
  out.ell = ell;
  out.degree_bound = 4 * m;

  // Flatness: all patches agree with the apex patch as one affine map.
  double vscale = 1.0, jscale = 1.0;
  for (int j = 0; j <= d; ++j) {
    for (double v : recs[j]->value) vscale = std::max(vscale, std::abs(v));
    for (double v : recs[j]->jacobian.a) jscale = std::max(jscale, std::abs(v));
  }
  const VertexRecord& ar = *recs.back();
  bool flat = true;
  for (int j = 0; j < d && flat; ++j) {
    const VertexRecord& r = *recs[j];
    for (std::size_t e = 0; e < r.jacobian.a.size(); ++e)
      if (std::abs(r.jacobian.a[e] - ar.jacobian.a[e]) > 1e-13 * jscale) flat = false;
    if (!flat) break;
    for (int i = 0; i < m; ++i) {
      double pred = ar.value[i];
      for (int c = 0; c < d; ++c) pred += ar.jacobian(i, c) * (r.position[c] - ar.position[c]);
      if (std::abs(r.value[i] - pred) > 1e-13 * std::max(vscale, jscale)) flat = false;
    }
  }

  // alpha_j as polynomials in xi (integer linear coefficients, no constant:
  // xi is already the offset from the apex, so alpha_j = a_unit_inv * xi).
  const Mat& inv = shape.a_unit_inv;
  std::vector<Poly> alpha(static_cast<std::size_t>(d) + 1, Poly(d));
  {
    Poly last = Poly::constant(d, 1.0);
    for (int j = 0; j < d; ++j) {
      Poly aj(d);
      for (int c = 0; c < d; ++c)
        if (inv(j, c) != 0.0) aj += Poly::variable(d, c) * Poly::constant(d, inv(j, c));
      alpha[static_cast<std::size_t>(j)] = aj;
      last -= aj;
    }
    alpha[static_cast<std::size_t>(d)] = std::move(last);
  }

  // Gradient rows of alpha with respect to xi (constants).
  const auto dalpha_u = [&](int j, int c) -> double {
    if (j < d) return inv(j, c);
    double s = 0.0;
    for (int r = 0; r < d; ++r) s += inv(r, c);
    return -s;
  };

  std::vector<Poly> alpha_sq(static_cast<std::size_t>(d) + 1, Poly(d));
  Poly dsq(d);
  for (int j = 0; j <= d; ++j) {
    alpha_sq[static_cast<std::size_t>(j)] = alpha[static_cast<std::size_t>(j)] * alpha[static_cast<std::size_t>(j)];
    dsq += alpha_sq[static_cast<std::size_t>(j)];
  }

  // S_c = sum_j alpha_j * dalpha_u(j, c), needed for columns c < m.
  std::vector<Poly> s_col(static_cast<std::size_t>(m), Poly(d));
  for (int c = 0; c < m; ++c) {
    Poly s(d);
    for (int j = 0; j <= d; ++j) {
      const double g = dalpha_u(j, c);
      if (g != 0.0) {
        Poly t = alpha[static_cast<std::size_t>(j)];
        t.scale(g);
        s += t;
      }
    }
    s_col[static_cast<std::size_t>(c)] = std::move(s);
  }

  // w_{j,i} as affine polynomials in xi, and their gauge masses.
  std::vector<std::vector<Poly>> w(static_cast<std::size_t>(d) + 1,
                                   std::vector<Poly>(static_cast<std::size_t>(m), Poly(d)));
  for (int j = 0; j <= d; ++j) {
    const VertexRecord& r = *recs[static_cast<std::size_t>(j)];
    for (int i = 0; i < m; ++i) {
      double c0 = r.value[i];
      Poly wji(d);
      for (int a = 0; a < d; ++a) {
        c0 += r.jacobian(i, a) * (apex[a] - r.position[a]);
        const double lin = ell * r.jacobian(i, a);
        if (lin != 0.0) wji += Poly::variable(d, a) * Poly::constant(d, lin);
      }
      wji += Poly::constant(d, c0);
      w[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = std::move(wji);
    }
  }

  // T_{i,c} = sum_j alpha_j^2 * ell * J_j(i,c), for i,c < m.
  std::vector<std::vector<Poly>> t(static_cast<std::size_t>(m),
                                   std::vector<Poly>(static_cast<std::size_t>(m), Poly(d)));
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < m; ++c) {
      Poly acc(d);
      for (int j = 0; j <= d; ++j) {
        const double lj = ell * recs[static_cast<std::size_t>(j)]->jacobian(i, c);
        if (lj != 0.0) {
          Poly q = alpha_sq[static_cast<std::size_t>(j)];
          q.scale(lj);
          acc += q;
        }
      }
      t[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = std::move(acc);
    }
  }

  // G_{j,c} = dsq * dalpha_u(j,c) - alpha_j * S_c, for c < m.
  std::vector<std::vector<Poly>> gpart(static_cast<std::size_t>(d) + 1,
                                       std::vector<Poly>(static_cast<std::size_t>(m), Poly(d)));
  for (int j = 0; j <= d; ++j) {
    for (int c = 0; c < m; ++c) {
      Poly g = dsq;
      g.scale(dalpha_u(j, c));
      g -= alpha[static_cast<std::size_t>(j)] * s_col[static_cast<std::size_t>(c)];
      gpart[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] = std::move(g);
    }
  }

  std::vector<std::vector<Poly>> pmat(static_cast<std::size_t>(m),
                                      std::vector<Poly>(static_cast<std::size_t>(m), Poly(d)));
  std::vector<std::vector<double>> gmat(static_cast<std::size_t>(m),
                                        std::vector<double>(static_cast<std::size_t>(m), 0.0));
  const double dsq_mass = dsq.l1();
  for (int i = 0; i < m; ++i) {
    for (int c = 0; c < m; ++c) {
      Poly entry = dsq * t[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)];
      double gauge_entry =
          dsq_mass * t[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)].l1();
      for (int j = 0; j <= d; ++j) {
        Poly u = alpha[static_cast<std::size_t>(j)] *
                 w[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
        u.scale(2.0);
        gauge_entry += u.l1() * gpart[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)].l1();
        entry += u * gpart[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)];
      }
      pmat[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = std::move(entry);
      gmat[static_cast<std::size_t>(i)][static_cast<std::size_t>(c)] = gauge_entry;
    }
  }

  out.p = poly_det(pmat);
  out.gauge = scalar_permanent(gmat);
  if (!out.p.all_finite())
    throw internal_error("critical_polynomial: nonfinite coefficients");
  require(out.p.total_degree() <= out.degree_bound, "critical_polynomial: degree bound violated");

  const double mass = out.p.l1();
  const bool degenerate = mass <= 1e-9 * out.gauge;
  if (!degenerate) {
    out.kind = CriticalPolynomial::Kind::regular;
  } else if (flat) {
    const double sm = sigma_min(ar.jacobian);
    const double tol = 1e-10 * std::max(1.0, frobenius(ar.jacobian));
    out.kind = sm < tol ? CriticalPolynomial::Kind::flat_critical
                        : CriticalPolynomial::Kind::flat_noncritical;
  } else {
    out.kind = CriticalPolynomial::Kind::indeterminate;
  }
  return out;
}

// delta from the calibration equation, then the approximant at that mesh.
inline BlendedApproximant build_approximant(std::shared_ptr<const C1Map> f, double eps,
                                            const Modulus& omega) {
  const BetaCalibration cal(f->dim_in(), omega);
  const SolveResult sr = cal.solve_delta(eps);
  BlendedApproximant g(std::move(f), sr.delta, omega);
  g.set_epsilon(eps);
  g.set_critical_set_free(sr.critical_set_free);
  return g;
}

inline BlendedApproximant build_approximant_at_delta(std::shared_ptr<const C1Map> f, double delta,
                                                     std::optional<Modulus> omega = std::nullopt) {
  return BlendedApproximant(std::move(f), delta, std::move(omega));
}

struct UpperBound {
  double delta = 0.0;
  bool critical_set_free = false;
  double theorem_form = 0.0;             // d 2^(2m+d-1) d! / delta
  std::optional<double> remark_form;     // d^(3/2) 2^(3d-1) d! / Psi(eps/gamma)
  std::optional<double> holder_form;     // d^(3/2) 2^(3d-1) d! (gamma C / eps)^(1/alpha)
  double gamma = 0.0;                    // 2 + 4 d^(d+1/2) (d+1)^4
};

inline UpperBound upper_bound_N(int d, int m, double eps, const Modulus& omega) {
  if (m < 1 || m > d) throw config_error("upper_bound_N: needs 1 <= m <= d");
  const BetaCalibration cal(d, omega);
  const SolveResult sr = cal.solve_delta(eps);
  UpperBound ub;
  ub.delta = sr.delta;
  ub.critical_set_free = sr.critical_set_free;
  const double dfact = static_cast<double>(factorial_u64(d));
  ub.theorem_form = d * int_pow(2.0, 2 * m + d - 1) * dfact / sr.delta;
  ub.gamma = 2.0 + cal.bracket_constant();
  if (!sr.critical_set_free && sr.delta <= 1.0 / std::sqrt(double(d)) + 1e-15) {
    const double psi = omega.inverse(eps / ub.gamma);
    if (psi > 0.0)
      ub.remark_form = std::pow(double(d), 1.5) * int_pow(2.0, 3 * d - 1) * dfact / psi;
  }
  if (omega.kind() == Modulus::Kind::holder && !omega.is_zero()) {
    ub.holder_form = std::pow(double(d), 1.5) * int_pow(2.0, 3 * d - 1) * dfact *
                     std::pow(ub.gamma * omega.holder_coeff() / eps, 1.0 / omega.holder_alpha());
  }
  return ub;
}

struct C1Distance {
  double sup_value = 0.0;     // Euclidean norm of g - f
  double sup_jacobian = 0.0;  // Frobenius norm of Dg - Df
  double max() const { return std::max(sup_value, sup_jacobian); }
};

// Seeded dense sampling of the C1 distance between two maps on the cube.
inline C1Distance verify_c1_distance(const C1Map& f, const C1Map& g, int samples,
                                     std::uint64_t seed = 1) {
  require(f.dim_in() == g.dim_in() && f.dim_out() == g.dim_out(),
          "verify_c1_distance: dimension mismatch");
  const int d = f.dim_in();
  std::mt19937_64 rng(mix_seed(seed, 0xc1d15ull));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  C1Distance out;
  for (int s = 0; s < samples; ++s) {
    Vec x(d);
    for (int a = 0; a < d; ++a) x[a] = uni(rng);
    const auto [fv, fj] = f.value_and_jacobian(x);
    const auto [gv, gj] = g.value_and_jacobian(x);
    out.sup_value = std::max(out.sup_value, dist2(fv, gv));
    out.sup_jacobian = std::max(out.sup_jacobian, frobenius_dist(fj, gj));
  }
  return out;
}

}  // namespace critset
