#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <critset/expr.hpp>
#include <critset/perturbation.hpp>

using critset::Barycentric;
using critset::BlendedApproximant;
using critset::BlendWeights;
using critset::CriticalPolynomial;
using critset::CubeGrid;
using critset::FunctionDef;
using critset::Mat;
using critset::Modulus;
using critset::Simplex;
using critset::Vec;

namespace {

std::shared_ptr<const critset::C1Map> fn(const std::string& src, int d) {
  return std::make_shared<FunctionDef>(src, d);
}

Barycentric bc_of(const Simplex& s, const Vec& x) {
  Vec u(x.size());
  for (std::size_t a = 0; a < x.size(); ++a) u[a] = x[a] - s.vertices.back()[a];
  return critset::detail::barycentric_from_inv(s.a_inv, u);
}

double leading_det(const Mat& jac, int m) {
  Mat a(m, m);
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < m; ++c) a(i, c) = jac(i, c);
  return critset::det(a);
}

Vec random_interior_point(const Simplex& s, std::mt19937_64& rng) {
  // Dirichlet-ish positive weights, bounded away from the faces.
  std::uniform_real_distribution<double> uni(0.2, 1.0);
  const std::size_t n = s.vertices.size();
  std::vector<double> w(n);
  double tot = 0.0;
  for (auto& v : w) tot += (v = uni(rng));
  Vec x(s.vertices[0].size(), 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t a = 0; a < x.size(); ++a) x[a] += (w[j] / tot) * s.vertices[j][a];
  return x;
}

}  // namespace

TEST_CASE("blend weights form a smooth partition of unity") {
  std::mt19937_64 rng(11);
  const CubeGrid grid(3, 1.0);
  for (int k = 0; k < grid.shapes_per_cube(); ++k) {
    const Simplex s = grid.simplex(0, k);
    for (int t = 0; t < 50; ++t) {
      const Vec x = random_interior_point(s, rng);
      const BlendWeights w = critset::blend_weights(bc_of(s, x));
      double sum = 0.0;
      Vec gsum(3, 0.0);
      for (std::size_t j = 0; j < w.beta.size(); ++j) {
        CHECK(w.beta[j] >= 0.0);
        CHECK(w.beta[j] <= 1.0);
        sum += w.beta[j];
        for (int c = 0; c < 3; ++c) gsum[static_cast<std::size_t>(c)] += w.dbeta(static_cast<int>(j), c);
      }
      CHECK(sum == Catch::Approx(1.0).margin(1e-12));
      for (double gc : gsum) CHECK(std::abs(gc) <= 1e-10);
    }
  }
}

TEST_CASE("blend weights collapse exactly at vertices") {
  const CubeGrid grid(2, 1.0);
  for (int k = 0; k < grid.shapes_per_cube(); ++k) {
    const Simplex s = grid.simplex(0, k);
    for (std::size_t j = 0; j < s.vertices.size(); ++j) {
      const BlendWeights w = critset::blend_weights(bc_of(s, s.vertices[j]));
      for (std::size_t l = 0; l < w.beta.size(); ++l) {
        CHECK(w.beta[l] == (l == j ? 1.0 : 0.0));
        CHECK(w.dbeta(static_cast<int>(l), 0) == 0.0);
        CHECK(w.dbeta(static_cast<int>(l), 1) == 0.0);
      }
    }
  }
}

TEST_CASE("blend weight gradients match finite differences") {
  std::mt19937_64 rng(12);
  const CubeGrid grid(2, 1.0);
  const double h = 1e-7;
  for (int k = 0; k < 4; ++k) {
    const Simplex s = grid.simplex(0, k);
    for (int t = 0; t < 20; ++t) {
      const Vec x = random_interior_point(s, rng);
      const BlendWeights w = critset::blend_weights(bc_of(s, x));
      for (int c = 0; c < 2; ++c) {
        Vec lo = x, hi = x;
        lo[static_cast<std::size_t>(c)] -= h;
        hi[static_cast<std::size_t>(c)] += h;
        const BlendWeights wl = critset::blend_weights(bc_of(s, lo));
        const BlendWeights wh = critset::blend_weights(bc_of(s, hi));
        for (std::size_t j = 0; j < w.beta.size(); ++j) {
          const double fd = (wh.beta[j] - wl.beta[j]) / (2.0 * h);
          CHECK(w.dbeta(static_cast<int>(j), c) == Catch::Approx(fd).margin(1e-5));
        }
      }
    }
  }
}

TEST_CASE("gradient sums respect the mesh-scaled cap") {
  std::mt19937_64 rng(13);
  for (int d = 1; d <= 3; ++d) {
    const CubeGrid grid(d, 0.25);
    const double cap =
        4.0 * std::pow(double(d), d) * critset::int_pow(double(d + 1), 4) / grid.side();
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    for (int t = 0; t < 400; ++t) {
      Vec x(static_cast<std::size_t>(d));
      for (auto& c : x) c = uni(rng);
      const CubeGrid::Location loc = grid.locate(x);
      const BlendWeights w = critset::blend_weights(loc.bc);
      double sum = 0.0;
      for (int j = 0; j <= d; ++j) {
        double n2 = 0.0;
        for (int c = 0; c < d; ++c) n2 += w.dbeta(j, c) * w.dbeta(j, c);
        sum += std::sqrt(n2);
      }
      CHECK(sum <= cap * (1.0 + 1e-12));
    }
  }
}

TEST_CASE("approximant reproduces values and jacobians at mesh vertices") {
  // Power-of-two mesh: vertex coordinates are exact dyadics, so locate lands
  // on the vertex bit for bit and the blend collapses to the patch there.
  const auto f = fn("sin(3*x1)*cos(3*x2)", 2);
  const BlendedApproximant g = critset::build_approximant_at_delta(f, 0.125);
  REQUIRE(g.grid().cubes_per_axis() == 8);
  for (std::size_t i = 0; i < g.vertex_count(); ++i) {
    const auto& r = g.vertex(i);
    const auto [gv, gj] = g.value_and_jacobian(r.position);
    CHECK(gv[0] == r.value[0]);
    for (int c = 0; c < 2; ++c) CHECK(gj(0, c) == r.jacobian(0, c));
    const Vec fv = f->value(r.position);
    CHECK(gv[0] == fv[0]);
  }
}

TEST_CASE("adjacent simplices agree along shared faces") {
  const auto f = fn("exp(x1)*sin(2*x2) + x1*x2", 2);
  const BlendedApproximant g = critset::build_approximant_at_delta(f, 0.2);  // K = 5
  const CubeGrid& grid = g.grid();
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> uni(0.05, 0.95);
  std::uniform_int_distribution<int> shape_pick(0, grid.shapes_per_cube() - 1);
  std::uniform_int_distribution<int> facet_pick(0, 2);
  std::uniform_int_distribution<std::int64_t> cube_pick(0, grid.cube_count() - 1);

  int tested = 0;
  for (int t = 0; t < 2000 && tested < 500; ++t) {
    const std::int64_t iota = cube_pick(rng);
    const Simplex s = grid.simplex(iota, shape_pick(rng));
    const int drop = facet_pick(rng);
    // Random convex combination of the facet opposite vertex `drop`.
    double w0 = uni(rng);
    Vec x(2, 0.0);
    double tot = 0.0;
    std::vector<double> w(s.vertices.size(), 0.0);
    for (std::size_t j = 0; j < s.vertices.size(); ++j) {
      if (static_cast<int>(j) == drop) continue;
      tot += (w[j] = (j % 2 == 0 ? w0 : 1.0 - w0) + 0.1);
    }
    for (std::size_t j = 0; j < s.vertices.size(); ++j)
      for (int a = 0; a < 2; ++a) x[static_cast<std::size_t>(a)] += (w[j] / tot) * s.vertices[j][static_cast<std::size_t>(a)];

    // Collect every simplex of the neighboring cubes containing x.
    struct Side {
      std::int64_t cube;
      int shape;
      Vec value;
      Mat jacobian;
    };
    std::vector<Side> sides;
    const auto coords = grid.cube_coords(iota);
    for (std::int64_t di = -1; di <= 1; ++di) {
      for (std::int64_t dj = -1; dj <= 1; ++dj) {
        const std::int64_t ci = coords[0] + di, cj = coords[1] + dj;
        if (ci < 0 || cj < 0 || ci >= grid.cubes_per_axis() || cj >= grid.cubes_per_axis()) continue;
        const std::int64_t nb = grid.cube_index({ci, cj});
        for (int k = 0; k < grid.shapes_per_cube(); ++k) {
          if (g.barycentric_on(nb, k, x).contains(1e-9)) {
            auto [v, jac] = g.eval_on_simplex(nb, k, x);
            sides.push_back({nb, k, std::move(v), std::move(jac)});
          }
        }
      }
    }
    if (sides.size() < 2) continue;
    ++tested;

    // Values agree across the face, and so do derivatives along it: the
    // restriction of g to the face is the same rational function from either
    // side.  The full jacobians do NOT match; their normal parts jump by
    // O(mesh * curvature) because the weight gradients depend on the simplex
    // shape.  What each side does guarantee is the patch-blend inequality
    //   |Dg(x) - Df(x)|  <=  max_j |Df(v_j) - Df(x)| + sum_j |Dbeta_j| |w_j(x) - f(x)|,
    // which is the bound the C1 certificate is built from.
    Vec tangent(2, 0.0);
    {
      std::vector<std::size_t> kept;
      for (std::size_t j = 0; j < s.vertices.size(); ++j)
        if (static_cast<int>(j) != drop) kept.push_back(j);
      double norm = 0.0;
      for (std::size_t a = 0; a < 2; ++a) {
        tangent[a] = s.vertices[kept[1]][a] - s.vertices[kept[0]][a];
        norm += tangent[a] * tangent[a];
      }
      norm = std::sqrt(norm);
      for (double& e : tangent) e /= norm;
    }

    const auto [fx, dfx] = f->value_and_jacobian(x);
    for (const Side& side : sides) {
      CHECK(std::abs(side.value[0] - sides[0].value[0]) <= 1e-8);

      double along_face = 0.0;
      for (std::size_t a = 0; a < 2; ++a)
        along_face += (side.jacobian(0, static_cast<int>(a)) -
                       sides[0].jacobian(0, static_cast<int>(a))) * tangent[a];
      CHECK(std::abs(along_face) <= 1e-9 * (1.0 + critset::frobenius(sides[0].jacobian)));

      const Barycentric bc = g.barycentric_on(side.cube, side.shape, x);
      const BlendWeights bw = critset::blend_weights(bc);
      const Simplex nbs = grid.simplex(side.cube, side.shape);
      double patch_term = 0.0;
      double grad_term = 0.0;
      for (std::size_t j = 0; j < nbs.vertices.size(); ++j) {
        const auto [fv, dfv] = f->value_and_jacobian(nbs.vertices[j]);
        patch_term = std::max(patch_term, critset::frobenius_dist(dfv, dfx));
        double wj = fv[0];
        double row_sq = 0.0;
        for (int a = 0; a < 2; ++a) {
          wj += dfv(0, a) * (x[static_cast<std::size_t>(a)] - nbs.vertices[j][static_cast<std::size_t>(a)]);
          row_sq += bw.dbeta(static_cast<int>(j), a) * bw.dbeta(static_cast<int>(j), a);
        }
        grad_term += std::sqrt(row_sq) * std::abs(wj - fx[0]);
      }
      CHECK(critset::frobenius_dist(side.jacobian, dfx) <=
            (patch_term + grad_term) * (1.0 + 1e-9) + 1e-12);
    }
  }
  REQUIRE(tested >= 500);
}

TEST_CASE("pinned-simplex evaluation matches the located one inside") {
  const auto f = fn("x1^2*x2 + cos(2*x1)", 2);
  const BlendedApproximant g = critset::build_approximant_at_delta(f, 0.34);
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int t = 0; t < 500; ++t) {
    const Vec x = {uni(rng), uni(rng)};
    const CubeGrid::Location loc = g.grid().locate(x);
    const auto a = g.value_and_jacobian(x);
    const auto b = g.eval_on_simplex(loc.cube, loc.shape, x);
    CHECK(a.first[0] == b.first[0]);
    CHECK(critset::frobenius_dist(a.second, b.second) == 0.0);
  }
}

TEST_CASE("approximant jacobian matches finite differences of its values") {
  const auto f = fn("sin(2*x1)*x2; x1 - x2^2", 2);
  const BlendedApproximant g = critset::build_approximant_at_delta(f, 0.26);  // K = 4
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> uni(0.1, 0.9);
  const double h = 1e-7;
  int used = 0;
  for (int t = 0; t < 300 && used < 120; ++t) {
    const Vec x = {uni(rng), uni(rng)};
    // Keep clear of faces so the two-sided stencil stays in one simplex.
    const CubeGrid::Location loc = g.grid().locate(x);
    bool interior = true;
    for (double a : loc.bc.alpha) interior = interior && a > 1e-4;
    if (!interior) continue;
    ++used;
    const Mat j = g.jacobian(x);
    for (int c = 0; c < 2; ++c) {
      Vec lo = x, hi = x;
      lo[static_cast<std::size_t>(c)] -= h;
      hi[static_cast<std::size_t>(c)] += h;
      const Vec vl = g.value(lo), vh = g.value(hi);
      for (int i = 0; i < 2; ++i) {
        const double fd = (vh[static_cast<std::size_t>(i)] - vl[static_cast<std::size_t>(i)]) / (2.0 * h);
        CHECK(j(i, c) == Catch::Approx(fd).margin(2e-5));
      }
    }
  }
  REQUIRE(used >= 120);
}

TEST_CASE("C1 certificate holds on a dense sample") {
  const auto f = fn("sin(3*x1)*cos(3*x2)", 2);
  // Hessian entries are bounded by 9, so slope 20 dominates the Jacobian
  // modulus with room to spare.
  const Modulus w = Modulus::holder(20.0, 1.0, 2.0);
  const critset::BetaCalibration cal(2, w);
  const double eps = cal.beta(0.125);
  const BlendedApproximant g = critset::build_approximant(f, eps, w);
  CHECK(g.epsilon() == eps);
  CHECK(g.delta() == Catch::Approx(0.125).epsilon(1e-9));
  CHECK_FALSE(g.critical_set_free());
  REQUIRE(std::isfinite(g.c1_bound()));
  CHECK(g.c1_bound() <= eps * (1.0 + 1e-9));
  const critset::C1Distance dist = critset::verify_c1_distance(*f, g, 20000, 99);
  CHECK(dist.max() <= g.c1_bound());
  // The certificate is loose by design; the measured distance sits far below.
  CHECK(dist.max() <= 0.05 * g.c1_bound());
}

TEST_CASE("zero modulus short-circuits to a single affine patch") {
  const auto f = fn("2*x1 - x2 + 0.25; x1 + x2", 2);
  const Modulus w = Modulus::holder(0.0, 1.0, 2.0);
  const BlendedApproximant g = critset::build_approximant(f, 123.0, w);
  CHECK(g.critical_set_free());
  CHECK(g.delta() == 1.0);
  CHECK(g.grid().cubes_per_axis() == 1);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const Vec x = {uni(rng), uni(rng)};
    const auto [gv, gj] = g.value_and_jacobian(x);
    const Vec fv = f->value(x);
    CHECK(gv[0] == Catch::Approx(fv[0]).margin(1e-12));
    CHECK(gv[1] == Catch::Approx(fv[1]).margin(1e-12));
    CHECK(gj(0, 0) == Catch::Approx(2.0).margin(1e-12));
    CHECK(gj(1, 1) == Catch::Approx(1.0).margin(1e-12));
  }
}

TEST_CASE("approximant rejects range dimension above domain dimension") {
  CHECK_THROWS_AS(critset::build_approximant_at_delta(fn("x1; x1 + 1; x1 - 1", 1), 0.5),
                  critset::internal_error);
}

TEST_CASE("critical polynomial matches the pointwise determinant") {
  struct Case {
    std::string src;
    int d;
  };
  const Case cases[] = {
      {"sin(3*x1)*cos(3*x2)", 2},                  // m = 1, d = 2
      {"x1^2/2 - x1/2 + x2^2", 2},                 // m = 1, d = 2, polynomial
      {"x1^2/2 + x2; x1*x2", 2},                   // m = 2, d = 2
      {"x1^3 - x2*x3", 3},                         // m = 1, d = 3
      {"x1^2 - x2; x2*x3 + x1; x3^2/2 - x1/3", 3}  // m = 3, d = 3
  };
  std::mt19937_64 rng(18);
  for (const Case& c : cases) {
    const auto f = fn(c.src, c.d);
    const int m = f->dim_out();
    const BlendedApproximant g = critset::build_approximant_at_delta(f, 0.5);
    const CubeGrid& grid = g.grid();
    const double ell = grid.side();
    for (std::int64_t iota = 0; iota < grid.cube_count(); ++iota) {
      for (int k = 0; k < grid.shapes_per_cube(); ++k) {
        const CriticalPolynomial cp = g.critical_polynomial(iota, k);
        REQUIRE(cp.kind == CriticalPolynomial::Kind::regular);
        REQUIRE(cp.p.total_degree() <= 4 * m);
        REQUIRE(cp.gauge > 0.0);
        const Simplex s = grid.simplex(iota, k);
        for (int t = 0; t < 8; ++t) {
          const Vec x = random_interior_point(s, rng);
          const Barycentric bc = g.barycentric_on(iota, k, x);
          const Mat jac = g.eval_on_simplex(iota, k, x).second;
          // Each matrix entry is ell * D^2 * dg_i/dx_c, so the m x m
          // determinant is ell^m * D^(2m) times the leading jacobian minor.
          const double det_part = leading_det(jac, m);
          const double dpow = critset::int_pow(bc.d_sq, 2 * m);
          const double expect = critset::int_pow(ell, m) * dpow * det_part;
          const double got = cp.eval_at(x);
          const double scale = std::max({1.0, std::abs(expect), cp.p.l1()});
          CHECK(std::abs(got - expect) <= 1e-9 * scale);
        }
      }
    }
  }
}

TEST_CASE("flat patches classify by the rank of the shared jacobian") {
  // Affine with a zero first column: every patch equals the global affine
  // map, the polynomial vanishes identically, yet nothing is critical.
  {
    const BlendedApproximant g = critset::build_approximant_at_delta(fn("x2", 2), 0.5);
    const CriticalPolynomial cp = g.critical_polynomial(0, 0);
    CHECK(cp.kind == CriticalPolynomial::Kind::flat_noncritical);
    CHECK(cp.p.empty());
  }
  // Constant map: rank zero everywhere, the whole simplex is critical.
  {
    const BlendedApproximant g = critset::build_approximant_at_delta(fn("0.5", 2), 0.5);
    const CriticalPolynomial cp = g.critical_polynomial(0, 0);
    CHECK(cp.kind == CriticalPolynomial::Kind::flat_critical);
  }
  // Affine full rank: the polynomial is a nonzero multiple of a positive
  // factor, so the simplex is regular and the zero set inside is empty.
  {
    const BlendedApproximant g = critset::build_approximant_at_delta(fn("2*x1 + 3*x2", 2), 0.5);
    const CriticalPolynomial cp = g.critical_polynomial(0, 0);
    CHECK(cp.kind == CriticalPolynomial::Kind::regular);
  }
}

TEST_CASE("upper bound theorem form reproduces the worked constants") {
  const Modulus w = Modulus::holder(1.0, 1.0, 2.0);

  // d = 2, m = 1: pick eps so the mesh size solves to 0.1.
  {
    const critset::BetaCalibration cal(2, w);
    const double eps = cal.beta(0.1);
    const critset::UpperBound ub = critset::upper_bound_N(2, 1, eps, w);
    CHECK(ub.delta == Catch::Approx(0.1).epsilon(1e-9));
    CHECK(ub.theorem_form == Catch::Approx(320.0).epsilon(1e-8));
  }

  // d = 1, m = 1: mesh size 0.5 gives 1 * 2^2 * 1 / 0.5 = 8.
  {
    const critset::BetaCalibration cal(1, w);
    const double eps = cal.beta(0.5);
    const critset::UpperBound ub = critset::upper_bound_N(1, 1, eps, w);
    CHECK(ub.delta == Catch::Approx(0.5).epsilon(1e-9));
    CHECK(ub.theorem_form == Catch::Approx(8.0).epsilon(1e-8));
    // gamma = 2 + bracket; with the identity modulus the finer forms agree.
    CHECK(ub.gamma == 66.0);
    REQUIRE(ub.remark_form.has_value());
    REQUIRE(ub.holder_form.has_value());
    CHECK(*ub.remark_form == Catch::Approx(264.0 / eps).epsilon(1e-12));
    CHECK(*ub.holder_form == Catch::Approx(*ub.remark_form).epsilon(1e-12));
  }

  CHECK_THROWS_AS(critset::upper_bound_N(1, 2, 0.5, w), critset::config_error);
  CHECK_THROWS_AS(critset::upper_bound_N(2, 0, 0.5, w), critset::config_error);
}

TEST_CASE("remark form appears only below the diagonal mesh threshold") {
  const Modulus w = Modulus::holder(1.0, 1.0, 2.0);
  const critset::BetaCalibration cal(2, w);
  // Mesh size 0.9 > 1/sqrt(2): the refined count is not claimed.
  const critset::UpperBound coarse = critset::upper_bound_N(2, 1, cal.beta(0.9), w);
  CHECK_FALSE(coarse.remark_form.has_value());
  const critset::UpperBound fine = critset::upper_bound_N(2, 1, cal.beta(0.5), w);
  CHECK(fine.remark_form.has_value());
}

TEST_CASE("sampled C1 distance sees an injected linear perturbation exactly") {
  const auto f = fn("sin(x1)*x2", 2);
  const double amp = 1e-3;
  Mat a(1, 2);
  a(0, 0) = amp;
  a(0, 1) = 0.0;
  const auto shift = std::make_shared<critset::LinearMap>(a, Vec{0.0});
  const critset::MapSum gsum(f, shift);
  const critset::C1Distance dist = critset::verify_c1_distance(*f, gsum, 4000, 7);
  CHECK(dist.sup_jacobian == Catch::Approx(amp).margin(1e-15));
  CHECK(dist.sup_value <= amp);
  CHECK(dist.sup_value >= 0.9 * amp);  // attained near x1 = 1
}
