#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <set>
#include <vector>

#include <critset/decomposition.hpp>

using critset::Barycentric;
using critset::CubeGrid;
using critset::Simplex;
using critset::SimplexShape;
using critset::Vec;

namespace {

std::uint64_t simplex_count(int d) {
  std::uint64_t f = 1;
  for (int i = 2; i <= d; ++i) f *= static_cast<std::uint64_t>(i);
  return (std::uint64_t(1) << (d - 1)) * f;
}

}  // namespace

TEST_CASE("unit cube decomposition counts and determinants") {
  for (int d = 1; d <= 5; ++d) {
    const auto shapes = critset::decompose_unit_cube(d);
    REQUIRE(shapes.size() == simplex_count(d));
    const double expected_det = std::ldexp(1.0, 1 - d);
    double total_volume = 0.0;
    const double dfact = static_cast<double>(critset::factorial_u64(d));
    for (const SimplexShape& s : shapes) {
      CHECK(s.abs_det == Catch::Approx(expected_det).epsilon(1e-12));
      total_volume += s.abs_det / dfact;
    }
    CHECK(total_volume == Catch::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("every shape has the cube center as its final vertex") {
  // d = 1 bottoms out at the plain interval; the coning starts at d = 2.
  for (int d = 2; d <= 4; ++d) {
    for (const SimplexShape& s : critset::decompose_unit_cube(d)) {
      REQUIRE(s.vertices.size() == static_cast<std::size_t>(d + 1));
      for (double c : s.vertices.back()) CHECK(c == 0.5);
    }
  }
  const auto interval = critset::decompose_unit_cube(1);
  REQUIRE(interval.size() == 1);
  CHECK(interval[0].vertices[0][0] == 0.0);
  CHECK(interval[0].vertices[1][0] == 1.0);
}

TEST_CASE("shape vertices avoid edge midpoints") {
  // Vertices live on the half lattice; the recursion only ever produces
  // points with zero or at least two odd half coordinates, which is what
  // makes shared-face vertex identification well defined.
  for (int d = 2; d <= 5; ++d) {
    for (const SimplexShape& s : critset::decompose_unit_cube(d)) {
      for (const auto& h : s.half) {
        int odd = 0;
        for (int c : h) {
          REQUIRE(c >= 0);
          REQUIRE(c <= 2);
          if (c == 1) ++odd;
        }
        CHECK(odd != 1);
      }
    }
  }
}

TEST_CASE("inverse matrices are exact integer inverses") {
  for (int d = 1; d <= 4; ++d) {
    for (const SimplexShape& s : critset::decompose_unit_cube(d)) {
      for (int r = 0; r < d; ++r) {
        for (int c = 0; c < d; ++c) {
          const double e = s.a_unit_inv(r, c);
          CHECK(e == std::round(e));
          double acc = 0.0;
          for (int t = 0; t < d; ++t) acc += s.a_unit_inv(r, t) * s.a_unit(t, c);
          CHECK(acc == (r == c ? 1.0 : 0.0));  // exact, not approximate
        }
      }
    }
  }
}

TEST_CASE("barycentric gradient rows are bounded by d^d over the mesh size") {
  for (int d = 1; d <= 4; ++d) {
    const double cap = std::pow(static_cast<double>(d), d);
    for (const SimplexShape& s : critset::decompose_unit_cube(d)) {
      Vec colsum(static_cast<std::size_t>(d), 0.0);
      for (int r = 0; r < d; ++r) {
        double norm2 = 0.0;
        for (int c = 0; c < d; ++c) {
          norm2 += s.a_unit_inv(r, c) * s.a_unit_inv(r, c);
          colsum[static_cast<std::size_t>(c)] += s.a_unit_inv(r, c);
        }
        CHECK(std::sqrt(norm2) <= cap + 1e-12);
      }
      double last2 = 0.0;  // the apex row is minus the column sums
      for (double c : colsum) last2 += c * c;
      CHECK(std::sqrt(last2) <= cap + 1e-12);
    }
  }
}

TEST_CASE("grid resolution snapping") {
  CHECK(CubeGrid(2, 0.5).cubes_per_axis() == 2);
  CHECK(CubeGrid(2, 0.5000001).cubes_per_axis() == 2);
  CHECK(CubeGrid(2, 0.26).cubes_per_axis() == 4);
  CHECK(CubeGrid(2, 1.0).cubes_per_axis() == 1);
  CHECK(CubeGrid(2, 7.5).cubes_per_axis() == 1);  // coarser than the domain clamps to one cube
  CHECK(CubeGrid(2, 0.1).cubes_per_axis() == 10);
  CHECK(CubeGrid(1, 1.0 / 1024.0).cubes_per_axis() == 1024);
  CHECK_THROWS_AS(CubeGrid(2, 0.0), critset::range_error);
  CHECK_THROWS_AS(CubeGrid(0, 0.5), critset::range_error);
  CHECK_THROWS_AS(CubeGrid(9, 0.5), critset::range_error);
}

TEST_CASE("grid simplices partition the cube by volume") {
  for (int d = 1; d <= 3; ++d) {
    const CubeGrid grid(d, 0.34);  // K = 3
    double total = 0.0;
    for (std::int64_t iota = 0; iota < grid.cube_count(); ++iota)
      for (int k = 0; k < grid.shapes_per_cube(); ++k) total += grid.simplex(iota, k).volume();
    CHECK(total == Catch::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("simplex diameters never exceed sqrt(d) times the mesh size") {
  for (int d = 1; d <= 4; ++d) {
    const CubeGrid grid(d, 0.5);
    const double cap = std::sqrt(static_cast<double>(d)) * grid.side() + 1e-12;
    for (int k = 0; k < grid.shapes_per_cube(); ++k) {
      const Simplex s = grid.simplex(0, k);
      for (std::size_t i = 0; i < s.vertices.size(); ++i)
        for (std::size_t j = i + 1; j < s.vertices.size(); ++j)
          CHECK(critset::dist2(s.vertices[i], s.vertices[j]) <= cap);
    }
  }
}

TEST_CASE("random points land in exactly one simplex") {
  std::mt19937_64 rng(20240817);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (int d = 2; d <= 3; ++d) {
    const CubeGrid grid(d, 1.0);  // a single cube isolates the shape set
    const int trials = d == 2 ? 100000 : 20000;
    for (int t = 0; t < trials; ++t) {
      Vec x(static_cast<std::size_t>(d));
      for (auto& c : x) c = uni(rng);
      int containing = 0;
      for (int k = 0; k < grid.shapes_per_cube(); ++k) {
        const Simplex s = grid.simplex(0, k);
        Vec u(static_cast<std::size_t>(d));
        for (int a = 0; a < d; ++a)
          u[static_cast<std::size_t>(a)] = x[static_cast<std::size_t>(a)] - s.vertices.back()[static_cast<std::size_t>(a)];
        const Barycentric bc = critset::detail::barycentric_from_inv(s.a_inv, u);
        // Strict tolerance: a random interior point is never this close to a face.
        if (bc.contains(1e-12)) ++containing;
      }
      CHECK(containing == 1);
    }
  }
}

TEST_CASE("locate returns a containing simplex that reconstructs the point") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const CubeGrid grid(2, 1.0 / 7.0);
  for (int t = 0; t < 10000; ++t) {
    Vec x = {uni(rng), uni(rng)};
    const CubeGrid::Location loc = grid.locate(x);
    REQUIRE(loc.bc.contains(1e-9));
    const Simplex s = grid.simplex(loc.cube, loc.shape);
    Vec rebuilt(2, 0.0);
    for (std::size_t j = 0; j < s.vertices.size(); ++j)
      for (int a = 0; a < 2; ++a)
        rebuilt[static_cast<std::size_t>(a)] += loc.bc.alpha[j] * s.vertices[j][static_cast<std::size_t>(a)];
    CHECK(rebuilt[0] == Catch::Approx(x[0]).margin(1e-12));
    CHECK(rebuilt[1] == Catch::Approx(x[1]).margin(1e-12));
    // Barycentric coordinates of a located point always sum to one exactly.
    double asum = 0.0;
    for (double a : loc.bc.alpha) asum += a;
    CHECK(asum == Catch::Approx(1.0).margin(1e-14));
  }
}

TEST_CASE("locate breaks cube ties toward the lowest flat index") {
  const CubeGrid grid(2, 0.5);  // K = 2
  // x sits on the vertical face between cubes (0,0) and (1,0).
  const CubeGrid::Location loc = grid.locate({0.5, 0.25});
  CHECK(loc.cube == 0);
  // Corners belong to the lowest adjacent cube as well.
  CHECK(grid.locate({0.5, 0.5}).cube == 0);
  CHECK(grid.locate({1.0, 1.0}).cube == 3);  // top corner has a single owner
  CHECK_THROWS_AS(grid.locate({1.5, 0.0}), critset::eval_error);
  CHECK_THROWS_AS(grid.locate({0.0, -0.5}), critset::eval_error);
}

TEST_CASE("shared vertices get one key and one position") {
  const CubeGrid grid(2, 1.0 / 3.0);
  // Right face corner of cube (0,0) is the left face corner of cube (1,0).
  const std::vector<std::int64_t> c00 = {0, 0}, c10 = {1, 0};
  const std::vector<int> right = {2, 0}, left = {0, 0};
  CHECK(grid.vertex_key(c00, right) == grid.vertex_key(c10, left));
  const Vec p0 = grid.vertex_position(c00, right);
  const Vec p1 = grid.vertex_position(c10, left);
  CHECK(p0[0] == p1[0]);
  CHECK(p0[1] == p1[1]);

  // Cube centers collide with nothing: distinct cubes, distinct keys.
  std::set<std::uint64_t> keys;
  const std::vector<int> center = {1, 1};
  for (std::int64_t i = 0; i < 3; ++i)
    for (std::int64_t j = 0; j < 3; ++j) keys.insert(grid.vertex_key({i, j}, center));
  CHECK(keys.size() == 9);
}

TEST_CASE("distinct lattice vertices of a fine grid get distinct keys") {
  const CubeGrid grid(3, 1.0 / 5.0);
  std::set<std::uint64_t> keys;
  std::size_t expected = 0;
  for (std::int64_t iota = 0; iota < grid.cube_count(); ++iota) {
    const std::vector<std::int64_t> cube = grid.cube_coords(iota);
    for (const SimplexShape& s : grid.shapes())
      for (const auto& h : s.half) keys.insert(grid.vertex_key(cube, h));
  }
  // Corner lattice (K+1)^3, cube centers K^3, face centers 3 K^2 (K+1).
  expected = 6 * 6 * 6 + 5 * 5 * 5 + 3 * 25 * 6;
  CHECK(keys.size() == expected);
}
