#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <critset/expr.hpp>
#include <critset/modulus.hpp>

using critset::BetaCalibration;
using critset::Modulus;
using critset::SolveResult;

TEST_CASE("holder evaluation, inversion, integral") {
  const Modulus w = Modulus::holder(2.0, 0.5, 2.0);
  CHECK(w.eval(0.25) == Catch::Approx(1.0).margin(1e-15));
  CHECK(w.eval(0.0) == 0.0);
  CHECK(w.eval(-1.0) == 0.0);

  // inverse(s) = (s/C)^(1/alpha), capped at the domain diameter.
  CHECK(w.inverse(1.0) == Catch::Approx(0.25).margin(1e-15));
  CHECK(w.inverse(1e9) == 2.0);
  for (double s : {0.1, 0.5, 1.3, 2.0})
    CHECK(w.eval(w.inverse(s)) == Catch::Approx(s).epsilon(1e-12));

  // integral of C t^a is C t^(1+a) / (1+a): here 2 * 0.8^1.5 / 1.5.
  CHECK(w.integral(0.8) == Catch::Approx(2.0 * std::pow(0.8, 1.5) / 1.5).epsilon(1e-14));
}

TEST_CASE("tabulated evaluation interpolates and saturates") {
  const Modulus w = Modulus::tabulated({{0.1, 0.05}, {0.5, 0.3}, {1.0, 0.3}}, 1.5);
  CHECK(w.eval(0.05) == Catch::Approx(0.025).margin(1e-15));  // through the implied origin
  CHECK(w.eval(0.1) == Catch::Approx(0.05).margin(1e-15));
  CHECK(w.eval(0.3) == Catch::Approx(0.175).margin(1e-15));
  CHECK(w.eval(0.75) == Catch::Approx(0.3).margin(1e-15));
  CHECK(w.eval(1.2) == 0.3);   // constant beyond the last knot
  CHECK(w.eval(99.0) == 0.3);  // never extrapolated upward
}

TEST_CASE("tabulated inversion returns the largest admissible knot") {
  const Modulus w = Modulus::tabulated({{0.1, 0.05}, {0.5, 0.3}, {1.0, 0.3}}, 1.5);
  CHECK(w.inverse(0.04) == 0.0);   // below the first knot value
  CHECK(w.inverse(0.05) == 0.1);
  CHECK(w.inverse(0.2) == 0.1);
  CHECK(w.inverse(0.3) == 1.5);    // >= max value: the whole domain qualifies
  CHECK(w.inverse(0.29) == 0.1);
  CHECK_THROWS_AS(w.inverse(-0.1), critset::range_error);
}

TEST_CASE("tabulated integral is the exact trapezoid sum") {
  const Modulus w = Modulus::tabulated({{0.2, 0.1}, {0.6, 0.5}}, 1.0);
  // Hand-computed pieces: triangle to 0.2, trapezoid to 0.6, constant after.
  CHECK(w.integral(0.2) == Catch::Approx(0.01).margin(1e-16));
  CHECK(w.integral(0.6) == Catch::Approx(0.01 + 0.5 * (0.1 + 0.5) * 0.4).margin(1e-15));
  CHECK(w.integral(1.0) == Catch::Approx(0.13 + 0.5 * 0.4).margin(1e-15));
  // Mid-segment cut: value at 0.4 is 0.3, trapezoid with that endpoint.
  CHECK(w.integral(0.4) == Catch::Approx(0.01 + 0.5 * (0.1 + 0.3) * 0.2).margin(1e-15));
  CHECK(w.integral(0.0) == 0.0);
}

TEST_CASE("vanishing modulus conventions") {
  const Modulus hz = Modulus::holder(0.0, 1.0, 2.0);
  CHECK(hz.is_zero());
  CHECK(hz.inverse(0.0) == 2.0);
  const Modulus tz = Modulus::tabulated({{1.0, 0.0}}, 2.0);
  CHECK(tz.is_zero());

  const BetaCalibration cal(2, hz);
  const SolveResult sr = cal.solve_delta(123.0);
  CHECK(sr.delta == 1.0);
  CHECK(sr.critical_set_free);
}

TEST_CASE("modulus constructor rejections") {
  CHECK_THROWS_AS(Modulus::holder(-1.0, 1.0, 1.0), critset::config_error);
  CHECK_THROWS_AS(Modulus::holder(1.0, 0.0, 1.0), critset::config_error);
  CHECK_THROWS_AS(Modulus::holder(1.0, 1.5, 1.0), critset::config_error);
  CHECK_THROWS_AS(Modulus::holder(1.0, 1.0, 0.0), critset::config_error);
  // Decreasing values are rejected outright, never silently repaired.
  CHECK_THROWS_AS(Modulus::tabulated({{0.1, 0.5}, {0.2, 0.4}}, 1.0), critset::config_error);
  CHECK_THROWS_AS(Modulus::tabulated({{0.0, 0.5}}, 1.0), critset::config_error);
}

TEST_CASE("subadditivity screening") {
  CHECK(Modulus::holder(1.0, 1.0, 2.0).subadditivity_violations() == 0);
  CHECK(Modulus::holder(3.0, 0.5, 2.0).subadditivity_violations() == 0);
  // A convex profile w(s) = s^2 (tabulated densely) is superadditive.
  std::vector<std::pair<double, double>> knots;
  for (int i = 1; i <= 64; ++i) {
    const double s = 2.0 * i / 64.0;
    knots.push_back({s, s * s});
  }
  CHECK(Modulus::tabulated(knots, 2.0).subadditivity_violations() > 0);
}

TEST_CASE("bracket constants for low dimensions") {
  CHECK(BetaCalibration(1, Modulus::holder(1, 1, 1)).bracket_constant() == 64.0);
  CHECK(BetaCalibration(2, Modulus::holder(1, 1, 2)).bracket_constant() ==
        Catch::Approx(1832.8207768355312).epsilon(1e-15));
  CHECK(BetaCalibration(3, Modulus::holder(1, 1, 2)).bracket_constant() ==
        Catch::Approx(4.0 * std::pow(3.0, 3.5) * 256.0).epsilon(1e-15));
}

TEST_CASE("mesh-size solve agrees with the closed-form quadratic root") {
  // d = 1 with the identity modulus: beta(t) = t (1 + t + 64) = t^2 + 65 t,
  // so beta(delta) = eps has the positive root (-65 + sqrt(65^2 + 4 eps))/2.
  const Modulus w = Modulus::holder(1.0, 1.0, 1.0);
  const BetaCalibration cal(1, w);
  const double eps = 6.6;
  const double root = (-65.0 + std::sqrt(65.0 * 65.0 + 4.0 * eps)) / 2.0;
  const SolveResult sr = cal.solve_delta(eps);
  CHECK_FALSE(sr.critical_set_free);
  CHECK(sr.delta == Catch::Approx(root).epsilon(1e-9));
  CHECK(cal.beta(sr.delta) == Catch::Approx(eps).epsilon(1e-9));
  // The root is near 0.1014; anything outside [0.1010, 0.1018] is wrong.
  CHECK(sr.delta > 0.1010);
  CHECK(sr.delta < 0.1018);
}

TEST_CASE("beta is monotone and anchored at zero") {
  const BetaCalibration cal(2, Modulus::holder(1.5, 0.7, 2.0));
  CHECK(cal.beta(0.0) == 0.0);
  double prev = 0.0;
  for (int i = 1; i <= 40; ++i) {
    const double b = cal.beta(i / 40.0);
    CHECK(b >= prev);
    prev = b;
  }
}

TEST_CASE("mesh-size solve range errors") {
  const BetaCalibration cal(1, Modulus::holder(1.0, 1.0, 1.0));
  CHECK_THROWS_AS(cal.solve_delta(0.0), critset::range_error);
  CHECK_THROWS_AS(cal.solve_delta(-2.0), critset::range_error);
  CHECK_THROWS_WITH(cal.solve_delta(1e9),
                    Catch::Matchers::ContainsSubstring("mesh coarser than domain"));
  // beta caps delta at 1, so sqrt(d) * 1 must fit inside the modulus domain.
  const BetaCalibration tight(4, Modulus::holder(1.0, 1.0, 1.0));
  CHECK_THROWS_AS(tight.beta(1.0), critset::range_error);
}

TEST_CASE("solve tracks a tabulated kink exactly") {
  // The modulus is flat on [0.2, 0.4], so beta grows only through its
  // polynomial factor there; the sup convention must still land on the
  // exact preimage of eps = beta(0.4).
  const Modulus w = Modulus::tabulated({{0.2, 0.1}, {0.4, 0.1}, {1.0, 0.5}}, 1.0);
  const BetaCalibration cal(1, w);
  const double eps = cal.beta(0.4);
  const SolveResult sr = cal.solve_delta(eps);
  CHECK(sr.delta == Catch::Approx(0.4).epsilon(1e-9));
}

TEST_CASE("sampled jacobian modulus underestimates a known lipschitz profile") {
  // f(x) = x1^2/2 has Df = x1, so |Df(x) - Df(y)| = |x1 - y1| <= |x - y|
  // with equality along axis 1: the true modulus is the identity.
  const critset::FunctionDef f("x1^2/2", 1);
  const Modulus est = critset::estimate_modulus_of_jacobian(f, 512, {0.1, 0.2, 0.4});
  CHECK(est.lower_estimate());
  CHECK(est.kind() == Modulus::Kind::tabulated);
  for (double s : {0.1, 0.2, 0.4}) {
    CHECK(est.eval(s) <= s + 1e-12);       // a lower estimate never overshoots
    CHECK(est.eval(s) >= s - 2.0 / 511.0);  // and the grid gets within one step
  }
}

TEST_CASE("sampled jacobian modulus is monotone by construction") {
  const critset::FunctionDef f("sin(3*x1)*cos(3*x2)", 2);
  const Modulus est = critset::estimate_modulus_of_jacobian(f, 48, {0.1, 0.3, 0.6, 1.0});
  double prev = 0.0;
  for (const auto& [s, v] : est.knots()) {
    CHECK(v >= prev);
    prev = v;
  }
}
