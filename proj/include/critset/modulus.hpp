// Moduli of continuity: closed-form Holder data, tabulated samples, and the
// mesh-size calibration built on top of them.
//
// A modulus here is a nondecreasing function w with w(0) = 0 on
// [0, domain_diameter].  The calibration maps a mesh size delta to
//   beta(delta) = w(sqrt(d) delta) * (1 + sqrt(d) delta + 4 d^(d+1/2) (d+1)^4)
// and solve_delta inverts it, which is what picks the grid for the blended
// approximant.
#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "map.hpp"
#include "util.hpp"

namespace critset {

class Modulus {
 public:
  enum class Kind { holder, tabulated };

  static Modulus holder(double coeff, double alpha, double domain_diameter) {
    if (!(coeff >= 0.0)) throw config_error("modulus coefficient must be >= 0");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw config_error("modulus exponent must lie in (0, 1]");
    if (!(domain_diameter > 0.0)) throw config_error("modulus domain diameter must be positive");
    Modulus m;
    m.kind_ = Kind::holder;
    m.coeff_ = coeff;
    m.alpha_ = alpha;
    m.diameter_ = domain_diameter;
    return m;
  }

  // Knots are (delta, omega) pairs; a leading (0, 0) knot is implied.
  static Modulus tabulated(std::vector<std::pair<double, double>> knots, double domain_diameter,
                           bool lower_estimate = false) {
    if (!(domain_diameter > 0.0)) throw config_error("modulus domain diameter must be positive");
    std::sort(knots.begin(), knots.end());
    if (knots.empty() || knots.front().first > 0.0) knots.insert(knots.begin(), {0.0, 0.0});
    double prev_w = -1.0;
    for (const auto& [s, w] : knots) {
      if (!(s >= 0.0) || !(w >= 0.0)) throw config_error("modulus knots must be nonnegative");
      if (w < prev_w) throw config_error("modulus values must be nondecreasing");
      prev_w = w;
    }
    if (knots.front().second != 0.0) throw config_error("modulus must vanish at 0");
    Modulus m;
    m.kind_ = Kind::tabulated;
    m.knots_ = std::move(knots);
    m.diameter_ = domain_diameter;
    m.lower_estimate_ = lower_estimate;
    return m;
  }

  Kind kind() const { return kind_; }
  double domain_diameter() const { return diameter_; }
  bool lower_estimate() const { return lower_estimate_; }
  double holder_coeff() const { return coeff_; }
  double holder_alpha() const { return alpha_; }
  const std::vector<std::pair<double, double>>& knots() const { return knots_; }

  bool is_zero() const {
    if (kind_ == Kind::holder) return coeff_ == 0.0;
    return knots_.back().second == 0.0;
  }

  // w(s); beyond the last knot a tabulated modulus holds its final value.
  double eval(double s) const {
    if (s <= 0.0) return 0.0;
    if (kind_ == Kind::holder) return coeff_ * std::pow(s, alpha_);
    if (s >= knots_.back().first) return knots_.back().second;
    const auto it = std::upper_bound(
        knots_.begin(), knots_.end(), s,
        [](double v, const std::pair<double, double>& k) { return v < k.first; });
    const auto& [s1, w1] = *it;
    const auto& [s0, w0] = *(it - 1);
    if (s1 == s0) return w1;
    const double t = (s - s0) / (s1 - s0);
    return w0 + t * (w1 - w0);
  }

  // Largest delta in [0, domain_diameter] with w(delta) <= s.  Total on
  // s >= 0; tabulated inversion is piecewise constant on the knots.
  double inverse(double s) const {
    if (!(s >= 0.0)) throw range_error("inverse modulus requires a nonnegative argument");
    if (is_zero()) return diameter_;
    if (kind_ == Kind::holder) {
      const double d = std::pow(s / coeff_, 1.0 / alpha_);
      return std::min(d, diameter_);
    }
    if (knots_.back().second <= s) return diameter_;
    // Largest knot with value <= s; knot 0 has value 0 so one always exists.
    std::size_t lo = 0, hi = knots_.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi + 1) / 2;
      if (knots_[mid].second <= s) lo = mid;
      else hi = mid - 1;
    }
    return knots_[lo].first;
  }

  // Antiderivative of w at t (from 0), exact for both representations.
  double integral(double t) const {
    if (t <= 0.0) return 0.0;
    if (kind_ == Kind::holder) return coeff_ * std::pow(t, 1.0 + alpha_) / (1.0 + alpha_);
    double acc = 0.0;
    for (std::size_t i = 1; i < knots_.size(); ++i) {
      const auto& [s0, w0] = knots_[i - 1];
      const auto& [s1, w1] = knots_[i];
      if (t <= s0) return acc;
      const double hi = std::min(t, s1);
      const double whi = (s1 == s0) ? w1 : w0 + (hi - s0) / (s1 - s0) * (w1 - w0);
      acc += 0.5 * (w0 + whi) * (hi - s0);
      if (t <= s1) return acc;
    }
    return acc + knots_.back().second * (t - knots_.back().first);
  }

  // Sampled subadditivity check: w(a+b) <= w(a) + w(b) + tol.
  // Violations are reported, never repaired.
  int subadditivity_violations(int samples = 256) const {
    int bad = 0;
    for (int i = 1; i <= samples; ++i) {
      for (int j = i; j <= samples; ++j) {
        const double a = diameter_ * i / samples;
        const double b = diameter_ * j / samples;
        if (a + b > diameter_) break;
        if (eval(a + b) > eval(a) + eval(b) + 1e-12) ++bad;
      }
    }
    return bad;
  }

 private:
  Modulus() = default;

  Kind kind_ = Kind::holder;
  double coeff_ = 0.0;
  double alpha_ = 1.0;
  double diameter_ = 1.0;
  bool lower_estimate_ = false;
  std::vector<std::pair<double, double>> knots_;
};

struct SolveResult {
  double delta = 0.0;
  // Set when the modulus vanishes identically: the map is affine, a single
  // patch reproduces it, and no mesh-size equation exists to solve.
  bool critical_set_free = false;
};

// Calibration beta(delta) for dimension d and a modulus of the Jacobian.
class BetaCalibration {
 public:
  BetaCalibration(int d, Modulus modulus_of_jacobian)
      : d_(d), omega_(std::move(modulus_of_jacobian)) {
    if (d_ < 1) throw config_error("dimension must be >= 1");
    sqrt_d_ = std::sqrt(static_cast<double>(d_));
    bracket_ = 4.0 * std::pow(static_cast<double>(d_), d_ + 0.5) *
               int_pow(static_cast<double>(d_ + 1), 4);
  }

  int dim() const { return d_; }
  const Modulus& modulus() const { return omega_; }
  // The constant 4 d^(d+1/2) (d+1)^4 in the bracket; 64 for d = 1.
  double bracket_constant() const { return bracket_; }

  double beta(double delta) const {
    if (!(delta >= 0.0)) throw range_error("beta requires delta >= 0");
    const double s = sqrt_d_ * delta;
    if (s > omega_.domain_diameter() * (1.0 + 1e-12))
      throw range_error("beta: sqrt(d)*delta = " + std::to_string(s) +
                        " exceeds the modulus domain diameter " +
                        std::to_string(omega_.domain_diameter()));
    return omega_.eval(s) * (1.0 + s + bracket_);
  }

  // Largest delta in [0, 1] with beta(delta) <= eps.  beta is continuous and
  // nondecreasing, so sup-bisection lands on the largest solution of
  // beta(delta) = eps, including on plateaus.
  SolveResult solve_delta(double eps, double tol_rel = 1e-10) const {
    if (!(eps > 0.0)) throw range_error("solve_delta requires eps > 0");
    if (omega_.is_zero()) return {1.0, true};
    const double beta_one = beta(1.0);
    if (eps > beta_one)
      throw range_error("mesh coarser than domain: eps = " + std::to_string(eps) +
                        " exceeds beta(1) = " + std::to_string(beta_one));
    double lo = 0.0, hi = 1.0;
    if (beta_one <= eps) return {1.0, false};
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (beta(mid) <= eps) lo = mid;
      else hi = mid;
    }
    const double achieved = beta(lo);
    if (std::abs(achieved - eps) > tol_rel * eps + 1e-300) {
      // A genuine jump would violate continuity of beta; flag it loudly.
      throw internal_error("solve_delta failed to meet its tolerance");
    }
    return {lo, false};
  }

 private:
  int d_;
  Modulus omega_;
  double sqrt_d_ = 1.0;
  double bracket_ = 0.0;
};

// Sampled lower estimate of the modulus of continuity of Df on the unit cube.
// Pairs are grid neighbors along axes and the main diagonal at the largest
// step that keeps them within each probe distance, plus seeded random pairs.
// An empty probe list selects a geometric ladder from one grid step up to
// the cube diameter; probes below the grid step would see no pairs at all.
inline Modulus estimate_modulus_of_jacobian(const C1Map& f, int grid_resolution,
                                            std::vector<double> probe_deltas,
                                            std::uint64_t seed = 0) {
  const int d = f.dim_in();
  const double diam = std::sqrt(static_cast<double>(d));
  if (grid_resolution < 2) throw config_error("grid resolution must be >= 2");
  if (probe_deltas.empty()) {
    const double lo = std::min(1.0 / (grid_resolution - 1), diam);
    const int count = 24;
    for (int i = 0; i < count; ++i) {
      const double t = static_cast<double>(i) / (count - 1);
      probe_deltas.push_back(lo * std::pow(diam / lo, t));
    }
    probe_deltas.back() = diam;
  }
  for (double p : probe_deltas)
    if (!(p > 0.0 && p <= diam * (1.0 + 1e-12)))
      throw range_error("probe deltas must lie in (0, sqrt(d)]");
  std::sort(probe_deltas.begin(), probe_deltas.end());

  const int n = grid_resolution;
  std::int64_t total = 1;
  for (int i = 0; i < d; ++i) {
    total *= n;
    if (total > 4'000'000) throw config_error("modulus estimation grid too large");
  }

  // Cache Jacobians at all lattice points.
  std::vector<Mat> jac(static_cast<std::size_t>(total));
  parallel_for(total, [&](std::int64_t idx) {
    Vec x(d);
    std::int64_t rem = idx;
    for (int a = 0; a < d; ++a) {
      x[a] = static_cast<double>(rem % n) / (n - 1);
      rem /= n;
    }
    jac[static_cast<std::size_t>(idx)] = f.jacobian(x);
  });

  const auto index_of = [&](const std::vector<int>& c) {
    std::int64_t idx = 0;
    for (int a = d - 1; a >= 0; --a) idx = idx * n + c[a];
    return idx;
  };

  std::vector<double> values(probe_deltas.size(), 0.0);
  parallel_for(static_cast<std::int64_t>(probe_deltas.size()), [&](std::int64_t pi) {
    const double delta = probe_deltas[static_cast<std::size_t>(pi)];
    const double h = 1.0 / (n - 1);
    double best = 0.0;
    const auto consider = [&](std::int64_t i, std::int64_t j) {
      const double dist = frobenius_dist(jac[static_cast<std::size_t>(i)],
                                         jac[static_cast<std::size_t>(j)]);
      best = std::max(best, dist);
    };

    // Axis-aligned pairs at the widest admissible step.
    const int step_axis = static_cast<int>(std::floor(delta / h + 1e-12));
    if (step_axis >= 1) {
      std::vector<int> c(d, 0);
      for (std::int64_t idx = 0; idx < static_cast<std::int64_t>(jac.size()); ++idx) {
        std::int64_t rem = idx;
        for (int a = 0; a < d; ++a) {
          c[a] = static_cast<int>(rem % n);
          rem /= n;
        }
        for (int a = 0; a < d; ++a) {
          if (c[a] + step_axis < n) {
            std::vector<int> c2 = c;
            c2[a] += step_axis;
            consider(idx, index_of(c2));
          }
        }
      }
    }

    // Main-diagonal pairs.
    const int step_diag = static_cast<int>(std::floor(delta / (h * std::sqrt(double(d))) + 1e-12));
    if (step_diag >= 1) {
      std::vector<int> c(d, 0);
      for (std::int64_t idx = 0; idx < static_cast<std::int64_t>(jac.size()); ++idx) {
        std::int64_t rem = idx;
        bool ok = true;
        for (int a = 0; a < d; ++a) {
          c[a] = static_cast<int>(rem % n);
          rem /= n;
          ok = ok && (c[a] + step_diag < n);
        }
        if (ok) {
          std::vector<int> c2 = c;
          for (int a = 0; a < d; ++a) c2[a] += step_diag;
          consider(idx, index_of(c2));
        }
      }
    }

    // Seeded random lattice pairs within the probe distance.
    std::mt19937_64 rng(mix_seed(seed, 0x6d6f64ull + static_cast<std::uint64_t>(pi)));
    std::uniform_int_distribution<int> coord(0, n - 1);
    const int max_off = std::max(1, step_axis);
    std::uniform_int_distribution<int> off(-max_off, max_off);
    for (int r = 0; r < 10 * n; ++r) {
      std::vector<int> c(d), c2(d);
      double norm2 = 0.0;
      bool ok = true;
      for (int a = 0; a < d; ++a) {
        c[a] = coord(rng);
        const int o = off(rng);
        c2[a] = c[a] + o;
        norm2 += static_cast<double>(o) * o;
        ok = ok && (c2[a] >= 0 && c2[a] < n);
      }
      if (!ok || norm2 == 0.0) continue;
      if (std::sqrt(norm2) * h > delta) continue;
      consider(index_of(c), index_of(c2));
    }

    values[static_cast<std::size_t>(pi)] = best;
  }, 1);

  // Running maximum enforces monotonicity in delta.
  for (std::size_t i = 1; i < values.size(); ++i)
    values[i] = std::max(values[i], values[i - 1]);

  std::vector<std::pair<double, double>> knots;
  knots.reserve(probe_deltas.size());
  for (std::size_t i = 0; i < probe_deltas.size(); ++i)
    knots.emplace_back(probe_deltas[i], values[i]);
  return Modulus::tabulated(std::move(knots), diam, /*lower_estimate=*/true);
}

}  // namespace critset
