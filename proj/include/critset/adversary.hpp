// The oscillatory lower-bound construction.  A profile beta on [0,1] is a
// train of bump blocks: block n holds bumps of width 4*ell_n with
// ell_n = 2^(-n^2-n-2), starting at s_1 = 0 and s_n = 1 - 2^-n for n >= 2.
// A block holds as many whole bumps as fit before the next block starts,
// capped at 2^(n^2); with these widths that is 2 bumps for n = 1 (leaving the
// gap (1/2, 3/4) where beta = 0) and 2^(n^2-1) bumps for n >= 2.  Every s
// lies in at most one bump, so evaluation locates the block and bump index
// and applies the closed form: no series truncation.
//
// The adversarial map integrates the profile into its first component:
// f(x) = (int_0^{x1} beta, x2, ..., xm).  Any competitor g within C1 distance
// eps keeps a sign change of det of the leading m x m block of Dg across
// every monotone span where |beta| reaches omega(ell_n)/2 >= gamma*eps at the
// endpoints, which is what the certificate counts.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <vector>

#include "linalg.hpp"
#include "map.hpp"
#include "modulus.hpp"
#include "util.hpp"

namespace critset {

class OscillatoryFunction {
 public:
  OscillatoryFunction(Modulus omega, int d, int m, int n_max = 6)
      : omega_(std::move(omega)), d_(d), m_(m), n_max_(n_max) {
    if (d < 1 || d > 8 || m < 1 || m > d)
      throw config_error("oscillatory profile: needs 1 <= m <= d <= 8");
    if (n_max < 1 || n_max > 7)
      throw config_error("oscillatory profile: depth must be between 1 and 7");
    if (omega_.is_zero())
      throw config_error("oscillatory profile: the modulus must not be identically zero");
  }

  int domain_dim() const { return d_; }
  int range_dim() const { return m_; }
  int depth() const { return n_max_; }
  const Modulus& modulus() const { return omega_; }

  static double ell(int n) { return std::ldexp(1.0, -(n * n + n + 2)); }
  static double block_start(int n) { return n <= 1 ? 0.0 : 1.0 - std::ldexp(1.0, -n); }
  static double block_end(int n) { return 1.0 - std::ldexp(1.0, -(n + 1)); }

  // Whole bumps that fit in block n: min(2^(n^2), block width / bump width).
  static std::int64_t bumps_in_block(int n) {
    if (n == 1) return 2;
    return std::int64_t{1} << (n * n - 1);
  }

  double amplitude(int n) const { return 0.5 * omega_.eval(ell(n)); }
  double peak(int n, std::int64_t k) const {
    return block_start(n) + static_cast<double>(4 * k + 1) * ell(n);
  }
  double trough(int n, std::int64_t k) const {
    return block_start(n) + static_cast<double>(4 * k + 3) * ell(n);
  }

  // One bump c_n on [0, 4*ell]: rises to omega(ell)/2 at ell, falls through 0
  // at 2*ell to -omega(ell)/2 at 3*ell, and returns to 0; odd about 2*ell.
  double bump(int n, double u) const {
    const double l = ell(n);
    if (u <= 0.0 || u >= 4.0 * l) return 0.0;
    if (u < l) return 0.5 * omega_.eval(u);
    if (u <= 2.0 * l) return 0.5 * omega_.eval(2.0 * l - u);
    if (u <= 3.0 * l) return -0.5 * omega_.eval(u - 2.0 * l);
    return -0.5 * omega_.eval(4.0 * l - u);
  }

  // int_0^u c_n: odd symmetry gives C(2l + t) = C(2l - t), and the whole bump
  // integrates to zero.  Exact via the modulus's closed-form integral.
  double bump_integral(int n, double u) const {
    const double l = ell(n);
    if (u <= 0.0 || u >= 4.0 * l) return 0.0;
    if (u > 2.0 * l) u = 4.0 * l - u;
    if (u <= l) return 0.5 * omega_.integral(u);
    return omega_.integral(l) - 0.5 * omega_.integral(2.0 * l - u);
  }

  struct Locate {
    int block = 0;
    std::int64_t bump = 0;
    double offset = 0.0;  // position within the bump's [0, 4*ell] support
    bool active = false;
  };

  Locate locate(double s) const {
    if (s < 0.0 || s > 1.0)
      throw range_error("oscillatory profile evaluated outside [0, 1]");
    if (s >= block_end(n_max_)) return {};
    int n = 1;
    while (n < n_max_ && s >= block_end(n)) ++n;
    const double four_l = 4.0 * ell(n);
    const double u_block = s - block_start(n);
    const auto k = static_cast<std::int64_t>(std::floor(u_block / four_l));
    if (k < 0 || k >= bumps_in_block(n)) return {};
    return {n, k, u_block - static_cast<double>(k) * four_l, true};
  }

  double beta(double s) const {
    const Locate loc = locate(s);
    return loc.active ? bump(loc.block, loc.offset) : 0.0;
  }

  // F(x) = int_0^x beta: complete bumps cancel, so only the bump containing x
  // contributes.
  double beta_integral(double x) const {
    const Locate loc = locate(x);
    return loc.active ? bump_integral(loc.block, loc.offset) : 0.0;
  }

  double beta_ref() const { return beta(std::ldexp(1.0, -5)); }

  double gamma() const {
    const double m3 = static_cast<double>(m_) * m_ * m_;
    return 2.0 * m3 * int_pow(beta_ref(), m_ - 1);
  }

  // Largest n <= depth with m^3 beta_ref^(m-1) eps <= omega(ell_n)/2, else 0.
  int n0_for(double eps) const {
    const double m3 = static_cast<double>(m_) * m_ * m_;
    const double lhs = m3 * int_pow(beta_ref(), m_ - 1) * eps;
    int n0 = 0;
    for (int n = 1; n <= n_max_; ++n)
      if (lhs <= amplitude(n)) n0 = n;
    return n0;
  }

  std::int64_t count_bound(int n0) const {
    std::int64_t sum = 0;
    for (int n = 1; n <= std::min(n0, n_max_); ++n) sum += std::int64_t{1} << (n * n);
    return sum;
  }

  // A monotone span of beta whose endpoint values are +/- omega(ell)/2 (or the
  // matching amplitudes of adjacent blocks, for bridges across the quiet gap).
  struct Span {
    double lo = 0.0;
    double hi = 0.0;
    int block = 0;
  };

  // Down-spans [peak, trough] and up-spans [trough, next peak] within each
  // block, plus one bridge from each block's last trough to the next block's
  // first peak.  Exhaustive total is count_bound(n0) + 1; blocks too large to
  // enumerate contribute a seeded sample of their down-spans instead.
  std::int64_t span_total(int n0) const { return n0 <= 0 ? 0 : count_bound(n0) + 1; }

  std::vector<Span> spans(int n0, std::int64_t max_total = 100000,
                          std::uint64_t seed = 1) const {
    std::vector<Span> out;
    if (n0 <= 0) return out;
    require(n0 <= n_max_, "spans: block depth exceeds the configured truncation");
    const std::int64_t per_block = std::max<std::int64_t>(16, max_total / n0);
    for (int n = 1; n <= n0; ++n) {
      const std::int64_t nb = bumps_in_block(n);
      if (2 * nb - 1 <= per_block) {
        for (std::int64_t k = 0; k < nb; ++k) {
          out.push_back({peak(n, k), trough(n, k), n});
          if (k + 1 < nb) out.push_back({trough(n, k), peak(n, k + 1), n});
        }
      } else {
        std::mt19937_64 rng(mix_seed(seed, 0x5ba0 + static_cast<std::uint64_t>(n)));
        std::uniform_int_distribution<std::int64_t> pick(0, nb - 1);
        std::set<std::int64_t> ks;
        while (static_cast<std::int64_t>(ks.size()) < per_block) ks.insert(pick(rng));
        for (std::int64_t k : ks) out.push_back({peak(n, k), trough(n, k), n});
      }
      if (n < n0) out.push_back({trough(n, nb - 1), peak(n + 1, 0), n});
    }
    return out;
  }

 private:
  Modulus omega_;
  int d_;
  int m_;
  int n_max_;
};

// f(x) = (int_0^{x1} beta, x2, ..., xm); Df has beta(x1) in the corner and an
// identity block below, so det of its leading m x m block is beta(x1) exactly.
class AdversarialMap final : public C1Map {
 public:
  explicit AdversarialMap(std::shared_ptr<const OscillatoryFunction> profile)
      : profile_(std::move(profile)) {
    require(profile_ != nullptr, "adversarial map: missing profile");
  }

  int dim_in() const override { return profile_->domain_dim(); }
  int dim_out() const override { return profile_->range_dim(); }
  const OscillatoryFunction& profile() const { return *profile_; }

  Vec value(const Vec& x) const override {
    check(x);
    Vec y(static_cast<std::size_t>(dim_out()));
    y[0] = profile_->beta_integral(clamp01(x[0]));
    for (int i = 1; i < dim_out(); ++i) y[static_cast<std::size_t>(i)] = x[static_cast<std::size_t>(i)];
    return y;
  }

  Mat jacobian(const Vec& x) const override {
    check(x);
    Mat j(dim_out(), dim_in());
    j(0, 0) = profile_->beta(clamp01(x[0]));
    for (int i = 1; i < dim_out(); ++i) j(i, i) = 1.0;
    return j;
  }

 private:
  void check(const Vec& x) const {
    require(static_cast<int>(x.size()) == dim_in(), "adversarial map: bad point dimension");
  }
  static double clamp01(double t) {
    if (t < -1e-9 || t > 1.0 + 1e-9)
      throw eval_error("adversarial map evaluated outside the unit cube");
    return std::clamp(t, 0.0, 1.0);
  }

  std::shared_ptr<const OscillatoryFunction> profile_;
};

struct LowerBoundCertificate {
  double epsilon = 0.0;
  double gamma = 0.0;
  double psi_gamma_eps = 0.0;       // inverse modulus at gamma * epsilon
  int n0 = 0;
  std::int64_t count_bound = 0;     // sum over n <= n0 of 2^(n^2)
  double formula_bound = 0.0;       // (1/(16 Psi)) 2^(-2 sqrt(log2(1/Psi)))
  double eps_cutoff_profile = 0.0;  // beta(2^-5) / gamma
  double eps_cutoff_dim = 0.0;      // 1 / d
};

inline LowerBoundCertificate lower_bound_N(const OscillatoryFunction& profile, double eps) {
  const double bref = profile.beta_ref();
  if (!(bref > 0.0))
    throw range_error("lower bound: the profile amplitude vanishes at the reference scale");
  const double gam = profile.gamma();
  const double cutoff_profile = bref / gam;
  const double cutoff_dim = 1.0 / profile.domain_dim();
  if (!(eps > 0.0) || eps >= std::min(cutoff_profile, cutoff_dim)) {
    std::ostringstream msg;
    msg << "lower bound: epsilon = " << eps << " outside (0, min(" << cutoff_profile << ", "
        << cutoff_dim << "))";
    throw range_error(msg.str());
  }
  const double psi = profile.modulus().inverse(gam * eps);
  if (!(psi > 0.0))
    throw range_error("lower bound: inverse modulus vanished; nothing to certify");

  LowerBoundCertificate cert;
  cert.epsilon = eps;
  cert.gamma = gam;
  cert.psi_gamma_eps = psi;
  cert.n0 = profile.n0_for(eps);
  require(cert.n0 >= 1, "lower bound: no admissible block despite in-range epsilon");
  cert.count_bound = profile.count_bound(cert.n0);
  const double lg = std::max(0.0, std::log2(1.0 / psi));
  cert.formula_bound = std::pow(2.0, -2.0 * std::sqrt(lg)) / (16.0 * psi);
  cert.eps_cutoff_profile = cutoff_profile;
  cert.eps_cutoff_dim = cutoff_dim;
  return cert;
}

inline double leading_block_det(const Mat& jac, int m) {
  Mat a(m, m);
  for (int i = 0; i < m; ++i)
    for (int c = 0; c < m; ++c) a(i, c) = jac(i, c);
  return det(a);
}

struct SheetCount {
  std::int64_t detected = 0;       // min over lines of spans with a sign change
  std::int64_t spans_checked = 0;
  std::int64_t spans_total = 0;
  int n0 = 0;
  bool exhaustive = true;
};

// For each line (d-1 coordinates frozen), sample det of the leading m x m
// block of Dg on 64 Chebyshev nodes per span and count spans where the sign
// flips; a span counts once however many crossings it holds.
inline SheetCount count_critical_sheets(const C1Map& g, const OscillatoryFunction& profile,
                                        double eps, int lines, std::uint64_t seed = 1,
                                        std::int64_t max_spans = 100000) {
  const int d = g.dim_in();
  const int m = g.dim_out();
  require(d == profile.domain_dim() && m == profile.range_dim(),
          "count_critical_sheets: dimension mismatch with the profile");

  SheetCount out;
  out.n0 = profile.n0_for(eps);
  out.spans_total = profile.span_total(out.n0);
  if (out.n0 == 0) return out;
  const std::vector<OscillatoryFunction::Span> spans = profile.spans(out.n0, max_spans, seed);
  out.spans_checked = static_cast<std::int64_t>(spans.size());
  out.exhaustive = out.spans_checked == out.spans_total;

  const int nlines = d == 1 ? 1 : std::max(1, lines);
  constexpr int kNodes = 64;
  std::vector<std::int64_t> per_line(static_cast<std::size_t>(nlines), 0);
  parallel_for(nlines, [&](std::int64_t line) {
    std::mt19937_64 rng(mix_seed(seed, 0x11e5 + static_cast<std::uint64_t>(line)));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    Vec x(static_cast<std::size_t>(d), 0.0);
    for (int a = 1; a < d; ++a) x[static_cast<std::size_t>(a)] = uni(rng);
    const auto det_at = [&](double s) {
      x[0] = s;
      return leading_block_det(g.jacobian(x), m);
    };
    std::int64_t found = 0;
    for (const auto& span : spans) {
      const double mid = 0.5 * (span.lo + span.hi);
      const double half = 0.5 * (span.hi - span.lo);
      double prev = det_at(span.lo);
      bool hit = prev == 0.0;
      for (int i = 1; i < kNodes && !hit; ++i) {
        const double node =
            mid - half * std::cos(std::numbers::pi * static_cast<double>(i) / (kNodes - 1));
        const double cur = det_at(node);
        if (cur == 0.0 || (prev < 0.0) != (cur < 0.0)) hit = true;
        prev = cur;
      }
      if (hit) ++found;
    }
    per_line[static_cast<std::size_t>(line)] = found;
  }, 1);

  out.detected = *std::min_element(per_line.begin(), per_line.end());
  return out;
}

}  // namespace critset
