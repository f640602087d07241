#pragma once

// Smoothed absolute values built from a modulus of continuity rho with
// a non-integrable 1/rho^2 at zero: the decreasing sequence s_k, bump
// functions psi_k, and phi_k(t) = int_0^|t| int_0^s psi_k.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "degsde/error.hpp"
#include "degsde/expr.hpp"
#include "degsde/quadrature.hpp"

namespace degsde {

struct Modulus {
  std::string name;
  std::function<double(double)> rho;
  double epsilon = 1.0;
  /// Closed form of int_a^b rho(u)^-2 du, when known.
  std::function<double(double, double)> inverse_integral;

  double inv_sq(double u) const {
    const double r = rho(u);
    return 1.0 / (r * r);
  }

  /// int_a^b rho^-2 for 0 < a <= b. The tolerance is relative once the
  /// integral exceeds 1.
  double integral(double a, double b, double tol = 1e-12) const {
    if (a == b) return 0.0;
    if (inverse_integral) return inverse_integral(a, b);
    auto g = [this](double v) {
      const double u = std::exp(v);
      return inv_sq(u) * u;
    };
    const double va = std::log(a), vb = std::log(b);
    const double rough = quad::adaptive_simpson(g, va, vb, 1e-3, 20).value;
    return quad::integrate(g, va, vb, tol * std::max(1.0, std::fabs(rough)));
  }
};

/// rho(u) = u^alpha. With `closed_form` the inverse-square integral is exact.
inline Modulus power_modulus(double alpha, bool closed_form = false, double epsilon = 1.0) {
  Modulus m;
  m.name = "u^" + format_double(alpha);
  m.epsilon = epsilon;
  if (alpha == 0.5)
    m.rho = [](double u) { return std::sqrt(u); };
  else if (alpha == 1.0)
    m.rho = [](double u) { return u; };
  else
    m.rho = [alpha](double u) { return std::pow(u, alpha); };
  if (closed_form) {
    if (alpha == 0.5)
      m.inverse_integral = [](double a, double b) { return std::log(b / a); };
    else
      m.inverse_integral = [alpha](double a, double b) {
        const double e = 1.0 - 2.0 * alpha;
        return (std::pow(b, e) - std::pow(a, e)) / e;
      };
  }
  return m;
}

inline Modulus sqrt_modulus(bool closed_form = false) { return power_modulus(0.5, closed_form); }
inline Modulus linear_modulus(bool closed_form = false) { return power_modulus(1.0, closed_form); }

/// rho given as an expression in x1.
inline Modulus expr_modulus(const Expr& e, double epsilon = 1.0) {
  Modulus m;
  m.name = e.str();
  m.epsilon = epsilon;
  m.rho = [e](double u) { return e.evaluate(std::span<const double>(&u, 1)); };
  return m;
}

struct DivergenceProbe {
  std::vector<double> deltas;    // lower limits 1e-2 .. 1e-8
  std::vector<double> integrals; // int_delta^1 rho^-2
  bool diverges = false;
};

/// Numerical evidence that int_0 rho^-2 = infinity: partial integrals over
/// [delta, 1] must grow monotonically and the per-decade increments must not
/// shrink geometrically (ratio >= 1/1.5 between successive decades).
inline DivergenceProbe probe_divergence(const Modulus& m) {
  DivergenceProbe p;
  for (int j = 2; j <= 8; ++j) {
    const double d = std::pow(10.0, -j);
    p.deltas.push_back(d);
    p.integrals.push_back(m.integral(d, 1.0));
  }
  bool ok = true;
  for (std::size_t j = 1; j < p.integrals.size(); ++j) {
    if (!(p.integrals[j] > p.integrals[j - 1])) ok = false;
    if (j >= 2) {
      const double inc = p.integrals[j] - p.integrals[j - 1];
      const double prev = p.integrals[j - 1] - p.integrals[j - 2];
      if (!(inc >= prev / 1.5)) ok = false;
    }
  }
  p.diverges = ok;
  return p;
}

/// s_0 = 1 > s_1 > ... > s_K with int_{s_k}^{s_{k-1}} rho^-2 = k, each s_k
/// found by bisection on log s_k.
inline std::vector<double> build_sk(const Modulus& m, std::size_t K) {
  if (!probe_divergence(m).diverges)
    throw Error(ErrorKind::DivergenceProbeFailed, "int_0 rho^-2 does not appear to diverge for rho = " + m.name);
  std::vector<double> s{1.0};
  s.reserve(K + 1);
  for (std::size_t k = 1; k <= K; ++k) {
    const double upper = s.back();
    const double target = static_cast<double>(k);
    // Bracket the root in log space.
    double lo_log = std::log(upper);
    double hi_log = lo_log;  // I(hi) = 0 < target
    double step = 1.0;
    for (;;) {
      lo_log = hi_log - step;
      if (lo_log < std::log(1e-300))
        throw Error(ErrorKind::QuadratureFailure, "s_" + std::to_string(k) + " underflows 1e-300");
      if (m.integral(std::exp(lo_log), upper) >= target) break;
      hi_log = lo_log;
      step *= 2.0;
    }
    for (int it = 0; it < 200 && hi_log - lo_log > 1e-15 * std::max(1.0, std::fabs(lo_log)); ++it) {
      const double mid = 0.5 * (lo_log + hi_log);
      if (m.integral(std::exp(mid), upper) >= target)
        lo_log = mid;
      else
        hi_log = mid;
    }
    s.push_back(std::exp(0.5 * (lo_log + hi_log)));
  }
  return s;
}

/// Trapezoidal plateau h(m) in the rho^-2 mass coordinate m in [0, k]: ramps of
/// width `ramp` at both ends, height 1 in between.
struct Bump {
  std::size_t k = 0;
  double lo = 0.0;  // s_k
  double hi = 0.0;  // s_{k-1}
  double mass_total = 0.0;  // int_lo^hi rho^-2 (= k up to quadrature error)
  double ramp = 0.0;

  double h(double m) const {
    if (m <= 0.0 || m >= mass_total) return 0.0;
    return std::min(1.0, std::min(m, mass_total - m) / ramp);
  }

  /// int_0^m h
  double h_integral(double m) const {
    const double L = mass_total;
    const double w = ramp;
    if (m <= 0.0) return 0.0;
    if (m >= L) m = L;
    auto up = [w](double x) { return x * x / (2.0 * w); };
    if (m <= w) return up(m);
    const double plateau_end = L - w;
    if (m <= plateau_end) return w / 2.0 + (m - w);
    return (L - w) - up(L - m);
  }
};

/// Calibrates the ramp width by bisection so that int psi_k = 1, where
/// psi_k(s) = h(m(s)) * 2 / (k rho(s)^2). The mass as a function of the ramp
/// is integrated numerically in the m coordinate.
inline Bump build_psi(const Modulus& m, const std::vector<double>& s, std::size_t k, double tol = 1e-9) {
  if (k == 0 || k >= s.size()) throw Error(ErrorKind::InvalidArgument, "bump index out of range");
  Bump b;
  b.k = k;
  b.lo = s[k];
  b.hi = s[k - 1];
  b.mass_total = m.integral(b.lo, b.hi);
  const double kk = static_cast<double>(k);
  auto mass = [&](double ramp) {
    Bump t = b;
    t.ramp = ramp;
    const double L = t.mass_total;
    // Integrate piecewise so the kinks sit on panel boundaries.
    const double a1 = std::min(ramp, L / 2), a2 = std::max(L - ramp, L / 2);
    auto f = [&t](double x) { return t.h(x); };
    double total = quad::integrate(f, 0.0, a1, 1e-13) + quad::integrate(f, a1, a2, 1e-13) +
                   quad::integrate(f, a2, L, 1e-13);
    return 2.0 / kk * total;
  };
  double lo = 1e-12 * b.mass_total;     // mass ~ 2
  double hi = 0.5 * b.mass_total;       // tent, mass = L/k ~ 1
  const double tent_mass = mass(hi);
  if (tent_mass > 1.0 + tol)
    throw Error(ErrorKind::CalibrationFailure, "bump " + std::to_string(k) + " cannot reach mass 1");
  if (tent_mass >= 1.0) lo = hi;
  for (int it = 0; it < 200 && hi - lo > 1e-15 * b.mass_total; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mass(mid) > 1.0)
      lo = mid;
    else
      hi = mid;
  }
  b.ramp = 0.5 * (lo + hi);
  if (std::fabs(mass(b.ramp) - 1.0) > tol)
    throw Error(ErrorKind::CalibrationFailure, "bump " + std::to_string(k) + " mass tolerance unreachable");
  return b;
}

struct LadderOptions {
  std::size_t K = 8;
  std::size_t grid_cells = 4096;  // per support interval, uniform in log s
};

/// Immutable ladder of phi_k approximations. Evaluators are pure.
class ModulusLadder {
 public:
  ModulusLadder(Modulus modulus, const LadderOptions& opt = {}) : modulus_(std::move(modulus)) {
    s_ = build_sk(modulus_, opt.K);
    for (std::size_t k = 1; k <= opt.K; ++k) {
      Level lv;
      lv.bump = build_psi(modulus_, s_, k);
      const double vlo = std::log(lv.bump.lo), vhi = std::log(lv.bump.hi);
      const std::size_t N = opt.grid_cells;
      lv.grid_s.resize(N + 1);
      lv.grid_m.resize(N + 1);
      lv.grid_Psi.resize(N + 1);
      lv.grid_phi.resize(N + 1);
      for (std::size_t j = 0; j <= N; ++j) lv.grid_s[j] = std::exp(vlo + (vhi - vlo) * j / N);
      lv.grid_s.front() = lv.bump.lo;
      lv.grid_s.back() = lv.bump.hi;
      lv.grid_m[0] = 0.0;
      for (std::size_t j = 1; j <= N; ++j)
        lv.grid_m[j] = lv.grid_m[j - 1] + modulus_.integral(lv.grid_s[j - 1], lv.grid_s[j], 1e-14);
      // Rescale so the cumulative mass ends exactly at the bump's total.
      const double scale = lv.bump.mass_total / lv.grid_m[N];
      for (auto& v : lv.grid_m) v *= scale;
      const double c = 2.0 / static_cast<double>(k);
      for (std::size_t j = 0; j <= N; ++j) lv.grid_Psi[j] = c * lv.bump.h_integral(lv.grid_m[j]);
      lv.grid_phi[0] = 0.0;
      for (std::size_t j = 1; j <= N; ++j)
        lv.grid_phi[j] = lv.grid_phi[j - 1] + cell_integral(lv, j - 1, lv.grid_s[j]);
      levels_.push_back(std::move(lv));
    }
  }

  const Modulus& modulus() const noexcept { return modulus_; }
  std::size_t K() const noexcept { return levels_.size(); }
  const std::vector<double>& s() const noexcept { return s_; }
  const Bump& bump(std::size_t k) const { return level(k).bump; }

  /// psi_k(s) = h(m(s)) 2 / (k rho(s)^2)
  double psi(std::size_t k, double s) const {
    const Level& lv = level(k);
    if (s <= lv.bump.lo || s >= lv.bump.hi) return 0.0;
    return lv.bump.h(mass_at(lv, s)) * 2.0 / (static_cast<double>(k)) * modulus_.inv_sq(s);
  }

  /// Psi_k(s) = int_0^s psi_k
  double Psi(std::size_t k, double s) const { return Psi_of(level(k), s); }

  double phi(std::size_t k, double t) const {
    const Level& lv = level(k);
    const double a = std::fabs(t);
    if (a <= lv.bump.lo) return 0.0;
    if (a >= lv.bump.hi) return lv.grid_phi.back() + (a - lv.bump.hi);
    const std::size_t j = cell_of(lv, a);
    return lv.grid_phi[j] + cell_integral(lv, j, a);
  }

  double phi_prime(std::size_t k, double t) const { return t < 0 ? -Psi(k, -t) : Psi(k, t); }
  double phi_second(std::size_t k, double t) const { return psi(k, std::fabs(t)); }

  /// sum_i phi_k(x_i)
  double phi_bar(std::size_t k, std::span<const double> x) const {
    double s = 0.0;
    for (double v : x) s += phi(k, v);
    return s;
  }

  /// The constant c_k with phi_k(t) = |t| - c_k for |t| >= s_{k-1}.
  double offset(std::size_t k) const {
    const Level& lv = level(k);
    return lv.bump.hi - lv.grid_phi.back();
  }

 private:
  struct Level {
    Bump bump;
    std::vector<double> grid_s, grid_m, grid_Psi, grid_phi;
  };

  const Level& level(std::size_t k) const {
    if (k == 0 || k > levels_.size()) throw Error(ErrorKind::InvalidArgument, "phi index k out of range");
    return levels_[k - 1];
  }

  static std::size_t cell_of(const Level& lv, double s) {
    auto it = std::upper_bound(lv.grid_s.begin(), lv.grid_s.end(), s);
    std::size_t j = static_cast<std::size_t>(it - lv.grid_s.begin());
    j = j == 0 ? 0 : j - 1;
    return std::min(j, lv.grid_s.size() - 2);
  }

  double Psi_of(const Level& lv, double s) const {
    if (s <= lv.bump.lo) return 0.0;
    if (s >= lv.bump.hi) return 1.0;
    return 2.0 / static_cast<double>(lv.bump.k) * lv.bump.h_integral(mass_at(lv, s));
  }

  double mass_at(const Level& lv, double s) const {
    const std::size_t j = cell_of(lv, s);
    return lv.grid_m[j] + modulus_.integral(lv.grid_s[j], s, 1e-14);
  }

  /// int_{s_j}^{s} Psi, Simpson on the sub-interval (Psi is C^1 and smooth within a cell).
  double cell_integral(const Level& lv, std::size_t j, double s) const {
    const double a = lv.grid_s[j];
    if (s <= a) return 0.0;
    const double fa = lv.grid_Psi[j];
    const double fm = Psi_of(lv, 0.5 * (a + s));
    const double fb = Psi_of(lv, s);
    return (s - a) / 6.0 * (fa + 4.0 * fm + fb);
  }

  Modulus modulus_;
  std::vector<double> s_;
  std::vector<Level> levels_;
};

}  // namespace degsde
