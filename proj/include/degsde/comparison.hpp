#pragma once

// Numerical coupling of one projected coordinate with a dominating scalar
// diffusion. The trajectory is time-changed so that the projection has
// diffusion coefficient a^+(p), the driving scalar noise is reconstructed from
// the realized increments, and the dominating process is integrated on the
// same noise.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "degsde/conditions.hpp"
#include "degsde/error.hpp"
#include "degsde/linalg.hpp"
#include "degsde/model.hpp"
#include "degsde/paths.hpp"

namespace degsde {

/// Scalar projection p(x) of the state: coordinate x_i on the orthant, |x|^2 on the ball.
struct Projection {
  bool radial = false;
  std::size_t i = 0;

  double p(std::span<const double> x) const { return radial ? norm2_sq(x) : x[i]; }

  /// Quadratic-variation rate of p(X): m_ii, or 4 x^T m x for |x|^2.
  double a(const Model& model, std::span<const double> x, Matrix& sigma, Matrix& m) const {
    model.diffusion(x, sigma);
    outer_self(sigma, m);
    if (!radial) return m(i, i);
    double q = 0.0;
    for (std::size_t r = 0; r < x.size(); ++r)
      for (std::size_t c = 0; c < x.size(); ++c) q += x[r] * m(r, c) * x[c];
    return 4.0 * q;
  }

  /// Drift of p(X): mu_i, or 2 x.mu + tr m.
  double drift(const Model& model, std::span<const double> x, const Matrix& m, Vector& mu) const {
    model.drift(x, mu);
    if (!radial) return mu[i];
    double d = 0.0;
    for (std::size_t r = 0; r < x.size(); ++r) d += 2.0 * x[r] * mu[r] + m(r, r);
    return d;
  }
};

struct ComparisonSetup {
  Projection proj;
  std::function<double(double)> a_plus;  // a_i^+(r)
  std::function<double(double)> b1;      // a^+(r) b^-(r)
  std::function<double(double)> b2;      // a^+(r) / r
  double z0 = 0.0;
  std::optional<RadialEnvelope> envelope;  // orthant only
  // Ball only: dZ = 2 [n - (n + kappa) Z] dt + sqrt(8 Z (1 - Z)) dW.
  bool ball = false;
  std::size_t n = 0;
  double kappa = 0.0;
  double order_margin = 0.0;  // min over the envelope grid of r b^-(r) - 1
};

/// Orthant setup for coordinate i from a computed envelope. Throws
/// InvalidArgument if b1 > b2 fails anywhere on the envelope grid.
inline ComparisonSetup make_setup(const RadialEnvelope& env, double z0) {
  ComparisonSetup s;
  s.proj = {false, env.i};
  s.envelope = env;
  s.order_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < env.r_grid.size(); ++k)
    s.order_margin = std::min(s.order_margin, env.r_grid[k] * env.b_minus[k] - 1.0);
  if (!(s.order_margin > 0.0))
    throw Error(ErrorKind::InvalidArgument,
                "b1(r) > b2(r) fails on the envelope grid (min r b^-(r) - 1 = " + format_double(s.order_margin) + ")");
  s.a_plus = [env](double r) { return env.a_plus_at(r); };
  s.b1 = [env](double r) { return env.a_plus_at(r) * env.b_minus_at(r); };
  s.b2 = [env](double r) {
    if (r <= 0.0) return env.a_plus.front() / env.r_grid.front();
    return env.a_plus_at(r) / r;
  };
  s.z0 = z0;
  return s;
}

/// Ball setup on p(x) = |x|^2 with a^+(r) = 8 r (1 - r).
inline ComparisonSetup make_ball_setup(std::size_t n, double kappa, double z0) {
  ComparisonSetup s;
  s.proj = {true, 0};
  s.ball = true;
  s.n = n;
  s.kappa = kappa;
  s.z0 = z0;
  const double dn = static_cast<double>(n);
  s.a_plus = [](double r) { return 8.0 * r * (1.0 - r); };
  s.b1 = [dn, kappa](double r) { return 2.0 * (dn - (dn + kappa) * r); };
  s.b2 = s.b1;
  s.order_margin = 0.0;
  return s;
}

// ---------------------------------------------------------------------------
// Time change

struct TimeChange {
  std::vector<double> t;    // original grid
  std::vector<double> phi;  // phi(t_k)
  std::vector<double> ratio;  // a_i(X) / a^+(p(X)) at t_k
  double max_ratio = 0.0;

  /// psi = phi^{-1} by linear interpolation on the achieved range.
  double psi(double u) const {
    if (u <= phi.front()) return t.front();
    if (u >= phi.back()) return t.back();
    const std::size_t j = static_cast<std::size_t>(std::upper_bound(phi.begin(), phi.end(), u) - phi.begin()) - 1;
    const double w = (u - phi[j]) / (phi[j + 1] - phi[j]);
    return t[j] + w * (t[j + 1] - t[j]);
  }
};

/// phi(t) = int_0^t a_i(X) / a^+(p(X)) ds by cumulative trapezoid over the
/// first `points` grid points. Throws NonMonotone if the integrand is not positive.
inline TimeChange time_change(const Model& model, const Trajectory& tr, const ComparisonSetup& setup,
                              std::size_t points) {
  points = std::min(points, tr.size());
  if (points == 0) throw Error(ErrorKind::InvalidArgument, "empty trajectory");
  const std::size_t n = model.dimension();
  TimeChange tc;
  Matrix sigma(n, n), m(n, n);
  for (std::size_t k = 0; k < points; ++k) {
    const auto x = tr.state(k);
    const double a = setup.proj.a(model, x, sigma, m);
    const double ap = setup.a_plus(setup.proj.p(x));
    const double g = a / ap;
    if (!(g > 0.0) || !std::isfinite(g))
      throw Error(ErrorKind::NonMonotone, "time-change integrand a/a^+ = " + format_double(g) + " at t = " +
                                              format_double(tr.t[k]));
    tc.t.push_back(tr.t[k]);
    tc.ratio.push_back(g);
    tc.max_ratio = std::max(tc.max_ratio, g);
    tc.phi.push_back(k == 0 ? 0.0 : tc.phi.back() + 0.5 * (tc.ratio[k - 1] + g) * (tr.t[k] - tr.t[k - 1]));
  }
  return tc;
}

/// Time change of a trajectory whose integrand is given directly (for tests
/// and 1-D reductions).
inline TimeChange time_change(std::span<const double> t, std::span<const double> ratio) {
  if (t.size() != ratio.size() || t.empty()) throw Error(ErrorKind::DimensionMismatch, "time change inputs differ");
  TimeChange tc;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (!(ratio[k] > 0.0)) throw Error(ErrorKind::NonMonotone, "time-change integrand not positive");
    tc.t.push_back(t[k]);
    tc.ratio.push_back(ratio[k]);
    tc.max_ratio = std::max(tc.max_ratio, ratio[k]);
    tc.phi.push_back(k == 0 ? 0.0 : tc.phi.back() + 0.5 * (ratio[k - 1] + ratio[k]) * (t[k] - t[k - 1]));
  }
  return tc;
}

/// Y(u_j) = X(psi(u_j)) on the uniform grid u_j = j dt covering phi's range,
/// by linear interpolation between trajectory states. Returns states [j * n + i].
inline std::vector<double> resample(const Trajectory& tr, const TimeChange& tc, double dt) {
  const std::size_t n = tr.n;
  const std::size_t count = static_cast<std::size_t>(std::floor(tc.phi.back() / dt * (1.0 + 1e-12))) + 1;
  std::vector<double> y(count * n);
  for (std::size_t j = 0; j < count; ++j) {
    const double u = std::min(static_cast<double>(j) * dt, tc.phi.back());
    std::size_t k;
    double w;
    if (u >= tc.phi.back()) {
      k = tc.phi.size() - 1;
      w = 0.0;
    } else {
      k = static_cast<std::size_t>(std::upper_bound(tc.phi.begin(), tc.phi.end(), u) - tc.phi.begin()) - 1;
      w = (u - tc.phi[k]) / (tc.phi[k + 1] - tc.phi[k]);
    }
    const auto a = tr.state(k);
    for (std::size_t i = 0; i < n; ++i) {
      const double b = w > 0.0 ? tr.state(k + 1)[i] : a[i];
      y[j * n + i] = a[i] + w * (b - a[i]);
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Noise reconstruction and domination

struct ReconstructedNoise {
  std::vector<double> dW;
  double quadratic_variation = 0.0;
  double elapsed = 0.0;
};

/// dW_k = (p_{k+1} - p_k - drift_k dt) / sqrt(a^+(p_k)), where drift_k is the
/// drift of p along the path, a^+(p_k) b(Y_k).
inline ReconstructedNoise reconstruct_noise(std::span<const double> p, std::span<const double> drift,
                                            const std::function<double(double)>& a_plus, double dt) {
  if (drift.size() + 1 < p.size()) throw Error(ErrorKind::DimensionMismatch, "drift series too short");
  ReconstructedNoise out;
  for (std::size_t k = 0; k + 1 < p.size(); ++k) {
    const double ap = a_plus(p[k]);
    if (!(ap > 0.0))
      throw Error(ErrorKind::ZeroDiffusion, "a^+(p) = " + format_double(ap) + " at grid point " + std::to_string(k));
    const double w = (p[k + 1] - p[k] - drift[k] * dt) / std::sqrt(ap);
    out.dW.push_back(w);
    out.quadratic_variation += w * w;
  }
  out.elapsed = dt * static_cast<double>(out.dW.size());
  return out;
}

enum class DominatingForm { Squared, Direct };

/// Integrates the dominating process on the given increments. On the orthant
/// the squared form dZ1 = 3 a^+(sqrt Z1) dt + 2 sqrt(Z1) sqrt(a^+(sqrt Z1)) dW
/// is stepped with full truncation and Z = sqrt(Z1^+); the direct form
/// dZ = a^+(Z)/Z dt + sqrt(a^+(Z)) dW is available for comparison. On the ball
/// the drift 2 [n - (n + kappa) Z] and diffusion sqrt(8 Z (1 - Z)) are
/// evaluated at Z clamped to [0, 1].
inline std::vector<double> dominate(const ComparisonSetup& s, std::span<const double> dW, double dt,
                                    DominatingForm form = DominatingForm::Squared) {
  if (!(s.z0 > 0.0)) throw Error(ErrorKind::InvalidArgument, "z0 must be positive");
  std::vector<double> z{s.z0};
  z.reserve(dW.size() + 1);
  auto check = [](double v, std::size_t k) {
    if (!std::isfinite(v))
      throw Error(ErrorKind::NonFiniteState, "dominating process not finite at step " + std::to_string(k));
  };
  if (s.ball) {
    const double dn = static_cast<double>(s.n);
    double x = s.z0;
    for (std::size_t k = 0; k < dW.size(); ++k) {
      const double c = std::clamp(x, 0.0, 1.0);
      x += 2.0 * (dn - (dn + s.kappa) * c) * dt + std::sqrt(8.0 * c * (1.0 - c)) * dW[k];
      check(x, k);
      z.push_back(x);
    }
    return z;
  }
  if (form == DominatingForm::Direct) {
    double x = s.z0;
    for (std::size_t k = 0; k < dW.size(); ++k) {
      const double c = std::max(x, 0.0);
      x += s.b2(c) * dt + std::sqrt(std::max(0.0, s.a_plus(c))) * dW[k];
      check(x, k);
      z.push_back(x);
    }
    return z;
  }
  double z1 = s.z0 * s.z0;
  for (std::size_t k = 0; k < dW.size(); ++k) {
    const double c = std::max(z1, 0.0);
    const double r = std::sqrt(c);
    const double ap = std::max(0.0, s.a_plus(r));
    z1 += 3.0 * ap * dt + 2.0 * r * std::sqrt(ap) * dW[k];
    check(z1, k);
    z.push_back(std::sqrt(std::max(z1, 0.0)));
  }
  return z;
}

// ---------------------------------------------------------------------------
// Coupling

enum class CouplingVerdict { Ordered, Violated, Inconclusive };

inline std::string to_string(CouplingVerdict v) {
  switch (v) {
    case CouplingVerdict::Ordered: return "ordered";
    case CouplingVerdict::Violated: return "violated";
    case CouplingVerdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct CouplingOptions {
  Scheme scheme = Scheme::FullTruncation;
  double eps_hit = 1e-4;
  double c_tol = 5.0;
  std::uint64_t path_index = 0;
  // Orthant envelope.
  double r_min = 1e-3;
  std::size_t r_points = 64;
  EnvelopeOptions envelope;
};

struct CouplingReport {
  std::vector<double> t;    // changed-time grid
  std::vector<double> p;    // p(Y(t))
  std::vector<double> z;    // dominating path
  std::vector<double> dW;   // reconstructed increments
  double quadratic_variation = 0.0;
  double elapsed = 0.0;
  double margin_min = 0.0;  // min_t of the ordering margin
  std::size_t violations = 0;
  double violation_fraction = 0.0;
  double tol = 0.0;
  double dt = 0.0;
  std::uint64_t seed = 0;
  bool lower = true;  // true: Z <= p(Y) expected; false (ball): p(Y) <= Z
  double time_change_max_ratio = 0.0;
  double phi_end = 0.0;
  std::size_t trajectory_points = 0;  // points used before the first hit flag
  CouplingVerdict verdict = CouplingVerdict::Inconclusive;
  std::string note;
};

/// Ordering margin on shared grids: p - z where Z should stay below, z - p on the ball.
inline CouplingReport summarize_coupling(CouplingReport r) {
  r.margin_min = std::numeric_limits<double>::infinity();
  r.violations = 0;
  const std::size_t m = std::min(r.p.size(), r.z.size());
  for (std::size_t k = 0; k < m; ++k) {
    const double margin = r.lower ? r.p[k] - r.z[k] : r.z[k] - r.p[k];
    r.margin_min = std::min(r.margin_min, margin);
    if (margin < -r.tol) ++r.violations;
  }
  r.violation_fraction = m > 0 ? static_cast<double>(r.violations) / static_cast<double>(m) : 0.0;
  if (m < 2)
    r.verdict = CouplingVerdict::Inconclusive;
  else
    r.verdict = r.violations == 0 ? CouplingVerdict::Ordered : CouplingVerdict::Violated;
  return r;
}

/// Full pipeline on one Brownian path: integrate X, time-change, resample Y,
/// reconstruct the scalar noise and integrate the dominating process on it.
inline CouplingReport couple(const Model& model, std::size_t i, std::span<const double> x0, double T, double dt,
                             std::uint64_t seed, const CouplingOptions& opt = {}) {
  require_open_domain(model, x0);
  const std::size_t n = model.dimension();
  ComparisonSetup setup;
  if (model.domain() == Domain::OpenUnitBall) {
    if (!model.unit_ball()) throw Error(ErrorKind::InvalidArgument, "ball coupling needs a unit-ball model");
    setup = make_ball_setup(n, model.unit_ball()->kappa, norm2_sq(x0));
  } else if (model.domain() == Domain::PositiveOrthant) {
    if (i >= n) throw Error(ErrorKind::DimensionMismatch, "coordinate index out of range");
    const auto grid = geometric_grid(opt.r_min, opt.envelope.R, opt.r_points);
    setup = make_setup(envelope(model, i, grid, opt.envelope), x0[i]);
  } else {
    throw Error(ErrorKind::InvalidArgument, "coupling needs an orthant or unit-ball model");
  }

  const BrownianPath path(n, T, step_count(T, dt), 0, seed, opt.path_index);
  const Trajectory tr =
      integrate(model, x0, path, 0, IntegrateOptions{opt.scheme, BoundaryPolicy::Absorb, opt.eps_hit});
  if (tr.abort_reason) throw Error(ErrorKind::NonFiniteState, *tr.abort_reason);

  CouplingReport r;
  r.dt = dt;
  r.seed = seed;
  r.tol = opt.c_tol * std::sqrt(dt);
  r.lower = !setup.ball;
  r.trajectory_points = tr.last_unhit() + 1;

  const TimeChange tc = time_change(model, tr, setup, r.trajectory_points);
  r.time_change_max_ratio = tc.max_ratio;
  r.phi_end = tc.phi.back();
  const std::vector<double> y = resample(tr, tc, dt);
  const std::size_t count = y.size() / n;

  Matrix sigma(n, n), m(n, n);
  Vector mu(n);
  std::vector<double> drift(count);
  r.p.resize(count);
  for (std::size_t j = 0; j < count; ++j) {
    const std::span<const double> yj(y.data() + j * n, n);
    const double pj = setup.proj.p(yj);
    r.p[j] = pj;
    r.t.push_back(static_cast<double>(j) * dt);
    const double a = setup.proj.a(model, yj, sigma, m);
    const double d = setup.proj.drift(model, yj, m, mu);
    if (!(a > 0.0)) {
      if (j + 1 < count)
        throw Error(ErrorKind::ZeroDiffusion, "a(Y) = 0 at changed time " + format_double(r.t.back()));
      drift[j] = 0.0;
      continue;
    }
    // a^+(p) b(Y) with b = drift / a.
    drift[j] = setup.a_plus(pj) * (d / a);
  }
  const ReconstructedNoise noise = reconstruct_noise(r.p, drift, setup.a_plus, dt);
  r.dW = noise.dW;
  r.quadratic_variation = noise.quadratic_variation;
  r.elapsed = noise.elapsed;
  r.z = dominate(setup, r.dW, dt);
  if (tr.last_unhit() + 1 < tr.size()) r.note = "trajectory stopped at the first hit flag";
  return summarize_coupling(std::move(r));
}

// ---------------------------------------------------------------------------
// Scalar comparison kernel

struct ScalarSde {
  std::function<double(double)> drift;
  std::function<double(double)> diffusion;
};

struct KernelReport {
  std::size_t points = 0;
  std::size_t violations = 0;  // grid points with U < V - tol
  double margin_min = 0.0;     // min_t U - V
  double tol = 0.0;
};

/// Euler steps of dU = b1(U) dt + s(U) dW and dV = b2(V) dt + s(V) dW on the
/// same increments (path `path_index` of `seed`), counting ordering violations.
inline KernelReport comparison_kernel(const ScalarSde& upper, const ScalarSde& lower, double u0, double v0, double T,
                                      double dt, std::uint64_t seed, std::uint64_t path_index = 0,
                                      double c_tol = 5.0) {
  const BrownianPath path(1, T, step_count(T, dt), 0, seed, path_index);
  const auto dW = path.increments(0);
  KernelReport r;
  r.tol = c_tol * std::sqrt(dt);
  double u = u0, v = v0;
  r.margin_min = u - v;
  r.points = dW.size() + 1;
  if (u < v - r.tol) ++r.violations;
  for (std::size_t k = 0; k < dW.size(); ++k) {
    const double un = u + upper.drift(u) * dt + upper.diffusion(u) * dW[k];
    const double vn = v + lower.drift(v) * dt + lower.diffusion(v) * dW[k];
    u = un;
    v = vn;
    if (!std::isfinite(u) || !std::isfinite(v))
      throw Error(ErrorKind::NonFiniteState, "comparison kernel state not finite");
    r.margin_min = std::min(r.margin_min, u - v);
    if (u < v - r.tol) ++r.violations;
  }
  return r;
}

}  // namespace degsde
