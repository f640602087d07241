#pragma once

// Sampled numerical audits of the structural assumptions: radial envelopes
// a_i^+(r) = sup_{x_i = r} m_ii(x), b_i^-(r) = inf_{x_i = r} mu_i(x) / m_ii(x),
// the boundary-band conditions, the componentwise modulus bound and linear
// growth. Every check reports a verdict with its worst observed slack.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "degsde/error.hpp"
#include "degsde/expr.hpp"
#include "degsde/linalg.hpp"
#include "degsde/model.hpp"
#include "degsde/modulus.hpp"
#include "degsde/parallel.hpp"
#include "degsde/rng.hpp"

namespace degsde {

enum class Verdict { Pass, Fail, Inconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Fail: return "fail";
    case Verdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct ConditionReport {
  std::string assumption;
  Verdict verdict = Verdict::Inconclusive;
  double margin = 0.0;
  std::vector<Vector> witnesses;
  std::map<std::string, double> config;
  std::vector<ConditionReport> parts;
  std::string note;
};

// ---------------------------------------------------------------------------
// Envelopes

struct RadialEnvelope {
  std::size_t i = 0;  // coordinate index (0-based)
  bool radial = false;
  std::vector<double> r_grid;
  std::vector<double> a_plus;
  std::vector<double> b_minus;
  std::vector<Vector> b_minus_witness;  // state attaining b_minus at each r
  double R = 10.0;
  std::size_t samples_per_slice = 0;
  std::uint64_t seed = 0;

  /// a_i^+ between grid points by linear interpolation; below the grid it is
  /// continued linearly to 0 at r = 0, above it along the last segment.
  double a_plus_at(double r) const { return interpolate(a_plus, r, true); }

  /// b_i^- between grid points by linear interpolation; below the grid it is
  /// continued as b(r0) r0 / r, above it held constant.
  double b_minus_at(double r) const {
    if (r < r_grid.front()) return b_minus.front() * r_grid.front() / r;
    if (r >= r_grid.back()) return b_minus.back();
    return interpolate(b_minus, r, false);
  }

 private:
  double interpolate(const std::vector<double>& v, double r, bool linear_tails) const {
    const std::size_t m = r_grid.size();
    if (m == 1) return linear_tails ? v[0] * r / r_grid[0] : v[0];
    if (r <= r_grid.front()) return linear_tails ? v[0] * r / r_grid[0] : v[0];
    std::size_t j;
    if (r >= r_grid.back()) {
      if (!linear_tails) return v.back();
      j = m - 2;
    } else {
      j = static_cast<std::size_t>(std::upper_bound(r_grid.begin(), r_grid.end(), r) - r_grid.begin()) - 1;
    }
    const double w = (r - r_grid[j]) / (r_grid[j + 1] - r_grid[j]);
    return v[j] + w * (v[j + 1] - v[j]);
  }
};

namespace detail {

inline std::uint64_t slice_label(std::size_t i, double r) {
  return rng::mix64(static_cast<std::uint64_t>(i) * 0x9E3779B97F4A7C15ull ^ std::bit_cast<std::uint64_t>(r));
}

/// Cranley-Patterson shifts for the n-1 free coordinates of a slice.
inline std::vector<double> slice_shifts(std::uint64_t seed, std::size_t i, double r, std::size_t dims) {
  std::vector<double> out(dims);
  for (std::size_t d = 0; d < dims; d += 2) {
    const auto [u0, u1] = rng::uniforms(seed, rng::Stream::SliceRotation, slice_label(i, r), static_cast<std::uint32_t>(d / 2));
    out[d] = u0;
    if (d + 1 < dims) out[d + 1] = u1;
  }
  return out;
}

inline double a_component(const Model& model, std::span<const double> x, std::size_t i, Matrix& sigma) {
  model.diffusion(x, sigma);
  double a = 0.0;
  for (std::size_t j = 0; j < model.dimension(); ++j) a += sigma(i, j) * sigma(i, j);
  return a;
}

}  // namespace detail

struct EnvelopeOptions {
  double R = 10.0;
  std::size_t samples = 256;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Samples the slice {x : x_i = r, x_j in [0, R] for j != i} with a shifted
/// Halton set for each r. Deterministic in (i, r, seed) and independent of
/// thread count.
inline RadialEnvelope envelope(const Model& model, std::size_t i, std::span<const double> r_grid,
                               const EnvelopeOptions& opt = {}) {
  if (model.domain() != Domain::PositiveOrthant)
    throw Error(ErrorKind::InvalidArgument, "envelope needs a positive-orthant model");
  const std::size_t n = model.dimension();
  if (i >= n) throw Error(ErrorKind::DimensionMismatch, "envelope coordinate out of range");
  if (r_grid.empty()) throw Error(ErrorKind::InvalidArgument, "empty r grid");
  for (std::size_t k = 0; k < r_grid.size(); ++k) {
    if (!(r_grid[k] > 0.0 && r_grid[k] <= opt.R)) throw Error(ErrorKind::InvalidArgument, "r grid must lie in (0, R]");
    if (k > 0 && !(r_grid[k] > r_grid[k - 1])) throw Error(ErrorKind::InvalidArgument, "r grid must increase");
  }
  RadialEnvelope env;
  env.i = i;
  env.r_grid.assign(r_grid.begin(), r_grid.end());
  env.R = opt.R;
  env.samples_per_slice = n == 1 ? 1 : opt.samples;
  env.seed = opt.seed;
  const std::size_t m = r_grid.size();
  env.a_plus.assign(m, 0.0);
  env.b_minus.assign(m, 0.0);
  env.b_minus_witness.assign(m, Vector{});

  parallel_for(m, opt.threads, [&](std::size_t k) {
    const double r = r_grid[k];
    const std::size_t free_dims = n - 1;
    const auto shifts = detail::slice_shifts(opt.seed, i, r, free_dims);
    Vector x(n), mu(n);
    Matrix sigma(n, n);
    double a_max = -std::numeric_limits<double>::infinity();
    double b_min = std::numeric_limits<double>::infinity();
    Vector witness;
    for (std::size_t s = 0; s < env.samples_per_slice; ++s) {
      std::size_t d = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (j == i) {
          x[j] = r;
        } else {
          x[j] = opt.R * rng::halton(s, d, shifts[d]);
          ++d;
        }
      }
      const double a = detail::a_component(model, x, i, sigma);
      if (!(a > 0.0)) {
        std::string where;
        for (double v : x) where += format_double(v) + " ";
        throw Error(ErrorKind::DegenerateSlice, "a_i = 0 on the slice at x = [ " + where + "]");
      }
      model.drift(x, mu);
      const double b = mu[i] / a;
      a_max = std::max(a_max, a);
      if (b < b_min) {
        b_min = b;
        witness = x;
      }
    }
    env.a_plus[k] = a_max;
    env.b_minus[k] = b_min;
    env.b_minus_witness[k] = std::move(witness);
  });
  return env;
}

/// Geometric r grid from r_min to r_max with `points` points.
inline std::vector<double> geometric_grid(double r_min, double r_max, std::size_t points) {
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k)
    g[k] = points == 1 ? r_min : r_min * std::pow(r_max / r_min, static_cast<double>(k) / static_cast<double>(points - 1));
  g.back() = r_max;
  return g;
}

// ---------------------------------------------------------------------------
// Positivity assumptions

struct A3Options {
  double delta = 0.1;  // boundary band: min_j x_j < delta
  double R = 10.0;
  std::size_t band_samples = 4096;
  std::optional<Expr> sigma_tilde;  // expression in x1 = r
  bool check_iii = true;
  std::uint64_t seed = 0;
};

namespace detail {

/// Point s of the boundary band {x in [0,R]^n : min_j x_j < delta}.
inline void band_point(std::size_t s, std::size_t n, double delta, double R, std::uint64_t seed, Vector& x) {
  const std::size_t near = s % n;
  const auto [u0, u1] = rng::uniforms(seed, rng::Stream::BandSamples, 0, 0);
  for (std::size_t j = 0; j < n; ++j) {
    const double h = rng::halton(s, j, j == 0 ? u0 : u1 * static_cast<double>(j) - std::floor(u1 * static_cast<double>(j)));
    x[j] = j == near ? delta * h : R * h;
  }
}

inline Verdict combine(const std::vector<ConditionReport>& parts) {
  bool inconclusive = false;
  for (const auto& p : parts) {
    if (p.verdict == Verdict::Fail) return Verdict::Fail;
    if (p.verdict == Verdict::Inconclusive) inconclusive = true;
  }
  return inconclusive ? Verdict::Inconclusive : Verdict::Pass;
}

}  // namespace detail

/// (A2) finiteness of a^+, (A3)(i) positive drift in the boundary band,
/// (A3)(ii) r b_i^-(r) > 1 on each envelope grid, (A3)(iii) m_ii <= n^3 s~^2(x_i)
/// in the band. One envelope per coordinate.
inline ConditionReport check_A3(const Model& model, const std::vector<RadialEnvelope>& envelopes,
                                const A3Options& opt = {}) {
  if (opt.check_iii && !opt.sigma_tilde)
    throw Error(ErrorKind::MissingSigmaTilde, "(A3)(iii) requested without sigma_tilde");
  const std::size_t n = model.dimension();
  ConditionReport out;
  out.assumption = "A3";
  out.config = {{"delta", opt.delta}, {"R", opt.R}, {"band_samples", static_cast<double>(opt.band_samples)},
                {"seed", static_cast<double>(opt.seed)}};

  {
    ConditionReport a2;
    a2.assumption = "A2";
    a2.verdict = Verdict::Pass;
    a2.margin = std::numeric_limits<double>::infinity();
    for (const auto& env : envelopes)
      for (std::size_t k = 0; k < env.r_grid.size(); ++k)
        if (!std::isfinite(env.a_plus[k])) {
          a2.verdict = Verdict::Fail;
          a2.margin = -std::numeric_limits<double>::infinity();
          a2.witnesses.push_back({env.r_grid[k]});
        }
    a2.note = "a_i^+(r) finite on every grid point";
    out.parts.push_back(a2);
  }

  Vector x(n), mu(n);
  Matrix sigma(n, n);
  {
    ConditionReport p;
    p.assumption = "A3(i)";
    p.margin = std::numeric_limits<double>::infinity();
    Vector worst;
    for (std::size_t s = 0; s < opt.band_samples; ++s) {
      detail::band_point(s, n, opt.delta, opt.R, opt.seed, x);
      model.drift(x, mu);
      for (std::size_t i = 0; i < n; ++i)
        if (mu[i] < p.margin) {
          p.margin = mu[i];
          worst = x;
        }
    }
    p.verdict = p.margin > 0.0 ? Verdict::Pass : Verdict::Fail;
    if (!worst.empty()) p.witnesses.push_back(worst);
    p.note = "min mu_i over the band min_j x_j < delta";
    out.parts.push_back(p);
  }
  {
    ConditionReport p;
    p.assumption = "A3(ii)";
    p.margin = std::numeric_limits<double>::infinity();
    Vector worst;
    std::size_t checked = 0;
    for (const auto& env : envelopes) {
      for (std::size_t k = 0; k < env.r_grid.size(); ++k) {
        const double slack = env.r_grid[k] * env.b_minus[k] - 1.0;
        ++checked;
        if (slack < p.margin) {
          p.margin = slack;
          worst = env.b_minus_witness[k];
        }
      }
    }
    p.verdict = checked == 0 ? Verdict::Inconclusive : (p.margin > 0.0 ? Verdict::Pass : Verdict::Fail);
    if (!worst.empty()) p.witnesses.push_back(worst);
    p.note = "min over grid of r b_i^-(r) - 1";
    out.parts.push_back(p);
  }
  if (opt.check_iii) {
    ConditionReport p;
    p.assumption = "A3(iii)";
    p.margin = std::numeric_limits<double>::infinity();
    Vector worst;
    const double n3 = std::pow(static_cast<double>(n), 3);
    for (std::size_t s = 0; s < opt.band_samples; ++s) {
      detail::band_point(s, n, opt.delta, opt.R, opt.seed, x);
      for (std::size_t i = 0; i < n; ++i) {
        const double st = opt.sigma_tilde->evaluate(std::span<const double>(&x[i], 1));
        const double slack = n3 * st * st - detail::a_component(model, x, i, sigma);
        if (slack < p.margin) {
          p.margin = slack;
          worst = x;
        }
      }
    }
    p.verdict = p.margin >= 0.0 ? Verdict::Pass : Verdict::Fail;
    if (!worst.empty()) p.witnesses.push_back(worst);
    p.note = "min over band of n^3 sigma_tilde(x_i)^2 - m_ii(x)";
    out.parts.push_back(p);
  }
  out.verdict = detail::combine(out.parts);
  out.margin = std::numeric_limits<double>::infinity();
  for (const auto& p : out.parts) {
    out.margin = std::min(out.margin, p.margin);
    if (p.verdict == Verdict::Fail)
      out.witnesses.insert(out.witnesses.end(), p.witnesses.begin(), p.witnesses.end());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Modulus bound

struct A1Options {
  double R = 1.0;
  std::size_t pairs = 20000;
  std::uint64_t seed = 0;
};

/// Estimates C_R = max |sigma_ij(x) - sigma_ij(y)| / rho(|x_i - y_i|) over
/// sampled pairs in B(0, R) with |x - y| <= epsilon. Coordinates and
/// separations are drawn partly log-uniformly so that pairs concentrate near
/// degenerate points and at small scales. Fails when the estimate is not
/// finite, doubles between N/2 and N pairs, or at least doubles from the
/// coarsest to the finest separation decades.
inline ConditionReport check_A1_modulus(const Model& model, const Modulus& modulus, const A1Options& opt = {}) {
  const std::size_t n = model.dimension();
  const Domain dom = model.domain();
  const double R = dom == Domain::OpenUnitBall ? std::min(opt.R, 1.0) : opt.R;
  constexpr int kDecades = 10;
  std::vector<double> per_decade(kDecades, 0.0);
  std::vector<bool> populated(kDecades, false);
  double c_half = 0.0, c_full = 0.0;
  std::size_t usable = 0;
  Vector x(n), y(n), worst;
  Matrix sx(n, n), sy(n, n);
  const double sep_max = std::min(modulus.epsilon, R) / std::sqrt(static_cast<double>(n));
  for (std::size_t p = 0; p < opt.pairs; ++p) {
    auto uni = [&](std::uint32_t slot) { return rng::uniforms(opt.seed, rng::Stream::ModulusPairs, p, slot); };
    for (std::size_t k = 0; k < n; ++k) {
      const auto [u0, u1] = uni(static_cast<std::uint32_t>(k));
      const auto [u2, u3] = uni(static_cast<std::uint32_t>(n + k));
      double mag = (p % 2 == 0) ? R * u0 : R * std::pow(10.0, -10.0 * u0);
      if (dom == Domain::FullSpace && u1 < 0.5) mag = -mag;
      x[k] = mag;
      const double h = sep_max * std::pow(10.0, -10.0 * u2);
      const double d = u3 < 0.5 ? -h : h;
      y[k] = x[k] + d;
      if (dom == Domain::PositiveOrthant) y[k] = std::fabs(y[k]);
    }
    const double nx = norm2(x);
    if (nx >= R) {
      const double s = 0.999 * R / nx;
      for (auto& v : x) v *= s;
    }
    if (norm2(y) >= R) continue;
    Vector d(n);
    for (std::size_t k = 0; k < n; ++k) d[k] = x[k] - y[k];
    if (norm2(d) > modulus.epsilon) continue;
    model.diffusion(x, sx);
    model.diffusion(y, sy);
    for (std::size_t i = 0; i < n; ++i) {
      const double sep = std::fabs(x[i] - y[i]);
      const double den = sep > 0.0 ? modulus.rho(sep) : 0.0;
      if (!(den > 0.0)) continue;
      ++usable;
      double num = 0.0;
      for (std::size_t j = 0; j < n; ++j) num = std::max(num, std::fabs(sx(i, j) - sy(i, j)));
      const double ratio = num / den;
      if (ratio > c_full) {
        c_full = ratio;
        worst = x;
        worst.insert(worst.end(), y.begin(), y.end());
      }
      if (p < opt.pairs / 2) c_half = std::max(c_half, ratio);
      const int dec = std::clamp(static_cast<int>(std::floor(-std::log10(sep / sep_max))), 0, kDecades - 1);
      per_decade[dec] = std::max(per_decade[dec], ratio);
      populated[dec] = true;
    }
  }
  ConditionReport out;
  out.assumption = "A1(ii)";
  out.config = {{"R", R}, {"pairs", static_cast<double>(opt.pairs)}, {"epsilon", modulus.epsilon},
                {"seed", static_cast<double>(opt.seed)}, {"C_hat", c_full}, {"C_hat_half", c_half}};
  out.note = "rho = " + modulus.name;
  if (usable == 0) {
    out.verdict = Verdict::Inconclusive;
    out.note += "; every denominator vanished";
    return out;
  }
  // Coarse vs fine separation decades.
  std::vector<double> pops;
  for (int d = 0; d < kDecades; ++d)
    if (populated[d]) pops.push_back(per_decade[d]);
  const std::size_t w = std::min<std::size_t>(3, pops.size());
  double coarse = 0.0, fine = 0.0;
  for (std::size_t k = 0; k < w; ++k) {
    coarse = std::max(coarse, pops[k]);
    fine = std::max(fine, pops[pops.size() - 1 - k]);
  }
  const double size_ratio = c_half > 0.0 ? c_full / c_half : (c_full > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  const double scale_growth = coarse > 0.0 ? fine / coarse : (fine > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  out.config["size_ratio"] = size_ratio;
  out.config["scale_growth"] = scale_growth;
  const bool finite = std::isfinite(c_full);
  out.margin = finite ? 2.0 - std::max(size_ratio, scale_growth) : -std::numeric_limits<double>::infinity();
  out.verdict = (finite && size_ratio < 2.0 && scale_growth < 2.0) ? Verdict::Pass : Verdict::Fail;
  if (!worst.empty()) out.witnesses.push_back(worst);
  return out;
}

// ---------------------------------------------------------------------------
// Linear growth

/// Norm of a field at x: Euclidean for vectors, Frobenius for matrices.
using FieldNorm = std::function<double(std::span<const double>)>;

inline FieldNorm drift_norm(const Model& m) {
  return [&m](std::span<const double> x) { return norm2(m.drift(x)); };
}

inline FieldNorm diffusion_norm(const Model& m) {
  return [&m](std::span<const double> x) { return frobenius(m.diffusion(x)); };
}

struct GrowthOptions {
  std::size_t directions = 256;
  std::uint64_t seed = 0;
};

/// g(R) = max over sampled |x| = R of |field(x)| / (1 + |x|). Passes when
/// max_j g(R_j) / g(R_0) < 4, i.e. the normalized field does not grow along
/// the radii.
inline ConditionReport check_linear_growth(const FieldNorm& field, std::size_t n, Domain domain,
                                           std::span<const double> R_list, const GrowthOptions& opt = {}) {
  if (R_list.empty()) throw Error(ErrorKind::InvalidArgument, "empty R list");
  for (std::size_t j = 1; j < R_list.size(); ++j)
    if (!(R_list[j] > R_list[j - 1])) throw Error(ErrorKind::InvalidArgument, "R list must increase");
  ConditionReport out;
  out.assumption = "A1(iii)";
  std::vector<double> g(R_list.size(), 0.0);
  std::vector<Vector> argmax(R_list.size());
  Vector u(n), x(n);
  for (std::size_t d = 0; d < opt.directions; ++d) {
    for (std::size_t k = 0; k < n; k += 2) {
      const auto [u0, u1] = rng::uniforms(opt.seed, rng::Stream::GrowthDirections, d, static_cast<std::uint32_t>(k / 2));
      const auto [z0, z1] = rng::box_muller(1.0 - u0, u1);
      u[k] = z0;
      if (k + 1 < n) u[k + 1] = z1;
    }
    if (domain == Domain::PositiveOrthant)
      for (auto& v : u) v = std::fabs(v);
    const double nu = norm2(u);
    if (!(nu > 0.0)) continue;
    for (std::size_t j = 0; j < R_list.size(); ++j) {
      const double R = domain == Domain::OpenUnitBall ? std::min(R_list[j], 1.0) : R_list[j];
      for (std::size_t k = 0; k < n; ++k) x[k] = R * u[k] / nu;
      const double v = field(x) / (1.0 + R);
      if (v > g[j]) {
        g[j] = v;
        argmax[j] = x;
      }
    }
  }
  for (std::size_t j = 0; j < R_list.size(); ++j) out.config["g(R=" + format_double(R_list[j]) + ")"] = g[j];
  double growth = 1.0;
  std::size_t worst = 0;
  if (g[0] > 0.0) {
    for (std::size_t j = 0; j < g.size(); ++j)
      if (g[j] / g[0] > growth) {
        growth = g[j] / g[0];
        worst = j;
      }
  } else {
    const bool all_zero = std::all_of(g.begin(), g.end(), [](double v) { return v == 0.0; });
    out.verdict = all_zero ? Verdict::Pass : Verdict::Inconclusive;
    out.margin = all_zero ? 3.0 : 0.0;
    return out;
  }
  out.config["growth"] = growth;
  out.margin = 4.0 - growth;
  out.verdict = growth < 4.0 ? Verdict::Pass : Verdict::Fail;
  if (!argmax[worst].empty()) out.witnesses.push_back(argmax[worst]);
  return out;
}

// ---------------------------------------------------------------------------
// Unit ball

/// kappa = c (1 - sqrt(n) |theta|); passes iff kappa >= 2.
inline ConditionReport check_unit_ball_condition(double c, double theta_norm, std::size_t n) {
  ConditionReport out;
  out.assumption = "unit_ball";
  const double kappa = c * (1.0 - std::sqrt(static_cast<double>(n)) * std::fabs(theta_norm));
  out.margin = kappa - 2.0;
  out.verdict = kappa >= 2.0 ? Verdict::Pass : Verdict::Fail;
  out.config = {{"c", c}, {"theta_norm", std::fabs(theta_norm)}, {"n", static_cast<double>(n)}, {"kappa", kappa}};
  if (out.verdict == Verdict::Fail) out.witnesses.push_back({c, std::fabs(theta_norm), static_cast<double>(n)});
  return out;
}

}  // namespace degsde
