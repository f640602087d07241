#pragma once

// Scale densities of one-dimensional diffusions and classification of
// interval endpoints by divergence of the scale integral.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "degsde/error.hpp"
#include "degsde/expr.hpp"
#include "degsde/quadrature.hpp"

namespace degsde {

struct Diffusion1D {
  std::function<double(double)> drift;
  std::function<double(double)> diff_sq;
  double l = 0.0;
  double r = 1.0;
  std::optional<double> y0;  // defaults to the midpoint (or 1 from a finite end)
  std::string name;

  double reference() const {
    if (y0) return *y0;
    if (std::isfinite(l) && std::isfinite(r)) return 0.5 * (l + r);
    if (std::isfinite(l)) return l + 1.0;
    if (std::isfinite(r)) return r - 1.0;
    return 0.0;
  }
};

/// Drift 2 [n - (n + kappa) y], squared diffusion 8 y (1 - y) on (0, 1).
inline Diffusion1D ball_dominating_diffusion(double n, double kappa) {
  Diffusion1D d;
  d.name = "ball_dominating(n=" + format_double(n) + ",kappa=" + format_double(kappa) + ")";
  d.drift = [n, kappa](double y) { return 2.0 * (n - (n + kappa) * y); };
  d.diff_sq = [](double y) { return 8.0 * y * (1.0 - y); };
  d.l = 0.0;
  d.r = 1.0;
  return d;
}

/// Drift c, squared diffusion 4 y on (0, inf).
inline Diffusion1D bessel_diffusion(double c) {
  Diffusion1D d;
  d.name = "bessel1d(c=" + format_double(c) + ")";
  d.drift = [c](double) { return c; };
  d.diff_sq = [](double y) { return 4.0 * y; };
  d.l = 0.0;
  d.r = std::numeric_limits<double>::infinity();
  return d;
}

/// Unit squared diffusion with scale density proportional to y^-p (1 - y)^-q.
inline Diffusion1D power_law_diffusion(double p, double q) {
  Diffusion1D d;
  d.name = "power_law(p=" + format_double(p) + ",q=" + format_double(q) + ")";
  d.drift = [p, q](double y) { return 0.5 * (p / y - q / (1.0 - y)); };
  d.diff_sq = [](double) { return 1.0; };
  d.l = 0.0;
  d.r = 1.0;
  return d;
}

namespace detail {

/// int_{y0}^{y} drift / diff_sq, substituting u = l + e^v (or r - e^v)
/// towards a finite end so that 1/(u - l) behaviour becomes bounded.
inline quad::Result drift_ratio_integral(const Diffusion1D& d, double y0, double y, double tol) {
  auto f = [&d](double u) { return d.drift(u) / d.diff_sq(u); };
  if (y < y0 && std::isfinite(d.l)) {
    auto g = [&](double v) {
      const double e = std::exp(v);
      return f(d.l + e) * e;
    };
    return quad::adaptive_simpson(g, std::log(y0 - d.l), std::log(y - d.l), tol, 40, 200'000);
  }
  if (y > y0 && std::isfinite(d.r)) {
    auto g = [&](double v) {
      const double e = std::exp(v);
      return -f(d.r - e) * e;
    };
    return quad::adaptive_simpson(g, std::log(d.r - y0), std::log(d.r - y), tol, 40, 200'000);
  }
  return quad::adaptive_simpson(f, y0, y, tol, 40, 200'000);
}

inline constexpr double kGaussNodes[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                          0.9061798459386640};
inline constexpr double kGaussWeights[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                            0.4786286704993665, 0.2369268850561891};

template <class G>
double gauss5(const G& g, double a, double b) {
  const double c = 0.5 * (a + b), h = 0.5 * (b - a);
  double s = 0.0;
  for (int k = 0; k < 5; ++k) s += kGaussWeights[k] * g(c + h * kGaussNodes[k]);
  return s * h;
}

}  // namespace detail

/// exp(-2 int_{y0}^{y} drift / diff_sq). The tolerance is relative to the
/// size of the exponent; throws QuadratureFailure.
inline double scale_density(const Diffusion1D& d, double y, double tol = 1e-10) {
  if (!(y > d.l && y < d.r)) throw Error(ErrorKind::InvalidArgument, "scale density outside the open interval");
  const double y0 = d.reference();
  if (y == y0) return 1.0;
  const quad::Result res = detail::drift_ratio_integral(d, y0, y, tol);
  if (!res.converged && !(res.error_estimate <= 1e3 * tol * std::max(1.0, std::fabs(res.value))))
    throw Error(ErrorKind::QuadratureFailure, "scale density integral did not converge");
  return std::exp(-2.0 * res.value);
}

enum class Endpoint { Left, Right };
enum class BoundaryClass { Unattainable, Attainable, Inconclusive };

inline std::string to_string(Endpoint e) { return e == Endpoint::Left ? "l" : "r"; }
inline std::string to_string(BoundaryClass c) {
  switch (c) {
    case BoundaryClass::Unattainable: return "unattainable";
    case BoundaryClass::Attainable: return "attainable";
    case BoundaryClass::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct BoundaryVerdict {
  Endpoint endpoint = Endpoint::Left;
  double endpoint_value = 0.0;
  BoundaryClass classification = BoundaryClass::Inconclusive;
  double scale_integral_estimate = 0.0;  // last partial integral
  bool diverges = false;                 // partial integrals grow without bound
  std::vector<double> distances;         // 10^-2 .. 10^-8 from the endpoint
  std::vector<double> partial_integrals; // int from y0 to endpoint +- distance of the scale density
  std::vector<double> slopes;            // local power-law exponents of the density
  std::optional<double> exponent;        // set when the slopes are stable
  std::string note;
};

struct ClassifyOptions {
  int first_decade = 2;
  int refinements = 6;
  double growth_threshold = 1.5;
  double exponent_rel_tol = 0.02;
  double cell_width = 0.01;  // in log distance
};

/// Integrates the scale density from y0 towards the endpoint over geometric
/// meshes. Unattainable: the partial integrals grow monotonically and every
/// decade contributes at least 1/1.5 of the previous one. Attainable: the
/// increments shrink faster and the density has a stable power-law exponent
/// below 1. Anything else, including numerical failures, is inconclusive.
inline BoundaryVerdict classify(const Diffusion1D& d, Endpoint endpoint, const ClassifyOptions& opt = {}) {
  BoundaryVerdict v;
  v.endpoint = endpoint;
  const bool left = endpoint == Endpoint::Left;
  v.endpoint_value = left ? d.l : d.r;
  if (!std::isfinite(v.endpoint_value)) {
    v.note = "infinite endpoint";
    return v;
  }
  const double y0 = d.reference();
  const double dist0 = left ? y0 - d.l : d.r - y0;
  // Path from y0 to the endpoint parametrized by w = log(distance).
  auto y_of = [&](double w) { return left ? d.l + std::exp(w) : d.r - std::exp(w); };
  auto ratio = [&](double w) {
    const double e = std::exp(w);
    const double f = d.drift(y_of(w)) / d.diff_sq(y_of(w));
    return left ? f * e : -f * e;
  };
  try {
    if (!(dist0 > std::pow(10.0, -opt.first_decade)))
      throw Error(ErrorKind::InvalidArgument, "reference point too close to the endpoint");
    // Log scale density at grid nodes is accumulated cell by cell; the density
    // integral uses Simpson's rule on each cell.
    double w = std::log(dist0);
    double log_s = 0.0;
    double total = 0.0;
    std::vector<double> densities;
    for (int j = 0; j <= opt.refinements; ++j) {
      const double w_next = std::log(std::pow(10.0, -(opt.first_decade + j)));
      const int cells = std::max(1, static_cast<int>(std::ceil((w - w_next) / opt.cell_width)));
      const double h = (w - w_next) / cells;
      for (int c = 0; c < cells; ++c) {
        const double wa = w - h * c, wb = (c + 1 == cells) ? w_next : w - h * (c + 1), wm = 0.5 * (wa + wb);
        const double la = log_s;
        const double lm = la - 2.0 * detail::gauss5(ratio, wa, wm);
        const double lb = lm - 2.0 * detail::gauss5(ratio, wm, wb);
        total += (wa - wb) / 6.0 * (std::exp(la + wa) + 4.0 * std::exp(lm + wm) + std::exp(lb + wb));
        log_s = lb;
      }
      if (!std::isfinite(total) || !std::isfinite(log_s))
        throw Error(ErrorKind::QuadratureFailure, "scale integral is not finite");
      w = w_next;
      v.distances.push_back(std::pow(10.0, -(opt.first_decade + j)));
      v.partial_integrals.push_back(total);
      densities.push_back(std::exp(log_s));
    }
    v.scale_integral_estimate = total;

    bool growing = true;
    for (std::size_t j = 1; j < v.partial_integrals.size(); ++j) {
      if (!(v.partial_integrals[j] > v.partial_integrals[j - 1])) growing = false;
      if (j >= 2) {
        const double inc = v.partial_integrals[j] - v.partial_integrals[j - 1];
        const double prev = v.partial_integrals[j - 1] - v.partial_integrals[j - 2];
        if (!(inc >= prev / opt.growth_threshold)) growing = false;
      }
    }
    v.diverges = growing;

    for (std::size_t j = 1; j < densities.size(); ++j)
      v.slopes.push_back(-(std::log(densities[j]) - std::log(densities[j - 1])) /
                         (std::log(v.distances[j]) - std::log(v.distances[j - 1])));
    // Stable when the last three local exponents agree to the relative tolerance.
    if (v.slopes.size() >= 3) {
      const std::size_t m = v.slopes.size();
      const double last = v.slopes[m - 1];
      const double scale = std::max(std::fabs(last), 1e-3);
      bool stable = true;
      for (std::size_t j = m - 3; j < m - 1; ++j)
        if (std::fabs(v.slopes[j] - last) > opt.exponent_rel_tol * scale) stable = false;
      if (stable) v.exponent = last;
    }

    const double cutoff = 1.0 - opt.exponent_rel_tol;
    if (v.diverges) {
      if (v.exponent && *v.exponent < cutoff) {
        v.classification = BoundaryClass::Inconclusive;
        v.note = "partial integrals grow but the density exponent is below 1";
      } else {
        v.classification = BoundaryClass::Unattainable;
      }
    } else if (v.exponent && *v.exponent < cutoff) {
      v.classification = BoundaryClass::Attainable;
    } else {
      v.classification = BoundaryClass::Inconclusive;
      v.note = v.exponent ? "increments shrink but the density exponent is at least 1" : "no stable power law";
    }
  } catch (const Error& e) {
    v.classification = BoundaryClass::Inconclusive;
    v.note = e.what();
  }
  return v;
}

}  // namespace degsde
