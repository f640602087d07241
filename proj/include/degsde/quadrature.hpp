#pragma once

#include <cmath>
#include <string>

#include "degsde/error.hpp"

namespace degsde::quad {

struct Result {
  double value = 0.0;
  double error_estimate = 0.0;
  bool converged = true;
  long evaluations = 0;
  long budget = 0;  // maximum evaluations; refinement stops once exceeded
};

namespace detail {

template <class F>
double simpson_step(const F& f, double a, double fa, double b, double fb, double m, double fm, double whole,
                    double tol, int depth, Result& out) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  out.evaluations += 2;
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (!std::isfinite(delta)) {
    out.converged = false;
    return left + right;
  }
  if (depth <= 0 || out.evaluations > out.budget) {
    out.converged = out.converged && std::fabs(delta) <= 15.0 * tol;
    out.error_estimate += std::fabs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  if (std::fabs(delta) <= 15.0 * tol) {
    out.error_estimate += std::fabs(delta) / 15.0;
    return left + right + delta / 15.0;
  }
  return simpson_step(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1, out) +
         simpson_step(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1, out);
}

}  // namespace detail

/// Adaptive Simpson quadrature with Richardson correction. `abs_tol` is split
/// between panels, so it bounds the total estimated error.
template <class F>
Result adaptive_simpson(const F& f, double a, double b, double abs_tol = 1e-10, int max_depth = 48,
                        long max_evals = 2'000'000) {
  Result out;
  out.budget = max_evals;
  if (a == b) return out;
  const double fa = f(a);
  const double fb = f(b);
  const double m = 0.5 * (a + b);
  const double fm = f(m);
  out.evaluations = 3;
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  out.value = detail::simpson_step(f, a, fa, b, fb, m, fm, whole, abs_tol, max_depth, out);
  if (!std::isfinite(out.value)) out.converged = false;
  return out;
}

/// Same as adaptive_simpson but throws QuadratureFailure when not converged.
template <class F>
double integrate(const F& f, double a, double b, double abs_tol = 1e-10, int max_depth = 48) {
  const Result r = adaptive_simpson(f, a, b, abs_tol, max_depth);
  if (!r.converged)
    throw Error(ErrorKind::QuadratureFailure,
                "adaptive Simpson did not reach tolerance on [" + std::to_string(a) + ", " + std::to_string(b) + "]");
  return r.value;
}

/// Integral of f over [a, b] (0 < a < b) computed in the variable v = log(u).
/// Well suited to integrands with power-law behaviour near zero.
template <class F>
double integrate_log(const F& f, double a, double b, double abs_tol = 1e-10, int max_depth = 48) {
  auto g = [&f](double v) {
    const double u = std::exp(v);
    return f(u) * u;
  };
  return integrate(g, std::log(a), std::log(b), abs_tol, max_depth);
}

}  // namespace degsde::quad
