#pragma once

// Brownian paths with dyadic bridge refinement, one-step schemes for
// degenerate diffusions, trajectory integration and Monte Carlo.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "degsde/error.hpp"
#include "degsde/linalg.hpp"
#include "degsde/model.hpp"
#include "degsde/parallel.hpp"
#include "degsde/rng.hpp"

namespace degsde {

enum class Scheme { Euler, FullTruncation, Projected };
enum class BoundaryPolicy { Continue, Absorb };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::Euler: return "euler";
    case Scheme::FullTruncation: return "full_truncation";
    case Scheme::Projected: return "projected";
  }
  return "?";
}

inline Scheme parse_scheme(std::string_view s) {
  if (s == "euler") return Scheme::Euler;
  if (s == "full_truncation") return Scheme::FullTruncation;
  if (s == "projected") return Scheme::Projected;
  throw Error(ErrorKind::ConfigError, "unknown scheme '" + std::string(s) + "'");
}

inline std::string to_string(BoundaryPolicy p) { return p == BoundaryPolicy::Absorb ? "absorb" : "continue"; }

inline BoundaryPolicy parse_boundary_policy(std::string_view s) {
  if (s == "absorb") return BoundaryPolicy::Absorb;
  if (s == "continue") return BoundaryPolicy::Continue;
  throw Error(ErrorKind::ConfigError, "unknown boundary policy '" + std::string(s) + "'");
}

/// Number of uniform steps of size dt covering [0, T]; dt must divide T to 1e-12.
inline std::size_t step_count(double T, double dt) {
  if (!(T > 0.0) || !(dt > 0.0)) throw Error(ErrorKind::InvalidArgument, "T and dt must be positive");
  const double rounded = std::round(T / dt);
  if (rounded < 1.0 || std::fabs(rounded * dt - T) > 1e-12 * std::max(1.0, T))
    throw Error(ErrorKind::InvalidArgument, "dt does not divide T");
  return static_cast<std::size_t>(rounded);
}

// ---------------------------------------------------------------------------
// Brownian paths

/// n-dimensional Brownian increments on [0, T] at dyadic levels. Level l has
/// base_steps * 2^l increments; level l+1 splits each level-l increment by
/// Brownian-bridge midpoint insertion, so pairs of fine increments sum to the
/// coarse one.
class BrownianPath {
 public:
  BrownianPath(std::size_t n, double T, std::size_t base_steps, std::size_t levels, std::uint64_t master_seed,
               std::uint64_t path_index = 0)
      : n_(n), T_(T), base_steps_(base_steps), seed_(master_seed), path_(path_index) {
    if (base_steps == 0) throw Error(ErrorKind::InvalidArgument, "base_steps must be >= 1");
    if (levels > rng::kMaxBrownianLevel) throw Error(ErrorKind::InvalidArgument, "too many refinement levels");
    increments_.resize(levels + 1);
    std::vector<double> z(n);
    {
      auto& lv = increments_[0];
      lv.resize(base_steps * n);
      const double sd = std::sqrt(T / static_cast<double>(base_steps));
      for (std::size_t k = 0; k < base_steps; ++k) {
        rng::gaussians(seed_, path_, 0, static_cast<std::uint32_t>(k), z);
        for (std::size_t i = 0; i < n; ++i) lv[k * n + i] = sd * z[i];
      }
    }
    for (std::size_t l = 1; l <= levels; ++l) {
      const auto& coarse = increments_[l - 1];
      auto& fine = increments_[l];
      const std::size_t coarse_steps = steps(l - 1);
      fine.resize(2 * coarse_steps * n);
      // Conditional on the coarse increment D over a cell of length h, the first
      // half is D/2 + sqrt(h/4) xi.
      const double sd = std::sqrt(dt(l - 1) / 4.0);
      for (std::size_t k = 0; k < coarse_steps; ++k) {
        rng::gaussians(seed_, path_, static_cast<std::uint32_t>(l), static_cast<std::uint32_t>(k), z);
        for (std::size_t i = 0; i < n; ++i) {
          const double half = 0.5 * coarse[k * n + i];
          const double b = sd * z[i];
          fine[(2 * k) * n + i] = half + b;
          fine[(2 * k + 1) * n + i] = half - b;
        }
      }
    }
  }

  std::size_t dimension() const noexcept { return n_; }
  double horizon() const noexcept { return T_; }
  std::size_t levels() const noexcept { return increments_.size() - 1; }
  std::size_t steps(std::size_t level) const noexcept { return base_steps_ << level; }
  double dt(std::size_t level) const noexcept { return T_ / static_cast<double>(steps(level)); }
  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t path_index() const noexcept { return path_; }

  /// Flattened increments of a level: entry [k * n + i] is dW_i over step k.
  std::span<const double> increments(std::size_t level) const { return increments_.at(level); }

 private:
  std::size_t n_;
  double T_;
  std::size_t base_steps_;
  std::uint64_t seed_;
  std::uint64_t path_;
  std::vector<std::vector<double>> increments_;
};

// ---------------------------------------------------------------------------
// One step

/// Scratch buffers for repeated stepping; one per worker.
struct StepWorkspace {
  explicit StepWorkspace(std::size_t n) : eval(n), drift(n), sigma(n, n) {}
  Vector eval;
  Vector drift;
  Matrix sigma;
};

/// One step of the chosen scheme, written into `next`. Throws NonFiniteState.
///   euler:           x + mu(x) dt + sigma(x) dW
///   full_truncation: coefficients at the projection of x onto the closed domain
///   projected:       euler, then projection of the result onto the closed domain
inline void step(const Model& model, Scheme scheme, std::span<const double> x, double dt, std::span<const double> dW,
                 std::span<double> next, StepWorkspace& ws) {
  const std::size_t n = model.dimension();
  if (scheme == Scheme::FullTruncation)
    project_to_closure(model.domain(), x, ws.eval);
  else
    std::copy(x.begin(), x.end(), ws.eval.begin());
  model.drift(ws.eval, ws.drift);
  model.diffusion(ws.eval, ws.sigma);
  for (std::size_t i = 0; i < n; ++i) {
    double noise = 0.0;
    for (std::size_t j = 0; j < n; ++j) noise += ws.sigma(i, j) * dW[j];
    next[i] = x[i] + ws.drift[i] * dt + noise;
  }
  if (scheme == Scheme::Projected) {
    std::copy(next.begin(), next.end(), ws.eval.begin());
    project_to_closure(model.domain(), ws.eval, next);
  }
  if (!all_finite(next)) throw Error(ErrorKind::NonFiniteState, "non-finite state after step");
}

inline Vector step(const Model& model, Scheme scheme, std::span<const double> x, double dt,
                   std::span<const double> dW) {
  StepWorkspace ws(model.dimension());
  Vector next(model.dimension());
  step(model, scheme, x, dt, dW, next, ws);
  return next;
}

// ---------------------------------------------------------------------------
// Trajectories

struct IntegrateOptions {
  Scheme scheme = Scheme::FullTruncation;
  BoundaryPolicy policy = BoundaryPolicy::Continue;
  double eps_hit = 1e-4;
};

/// Number of boundary hit flags: one per coordinate on the orthant, a single
/// radial flag on the ball, none on full space.
inline std::size_t hit_flag_count(const Model& m) {
  switch (m.domain()) {
    case Domain::PositiveOrthant: return m.dimension();
    case Domain::OpenUnitBall: return 1;
    case Domain::FullSpace: return 0;
  }
  return 0;
}

/// Marks new hits at grid index k; returns true if any flag is set.
inline bool update_hits(Domain domain, std::span<const double> x, double eps_hit, std::size_t k,
                        std::vector<std::optional<std::size_t>>& hits) {
  bool any = false;
  if (domain == Domain::PositiveOrthant) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!hits[i] && x[i] <= eps_hit) hits[i] = k;
      any = any || hits[i].has_value();
    }
  } else if (domain == Domain::OpenUnitBall) {
    if (!hits[0] && norm2(x) >= 1.0 - eps_hit) hits[0] = k;
    any = hits[0].has_value();
  }
  return any;
}

struct Trajectory {
  std::size_t n = 0;
  double dt = 0.0;
  std::vector<double> t;       // uniform grid
  std::vector<double> states;  // [(k * n) + i]
  std::vector<std::optional<std::size_t>> hit_step;  // first grid index in the eps band
  Scheme scheme = Scheme::FullTruncation;
  double eps_hit = 0.0;
  std::uint64_t seed = 0;
  std::optional<std::string> abort_reason;  // set when a NonFiniteState stopped integration

  std::size_t size() const noexcept { return t.size(); }
  std::span<const double> state(std::size_t k) const { return {states.data() + k * n, n}; }
  std::optional<double> hit_time(std::size_t flag) const {
    if (!hit_step[flag]) return std::nullopt;
    return t[*hit_step[flag]];
  }
  /// Index of the last grid point before any hit flag (or the last point).
  std::size_t last_unhit() const {
    std::size_t last = size() - 1;
    for (const auto& h : hit_step)
      if (h) last = std::min(last, *h == 0 ? 0 : *h - 1);
    return last;
  }
};

inline void require_open_domain(const Model& model, std::span<const double> x0) {
  if (x0.size() != model.dimension())
    throw Error(ErrorKind::DimensionMismatch, "initial state has dimension " + std::to_string(x0.size()) +
                                                  ", model needs " + std::to_string(model.dimension()));
  const bool ok = [&] {
    switch (model.domain()) {
      case Domain::FullSpace: return all_finite(x0);
      case Domain::PositiveOrthant: return std::all_of(x0.begin(), x0.end(), [](double v) { return v > 0.0; });
      case Domain::OpenUnitBall: return norm2_sq(x0) < 1.0;
    }
    return false;
  }();
  if (!ok) throw Error(ErrorKind::InvalidArgument, "initial state is not in the open domain");
}

/// Integrates on the grid of the given flattened increments (steps * n values).
inline Trajectory integrate(const Model& model, std::span<const double> x0, double T, double dt,
                            std::span<const double> increments, const IntegrateOptions& opt = {},
                            std::uint64_t seed = 0) {
  require_open_domain(model, x0);
  const std::size_t n = model.dimension();
  const std::size_t steps = step_count(T, dt);
  if (increments.size() != steps * n)
    throw Error(ErrorKind::DimensionMismatch, "increment count does not match T/dt");
  Trajectory tr;
  tr.n = n;
  tr.dt = dt;
  tr.scheme = opt.scheme;
  tr.eps_hit = opt.eps_hit;
  tr.seed = seed;
  tr.hit_step.assign(hit_flag_count(model), std::nullopt);
  tr.t.reserve(steps + 1);
  tr.states.reserve((steps + 1) * n);
  tr.t.push_back(0.0);
  tr.states.insert(tr.states.end(), x0.begin(), x0.end());
  bool frozen = update_hits(model.domain(), x0, opt.eps_hit, 0, tr.hit_step) && opt.policy == BoundaryPolicy::Absorb;
  StepWorkspace ws(n);
  Vector x(x0.begin(), x0.end()), next(n);
  for (std::size_t k = 0; k < steps; ++k) {
    if (!frozen) {
      try {
        step(model, opt.scheme, x, dt, increments.subspan(k * n, n), next, ws);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NonFiniteState) throw;
        tr.abort_reason = std::string(e.what()) + " at t=" + format_double(static_cast<double>(k) * dt);
        return tr;
      }
      x.swap(next);
    }
    tr.t.push_back(static_cast<double>(k + 1) * dt);
    tr.states.insert(tr.states.end(), x.begin(), x.end());
    if (update_hits(model.domain(), x, opt.eps_hit, k + 1, tr.hit_step) && opt.policy == BoundaryPolicy::Absorb)
      frozen = true;
  }
  return tr;
}

inline Trajectory integrate(const Model& model, std::span<const double> x0, const BrownianPath& path,
                            std::size_t level, const IntegrateOptions& opt = {}) {
  if (path.dimension() != model.dimension())
    throw Error(ErrorKind::DimensionMismatch, "Brownian path dimension does not match the model");
  return integrate(model, x0, path.horizon(), path.dt(level), path.increments(level), opt, path.seed());
}

// ---------------------------------------------------------------------------
// Monte Carlo

struct McOptions {
  Scheme scheme = Scheme::FullTruncation;
  double eps_hit = 1e-4;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::vector<double> checkpoints;  // times in (0, T]; T is always included
};

struct McCheckpoint {
  double t = 0.0;
  std::vector<double> mean, variance, stderr_;
};

struct McSummary {
  std::size_t paths = 0;
  std::size_t failed_paths = 0;
  std::vector<double> hit_fraction;  // per hit flag
  double hit_fraction_any = 0.0;
  std::vector<McCheckpoint> checkpoints;
  std::vector<double> path_min_mean;  // mean over paths of min_t X_i(t)
  std::vector<double> path_min_min;   // min over paths of min_t X_i(t)
  double max_norm_mean = 0.0;         // mean over paths of max_t |X(t)|
  double max_norm_max = 0.0;          // max over paths of max_t |X(t)|
  Scheme scheme = Scheme::FullTruncation;
  double dt = 0.0;
  double T = 0.0;
  double eps_hit = 0.0;
  std::uint64_t seed = 0;
  double runtime_seconds = 0.0;  // not part of the reproducible report
};

namespace detail {

struct PathRecord {
  bool failed = false;
  std::vector<std::uint8_t> hit;
  std::vector<double> at_checkpoints;  // [c * n + i]
  std::vector<double> path_min;
  double max_norm = 0.0;
};

}  // namespace detail

/// Runs independent paths (path index p uses Brownian substream p at level 0)
/// and reduces in path order, so the result does not depend on `threads`.
inline McSummary monte_carlo(const Model& model, std::span<const double> x0, double T, double dt,
                             std::size_t paths, const McOptions& opt = {}) {
  if (paths == 0) throw Error(ErrorKind::InvalidArgument, "paths must be >= 1");
  require_open_domain(model, x0);
  const auto start = std::chrono::steady_clock::now();
  const std::size_t n = model.dimension();
  const std::size_t steps = step_count(T, dt);
  const std::size_t flags = hit_flag_count(model);

  std::vector<std::size_t> cp_steps;
  for (double t : opt.checkpoints) {
    if (!(t > 0.0 && t <= T + 1e-12)) throw Error(ErrorKind::InvalidArgument, "checkpoint outside (0, T]");
    cp_steps.push_back(static_cast<std::size_t>(std::llround(t / dt)));
  }
  cp_steps.push_back(steps);
  std::sort(cp_steps.begin(), cp_steps.end());
  cp_steps.erase(std::unique(cp_steps.begin(), cp_steps.end()), cp_steps.end());

  std::vector<detail::PathRecord> records(paths);
  const double sd = std::sqrt(T / static_cast<double>(steps));
  parallel_for(paths, opt.threads, [&](std::size_t p) {
    detail::PathRecord rec;
    rec.hit.assign(flags, 0);
    rec.at_checkpoints.assign(cp_steps.size() * n, 0.0);
    rec.path_min.assign(x0.begin(), x0.end());
    rec.max_norm = norm2(x0);
    StepWorkspace ws(n);
    Vector x(x0.begin(), x0.end()), next(n), dW(n);
    std::vector<std::optional<std::size_t>> hits(flags);
    update_hits(model.domain(), x, opt.eps_hit, 0, hits);
    std::size_t cp = 0;
    try {
      for (std::size_t k = 0; k < steps; ++k) {
        rng::gaussians(opt.seed, p, 0, static_cast<std::uint32_t>(k), dW);
        for (auto& v : dW) v *= sd;
        step(model, opt.scheme, x, dt, dW, next, ws);
        x.swap(next);
        update_hits(model.domain(), x, opt.eps_hit, k + 1, hits);
        for (std::size_t i = 0; i < n; ++i) rec.path_min[i] = std::min(rec.path_min[i], x[i]);
        rec.max_norm = std::max(rec.max_norm, norm2(x));
        while (cp < cp_steps.size() && cp_steps[cp] == k + 1) {
          std::copy(x.begin(), x.end(), rec.at_checkpoints.begin() + static_cast<std::ptrdiff_t>(cp * n));
          ++cp;
        }
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NonFiniteState) throw;
      rec.failed = true;
    }
    for (std::size_t f = 0; f < flags; ++f) rec.hit[f] = hits[f].has_value() ? 1 : 0;
    records[p] = std::move(rec);
  });

  McSummary s;
  s.paths = paths;
  s.scheme = opt.scheme;
  s.dt = dt;
  s.T = T;
  s.eps_hit = opt.eps_hit;
  s.seed = opt.seed;
  s.hit_fraction.assign(flags, 0.0);
  s.path_min_mean.assign(n, 0.0);
  s.path_min_min.assign(n, std::numeric_limits<double>::infinity());
  std::vector<double> sum(cp_steps.size() * n, 0.0), sum_sq(cp_steps.size() * n, 0.0);
  std::size_t ok = 0, any_hit = 0;
  for (const auto& rec : records) {
    if (rec.failed) {
      ++s.failed_paths;
      continue;
    }
    ++ok;
    bool any = false;
    for (std::size_t f = 0; f < flags; ++f) {
      s.hit_fraction[f] += rec.hit[f];
      any = any || rec.hit[f];
    }
    any_hit += any ? 1 : 0;
    for (std::size_t i = 0; i < n; ++i) {
      s.path_min_mean[i] += rec.path_min[i];
      s.path_min_min[i] = std::min(s.path_min_min[i], rec.path_min[i]);
    }
    s.max_norm_mean += rec.max_norm;
    s.max_norm_max = std::max(s.max_norm_max, rec.max_norm);
    for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += rec.at_checkpoints[j];
  }
  const double dok = static_cast<double>(ok);
  if (ok > 0) {
    for (auto& h : s.hit_fraction) h /= dok;
    s.hit_fraction_any = static_cast<double>(any_hit) / dok;
    for (auto& v : s.path_min_mean) v /= dok;
    s.max_norm_mean /= dok;
    // Two-pass variance about the mean.
    for (const auto& rec : records) {
      if (rec.failed) continue;
      for (std::size_t j = 0; j < sum.size(); ++j) {
        const double d = rec.at_checkpoints[j] - sum[j] / dok;
        sum_sq[j] += d * d;
      }
    }
  }
  for (std::size_t c = 0; c < cp_steps.size(); ++c) {
    McCheckpoint ck;
    ck.t = static_cast<double>(cp_steps[c]) * dt;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = c * n + i;
      const double mean = ok > 0 ? sum[j] / dok : std::numeric_limits<double>::quiet_NaN();
      const double var = ok > 1 ? sum_sq[j] / (dok - 1.0) : 0.0;
      ck.mean.push_back(mean);
      ck.variance.push_back(var);
      ck.stderr_.push_back(ok > 0 ? std::sqrt(var / dok) : 0.0);
    }
    s.checkpoints.push_back(std::move(ck));
  }
  s.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return s;
}

// ---------------------------------------------------------------------------
// Pathwise-uniqueness surrogate

struct UniquenessOptions {
  std::size_t refinements = 3;
  std::size_t paths = 1;
  unsigned threads = 1;
  double eps_hit = 1e-4;
};

struct UniquenessReport {
  std::vector<double> dts;             // dt / 2^l, l = 0..refinements
  std::vector<double> scheme_gap;      // mean over paths of sup_t |X_a^(l) - X_b^(l)|
  std::vector<double> refinement_gap;  // mean over paths of sup_t |X_a^(l) - X_b^(l+1)| on the level-l grid
  double scheme_gap_order = 0.0;       // least-squares decay order of scheme_gap (0 if any gap is 0)
  double refinement_gap_order = 0.0;
  bool refinement_gap_monotone = false;
  Scheme scheme_a = Scheme::Euler;
  Scheme scheme_b = Scheme::Euler;
  std::size_t paths = 0;
  std::uint64_t seed = 0;
};

/// Least-squares slope of -log2(g_l) against l.
inline double empirical_order(std::span<const double> gaps) {
  const std::size_t m = gaps.size();
  if (m < 2) return 0.0;
  for (double g : gaps)
    if (!(g > 0.0)) return 0.0;
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t l = 0; l < m; ++l) {
    const double x = static_cast<double>(l), y = -std::log2(gaps[l]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double dm = static_cast<double>(m);
  return (dm * sxy - sx * sy) / (dm * sxx - sx * sx);
}

/// Drives both schemes with the same Brownian path at dt, dt/2, ..., using
/// bridge refinement so every level sees consistent noise.
inline UniquenessReport uniqueness_gap(const Model& model, std::span<const double> x0, double T, double dt,
                                       std::uint64_t seed, Scheme scheme_a, Scheme scheme_b,
                                       const UniquenessOptions& opt = {}) {
  require_open_domain(model, x0);
  const std::size_t base = step_count(T, dt);
  const std::size_t R = opt.refinements;
  const std::size_t n = model.dimension();
  std::vector<std::vector<double>> scheme_gaps(opt.paths, std::vector<double>(R + 1));
  std::vector<std::vector<double>> refine_gaps(opt.paths, std::vector<double>(R));
  parallel_for(opt.paths, opt.threads, [&](std::size_t p) {
    const BrownianPath path(n, T, base, R + 1, seed, p);
    IntegrateOptions ia{scheme_a, BoundaryPolicy::Continue, opt.eps_hit};
    IntegrateOptions ib{scheme_b, BoundaryPolicy::Continue, opt.eps_hit};
    std::vector<Trajectory> a, b;
    for (std::size_t l = 0; l <= R + 1; ++l) {
      a.push_back(integrate(model, x0, path, l, ia));
      b.push_back(integrate(model, x0, path, l, ib));
      if (a.back().abort_reason) throw Error(ErrorKind::NonFiniteState, *a.back().abort_reason);
      if (b.back().abort_reason) throw Error(ErrorKind::NonFiniteState, *b.back().abort_reason);
    }
    Vector diff(n);
    for (std::size_t l = 0; l <= R; ++l) {
      double sup_same = 0.0, sup_cross = 0.0;
      for (std::size_t k = 0; k < a[l].size(); ++k) {
        auto xa = a[l].state(k);
        auto xb = b[l].state(k);
        auto xf = b[l + 1].state(2 * k);
        for (std::size_t i = 0; i < n; ++i) diff[i] = xa[i] - xb[i];
        sup_same = std::max(sup_same, norm2(diff));
        for (std::size_t i = 0; i < n; ++i) diff[i] = xa[i] - xf[i];
        sup_cross = std::max(sup_cross, norm2(diff));
      }
      scheme_gaps[p][l] = sup_same;
      if (l < R) refine_gaps[p][l] = sup_cross;
    }
  });
  UniquenessReport r;
  r.scheme_a = scheme_a;
  r.scheme_b = scheme_b;
  r.paths = opt.paths;
  r.seed = seed;
  r.scheme_gap.assign(R + 1, 0.0);
  r.refinement_gap.assign(R, 0.0);
  for (std::size_t l = 0; l <= R; ++l) r.dts.push_back(dt / static_cast<double>(std::size_t{1} << l));
  for (std::size_t p = 0; p < opt.paths; ++p) {
    for (std::size_t l = 0; l <= R; ++l) r.scheme_gap[l] += scheme_gaps[p][l];
    for (std::size_t l = 0; l < R; ++l) r.refinement_gap[l] += refine_gaps[p][l];
  }
  for (auto& g : r.scheme_gap) g /= static_cast<double>(opt.paths);
  for (auto& g : r.refinement_gap) g /= static_cast<double>(opt.paths);
  r.scheme_gap_order = empirical_order(r.scheme_gap);
  r.refinement_gap_order = empirical_order(r.refinement_gap);
  r.refinement_gap_monotone = true;
  for (std::size_t l = 1; l < R; ++l)
    if (!(r.refinement_gap[l] < r.refinement_gap[l - 1])) r.refinement_gap_monotone = false;
  return r;
}

}  // namespace degsde
