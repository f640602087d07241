#pragma once

// JSON and CSV emission for reports and trajectories. Reports never contain
// wall-clock data; runtimes go into the run manifest only.

#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "degsde/boundary.hpp"
#include "degsde/comparison.hpp"
#include "degsde/conditions.hpp"
#include "degsde/modulus.hpp"
#include "degsde/paths.hpp"

namespace degsde::io {

using json = nlohmann::ordered_json;

inline constexpr int kFormatVersion = 1;

/// Finite doubles as numbers; non-finite values as the strings "inf", "-inf", "nan".
inline json num(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

inline json nums(std::span<const double> v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json to_json(const ConditionReport& r) {
  json j;
  j["assumption"] = r.assumption;
  j["verdict"] = to_string(r.verdict);
  j["margin"] = num(r.margin);
  j["witnesses"] = json::array();
  for (const auto& w : r.witnesses) j["witnesses"].push_back(nums(w));
  json cfg = json::object();
  for (const auto& [k, v] : r.config) cfg[k] = num(v);
  j["config"] = cfg;
  if (!r.note.empty()) j["note"] = r.note;
  if (!r.parts.empty()) {
    j["parts"] = json::array();
    for (const auto& p : r.parts) j["parts"].push_back(to_json(p));
  }
  return j;
}

inline json to_json(const RadialEnvelope& e) {
  return {{"i", e.i + 1},          {"R", num(e.R)},
          {"samples_per_slice", e.samples_per_slice},
          {"seed", e.seed},        {"r_grid", nums(e.r_grid)},
          {"a_plus", nums(e.a_plus)}, {"b_minus", nums(e.b_minus)}};
}

inline json to_json(const McSummary& s) {
  json j;
  j["paths"] = s.paths;
  j["failed_paths"] = s.failed_paths;
  j["scheme"] = to_string(s.scheme);
  j["dt"] = num(s.dt);
  j["T"] = num(s.T);
  j["eps_hit"] = num(s.eps_hit);
  j["seed"] = s.seed;
  j["hit_fraction"] = nums(s.hit_fraction);
  j["hit_fraction_any"] = num(s.hit_fraction_any);
  j["checkpoints"] = json::array();
  for (const auto& c : s.checkpoints)
    j["checkpoints"].push_back(
        {{"t", num(c.t)}, {"mean", nums(c.mean)}, {"variance", nums(c.variance)}, {"stderr", nums(c.stderr_)}});
  j["path_min_mean"] = nums(s.path_min_mean);
  j["path_min_min"] = nums(s.path_min_min);
  j["max_norm_mean"] = num(s.max_norm_mean);
  j["max_norm_max"] = num(s.max_norm_max);
  return j;
}

inline json to_json(const UniquenessReport& r) {
  return {{"scheme_a", to_string(r.scheme_a)},
          {"scheme_b", to_string(r.scheme_b)},
          {"paths", r.paths},
          {"seed", r.seed},
          {"dts", nums(r.dts)},
          {"scheme_gap", nums(r.scheme_gap)},
          {"refinement_gap", nums(r.refinement_gap)},
          {"scheme_gap_order", num(r.scheme_gap_order)},
          {"refinement_gap_order", num(r.refinement_gap_order)},
          {"refinement_gap_monotone", r.refinement_gap_monotone}};
}

inline json to_json(const CouplingReport& r) {
  return {{"verdict", to_string(r.verdict)},
          {"orientation", r.lower ? "Z <= p(Y)" : "p(Y) <= Z"},
          {"margin_min", num(r.margin_min)},
          {"violations", r.violations},
          {"violation_fraction", num(r.violation_fraction)},
          {"grid_points", r.p.size()},
          {"tol", num(r.tol)},
          {"dt", num(r.dt)},
          {"seed", r.seed},
          {"quadratic_variation", num(r.quadratic_variation)},
          {"elapsed", num(r.elapsed)},
          {"phi_end", num(r.phi_end)},
          {"time_change_max_ratio", num(r.time_change_max_ratio)},
          {"trajectory_points", r.trajectory_points},
          {"note", r.note}};
}

inline json to_json(const BoundaryVerdict& v) {
  json j;
  j["endpoint"] = to_string(v.endpoint);
  j["endpoint_value"] = num(v.endpoint_value);
  j["classification"] = to_string(v.classification);
  j["scale_integral_estimate"] = num(v.scale_integral_estimate);
  j["diverges"] = v.diverges;
  j["distances"] = nums(v.distances);
  j["partial_integrals"] = nums(v.partial_integrals);
  j["slopes"] = nums(v.slopes);
  j["exponent"] = v.exponent ? num(*v.exponent) : json(nullptr);
  if (!v.note.empty()) j["note"] = v.note;
  return j;
}

/// Wraps a report with the format version.
inline json document(const std::string& kind, json report) {
  json j;
  j["format_version"] = kFormatVersion;
  j["kind"] = kind;
  j["report"] = std::move(report);
  return j;
}

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  os << "# format_version=" << kFormatVersion << "\n";
  os << "t";
  for (std::size_t i = 0; i < tr.n; ++i) os << ",x" << (i + 1);
  os << "\n";
  for (std::size_t k = 0; k < tr.size(); ++k) {
    os << fmt17(tr.t[k]);
    for (double v : tr.state(k)) os << ',' << fmt17(v);
    os << "\n";
  }
}

inline void write_coupling_csv(std::ostream& os, const CouplingReport& r) {
  os << "# format_version=" << kFormatVersion << "\n";
  os << "t,p,z\n";
  const std::size_t m = std::min(r.p.size(), r.z.size());
  for (std::size_t k = 0; k < m; ++k) os << fmt17(r.t[k]) << ',' << fmt17(r.p[k]) << ',' << fmt17(r.z[k]) << "\n";
}

/// Rows (k, s_k) followed by the phi_k grid over [-t_max, t_max].
inline void write_modulus_csv(std::ostream& os, const ModulusLadder& ladder, std::size_t points, double t_max) {
  os << "# format_version=" << kFormatVersion << "\n";
  os << "k,s_k\n";
  for (std::size_t k = 0; k < ladder.s().size(); ++k) os << k << ',' << fmt17(ladder.s()[k]) << "\n";
  os << "\nk,t,phi,phi_prime,phi_second\n";
  for (std::size_t k = 1; k <= ladder.K(); ++k) {
    for (std::size_t j = 0; j < points; ++j) {
      const double t = points == 1 ? 0.0 : -t_max + 2.0 * t_max * static_cast<double>(j) / static_cast<double>(points - 1);
      os << k << ',' << fmt17(t) << ',' << fmt17(ladder.phi(k, t)) << ',' << fmt17(ladder.phi_prime(k, t)) << ','
         << fmt17(ladder.phi_second(k, t)) << "\n";
    }
  }
}

}  // namespace degsde::io
