#include "cli.hpp"

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <toml.hpp>

#include "degsde/degsde.hpp"
#include "degsde/io.hpp"

namespace degsde::cli {
namespace {

using json = io::json;
namespace fs = std::filesystem;

const std::vector<std::string> kCommands{"simulate", "mc", "check", "compare", "classify", "modulus", "uniqueness"};

std::string config_error_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

/// Typed access to one TOML table. Every value read (or defaulted) is echoed
/// into `echo`; finish() rejects keys that were never read.
class Section {
 public:
  Section(const toml::table* table, std::string path, json* echo)
      : table_(table), path_(std::move(path)), echo_(echo) {}

  bool has(const std::string& key) const { return table_ && table_->contains(key); }

  double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
    const toml::node* n = node(key);
    double v;
    if (!n) {
      v = require(fallback, key);
    } else if (auto i = n->value_exact<std::int64_t>()) {
      v = static_cast<double>(*i);
    } else if (auto f = n->value_exact<double>()) {
      v = *f;
    } else {
      throw type_error(key, "a number");
    }
    (*echo_)[key] = io::num(v);
    return v;
  }

  std::int64_t integer(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt) {
    const toml::node* n = node(key);
    std::int64_t v;
    if (!n) {
      v = require(fallback, key);
    } else if (auto i = n->value_exact<std::int64_t>()) {
      v = *i;
    } else {
      throw type_error(key, "an integer");
    }
    (*echo_)[key] = v;
    return v;
  }

  std::size_t count(const std::string& key, std::optional<std::int64_t> fallback = std::nullopt) {
    const std::int64_t v = integer(key, fallback);
    if (v < 0) throw Error(ErrorKind::ConfigError, "'" + full(key) + "' must be non-negative");
    return static_cast<std::size_t>(v);
  }

  bool boolean(const std::string& key, bool fallback) {
    const toml::node* n = node(key);
    bool v = fallback;
    if (n) {
      auto b = n->value_exact<bool>();
      if (!b) throw type_error(key, "a boolean");
      v = *b;
    }
    (*echo_)[key] = v;
    return v;
  }

  std::string string(const std::string& key, std::optional<std::string> fallback = std::nullopt) {
    const toml::node* n = node(key);
    std::string v;
    if (!n) {
      v = require(fallback, key);
    } else if (auto s = n->value_exact<std::string>()) {
      v = *s;
    } else {
      throw type_error(key, "a string");
    }
    (*echo_)[key] = v;
    return v;
  }

  std::optional<std::string> optional_string(const std::string& key) {
    if (!node(key)) return std::nullopt;
    return string(key);
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> fallback = std::nullopt) {
    const toml::node* n = node(key);
    std::vector<double> v;
    if (!n) {
      v = require(fallback, key);
    } else if (auto* a = n->as_array()) {
      for (const auto& e : *a) v.push_back(scalar_number(e, key));
    } else {
      v.push_back(scalar_number(*n, key));
    }
    (*echo_)[key] = io::nums(v);
    return v;
  }

  /// Array of expressions; numbers are accepted and printed exactly.
  std::vector<std::string> expressions(const std::string& key) {
    const toml::node* n = node(key);
    if (!n) throw Error(ErrorKind::ConfigError, "missing key '" + full(key) + "'");
    const auto* a = n->as_array();
    if (!a) throw type_error(key, "an array of expressions");
    std::vector<std::string> v;
    for (const auto& e : *a) v.push_back(expression(e, key));
    (*echo_)[key] = v;
    return v;
  }

  std::vector<std::vector<std::string>> expression_matrix(const std::string& key) {
    const toml::node* n = node(key);
    if (!n) throw Error(ErrorKind::ConfigError, "missing key '" + full(key) + "'");
    const auto* a = n->as_array();
    if (!a) throw type_error(key, "an array of rows");
    std::vector<std::vector<std::string>> v;
    for (const auto& row : *a) {
      const auto* r = row.as_array();
      if (!r) throw type_error(key, "an array of rows");
      std::vector<std::string> out;
      for (const auto& e : *r) out.push_back(expression(e, key));
      v.push_back(std::move(out));
    }
    (*echo_)[key] = v;
    return v;
  }

  std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback) {
    const toml::node* n = node(key);
    std::vector<std::string> v = std::move(fallback);
    if (n) {
      const auto* a = n->as_array();
      if (!a) throw type_error(key, "an array of strings");
      v.clear();
      for (const auto& e : *a) {
        auto s = e.value_exact<std::string>();
        if (!s) throw type_error(key, "an array of strings");
        v.push_back(*s);
      }
    }
    (*echo_)[key] = v;
    return v;
  }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, _] : *table_) {
      const std::string key(k.str());
      if (!used_.count(key)) throw Error(ErrorKind::ConfigError, "unknown key '" + full(key) + "'");
    }
  }

 private:
  const toml::node* node(const std::string& key) {
    used_.insert(key);
    if (!table_) return nullptr;
    return table_->get(key);
  }

  template <class T>
  T require(const std::optional<T>& fallback, const std::string& key) const {
    if (!fallback) throw Error(ErrorKind::ConfigError, "missing key '" + full(key) + "'");
    return *fallback;
  }

  double scalar_number(const toml::node& n, const std::string& key) const {
    if (auto i = n.value_exact<std::int64_t>()) return static_cast<double>(*i);
    if (auto f = n.value_exact<double>()) return *f;
    throw type_error(key, "numbers");
  }

  std::string expression(const toml::node& n, const std::string& key) const {
    if (auto s = n.value_exact<std::string>()) return *s;
    if (auto i = n.value_exact<std::int64_t>()) return std::to_string(*i);
    if (auto f = n.value_exact<double>()) return format_double(*f);
    throw type_error(key, "expressions");
  }

  Error type_error(const std::string& key, const std::string& what) const {
    return Error(ErrorKind::ConfigError, "'" + full(key) + "' must be " + what);
  }

  std::string full(const std::string& key) const { return config_error_path(path_, key); }

  const toml::table* table_;
  std::string path_;
  json* echo_;
  std::set<std::string> used_;
};

const toml::table* subtable(const toml::table& root, const std::string& key) {
  const toml::node* n = root.get(key);
  if (!n) return nullptr;
  const auto* t = n->as_table();
  if (!t) throw Error(ErrorKind::ConfigError, "'" + key + "' must be a table");
  return t;
}

// ---------------------------------------------------------------------------
// Section readers

struct Common {
  std::uint64_t seed = 1;
  std::optional<std::string> output_dir;
  std::optional<unsigned> threads;
};

ModelSpec read_model(Section& s) {
  ModelSpec spec;
  spec.kind = s.string("kind");
  if (spec.kind == "bessel1d") {
    spec.n = s.count("n", 1);
    spec.c = s.number("c");
  } else if (spec.kind == "unit_ball") {
    spec.n = s.count("n");
    spec.c = s.number("c");
    spec.theta = s.numbers("theta", std::vector<double>{0.0});
  } else if (spec.kind == "multicir" || spec.kind == "power_beta" || spec.kind == "custom") {
    spec.n = s.count("n");
    spec.mu = s.expressions("mu");
    spec.sigma = s.expression_matrix("sigma");
    if (spec.kind == "power_beta") spec.beta = s.number("beta");
    if (spec.kind != "multicir") spec.domain = s.optional_string("domain");
  } else {
    throw Error(ErrorKind::UnknownModel, "unknown model '" + spec.kind + "'");
  }
  s.finish();
  return spec;
}

struct SimulateCfg {
  std::vector<double> x0;
  double T = 1, dt = 1e-3, eps_hit = 1e-4;
  Scheme scheme = Scheme::FullTruncation;
  BoundaryPolicy policy = BoundaryPolicy::Continue;
  std::uint64_t path_index = 0;
  bool csv = true;
};

SimulateCfg read_simulate(Section& s) {
  SimulateCfg c;
  c.x0 = s.numbers("x0");
  c.T = s.number("T");
  c.dt = s.number("dt");
  c.scheme = parse_scheme(s.string("scheme", "full_truncation"));
  c.policy = parse_boundary_policy(s.string("boundary_policy", "continue"));
  c.eps_hit = s.number("eps_hit", 1e-4);
  c.path_index = s.count("path_index", 0);
  c.csv = s.boolean("csv", true);
  s.finish();
  return c;
}

struct McCfg {
  std::vector<double> x0, checkpoints;
  double T = 1, dt = 1e-3, eps_hit = 1e-4;
  std::size_t paths = 1000;
  Scheme scheme = Scheme::FullTruncation;
};

McCfg read_mc(Section& s) {
  McCfg c;
  c.x0 = s.numbers("x0");
  c.T = s.number("T");
  c.dt = s.number("dt");
  c.paths = s.count("paths");
  c.scheme = parse_scheme(s.string("scheme", "full_truncation"));
  c.eps_hit = s.number("eps_hit", 1e-4);
  c.checkpoints = s.numbers("checkpoints", std::vector<double>{});
  s.finish();
  return c;
}

struct CheckCfg {
  std::vector<std::string> assumptions;
  double R = 10, r_min = 1e-2, delta = 0.1, epsilon = 1.0, a1_R = 1.0;
  std::size_t r_points = 32, samples = 256, band_samples = 4096, pairs = 20000, directions = 256;
  std::optional<std::string> sigma_tilde, modulus;
  bool check_iii = true;
  std::vector<double> R_list;
};

CheckCfg read_check(Section& s) {
  CheckCfg c;
  c.assumptions = s.strings("assumptions", {});
  c.R = s.number("R", 10.0);
  c.r_min = s.number("r_min", 1e-2);
  c.r_points = s.count("r_points", 32);
  c.samples = s.count("samples", 256);
  c.delta = s.number("delta", 0.1);
  c.band_samples = s.count("band_samples", 4096);
  c.sigma_tilde = s.optional_string("sigma_tilde");
  c.check_iii = s.boolean("check_iii", true);
  c.modulus = s.optional_string("modulus");
  c.epsilon = s.number("epsilon", 1.0);
  c.a1_R = s.number("a1_R", 1.0);
  c.pairs = s.count("pairs", 20000);
  c.R_list = s.numbers("R_list", std::vector<double>{1.0, 10.0, 100.0});
  c.directions = s.count("directions", 256);
  s.finish();
  return c;
}

struct CompareCfg {
  std::size_t i = 1;
  std::vector<double> x0;
  double T = 1, dt = 1e-3;
  CouplingOptions opt;
  bool csv = true;
};

CompareCfg read_compare(Section& s) {
  CompareCfg c;
  c.i = s.count("i", 1);
  c.x0 = s.numbers("x0");
  c.T = s.number("T");
  c.dt = s.number("dt");
  c.opt.scheme = parse_scheme(s.string("scheme", "full_truncation"));
  c.opt.eps_hit = s.number("eps_hit", 1e-4);
  c.opt.c_tol = s.number("c_tol", 5.0);
  c.opt.path_index = s.count("path_index", 0);
  c.opt.r_min = s.number("r_min", 1e-3);
  c.opt.r_points = s.count("r_points", 64);
  c.opt.envelope.R = s.number("R", 10.0);
  c.opt.envelope.samples = s.count("samples", 256);
  c.csv = s.boolean("csv", true);
  s.finish();
  return c;
}

struct ClassifyCfg {
  Diffusion1D diffusion;
  std::vector<std::string> endpoints;
};

ClassifyCfg read_classify(Section& s) {
  ClassifyCfg c;
  const std::string kind = s.string("kind");
  if (kind == "ball_dominating") {
    const double n = s.number("n");
    c.diffusion = ball_dominating_diffusion(n, s.number("kappa"));
  } else if (kind == "bessel1d") {
    c.diffusion = bessel_diffusion(s.number("c"));
  } else if (kind == "power_law") {
    const double p = s.number("p");
    c.diffusion = power_law_diffusion(p, s.number("q"));
  } else if (kind == "custom") {
    const Expr drift = Expr::parse(s.string("drift"), 1);
    const Expr diff_sq = Expr::parse(s.string("diff_sq"), 1);
    c.diffusion.name = "custom";
    c.diffusion.drift = [drift](double y) { return drift.evaluate(std::span<const double>(&y, 1)); };
    c.diffusion.diff_sq = [diff_sq](double y) { return diff_sq.evaluate(std::span<const double>(&y, 1)); };
    c.diffusion.l = s.number("l");
    c.diffusion.r = s.number("r");
    if (!(c.diffusion.l < c.diffusion.r)) throw Error(ErrorKind::ConfigError, "classify needs l < r");
  } else {
    throw Error(ErrorKind::ConfigError, "unknown diffusion kind '" + kind + "'");
  }
  if (s.has("y0")) c.diffusion.y0 = s.number("y0");
  c.endpoints = s.strings("endpoints", {"l", "r"});
  for (const auto& e : c.endpoints)
    if (e != "l" && e != "r") throw Error(ErrorKind::ConfigError, "endpoints must be \"l\" or \"r\"");
  s.finish();
  return c;
}

struct ModulusCfg {
  std::string rho;
  double epsilon = 1.0, t_max = 3.0;
  std::size_t K = 8, grid_cells = 4096, points = 1001;
};

ModulusCfg read_modulus(Section& s) {
  ModulusCfg c;
  c.rho = s.string("rho");
  c.epsilon = s.number("epsilon", 1.0);
  c.K = s.count("K", 8);
  c.grid_cells = s.count("grid_cells", 4096);
  c.points = s.count("points", 1001);
  c.t_max = s.number("t_max", 3.0);
  s.finish();
  return c;
}

struct UniquenessCfg {
  std::vector<double> x0;
  double T = 1, dt = 1e-2;
  Scheme a = Scheme::Euler, b = Scheme::FullTruncation;
  UniquenessOptions opt;
};

UniquenessCfg read_uniqueness(Section& s) {
  UniquenessCfg c;
  c.x0 = s.numbers("x0");
  c.T = s.number("T");
  c.dt = s.number("dt");
  c.a = parse_scheme(s.string("scheme_a", "euler"));
  c.b = parse_scheme(s.string("scheme_b", "full_truncation"));
  c.opt.refinements = s.count("refinements", 3);
  c.opt.paths = s.count("paths", 1);
  c.opt.eps_hit = s.number("eps_hit", 1e-4);
  s.finish();
  return c;
}

// ---------------------------------------------------------------------------
// Overrides

void apply_override(toml::table& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw Error(ErrorKind::ConfigError, "--set expects key=value, got '" + assignment + "'");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  toml::table parsed;
  try {
    parsed = toml::parse("v = " + text);
  } catch (const toml::parse_error&) {
    parsed.insert_or_assign("v", text);
  }
  toml::table* t = &root;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw Error(ErrorKind::ConfigError, "bad --set key '" + path + "'");
    if (dot == std::string::npos) {
      t->insert_or_assign(key, *parsed.get("v"));
      return;
    }
    toml::node* child = t->get(key);
    if (!child) {
      t->insert_or_assign(key, toml::table{});
      child = t->get(key);
    }
    t = child->as_table();
    if (!t) throw Error(ErrorKind::ConfigError, "--set path '" + path + "' crosses a non-table value");
    start = dot + 1;
  }
}

// ---------------------------------------------------------------------------
// Output

void write_json(const fs::path& file, const json& j) {
  std::ofstream os(file);
  if (!os) throw fs::filesystem_error("cannot write", file, std::make_error_code(std::errc::io_error));
  os << j.dump(2) << "\n";
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

Modulus modulus_from(const std::string& rho, double epsilon) {
  if (rho == "sqrt") return power_modulus(0.5, true, epsilon);
  if (rho == "linear") return power_modulus(1.0, true, epsilon);
  return expr_modulus(Expr::parse(rho, 1), epsilon);
}

struct Outcome {
  int code = kOk;
  json report;
  std::vector<std::string> files;
};

struct Context {
  std::string command;
  Common common;
  unsigned threads = 1;
  fs::path out_dir;
};

json coords_or_null(const std::optional<double>& v) { return v ? io::num(*v) : json(nullptr); }

Outcome run_simulate(const Context& ctx, const Model& model, const SimulateCfg& c) {
  const BrownianPath path(model.dimension(), c.T, step_count(c.T, c.dt), 0, ctx.common.seed, c.path_index);
  const Trajectory tr = integrate(model, c.x0, path, 0, IntegrateOptions{c.scheme, c.policy, c.eps_hit});
  Outcome o;
  json r;
  r["model"] = model.name();
  r["n"] = model.dimension();
  r["T"] = io::num(c.T);
  r["dt"] = io::num(c.dt);
  r["steps"] = tr.size() - 1;
  r["scheme"] = to_string(c.scheme);
  r["boundary_policy"] = to_string(c.policy);
  r["eps_hit"] = io::num(c.eps_hit);
  r["seed"] = ctx.common.seed;
  r["path_index"] = c.path_index;
  r["hit_times"] = json::array();
  for (std::size_t f = 0; f < tr.hit_step.size(); ++f) r["hit_times"].push_back(coords_or_null(tr.hit_time(f)));
  r["final_state"] = io::nums(tr.state(tr.size() - 1));
  r["abort_reason"] = tr.abort_reason ? json(*tr.abort_reason) : json(nullptr);
  o.report = r;
  if (c.csv) {
    std::ofstream os(ctx.out_dir / "trajectory.csv");
    io::write_trajectory_csv(os, tr);
    o.files.push_back("trajectory.csv");
  }
  if (tr.abort_reason) o.code = kNumerical;
  return o;
}

Outcome run_mc(const Context& ctx, const Model& model, const McCfg& c) {
  McOptions opt;
  opt.scheme = c.scheme;
  opt.eps_hit = c.eps_hit;
  opt.seed = ctx.common.seed;
  opt.threads = ctx.threads;
  opt.checkpoints = c.checkpoints;
  const McSummary s = monte_carlo(model, c.x0, c.T, c.dt, c.paths, opt);
  Outcome o;
  o.report = io::to_json(s);
  o.report["model"] = model.name();
  return o;
}

Outcome run_check(const Context& ctx, const Model& model, const CheckCfg& c) {
  std::vector<std::string> which = c.assumptions;
  if (which.empty()) {
    switch (model.domain()) {
      case Domain::PositiveOrthant: which = {"A3"}; break;
      case Domain::OpenUnitBall: which = {"unit_ball"}; break;
      case Domain::FullSpace: which = {"growth"}; break;
    }
  }
  std::vector<ConditionReport> reports;
  json envelopes = json::array();
  for (const auto& a : which) {
    if (a == "A3") {
      const auto grid = geometric_grid(c.r_min, c.R, c.r_points);
      std::vector<RadialEnvelope> envs;
      for (std::size_t i = 0; i < model.dimension(); ++i) {
        envs.push_back(envelope(model, i, grid, EnvelopeOptions{c.R, c.samples, ctx.common.seed, ctx.threads}));
        envelopes.push_back(io::to_json(envs.back()));
      }
      A3Options opt;
      opt.delta = c.delta;
      opt.R = c.R;
      opt.band_samples = c.band_samples;
      opt.check_iii = c.check_iii;
      opt.seed = ctx.common.seed;
      if (c.sigma_tilde) opt.sigma_tilde = Expr::parse(*c.sigma_tilde, 1);
      reports.push_back(check_A3(model, envs, opt));
    } else if (a == "A1") {
      if (!c.modulus) throw Error(ErrorKind::ConfigError, "A1 check needs check.modulus");
      reports.push_back(check_A1_modulus(model, modulus_from(*c.modulus, c.epsilon),
                                         A1Options{c.a1_R, c.pairs, ctx.common.seed}));
    } else if (a == "growth") {
      GrowthOptions g{c.directions, ctx.common.seed};
      auto d = check_linear_growth(drift_norm(model), model.dimension(), model.domain(), c.R_list, g);
      d.assumption = "A1(iii) drift";
      auto s = check_linear_growth(diffusion_norm(model), model.dimension(), model.domain(), c.R_list, g);
      s.assumption = "A1(iii) diffusion";
      reports.push_back(d);
      reports.push_back(s);
    } else if (a == "unit_ball") {
      if (!model.unit_ball()) throw Error(ErrorKind::ConfigError, "unit_ball check needs a unit_ball model");
      const auto& p = *model.unit_ball();
      reports.push_back(check_unit_ball_condition(p.c, p.theta_norm, model.dimension()));
    } else {
      throw Error(ErrorKind::ConfigError, "unknown assumption '" + a + "'");
    }
  }
  Outcome o;
  bool failed = false, inconclusive = false;
  json list = json::array();
  for (const auto& r : reports) {
    list.push_back(io::to_json(r));
    failed = failed || r.verdict == Verdict::Fail;
    inconclusive = inconclusive || r.verdict == Verdict::Inconclusive;
  }
  o.report["verdict"] = failed ? "fail" : (inconclusive ? "inconclusive" : "pass");
  o.report["reports"] = list;
  if (!envelopes.empty()) o.report["envelopes"] = envelopes;
  if (failed) o.code = kVerdictFailure;
  return o;
}

Outcome run_compare(const Context& ctx, const Model& model, const CompareCfg& c) {
  if (c.i == 0) throw Error(ErrorKind::ConfigError, "compare.i is 1-based");
  CouplingOptions opt = c.opt;
  opt.envelope.seed = ctx.common.seed;
  opt.envelope.threads = ctx.threads;
  const CouplingReport r = couple(model, c.i - 1, c.x0, c.T, c.dt, ctx.common.seed, opt);
  Outcome o;
  o.report = io::to_json(r);
  if (c.csv) {
    std::ofstream os(ctx.out_dir / "compare.csv");
    io::write_coupling_csv(os, r);
    o.files.push_back("compare.csv");
  }
  if (r.verdict == CouplingVerdict::Violated) o.code = kVerdictFailure;
  return o;
}

Outcome run_classify(const ClassifyCfg& c) {
  Outcome o;
  o.report["diffusion"] = c.diffusion.name;
  o.report["y0"] = io::num(c.diffusion.reference());
  o.report["verdicts"] = json::array();
  for (const auto& e : c.endpoints)
    o.report["verdicts"].push_back(io::to_json(classify(c.diffusion, e == "l" ? Endpoint::Left : Endpoint::Right)));
  return o;
}

Outcome run_modulus(const Context& ctx, const ModulusCfg& c) {
  const Modulus m = modulus_from(c.rho, c.epsilon);
  const DivergenceProbe probe = probe_divergence(m);
  const ModulusLadder ladder(m, LadderOptions{c.K, c.grid_cells});
  Outcome o;
  o.report["rho"] = m.name;
  o.report["epsilon"] = io::num(m.epsilon);
  o.report["K"] = ladder.K();
  o.report["probe"] = {{"deltas", io::nums(probe.deltas)},
                       {"integrals", io::nums(probe.integrals)},
                       {"diverges", probe.diverges}};
  o.report["s"] = io::nums(ladder.s());
  json bumps = json::array();
  for (std::size_t k = 1; k <= ladder.K(); ++k) {
    const Bump& b = ladder.bump(k);
    bumps.push_back({{"k", k},
                     {"lo", io::num(b.lo)},
                     {"hi", io::num(b.hi)},
                     {"mass", io::num(b.mass_total)},
                     {"ramp", io::num(b.ramp)},
                     {"offset", io::num(ladder.offset(k))}});
  }
  o.report["bumps"] = bumps;
  std::ofstream os(ctx.out_dir / "modulus.csv");
  io::write_modulus_csv(os, ladder, c.points, c.t_max);
  o.files.push_back("modulus.csv");
  return o;
}

Outcome run_uniqueness(const Context& ctx, const Model& model, const UniquenessCfg& c) {
  UniquenessOptions opt = c.opt;
  opt.threads = ctx.threads;
  const UniquenessReport r = uniqueness_gap(model, c.x0, c.T, c.dt, ctx.common.seed, c.a, c.b, opt);
  Outcome o;
  o.report = io::to_json(r);
  return o;
}

/// Reads every section present so typos anywhere in the file are reported,
/// then runs the active one.
Outcome dispatch(const Context& ctx, const toml::table& root, json& echo) {
  std::optional<ModelSpec> spec;
  if (const auto* t = subtable(root, "model")) {
    Section s(t, "model", &echo["model"]);
    spec = read_model(s);
  }
  std::map<std::string, std::function<Outcome()>> runners;
  auto need_model = [&]() -> Model {
    if (!spec) throw Error(ErrorKind::ConfigError, "command '" + ctx.command + "' needs a [model] section");
    return build_model(*spec);
  };
  for (const auto& cmd : kCommands) {
    const toml::table* t = subtable(root, cmd);
    if (!t && cmd != ctx.command) continue;
    if (!t) throw Error(ErrorKind::ConfigError, "config has no [" + cmd + "] section");
    json& e = echo[cmd];
    e = json::object();
    Section s(t, cmd, &e);
    if (cmd == "simulate") {
      auto c = read_simulate(s);
      runners[cmd] = [&, c] { return run_simulate(ctx, need_model(), c); };
    } else if (cmd == "mc") {
      auto c = read_mc(s);
      runners[cmd] = [&, c] { return run_mc(ctx, need_model(), c); };
    } else if (cmd == "check") {
      auto c = read_check(s);
      runners[cmd] = [&, c] { return run_check(ctx, need_model(), c); };
    } else if (cmd == "compare") {
      auto c = read_compare(s);
      runners[cmd] = [&, c] { return run_compare(ctx, need_model(), c); };
    } else if (cmd == "classify") {
      auto c = read_classify(s);
      runners[cmd] = [c] { return run_classify(c); };
    } else if (cmd == "modulus") {
      auto c = read_modulus(s);
      runners[cmd] = [&, c] { return run_modulus(ctx, c); };
    } else if (cmd == "uniqueness") {
      auto c = read_uniqueness(s);
      runners[cmd] = [&, c] { return run_uniqueness(ctx, need_model(), c); };
    }
  }
  return runners.at(ctx.command)();
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulation and diagnostics for degenerate SDEs", "degsde"};
  app.require_subcommand(1, 1);
  std::string config_path, out_opt;
  std::optional<std::uint64_t> seed_opt;
  std::optional<unsigned> threads_opt;
  std::vector<std::string> overrides;
  for (const auto& cmd : kCommands) {
    auto* sub = app.add_subcommand(cmd);
    sub->add_option("--config,-c", config_path, "TOML run config")->required();
    sub->add_option("--seed", seed_opt, "master seed (overrides config)");
    sub->add_option("--threads", threads_opt, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out,-o", out_opt, "output directory");
    sub->add_option("--set", overrides, "override a config value, e.g. mc.dt=1e-4");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }
  Context ctx;
  ctx.command = app.get_subcommands().front()->get_name();

  const auto start = std::chrono::steady_clock::now();
  const std::string started = utc_now();
  json echo = json::object();
  std::optional<fs::path> manifest_dir;
  auto write_manifest = [&](int code, const std::vector<std::string>& files, const std::string& error) {
    if (!manifest_dir) return;
    json m;
    m["format_version"] = io::kFormatVersion;
    m["command"] = ctx.command;
    m["config"] = echo;
    m["outputs"] = files;
    m["exit_code"] = code;
    if (!error.empty()) m["error"] = error;
    m["runtime"] = {{"started_utc", started},
                    {"seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()},
                    {"threads", ctx.threads}};
    try {
      write_json(*manifest_dir / "manifest.json", m);
    } catch (const std::exception& e) {
      err << "degsde: cannot write manifest: " << e.what() << "\n";
    }
  };

  try {
    if (!fs::exists(config_path)) throw Error(ErrorKind::ConfigError, "config file not found: " + config_path);
    toml::table root = toml::parse_file(config_path);
    for (const auto& o : overrides) apply_override(root, o);

    Section top(&root, "", &echo);
    ctx.common.seed = static_cast<std::uint64_t>(top.integer("seed", 1));
    ctx.common.output_dir = top.optional_string("output_dir");
    if (top.has("threads")) ctx.common.threads = static_cast<unsigned>(top.count("threads"));
    std::set<std::string> sections(kCommands.begin(), kCommands.end());
    sections.insert("model");
    if (seed_opt) {
      ctx.common.seed = *seed_opt;
      echo["seed"] = *seed_opt;
    }
    ctx.threads = threads_opt ? *threads_opt : (ctx.common.threads ? *ctx.common.threads : default_threads());

    if (!out_opt.empty())
      ctx.out_dir = out_opt;
    else if (ctx.common.output_dir)
      ctx.out_dir = *ctx.common.output_dir;
    else if (const char* env = std::getenv("DEGSDE_OUTPUT_DIR"); env && *env)
      ctx.out_dir = env;
    else
      ctx.out_dir = ".";
    fs::create_directories(ctx.out_dir);
    manifest_dir = ctx.out_dir;

    for (const auto& [k, _] : root) {
      const std::string key(k.str());
      if (key != "seed" && key != "output_dir" && key != "threads" && !sections.count(key))
        throw Error(ErrorKind::ConfigError, "unknown key '" + key + "'");
    }

    Outcome o = dispatch(ctx, root, echo);
    const std::string report_name = ctx.command + ".json";
    write_json(ctx.out_dir / report_name, io::document(ctx.command, o.report));
    o.files.insert(o.files.begin(), report_name);
    write_manifest(o.code, o.files, "");
    out << (ctx.out_dir / report_name).string() << "\n";
    return o.code;
  } catch (const Error& e) {
    const int code = is_numerical(e.kind()) ? kNumerical : kUsage;
    err << "degsde: " << e.what() << "\n";
    write_manifest(code, {}, e.what());
    return code;
  } catch (const toml::parse_error& e) {
    err << "degsde: config parse error: " << e.description() << " at line " << e.source().begin.line << "\n";
    return kUsage;
  } catch (const fs::filesystem_error& e) {
    err << "degsde: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "degsde: " << e.what() << "\n";
    write_manifest(kNumerical, {}, e.what());
    return kNumerical;
  }
}

}  // namespace degsde::cli
