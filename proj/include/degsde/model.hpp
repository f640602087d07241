#pragma once

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
#include "degsde/linalg.hpp"

namespace degsde {

enum class Domain { FullSpace, PositiveOrthant, OpenUnitBall };

inline std::string to_string(Domain d) {
  switch (d) {
    case Domain::FullSpace: return "full_space";
    case Domain::PositiveOrthant: return "positive_orthant";
    case Domain::OpenUnitBall: return "open_unit_ball";
  }
  return "?";
}

inline Domain parse_domain(std::string_view s) {
  if (s == "full_space") return Domain::FullSpace;
  if (s == "positive_orthant") return Domain::PositiveOrthant;
  if (s == "open_unit_ball") return Domain::OpenUnitBall;
  throw Error(ErrorKind::ConfigError, "unknown domain '" + std::string(s) + "'");
}

/// Writes mu(x) into out (size n).
using DriftField = std::function<void(std::span<const double> x, std::span<double> out)>;
/// Writes sigma(x) into out (n x n, already sized).
using DiffusionField = std::function<void(std::span<const double> x, Matrix& out)>;

struct UnitBallParams {
  double c = 0.0;
  std::vector<double> theta;  // size 1 (scalar, isotropic) or n
  bool theta_is_scalar = true;
  double theta_norm = 0.0;    // |theta|: absolute value, or max-norm for vector theta
  double kappa = 0.0;         // c (1 - sqrt(n) |theta|)
};

/// An autonomous SDE dX = mu(X) dt + sigma(X) dW on one of three domains.
/// Immutable once built; evaluation is pure.
class Model {
 public:
  Model(std::string name, std::size_t n, Domain domain, DriftField mu, DiffusionField sigma)
      : name_(std::move(name)), n_(n), domain_(domain), mu_(std::move(mu)), sigma_(std::move(sigma)) {
    if (n_ == 0) throw Error(ErrorKind::DimensionMismatch, "model dimension must be positive");
  }

  const std::string& name() const noexcept { return name_; }
  std::size_t dimension() const noexcept { return n_; }
  Domain domain() const noexcept { return domain_; }

  void drift(std::span<const double> x, std::span<double> out) const { mu_(x, out); }
  void diffusion(std::span<const double> x, Matrix& out) const {
    if (out.rows() != n_ || out.cols() != n_) out = Matrix(n_, n_);
    sigma_(x, out);
  }

  Vector drift(std::span<const double> x) const {
    Vector out(n_);
    mu_(x, out);
    return out;
  }
  Matrix diffusion(std::span<const double> x) const {
    Matrix out(n_, n_);
    sigma_(x, out);
    return out;
  }

  const std::optional<UnitBallParams>& unit_ball() const noexcept { return ball_; }
  std::optional<double> beta() const noexcept { return beta_; }

  /// Named scalar parameters, echoed into run manifests.
  const std::vector<std::pair<std::string, double>>& parameters() const noexcept { return params_; }

  Model& with_unit_ball(UnitBallParams p) {
    ball_ = std::move(p);
    return *this;
  }
  Model& with_beta(double b) {
    beta_ = b;
    return *this;
  }
  Model& with_parameter(std::string key, double value) {
    params_.emplace_back(std::move(key), value);
    return *this;
  }

 private:
  std::string name_;
  std::size_t n_;
  Domain domain_;
  DriftField mu_;
  DiffusionField sigma_;
  std::optional<UnitBallParams> ball_;
  std::optional<double> beta_;
  std::vector<std::pair<std::string, double>> params_;
};

/// m(x) = sigma(x) sigma(x)^T.
inline Matrix diffusion_matrix_m(const Model& model, std::span<const double> x) {
  Matrix s = model.diffusion(x);
  Matrix m;
  outer_self(s, m);
  return m;
}

/// Nearest point of the closed domain: positive part on the orthant, radial
/// projection on the ball, identity on full space.
inline void project_to_closure(Domain domain, std::span<const double> x, std::span<double> out) {
  switch (domain) {
    case Domain::FullSpace:
      std::copy(x.begin(), x.end(), out.begin());
      return;
    case Domain::PositiveOrthant:
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
      return;
    case Domain::OpenUnitBall: {
      const double r = norm2(x);
      const double scale = r > 1.0 ? 1.0 / r : 1.0;
      for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * scale;
      return;
    }
  }
}

inline bool in_closure(Domain domain, std::span<const double> x) {
  switch (domain) {
    case Domain::FullSpace: return true;
    case Domain::PositiveOrthant:
      return std::all_of(x.begin(), x.end(), [](double v) { return v >= 0.0; });
    case Domain::OpenUnitBall: return norm2_sq(x) <= 1.0;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Built-in models

/// Multidimensional square-root diffusion: row i of the effective diffusion is
/// sqrt(|x_i|) times row i of the bounded base matrix.
inline Model make_multicir(std::size_t n, DriftField mu, DiffusionField sigma_base, std::string name = "multicir") {
  DiffusionField sigma = [n, base = std::move(sigma_base)](std::span<const double> x, Matrix& out) {
    base(x, out);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = std::sqrt(std::fabs(x[i]));
      for (std::size_t j = 0; j < n; ++j) out(i, j) *= s;
    }
  };
  return Model(std::move(name), n, Domain::PositiveOrthant, std::move(mu), std::move(sigma));
}

/// Rows scale as |x_i|^beta, beta in [1/2, 1].
inline Model make_power_beta(std::size_t n, double beta, DriftField mu, DiffusionField sigma_base,
                             Domain domain = Domain::PositiveOrthant, std::string name = "power_beta") {
  if (!(beta >= 0.5 && beta <= 1.0)) throw Error(ErrorKind::InvalidArgument, "beta must lie in [1/2, 1]");
  DiffusionField sigma = [n, beta, base = std::move(sigma_base)](std::span<const double> x, Matrix& out) {
    base(x, out);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = beta == 1.0 ? std::fabs(x[i]) : std::pow(std::fabs(x[i]), beta);
      for (std::size_t j = 0; j < n; ++j) out(i, j) *= s;
    }
  };
  Model m(std::move(name), n, domain, std::move(mu), std::move(sigma));
  m.with_beta(beta).with_parameter("beta", beta);
  return m;
}

/// dX = c dt + 2 sqrt(|X|) dW.
inline Model make_bessel1d(double c) {
  Model m(
      "bessel1d", 1, Domain::PositiveOrthant, [c](std::span<const double>, std::span<double> out) { out[0] = c; },
      [](std::span<const double> x, Matrix& out) { out(0, 0) = 2.0 * std::sqrt(std::fabs(x[0])); });
  m.with_parameter("c", c);
  return m;
}

/// dX = c (theta - X) dt + sqrt(2 (1 - |X|^2)) dW on the open unit ball.
/// `theta` of size 1 is the isotropic scalar; otherwise it must have size n and
/// |theta| is taken as the max-norm of its components.
inline Model make_unit_ball(std::size_t n, double c, std::vector<double> theta) {
  if (n == 0) throw Error(ErrorKind::DimensionMismatch, "unit ball needs n >= 1");
  if (!(c > 0.0)) throw Error(ErrorKind::InvalidArgument, "unit ball needs c > 0");
  if (theta.empty()) theta = {0.0};
  if (theta.size() != 1 && theta.size() != n)
    throw Error(ErrorKind::DimensionMismatch,
                "theta must be a scalar or have n = " + std::to_string(n) + " components");
  UnitBallParams p;
  p.c = c;
  p.theta_is_scalar = theta.size() == 1;
  p.theta_norm = 0.0;
  for (double t : theta) p.theta_norm = std::max(p.theta_norm, std::fabs(t));
  p.kappa = c * (1.0 - std::sqrt(static_cast<double>(n)) * p.theta_norm);
  p.theta = theta;

  DriftField mu = [n, c, theta](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < n; ++i) out[i] = c * ((theta.size() == 1 ? theta[0] : theta[i]) - x[i]);
  };
  DiffusionField sigma = [n](std::span<const double> x, Matrix& out) {
    const double s = std::sqrt(2.0 * std::max(0.0, 1.0 - norm2_sq(x)));
    out.fill(0.0);
    for (std::size_t i = 0; i < n; ++i) out(i, i) = s;
  };
  Model m("unit_ball", n, Domain::OpenUnitBall, std::move(mu), std::move(sigma));
  m.with_parameter("c", c).with_parameter("kappa", p.kappa).with_parameter("theta_norm", p.theta_norm);
  m.with_unit_ball(std::move(p));
  return m;
}

inline Model make_unit_ball(std::size_t n, double c, double theta) { return make_unit_ball(n, c, std::vector{theta}); }

// ---------------------------------------------------------------------------
// Expression-backed fields

inline DriftField drift_from_exprs(std::vector<Expr> exprs) {
  return [e = std::move(exprs)](std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < e.size(); ++i) out[i] = e[i].evaluate(x);
  };
}

/// `exprs` is row-major n x n.
inline DiffusionField diffusion_from_exprs(std::size_t n, std::vector<Expr> exprs) {
  return [n, e = std::move(exprs)](std::span<const double> x, Matrix& out) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) out(i, j) = e[i * n + j].evaluate(x);
  };
}

inline DriftField constant_drift(std::vector<double> mu) {
  return [mu = std::move(mu)](std::span<const double>, std::span<double> out) {
    std::copy(mu.begin(), mu.end(), out.begin());
  };
}

inline DiffusionField constant_diffusion(Matrix s) {
  return [s = std::move(s)](std::span<const double>, Matrix& out) { out = s; };
}

inline DiffusionField identity_diffusion(std::size_t n) { return constant_diffusion(Matrix::identity(n)); }

// ---------------------------------------------------------------------------
// Specs

/// Declarative description of a model, as read from a run config.
struct ModelSpec {
  std::string kind;  // multicir | unit_ball | power_beta | bessel1d | custom
  std::size_t n = 0;
  std::optional<std::string> domain;         // custom only
  std::vector<std::string> mu;               // n expressions
  std::vector<std::vector<std::string>> sigma;  // n x n expressions (base matrix for multicir/power_beta)
  std::optional<double> c;
  std::vector<double> theta;                 // empty, scalar (size 1), or vector
  std::optional<double> beta;
};

namespace detail {

inline std::vector<Expr> parse_vector(const std::vector<std::string>& src, std::size_t n, const char* what) {
  if (src.size() != n)
    throw Error(ErrorKind::DimensionMismatch,
                std::string(what) + " needs " + std::to_string(n) + " entries, got " + std::to_string(src.size()));
  std::vector<Expr> out;
  out.reserve(n);
  for (const auto& s : src) out.push_back(Expr::parse(s, static_cast<int>(n)));
  return out;
}

inline std::vector<Expr> parse_matrix(const std::vector<std::vector<std::string>>& src, std::size_t n,
                                      const char* what) {
  if (src.size() != n)
    throw Error(ErrorKind::DimensionMismatch,
                std::string(what) + " needs " + std::to_string(n) + " rows, got " + std::to_string(src.size()));
  std::vector<Expr> out;
  out.reserve(n * n);
  for (const auto& row : src) {
    if (row.size() != n)
      throw Error(ErrorKind::DimensionMismatch,
                  std::string(what) + " rows need " + std::to_string(n) + " entries, got " + std::to_string(row.size()));
    for (const auto& s : row) out.push_back(Expr::parse(s, static_cast<int>(n)));
  }
  return out;
}

inline double require(const std::optional<double>& v, const char* what) {
  if (!v) throw Error(ErrorKind::ConfigError, std::string("missing model parameter '") + what + "'");
  return *v;
}

}  // namespace detail

inline Model build_model(const ModelSpec& spec) {
  if (spec.kind == "bessel1d") {
    if (spec.n != 0 && spec.n != 1) throw Error(ErrorKind::DimensionMismatch, "bessel1d is one-dimensional");
    return make_bessel1d(detail::require(spec.c, "c"));
  }
  if (spec.kind == "unit_ball") {
    if (spec.n == 0) throw Error(ErrorKind::DimensionMismatch, "unit_ball needs n >= 1");
    return make_unit_ball(spec.n, detail::require(spec.c, "c"), spec.theta.empty() ? std::vector{0.0} : spec.theta);
  }
  if (spec.kind == "multicir" || spec.kind == "power_beta" || spec.kind == "custom") {
    const std::size_t n = spec.n;
    if (n == 0) throw Error(ErrorKind::DimensionMismatch, spec.kind + " needs n >= 1");
    auto mu = drift_from_exprs(detail::parse_vector(spec.mu, n, "mu"));
    auto sigma = diffusion_from_exprs(n, detail::parse_matrix(spec.sigma, n, "sigma"));
    if (spec.kind == "multicir") return make_multicir(n, std::move(mu), std::move(sigma));
    if (spec.kind == "power_beta")
      return make_power_beta(n, detail::require(spec.beta, "beta"), std::move(mu), std::move(sigma),
                             spec.domain ? parse_domain(*spec.domain) : Domain::PositiveOrthant);
    return Model("custom", n, spec.domain ? parse_domain(*spec.domain) : Domain::FullSpace, std::move(mu),
                 std::move(sigma));
  }
  throw Error(ErrorKind::UnknownModel, "unknown model '" + spec.kind + "'");
}

}  // namespace degsde
