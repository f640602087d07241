#include <catch_amalgamated.hpp>

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "degsde/expr.hpp"

using namespace degsde;
using Catch::Matchers::WithinRel;

namespace {

ExprNodePtr random_tree(std::mt19937_64& rng, int n, int depth) {
  std::uniform_int_distribution<int> pick(0, depth <= 0 ? 1 : 13);
  const int k = pick(rng);
  if (k == 0) return make_lit(std::uniform_real_distribution<double>(0.0, 4.0)(rng));
  if (k == 1) return make_var(std::uniform_int_distribution<int>(1, n)(rng));
  auto sub = [&] { return random_tree(rng, n, depth - 1); };
  switch (k) {
    case 2: return make_node(ExprOp::Neg, {sub()});
    case 3: return make_node(ExprOp::Add, {sub(), sub()});
    case 4: return make_node(ExprOp::Sub, {sub(), sub()});
    case 5: return make_node(ExprOp::Mul, {sub(), sub()});
    case 6: return make_node(ExprOp::Div, {sub(), sub()});
    case 7: return make_node(ExprOp::Pow, {sub(), make_lit(std::uniform_int_distribution<int>(0, 3)(rng))});
    case 8: return make_node(ExprOp::Sqrt, {make_node(ExprOp::Abs, {sub()})});
    case 9: return make_node(ExprOp::Abs, {sub()});
    case 10: return make_node(ExprOp::Exp, {make_node(ExprOp::Min, {sub(), make_lit(3.0)})});
    case 11: return make_node(ExprOp::Log, {sub()});
    case 12: return make_node(ExprOp::Max, {sub(), sub()});
    default: return make_node(ExprOp::PowFn, {make_node(ExprOp::Abs, {sub()}), make_lit(0.5)});
  }
}

// Independent tree walker; nullopt where the language defines a domain error.
std::optional<double> reference(const ExprNode& e, const std::vector<double>& x) {
  if (e.op == ExprOp::Lit) return e.value;
  if (e.op == ExprOp::Var) return x[static_cast<std::size_t>(e.var - 1)];
  std::vector<double> a;
  for (const auto& c : e.args) {
    auto v = reference(*c, x);
    if (!v) return std::nullopt;
    a.push_back(*v);
  }
  double r = 0.0;
  switch (e.op) {
    case ExprOp::Neg: r = -a[0]; break;
    case ExprOp::Add: r = a[0] + a[1]; break;
    case ExprOp::Sub: r = a[0] - a[1]; break;
    case ExprOp::Mul: r = a[0] * a[1]; break;
    case ExprOp::Div:
      if (a[1] == 0.0) return std::nullopt;
      r = a[0] / a[1];
      break;
    case ExprOp::Pow:
    case ExprOp::PowFn:
      if (a[0] < 0.0 && std::floor(a[1]) != a[1]) return std::nullopt;
      if (a[0] == 0.0 && a[1] < 0.0) return std::nullopt;
      r = std::pow(a[0], a[1]);
      break;
    case ExprOp::Sqrt:
      if (a[0] < 0.0) return std::nullopt;
      r = std::sqrt(a[0]);
      break;
    case ExprOp::Abs: r = std::fabs(a[0]); break;
    case ExprOp::Exp: r = std::exp(a[0]); break;
    case ExprOp::Log:
      if (a[0] <= 0.0) return std::nullopt;
      r = std::log(a[0]);
      break;
    case ExprOp::Min: r = std::fmin(a[0], a[1]); break;
    case ExprOp::Max: r = std::fmax(a[0], a[1]); break;
    default: return std::nullopt;
  }
  if (!std::isfinite(r)) return std::nullopt;
  return r;
}

ErrorKind parse_error_kind(const std::string& src, int n) {
  try {
    Expr::parse(src, n);
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected a parse failure for " << src);
  return ErrorKind::ParseError;
}

}  // namespace

TEST_CASE("parse builds the expected trees") {
  auto e = Expr::parse("0.5 - x1", 1);
  REQUIRE(e.root().op == ExprOp::Sub);
  REQUIRE(e.root().args[0]->op == ExprOp::Lit);
  REQUIRE(e.root().args[0]->value == 0.5);
  REQUIRE(e.root().args[1]->op == ExprOp::Var);
  REQUIRE(e.root().args[1]->var == 1);

  auto f = Expr::parse("sqrt(abs(x2))", 2);
  REQUIRE(f.root().op == ExprOp::Sqrt);
  REQUIRE(f.root().args[0]->op == ExprOp::Abs);
  REQUIRE(f.root().args[0]->args[0]->var == 2);
}

TEST_CASE("evaluate examples") {
  const std::vector<double> ball{0.6, 0.0};
  CHECK_THAT(Expr::parse("2*(1 - (x1^2 + x2^2))", 2).evaluate(ball), WithinRel(1.28, 1e-15));
  CHECK(Expr::parse("7", 0).evaluate(std::vector<double>{}) == 7.0);
  CHECK(Expr::parse("x1*x2", 2).evaluate(std::vector<double>{3, 4}) == 12.0);
  CHECK(Expr::parse("sqrt(x1)", 1).evaluate(std::vector<double>{2.25}) == 1.5);
}

TEST_CASE("precedence and associativity") {
  const std::vector<double> none;
  CHECK(Expr::parse("2^3^2", 0).evaluate(none) == 512.0);
  CHECK(Expr::parse("-2^2", 0).evaluate(none) == -4.0);
  CHECK(Expr::parse("8/4/2", 0).evaluate(none) == 1.0);
  CHECK(Expr::parse("1 - 2 - 3", 0).evaluate(none) == -4.0);
  CHECK(Expr::parse("2 + 3 * 4", 0).evaluate(none) == 14.0);
  CHECK(Expr::parse("-3 * 2", 0).evaluate(none) == -6.0);
  CHECK(Expr::parse("min(1, 2) + max(1, 2) + pow(2, 3)", 0).evaluate(none) == 11.0);
  CHECK(Expr::parse("1.5e2 + .5", 0).evaluate(none) == 150.5);
}

TEST_CASE("parse errors carry kind and offset") {
  CHECK(parse_error_kind("2x1", 1) == ErrorKind::ParseError);
  CHECK(parse_error_kind("", 1) == ErrorKind::ParseError);
  CHECK(parse_error_kind("(x1", 1) == ErrorKind::ParseError);
  CHECK(parse_error_kind("x3", 2) == ErrorKind::UnknownVariable);
  CHECK(parse_error_kind("y", 2) == ErrorKind::UnknownVariable);
  CHECK(parse_error_kind("sin(x1)", 1) == ErrorKind::UnknownFunction);
  CHECK(parse_error_kind("min(x1)", 1) == ErrorKind::ArityError);
  CHECK(parse_error_kind("sqrt(x1, x1)", 1) == ErrorKind::ArityError);
  try {
    Expr::parse("1 + $", 0);
    FAIL("no error");
  } catch (const Error& e) {
    REQUIRE(e.has_offset());
    CHECK(e.offset() == 4);
  }
}

TEST_CASE("domain errors instead of NaN") {
  auto kind = [](const char* src, double x) {
    try {
      Expr::parse(src, 1).evaluate(std::vector<double>{x});
    } catch (const Error& e) {
      return e.kind();
    }
    return ErrorKind::ConfigError;
  };
  CHECK(kind("log(x1)", 0.0) == ErrorKind::DomainError);
  CHECK(kind("1/x1", 0.0) == ErrorKind::DomainError);
  CHECK(kind("x1^0.5", -1.0) == ErrorKind::DomainError);
  CHECK(kind("sqrt(x1)", -1.0) == ErrorKind::DomainError);
  CHECK(Expr::parse("x1^3", 1).evaluate(std::vector<double>{-2.0}) == -8.0);
}

TEST_CASE("print/parse round trip on generated expressions") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 200; ++k) {
    const int n = 1 + k % 3;
    const auto tree = random_tree(rng, n, 5);
    const std::string printed = to_string(*tree);
    const Expr parsed = Expr::parse(printed, n);
    INFO(printed);
    CHECK(parsed.str() == printed);
    CHECK(structurally_equal(parsed.root(), *tree));
  }
}

TEST_CASE("compiled evaluation matches a tree walker") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> coord(-3.0, 3.0);
  std::size_t compared = 0;
  for (int k = 0; k < 10000; ++k) {
    const int n = 1 + k % 3;
    const Expr e = Expr::from_tree(random_tree(rng, n, 4), n);
    std::vector<double> x(static_cast<std::size_t>(n));
    for (auto& v : x) v = coord(rng);
    const auto want = reference(e.root(), x);
    std::optional<double> got;
    try {
      got = e.evaluate(x);
    } catch (const Error& err) {
      REQUIRE(err.kind() == ErrorKind::DomainError);
    }
    INFO(e.str());
    REQUIRE(got.has_value() == want.has_value());
    if (want) {
      ++compared;
      CHECK(std::fabs(*got - *want) <= 1e-12 * std::max(1.0, std::fabs(*want)));
    }
  }
  CHECK(compared > 5000);
}
