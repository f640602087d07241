#pragma once

// Arithmetic expressions over state variables x1..xn, used for user-defined
// drift and diffusion entries. Grammar (EBNF):
//
//   expr    = term { ("+" | "-") term } ;
//   term    = unary { ("*" | "/") unary } ;
//   unary   = "-" unary | power ;
//   power   = primary [ "^" unary ] ;          (right associative)
//   primary = number | variable | call | "(" expr ")" ;
//   call    = name "(" expr { "," expr } ")" ;
//   variable = "x" digit { digit } ;           (1-based, <= n)
//   number  = digits [ "." digits ] [ ("e"|"E") ["+"|"-"] digits ] | "." digits ... ;
//
// Functions: sqrt abs exp log (one argument), min max pow (two arguments).

#include <array>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "degsde/error.hpp"

namespace degsde {

enum class ExprOp {
  Lit,
  Var,
  Neg,
  Add,
  Sub,
  Mul,
  Div,
  Pow,
  Sqrt,
  Abs,
  Exp,
  Log,
  Min,
  Max,
  PowFn,
};

struct ExprNode;
using ExprNodePtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
  ExprOp op = ExprOp::Lit;
  double value = 0.0;  // Lit
  int var = 0;         // Var, 1-based
  std::vector<ExprNodePtr> args;
};

inline ExprNodePtr make_lit(double v) { return std::make_shared<const ExprNode>(ExprNode{ExprOp::Lit, v, 0, {}}); }
inline ExprNodePtr make_var(int i) { return std::make_shared<const ExprNode>(ExprNode{ExprOp::Var, 0.0, i, {}}); }
inline ExprNodePtr make_node(ExprOp op, std::vector<ExprNodePtr> args) {
  return std::make_shared<const ExprNode>(ExprNode{op, 0.0, 0, std::move(args)});
}

inline bool structurally_equal(const ExprNode& a, const ExprNode& b) {
  if (a.op != b.op || a.args.size() != b.args.size()) return false;
  if (a.op == ExprOp::Lit && !(a.value == b.value && std::signbit(a.value) == std::signbit(b.value))) return false;
  if (a.op == ExprOp::Var && a.var != b.var) return false;
  for (std::size_t k = 0; k < a.args.size(); ++k)
    if (!structurally_equal(*a.args[k], *b.args[k])) return false;
  return true;
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline std::string_view binary_symbol(ExprOp op) {
  switch (op) {
    case ExprOp::Add: return "+";
    case ExprOp::Sub: return "-";
    case ExprOp::Mul: return "*";
    case ExprOp::Div: return "/";
    case ExprOp::Pow: return "^";
    default: return "?";
  }
}

inline std::string_view function_name(ExprOp op) {
  switch (op) {
    case ExprOp::Sqrt: return "sqrt";
    case ExprOp::Abs: return "abs";
    case ExprOp::Exp: return "exp";
    case ExprOp::Log: return "log";
    case ExprOp::Min: return "min";
    case ExprOp::Max: return "max";
    case ExprOp::PowFn: return "pow";
    default: return "?";
  }
}

struct FunctionInfo {
  std::string_view name;
  ExprOp op;
  std::size_t arity;
};

inline constexpr std::array<FunctionInfo, 7> kFunctions{{
    {"sqrt", ExprOp::Sqrt, 1},
    {"abs", ExprOp::Abs, 1},
    {"exp", ExprOp::Exp, 1},
    {"log", ExprOp::Log, 1},
    {"min", ExprOp::Min, 2},
    {"max", ExprOp::Max, 2},
    {"pow", ExprOp::PowFn, 2},
}};

}  // namespace detail

/// Canonical printed form: every operator application is parenthesized and
/// literals use 17 significant digits, so printing is a right inverse of parsing.
inline std::string to_string(const ExprNode& e) {
  switch (e.op) {
    case ExprOp::Lit: return format_double(e.value);
    case ExprOp::Var: return "x" + std::to_string(e.var);
    case ExprOp::Neg: return "(-" + to_string(*e.args[0]) + ")";
    case ExprOp::Add:
    case ExprOp::Sub:
    case ExprOp::Mul:
    case ExprOp::Div:
    case ExprOp::Pow:
      return "(" + to_string(*e.args[0]) + " " + std::string(detail::binary_symbol(e.op)) + " " +
             to_string(*e.args[1]) + ")";
    default: {
      std::string out(detail::function_name(e.op));
      out += "(";
      for (std::size_t k = 0; k < e.args.size(); ++k) {
        if (k) out += ", ";
        out += to_string(*e.args[k]);
      }
      return out + ")";
    }
  }
}

namespace detail {

class Parser {
 public:
  Parser(std::string_view src, int n) : src_(src), n_(n) {}

  ExprNodePtr parse() {
    skip_ws();
    if (pos_ >= src_.size()) throw Error(ErrorKind::ParseError, "empty expression", pos_);
    auto e = expr();
    skip_ws();
    if (pos_ < src_.size())
      throw Error(ErrorKind::ParseError, "unexpected '" + std::string(1, src_[pos_]) + "'", pos_);
    return e;
  }

 private:
  void skip_ws() {
    while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
      ++pos_;
  }

  bool accept(char c) {
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= src_.size())
        throw Error(ErrorKind::ParseError, std::string("expected '") + c + "' before end of input", pos_);
      throw Error(ErrorKind::ParseError, std::string("expected '") + c + "'", pos_);
    }
  }

  ExprNodePtr expr() {
    auto lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = make_node(ExprOp::Add, {lhs, term()});
      else if (accept('-'))
        lhs = make_node(ExprOp::Sub, {lhs, term()});
      else
        return lhs;
    }
  }

  ExprNodePtr term() {
    auto lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = make_node(ExprOp::Mul, {lhs, unary()});
      else if (accept('/'))
        lhs = make_node(ExprOp::Div, {lhs, unary()});
      else
        return lhs;
    }
  }

  ExprNodePtr unary() {
    if (accept('-')) return make_node(ExprOp::Neg, {unary()});
    return power();
  }

  ExprNodePtr power() {
    auto base = primary();
    if (accept('^')) return make_node(ExprOp::Pow, {base, unary()});
    return base;
  }

  static bool is_ident_start(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_'; }
  static bool is_ident_char(char c) { return is_ident_start(c) || (c >= '0' && c <= '9'); }
  static bool is_digit(char c) { return c >= '0' && c <= '9'; }

  ExprNodePtr primary() {
    skip_ws();
    if (pos_ >= src_.size()) throw Error(ErrorKind::ParseError, "unexpected end of input", pos_);
    const char c = src_[pos_];
    if (c == '(') {
      ++pos_;
      auto e = expr();
      expect(')');
      return e;
    }
    if (is_digit(c) || c == '.') return number();
    if (is_ident_start(c)) return identifier();
    throw Error(ErrorKind::ParseError, "unexpected '" + std::string(1, c) + "'", pos_);
  }

  ExprNodePtr number() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (pos_ < src_.size() && is_digit(src_[pos_])) ++pos_;
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      if (p < src_.size() && (src_[p] == '+' || src_[p] == '-')) ++p;
      if (p < src_.size() && is_digit(src_[p])) {
        while (p < src_.size() && is_digit(src_[p])) ++p;
        pos_ = p;
      }
    }
    const std::string_view text = src_.substr(start, pos_ - start);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || !std::isfinite(v))
      throw Error(ErrorKind::ParseError, "malformed number '" + std::string(text) + "'", start);
    return make_lit(v);
  }

  ExprNodePtr identifier() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
    const std::string_view name = src_.substr(start, pos_ - start);
    skip_ws();
    if (pos_ < src_.size() && src_[pos_] == '(') {
      const FunctionInfo* info = nullptr;
      for (const auto& f : kFunctions)
        if (f.name == name) info = &f;
      if (!info) throw Error(ErrorKind::UnknownFunction, "unknown function '" + std::string(name) + "'", start);
      ++pos_;
      std::vector<ExprNodePtr> args;
      skip_ws();
      if (pos_ < src_.size() && src_[pos_] == ')') {
        ++pos_;
      } else {
        args.push_back(expr());
        while (accept(',')) args.push_back(expr());
        expect(')');
      }
      if (args.size() != info->arity)
        throw Error(ErrorKind::ArityError,
                    std::string(name) + " takes " + std::to_string(info->arity) + " argument(s), got " +
                        std::to_string(args.size()),
                    start);
      return make_node(info->op, std::move(args));
    }
    if (name.size() >= 2 && name[0] == 'x') {
      bool digits = true;
      for (std::size_t k = 1; k < name.size(); ++k) digits = digits && is_digit(name[k]);
      if (digits && name[1] != '0') {
        int idx = 0;
        const auto [ptr, ec] = std::from_chars(name.data() + 1, name.data() + name.size(), idx);
        if (ec == std::errc() && idx >= 1 && idx <= n_) return make_var(idx);
      }
    }
    throw Error(ErrorKind::UnknownVariable,
                "unknown variable '" + std::string(name) + "' (expected x1..x" + std::to_string(n_) + ")", start);
  }

  std::string_view src_;
  int n_;
  std::size_t pos_ = 0;
};

struct Instr {
  ExprOp op;
  double value;
  int var;
  const ExprNode* node;  // for diagnostics
};

inline void emit(const ExprNode& e, std::vector<Instr>& prog, int& depth, int& max_depth) {
  for (const auto& a : e.args) emit(*a, prog, depth, max_depth);
  prog.push_back({e.op, e.value, e.var, &e});
  if (e.op == ExprOp::Lit || e.op == ExprOp::Var)
    ++depth;
  else
    depth -= static_cast<int>(e.args.size()) - 1;
  if (depth > max_depth) max_depth = depth;
}

[[noreturn]] inline void domain_error(const ExprNode& node, const std::string& what) {
  throw Error(ErrorKind::DomainError, what + " in " + to_string(node));
}

inline bool is_integer(double v) { return std::nearbyint(v) == v; }

}  // namespace detail

/// Immutable parsed expression. Evaluation runs a compiled postfix program and
/// is safe to call concurrently.
class Expr {
 public:
  Expr() = default;

  static Expr parse(std::string_view source, int n) {
    Expr e;
    e.root_ = detail::Parser(source, n).parse();
    e.n_ = n;
    e.compile();
    return e;
  }

  static Expr from_tree(ExprNodePtr root, int n) {
    Expr e;
    e.root_ = std::move(root);
    e.n_ = n;
    e.compile();
    return e;
  }

  static Expr constant(double v) { return from_tree(make_lit(v), 0); }

  const ExprNode& root() const { return *root_; }
  int dimension() const noexcept { return n_; }
  bool empty() const noexcept { return !root_; }
  std::string str() const { return root_ ? to_string(*root_) : std::string(); }

  double operator()(std::span<const double> x) const { return evaluate(x); }

  double evaluate(std::span<const double> x) const {
    if (static_cast<int>(x.size()) < n_)
      throw Error(ErrorKind::DimensionMismatch,
                  "expression needs " + std::to_string(n_) + " variables, got " + std::to_string(x.size()));
    std::array<double, 32> small{};
    std::vector<double> big;
    double* stack = small.data();
    if (max_stack_ > static_cast<int>(small.size())) {
      big.resize(static_cast<std::size_t>(max_stack_));
      stack = big.data();
    }
    int sp = 0;
    for (const auto& in : program_) {
      switch (in.op) {
        case ExprOp::Lit: stack[sp++] = in.value; break;
        case ExprOp::Var: stack[sp++] = x[static_cast<std::size_t>(in.var - 1)]; break;
        case ExprOp::Neg: stack[sp - 1] = -stack[sp - 1]; break;
        case ExprOp::Add: --sp; stack[sp - 1] += stack[sp]; break;
        case ExprOp::Sub: --sp; stack[sp - 1] -= stack[sp]; break;
        case ExprOp::Mul: --sp; stack[sp - 1] *= stack[sp]; break;
        case ExprOp::Div:
          --sp;
          if (stack[sp] == 0.0) detail::domain_error(*in.node, "division by zero");
          stack[sp - 1] /= stack[sp];
          break;
        case ExprOp::Pow:
        case ExprOp::PowFn: {
          --sp;
          const double b = stack[sp];
          const double a = stack[sp - 1];
          if (a < 0.0 && !detail::is_integer(b)) detail::domain_error(*in.node, "negative base with non-integer exponent");
          if (a == 0.0 && b < 0.0) detail::domain_error(*in.node, "zero base with negative exponent");
          stack[sp - 1] = std::pow(a, b);
          break;
        }
        case ExprOp::Sqrt:
          if (stack[sp - 1] < 0.0) detail::domain_error(*in.node, "sqrt of negative value");
          stack[sp - 1] = std::sqrt(stack[sp - 1]);
          break;
        case ExprOp::Abs: stack[sp - 1] = std::fabs(stack[sp - 1]); break;
        case ExprOp::Exp: stack[sp - 1] = std::exp(stack[sp - 1]); break;
        case ExprOp::Log:
          if (stack[sp - 1] <= 0.0) detail::domain_error(*in.node, "log of non-positive value");
          stack[sp - 1] = std::log(stack[sp - 1]);
          break;
        case ExprOp::Min: --sp; stack[sp - 1] = std::fmin(stack[sp - 1], stack[sp]); break;
        case ExprOp::Max: --sp; stack[sp - 1] = std::fmax(stack[sp - 1], stack[sp]); break;
      }
      if (!std::isfinite(stack[sp - 1])) detail::domain_error(*in.node, "non-finite result");
    }
    return stack[0];
  }

  friend bool operator==(const Expr& a, const Expr& b) {
    if (!a.root_ || !b.root_) return !a.root_ && !b.root_;
    return structurally_equal(*a.root_, *b.root_);
  }

 private:
  void compile() {
    program_.clear();
    int depth = 0;
    max_stack_ = 0;
    detail::emit(*root_, program_, depth, max_stack_);
  }

  ExprNodePtr root_;
  int n_ = 0;
  std::vector<detail::Instr> program_;
  int max_stack_ = 0;
};

}  // namespace degsde
