#pragma once

// Coefficient expressions: a small infix language over the time symbol `t`,
// named parameters, real literals and a handful of elementary functions.
//
//   expr    := term (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := primary ('^' unary)?          (right-associative)
//   primary := number | name | name '(' expr ')' | '(' expr ')'
//
// Expr values are immutable and cheap to copy (shared tree).

#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace msd {

using ParamMap = std::map<std::string, double, std::less<>>;

class CompiledExpr;

class Expr {
 public:
  enum class Kind { number, time, parameter, negate, add, subtract, multiply, divide, power, call };
  enum class Function { sin, cos, tan, exp, log, sqrt, abs };

  /// Literal zero.
  Expr();

  static Expr parse(std::string_view source);

  static Expr number(double value);
  static Expr time();
  static Expr parameter(std::string name);
  static Expr call(Function fn, Expr argument);

  friend Expr operator-(Expr operand);
  friend Expr operator+(Expr lhs, Expr rhs);
  friend Expr operator-(Expr lhs, Expr rhs);
  friend Expr operator*(Expr lhs, Expr rhs);
  friend Expr operator/(Expr lhs, Expr rhs);
  static Expr pow(Expr base, Expr exponent);

  /// Evaluates at time t. Every free parameter must be bound in `params`.
  double eval(double t, const ParamMap& params) const;

  /// Binds parameters to constants and the named variables to slots.
  /// Identifiers found in neither set raise an unbound-parameter error.
  CompiledExpr compile(const ParamMap& params, std::span<const std::string> variables = {}) const;

  /// Canonical text; parse(to_string()) is structurally identical to *this.
  std::string to_string() const;

  std::set<std::string> parameters() const;
  bool depends_on_time() const;
  bool is_zero_literal() const;

  Kind kind() const;
  std::size_t node_count() const;

  friend bool operator==(const Expr& lhs, const Expr& rhs);

  struct Node;

 private:
  explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
  std::shared_ptr<const Node> node_;

  friend class CompiledExpr;
};

std::string_view function_name(Expr::Function fn);

/// Flat stack-machine form of an Expr with parameters folded in. Used in hot
/// loops (time stepping, quadrature); evaluation reports the same domain
/// errors as Expr::eval.
class CompiledExpr {
 public:
  CompiledExpr() = default;

  double operator()(double t, std::span<const double> slots = {}) const;

  bool is_constant() const noexcept { return constant_; }

 private:
  friend class Expr;

  enum class Op : unsigned char { push, time, slot, neg, add, sub, mul, div, pow, fn };
  struct Instr {
    Op op;
    unsigned char fn = 0;
    unsigned slot = 0;
    double value = 0.0;
    int text = -1;  // index into texts_ for error reporting
  };

  std::vector<Instr> code_;
  std::vector<std::string> texts_;
  std::size_t max_depth_ = 0;
  bool constant_ = true;
};

}  // namespace msd
