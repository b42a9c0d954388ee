#include "msd/expr.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>

#include "msd/error.hpp"

namespace msd {

struct Expr::Node {
  Kind kind = Kind::number;
  double value = 0.0;
  std::string name;
  Function fn = Function::sin;
  std::shared_ptr<const Node> lhs;
  std::shared_ptr<const Node> rhs;
};

namespace {

using NodePtr = std::shared_ptr<const Expr::Node>;

constexpr std::array<std::pair<std::string_view, Expr::Function>, 7> kFunctions{{
    {"sin", Expr::Function::sin},
    {"cos", Expr::Function::cos},
    {"tan", Expr::Function::tan},
    {"exp", Expr::Function::exp},
    {"log", Expr::Function::log},
    {"sqrt", Expr::Function::sqrt},
    {"abs", Expr::Function::abs},
}};

const Expr::Function* lookup_function(std::string_view name) {
  for (const auto& [key, fn] : kFunctions)
    if (key == name) return &fn;
  return nullptr;
}

NodePtr make_leaf(Expr::Kind kind, double value = 0.0, std::string name = {}) {
  auto node = std::make_shared<Expr::Node>();
  node->kind = kind;
  node->value = value;
  node->name = std::move(name);
  return node;
}

NodePtr make_unary(Expr::Kind kind, NodePtr operand, Expr::Function fn = Expr::Function::sin) {
  auto node = std::make_shared<Expr::Node>();
  node->kind = kind;
  node->fn = fn;
  node->lhs = std::move(operand);
  return node;
}

NodePtr make_binary(Expr::Kind kind, NodePtr lhs, NodePtr rhs) {
  auto node = std::make_shared<Expr::Node>();
  node->kind = kind;
  node->lhs = std::move(lhs);
  node->rhs = std::move(rhs);
  return node;
}

NodePtr make_number(double value) {
  // Negative literals are represented as negation so the printed form
  // re-parses to the same tree.
  if (std::signbit(value) && value != 0.0)
    return make_unary(Expr::Kind::negate, make_leaf(Expr::Kind::number, -value));
  return make_leaf(Expr::Kind::number, value == 0.0 ? 0.0 : value);
}

// ---------------------------------------------------------------- printing

int precedence(const Expr::Node& node) {
  switch (node.kind) {
    case Expr::Kind::add:
    case Expr::Kind::subtract: return 1;
    case Expr::Kind::multiply:
    case Expr::Kind::divide: return 2;
    case Expr::Kind::negate: return 3;
    case Expr::Kind::power: return 4;
    default: return 5;
  }
}

std::string format_number(double value) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
  return std::string(buf.data(), end);
}

void print(const Expr::Node& node, std::string& out);

void print_operand(const Expr::Node& node, bool parens, std::string& out) {
  if (parens) out += '(';
  print(node, out);
  if (parens) out += ')';
}

void print(const Expr::Node& node, std::string& out) {
  const int prec = precedence(node);
  switch (node.kind) {
    case Expr::Kind::number: out += format_number(node.value); return;
    case Expr::Kind::time: out += 't'; return;
    case Expr::Kind::parameter: out += node.name; return;
    case Expr::Kind::call:
      out += function_name(node.fn);
      out += '(';
      print(*node.lhs, out);
      out += ')';
      return;
    case Expr::Kind::negate:
      out += '-';
      print_operand(*node.lhs, precedence(*node.lhs) < 3, out);
      return;
    case Expr::Kind::power:
      print_operand(*node.lhs, precedence(*node.lhs) <= 4, out);
      out += '^';
      print_operand(*node.rhs, precedence(*node.rhs) < 3, out);
      return;
    default: break;
  }
  const char* op = nullptr;
  switch (node.kind) {
    case Expr::Kind::add: op = " + "; break;
    case Expr::Kind::subtract: op = " - "; break;
    case Expr::Kind::multiply: op = "*"; break;
    default: op = "/"; break;
  }
  print_operand(*node.lhs, precedence(*node.lhs) < prec, out);
  out += op;
  print_operand(*node.rhs, precedence(*node.rhs) <= prec, out);
}

std::string text_of(const Expr::Node& node) {
  std::string out;
  print(node, out);
  return out;
}

// ----------------------------------------------------------------- parsing

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  NodePtr parse() {
    skip_space();
    if (pos_ >= src_.size()) throw SyntaxError(pos_, "empty expression");
    NodePtr root = expression();
    skip_space();
    if (pos_ < src_.size()) {
      if (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '(')
        throw SyntaxError(pos_, "missing operator (implicit multiplication is not supported)");
      throw SyntaxError(pos_, std::string("unexpected character '") + src_[pos_] + "'");
    }
    return root;
  }

 private:
  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < src_.size() && src_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) {
      if (pos_ >= src_.size())
        throw SyntaxError(pos_, std::string("unexpected end of input, expected '") + c + "'");
      throw SyntaxError(pos_, std::string("expected '") + c + "'");
    }
  }

  NodePtr expression() {
    NodePtr lhs = term();
    for (;;) {
      if (accept('+'))
        lhs = make_binary(Expr::Kind::add, lhs, term());
      else if (accept('-'))
        lhs = make_binary(Expr::Kind::subtract, lhs, term());
      else
        return lhs;
    }
  }

  NodePtr term() {
    NodePtr lhs = unary();
    for (;;) {
      if (accept('*'))
        lhs = make_binary(Expr::Kind::multiply, lhs, unary());
      else if (accept('/'))
        lhs = make_binary(Expr::Kind::divide, lhs, unary());
      else
        return lhs;
    }
  }

  NodePtr unary() {
    if (accept('-')) return make_unary(Expr::Kind::negate, unary());
    return power();
  }

  NodePtr power() {
    NodePtr base = primary();
    if (accept('^')) return make_binary(Expr::Kind::power, base, unary());
    return base;
  }

  NodePtr primary() {
    skip_space();
    if (pos_ >= src_.size()) throw SyntaxError(pos_, "unexpected end of input, expected an operand");
    const char c = src_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name();
    if (c == '(') {
      ++pos_;
      NodePtr inner = expression();
      expect(')');
      return inner;
    }
    throw SyntaxError(pos_, std::string("unexpected character '") + c + "'");
  }

  NodePtr number() {
    const std::size_t start = pos_;
    auto digits = [&] {
      std::size_t n = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_, ++n;
      return n;
    };
    std::size_t count = digits();
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      count += digits();
    }
    if (count == 0) throw SyntaxError(start, "malformed number");
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t look = pos_ + 1;
      if (look < src_.size() && (src_[look] == '+' || src_[look] == '-')) ++look;
      if (look < src_.size() && std::isdigit(static_cast<unsigned char>(src_[look]))) {
        pos_ = look;
        digits();
      }
    }
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, value);
    if (ec != std::errc() || ptr != src_.data() + pos_) throw SyntaxError(start, "malformed number");
    return make_leaf(Expr::Kind::number, value);
  }

  NodePtr name() {
    const std::size_t start = pos_;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
      ++pos_;
    std::string ident(src_.substr(start, pos_ - start));
    if (const auto* fn = lookup_function(ident)) {
      if (!accept('(')) throw SyntaxError(pos_, "function '" + ident + "' requires an argument list");
      NodePtr arg = expression();
      expect(')');
      return make_unary(Expr::Kind::call, arg, *fn);
    }
    if (ident == "t") return make_leaf(Expr::Kind::time);
    return make_leaf(Expr::Kind::parameter, 0.0, std::move(ident));
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

// -------------------------------------------------------------- evaluation

[[noreturn]] void domain_fail(const Expr::Node& node, const std::string& message) {
  throw DomainError(text_of(node), message);
}

double checked(const Expr::Node& node, double value) {
  if (!std::isfinite(value)) domain_fail(node, "non-finite result");
  return value;
}

double apply_function(Expr::Function fn, double x, const std::function<std::string()>& text) {
  auto fail = [&](const std::string& msg) -> double { throw DomainError(text(), msg); };
  switch (fn) {
    case Expr::Function::sin: return std::sin(x);
    case Expr::Function::cos: return std::cos(x);
    case Expr::Function::tan: return std::tan(x);
    case Expr::Function::exp: return std::exp(x);
    case Expr::Function::log:
      if (!(x > 0.0)) return fail("log of non-positive argument " + format_number(x));
      return std::log(x);
    case Expr::Function::sqrt:
      if (x < 0.0) return fail("sqrt of negative argument " + format_number(x));
      return std::sqrt(x);
    case Expr::Function::abs: return std::fabs(x);
  }
  return 0.0;
}

double apply_divide(double lhs, double rhs, const std::function<std::string()>& text) {
  if (rhs == 0.0) throw DomainError(text(), "division by zero");
  return lhs / rhs;
}

double apply_power(double base, double exponent, const std::function<std::string()>& text) {
  if (base < 0.0 && std::trunc(exponent) != exponent)
    throw DomainError(text(), "negative base with non-integer exponent");
  if (base == 0.0 && exponent < 0.0) throw DomainError(text(), "division by zero (zero to a negative power)");
  return std::pow(base, exponent);
}

double eval_node(const Expr::Node& node, double t, const ParamMap& params) {
  auto text = [&] { return text_of(node); };
  switch (node.kind) {
    case Expr::Kind::number: return node.value;
    case Expr::Kind::time: return t;
    case Expr::Kind::parameter: {
      auto it = params.find(node.name);
      if (it == params.end()) throw ValidationError("unbound parameter '" + node.name + "'");
      return it->second;
    }
    case Expr::Kind::negate: return -eval_node(*node.lhs, t, params);
    case Expr::Kind::call:
      return checked(node, apply_function(node.fn, eval_node(*node.lhs, t, params), text));
    default: break;
  }
  const double lhs = eval_node(*node.lhs, t, params);
  const double rhs = eval_node(*node.rhs, t, params);
  switch (node.kind) {
    case Expr::Kind::add: return checked(node, lhs + rhs);
    case Expr::Kind::subtract: return checked(node, lhs - rhs);
    case Expr::Kind::multiply: return checked(node, lhs * rhs);
    case Expr::Kind::divide: return checked(node, apply_divide(lhs, rhs, text));
    default: return checked(node, apply_power(lhs, rhs, text));
  }
}

void collect_parameters(const Expr::Node& node, std::set<std::string>& out) {
  if (node.kind == Expr::Kind::parameter) out.insert(node.name);
  if (node.lhs) collect_parameters(*node.lhs, out);
  if (node.rhs) collect_parameters(*node.rhs, out);
}

bool uses_time(const Expr::Node& node) {
  if (node.kind == Expr::Kind::time) return true;
  return (node.lhs && uses_time(*node.lhs)) || (node.rhs && uses_time(*node.rhs));
}

bool equal_nodes(const Expr::Node& a, const Expr::Node& b) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case Expr::Kind::number: return a.value == b.value;
    case Expr::Kind::time: return true;
    case Expr::Kind::parameter: return a.name == b.name;
    case Expr::Kind::call: return a.fn == b.fn && equal_nodes(*a.lhs, *b.lhs);
    case Expr::Kind::negate: return equal_nodes(*a.lhs, *b.lhs);
    default: return equal_nodes(*a.lhs, *b.lhs) && equal_nodes(*a.rhs, *b.rhs);
  }
}

std::size_t count_nodes(const Expr::Node& node) {
  return 1 + (node.lhs ? count_nodes(*node.lhs) : 0) + (node.rhs ? count_nodes(*node.rhs) : 0);
}

}  // namespace

std::string_view function_name(Expr::Function fn) {
  for (const auto& [key, value] : kFunctions)
    if (value == fn) return key;
  return "?";
}

Expr::Expr() : node_(make_leaf(Kind::number, 0.0)) {}

Expr Expr::parse(std::string_view source) { return Expr(Parser(source).parse()); }

Expr Expr::number(double value) {
  if (!std::isfinite(value)) throw ValidationError("non-finite literal");
  return Expr(make_number(value));
}
Expr Expr::time() { return Expr(make_leaf(Kind::time)); }
Expr Expr::parameter(std::string name) {
  if (name.empty() || name == "t" || lookup_function(name))
    throw ValidationError("invalid parameter name '" + name + "'");
  return Expr(make_leaf(Kind::parameter, 0.0, std::move(name)));
}
Expr Expr::call(Function fn, Expr argument) {
  return Expr(make_unary(Kind::call, std::move(argument.node_), fn));
}
Expr operator-(Expr operand) { return Expr(make_unary(Expr::Kind::negate, std::move(operand.node_))); }
Expr operator+(Expr lhs, Expr rhs) {
  return Expr(make_binary(Expr::Kind::add, std::move(lhs.node_), std::move(rhs.node_)));
}
Expr operator-(Expr lhs, Expr rhs) {
  return Expr(make_binary(Expr::Kind::subtract, std::move(lhs.node_), std::move(rhs.node_)));
}
Expr operator*(Expr lhs, Expr rhs) {
  return Expr(make_binary(Expr::Kind::multiply, std::move(lhs.node_), std::move(rhs.node_)));
}
Expr operator/(Expr lhs, Expr rhs) {
  return Expr(make_binary(Expr::Kind::divide, std::move(lhs.node_), std::move(rhs.node_)));
}
Expr Expr::pow(Expr base, Expr exponent) {
  return Expr(make_binary(Kind::power, std::move(base.node_), std::move(exponent.node_)));
}

double Expr::eval(double t, const ParamMap& params) const { return eval_node(*node_, t, params); }

std::string Expr::to_string() const { return text_of(*node_); }

std::set<std::string> Expr::parameters() const {
  std::set<std::string> out;
  collect_parameters(*node_, out);
  return out;
}

bool Expr::depends_on_time() const { return uses_time(*node_); }

bool Expr::is_zero_literal() const { return node_->kind == Kind::number && node_->value == 0.0; }

Expr::Kind Expr::kind() const { return node_->kind; }

std::size_t Expr::node_count() const { return count_nodes(*node_); }

bool operator==(const Expr& lhs, const Expr& rhs) { return equal_nodes(*lhs.node_, *rhs.node_); }

// ------------------------------------------------------------- compilation

CompiledExpr Expr::compile(const ParamMap& params, std::span<const std::string> variables) const {
  CompiledExpr out;
  std::size_t depth = 0;
  std::function<void(const Node&)> emit = [&](const Node& node) {
    using Op = CompiledExpr::Op;
    CompiledExpr::Instr ins{};
    switch (node.kind) {
      case Kind::number:
        ins.op = Op::push;
        ins.value = node.value;
        break;
      case Kind::time:
        ins.op = Op::time;
        out.constant_ = false;
        break;
      case Kind::parameter: {
        bool found = false;
        for (std::size_t i = 0; i < variables.size(); ++i) {
          if (variables[i] == node.name) {
            ins.op = Op::slot;
            ins.slot = static_cast<unsigned>(i);
            out.constant_ = false;
            found = true;
            break;
          }
        }
        if (!found) {
          auto it = params.find(node.name);
          if (it == params.end()) throw ValidationError("unbound parameter '" + node.name + "'");
          ins.op = Op::push;
          ins.value = it->second;
        }
        break;
      }
      case Kind::negate:
        emit(*node.lhs);
        ins.op = Op::neg;
        break;
      case Kind::call:
        emit(*node.lhs);
        ins.op = Op::fn;
        ins.fn = static_cast<unsigned char>(node.fn);
        break;
      default:
        emit(*node.lhs);
        emit(*node.rhs);
        switch (node.kind) {
          case Kind::add: ins.op = Op::add; break;
          case Kind::subtract: ins.op = Op::sub; break;
          case Kind::multiply: ins.op = Op::mul; break;
          case Kind::divide: ins.op = Op::div; break;
          default: ins.op = Op::pow; break;
        }
        break;
    }
    if (ins.op != Op::push && ins.op != Op::time && ins.op != Op::slot) {
      ins.text = static_cast<int>(out.texts_.size());
      out.texts_.push_back(text_of(node));
    }
    out.code_.push_back(ins);
  };
  emit(*node_);
  // Stack depth for a postfix program.
  std::size_t cur = 0;
  for (const auto& ins : out.code_) {
    switch (ins.op) {
      case CompiledExpr::Op::push:
      case CompiledExpr::Op::time:
      case CompiledExpr::Op::slot: ++cur; break;
      case CompiledExpr::Op::neg:
      case CompiledExpr::Op::fn: break;
      default: --cur; break;
    }
    depth = std::max(depth, cur);
  }
  out.max_depth_ = depth;
  return out;
}

double CompiledExpr::operator()(double t, std::span<const double> slots) const {
  constexpr std::size_t kInline = 32;
  std::array<double, kInline> small{};
  std::vector<double> large;
  double* stack = small.data();
  if (max_depth_ > kInline) {
    large.resize(max_depth_);
    stack = large.data();
  }
  std::size_t top = 0;
  auto text = [this](const Instr& ins) {
    return [this, &ins] { return texts_[static_cast<std::size_t>(ins.text)]; };
  };
  auto finite = [this](const Instr& ins, double v) {
    if (!std::isfinite(v)) throw DomainError(texts_[static_cast<std::size_t>(ins.text)], "non-finite result");
    return v;
  };
  for (const auto& ins : code_) {
    switch (ins.op) {
      case Op::push: stack[top++] = ins.value; break;
      case Op::time: stack[top++] = t; break;
      case Op::slot:
        if (ins.slot >= slots.size()) throw ValidationError("compiled expression: missing variable slot");
        stack[top++] = slots[ins.slot];
        break;
      case Op::neg: stack[top - 1] = -stack[top - 1]; break;
      case Op::fn:
        stack[top - 1] = finite(
            ins, apply_function(static_cast<Expr::Function>(ins.fn), stack[top - 1], text(ins)));
        break;
      default: {
        const double rhs = stack[--top];
        double& lhs = stack[top - 1];
        switch (ins.op) {
          case Op::add: lhs = finite(ins, lhs + rhs); break;
          case Op::sub: lhs = finite(ins, lhs - rhs); break;
          case Op::mul: lhs = finite(ins, lhs * rhs); break;
          case Op::div: lhs = finite(ins, apply_divide(lhs, rhs, text(ins))); break;
          default: lhs = finite(ins, apply_power(lhs, rhs, text(ins))); break;
        }
        break;
      }
    }
  }
  return stack[0];
}

}  // namespace msd
