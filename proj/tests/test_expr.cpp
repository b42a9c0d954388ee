#include <gtest/gtest.h>

#include <cctype>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>

#include "msd/error.hpp"
#include "msd/expr.hpp"

using msd::Expr;
using msd::ParamMap;

namespace {

std::size_t syntax_offset(const std::string& src) {
  try {
    Expr::parse(src);
  } catch (const msd::SyntaxError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no syntax error for '" << src << "'";
  return 0;
}

// Independent evaluator working directly on the text. Returns nullopt where
// the library is required to raise a domain error.
class TextEvaluator {
 public:
  TextEvaluator(std::string src, double t, const ParamMap& params)
      : src_(std::move(src)), t_(t), params_(params) {}

  std::optional<double> run() {
    ok_ = true;
    double v = expr();
    if (!ok_ || !std::isfinite(v)) return std::nullopt;
    return v;
  }

 private:
  char peek() {
    while (pos_ < src_.size() && src_[pos_] == ' ') ++pos_;
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }
  double fail() {
    ok_ = false;
    return 0.0;
  }
  double finite(double v) { return std::isfinite(v) ? v : fail(); }
  double expr() {
    double v = term();
    for (;;) {
      char c = peek();
      if (c == '+') { ++pos_; v = finite(v + term()); }
      else if (c == '-') { ++pos_; v = finite(v - term()); }
      else return v;
    }
  }
  double term() {
    double v = unary();
    for (;;) {
      char c = peek();
      if (c == '*') { ++pos_; v = finite(v * unary()); }
      else if (c == '/') {
        ++pos_;
        double r = unary();
        v = r == 0.0 ? fail() : finite(v / r);
      } else return v;
    }
  }
  double unary() {
    if (peek() == '-') { ++pos_; return -unary(); }
    double base = primary();
    if (peek() == '^') {
      ++pos_;
      double e = unary();
      if (base < 0.0 && std::floor(e) != e) return fail();
      if (base == 0.0 && e < 0.0) return fail();
      return finite(std::pow(base, e));
    }
    return base;
  }
  double primary() {
    char c = peek();
    if (c == '(') {
      ++pos_;
      double v = expr();
      peek();
      ++pos_;  // ')'
      return v;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      std::size_t used = 0;
      double v = std::stod(src_.substr(pos_), &used);
      pos_ += used;
      return v;
    }
    std::size_t start = pos_;
    while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
    std::string name = src_.substr(start, pos_ - start);
    if (peek() == '(') {
      ++pos_;
      double x = expr();
      peek();
      ++pos_;
      if (name == "sin") return std::sin(x);
      if (name == "cos") return std::cos(x);
      if (name == "tan") return finite(std::tan(x));
      if (name == "exp") return finite(std::exp(x));
      if (name == "log") return x > 0.0 ? std::log(x) : fail();
      if (name == "sqrt") return x >= 0.0 ? std::sqrt(x) : fail();
      if (name == "abs") return std::fabs(x);
      return fail();
    }
    if (name == "t") return t_;
    return params_.at(name);
  }

  std::string src_;
  double t_;
  const ParamMap& params_;
  std::size_t pos_ = 0;
  bool ok_ = true;
};

class TextGenerator {
 public:
  explicit TextGenerator(unsigned seed) : rng_(seed) {}

  std::string make(int depth) {
    std::uniform_int_distribution<int> pick(0, depth <= 0 ? 2 : 9);
    switch (pick(rng_)) {
      case 0: return literal();
      case 1: return "t";
      case 2: return std::uniform_int_distribution<int>(0, 1)(rng_) ? "a" : "b_2";
      case 3: return "-" + wrap(make(depth - 1));
      case 4: return make(depth - 1) + " + " + make(depth - 1);
      case 5: return make(depth - 1) + "-" + wrap(make(depth - 1));
      case 6: return wrap(make(depth - 1)) + "*" + wrap(make(depth - 1));
      case 7: return wrap(make(depth - 1)) + " / " + wrap(make(depth - 1));
      case 8: return wrap(make(depth - 1)) + "^" + wrap(small_exponent());
      default: {
        static const char* fns[] = {"sin", "cos", "tan", "exp", "log", "sqrt", "abs"};
        return std::string(fns[std::uniform_int_distribution<int>(0, 6)(rng_)]) + "(" + make(depth - 1) + ")";
      }
    }
  }

 private:
  std::string wrap(const std::string& s) {
    return std::uniform_int_distribution<int>(0, 3)(rng_) ? "(" + s + ")" : s;
  }
  std::string literal() {
    static const char* lits[] = {"0", "1", "2", "0.5", "3.25", "1e-3", "2.5E+1", ".75", "10"};
    return lits[std::uniform_int_distribution<int>(0, 8)(rng_)];
  }
  std::string small_exponent() {
    static const char* lits[] = {"2", "3", "0.5", "-1", "1.5"};
    return lits[std::uniform_int_distribution<int>(0, 4)(rng_)];
  }
  std::mt19937 rng_;
};

}  // namespace

TEST(Expr, ParsesProductOfLiteralAndTime) {
  const Expr e = Expr::parse("2*t");
  EXPECT_EQ(e.kind(), Expr::Kind::multiply);
  EXPECT_TRUE(e.parameters().empty());
  EXPECT_EQ(e, Expr::number(2) * Expr::time());
}

TEST(Expr, CollectsFreeParameters) {
  const Expr e = Expr::parse("-a - b*(sin(log(t)) + cos(log(t)))");
  EXPECT_EQ(e.parameters(), (std::set<std::string>{"a", "b"}));
}

TEST(Expr, SyntaxErrorsCarryOffsets) {
  EXPECT_EQ(syntax_offset("sin("), 4u);
  EXPECT_EQ(syntax_offset(""), 0u);
  EXPECT_EQ(syntax_offset("   "), 3u);
  EXPECT_EQ(syntax_offset("2t"), 1u);
  EXPECT_EQ(syntax_offset("(1 + 2"), 6u);
  EXPECT_EQ(syntax_offset("1 + * 2"), 4u);
  EXPECT_EQ(syntax_offset("sin t"), 4u);
  EXPECT_EQ(syntax_offset("3 $"), 2u);
}

TEST(Expr, EvaluatesPerronCoefficient) {
  const Expr e = Expr::parse("-a - b*(sin(log(t))+cos(log(t)))");
  const double t = std::exp(std::numbers::pi / 2);
  EXPECT_NEAR(e.eval(t, {{"a", 1.0}, {"b", 2.0}}), -3.0, 1e-15);
  EXPECT_EQ(Expr::parse("t").eval(3.0, {}), 3.0);
}

TEST(Expr, ReportsDomainErrors) {
  try {
    Expr::parse("1 + log(t)").eval(0.0, {});
    FAIL();
  } catch (const msd::DomainError& e) {
    EXPECT_EQ(e.subexpression(), "log(t)");
  }
  EXPECT_THROW(Expr::parse("sqrt(t - 1)").eval(0.0, {}), msd::DomainError);
  EXPECT_THROW(Expr::parse("1/t").eval(0.0, {}), msd::DomainError);
  EXPECT_THROW(Expr::parse("(-2)^0.5").eval(0.0, {}), msd::DomainError);
  EXPECT_THROW(Expr::parse("exp(t)").eval(1000.0, {}), msd::DomainError);
  EXPECT_NEAR(Expr::parse("(-2)^3").eval(0.0, {}), -8.0, 0.0);
}

TEST(Expr, UnboundParameterIsNamed) {
  try {
    Expr::parse("a + zeta").eval(0.0, {{"a", 1.0}});
    FAIL();
  } catch (const msd::ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("zeta"), std::string::npos);
  }
}

TEST(Expr, PrecedenceAndAssociativity) {
  EXPECT_EQ(Expr::parse("2^3^2").eval(0, {}), 512.0);
  EXPECT_EQ(Expr::parse("-2^2").eval(0, {}), -4.0);
  EXPECT_EQ(Expr::parse("2^-1").eval(0, {}), 0.5);
  EXPECT_EQ(Expr::parse("8/4/2").eval(0, {}), 1.0);
  EXPECT_EQ(Expr::parse("8-4-2").eval(0, {}), 2.0);
  EXPECT_EQ(Expr::parse("1 + 2*3").eval(0, {}), 7.0);
  EXPECT_EQ(Expr::parse("(-2)^2").eval(0, {}), 4.0);
}

TEST(Expr, CanonicalText) {
  EXPECT_EQ(Expr::parse("-a-b*(sin(log(t))+cos(log(t)))").to_string(),
            "-a - b*(sin(log(t)) + cos(log(t)))");
  EXPECT_EQ(Expr::parse("a-(b-c)").to_string(), "a - (b - c)");
  EXPECT_EQ(Expr::parse("(a-b)-c").to_string(), "a - b - c");
  EXPECT_EQ(Expr::parse("(2^3)^2").to_string(), "(2^3)^2");
  EXPECT_EQ(Expr::parse("2^(3^2)").to_string(), "2^3^2");
  EXPECT_EQ(Expr::parse("(-2)^2").to_string(), "(-2)^2");
  EXPECT_EQ(Expr::parse("2^(-1)").to_string(), "2^-1");
  EXPECT_EQ(Expr::parse("1/(lambda+1)").to_string(), "1/(lambda + 1)");
  EXPECT_EQ(Expr::number(-0.25).to_string(), "-0.25");
  EXPECT_EQ(Expr::parse("1e-3").to_string(), "0.001");
}

TEST(Expr, CompiledMatchesTreeEvaluation) {
  const Expr e = Expr::parse("u1^2*sin(t) + a/(1 + u2*u2)");
  const std::vector<std::string> vars{"u1", "u2"};
  const auto c = e.compile({{"a", 0.5}}, vars);
  for (double t : {0.1, 1.0, 7.5}) {
    const double slots[] = {1.5, -2.0};
    const double expect = e.eval(t, {{"a", 0.5}, {"u1", 1.5}, {"u2", -2.0}});
    EXPECT_EQ(c(t, slots), expect);
  }
  EXPECT_FALSE(c.is_constant());
  EXPECT_TRUE(Expr::parse("a*2").compile({{"a", 1.0}}).is_constant());
  EXPECT_THROW(Expr::parse("log(t)").compile({})(0.0), msd::DomainError);
  EXPECT_THROW(Expr::parse("q").compile({}), msd::ValidationError);
}

TEST(Expr, RandomTreesRoundTripAndMatchTextEvaluator) {
  TextGenerator gen(12345);
  const ParamMap params{{"a", 0.7}, {"b_2", -1.3}};
  std::size_t compared = 0, both_failed = 0;
  for (int i = 0; i < 10000; ++i) {
    const std::string src = gen.make(4);
    const Expr e = Expr::parse(src);
    const Expr again = Expr::parse(e.to_string());
    ASSERT_EQ(e, again) << src << " -> " << e.to_string();
    ASSERT_EQ(again.to_string(), e.to_string());
    const double t = 0.25 + 0.001 * i;
    const auto expected = TextEvaluator(src, t, params).run();
    std::optional<double> got;
    try {
      got = e.eval(t, params);
    } catch (const msd::DomainError&) {
    }
    ASSERT_EQ(expected.has_value(), got.has_value()) << src << " at t=" << t;
    if (!got) {
      ++both_failed;
      continue;
    }
    ++compared;
    const double tol = 1e-14 * std::max(1.0, std::fabs(*expected));
    ASSERT_NEAR(*got, *expected, tol) << src;
    ASSERT_EQ(e.compile(params)(t), *got) << src;
  }
  EXPECT_GT(compared, 5000u);
  EXPECT_GT(both_failed, 0u);
}
