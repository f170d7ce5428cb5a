#include "ergolab/hardy.hpp"

#include <gmpxx.h>
#include <mpfr.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numbers>

#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/summation.hpp"

namespace ergolab {

struct HardyExpr::Impl {
  struct Node {
    Kind kind = Kind::Constant;
    int lhs = -1;
    int rhs = -1;
    mpq_class value;  // Constant nodes only
  };
  std::vector<Node> nodes;  // children always precede their parents
  int root = -1;
  std::string source;
  double epsilon_hint = 0.5;
  bool polynomial = true;
};

namespace {

using Kind = HardyExpr::Kind;
using Node = HardyExpr::Impl::Node;

// RAII mpfr_t.
class BigFloat {
 public:
  explicit BigFloat(mpfr_prec_t prec) {
    mpfr_init2(value_, prec);
    mpfr_set_zero(value_, 1);
  }
  ~BigFloat() { mpfr_clear(value_); }
  BigFloat(BigFloat&& other) noexcept {
    mpfr_init2(value_, MPFR_PREC_MIN);
    mpfr_swap(value_, other.value_);
  }
  BigFloat& operator=(BigFloat&& other) noexcept {
    mpfr_swap(value_, other.value_);
    return *this;
  }
  BigFloat(const BigFloat&) = delete;
  BigFloat& operator=(const BigFloat&) = delete;

  mpfr_ptr get() noexcept { return value_; }
  mpfr_srcptr get() const noexcept { return value_; }

 private:
  mpfr_t value_;
};

double magnitude_up(mpfr_srcptr v) {
  return std::abs(mpfr_get_d(v, MPFR_RNDA));
}

// ---------------------------------------------------------------- parsing

class Parser {
 public:
  explicit Parser(std::string_view text) : text_(text) {}

  HardyExpr::Impl run() {
    skip_space();
    if (pos_ >= text_.size()) parse_error("empty expression");
    const int root = expr();
    skip_space();
    if (pos_ < text_.size()) parse_error(std::string("unexpected '") + text_[pos_] + "'");
    out_.root = root;
    out_.polynomial = std::none_of(out_.nodes.begin(), out_.nodes.end(), [](const Node& n) {
      return n.kind == Kind::Exp || n.kind == Kind::Log;
    });
    return std::move(out_);
  }

 private:
  [[noreturn]] void parse_error(const std::string& what) const {
    fail(ErrorCode::Parse, "parse error at column " + std::to_string(pos_ + 1) + ": " + what);
  }

  void skip_space() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  bool accept(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expect(char c) {
    if (!accept(c)) parse_error(std::string("expected '") + c + "'");
  }

  bool is_constant(int id) const { return out_.nodes[static_cast<std::size_t>(id)].kind == Kind::Constant; }
  const mpq_class& constant(int id) const { return out_.nodes[static_cast<std::size_t>(id)].value; }

  int push(Node node) {
    out_.nodes.push_back(std::move(node));
    return static_cast<int>(out_.nodes.size()) - 1;
  }

  int make_constant(const mpq_class& q) {
    Node n;
    n.kind = Kind::Constant;
    n.value = q;
    n.value.canonicalize();
    return push(std::move(n));
  }

  int make_variable() {
    if (variable_ < 0) {
      Node n;
      n.kind = Kind::Variable;
      variable_ = push(std::move(n));
    }
    return variable_;
  }

  int make_binary(Kind kind, int lhs, int rhs) {
    if (is_constant(lhs) && is_constant(rhs)) {
      return make_constant(kind == Kind::Add ? mpq_class(constant(lhs) + constant(rhs))
                                             : mpq_class(constant(lhs) * constant(rhs)));
    }
    Node n;
    n.kind = kind;
    n.lhs = lhs;
    n.rhs = rhs;
    return push(std::move(n));
  }

  int make_unary(Kind kind, int arg) {
    if (kind == Kind::Log && is_constant(arg) && sgn(constant(arg)) <= 0) {
      fail(ErrorCode::Domain, "log of nonpositive constant " + constant(arg).get_str());
    }
    Node n;
    n.kind = kind;
    n.lhs = arg;
    return push(std::move(n));
  }

  int negate(int id) { return make_binary(Kind::Multiply, make_constant(mpq_class(-1)), id); }

  int make_power(int base, int exponent) {
    if (is_constant(exponent)) {
      const mpq_class& k = constant(exponent);
      if (k.get_den() == 1 && sgn(k) >= 0 && k <= 64) {
        unsigned long e = k.get_num().get_ui();
        if (is_constant(base)) {
          mpz_class num, den;
          mpz_pow_ui(num.get_mpz_t(), constant(base).get_num_mpz_t(), e);
          mpz_pow_ui(den.get_mpz_t(), constant(base).get_den_mpz_t(), e);
          return make_constant(mpq_class(num, den));
        }
        if (e == 0) return make_constant(mpq_class(1));
        int result = -1;
        int square = base;
        while (e > 0) {
          if (e & 1UL) result = result < 0 ? square : make_binary(Kind::Multiply, result, square);
          e >>= 1;
          if (e > 0) square = make_binary(Kind::Multiply, square, square);
        }
        return result;
      }
    }
    return make_unary(Kind::Exp, make_binary(Kind::Multiply, exponent, make_unary(Kind::Log, base)));
  }

  int expr() {
    int lhs = term();
    for (;;) {
      if (accept('+')) {
        lhs = make_binary(Kind::Add, lhs, term());
      } else if (accept('-')) {
        lhs = make_binary(Kind::Add, lhs, negate(term()));
      } else {
        return lhs;
      }
    }
  }

  int term() {
    int lhs = unary();
    for (;;) {
      if (accept('*')) {
        lhs = make_binary(Kind::Multiply, lhs, unary());
      } else if (accept('/')) {
        const std::size_t at = pos_;
        const int rhs = unary();
        if (is_constant(rhs)) {
          if (sgn(constant(rhs)) == 0) {
            pos_ = at;
            parse_error("division by zero");
          }
          lhs = make_binary(Kind::Multiply, lhs, make_constant(mpq_class(1 / constant(rhs))));
        } else {
          lhs = make_binary(Kind::Multiply, lhs, make_unary(Kind::Exp, negate(make_unary(Kind::Log, rhs))));
        }
      } else {
        return lhs;
      }
    }
  }

  int unary() {
    if (accept('-')) return negate(unary());
    return power();
  }

  int power() {
    const int base = primary();
    if (accept('^')) return make_power(base, unary());
    return base;
  }

  int primary() {
    skip_space();
    if (pos_ >= text_.size()) parse_error("unexpected end of expression");
    const char c = text_[pos_];
    if (accept('(')) {
      const int inner = expr();
      expect(')');
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
        ++pos_;
      }
      const std::string name(text_.substr(start, pos_ - start));
      if (name == "x") return make_variable();
      skip_space();
      const bool call = pos_ < text_.size() && text_[pos_] == '(';
      if (name == "exp" || name == "log") {
        if (!call) parse_error("'" + name + "' must be applied to a parenthesized argument");
        expect('(');
        const int arg = expr();
        expect(')');
        return make_unary(name == "exp" ? Kind::Exp : Kind::Log, arg);
      }
      if (call) {
        fail(ErrorCode::Unsupported, "unsupported primitive '" + name + "' at column " +
                                         std::to_string(start + 1) +
                                         " (allowed: constants, x, +, *, exp, log)");
      }
      pos_ = start;
      parse_error("unknown symbol '" + name + "'");
    }
    parse_error(std::string("unexpected '") + c + "'");
  }

  int number() {
    const std::size_t start = pos_;
    std::string digits;
    long exponent = 0;
    bool any_digit = false;
    while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
      digits += text_[pos_++];
      any_digit = true;
    }
    if (pos_ < text_.size() && text_[pos_] == '.') {
      ++pos_;
      while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        digits += text_[pos_++];
        --exponent;
        any_digit = true;
      }
    }
    if (!any_digit) {
      pos_ = start;
      parse_error("malformed number");
    }
    if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
      std::size_t p = pos_ + 1;
      bool negative = false;
      if (p < text_.size() && (text_[p] == '+' || text_[p] == '-')) negative = text_[p++] == '-';
      if (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
        long e = 0;
        while (p < text_.size() && std::isdigit(static_cast<unsigned char>(text_[p]))) {
          e = std::min<long>(e * 10 + (text_[p++] - '0'), 100000);
        }
        exponent += negative ? -e : e;
        pos_ = p;
      }
    }
    mpz_class mantissa(digits, 10);
    mpz_class scale;
    mpz_ui_pow_ui(scale.get_mpz_t(), 10, static_cast<unsigned long>(std::labs(exponent)));
    return make_constant(exponent >= 0 ? mpq_class(mantissa * scale) : mpq_class(mantissa, scale));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int variable_ = -1;
  HardyExpr::Impl out_;
};

// ------------------------------------------------------------- evaluation

// Evaluates the lowered tree in MPFR at a fixed precision with a running
// absolute error bound per node. Every MPFR operation is correctly rounded,
// so each step adds at most |result| * 2^-prec on top of the propagated error.
class Machine {
 public:
  Machine(const HardyExpr::Impl& expr, int precision_bits)
      : expr_(expr), prec_(precision_bits), unit_(std::ldexp(1.0, -precision_bits)) {
    values_.reserve(expr.nodes.size());
    errors_.assign(expr.nodes.size(), 0.0);
    const_errors_.assign(expr.nodes.size(), 0.0);
    for (std::size_t i = 0; i < expr.nodes.size(); ++i) {
      values_.emplace_back(prec_);
      if (expr.nodes[i].kind == Kind::Constant) {
        const int inexact = mpfr_set_q(values_[i].get(), expr.nodes[i].value.get_mpq_t(), MPFR_RNDN);
        const_errors_[i] = inexact != 0 ? magnitude_up(values_[i].get()) * unit_ : 0.0;
      }
    }
  }

  // Evaluates at x; returns the root node index.
  std::size_t run(mpfr_srcptr x, double x_error) {
    const double grow = 1.0 + 0x1.0p-40;  // covers rounding inside the bound arithmetic
    for (std::size_t i = 0; i < expr_.nodes.size(); ++i) {
      const Node& node = expr_.nodes[i];
      mpfr_ptr v = values_[i].get();
      switch (node.kind) {
        case Kind::Constant:
          errors_[i] = const_errors_[i];
          break;
        case Kind::Variable:
          mpfr_set(v, x, MPFR_RNDN);
          errors_[i] = x_error + (mpfr_equal_p(v, x) ? 0.0 : magnitude_up(v) * unit_);
          break;
        case Kind::Add: {
          const auto l = static_cast<std::size_t>(node.lhs);
          const auto r = static_cast<std::size_t>(node.rhs);
          mpfr_add(v, values_[l].get(), values_[r].get(), MPFR_RNDN);
          errors_[i] = (errors_[l] + errors_[r] + magnitude_up(v) * unit_) * grow;
          break;
        }
        case Kind::Multiply: {
          const auto l = static_cast<std::size_t>(node.lhs);
          const auto r = static_cast<std::size_t>(node.rhs);
          mpfr_mul(v, values_[l].get(), values_[r].get(), MPFR_RNDN);
          const double ml = magnitude_up(values_[l].get());
          const double mr = magnitude_up(values_[r].get());
          errors_[i] = (ml * errors_[r] + mr * errors_[l] + errors_[l] * errors_[r] +
                        magnitude_up(v) * unit_) * grow;
          break;
        }
        case Kind::Exp: {
          const auto l = static_cast<std::size_t>(node.lhs);
          mpfr_exp(v, values_[l].get(), MPFR_RNDN);
          errors_[i] = magnitude_up(v) / (1.0 - unit_) * (std::expm1(errors_[l]) + unit_) * grow;
          break;
        }
        case Kind::Log: {
          const auto l = static_cast<std::size_t>(node.lhs);
          mpfr_srcptr arg = values_[l].get();
          if (mpfr_sgn(arg) <= 0 || mpfr_nan_p(arg)) {
            fail(ErrorCode::Domain, "log of a nonpositive value");
          }
          const double m = std::abs(mpfr_get_d(arg, MPFR_RNDZ));
          if (errors_[l] >= m) {
            fail(ErrorCode::InsufficientPrecision,
                 "log argument is not resolved at " + std::to_string(prec_) + " bits");
          }
          mpfr_log(v, arg, MPFR_RNDN);
          errors_[i] = (-std::log1p(-errors_[l] / m) + magnitude_up(v) * unit_) * grow;
          break;
        }
      }
    }
    return static_cast<std::size_t>(expr_.root);
  }

  mpfr_srcptr value(std::size_t i) const { return values_[i].get(); }
  double error(std::size_t i) const { return errors_[i]; }
  int precision() const noexcept { return prec_; }
  double unit() const noexcept { return unit_; }

 private:
  const HardyExpr::Impl& expr_;
  int prec_;
  double unit_;
  std::vector<BigFloat> values_;
  std::vector<double> errors_;
  std::vector<double> const_errors_;
};

mpq_class exact_value(const HardyExpr::Impl& expr, const mpq_class& x) {
  std::vector<mpq_class> values(expr.nodes.size());
  for (std::size_t i = 0; i < expr.nodes.size(); ++i) {
    const Node& node = expr.nodes[i];
    switch (node.kind) {
      case Kind::Constant:
        values[i] = node.value;
        break;
      case Kind::Variable:
        values[i] = x;
        break;
      case Kind::Add:
        values[i] = values[static_cast<std::size_t>(node.lhs)] + values[static_cast<std::size_t>(node.rhs)];
        break;
      case Kind::Multiply:
        values[i] = values[static_cast<std::size_t>(node.lhs)] * values[static_cast<std::size_t>(node.rhs)];
        break;
      default:
        fail(ErrorCode::Unsupported, "exact evaluation requires a polynomial");
    }
  }
  return values[static_cast<std::size_t>(expr.root)];
}

PhaseValue exact_mod1(const HardyExpr::Impl& expr, std::uint64_t x, int precision_bits) {
  const mpq_class v = exact_value(expr, mpq_class(mpz_class(static_cast<unsigned long>(x))));
  mpz_class floor_v;
  mpz_fdiv_q(floor_v.get_mpz_t(), v.get_num_mpz_t(), v.get_den_mpz_t());
  const mpq_class frac = v - floor_v;
  BigFloat rounded(53);
  mpfr_set_q(rounded.get(), frac.get_mpq_t(), MPFR_RNDN);
  double d = mpfr_get_d(rounded.get(), MPFR_RNDN);
  mpq_class diff;
  if (d >= 1.0) {
    d = 0.0;
    diff = 1 - frac;
  } else {
    diff = frac - mpq_class(d);
  }
  PhaseValue out;
  out.frac = d;
  out.precision_bits = precision_bits;
  out.error_bound = std::abs(diff.get_d()) * (1.0 + 0x1.0p-50);
  return out;
}

int rule_bits(double magnitude) {
  return 64 + static_cast<int>(std::ceil(std::log2(1.0 + magnitude)));
}

// Sample points for the parse-time domain sweep.
std::vector<double> domain_sweep_points() {
  std::vector<double> pts;
  for (int i = 1; i <= 16; ++i) pts.push_back(i);
  for (int k = 0; k <= 60; ++k) pts.push_back(std::pow(10.0, 1.0 + 14.0 * k / 60.0));
  return pts;
}

}  // namespace

// --------------------------------------------------------------- HardyExpr

HardyExpr HardyExpr::parse(std::string_view source, double epsilon_hint) {
  if (!(epsilon_hint > 0.0 && epsilon_hint <= 1.0)) {
    fail(ErrorCode::InvalidArgument, "epsilon hint must lie in (0, 1]");
  }
  auto impl = std::make_shared<Impl>(Parser(source).run());
  impl->source = std::string(source);
  impl->epsilon_hint = epsilon_hint;
  if (!impl->polynomial) {
    Machine machine(*impl, 64);
    BigFloat x(64);
    for (const double point : domain_sweep_points()) {
      mpfr_set_d(x.get(), point, MPFR_RNDN);
      try {
        machine.run(x.get(), 0.0);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::Domain) {
          fail(ErrorCode::Domain, "expression '" + impl->source +
                                      "' takes log of a nonpositive value near x = " +
                                      std::to_string(point));
        }
      }
    }
  }
  return HardyExpr(std::move(impl));
}

const std::string& HardyExpr::source() const noexcept { return impl_->source; }
double HardyExpr::epsilon_hint() const noexcept { return impl_->epsilon_hint; }
bool HardyExpr::is_polynomial() const noexcept { return impl_->polynomial; }
bool HardyExpr::is_constant() const noexcept {
  return std::none_of(impl_->nodes.begin(), impl_->nodes.end(),
                      [](const Node& n) { return n.kind == Kind::Variable; });
}
std::size_t HardyExpr::node_count() const noexcept { return impl_->nodes.size(); }
HardyExpr::Kind HardyExpr::root_kind() const noexcept {
  return impl_->nodes[static_cast<std::size_t>(impl_->root)].kind;
}

std::string HardyExpr::canonical() const {
  const auto& nodes = impl_->nodes;
  auto render = [&](auto&& self, int id) -> std::string {
    const Node& n = nodes[static_cast<std::size_t>(id)];
    switch (n.kind) {
      case Kind::Constant:
        return n.value.get_str();
      case Kind::Variable:
        return "x";
      case Kind::Add:
        return "(" + self(self, n.lhs) + " + " + self(self, n.rhs) + ")";
      case Kind::Multiply:
        return "(" + self(self, n.lhs) + " * " + self(self, n.rhs) + ")";
      case Kind::Exp:
        return "exp(" + self(self, n.lhs) + ")";
      case Kind::Log:
        return "log(" + self(self, n.lhs) + ")";
    }
    return {};
  };
  return render(render, impl_->root);
}

// ---------------------------------------------------------- PhaseEvaluator

struct PhaseEvaluator::State {
  State(const HardyExpr& p, int bits) : expr(p), machine(p.impl(), bits), x(bits), frac(bits) {}
  HardyExpr expr;
  Machine machine;
  BigFloat x;
  BigFloat frac;
};

PhaseEvaluator::PhaseEvaluator(const HardyExpr& p, int precision_bits) {
  if (precision_bits < 2 || precision_bits > (1 << 20)) {
    fail(ErrorCode::InvalidArgument, "precision bits out of range");
  }
  state_ = std::make_unique<State>(p, precision_bits);
}

PhaseEvaluator::~PhaseEvaluator() = default;
PhaseEvaluator::PhaseEvaluator(PhaseEvaluator&&) noexcept = default;
PhaseEvaluator& PhaseEvaluator::operator=(PhaseEvaluator&&) noexcept = default;

int PhaseEvaluator::precision_bits() const noexcept { return state_->machine.precision(); }

PhaseValue PhaseEvaluator::eval_mod1(std::uint64_t x) {
  if (x == 0) fail(ErrorCode::InvalidArgument, "phase evaluation requires x >= 1");
  State& s = *state_;
  const int bits = s.machine.precision();
  if (s.expr.is_polynomial()) return exact_mod1(s.expr.impl(), x, bits);

  mpfr_set_ui(s.x.get(), static_cast<unsigned long>(x), MPFR_RNDN);
  const double x_error = mpfr_cmp_ui(s.x.get(), static_cast<unsigned long>(x)) == 0
                             ? 0.0
                             : static_cast<double>(x) * s.machine.unit();
  const std::size_t root = s.machine.run(s.x.get(), x_error);
  mpfr_srcptr v = s.machine.value(root);
  const int needed = rule_bits(magnitude_up(v));
  if (bits < needed) {
    fail(ErrorCode::InsufficientPrecision,
         "precision rule needs " + std::to_string(needed) + " bits at x = " + std::to_string(x) +
             ", got " + std::to_string(bits));
  }
  double error = s.machine.error(root);
  mpfr_frac(s.frac.get(), v, MPFR_RNDN);
  if (mpfr_sgn(s.frac.get()) < 0) {
    if (mpfr_add_ui(s.frac.get(), s.frac.get(), 1, MPFR_RNDN) != 0) error += s.machine.unit();
  }
  double d = mpfr_get_d(s.frac.get(), MPFR_RNDN);
  if (d >= 1.0) d = 0.0;
  PhaseValue out;
  out.frac = d;
  out.precision_bits = bits;
  out.error_bound = error + 0x1.0p-54;
  return out;
}

double PhaseEvaluator::approximate(double x) {
  State& s = *state_;
  if (s.expr.is_polynomial()) {
    return exact_value(s.expr.impl(), mpq_class(x)).get_d();
  }
  mpfr_set_d(s.x.get(), x, MPFR_RNDN);
  return mpfr_get_d(s.machine.value(s.machine.run(s.x.get(), 0.0)), MPFR_RNDN);
}

PhaseValue eval_mod1(const HardyExpr& p, std::uint64_t x, int precision_bits) {
  PhaseEvaluator evaluator(p, precision_bits);
  return evaluator.eval_mod1(x);
}

int required_precision(const HardyExpr& p, std::uint64_t x) {
  if (x == 0) fail(ErrorCode::InvalidArgument, "phase evaluation requires x >= 1");
  if (p.is_polynomial()) {
    return rule_bits(std::abs(exact_value(p.impl(), mpq_class(mpz_class(static_cast<unsigned long>(x)))).get_d()));
  }
  Machine machine(p.impl(), 64);
  BigFloat arg(64);
  mpfr_set_ui(arg.get(), static_cast<unsigned long>(x), MPFR_RNDN);
  return rule_bits(magnitude_up(machine.value(machine.run(arg.get(), 0.0))));
}

// ------------------------------------------------------ second difference

double second_difference_ratio(const HardyExpr& p, double x, double y, double z,
                               int precision_bits) {
  if (!(x > 0.0 && y > 0.0 && z > 0.0)) {
    fail(ErrorCode::InvalidArgument, "second difference requires x, y, z > 0");
  }
  const double eps = p.epsilon_hint();
  int bits = precision_bits;
  {
    Machine probe(p.impl(), 64);
    BigFloat arg(64);
    mpfr_set_d(arg.get(), x + y + z, MPFR_RNDN);
    bits = std::max(bits, 128 + rule_bits(magnitude_up(probe.value(probe.run(arg.get(), 0.0)))));
  }
  // Points are sums of doubles; 2200 extra bits hold any such sum exactly.
  const mpfr_prec_t point_bits = 2200;
  BigFloat px(point_bits), pxy(point_bits), pxz(point_bits), pxyz(point_bits);
  mpfr_set_d(px.get(), x, MPFR_RNDN);
  mpfr_add_d(pxy.get(), px.get(), y, MPFR_RNDN);
  mpfr_add_d(pxz.get(), px.get(), z, MPFR_RNDN);
  mpfr_add_d(pxyz.get(), pxy.get(), z, MPFR_RNDN);

  Machine machine(p.impl(), bits);
  auto value_at = [&](mpfr_srcptr point) {
    BigFloat out(bits);
    BigFloat arg(bits);
    const int inexact = mpfr_set(arg.get(), point, MPFR_RNDN);
    const double arg_error = inexact != 0 ? magnitude_up(arg.get()) * machine.unit() : 0.0;
    mpfr_set(out.get(), machine.value(machine.run(arg.get(), arg_error)), MPFR_RNDN);
    return out;
  };
  BigFloat f_xyz = value_at(pxyz.get());
  BigFloat f_xy = value_at(pxy.get());
  BigFloat f_xz = value_at(pxz.get());
  BigFloat f_x = value_at(px.get());

  BigFloat delta(bits);
  mpfr_sub(delta.get(), f_xyz.get(), f_xy.get(), MPFR_RNDN);
  mpfr_sub(delta.get(), delta.get(), f_xz.get(), MPFR_RNDN);
  mpfr_add(delta.get(), delta.get(), f_x.get(), MPFR_RNDN);
  mpfr_abs(delta.get(), delta.get(), MPFR_RNDN);

  BigFloat scale(bits);
  BigFloat power(bits);
  mpfr_set_d(power.get(), eps - 1.0, MPFR_RNDN);
  mpfr_set_d(scale.get(), x, MPFR_RNDN);
  mpfr_pow(scale.get(), scale.get(), power.get(), MPFR_RNDN);
  mpfr_mul_d(scale.get(), scale.get(), y, MPFR_RNDN);
  mpfr_mul_d(scale.get(), scale.get(), z, MPFR_RNDN);
  mpfr_div(delta.get(), delta.get(), scale.get(), MPFR_RNDN);
  return mpfr_get_d(delta.get(), MPFR_RNDN);
}

SecondDifferenceSweep second_difference_sweep(const HardyExpr& p, double x_lo, double x_hi,
                                              std::size_t x_points, double yz_exponent,
                                              std::size_t yz_points) {
  if (!(x_lo > 0.0 && x_hi >= x_lo) || x_points < 1 || yz_points < 1) {
    fail(ErrorCode::InvalidArgument, "bad second-difference grid");
  }
  auto spaced = [](double lo, double hi, std::size_t count, std::size_t i) {
    if (count == 1) return lo;
    return lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(count - 1));
  };
  SecondDifferenceSweep sweep;
  sweep.min_ratio = std::numeric_limits<double>::infinity();
  sweep.max_ratio = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < x_points; ++i) {
    const double x = spaced(x_lo, x_hi, x_points, i);
    const double top = std::pow(x, yz_exponent);
    for (std::size_t j = 0; j < yz_points; ++j) {
      for (std::size_t k = 0; k < yz_points; ++k) {
        const double ratio = second_difference_ratio(p, x, spaced(1.0, top, yz_points, j),
                                                     spaced(1.0, top, yz_points, k));
        sweep.min_ratio = std::min(sweep.min_ratio, ratio);
        sweep.max_ratio = std::max(sweep.max_ratio, ratio);
        ++sweep.points;
      }
    }
  }
  return sweep;
}

// ------------------------------------------------------------ phase sums

std::complex<double> unit_phase(double frac) {
  if (frac == 0.0) return {1.0, 0.0};
  if (frac == 0.25) return {0.0, 1.0};
  if (frac == 0.5) return {-1.0, 0.0};
  if (frac == 0.75) return {0.0, -1.0};
  const double t = frac >= 0.5 ? frac - 1.0 : frac;
  const double angle = 2.0 * std::numbers::pi * t;
  return {std::cos(angle), std::sin(angle)};
}

std::vector<std::complex<double>> phase_table(const HardyExpr& p, std::uint64_t N,
                                              int precision_bits) {
  if (N == 0) fail(ErrorCode::InvalidArgument, "phase table needs N >= 1");
  const int needed = required_precision(p, N);
  int bits = precision_bits;
  if (bits <= 0) {
    bits = needed;
  } else if (bits < needed && !p.is_polynomial()) {
    fail(ErrorCode::InsufficientPrecision, "precision rule needs " + std::to_string(needed) +
                                               " bits at N = " + std::to_string(N) + ", got " +
                                               std::to_string(bits));
  }
  std::vector<std::complex<double>> table(N);
  constexpr std::uint64_t kChunk = 4096;
  const std::uint64_t chunks = (N + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    PhaseEvaluator evaluator(p, bits);
    const std::uint64_t end = std::min<std::uint64_t>(N, (c + 1) * kChunk);
    for (std::uint64_t n = c * kChunk + 1; n <= end; ++n) {
      table[n - 1] = unit_phase(evaluator.eval_mod1(n).frac);
    }
  });
  return table;
}

unsigned __int128 fixed_point_fraction(const HardyExpr& p, std::uint64_t x) {
  const int bits = required_precision(p, x) + 128;
  Machine machine(p.impl(), bits);
  BigFloat arg(bits);
  mpfr_set_ui(arg.get(), static_cast<unsigned long>(x), MPFR_RNDN);
  BigFloat frac(bits);
  mpfr_frac(frac.get(), machine.value(machine.run(arg.get(), 0.0)), MPFR_RNDN);
  if (mpfr_sgn(frac.get()) < 0) mpfr_add_ui(frac.get(), frac.get(), 1, MPFR_RNDN);
  unsigned __int128 out = 0;
  // Peel 64 bits at a time: frac * 2^64 -> integer part -> remainder.
  for (int half = 0; half < 2; ++half) {
    mpfr_mul_2ui(frac.get(), frac.get(), 64, MPFR_RNDN);
    BigFloat whole(bits);
    mpfr_trunc(whole.get(), frac.get());
    const auto limb = static_cast<std::uint64_t>(mpfr_get_ui(whole.get(), MPFR_RNDZ));
    mpfr_sub(frac.get(), frac.get(), whole.get(), MPFR_RNDN);
    out = (out << 64) | limb;
  }
  return out;
}

std::complex<double> normalized_sum(std::span<const std::complex<double>> terms,
                                    std::uint64_t N) {
  if (N == 0 || N > terms.size()) fail(ErrorCode::OutOfRange, "normalized sum range");
  return pairwise_sum<std::complex<double>>(terms.first(N)) / static_cast<double>(N);
}

std::complex<double> exp_sum(const HardyExpr& p, std::uint64_t N, int precision_bits) {
  const auto table = phase_table(p, N, precision_bits);
  return normalized_sum(table, N);
}

}  // namespace ergolab
