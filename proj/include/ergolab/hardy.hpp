#pragma once

// Logarithmico-exponential phase functions p and the weights e(p(n)).
//
// Concrete syntax (whitespace is ignored):
//
//   expr    = term { ("+" | "-") term } ;
//   term    = unary { ("*" | "/") unary } ;
//   unary   = "-" unary | power ;
//   power   = primary [ "^" unary ] ;
//   primary = number | "x" | ("exp" | "log") "(" expr ")" | "(" expr ")" ;
//   number  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ] ;
//
// Everything lowers onto six node kinds: rational constant, x, +, *, exp, log.
// Subtraction and negation multiply by -1; a^k with a nonnegative integer
// constant k <= 64 becomes repeated multiplication; every other power a^b
// becomes exp(b * log(a)); a/b with non-constant b becomes a * exp(-log(b)).
// Constant subexpressions built from +, -, *, / and integer powers are folded
// exactly.

#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ergolab {

struct PhaseValue {
  double frac = 0.0;            // p(x) mod 1, in [0, 1)
  int precision_bits = 0;
  double error_bound = 0.0;     // bound on the distance (mod 1) to the true value
};

class HardyExpr {
 public:
  enum class Kind { Constant, Variable, Add, Multiply, Exp, Log };

  // Throws Error(Parse) with a 1-based column, Error(Unsupported) for
  // primitives outside the class (sin, sqrt, ...), Error(Domain) when a log
  // argument is nonpositive somewhere on the sampled domain x >= 1.
  static HardyExpr parse(std::string_view source, double epsilon_hint = 0.5);

  const std::string& source() const noexcept;
  double epsilon_hint() const noexcept;

  // True when no exp/log node occurs: p is a polynomial with rational
  // coefficients and is evaluated exactly.
  bool is_polynomial() const noexcept;
  // True when x does not occur.
  bool is_constant() const noexcept;

  // Canonical form of the lowered tree, e.g. "exp((3/2 * log(x)))".
  std::string canonical() const;

  std::size_t node_count() const noexcept;
  Kind root_kind() const noexcept;

  struct Impl;
  const Impl& impl() const noexcept { return *impl_; }

 private:
  explicit HardyExpr(std::shared_ptr<const Impl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<const Impl> impl_;
};

// Minimum mantissa bits of the precision rule: 64 + ceil(log2(1 + |p(x)|)).
int required_precision(const HardyExpr& p, std::uint64_t x);

// Reusable high-precision evaluator. Holds scratch state, so one instance per
// thread; the expression itself may be shared.
class PhaseEvaluator {
 public:
  PhaseEvaluator(const HardyExpr& p, int precision_bits);
  ~PhaseEvaluator();
  PhaseEvaluator(PhaseEvaluator&&) noexcept;
  PhaseEvaluator& operator=(PhaseEvaluator&&) noexcept;
  PhaseEvaluator(const PhaseEvaluator&) = delete;
  PhaseEvaluator& operator=(const PhaseEvaluator&) = delete;

  int precision_bits() const noexcept;

  // p(x) mod 1. Throws InsufficientPrecision when the precision rule fails at
  // x (the exact polynomial path is exempt) and Domain on log of a value <= 0.
  PhaseValue eval_mod1(std::uint64_t x);

  // p(x) rounded to double, no precision rule; used for magnitudes.
  double approximate(double x);

 private:
  struct State;
  std::unique_ptr<State> state_;
};

PhaseValue eval_mod1(const HardyExpr& p, std::uint64_t x, int precision_bits);

// |p(x+y+z) - p(x+y) - p(x+z) + p(x)| / (x^{eps-1} y z), eps = epsilon_hint.
// Evaluated with at least `precision_bits` and enough extra bits to resolve
// the cancellation.
double second_difference_ratio(const HardyExpr& p, double x, double y, double z,
                               int precision_bits = 256);

struct SecondDifferenceSweep {
  double min_ratio = 0.0;
  double max_ratio = 0.0;
  std::size_t points = 0;
};

// Grid: x log-spaced on [x_lo, x_hi]; y, z log-spaced on [1, x^{yz_exponent}].
SecondDifferenceSweep second_difference_sweep(const HardyExpr& p, double x_lo, double x_hi,
                                              std::size_t x_points, double yz_exponent,
                                              std::size_t yz_points);

// e(t) = exp(2 pi i t); exact at multiples of 1/4.
std::complex<double> unit_phase(double frac);

// e(p(n)) for n = 1..N (entry n-1). precision_bits <= 0 selects the rule's
// minimum at x = N; an explicit value must satisfy the rule at x = N.
std::vector<std::complex<double>> phase_table(const HardyExpr& p, std::uint64_t N,
                                              int precision_bits);

// (1/N) * sum of the first N terms, fixed-tree pairwise summation.
std::complex<double> normalized_sum(std::span<const std::complex<double>> terms,
                                    std::uint64_t N);

// p(x) mod 1 as a 128-bit binary fraction, floor(frac * 2^128). Evaluated
// with 128 guard bits beyond the precision rule.
unsigned __int128 fixed_point_fraction(const HardyExpr& p, std::uint64_t x = 1);

// (1/N) sum_{n<=N} e(p(n)).
std::complex<double> exp_sum(const HardyExpr& p, std::uint64_t N, int precision_bits);

}  // namespace ergolab
