#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ergolab/hardy.hpp"
#include "ergolab/random_sequence.hpp"

namespace ergolab {

using u128 = unsigned __int128;

// A point of one of the shipped systems.
//   rotation:   position = x * 2^128 (binary fixed point on the circle)
//   cyclic:     position = residue mod q
//   Bernoulli:  key = symbol-sequence seed, position = shift offset
struct State {
  u128 position = 0;
  std::uint64_t key = 0;
};

struct TrigTerm {
  std::int64_t frequency = 0;
  std::complex<double> coefficient{};
};

// Bounded observable. Trigonometric polynomials f(t) = sum c_k e(k t) act on
// the state coordinate t in [0, 1); the named tables only make sense on a
// cyclic shift.
class Observable {
 public:
  enum class Form { Trig, Delta0, Sign };

  static Observable constant(std::complex<double> c);
  static Observable character(std::int64_t frequency, std::complex<double> coefficient = 1.0);
  static Observable trig(std::vector<TrigTerm> terms);
  static Observable delta0();  // 1_{0} - 1/q on Z_q
  static Observable sign();    // (-1)^x on Z_q

  // "1", "e(x)", "e(3x)", "0.5 + 0.5*e(x)", "e(x) - e(-x)", "delta0", "sign".
  static Observable parse(std::string_view text);

  Form form() const noexcept { return form_; }
  const std::vector<TrigTerm>& terms() const noexcept { return terms_; }

 private:
  Form form_ = Form::Trig;
  std::vector<TrigTerm> terms_;
};

enum class SystemKind { Rotation, CyclicShift, BernoulliShift };

// A measure-preserving system with an exactly computable T^n and an analytic
// invariant mean for its observable. Immutable.
class DynamicalSystem {
 public:
  // alpha: "sqrt2m1", "golden", or any constant expression ("2^(1/2) - 1", "0.3").
  static DynamicalSystem rotation(std::string_view alpha, Observable f);
  static DynamicalSystem rotation_fixed(u128 alpha, Observable f);
  static DynamicalSystem cyclic_shift(std::uint64_t modulus, Observable f);
  static DynamicalSystem bernoulli_shift(std::uint32_t alphabet, std::uint32_t window, Observable f);

  SystemKind kind() const noexcept { return kind_; }
  std::complex<double> known_mean() const noexcept { return known_mean_; }
  std::string describe() const;

  double alpha() const;  // rotation angle as a double
  u128 alpha_fixed() const noexcept { return alpha_; }
  std::uint64_t modulus() const noexcept { return modulus_; }

  State advance(const State& x, std::uint64_t n) const;
  double coordinate(const State& x) const;
  std::complex<double> observe(const State& x) const;
  std::complex<double> observe_orbit(const State& x, std::uint64_t n) const {
    return observe(advance(x, n));
  }

  // Low-discrepancy probe points (radical inverse in base 2 for the rotation
  // and cyclic shift; independent symbol sequences for the Bernoulli shift).
  std::vector<State> sample_points(std::size_t count) const;

  // Independent draw from the invariant measure.
  State sample_reference(std::uint64_t seed, std::uint64_t index) const;

 private:
  DynamicalSystem() = default;
  std::complex<double> trig_value_fixed(u128 phase) const;
  std::uint64_t window_index(const State& x) const;

  SystemKind kind_ = SystemKind::Rotation;
  Observable f_;
  std::complex<double> known_mean_{};
  u128 alpha_ = 0;
  std::uint64_t modulus_ = 0;
  std::uint32_t alphabet_ = 0;
  std::uint32_t window_ = 0;
  std::uint64_t grid_ = 0;  // alphabet^window
  std::vector<std::complex<double>> table_;
  std::string alpha_label_;
};

struct AverageSeries {
  std::vector<std::uint64_t> schedule;
  // values[point][k] is the average at schedule[k].
  std::vector<std::vector<std::complex<double>>> values;
  std::vector<double> median_abs;
  std::vector<double> mean_abs;
};

// (1/N) sum_{n<=N} e(p(n)) f(T^{a_n} x) for every N in the schedule and every
// point. `phases` holds e(p(n)) for n = 1.. at least max(schedule). Throws
// OutOfRange when the realization holds fewer than max(schedule) selections.
AverageSeries weighted_random_average(const DynamicalSystem& sys,
                                      std::span<const std::complex<double>> phases,
                                      const Realization& r,
                                      std::span<const std::uint64_t> schedule,
                                      std::span<const State> points);

AverageSeries weighted_random_average(const DynamicalSystem& sys, const HardyExpr& p,
                                      const Realization& r,
                                      std::span<const std::uint64_t> schedule,
                                      std::span<const State> points, int precision_bits = 0);

// The six stages of the equivalence chain at one N, for one point:
//   0: (1/S_N)  sum_{k<=S_N} e(p(k)) f(T^{a_k} x)
//   1: (1/S_N)  sum_{n<=N} X_n e(p(S_n)) f(T^n x)
//   2: (1/W_N)  sum_{n<=N} X_n e(p(S_n)) f(T^n x)
//   3: (1/W_N)  sum_{n<=N} sigma_n e(p(S_n)) f(T^n x)
//   4: fbar (1/W_N) sum_{n<=N} sigma_n e(p(S_n))
//   5: fbar (1/S_N) sum_{k<=S_N} e(p(k))
// differences[i] = |stage[i] - stage[i+1]| for i < 5 and differences[5] = |stage[5]|.
struct ChainPoint {
  std::array<std::complex<double>, 6> stages{};
  std::array<double, 6> differences{};
};

struct ChainReport {
  std::uint64_t N = 0;
  std::uint64_t s_n = 0;
  double w_n = 0.0;
  std::complex<double> known_mean{};
  std::vector<ChainPoint> points;
};

// `phases` holds e(p(k)) for k = 1.. at least S_N.
ChainReport chain_diagnostics(const DynamicalSystem& sys,
                              std::span<const std::complex<double>> phases,
                              const Realization& r, std::uint64_t N,
                              std::span<const State> points);

ChainReport chain_diagnostics(const DynamicalSystem& sys, const HardyExpr& p,
                              const Realization& r, std::uint64_t N,
                              std::span<const State> points, int precision_bits = 0);

// Both sides of the partial summation formula
//   (1/W_N) sum sigma_n a_n = (N sigma_N / W_N) A_N + sum_{M<N} M (sigma_M - sigma_{M+1}) / W_N A_M
// with A_M = (1/M) sum_{n<=M} a_n. Uses the first N entries of each sequence.
std::pair<std::complex<double>, std::complex<double>> partial_summation_identity(
    std::span<const double> sigma, std::span<const std::complex<double>> values, std::size_t N);

// (1/N) sum_{n=1}^N f(T^n x) per point.
std::vector<std::complex<double>> birkhoff_mean(const DynamicalSystem& sys, std::uint64_t N,
                                                std::span<const State> points);

}  // namespace ergolab
