#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "ergolab/hardy.hpp"
#include "ergolab/random_sequence.hpp"

namespace ergolab {

struct CorrelationParams {
  double a = 0.3;
  double delta = 0.1;
  double b = 0.4;           // inner lag range m <= N^b, b in (a, 1/2)
  double c_exponent = 0.8;  // R = N^c, c in (2a, 1)
  double rho = 2.0;
  double kappa = 0.0;       // envelope N^{2-4a-kappa}

  // delta = 0.1, b and c at the midpoints of their admissible intervals.
  static CorrelationParams defaults(double a);
  void validate() const;
};

// floor(N^e) and ceil(N^e). Values within 1e-9 (relative) of an integer snap
// to it, so N^e that is an integer mathematically is not lost to rounding of e.
std::uint64_t floor_power(std::uint64_t N, double e);
std::uint64_t ceil_power(std::uint64_t N, double e);

// c_n = Y_n e(p(S_n)), n = 1..n_max. Immutable.
class WeightSeries {
 public:
  static WeightSeries build(const Realization& r, const HardyExpr& p,
                            const CorrelationParams& params, int precision_bits = 0);
  // Synthetic series without an underlying realization.
  static WeightSeries from_values(std::vector<std::complex<double>> c,
                                  const CorrelationParams& params);

  std::uint64_t size() const noexcept { return c_.size(); }
  std::complex<double> at(std::uint64_t n) const { return c_[n - 1]; }
  std::span<const std::complex<double>> values() const noexcept { return c_; }
  const CorrelationParams& params() const noexcept { return params_; }
  bool has_source() const noexcept { return !s_.empty(); }

  // Y_n; requires has_source().
  double centered(std::uint64_t n) const;
  std::uint64_t prefix(std::uint64_t n) const { return n == 0 ? 0 : s_[n - 1]; }
  // e(p(k)) for 1 <= k <= S_{n_max}.
  std::complex<double> phase_of_count(std::uint64_t k) const { return phases_[k - 1]; }
  bool selected(std::uint64_t n) const { return prefix(n) != prefix(n - 1); }

 private:
  std::vector<std::complex<double>> c_;
  std::vector<std::uint32_t> s_;
  std::vector<std::complex<double>> phases_;
  CorrelationParams params_;
};

// sum_{n<=N} |c_n| / N^{1-a} for each N.
std::vector<double> c_sum_check(const WeightSeries& w, std::span<const std::uint64_t> schedule);

// sum_{n=ceil(N^{1-delta})}^{N-m} c_{n+m} conj(c_n); empty ranges give 0.
std::complex<double> correlation_sum(const WeightSeries& w, std::uint64_t N, std::uint64_t m,
                                     double delta);

struct SummabilityEntry {
  std::uint64_t N = 0;
  std::uint64_t m_max = 0;                          // floor(N^b)
  std::vector<std::complex<double>> correlations;   // m = 1..m_max
  double inner = 0.0;                               // sum_m |correlation|
  double increment = 0.0;                           // N^{2a-1-b} * inner
  double partial = 0.0;                             // running sum over the schedule
};

std::vector<SummabilityEntry> summability_statistic(const WeightSeries& w,
                                                    std::span<const std::uint64_t> schedule);

struct VdcResult {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;  // lhs <= rhs * (1 + 1e-9)
};

// ||sum v_n||^2 against 2(N/M) sum ||v_n||^2 + 4(N/M) sum_{m<=M} |sum_{n<=N-m} <v_{n+m}, v_n>|.
VdcResult vdc_inequality_check(std::span<const std::vector<std::complex<double>>> v,
                               std::size_t M);

enum class LagMethod { Auto, Direct, Fft };

struct ITerms {
  double i1 = 0.0;
  double i2 = 0.0;
  double i3 = 0.0;
  double envelope = 0.0;    // N^{2-4a-kappa}
  double i1_stderr = 0.0;   // across the ensemble; 0 for a single series
  std::uint64_t R = 0;
  std::uint64_t lower = 0;  // ceil(N^{1-delta})
  std::size_t samples = 0;

  double total() const noexcept { return i1 + i2 + i3; }
};

// Single-realization values of the three terms bounding I(m)^2:
//   I1 = (N-m)/R sum_n |Y_n|^2 |Y_{n+m}|^2
//   I2 = (N-m)/R |sum_{n<=N-2m} Y_{n+2m} Y_{n+m}^2 Y_n e(p(S_{n+2m}) - 2p(S_{n+m}) + p(S_n))|
//   I3 = (N-m)/R sum_{r<=R, r!=m} |sum_{n<=N-m-r} Y_{n+r} Y_{n+r+m} Y_n Y_{n+m}
//                                   e(p(S_{n+s+t}) - p(S_{n+t}) - p(S_{n+s}) + p(S_n))|
// with s = min(r, m), t = max(r, m), n starting at ceil(N^{1-delta}), R = floor(N^c).
ITerms i_terms_profile(const WeightSeries& w, std::uint64_t N, std::uint64_t m,
                       double c_exponent, double kappa = 0.0,
                       LagMethod method = LagMethod::Auto);

// Streaming form of the ensemble estimate below: series are added one at a
// time, so the ensemble never has to be held in memory.
class ITermsAccumulator {
 public:
  ITermsAccumulator(std::uint64_t N, std::uint64_t m, double a, double delta,
                    double c_exponent, double kappa, LagMethod method = LagMethod::Auto);
  void add(const WeightSeries& w);
  ITerms result() const;

 private:
  std::uint64_t N_, m_;
  double a_, delta_, c_exponent_, kappa_;
  LagMethod method_;
  std::uint64_t R_ = 0, lower_ = 0;
  std::size_t samples_ = 0;
  std::vector<std::complex<double>> lag_sum_;  // r = 0..R
  std::complex<double> i2_sum_{};
  double i1_sum_ = 0.0, i1_sq_ = 0.0;
};

// Expectation estimates over an ensemble of realizations: the signed inner
// sums are averaged across the ensemble before taking absolute values.
ITerms i_terms_ensemble(std::span<const WeightSeries> ensemble, std::uint64_t N,
                        std::uint64_t m, double c_exponent, double kappa = 0.0,
                        LagMethod method = LagMethod::Auto);

// The independence-recovery split of one lag r of I3. With x = S_{n+t-1},
// y = X_{n+t}, z = S_{n+t+1, n+t+s}:
//   main      = sum_n Y_{n+r} Y_{n+r+m} Y_n Y_{n+m} e(p(x+z) - p(x) - p(S_{n+s}) + p(S_n))
//   remainder = sum_n |Y_{n+r} Y_{n+r+m} Y_n Y_{n+m}| min(x^{eps-1} y z, 1)
// The exponential in `main` does not involve X_{n+t}.
struct IndependenceSplit {
  std::complex<double> main{};
  double remainder = 0.0;
};

IndependenceSplit independence_split(const WeightSeries& w, std::uint64_t N, std::uint64_t m,
                                     std::uint64_t r, double epsilon);

}  // namespace ergolab
