#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

namespace ergolab {

// Parameters of the random selector X_n with P(X_n = 1) = n^{-a}.
struct SelectorParams {
  double a = 0.3;
  std::uint64_t seed = 0;
  std::uint64_t n_max = 1;

  // Throws InvalidArgument unless 0 < a < 1/2 and n_max >= 1.
  void validate() const;
};

// sigma_n = n^{-a}, evaluated as exp(-a ln n) in double precision.
double selection_probability(double a, std::uint64_t n);

// X_n for indices 64*word+1 .. 64*word+64 packed into one word (bit i <-> index
// 64*word+i+1). Bits are a pure function of (a, seed, n).
std::uint64_t selector_word(double a, std::uint64_t seed, std::uint64_t word);

// S_N for a fresh seed without materializing a realization.
std::uint64_t selected_count(double a, std::uint64_t seed, std::uint64_t N);

// W_N = sum_{n <= N} n^{-a} by compensated direct summation, 0 < a < 1.
// Checkpoints are cached per exponent, so repeated queries are cheap.
double sigma_prefix(double a, std::uint64_t N);

class SigmaPrefixTable;

// One sampled selection sequence X_1..X_{n_max} together with S_N and W_N.
// Immutable after construction; safe to share between threads.
class Realization {
 public:
  static Realization generate(const SelectorParams& params);

  // Smallest realization holding `count` selections: n_max = a_count.
  static Realization generate_for_count(double a, std::uint64_t seed,
                                        std::uint64_t count);

  // Synthetic realization from explicit bits (bits[i] <-> X_{i+1}).
  static Realization from_bits(double a, std::span<const std::uint8_t> bits);

  const SelectorParams& params() const noexcept { return params_; }
  std::uint64_t n_max() const noexcept { return params_.n_max; }
  double a() const noexcept { return params_.a; }

  bool bit(std::uint64_t n) const;
  // S_N with S_0 = 0.
  std::uint64_t prefix(std::uint64_t N) const;
  // S_{M,N} = X_M + ... + X_N (zero when M > N).
  std::uint64_t range_count(std::uint64_t M, std::uint64_t N) const;
  std::uint64_t selected_count() const noexcept { return word_prefix_.back(); }

  double sigma(std::uint64_t n) const;
  // Y_n = X_n - sigma_n.
  double centered(std::uint64_t n) const;
  double w(std::uint64_t N) const;

  // a_n: position of the n-th selected index. Throws OutOfRange when fewer
  // than n selections exist in the materialized window.
  std::uint64_t counting_function(std::uint64_t n) const;

  // Calls fn(k, a_k) for k = 1 .. min(max_count, selected_count()).
  template <class Fn>
  void for_each_selected(std::uint64_t max_count, Fn&& fn) const {
    std::uint64_t k = 0;
    for (std::size_t w = 0; w < words_.size() && k < max_count; ++w) {
      std::uint64_t word = words_[w];
      while (word != 0 && k < max_count) {
        const int bit = __builtin_ctzll(word);
        word &= word - 1;
        fn(++k, static_cast<std::uint64_t>(w) * 64 + static_cast<std::uint64_t>(bit) + 1);
      }
    }
  }

  std::span<const std::uint64_t> words() const noexcept { return words_; }
  bool same_bits(const Realization& other) const noexcept {
    return params_.n_max == other.params_.n_max && words_ == other.words_;
  }

 private:
  Realization(SelectorParams params, std::vector<std::uint64_t> words);
  void check_index(std::uint64_t n) const;

  SelectorParams params_;
  std::vector<std::uint64_t> words_;
  std::vector<std::uint64_t> word_prefix_;  // selections before word w
  std::shared_ptr<const SigmaPrefixTable> sigma_table_;
};

// "index,bit" dump of a realization.
void write_realization_csv(const Realization& r, std::ostream& out);
Realization read_realization_csv(std::istream& in, double a);

struct DeviationRow {
  double threshold = 0.0;
  std::uint64_t exceedances = 0;
  double frequency = 0.0;
  double envelope = 0.0;  // max{exp(-c A^2 / W_N), exp(-c A)}
};

struct DeviationReport {
  std::uint64_t N = 0;
  std::uint64_t trials = 0;
  double w_n = 0.0;
  double chernoff_c = 0.125;
  std::vector<DeviationRow> rows;
};

// Thresholds {0, sqrt(W), 2 sqrt(W), 3 sqrt(W), W/4, W/2}.
std::vector<double> default_thresholds(double w_n);

// Empirical frequency of |S_N - W_N| >= A over `trials` seeds derived from
// params.seed, next to the Chernoff-type envelope for constant c.
DeviationReport deviation_statistics(const SelectorParams& params, std::uint64_t N,
                                     std::uint64_t trials,
                                     std::span<const double> thresholds,
                                     double chernoff_c = 0.125);

}  // namespace ergolab
