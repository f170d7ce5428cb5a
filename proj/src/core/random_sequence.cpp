#include "ergolab/random_sequence.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>

#include "ergolab/counter_hash.hpp"
#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/summation.hpp"

namespace ergolab {

void SelectorParams::validate() const {
  if (!(a > 0.0 && a < 0.5)) {
    fail(ErrorCode::InvalidArgument, "selector exponent a must lie in (0, 1/2), got " +
                                         std::to_string(a));
  }
  if (n_max == 0) fail(ErrorCode::InvalidArgument, "n_max must be at least 1");
}

double selection_probability(double a, std::uint64_t n) {
  return std::exp(-a * std::log(static_cast<double>(n)));
}

std::uint64_t selector_word(double a, std::uint64_t seed, std::uint64_t word) {
  const std::uint64_t key = stream_key(seed);
  const std::uint64_t first = word * 64 + 1;
  // sigma_n is decreasing, so most draws are decided by the block endpoints.
  const double upper = selection_probability(a, first) * (1.0 + 0x1.0p-40);
  const double lower = selection_probability(a, first + 63) * (1.0 - 0x1.0p-40);
  std::uint64_t bits = 0;
  for (unsigned i = 0; i < 64; ++i) {
    const std::uint64_t n = first + i;
    const double u = counter_uniform(key, n);
    bool x;
    if (u < lower) {
      x = true;
    } else if (u >= upper) {
      x = false;
    } else {
      x = u < selection_probability(a, n);
    }
    bits |= static_cast<std::uint64_t>(x) << i;
  }
  return bits;
}

namespace {

std::uint64_t tail_mask(std::uint64_t n_max) {
  const unsigned used = static_cast<unsigned>(n_max % 64);
  return used == 0 ? ~0ULL : ((1ULL << used) - 1);
}

}  // namespace

std::uint64_t selected_count(double a, std::uint64_t seed, std::uint64_t N) {
  if (N == 0) return 0;
  const std::uint64_t words = (N + 63) / 64;
  std::uint64_t total = 0;
  for (std::uint64_t w = 0; w + 1 < words; ++w) {
    total += static_cast<std::uint64_t>(__builtin_popcountll(selector_word(a, seed, w)));
  }
  total += static_cast<std::uint64_t>(
      __builtin_popcountll(selector_word(a, seed, words - 1) & tail_mask(N)));
  return total;
}

// Compensated running sums of sigma_n at every multiple of kStride.
class SigmaPrefixTable {
 public:
  static constexpr std::uint64_t kStride = 1024;

  SigmaPrefixTable(double a, std::uint64_t n_cover, const SigmaPrefixTable* base)
      : a_(a) {
    const std::uint64_t blocks = n_cover / kStride + 1;
    CompensatedSum acc;
    std::uint64_t start_block = 0;
    if (base != nullptr) {
      sums_ = base->sums_;
      comps_ = base->comps_;
      start_block = sums_.size() - 1;
      acc = CompensatedSum::resume(sums_.back(), comps_.back());
    } else {
      sums_.push_back(0.0);
      comps_.push_back(0.0);
    }
    for (std::uint64_t b = start_block; b + 1 < blocks; ++b) {
      for (std::uint64_t n = b * kStride + 1; n <= (b + 1) * kStride; ++n) {
        acc.add(selection_probability(a_, n));
      }
      sums_.push_back(acc.raw_sum());
      comps_.push_back(acc.compensation());
    }
  }

  std::uint64_t coverage() const noexcept { return (sums_.size() - 1) * kStride + kStride - 1; }

  double value(std::uint64_t N) const {
    const std::uint64_t block = N / kStride;
    CompensatedSum acc = CompensatedSum::resume(sums_[block], comps_[block]);
    for (std::uint64_t n = block * kStride + 1; n <= N; ++n) {
      acc.add(selection_probability(a_, n));
    }
    return acc.value();
  }

 private:
  double a_;
  std::vector<double> sums_;
  std::vector<double> comps_;
};

namespace {

std::shared_ptr<const SigmaPrefixTable> sigma_table(double a, std::uint64_t N) {
  static std::mutex mutex;
  static std::map<double, std::shared_ptr<const SigmaPrefixTable>> cache;
  std::lock_guard lock(mutex);
  auto& slot = cache[a];
  if (!slot || slot->coverage() < N) {
    slot = std::make_shared<const SigmaPrefixTable>(a, N, slot.get());
  }
  return slot;
}

}  // namespace

double sigma_prefix(double a, std::uint64_t N) {
  if (!(a > 0.0 && a < 1.0)) {
    fail(ErrorCode::InvalidArgument, "sigma_prefix exponent must lie in (0, 1)");
  }
  if (N == 0) fail(ErrorCode::InvalidArgument, "sigma_prefix requires N >= 1");
  return sigma_table(a, N)->value(N);
}

Realization::Realization(SelectorParams params, std::vector<std::uint64_t> words)
    : params_(params), words_(std::move(words)) {
  if (!words_.empty()) words_.back() &= tail_mask(params_.n_max);
  word_prefix_.resize(words_.size() + 1);
  word_prefix_[0] = 0;
  for (std::size_t w = 0; w < words_.size(); ++w) {
    word_prefix_[w + 1] =
        word_prefix_[w] + static_cast<std::uint64_t>(__builtin_popcountll(words_[w]));
  }
  sigma_table_ = sigma_table(params_.a, params_.n_max);
}

Realization Realization::generate(const SelectorParams& params) {
  params.validate();
  const std::uint64_t count = (params.n_max + 63) / 64;
  std::vector<std::uint64_t> words(count);
  constexpr std::uint64_t kChunk = 1 << 14;
  const std::uint64_t chunks = (count + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    const std::uint64_t end = std::min<std::uint64_t>(count, (c + 1) * kChunk);
    for (std::uint64_t w = c * kChunk; w < end; ++w) {
      words[w] = selector_word(params.a, params.seed, w);
    }
  });
  return Realization(params, std::move(words));
}

Realization Realization::generate_for_count(double a, std::uint64_t seed,
                                            std::uint64_t count) {
  SelectorParams probe{a, seed, 1};
  probe.validate();
  if (count == 0) fail(ErrorCode::InvalidArgument, "selection count must be positive");
  // W_N ~ N^{1-a}/(1-a); pad by several standard deviations.
  const double target = static_cast<double>(count) + 6.0 * std::sqrt(static_cast<double>(count)) + 16.0;
  double estimate = std::pow((1.0 - a) * target, 1.0 / (1.0 - a)) * 1.02 + 1024.0;
  for (;;) {
    SelectorParams params{a, seed, static_cast<std::uint64_t>(estimate)};
    Realization r = generate(params);
    if (r.selected_count() >= count) {
      const std::uint64_t last = r.counting_function(count);
      std::vector<std::uint64_t> words(r.words_.begin(),
                                       r.words_.begin() + static_cast<std::ptrdiff_t>((last + 63) / 64));
      return Realization(SelectorParams{a, seed, last}, std::move(words));
    }
    estimate *= 1.25;
  }
}

Realization Realization::from_bits(double a, std::span<const std::uint8_t> bits) {
  SelectorParams params{a, 0, bits.size()};
  params.validate();
  std::vector<std::uint64_t> words((bits.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] != 0) words[i / 64] |= 1ULL << (i % 64);
  }
  return Realization(params, std::move(words));
}

void Realization::check_index(std::uint64_t n) const {
  if (n == 0 || n > params_.n_max) {
    fail(ErrorCode::OutOfRange, "index " + std::to_string(n) + " outside [1, " +
                                    std::to_string(params_.n_max) + "]");
  }
}

bool Realization::bit(std::uint64_t n) const {
  check_index(n);
  return ((words_[(n - 1) / 64] >> ((n - 1) % 64)) & 1ULL) != 0;
}

std::uint64_t Realization::prefix(std::uint64_t N) const {
  if (N == 0) return 0;
  check_index(N);
  const std::uint64_t w = (N - 1) / 64;
  const unsigned used = static_cast<unsigned>((N - 1) % 64) + 1;
  const std::uint64_t mask = used == 64 ? ~0ULL : ((1ULL << used) - 1);
  return word_prefix_[w] + static_cast<std::uint64_t>(__builtin_popcountll(words_[w] & mask));
}

std::uint64_t Realization::range_count(std::uint64_t M, std::uint64_t N) const {
  if (M > N) return 0;
  return prefix(N) - prefix(M - 1);
}

double Realization::sigma(std::uint64_t n) const {
  check_index(n);
  return selection_probability(params_.a, n);
}

double Realization::centered(std::uint64_t n) const {
  return (bit(n) ? 1.0 : 0.0) - sigma(n);
}

double Realization::w(std::uint64_t N) const {
  if (N == 0) return 0.0;
  check_index(N);
  return sigma_table_->value(N);
}

std::uint64_t Realization::counting_function(std::uint64_t n) const {
  if (n == 0 || n > selected_count()) {
    fail(ErrorCode::OutOfRange, "counting function a_" + std::to_string(n) +
                                    " needs more than the " + std::to_string(selected_count()) +
                                    " selections materialized");
  }
  // First word whose cumulative count reaches n.
  const auto it = std::lower_bound(word_prefix_.begin() + 1, word_prefix_.end(), n);
  const std::size_t w = static_cast<std::size_t>(it - word_prefix_.begin()) - 1;
  std::uint64_t word = words_[w];
  for (std::uint64_t skip = n - word_prefix_[w] - 1; skip > 0; --skip) word &= word - 1;
  return static_cast<std::uint64_t>(w) * 64 + static_cast<std::uint64_t>(__builtin_ctzll(word)) + 1;
}

void write_realization_csv(const Realization& r, std::ostream& out) {
  out << "index,bit\n";
  for (std::uint64_t n = 1; n <= r.n_max(); ++n) {
    out << n << ',' << (r.bit(n) ? 1 : 0) << '\n';
  }
}

Realization read_realization_csv(std::istream& in, double a) {
  std::string line;
  std::vector<std::uint8_t> bits;
  std::uint64_t expected = 1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("index", 0) == 0) continue;
    std::istringstream fields(line);
    std::uint64_t index = 0;
    char comma = 0;
    int bit = -1;
    if (!(fields >> index >> comma >> bit) || comma != ',' || (bit != 0 && bit != 1) ||
        index != expected) {
      fail(ErrorCode::Parse, "malformed realization row: '" + line + "'");
    }
    bits.push_back(static_cast<std::uint8_t>(bit));
    ++expected;
  }
  if (bits.empty()) fail(ErrorCode::Parse, "realization dump holds no rows");
  return Realization::from_bits(a, bits);
}

std::vector<double> default_thresholds(double w_n) {
  const double root = std::sqrt(w_n);
  return {0.0, root, 2.0 * root, 3.0 * root, w_n / 4.0, w_n / 2.0};
}

DeviationReport deviation_statistics(const SelectorParams& params, std::uint64_t N,
                                     std::uint64_t trials,
                                     std::span<const double> thresholds,
                                     double chernoff_c) {
  params.validate();
  if (N == 0 || N > params.n_max) {
    fail(ErrorCode::InvalidArgument, "deviation N must lie in [1, n_max]");
  }
  if (trials == 0) fail(ErrorCode::InvalidArgument, "deviation needs at least one trial");

  DeviationReport report;
  report.N = N;
  report.trials = trials;
  report.chernoff_c = chernoff_c;
  report.w_n = sigma_prefix(params.a, N);

  std::vector<double> deviation(trials);
  parallel_for(trials, [&](std::size_t t) {
    const std::uint64_t s = selected_count(params.a, derive_seed(params.seed, t), N);
    deviation[t] = std::abs(static_cast<double>(s) - report.w_n);
  });

  for (const double A : thresholds) {
    DeviationRow row;
    row.threshold = A;
    row.exceedances = static_cast<std::uint64_t>(
        std::count_if(deviation.begin(), deviation.end(), [&](double d) { return d >= A; }));
    row.frequency = static_cast<double>(row.exceedances) / static_cast<double>(trials);
    row.envelope = std::max(std::exp(-chernoff_c * A * A / report.w_n), std::exp(-chernoff_c * A));
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace ergolab
