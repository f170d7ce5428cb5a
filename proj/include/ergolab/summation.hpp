#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>

namespace ergolab {

// Pairwise summation over a fixed binary tree. The tree shape depends only on
// the number of terms, so results are bit-stable no matter how the terms were
// produced (sequentially or by several workers).
inline constexpr std::size_t kPairwiseLeaf = 32;

template <class T, class Term>
T pairwise_reduce(std::size_t first, std::size_t last, const Term& term) {
  const std::size_t count = last - first;
  if (count <= kPairwiseLeaf) {
    T acc{};
    for (std::size_t i = first; i < last; ++i) acc += term(i);
    return acc;
  }
  const std::size_t mid = first + count / 2;
  return pairwise_reduce<T>(first, mid, term) + pairwise_reduce<T>(mid, last, term);
}

template <class T>
T pairwise_sum(std::span<const T> values) {
  return pairwise_reduce<T>(0, values.size(),
                            [&](std::size_t i) { return values[i]; });
}

// Neumaier compensated running sum.
class CompensatedSum {
 public:
  void add(double v) noexcept {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      comp_ += (sum_ - t) + v;
    } else {
      comp_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const noexcept { return sum_ + comp_; }
  double raw_sum() const noexcept { return sum_; }
  double compensation() const noexcept { return comp_; }

  static CompensatedSum resume(double sum, double comp) noexcept {
    CompensatedSum s;
    s.sum_ = sum;
    s.comp_ = comp;
    return s;
  }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace ergolab
