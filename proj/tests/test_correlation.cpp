#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "ergolab/correlation.hpp"
#include "ergolab/counter_hash.hpp"
#include "ergolab/error.hpp"
#include "reference.hpp"

using namespace ergolab;
using cplx = std::complex<double>;

namespace {

CorrelationParams params() {
  CorrelationParams prm = CorrelationParams::defaults(0.3);
  prm.b = 0.35;
  return prm;
}

std::vector<cplx> random_values(std::uint64_t seed, std::size_t n) {
  const std::uint64_t key = stream_key(seed);
  std::vector<cplx> v(n);
  for (std::size_t i = 0; i < n; ++i)
    v[i] = {2 * counter_uniform(key, 2 * i) - 1, 2 * counter_uniform(key, 2 * i + 1) - 1};
  return v;
}

}  // namespace

TEST_CASE("parameter defaults and validation") {
  const CorrelationParams d = CorrelationParams::defaults(0.3);
  CHECK(d.delta == 0.1);
  CHECK(d.b == doctest::Approx(0.4));
  CHECK(d.c_exponent == doctest::Approx(0.8));
  CHECK_NOTHROW(d.validate());
  CorrelationParams bad = d;
  bad.b = 0.2;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = d;
  bad.c_exponent = 0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = d;
  bad.rho = 1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = d;
  bad.delta = 0.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("integer powers snap") {
  CHECK(floor_power(1024, 0.8) == 256);
  CHECK(ceil_power(1024, 0.9) == 512);
  CHECK(ceil_power(1000, 0.9) == 502);
  CHECK(floor_power(1000, 1.0 / 3.0) == 10);
  CHECK(ceil_power(1000, 1.0 / 3.0) == 10);
  CHECK(floor_power(1, 0.8) == 1);
}

TEST_CASE("weight series matches Y_n e(p(S_n))") {
  const HardyExpr p = HardyExpr::parse("x^(3/2)");
  const Realization r = Realization::generate({0.3, 21, 400});
  const WeightSeries w = WeightSeries::build(r, p, params());
  const ref::Naive nv = ref::naive(r, p, 0.1);
  REQUIRE(w.size() == 400);
  for (std::uint64_t n = 1; n <= 400; ++n) {
    const ref::lcplx want = nv.c(n);
    CHECK(std::abs(ref::lcplx(w.at(n).real(), w.at(n).imag()) - want) <= 1e-14L * std::abs(want));
    CHECK(w.prefix(n) == r.prefix(n));
    CHECK(w.centered(n) == r.centered(n));
  }
  CHECK_THROWS_AS(WeightSeries::build(Realization::generate({0.2, 1, 10}), p, params()), Error);
  CHECK_FALSE(WeightSeries::from_values({1.0}, params()).has_source());
}

TEST_CASE("correlation sum: constant weights count the range") {
  const CorrelationParams prm = params();
  const WeightSeries w = WeightSeries::from_values(std::vector<cplx>(1000, 1.0), prm);
  for (std::uint64_t N : {10ULL, 100ULL, 1000ULL}) {
    const std::uint64_t lower = ceil_power(N, 0.9);
    for (std::uint64_t m : {1ULL, 3ULL, 7ULL}) {
      const double expected = N - m >= lower ? static_cast<double>(N - m - lower + 1) : 0.0;
      CHECK(correlation_sum(w, N, m, 0.1) == cplx(expected, 0.0));
    }
  }
  CHECK(correlation_sum(w, 10, 10, 0.1) == cplx(0.0, 0.0));
  CHECK_THROWS_AS(correlation_sum(w, 10, 0, 0.1), Error);
  CHECK_THROWS_AS(correlation_sum(w, 1001, 1, 0.1), Error);
}

TEST_CASE("correlation sum against a brute-force loop") {
  const HardyExpr p = HardyExpr::parse("x^(3/2)");
  const Realization r = Realization::generate({0.3, 5, 128});
  const WeightSeries w = WeightSeries::build(r, p, params());
  const ref::Naive nv = ref::naive(r, p, 0.2);
  for (std::uint64_t N = 2; N <= 128; N += 7)
    for (std::uint64_t m = 1; m < N; m += 2) CHECK(ref::rel_err(correlation_sum(w, N, m, 0.2), ref::correlation(nv, N, m)) < 1e-12);
  // The triangle bound against the weights.
  double bound = 0.0;
  for (std::uint64_t n = ceil_power(128, 0.8); n + 3 <= 128; ++n) bound += std::abs(w.at(n + 3)) * std::abs(w.at(n));
  CHECK(std::abs(correlation_sum(w, 128, 3, 0.2)) <= bound * (1 + 1e-12));
}

TEST_CASE("I-terms against brute force, both lag methods") {
  const HardyExpr p = HardyExpr::parse("x^(3/2)");
  for (std::uint64_t seed : {1ULL, 2ULL}) {
    const Realization r = Realization::generate({0.3, seed, 128});
    const WeightSeries w = WeightSeries::build(r, p, params());
    const ref::Naive nv = ref::naive(r, p, 0.1);
    for (std::uint64_t N : {8ULL, 64ULL, 128ULL}) {
      for (std::uint64_t m : {1ULL, 2ULL, 5ULL}) {
        const ref::Terms want = ref::i_terms(nv, N, m, 0.8);
        for (LagMethod method : {LagMethod::Direct, LagMethod::Fft}) {
          const ITerms got = i_terms_profile(w, N, m, 0.8, 0.0, method);
          CHECK(ref::rel_err(got.i1, want.i1) < 1e-12);
          CHECK(ref::rel_err(got.i2, want.i2) < 1e-12);
          CHECK(ref::rel_err(got.i3, want.i3) < 1e-12);
          CHECK(got.R == ref::window_R(N, 0.8));
          CHECK(got.envelope == doctest::Approx(std::pow(N, 2 - 4 * 0.3)));
        }
      }
    }
  }
  const WeightSeries w = WeightSeries::from_values(std::vector<cplx>(64, 1.0), params());
  CHECK_THROWS_AS(i_terms_profile(w, 2, 1, 0.8), Error);  // R < 2
  CHECK_THROWS_AS(i_terms_profile(w, 64, 0, 0.8), Error);
}

TEST_CASE("FFT and direct lag sums agree on a long synthetic series") {
  const WeightSeries w = WeightSeries::from_values(random_values(3, 5000), params());
  const ITerms d = i_terms_profile(w, 5000, 4, 0.8, 0.0, LagMethod::Direct);
  const ITerms f = i_terms_profile(w, 5000, 4, 0.8, 0.0, LagMethod::Fft);
  CHECK(f.i3 == doctest::Approx(d.i3).epsilon(1e-11));
  CHECK(f.i1 == d.i1);
  CHECK(f.i2 == d.i2);
}

TEST_CASE("ensemble I-terms") {
  const HardyExpr p = HardyExpr::parse("x^(3/2)");
  std::vector<WeightSeries> ens;
  for (std::uint64_t seed = 1; seed <= 6; ++seed)
    ens.push_back(WeightSeries::build(Realization::generate({0.3, seed, 4096}), p, params()));
  const ITerms one = i_terms_ensemble(std::span(ens).first(1), 4096, 3, 0.8);
  const ITerms single = i_terms_profile(ens[0], 4096, 3, 0.8);
  CHECK(one.i1 == doctest::Approx(single.i1).epsilon(1e-14));
  CHECK(one.i2 == doctest::Approx(single.i2).epsilon(1e-14));
  CHECK(one.i3 == doctest::Approx(single.i3).epsilon(1e-12));
  CHECK(one.i1_stderr == 0.0);

  const ITerms all = i_terms_ensemble(ens, 4096, 3, 0.8);
  double i1_mean = 0.0, i3_mean = 0.0;
  for (const auto& w : ens) {
    const ITerms t = i_terms_profile(w, 4096, 3, 0.8);
    i1_mean += t.i1 / ens.size();
    i3_mean += t.i3 / ens.size();
  }
  CHECK(all.samples == 6);
  CHECK(all.i1 == doctest::Approx(i1_mean).epsilon(1e-13));
  // Averaging before the absolute value can only shrink the sum.
  CHECK(all.i3 <= i3_mean * (1 + 1e-12));
  CHECK(all.i1_stderr > 0.0);

  ITermsAccumulator acc(4096, 3, 0.3, 0.1, 0.8, 0.0);
  for (const auto& w : ens) acc.add(w);
  CHECK(acc.result().i3 == all.i3);
  CHECK(acc.result().total() == all.total());
}

TEST_CASE("summability statistic") {
  const WeightSeries zero = WeightSeries::from_values(std::vector<cplx>(4096, 0.0), params());
  const std::vector<std::uint64_t> schedule = {1024, 2048, 4096};
  const auto entries = summability_statistic(zero, schedule);
  REQUIRE(entries.size() == 3);
  for (const auto& e : entries) {
    CHECK(e.partial == 0.0);
    CHECK(e.m_max == floor_power(e.N, 0.35));
    CHECK(e.correlations.size() == e.m_max);
  }
  CHECK(summability_statistic(zero, std::vector<std::uint64_t>{}).empty());

  const WeightSeries w = WeightSeries::from_values(random_values(8, 4096), params());
  const auto s = summability_statistic(w, schedule);
  double partial = 0.0;
  for (const auto& e : s) {
    double inner = 0.0;
    for (std::uint64_t m = 1; m <= e.m_max; ++m) {
      CHECK(e.correlations[m - 1] == correlation_sum(w, e.N, m, 0.1));
      inner += std::abs(e.correlations[m - 1]);
    }
    CHECK(e.inner == doctest::Approx(inner).epsilon(1e-14));
    CHECK(e.increment == doctest::Approx(std::pow(e.N, 2 * 0.3 - 1 - 0.35) * inner).epsilon(1e-14));
    partial += e.increment;
    CHECK(e.partial == doctest::Approx(partial).epsilon(1e-14));
  }
}

TEST_CASE("c_n sum normalization") {
  const HardyExpr p = HardyExpr::parse("x^(3/2)");
  const WeightSeries w0 = WeightSeries::build(Realization::generate({0.3, 1, 10}), p, params());
  // |c_1| = |Y_1| = 0 because sigma_1 = 1.
  CHECK(c_sum_check(w0, std::vector<std::uint64_t>{1}).front() == 0.0);

  // E|Y_n| = 2 sigma_n (1 - sigma_n); the normalized mean at N = 10^4 is 2.54508.
  double mean = 0.0, lo = 1e9, hi = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const WeightSeries w = WeightSeries::build(Realization::generate({0.3, seed, 10000}), p, params());
    const double v = c_sum_check(w, std::vector<std::uint64_t>{10000}).front();
    CHECK(v >= 0.5);
    CHECK(v <= 3.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    mean += v / 20;
  }
  CHECK(std::abs(mean - 2.54508013494736) < 0.02 * 2.54508013494736);
  CHECK(hi / lo < 4.0);
}

TEST_CASE("van der Corput: trivial cases") {
  const std::vector<std::vector<cplx>> one = {{cplx(1, 2), cplx(0, -1)}};
  const VdcResult r1 = vdc_inequality_check(one, 1);
  CHECK(r1.lhs == doctest::Approx(6.0));
  CHECK(r1.holds);
  const std::vector<std::vector<cplx>> same(5, std::vector<cplx>{1.0});
  for (std::size_t M = 1; M <= 5; ++M) CHECK(vdc_inequality_check(same, M).holds);
  const std::vector<std::vector<cplx>> alt = {{1.0}, {-1.0}, {1.0}, {-1.0}};
  CHECK(vdc_inequality_check(alt, 2).holds);
  CHECK(vdc_inequality_check(alt, 2).lhs == 0.0);
  CHECK_THROWS_AS(vdc_inequality_check(alt, 0), Error);
}

TEST_CASE("independence split: the main term has mean zero") {
  const CorrelationParams prm = params();
  for (const char* src : {"0", "x^(3/2)"}) {
    const HardyExpr p = HardyExpr::parse(src);
    double sum_re = 0.0, sq_re = 0.0;
    const int seeds = 1000;
    for (int seed = 1; seed <= seeds; ++seed) {
      const WeightSeries w = WeightSeries::build(Realization::generate({0.3, static_cast<std::uint64_t>(seed), 300}), p, prm);
      const IndependenceSplit sp = independence_split(w, 300, 2, 5, 0.5);
      CHECK(sp.remainder >= 0.0);
      sum_re += sp.main.real();
      sq_re += sp.main.real() * sp.main.real();
    }
    const double mean = sum_re / seeds;
    const double se = std::sqrt((sq_re / seeds - mean * mean) / seeds);
    CHECK(std::abs(mean) < 4.0 * se);
  }
  const WeightSeries w = WeightSeries::build(Realization::generate({0.3, 1, 100}), HardyExpr::parse("x"), prm);
  CHECK_THROWS_AS(independence_split(w, 100, 3, 3, 0.5), Error);
  // With p = 0 the main term is the full lag sum.
  const WeightSeries z = WeightSeries::build(Realization::generate({0.3, 4, 200}), HardyExpr::parse("0"), prm);
  const IndependenceSplit sp = independence_split(z, 200, 2, 3, 0.5);
  double full = 0.0;
  for (std::uint64_t n = ceil_power(200, 0.9); n + 5 <= 200; ++n)
    full += z.centered(n + 3) * z.centered(n + 5) * z.centered(n) * z.centered(n + 2);
  CHECK(sp.main.real() == doctest::Approx(full).epsilon(1e-12));
  CHECK(sp.main.imag() == 0.0);
}

TEST_CASE("ensemble I-terms stay under the envelope at N = 2^16") {
  const HardyExpr p = HardyExpr::parse("x^(3/2)", 0.5);
  const std::uint64_t N = 1 << 16;
  std::vector<WeightSeries> ens;
  for (std::uint64_t seed = 1; seed <= 20; ++seed)
    ens.push_back(WeightSeries::build(Realization::generate({0.3, seed, N}), p, params()));
  double worst = 0.0;
  for (std::uint64_t m = 1; m <= floor_power(N, 0.35); ++m) {
    const ITerms t = i_terms_ensemble(ens, N, m, 0.8);
    worst = std::max(worst, t.total() / t.envelope);
  }
  CHECK(worst < 1.0);
}
