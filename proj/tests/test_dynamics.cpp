#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "ergolab/counter_hash.hpp"
#include "ergolab/dynamics.hpp"
#include "ergolab/error.hpp"

using namespace ergolab;
using cplx = std::complex<double>;

namespace {

const u128 kSqrt2Minus1 = (static_cast<u128>(0x6A09E667F3BCC908ULL) << 64) | 0xB2FB1366EA957D3EULL;

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
}

}  // namespace

TEST_CASE("observable parsing") {
  CHECK(Observable::parse("1").terms().size() == 1);
  CHECK(Observable::parse("e(x)").terms()[0].frequency == 1);
  CHECK(Observable::parse("e(3x)").terms()[0].frequency == 3);
  CHECK(Observable::parse("e(-2*x)").terms()[0].frequency == -2);
  const Observable f = Observable::parse("0.5 + 0.5*e(x)");
  REQUIRE(f.terms().size() == 2);
  CHECK(f.terms()[0].frequency == 0);
  CHECK(f.terms()[0].coefficient == cplx(0.5));
  CHECK(Observable::parse("0.5*e(x) - 0.5*e(-x)").terms()[1].coefficient == cplx(-0.5));
  CHECK(Observable::parse("delta0").form() == Observable::Form::Delta0);
  CHECK(Observable::parse("sign").form() == Observable::Form::Sign);
  CHECK_THROWS_AS(Observable::parse("e(x) + e(2x)"), Error);  // sup norm 2
  CHECK_THROWS_AS(Observable::parse("cos(x)"), Error);
  CHECK_THROWS_AS(Observable::parse(""), Error);
}

TEST_CASE("rotation angle is held exactly") {
  const auto sys = DynamicalSystem::rotation("sqrt2m1", Observable::parse("e(x)"));
  CHECK(sys.alpha_fixed() == kSqrt2Minus1);
  CHECK(sys.alpha() == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-16));
  const auto golden = DynamicalSystem::rotation("golden", Observable::parse("e(x)"));
  // floor(((sqrt 5 - 1)/2) 2^128) from a 60-digit oracle.
  const u128 g = (static_cast<u128>(0x9E3779B97F4A7C15ULL) << 64) | 0xF39CC0605CEDC834ULL;
  CHECK(golden.alpha_fixed() == g);
  CHECK_THROWS_AS(DynamicalSystem::rotation("x + 1", Observable::parse("e(x)")), Error);
  CHECK_THROWS_AS(DynamicalSystem::rotation("sqrt2m1", Observable::sign()), Error);
}

TEST_CASE("T^n is exact and composes") {
  const auto sys = DynamicalSystem::rotation("sqrt2m1", Observable::parse("e(x)"));
  State x;
  x.position = static_cast<u128>(12345) << 100;
  const State a = sys.advance(sys.advance(x, 1000003), 999999999);
  const State b = sys.advance(x, 1000003ULL + 999999999ULL);
  CHECK(a.position == b.position);
  CHECK(sys.advance(x, 5).position == x.position + 5 * kSqrt2Minus1);

  const auto cyc = DynamicalSystem::cyclic_shift(7, Observable::delta0());
  State y;
  y.position = 3;
  CHECK(cyc.advance(y, 11).position == (3 + 11) % 7);
}

TEST_CASE("known means") {
  CHECK(DynamicalSystem::rotation("sqrt2m1", Observable::parse("e(x)")).known_mean() == cplx(0.0));
  CHECK(DynamicalSystem::rotation("sqrt2m1", Observable::parse("0.5+0.5*e(x)")).known_mean() == cplx(0.5));
  CHECK(DynamicalSystem::cyclic_shift(5, Observable::delta0()).known_mean() == cplx(0.0));
  CHECK(DynamicalSystem::cyclic_shift(5, Observable::sign()).known_mean() == cplx(0.2));
  CHECK(DynamicalSystem::cyclic_shift(4, Observable::parse("0.5*e(4x)")).known_mean() == cplx(0.5));
  CHECK(DynamicalSystem::bernoulli_shift(2, 3, Observable::parse("0.5*e(8x)+0.5*e(x)")).known_mean() == cplx(0.5));
}

TEST_CASE("Birkhoff means") {
  const auto rot = DynamicalSystem::rotation("sqrt2m1", Observable::parse("e(x)"));
  std::vector<State> origin(1);
  // |sum_{n<=N} e(n alpha)| / N = |sin(pi N alpha) / sin(pi alpha)| / N, 20-digit oracle.
  const cplx m = birkhoff_mean(rot, 1000000, origin)[0];
  CHECK(std::abs(m) == doctest::Approx(1.0175956057278654598e-6).epsilon(1e-7));
  CHECK(std::abs(m) < 1e-4);

  const auto c = DynamicalSystem::rotation("sqrt2m1", Observable::constant(0.3));
  CHECK(std::abs(birkhoff_mean(c, 777, origin)[0] - 0.3) < 1e-15);

  const auto cyc = DynamicalSystem::cyclic_shift(5, Observable::delta0());
  for (std::uint64_t x0 = 0; x0 < 5; ++x0) {
    State x;
    x.position = x0;
    std::vector<State> pts{x};
    CHECK(std::abs(birkhoff_mean(cyc, 5000, pts)[0]) < 1e-15);
  }
}

TEST_CASE("the shifts preserve their reference measures") {
  const std::size_t samples = 20000;
  for (const auto& sys : {DynamicalSystem::rotation("sqrt2m1", Observable::parse("e(x)")),
                          DynamicalSystem::cyclic_shift(97, Observable::delta0()),
                          DynamicalSystem::bernoulli_shift(3, 4, Observable::parse("e(x)"))}) {
    std::vector<int> before(10), after(10);
    for (std::size_t i = 0; i < samples; ++i) {
      const State x = sys.sample_reference(42, i);
      before[std::min(9, static_cast<int>(sys.coordinate(x) * 10))]++;
      after[std::min(9, static_cast<int>(sys.coordinate(sys.advance(x, 123457)) * 10))]++;
    }
    // Push-forward matches the reference within 5 standard errors per bin;
    // the cyclic bins hold 9 or 10 residues, hence the loose uniformity check.
    for (int b = 0; b < 10; ++b) {
      const double expected = samples / 10.0;
      CHECK(std::abs(before[b] - after[b]) < 5.0 * std::sqrt(2.0 * expected));
      CHECK(std::abs(before[b] - expected) < 0.05 * expected + 5.0 * std::sqrt(expected));
    }
  }
}

TEST_CASE("sample points are distinct low-discrepancy probes") {
  const auto sys = DynamicalSystem::rotation("sqrt2m1", Observable::parse("e(x)"));
  const auto pts = sys.sample_points(16);
  REQUIRE(pts.size() == 16);
  std::vector<double> xs;
  for (const auto& p : pts) xs.push_back(sys.coordinate(p));
  std::sort(xs.begin(), xs.end());
  for (std::size_t i = 0; i < 16; ++i) CHECK(xs[i] == doctest::Approx(i / 16.0));
}

TEST_CASE("f = 1 reduces the weighted average to the exponential sum") {
  const HardyExpr p = HardyExpr::parse("x^(3/2)");
  const auto sys = DynamicalSystem::rotation("sqrt2m1", Observable::constant(1.0));
  const Realization r = Realization::generate_for_count(0.3, 3, 5000);
  const std::vector<std::uint64_t> sched = {10, 100, 1000, 5000};
  const auto pts = sys.sample_points(3);
  const int bits = required_precision(p, 5000);
  const AverageSeries s = weighted_random_average(sys, p, r, sched, pts, bits);
  for (std::size_t k = 0; k < sched.size(); ++k)
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(s.values[i][k] == exp_sum(p, sched[k], bits));
}

TEST_CASE("exact cancellation on the two-point shift") {
  const auto sys = DynamicalSystem::cyclic_shift(2, Observable::sign());
  const std::vector<std::uint8_t> ones(1000, 1);
  const Realization r = Realization::from_bits(0.3, ones);
  const auto phases = phase_table(HardyExpr::parse("0"), 1000, 64);
  std::vector<State> origin(1);
  const std::vector<std::uint64_t> sched = {2, 10, 500, 1000};
  const AverageSeries s = weighted_random_average(sys, phases, r, sched, origin);
  for (std::size_t k = 0; k < sched.size(); ++k) CHECK(s.values[0][k] == cplx(0.0));
}

TEST_CASE("averages respect the triangle bound and report short realizations") {
  const HardyExpr p = HardyExpr::parse("x^(3/2)");
  const auto sys = DynamicalSystem::bernoulli_shift(2, 6, Observable::parse("0.3+0.7*e(5x)"));
  const Realization r = Realization::generate_for_count(0.3, 8, 2000);
  const auto pts = sys.sample_points(4);
  const std::vector<std::uint64_t> sched = {1, 64, 2000};
  const AverageSeries s = weighted_random_average(sys, p, r, sched, pts);
  for (const auto& row : s.values)
    for (const cplx& v : row) CHECK(std::abs(v) <= 1.0 + 1e-12);
  CHECK(s.median_abs.size() == 3);
  const std::vector<std::uint64_t> too_long = {2001};
  CHECK_THROWS_AS(weighted_random_average(sys, p, r, too_long, pts), Error);
}

TEST_CASE("chain diagnostics: definitional steps") {
  const HardyExpr p = HardyExpr::parse("x^(3/2)");
  const auto sys = DynamicalSystem::rotation("sqrt2m1", Observable::parse("0.5+0.5*e(x)"));
  const Realization r = Realization::generate({0.3, 5, 1 << 16});
  const auto pts = sys.sample_points(4);
  const ChainReport rep = chain_diagnostics(sys, p, r, 1 << 16, pts);
  CHECK(rep.s_n == r.prefix(1 << 16));
  for (const ChainPoint& pt : rep.points) {
    CHECK(pt.differences[0] == 0.0);
    const double ratio = std::abs(static_cast<double>(rep.s_n) / rep.w_n - 1.0);
    CHECK(pt.differences[1] <= ratio * std::abs(pt.stages[1]) * (1 + 1e-12) + 1e-15);
    CHECK(pt.stages[4] == rep.points[0].stages[4]);
    CHECK(std::abs(pt.stages[5]) == doctest::Approx(0.5 * std::abs(exp_sum(p, rep.s_n, 0))).epsilon(1e-12));
  }
  CHECK_THROWS_AS(chain_diagnostics(sys, p, r, (1 << 16) + 1, pts), Error);
}

TEST_CASE("chain differences shrink with N") {
  const HardyExpr p = HardyExpr::parse("x^(3/2)");
  const auto sys = DynamicalSystem::rotation("sqrt2m1", Observable::parse("0.5+0.5*e(x)"));
  const auto pts = sys.sample_points(4);
  const std::uint64_t small = 1 << 10, large = 1 << 18;
  const auto phases = phase_table(p, 20000, 0);
  std::vector<std::vector<double>> lo(6), hi(6);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Realization r = Realization::generate({0.3, seed, large});
    for (const auto& [N, dest] : {std::pair{small, &lo}, std::pair{large, &hi}}) {
      const ChainReport rep = chain_diagnostics(sys, phases, r, N, pts);
      for (const auto& pt : rep.points)
        for (int s = 0; s < 6; ++s) (*dest)[s].push_back(pt.differences[s]);
    }
  }
  for (int s = 2; s < 6; ++s) CHECK(median(hi[s]) < median(lo[s]));
}

TEST_CASE("partial summation identity") {
  std::vector<double> sigma(1000);
  for (std::size_t n = 0; n < sigma.size(); ++n) sigma[n] = std::pow(n + 1.0, -0.3);
  const std::vector<cplx> ones(1000, cplx(1.0));
  auto [l1, r1] = partial_summation_identity(sigma, ones, 1000);
  CHECK(std::abs(l1 - 1.0) < 1e-12);
  CHECK(std::abs(r1 - 1.0) < 1e-12);
  const std::vector<cplx> vals = {cplx(0.3, -0.2)};
  auto [l2, r2] = partial_summation_identity(sigma, vals, 1);
  CHECK(std::abs(l2 - vals[0]) < 1e-15);
  CHECK(std::abs(r2 - vals[0]) < 1e-15);

  const std::uint64_t key = stream_key(99);
  std::vector<double> sg(10000);
  std::vector<cplx> a(10000);
  for (std::size_t n = 0; n < sg.size(); ++n) {
    sg[n] = std::pow(n + 1.0, -0.3);
    a[n] = {2 * counter_uniform(key, 2 * n) - 1, 2 * counter_uniform(key, 2 * n + 1) - 1};
  }
  auto [l3, r3] = partial_summation_identity(sg, a, 10000);
  CHECK(std::abs(l3 - r3) < 1e-10 * std::abs(l3));
}

TEST_CASE("unweighted transfer bound for a coboundary") {
  // f = h - h o T with h = e(x)/2 on the rotation: f = (1 - e(alpha))/2 e(x).
  const auto probe = DynamicalSystem::rotation("sqrt2m1", Observable::constant(0.0));
  const cplx coef = (1.0 - unit_phase(probe.alpha())) / 2.0;
  const auto sys = DynamicalSystem::rotation("sqrt2m1", Observable::character(1, coef));
  const auto phases = phase_table(HardyExpr::parse("x^(3/2)"), 40000, 0);
  const Realization r = Realization::generate({0.3, 17, 100000});
  for (const State& x : sys.sample_points(4)) {
    for (std::uint64_t N : {100ULL, 5000ULL, 100000ULL}) {
      cplx sum{};
      for (std::uint64_t n = 1; n <= N; ++n) {
        const std::uint64_t s = r.prefix(n);
        const cplx g = s == 0 ? cplx(0.0) : phases[s - 1];  // G bounded by 1
        sum += g * sys.observe_orbit(x, n);
      }
      const double bound = 2.0 * 1.0 * 0.5 * (static_cast<double>(r.prefix(N)) + 1.0) / N;
      CHECK(std::abs(sum) / N <= bound * (1 + 1e-9));
    }
  }
}
