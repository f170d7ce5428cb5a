#include <cmath>
#include <sstream>
#include <vector>

#include "doctest.h"
#include "ergolab/counter_hash.hpp"
#include "ergolab/error.hpp"
#include "ergolab/random_sequence.hpp"

using namespace ergolab;

namespace {

bool direct_draw(double a, std::uint64_t seed, std::uint64_t n) {
  return counter_uniform(stream_key(seed), n) < std::exp(-a * std::log(static_cast<double>(n)));
}

}  // namespace

TEST_CASE("selector parameters are validated") {
  CHECK_THROWS_AS(SelectorParams({0.0, 1, 10}).validate(), Error);
  CHECK_THROWS_AS(SelectorParams({0.5, 1, 10}).validate(), Error);
  CHECK_THROWS_AS(SelectorParams({-0.1, 1, 10}).validate(), Error);
  CHECK_THROWS_AS(SelectorParams({0.3, 1, 0}).validate(), Error);
  CHECK_NOTHROW(SelectorParams({0.3, 1, 1}).validate());
  CHECK_THROWS_AS(Realization::generate({0.7, 1, 10}), Error);
}

TEST_CASE("sigma_n = n^-a") {
  CHECK(selection_probability(0.3, 1) == 1.0);
  CHECK(selection_probability(0.3, 1000) == doctest::Approx(std::pow(1000.0, -0.3)).epsilon(1e-15));
}

TEST_CASE("packed bits equal the per-index draw") {
  for (std::uint64_t seed : {1ULL, 2ULL, 77ULL, 123456789ULL}) {
    for (double a : {0.05, 0.3, 0.49}) {
      const Realization r = Realization::generate({a, seed, 200000});
      std::uint64_t mismatches = 0;
      for (std::uint64_t n = 1; n <= r.n_max(); ++n)
        mismatches += r.bit(n) != direct_draw(a, seed, n);
      CHECK(mismatches == 0);
    }
  }
}

TEST_CASE("X_1 = 1 because sigma_1 = 1") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const Realization r = Realization::generate({0.3, seed, 3});
    CHECK(r.bit(1));
    CHECK(r.prefix(1) == 1);
  }
}

TEST_CASE("prefix, range and counting function agree") {
  const Realization r = Realization::generate({0.3, 9, 5000});
  CHECK(r.prefix(0) == 0);
  std::uint64_t s = 0;
  std::vector<std::uint64_t> positions;
  for (std::uint64_t n = 1; n <= 5000; ++n) {
    if (r.bit(n)) {
      ++s;
      positions.push_back(n);
    }
    REQUIRE(r.prefix(n) == s);
  }
  CHECK(r.selected_count() == s);
  CHECK(r.range_count(10, 4000) == r.prefix(4000) - r.prefix(9));
  CHECK(r.range_count(50, 49) == 0);
  for (std::uint64_t k = 1; k <= s; ++k) REQUIRE(r.counting_function(k) == positions[k - 1]);
  CHECK_THROWS_AS(r.counting_function(s + 1), Error);
  CHECK_THROWS_AS(r.bit(0), Error);
  CHECK_THROWS_AS(r.bit(5001), Error);

  std::vector<std::uint64_t> seen;
  r.for_each_selected(20, [&](std::uint64_t k, std::uint64_t pos) {
    CHECK(pos == positions[k - 1]);
    seen.push_back(k);
  });
  CHECK(seen.size() == 20);
}

TEST_CASE("Y_n = X_n - sigma_n and |Y_n| is sigma_n or 1 - sigma_n") {
  const Realization r = Realization::generate({0.3, 4, 1000});
  for (std::uint64_t n = 1; n <= 1000; ++n) {
    const double sigma = selection_probability(0.3, n);
    CHECK(r.centered(n) == (r.bit(n) ? 1.0 - sigma : -sigma));
  }
}

TEST_CASE("realizations are reproducible and seed dependent") {
  const Realization a = Realization::generate({0.3, 5, 100000});
  const Realization b = Realization::generate({0.3, 5, 100000});
  const Realization c = Realization::generate({0.3, 6, 100000});
  CHECK(a.same_bits(b));
  CHECK_FALSE(a.same_bits(c));
  CHECK(selected_count(0.3, 5, 100000) == a.selected_count());
  CHECK(selected_count(0.3, 5, 77777) == a.prefix(77777));
}

TEST_CASE("generate_for_count ends on the last needed selection") {
  for (std::uint64_t count : {1ULL, 10ULL, 1000ULL, 50000ULL}) {
    const Realization r = Realization::generate_for_count(0.3, 11, count);
    CHECK(r.selected_count() == count);
    CHECK(r.bit(r.n_max()));
    const Realization full = Realization::generate({0.3, 11, r.n_max()});
    CHECK(full.same_bits(r));
  }
}

TEST_CASE("W_N by direct summation") {
  // Frozen values from Hurwitz zeta at 60 digits: W_N = zeta(a) - zeta(a, N + 1).
  CHECK(sigma_prefix(0.3, 4) == doctest::Approx(3.1912294450675470188).epsilon(1e-15));
  CHECK(sigma_prefix(0.3, 10000) == doctest::Approx(900.49462342393533168).epsilon(1e-14));
  CHECK(sigma_prefix(0.3, 1000000) == doctest::Approx(22640.434686081361887).epsilon(1e-13));
  CHECK(sigma_prefix(0.3, 1048576) == doctest::Approx(23404.817538956659201).epsilon(1e-13));
  const Realization r = Realization::generate({0.3, 1, 10000});
  CHECK(r.w(10000) == sigma_prefix(0.3, 10000));
  CHECK(r.w(0) == 0.0);
  // Asymptotic ratio W_2N / W_N -> 2^{1-a}.
  const double ratio = sigma_prefix(0.3, 2000000) / sigma_prefix(0.3, 1000000);
  CHECK(ratio == doctest::Approx(std::pow(2.0, 0.7)).epsilon(2e-4));
  CHECK_THROWS_AS(sigma_prefix(1.0, 10), Error);
  CHECK_THROWS_AS(sigma_prefix(0.3, 0), Error);
}

TEST_CASE("LLN: S_N / W_N -> 1") {
  int close = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const std::uint64_t s = selected_count(0.3, seed, 100000);
    close += std::abs(static_cast<double>(s) / sigma_prefix(0.3, 100000) - 1.0) < 0.05;
  }
  CHECK(close >= 19);
}

TEST_CASE("realization CSV round trip") {
  const Realization r = Realization::generate({0.3, 3, 700});
  std::stringstream ss;
  write_realization_csv(r, ss);
  CHECK(ss.str().rfind("index,bit\n", 0) == 0);
  const Realization back = read_realization_csv(ss, 0.3);
  CHECK(back.same_bits(r));
  std::stringstream bad("index,bit\n1,2\n");
  CHECK_THROWS_AS(read_realization_csv(bad, 0.3), Error);
}

TEST_CASE("synthetic realizations") {
  const std::vector<std::uint8_t> bits = {1, 0, 1, 1, 0};
  const Realization r = Realization::from_bits(0.3, bits);
  CHECK(r.n_max() == 5);
  CHECK(r.prefix(5) == 3);
  CHECK(r.counting_function(3) == 4);
}

TEST_CASE("deviation statistics") {
  const double w = sigma_prefix(0.3, 10000);
  const auto th = default_thresholds(w);
  REQUIRE(th.size() == 6);
  CHECK(th[0] == 0.0);
  CHECK(th[3] == doctest::Approx(3.0 * std::sqrt(w)));
  CHECK(th[5] == doctest::Approx(w / 2.0));
  const DeviationReport rep = deviation_statistics({0.3, 1, 10000}, 10000, 2000, th);
  CHECK(rep.rows[0].frequency == 1.0);
  for (std::size_t i = 1; i < rep.rows.size(); ++i) CHECK(rep.rows[i].exceedances <= rep.rows[i - 1].exceedances);
  CHECK(rep.rows[5].exceedances == 0);
  for (const auto& row : rep.rows) {
    CHECK(row.envelope > 0.0);
    CHECK(row.envelope <= 1.0);
  }
  // Same seed family, same counts.
  const DeviationReport again = deviation_statistics({0.3, 1, 10000}, 10000, 2000, th);
  CHECK(again.rows[2].exceedances == rep.rows[2].exceedances);
}
