#include "ergolab/harness.hpp"

#include <mpfr.h>
#include <unistd.h>

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "ergolab/correlation.hpp"
#include "ergolab/counter_hash.hpp"
#include "ergolab/dynamics.hpp"
#include "ergolab/error.hpp"
#include "ergolab/hardy.hpp"
#include "ergolab/random_sequence.hpp"

namespace ergolab {

namespace {

using cplx = std::complex<double>;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view what) {
  fail(ErrorCode::InvalidArgument,
       "config key '" + std::string(key) + "': " + std::string(what) + ", got '" + std::string(value) + "'");
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
    bad_value(key, v, "expected a number");
  return out;
}

std::uint64_t parse_uint(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || res.ec != std::errc() || res.ptr != v.data() + v.size())
    bad_value(key, v, "expected a nonnegative integer");
  return out;
}

std::vector<double> parse_double_list(std::string_view key, std::string_view v) {
  std::vector<double> out;
  for (std::string_view part : split(v, ',')) out.push_back(parse_double(key, part));
  return out;
}

std::string join_numbers(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + format_number(v[i]);
  return s;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  if (v.empty()) return std::nan("");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string num(double v) { return format_number(v); }
std::string num(std::uint64_t v) { return std::to_string(v); }

// Table builder that appends the fingerprint to every row.
class TableBuilder {
 public:
  TableBuilder(std::string name, std::vector<std::string> columns, std::string fingerprint)
      : fingerprint_(std::move(fingerprint)) {
    table_.name = std::move(name);
    table_.columns = std::move(columns);
    table_.columns.push_back("config");
  }
  void add(std::vector<std::string> row) {
    row.push_back(fingerprint_);
    if (row.size() != table_.columns.size()) fail(ErrorCode::InvalidArgument, "internal: row width");
    table_.rows.push_back(std::move(row));
  }
  Table take() { return std::move(table_); }

 private:
  Table table_;
  std::string fingerprint_;
};

std::vector<std::uint64_t> union_schedule(const ExperimentConfig& cfg) {
  std::vector<std::uint64_t> all;
  for (double rho : cfg.rho) {
    auto s = lacunary_schedule(rho, cfg.n_min, cfg.n_max);
    all.insert(all.end(), s.begin(), s.end());
  }
  std::sort(all.begin(), all.end());
  all.erase(std::unique(all.begin(), all.end()), all.end());
  return all;
}

void add_slope_row(TableBuilder& tb, std::vector<std::string> prefix,
                   const std::vector<std::pair<double, double>>& series) {
  if (series.size() < 3) return;
  const SlopeFit fit = slope_fit(series);
  prefix.insert(prefix.end(), {num(fit.slope), num(fit.intercept), num(fit.half_width),
                               num(static_cast<std::uint64_t>(fit.points)),
                               num(static_cast<std::uint64_t>(fit.clamped))});
  tb.add(std::move(prefix));
}

std::vector<std::string> slope_columns(std::vector<std::string> prefix) {
  prefix.insert(prefix.end(), {"slope", "intercept", "half_width", "points", "clamped"});
  return prefix;
}

DynamicalSystem make_system(const ExperimentConfig& cfg) {
  Observable f = Observable::parse(cfg.f);
  if (cfg.system == "rotation") return DynamicalSystem::rotation(cfg.alpha, std::move(f));
  if (cfg.system == "cyclic") return DynamicalSystem::cyclic_shift(cfg.q, std::move(f));
  if (cfg.system == "bernoulli")
    return DynamicalSystem::bernoulli_shift(cfg.alphabet, cfg.window, std::move(f));
  fail(ErrorCode::InvalidArgument, "unknown system '" + cfg.system + "' (rotation, cyclic, bernoulli)");
}

int effective_bits(const ExperimentConfig& cfg, const HardyExpr& p, std::uint64_t length) {
  return cfg.bits > 0 ? cfg.bits : required_precision(p, std::max<std::uint64_t>(length, 1));
}

CorrelationParams correlation_params(const ExperimentConfig& cfg, double a) {
  CorrelationParams prm = CorrelationParams::defaults(a);
  prm.delta = cfg.delta;
  if (cfg.b) prm.b = *cfg.b;
  if (cfg.c) prm.c_exponent = *cfg.c;
  prm.kappa = cfg.kappa;
  prm.rho = cfg.rho.front();
  prm.validate();
  return prm;
}

// ---------------------------------------------------------------- pipelines

Report run_generate(const ExperimentConfig& cfg, const std::string& fp) {
  TableBuilder main("", {"a", "seed", "index", "bit"}, fp);
  for (double a : cfg.a) {
    for (std::uint64_t seed : cfg.seeds()) {
      const Realization r = Realization::generate({a, seed, cfg.n_max});
      for (std::uint64_t n = 1; n <= r.n_max(); ++n)
        main.add({num(a), num(seed), num(n), r.bit(n) ? "1" : "0"});
    }
  }
  Report rep;
  rep.tables.push_back(main.take());
  return rep;
}

Report run_expsum(const ExperimentConfig& cfg, const std::string& fp) {
  const HardyExpr p = HardyExpr::parse(cfg.p, cfg.eps);
  const auto all = union_schedule(cfg);
  TableBuilder main("", {"rho", "N", "re", "im", "abs", "bits"}, fp);
  TableBuilder slopes("slopes", slope_columns({"rho"}), fp);
  if (!all.empty()) {
    const int bits = effective_bits(cfg, p, all.back());
    const auto phases = phase_table(p, all.back(), bits);
    for (double rho : cfg.rho) {
      std::vector<std::pair<double, double>> series;
      for (std::uint64_t N : lacunary_schedule(rho, cfg.n_min, cfg.n_max)) {
        const cplx v = normalized_sum(phases, N);
        main.add({num(rho), num(N), num(v.real()), num(v.imag()), num(std::abs(v)),
                  num(static_cast<std::uint64_t>(bits))});
        series.emplace_back(static_cast<double>(N), std::abs(v));
      }
      add_slope_row(slopes, {num(rho)}, series);
    }
  }
  Report rep;
  rep.tables.push_back(main.take());
  rep.tables.push_back(slopes.take());
  return rep;
}

Report run_average(const ExperimentConfig& cfg, const std::string& fp) {
  const HardyExpr p = HardyExpr::parse(cfg.p, cfg.eps);
  const DynamicalSystem sys = make_system(cfg);
  const auto points = sys.sample_points(cfg.samples);
  const auto all = union_schedule(cfg);
  const auto seeds = cfg.seeds();

  TableBuilder main("", {"a", "rho", "seed", "sample_index", "N", "re", "im", "abs"}, fp);
  TableBuilder summary("summary", {"a", "rho", "N", "median_abs", "mean_abs"}, fp);
  TableBuilder slopes("slopes", slope_columns({"a", "rho"}), fp);
  if (all.empty()) {
    Report rep;
    rep.tables = {main.take(), summary.take(), slopes.take()};
    return rep;
  }
  const auto phases = phase_table(p, all.back(), effective_bits(cfg, p, all.back()));

  for (double a : cfg.a) {
    // results[rho][seed] -> series
    std::vector<std::vector<AverageSeries>> results(cfg.rho.size());
    for (std::uint64_t seed : seeds) {
      const Realization r = Realization::generate_for_count(a, seed, all.back());
      for (std::size_t k = 0; k < cfg.rho.size(); ++k) {
        const auto sched = lacunary_schedule(cfg.rho[k], cfg.n_min, cfg.n_max);
        results[k].push_back(weighted_random_average(sys, phases, r, sched, points));
      }
    }
    for (std::size_t k = 0; k < cfg.rho.size(); ++k) {
      const auto sched = lacunary_schedule(cfg.rho[k], cfg.n_min, cfg.n_max);
      for (std::size_t s = 0; s < seeds.size(); ++s)
        for (std::size_t i = 0; i < points.size(); ++i)
          for (std::size_t j = 0; j < sched.size(); ++j) {
            const cplx v = results[k][s].values[i][j];
            main.add({num(a), num(cfg.rho[k]), num(seeds[s]), num(static_cast<std::uint64_t>(i)),
                      num(sched[j]), num(v.real()), num(v.imag()), num(std::abs(v))});
          }
      std::vector<std::pair<double, double>> series;
      for (std::size_t j = 0; j < sched.size(); ++j) {
        std::vector<double> mags;
        for (std::size_t s = 0; s < seeds.size(); ++s)
          for (std::size_t i = 0; i < points.size(); ++i) mags.push_back(std::abs(results[k][s].values[i][j]));
        if (mags.empty()) continue;
        const double med = median(mags);
        summary.add({num(a), num(cfg.rho[k]), num(sched[j]), num(med), num(mean(mags))});
        series.emplace_back(static_cast<double>(sched[j]), med);
      }
      add_slope_row(slopes, {num(a), num(cfg.rho[k])}, series);
    }
  }
  Report rep;
  rep.tables = {main.take(), summary.take(), slopes.take()};
  return rep;
}

Report run_chain(const ExperimentConfig& cfg, const std::string& fp) {
  const HardyExpr p = HardyExpr::parse(cfg.p, cfg.eps);
  const DynamicalSystem sys = make_system(cfg);
  const auto points = sys.sample_points(cfg.samples);
  const auto all = union_schedule(cfg);
  const auto seeds = cfg.seeds();

  std::vector<std::string> steps = {"step1", "step2", "step3", "step4", "step5", "step6"};
  std::vector<std::string> cols = {"a", "rho", "seed", "sample_index", "N", "s_n", "w_n"};
  cols.insert(cols.end(), steps.begin(), steps.end());
  TableBuilder main("", cols, fp);
  std::vector<std::string> scols = {"a", "rho", "N"};
  for (const auto& s : steps) scols.push_back("median_" + s);
  TableBuilder summary("summary", scols, fp);
  if (all.empty()) {
    Report rep;
    rep.tables = {main.take(), summary.take()};
    return rep;
  }

  for (double a : cfg.a) {
    // Phase table long enough for S_N in every plausible realization.
    const double w = sigma_prefix(a, all.back());
    std::uint64_t length = static_cast<std::uint64_t>(std::ceil(w + 10.0 * std::sqrt(w) + 16.0));
    length = std::min(length, all.back());
    const int bits = effective_bits(cfg, p, length);
    auto phases = phase_table(p, length, bits);

    std::vector<std::map<std::uint64_t, ChainReport>> per_seed;
    for (std::uint64_t seed : seeds) {
      const Realization r = Realization::generate({a, seed, all.back()});
      if (r.selected_count() > phases.size()) {
        length = r.selected_count();
        phases = phase_table(p, length, cfg.bits > 0 ? cfg.bits : bits);
      }
      std::map<std::uint64_t, ChainReport> reports;
      for (std::uint64_t N : all) reports.emplace(N, chain_diagnostics(sys, phases, r, N, points));
      per_seed.push_back(std::move(reports));
    }
    for (double rho : cfg.rho) {
      const auto sched = lacunary_schedule(rho, cfg.n_min, cfg.n_max);
      for (std::size_t s = 0; s < seeds.size(); ++s)
        for (std::size_t i = 0; i < points.size(); ++i)
          for (std::uint64_t N : sched) {
            const ChainReport& rep = per_seed[s].at(N);
            std::vector<std::string> row = {num(a), num(rho), num(seeds[s]),
                                            num(static_cast<std::uint64_t>(i)), num(N),
                                            num(rep.s_n), num(rep.w_n)};
            for (double d : rep.points[i].differences) row.push_back(num(d));
            main.add(std::move(row));
          }
      for (std::uint64_t N : sched) {
        std::vector<std::string> row = {num(a), num(rho), num(N)};
        for (std::size_t k = 0; k < 6; ++k) {
          std::vector<double> d;
          for (const auto& reports : per_seed)
            for (const auto& pt : reports.at(N).points) d.push_back(pt.differences[k]);
          row.push_back(num(median(d)));
        }
        summary.add(std::move(row));
      }
    }
  }
  Report rep;
  rep.tables = {main.take(), summary.take()};
  return rep;
}

std::vector<std::uint64_t> m_subsample(std::uint64_t m_max) {
  std::vector<std::uint64_t> ms;
  for (std::uint64_t m = 1; m <= m_max; m *= 2) ms.push_back(m);
  if (m_max >= 1 && ms.back() != m_max) ms.push_back(m_max);
  return ms;
}

Report run_correlation(const ExperimentConfig& cfg, const std::string& fp) {
  const HardyExpr p = HardyExpr::parse(cfg.p, cfg.eps);
  const auto all = union_schedule(cfg);
  const auto seeds = cfg.seeds();

  TableBuilder main("", {"a", "rho", "seed", "N", "m", "corr_re", "corr_im", "corr_abs"}, fp);
  TableBuilder summary("summary",
                       {"a", "rho", "N", "csum_ratio", "summability_partial", "I1", "I2", "I3",
                        "envelope", "m_worst", "I1_se", "seeds"},
                       fp);
  // Growth exponent of max_m (I1 + I2 + I3) in N, and kappa = 2 - 4a - exponent.
  std::vector<std::string> exp_cols = slope_columns({"a", "rho"});
  exp_cols.push_back("kappa_fit");
  TableBuilder exponents("exponents", exp_cols, fp);
  if (all.empty()) {
    Report rep;
    rep.tables = {main.take(), summary.take(), exponents.take()};
    return rep;
  }

  for (double a : cfg.a) {
    const CorrelationParams prm = correlation_params(cfg, a);
    // I-term accumulators per (N, m), shared by every rho.
    std::map<std::pair<std::uint64_t, std::uint64_t>, ITermsAccumulator> acc;
    for (std::uint64_t N : all) {
      if (floor_power(N, prm.c_exponent) < 2) continue;
      for (std::uint64_t m : m_subsample(floor_power(N, prm.b)))
        acc.emplace(std::piecewise_construct, std::forward_as_tuple(N, m),
                    std::forward_as_tuple(N, m, a, prm.delta, prm.c_exponent, prm.kappa));
    }
    // per rho: seed -> entries / ratios
    std::vector<std::vector<std::vector<SummabilityEntry>>> entries(cfg.rho.size());
    std::vector<std::vector<std::vector<double>>> ratios(cfg.rho.size());
    for (std::uint64_t seed : seeds) {
      const Realization r = Realization::generate({a, seed, all.back()});
      const WeightSeries w = WeightSeries::build(r, p, prm, cfg.bits);
      for (std::size_t k = 0; k < cfg.rho.size(); ++k) {
        const auto sched = lacunary_schedule(cfg.rho[k], cfg.n_min, cfg.n_max);
        entries[k].push_back(summability_statistic(w, sched));
        ratios[k].push_back(c_sum_check(w, sched));
      }
      for (auto& [key, ac] : acc) ac.add(w);
    }
    for (std::size_t k = 0; k < cfg.rho.size(); ++k) {
      const double rho = cfg.rho[k];
      const auto sched = lacunary_schedule(rho, cfg.n_min, cfg.n_max);
      for (std::size_t s = 0; s < seeds.size(); ++s)
        for (const SummabilityEntry& e : entries[k][s])
          for (std::uint64_t m = 1; m <= e.m_max; ++m) {
            const cplx v = e.correlations[m - 1];
            main.add({num(a), num(rho), num(seeds[s]), num(e.N), num(m), num(v.real()),
                      num(v.imag()), num(std::abs(v))});
          }
      std::vector<std::pair<double, double>> growth;
      for (std::size_t j = 0; j < sched.size(); ++j) {
        const std::uint64_t N = sched[j];
        std::vector<double> rs, ps;
        for (std::size_t s = 0; s < seeds.size(); ++s) {
          rs.push_back(ratios[k][s][j]);
          ps.push_back(entries[k][s][j].partial);
        }
        ITerms worst;
        std::uint64_t m_worst = 0;
        bool have = false;
        for (const auto& [key, ac] : acc) {
          if (key.first != N) continue;
          const ITerms t = ac.result();
          if (!have || t.total() > worst.total()) {
            worst = t;
            m_worst = key.second;
            have = true;
          }
        }
        const double nan = std::nan("");
        const double envelope = std::pow(static_cast<double>(N), 2.0 - 4.0 * a - prm.kappa);
        summary.add({num(a), num(rho), num(N), num(median(rs)), num(median(ps)),
                     num(have ? worst.i1 : nan), num(have ? worst.i2 : nan),
                     num(have ? worst.i3 : nan), num(envelope), num(m_worst),
                     num(have ? worst.i1_stderr : nan),
                     num(static_cast<std::uint64_t>(seeds.size()))});
        if (have) growth.emplace_back(static_cast<double>(N), worst.total());
      }
      if (growth.size() >= 3) {
        const SlopeFit fit = slope_fit(growth);
        exponents.add({num(a), num(rho), num(fit.slope), num(fit.intercept), num(fit.half_width),
                       num(static_cast<std::uint64_t>(fit.points)),
                       num(static_cast<std::uint64_t>(fit.clamped)),
                       num(2.0 - 4.0 * a - fit.slope)});
      }
    }
  }
  Report rep;
  rep.tables = {main.take(), summary.take(), exponents.take()};
  return rep;
}

Report run_deviation(const ExperimentConfig& cfg, const std::string& fp) {
  TableBuilder main("", {"a", "seed", "N", "trials", "w_n", "threshold", "exceedances", "frequency",
                         "envelope", "chernoff_c"},
                    fp);
  for (double a : cfg.a) {
    for (std::uint64_t seed : cfg.seeds()) {
      const std::uint64_t N = cfg.n_max;
      std::vector<double> th = cfg.thresholds;
      if (th.empty()) th = default_thresholds(sigma_prefix(a, N));
      const DeviationReport rep =
          deviation_statistics({a, seed, N}, N, cfg.trials, th, cfg.chernoff_c);
      for (const DeviationRow& row : rep.rows)
        main.add({num(a), num(seed), num(N), num(rep.trials), num(rep.w_n), num(row.threshold),
                  num(row.exceedances), num(row.frequency), num(row.envelope), num(rep.chernoff_c)});
    }
  }
  Report rep;
  rep.tables.push_back(main.take());
  return rep;
}

Report run_vdc_selftest(const ExperimentConfig& cfg, const std::string& fp) {
  TableBuilder main("", {"instance", "kind", "N", "dim", "max_ratio", "failures"}, fp);
  TableBuilder summary("summary", {"instances", "failures", "max_ratio"}, fp);
  const auto seeds = cfg.seeds();
  const std::uint64_t base = seeds.empty() ? cfg.seed_base : seeds.front();
  std::uint64_t total_failures = 0;
  double overall = 0.0;
  for (std::uint64_t inst = 0; inst < cfg.instances; ++inst) {
    const std::uint64_t key = stream_key(derive_seed(base, inst));
    const std::uint64_t N = 1 + counter_bits(key, 0) % cfg.max_n;
    const std::uint64_t dim = 1 + counter_bits(key, 1) % cfg.max_dim;
    const int kind = static_cast<int>(inst % 3);  // 0 random, 1 constant, 2 rotating phase
    std::vector<std::vector<cplx>> v(N, std::vector<cplx>(dim));
    const double theta = counter_uniform(key, 2);
    std::uint64_t ctr = 3;
    std::vector<cplx> base_vec(dim);
    for (auto& z : base_vec) {
      const double re = 2.0 * counter_uniform(key, ctr++) - 1.0;
      z = {re, 2.0 * counter_uniform(key, ctr++) - 1.0};
    }
    for (std::uint64_t n = 0; n < N; ++n)
      for (std::uint64_t d = 0; d < dim; ++d) {
        if (kind == 0) {
          const double re = 2.0 * counter_uniform(key, ctr++) - 1.0;
          v[n][d] = {re, 2.0 * counter_uniform(key, ctr++) - 1.0};
        } else if (kind == 1) {
          v[n][d] = base_vec[d];
        } else {
          v[n][d] = base_vec[d] * unit_phase(std::fmod(theta * static_cast<double>(n), 1.0));
        }
      }
    double max_ratio = 0.0;
    std::uint64_t failures = 0;
    for (std::uint64_t M = 1; M <= N; ++M) {
      const VdcResult res = vdc_inequality_check(v, M);
      if (!res.holds) ++failures;
      if (res.rhs > 0.0) max_ratio = std::max(max_ratio, res.lhs / res.rhs);
    }
    total_failures += failures;
    overall = std::max(overall, max_ratio);
    static const char* kinds[] = {"random", "constant", "phase"};
    main.add({num(inst), kinds[kind], num(N), num(dim), num(max_ratio), num(failures)});
  }
  summary.add({num(cfg.instances), num(total_failures), num(overall)});
  Report rep;
  rep.tables = {main.take(), summary.take()};
  return rep;
}

}  // namespace

// ---------------------------------------------------------------- schedule

std::vector<std::uint64_t> lacunary_schedule(double rho, std::uint64_t n_min, std::uint64_t n_max) {
  if (!(rho > 1.0) || !std::isfinite(rho))
    fail(ErrorCode::InvalidArgument, "rho must be a finite number > 1, got " + format_number(rho));
  if (n_min < 1 || n_min > n_max) fail(ErrorCode::InvalidArgument, "need 1 <= N_min <= N_max");
  constexpr std::uint64_t kMaxSteps = 20000;
  std::vector<std::uint64_t> out;
  mpfr_t base, power;
  mpfr_init2(base, 64);
  mpfr_set_d(base, rho, MPFR_RNDN);
  mpfr_init2(power, 64);
  mpfr_set_ui(power, 1, MPFR_RNDN);
  for (std::uint64_t k = 0;; ++k) {
    // floor(power) > n_max
    if (mpfr_cmp_ui(power, n_max) > 0 && mpfr_get_ui(power, MPFR_RNDD) > n_max) break;
    if (k > kMaxSteps) {
      mpfr_clears(base, power, static_cast<mpfr_ptr>(nullptr));
      fail(ErrorCode::InvalidArgument, "rho too close to 1 for the requested range");
    }
    const std::uint64_t v = mpfr_get_ui(power, MPFR_RNDD);
    if (v >= n_min && (out.empty() || out.back() != v)) out.push_back(v);
    // Exact product: the base has 53 significant bits, 64 are added per factor.
    mpfr_prec_round(power, mpfr_get_prec(power) + 64, MPFR_RNDN);
    mpfr_mul(power, power, base, MPFR_RNDN);
  }
  mpfr_clears(base, power, static_cast<mpfr_ptr>(nullptr));
  return out;
}

SlopeFit slope_fit(std::span<const std::pair<double, double>> series, double floor) {
  if (series.size() < 3) fail(ErrorCode::InvalidArgument, "slope fit needs at least 3 points");
  SlopeFit fit;
  fit.points = series.size();
  std::vector<double> xs, ys;
  for (const auto& [n, mag] : series) {
    if (!(n > 0.0) || !std::isfinite(n)) fail(ErrorCode::InvalidArgument, "slope fit needs N > 0");
    if (!std::isfinite(mag) || mag < 0.0)
      fail(ErrorCode::InvalidArgument, "slope fit needs finite nonnegative magnitudes");
    double m = mag;
    if (m < floor) {
      m = floor;
      ++fit.clamped;
    }
    xs.push_back(std::log(n));
    ys.push_back(std::log(m));
  }
  const double k = static_cast<double>(xs.size());
  const double mx = mean(xs);
  const double my = mean(ys);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) fail(ErrorCode::InvalidArgument, "degenerate slope fit: all N are equal");
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double ssr = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (fit.intercept + fit.slope * xs[i]);
    ssr += e * e;
  }
  const boost::math::students_t dist(k - 2.0);
  const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
  fit.half_width = t * std::sqrt(ssr / (k - 2.0) / sxx);
  return fit;
}

// ---------------------------------------------------------------- config

std::string_view pipeline_name(Pipeline p) {
  switch (p) {
    case Pipeline::Generate: return "generate";
    case Pipeline::Expsum: return "expsum";
    case Pipeline::Average: return "average";
    case Pipeline::Chain: return "chain";
    case Pipeline::Correlation: return "correlation";
    case Pipeline::Deviation: return "deviation";
    case Pipeline::VdcSelftest: return "vdc-selftest";
  }
  return "?";
}

Pipeline parse_pipeline(std::string_view name) {
  for (Pipeline p : {Pipeline::Generate, Pipeline::Expsum, Pipeline::Average, Pipeline::Chain,
                     Pipeline::Correlation, Pipeline::Deviation, Pipeline::VdcSelftest})
    if (pipeline_name(p) == name) return p;
  fail(ErrorCode::InvalidArgument, "unknown pipeline '" + std::string(name) + "'");
}

void ExperimentConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  if (key == "pipeline") pipeline = parse_pipeline(v);
  else if (key == "a") a = parse_double_list(key, v);
  else if (key == "eps") eps = parse_double(key, v);
  else if (key == "p") p = std::string(v);
  else if (key == "rho") rho = parse_double_list(key, v);
  else if (key == "delta") delta = parse_double(key, v);
  else if (key == "b") b = v == "auto" ? std::nullopt : std::optional(parse_double(key, v));
  else if (key == "c") c = v == "auto" ? std::nullopt : std::optional(parse_double(key, v));
  else if (key == "kappa") kappa = parse_double(key, v);
  else if (key == "seeds") {
    seed_count = parse_uint(key, v);
    seed_list.reset();
  }
  else if (key == "seed_base") seed_base = parse_uint(key, v);
  else if (key == "seed_list") {
    std::vector<std::uint64_t> list;
    if (!v.empty())
      for (std::string_view part : split(v, ',')) list.push_back(parse_uint(key, part));
    seed_list = std::move(list);
  } else if (key == "Nmin") n_min = parse_uint(key, v);
  else if (key == "Nmax") n_max = parse_uint(key, v);
  else if (key == "N") n_min = n_max = parse_uint(key, v);
  else if (key == "bits") bits = v == "auto" ? 0 : static_cast<int>(parse_uint(key, v));
  else if (key == "system") system = std::string(v);
  else if (key == "alpha") alpha = std::string(v);
  else if (key == "q") q = parse_uint(key, v);
  else if (key == "alphabet") alphabet = static_cast<std::uint32_t>(parse_uint(key, v));
  else if (key == "window") window = static_cast<std::uint32_t>(parse_uint(key, v));
  else if (key == "f") f = std::string(v);
  else if (key == "samples") samples = parse_uint(key, v);
  else if (key == "out") out = std::string(v);
  else if (key == "trials") trials = parse_uint(key, v);
  else if (key == "thresholds")
    thresholds = v == "auto" ? std::vector<double>{} : parse_double_list(key, v);
  else if (key == "chernoff_c") chernoff_c = parse_double(key, v);
  else if (key == "instances") instances = parse_uint(key, v);
  else if (key == "max_n") max_n = parse_uint(key, v);
  else if (key == "max_dim") max_dim = parse_uint(key, v);
  else fail(ErrorCode::InvalidArgument, "unknown config key '" + std::string(key) + "'");
}

void ExperimentConfig::merge_text(std::string_view text) {
  std::size_t line_no = 0;
  for (std::string_view line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      fail(ErrorCode::Parse, "config line " + std::to_string(line_no) + ": expected key = value");
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

ExperimentConfig ExperimentConfig::from_text(std::string_view text) {
  ExperimentConfig cfg;
  cfg.merge_text(text);
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::vector<std::uint64_t> ExperimentConfig::seeds() const {
  if (seed_list) return *seed_list;
  std::vector<std::uint64_t> out;
  for (std::uint64_t i = 0; i < seed_count; ++i) out.push_back(seed_base + i);
  return out;
}

void ExperimentConfig::validate() const {
  if (a.empty()) fail(ErrorCode::InvalidArgument, "at least one value of a is required");
  for (double v : a)
    if (!(v > 0.0 && v < 0.5)) fail(ErrorCode::InvalidArgument, "a must lie in (0, 1/2), got " + format_number(v));
  if (rho.empty()) fail(ErrorCode::InvalidArgument, "at least one rho is required");
  for (double r : rho)
    if (!(r > 1.0)) fail(ErrorCode::InvalidArgument, "rho must exceed 1, got " + format_number(r));
  if (!(eps > 0.0 && eps <= 1.0)) fail(ErrorCode::InvalidArgument, "eps must lie in (0, 1]");
  if (n_max < 1) fail(ErrorCode::InvalidArgument, "Nmax must be at least 1");
  // generate and deviation only use Nmax
  const bool scheduled = pipeline != Pipeline::Generate && pipeline != Pipeline::Deviation &&
                         pipeline != Pipeline::VdcSelftest;
  if (scheduled && (n_min < 1 || n_min > n_max)) fail(ErrorCode::InvalidArgument, "need 1 <= Nmin <= Nmax");
  if (bits < 0) fail(ErrorCode::InvalidArgument, "bits must be positive or auto");
  if (pipeline == Pipeline::Correlation)
    for (double v : a) correlation_params(*this, v);
  if (pipeline == Pipeline::Average || pipeline == Pipeline::Chain) {
    if (samples < 1) fail(ErrorCode::InvalidArgument, "samples must be at least 1");
    make_system(*this);
  }
  if (pipeline == Pipeline::Deviation && trials < 1)
    fail(ErrorCode::InvalidArgument, "trials must be at least 1");
  if (pipeline == Pipeline::VdcSelftest && (max_n < 1 || max_dim < 1))
    fail(ErrorCode::InvalidArgument, "max_n and max_dim must be at least 1");
  const bool needs_seeds = pipeline != Pipeline::Expsum && pipeline != Pipeline::VdcSelftest;
  if (needs_seeds && seeds().empty())
    fail(ErrorCode::InvalidArgument, "pipeline " + std::string(pipeline_name(pipeline)) + " needs at least one seed");
}

std::string ExperimentConfig::canonical() const {
  std::string seeds_text;
  for (std::uint64_t s : seeds()) seeds_text += (seeds_text.empty() ? "" : ",") + std::to_string(s);
  std::vector<std::pair<std::string, std::string>> kv = {
      {"pipeline", std::string(pipeline_name(pipeline))},
      {"a", join_numbers(a)},
      {"eps", format_number(eps)},
      {"p", p},
      {"rho", join_numbers(rho)},
      {"delta", format_number(delta)},
      {"b", b ? format_number(*b) : "auto"},
      {"c", c ? format_number(*c) : "auto"},
      {"kappa", format_number(kappa)},
      {"seed_list", seeds_text},
      {"Nmin", std::to_string(n_min)},
      {"Nmax", std::to_string(n_max)},
      {"bits", bits > 0 ? std::to_string(bits) : "auto"},
      {"system", system},
      {"alpha", alpha},
      {"q", std::to_string(q)},
      {"alphabet", std::to_string(alphabet)},
      {"window", std::to_string(window)},
      {"f", f},
      {"samples", std::to_string(samples)},
      {"trials", std::to_string(trials)},
      {"thresholds", thresholds.empty() ? "auto" : join_numbers(thresholds)},
      {"chernoff_c", format_number(chernoff_c)},
      {"instances", std::to_string(instances)},
      {"max_n", std::to_string(max_n)},
      {"max_dim", std::to_string(max_dim)},
  };
  std::string out;
  for (const auto& [k, v] : kv) out += (out.empty() ? "" : ";") + k + "=" + v;
  return out;
}

std::string ExperimentConfig::fingerprint() const {
  std::uint64_t h = 0xCBF29CE484222325ULL;  // FNV-1a
  for (unsigned char ch : canonical()) {
    h ^= ch;
    h *= 0x100000001B3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------- reports

const Table* Report::find(std::string_view name) const {
  for (const Table& t : tables)
    if (t.name == name) return &t;
  return nullptr;
}

Report run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string fp = cfg.fingerprint();
  Report rep;
  switch (cfg.pipeline) {
    case Pipeline::Generate: rep = run_generate(cfg, fp); break;
    case Pipeline::Expsum: rep = run_expsum(cfg, fp); break;
    case Pipeline::Average: rep = run_average(cfg, fp); break;
    case Pipeline::Chain: rep = run_chain(cfg, fp); break;
    case Pipeline::Correlation: rep = run_correlation(cfg, fp); break;
    case Pipeline::Deviation: rep = run_deviation(cfg, fp); break;
    case Pipeline::VdcSelftest: rep = run_vdc_selftest(cfg, fp); break;
  }
  rep.pipeline = cfg.pipeline;
  rep.canonical = cfg.canonical();
  rep.fingerprint = fp;
  return rep;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // folds -0
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string render_csv(const Report& report, const Table& table) {
  std::string out = "# schema=1\n# config: " + report.canonical + "\n";
  for (std::size_t i = 0; i < table.columns.size(); ++i) out += (i ? "," : "") + table.columns[i];
  out += '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) out += (i ? "," : "") + row[i];
    out += '\n';
  }
  return out;
}

std::vector<std::string> write_report(const Report& report, const std::string& out) {
  namespace fs = std::filesystem;
  if (out.empty()) fail(ErrorCode::InvalidArgument, "output path is empty");
  const fs::path main_path(out);
  std::string stem = out;
  if (main_path.extension() == ".csv") stem = out.substr(0, out.size() - 4);

  // Render everything first so nothing is written on failure.
  std::vector<std::pair<std::string, std::string>> files;
  for (const Table& t : report.tables)
    files.emplace_back(t.name.empty() ? out : stem + "." + t.name + ".csv", render_csv(report, t));

  std::vector<std::string> written;
  for (const auto& [path, text] : files) {
    const std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
      std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
      if (!f) fail(ErrorCode::Io, "cannot write " + tmp);
      f.write(text.data(), static_cast<std::streamsize>(text.size()));
      f.flush();
      if (!f) fail(ErrorCode::Io, "write failed for " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
      fs::remove(tmp);
      fail(ErrorCode::Io, "cannot move " + tmp + " to " + path + ": " + ec.message());
    }
    written.push_back(path);
  }
  return written;
}

}  // namespace ergolab
