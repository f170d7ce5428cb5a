#include "ergolab/dynamics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

#include "ergolab/counter_hash.hpp"
#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/summation.hpp"

namespace ergolab {

namespace {

constexpr double kBoundSlack = 1e-12;

std::uint64_t reverse_bits(std::uint64_t v) {
  std::uint64_t out = 0;
  for (int i = 0; i < 64; ++i) {
    out = (out << 1) | (v & 1ULL);
    v >>= 1;
  }
  return out;
}

// Top 53 bits of a 128-bit circle position as a fraction in [0, 1).
double fixed_to_unit(u128 phase) {
  return static_cast<double>(static_cast<std::uint64_t>(phase >> 75)) * 0x1.0p-53;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t mid = v.size() / 2;
  return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

std::uint64_t floor_mod(std::int64_t k, std::uint64_t m) {
  const auto r = static_cast<std::int64_t>(static_cast<__int128>(k) % static_cast<__int128>(m));
  return static_cast<std::uint64_t>(r < 0 ? r + static_cast<std::int64_t>(m) : r);
}

void check_trig_bound(const std::vector<TrigTerm>& terms) {
  double total = 0.0;
  for (const auto& t : terms) total += std::abs(t.coefficient);
  if (total > 1.0 + kBoundSlack) {
    fail(ErrorCode::InvalidArgument,
         "observable must satisfy |f| <= 1 (sum of |coefficients| is " + std::to_string(total) + ")");
  }
}

}  // namespace

// --------------------------------------------------------------- Observable

Observable Observable::constant(std::complex<double> c) { return character(0, c); }

Observable Observable::character(std::int64_t frequency, std::complex<double> coefficient) {
  return trig({TrigTerm{frequency, coefficient}});
}

Observable Observable::trig(std::vector<TrigTerm> terms) {
  check_trig_bound(terms);
  Observable f;
  f.form_ = Form::Trig;
  f.terms_ = std::move(terms);
  return f;
}

Observable Observable::delta0() {
  Observable f;
  f.form_ = Form::Delta0;
  return f;
}

Observable Observable::sign() {
  Observable f;
  f.form_ = Form::Sign;
  return f;
}

Observable Observable::parse(std::string_view text) {
  std::string s;
  for (const char c : text) {
    if (!std::isspace(static_cast<unsigned char>(c))) s += c;
  }
  if (s == "delta0") return delta0();
  if (s == "sign") return sign();
  if (s.empty()) fail(ErrorCode::Parse, "empty observable");

  std::vector<TrigTerm> terms;
  std::size_t pos = 0;
  auto bad = [&](const std::string& why) -> void {
    fail(ErrorCode::Parse, "observable '" + std::string(text) + "': " + why);
  };
  while (pos < s.size()) {
    double sign_factor = 1.0;
    if (s[pos] == '+' || s[pos] == '-') {
      if (s[pos] == '-') sign_factor = -1.0;
      ++pos;
    } else if (!terms.empty()) {
      bad("expected '+' or '-'");
    }
    double coefficient = 1.0;
    bool has_number = false;
    if (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.')) {
      std::size_t used = 0;
      coefficient = std::stod(s.substr(pos), &used);
      pos += used;
      has_number = true;
      if (pos < s.size() && s[pos] == '*') ++pos;
    }
    std::int64_t frequency = 0;
    if (s.compare(pos, 2, "e(") == 0) {
      pos += 2;
      const std::size_t close = s.find(')', pos);
      if (close == std::string::npos) bad("missing ')'");
      std::string inner = s.substr(pos, close - pos);
      pos = close + 1;
      if (inner.empty() || inner.back() != 'x') bad("character must read e(kx)");
      inner.pop_back();
      if (!inner.empty() && inner.back() == '*') inner.pop_back();
      if (inner.empty() || inner == "+") {
        frequency = 1;
      } else if (inner == "-") {
        frequency = -1;
      } else {
        try {
          std::size_t used = 0;
          frequency = std::stoll(inner, &used);
          if (used != inner.size()) bad("bad frequency '" + inner + "'");
        } catch (const std::logic_error&) {
          bad("bad frequency '" + inner + "'");
        }
      }
    } else if (!has_number) {
      bad("expected a number or e(kx)");
    }
    terms.push_back(TrigTerm{frequency, sign_factor * coefficient});
  }
  return trig(std::move(terms));
}

// ---------------------------------------------------------- DynamicalSystem

DynamicalSystem DynamicalSystem::rotation(std::string_view alpha, Observable f) {
  std::string source(alpha);
  if (source == "sqrt2m1") source = "2^(1/2) - 1";
  if (source == "golden") source = "(5^(1/2) - 1)/2";
  const HardyExpr expr = HardyExpr::parse(source, 0.5);
  if (!expr.is_constant()) fail(ErrorCode::InvalidArgument, "rotation angle must be a constant");
  DynamicalSystem sys = rotation_fixed(fixed_point_fraction(expr, 1), std::move(f));
  sys.alpha_label_ = std::string(alpha);
  return sys;
}

DynamicalSystem DynamicalSystem::rotation_fixed(u128 alpha, Observable f) {
  if (f.form() != Observable::Form::Trig) {
    fail(ErrorCode::InvalidArgument, "rotation observables must be trigonometric polynomials");
  }
  DynamicalSystem sys;
  sys.kind_ = SystemKind::Rotation;
  sys.alpha_ = alpha;
  sys.f_ = std::move(f);
  for (const auto& t : sys.f_.terms()) {
    if (t.frequency == 0) sys.known_mean_ += t.coefficient;
  }
  std::ostringstream label;
  label.precision(17);
  label << sys.alpha();
  sys.alpha_label_ = label.str();
  return sys;
}

DynamicalSystem DynamicalSystem::cyclic_shift(std::uint64_t modulus, Observable f) {
  if (modulus < 1 || modulus > (1ULL << 26)) {
    fail(ErrorCode::InvalidArgument, "cyclic modulus must lie in [1, 2^26]");
  }
  DynamicalSystem sys;
  sys.kind_ = SystemKind::CyclicShift;
  sys.modulus_ = modulus;
  sys.f_ = std::move(f);
  sys.table_.resize(modulus);
  const double q = static_cast<double>(modulus);
  switch (sys.f_.form()) {
    case Observable::Form::Delta0:
      for (std::uint64_t x = 0; x < modulus; ++x) sys.table_[x] = (x == 0 ? 1.0 : 0.0) - 1.0 / q;
      sys.known_mean_ = 0.0;
      break;
    case Observable::Form::Sign:
      for (std::uint64_t x = 0; x < modulus; ++x) sys.table_[x] = x % 2 == 0 ? 1.0 : -1.0;
      sys.known_mean_ = modulus % 2 == 0 ? 0.0 : 1.0 / q;
      break;
    case Observable::Form::Trig:
      for (std::uint64_t x = 0; x < modulus; ++x) {
        std::complex<double> v{};
        for (const auto& t : sys.f_.terms()) {
          const std::uint64_t r = static_cast<std::uint64_t>(
              (static_cast<u128>(floor_mod(t.frequency, modulus)) * x) % modulus);
          v += t.coefficient * unit_phase(static_cast<double>(r) / q);
        }
        sys.table_[x] = v;
      }
      for (const auto& t : sys.f_.terms()) {
        if (floor_mod(t.frequency, modulus) == 0) sys.known_mean_ += t.coefficient;
      }
      break;
  }
  return sys;
}

DynamicalSystem DynamicalSystem::bernoulli_shift(std::uint32_t alphabet, std::uint32_t window,
                                                 Observable f) {
  if (alphabet < 2 || window < 1) {
    fail(ErrorCode::InvalidArgument, "Bernoulli shift needs alphabet >= 2 and window >= 1");
  }
  if (f.form() != Observable::Form::Trig) {
    fail(ErrorCode::InvalidArgument, "Bernoulli observables must be trigonometric polynomials");
  }
  u128 grid = 1;
  for (std::uint32_t i = 0; i < window; ++i) {
    grid *= alphabet;
    if (grid > (static_cast<u128>(1) << 62)) {
      fail(ErrorCode::InvalidArgument, "alphabet^window must stay below 2^62");
    }
  }
  DynamicalSystem sys;
  sys.kind_ = SystemKind::BernoulliShift;
  sys.alphabet_ = alphabet;
  sys.window_ = window;
  sys.grid_ = static_cast<std::uint64_t>(grid);
  sys.f_ = std::move(f);
  for (const auto& t : sys.f_.terms()) {
    if (floor_mod(t.frequency, sys.grid_) == 0) sys.known_mean_ += t.coefficient;
  }
  return sys;
}

std::string DynamicalSystem::describe() const {
  switch (kind_) {
    case SystemKind::Rotation:
      return "rotation(alpha=" + alpha_label_ + ")";
    case SystemKind::CyclicShift:
      return "cyclic(q=" + std::to_string(modulus_) + ")";
    case SystemKind::BernoulliShift:
      return "bernoulli(alphabet=" + std::to_string(alphabet_) + ",window=" + std::to_string(window_) + ")";
  }
  return {};
}

double DynamicalSystem::alpha() const {
  return static_cast<double>(static_cast<std::uint64_t>(alpha_ >> 64)) * 0x1.0p-64 +
         static_cast<double>(static_cast<std::uint64_t>(alpha_)) * 0x1.0p-128;
}

State DynamicalSystem::advance(const State& x, std::uint64_t n) const {
  State out = x;
  switch (kind_) {
    case SystemKind::Rotation:
      out.position = x.position + static_cast<u128>(n) * alpha_;  // wraps mod 2^128
      break;
    case SystemKind::CyclicShift:
      out.position = (x.position + n % modulus_) % modulus_;
      break;
    case SystemKind::BernoulliShift:
      out.position = x.position + n;
      break;
  }
  return out;
}

std::uint64_t DynamicalSystem::window_index(const State& x) const {
  std::uint64_t index = 0;
  for (std::uint32_t j = 0; j < window_; ++j) {
    const std::uint64_t bits = counter_bits(x.key, static_cast<std::uint64_t>(x.position + j));
    const auto symbol = static_cast<std::uint64_t>((static_cast<u128>(bits) * alphabet_) >> 64);
    index = index * alphabet_ + symbol;
  }
  return index;
}

double DynamicalSystem::coordinate(const State& x) const {
  switch (kind_) {
    case SystemKind::Rotation:
      return fixed_to_unit(x.position);
    case SystemKind::CyclicShift:
      return static_cast<double>(x.position) / static_cast<double>(modulus_);
    case SystemKind::BernoulliShift:
      return static_cast<double>(window_index(x)) / static_cast<double>(grid_);
  }
  return 0.0;
}

std::complex<double> DynamicalSystem::trig_value_fixed(u128 position) const {
  std::complex<double> v{};
  for (const auto& t : f_.terms()) {
    const u128 phase = static_cast<u128>(static_cast<__int128>(t.frequency)) * position;
    v += t.coefficient * unit_phase(fixed_to_unit(phase));
  }
  return v;
}

std::complex<double> DynamicalSystem::observe(const State& x) const {
  switch (kind_) {
    case SystemKind::Rotation:
      return trig_value_fixed(x.position);
    case SystemKind::CyclicShift:
      return table_[static_cast<std::size_t>(x.position % modulus_)];
    case SystemKind::BernoulliShift: {
      const std::uint64_t index = window_index(x);
      std::complex<double> v{};
      for (const auto& t : f_.terms()) {
        const auto r = static_cast<std::uint64_t>(
            (static_cast<u128>(floor_mod(t.frequency, grid_)) * index) % grid_);
        v += t.coefficient * unit_phase(static_cast<double>(r) / static_cast<double>(grid_));
      }
      return v;
    }
  }
  return {};
}

std::vector<State> DynamicalSystem::sample_points(std::size_t count) const {
  std::vector<State> points(count);
  for (std::size_t i = 0; i < count; ++i) {
    const std::uint64_t radical = reverse_bits(static_cast<std::uint64_t>(i));
    switch (kind_) {
      case SystemKind::Rotation:
        points[i].position = static_cast<u128>(radical) << 64;
        break;
      case SystemKind::CyclicShift:
        points[i].position = (static_cast<u128>(radical) * modulus_) >> 64;
        break;
      case SystemKind::BernoulliShift:
        points[i].key = derive_seed(0x5A3B1E5EEDULL, i);
        break;
    }
  }
  return points;
}

State DynamicalSystem::sample_reference(std::uint64_t seed, std::uint64_t index) const {
  const std::uint64_t key = stream_key(seed);
  State s;
  switch (kind_) {
    case SystemKind::Rotation:
      s.position = (static_cast<u128>(counter_bits(key, 2 * index)) << 64) |
                   counter_bits(key, 2 * index + 1);
      break;
    case SystemKind::CyclicShift:
      s.position = (static_cast<u128>(counter_bits(key, index)) * modulus_) >> 64;
      break;
    case SystemKind::BernoulliShift:
      s.key = derive_seed(seed, index);
      break;
  }
  return s;
}

// ----------------------------------------------------------------- averages

AverageSeries weighted_random_average(const DynamicalSystem& sys,
                                      std::span<const std::complex<double>> phases,
                                      const Realization& r,
                                      std::span<const std::uint64_t> schedule,
                                      std::span<const State> points) {
  AverageSeries out;
  out.schedule.assign(schedule.begin(), schedule.end());
  if (schedule.empty()) return out;
  const std::uint64_t max_n = *std::max_element(schedule.begin(), schedule.end());
  if (*std::min_element(schedule.begin(), schedule.end()) == 0) {
    fail(ErrorCode::InvalidArgument, "schedule entries must be positive");
  }
  if (phases.size() < max_n) fail(ErrorCode::OutOfRange, "phase table shorter than the schedule");
  if (r.selected_count() < max_n) {
    fail(ErrorCode::OutOfRange, "insufficient realization length: " +
                                    std::to_string(r.selected_count()) + " selections, need " +
                                    std::to_string(max_n));
  }
  std::vector<std::uint64_t> positions(max_n);
  r.for_each_selected(max_n, [&](std::uint64_t k, std::uint64_t a_k) { positions[k - 1] = a_k; });

  out.values.assign(points.size(), std::vector<std::complex<double>>(schedule.size()));
  parallel_for(points.size(), [&](std::size_t i) {
    std::vector<std::complex<double>> terms(max_n);
    for (std::uint64_t n = 0; n < max_n; ++n) {
      terms[n] = phases[n] * sys.observe_orbit(points[i], positions[n]);
    }
    for (std::size_t k = 0; k < schedule.size(); ++k) {
      out.values[i][k] = normalized_sum(terms, schedule[k]);
    }
  });

  for (std::size_t k = 0; k < schedule.size(); ++k) {
    std::vector<double> mags;
    mags.reserve(points.size());
    for (const auto& row : out.values) mags.push_back(std::abs(row[k]));
    double total = 0.0;
    for (const double m : mags) total += m;
    out.mean_abs.push_back(mags.empty() ? 0.0 : total / static_cast<double>(mags.size()));
    out.median_abs.push_back(median_of(std::move(mags)));
  }
  return out;
}

AverageSeries weighted_random_average(const DynamicalSystem& sys, const HardyExpr& p,
                                      const Realization& r,
                                      std::span<const std::uint64_t> schedule,
                                      std::span<const State> points, int precision_bits) {
  if (schedule.empty()) return weighted_random_average(sys, {}, r, schedule, points);
  const std::uint64_t max_n = *std::max_element(schedule.begin(), schedule.end());
  if (r.selected_count() < max_n) {
    fail(ErrorCode::OutOfRange, "insufficient realization length: " +
                                    std::to_string(r.selected_count()) + " selections, need " +
                                    std::to_string(max_n));
  }
  const auto phases = phase_table(p, max_n, precision_bits);
  return weighted_random_average(sys, phases, r, schedule, points);
}

ChainReport chain_diagnostics(const DynamicalSystem& sys,
                              std::span<const std::complex<double>> phases,
                              const Realization& r, std::uint64_t N,
                              std::span<const State> points) {
  if (N == 0 || N > r.n_max()) {
    fail(ErrorCode::OutOfRange, "chain N must lie in [1, n_max]");
  }
  ChainReport report;
  report.N = N;
  report.s_n = r.prefix(N);
  report.w_n = r.w(N);
  report.known_mean = sys.known_mean();
  if (report.s_n == 0) fail(ErrorCode::OutOfRange, "no selections up to N");
  if (phases.size() < report.s_n) fail(ErrorCode::OutOfRange, "phase table shorter than S_N");

  const std::uint64_t s_n = report.s_n;
  const double w_n = report.w_n;
  const std::complex<double> fbar = report.known_mean;

  std::vector<std::uint64_t> positions(s_n);
  r.for_each_selected(s_n, [&](std::uint64_t k, std::uint64_t a_k) { positions[k - 1] = a_k; });
  std::vector<std::uint64_t> prefix(N);
  std::vector<std::uint8_t> bits(N);
  std::vector<double> sigma(N);
  {
    std::uint64_t s = 0;
    for (std::uint64_t n = 1; n <= N; ++n) {
      bits[n - 1] = r.bit(n) ? 1 : 0;
      s += bits[n - 1];
      prefix[n - 1] = s;
      sigma[n - 1] = r.sigma(n);
    }
  }

  // Stages that do not involve f are shared by all points.
  std::vector<std::complex<double>> weighted(N);
  for (std::uint64_t n = 0; n < N; ++n) weighted[n] = sigma[n] * phases[prefix[n] - 1];
  const std::complex<double> stage4 = fbar * (pairwise_sum<std::complex<double>>(weighted) / w_n);
  const std::complex<double> stage5 = fbar * normalized_sum(phases, s_n);

  report.points.resize(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    const State& x = points[i];
    ChainPoint& out = report.points[i];

    std::vector<std::complex<double>> by_count(s_n);
    for (std::uint64_t k = 0; k < s_n; ++k) {
      by_count[k] = phases[k] * sys.observe_orbit(x, positions[k]);
    }
    out.stages[0] = normalized_sum(by_count, s_n);

    std::vector<std::complex<double>> selected;
    selected.reserve(s_n);
    std::vector<std::complex<double>> smoothed(N);
    for (std::uint64_t n = 1; n <= N; ++n) {
      const std::complex<double> fx = sys.observe_orbit(x, n);
      const std::complex<double> phase = phases[prefix[n - 1] - 1];
      if (bits[n - 1] != 0) selected.push_back(phase * fx);
      smoothed[n - 1] = sigma[n - 1] * phase * fx;
    }
    const std::complex<double> selected_sum = pairwise_sum<std::complex<double>>(selected);
    out.stages[1] = selected_sum / static_cast<double>(s_n);
    out.stages[2] = selected_sum / w_n;
    out.stages[3] = pairwise_sum<std::complex<double>>(smoothed) / w_n;
    out.stages[4] = stage4;
    out.stages[5] = stage5;
    for (std::size_t s = 0; s < 5; ++s) out.differences[s] = std::abs(out.stages[s] - out.stages[s + 1]);
    out.differences[5] = std::abs(out.stages[5]);
  });
  return report;
}

ChainReport chain_diagnostics(const DynamicalSystem& sys, const HardyExpr& p,
                              const Realization& r, std::uint64_t N,
                              std::span<const State> points, int precision_bits) {
  if (N == 0 || N > r.n_max()) fail(ErrorCode::OutOfRange, "chain N must lie in [1, n_max]");
  const std::uint64_t s_n = r.prefix(N);
  if (s_n == 0) fail(ErrorCode::OutOfRange, "no selections up to N");
  const auto phases = phase_table(p, s_n, precision_bits);
  return chain_diagnostics(sys, phases, r, N, points);
}

std::pair<std::complex<double>, std::complex<double>> partial_summation_identity(
    std::span<const double> sigma, std::span<const std::complex<double>> values, std::size_t N) {
  if (N == 0 || sigma.size() < N || values.size() < N) {
    fail(ErrorCode::OutOfRange, "partial summation needs N >= 1 terms of each sequence");
  }
  CompensatedSum w;
  std::complex<double> weighted{};
  for (std::size_t n = 0; n < N; ++n) {
    w.add(sigma[n]);
    weighted += sigma[n] * values[n];
  }
  const double w_n = w.value();
  const std::complex<double> lhs = weighted / w_n;

  // A_M = (1/M) sum_{n<=M} a_n
  std::vector<std::complex<double>> averages(N);
  std::complex<double> running{};
  for (std::size_t m = 0; m < N; ++m) {
    running += values[m];
    averages[m] = running / static_cast<double>(m + 1);
  }
  std::complex<double> rhs = static_cast<double>(N) * sigma[N - 1] / w_n * averages[N - 1];
  for (std::size_t m = 1; m < N; ++m) {
    rhs += static_cast<double>(m) * (sigma[m - 1] - sigma[m]) / w_n * averages[m - 1];
  }
  return {lhs, rhs};
}

std::vector<std::complex<double>> birkhoff_mean(const DynamicalSystem& sys, std::uint64_t N,
                                                std::span<const State> points) {
  if (N == 0) fail(ErrorCode::InvalidArgument, "Birkhoff mean needs N >= 1");
  std::vector<std::complex<double>> out(points.size());
  parallel_for(points.size(), [&](std::size_t i) {
    const auto sum = pairwise_reduce<std::complex<double>>(
        1, N + 1, [&](std::size_t n) { return sys.observe_orbit(points[i], n); });
    out[i] = sum / static_cast<double>(N);
  });
  return out;
}

}  // namespace ergolab
