#include "ergolab/correlation.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <sstream>

#include "ergolab/error.hpp"
#include "ergolab/parallel.hpp"
#include "ergolab/summation.hpp"

namespace ergolab {

namespace {

using cplx = std::complex<double>;

std::string fmt(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

std::uint64_t snapped_power(std::uint64_t N, double e, bool up) {
  if (N == 0) fail(ErrorCode::InvalidArgument, "N must be positive");
  const double v = std::pow(static_cast<double>(N), e);
  const double r = std::round(v);
  if (std::abs(v - r) <= 1e-9 * std::max(1.0, v)) return static_cast<std::uint64_t>(r);
  return static_cast<std::uint64_t>(up ? std::ceil(v) : std::floor(v));
}

void check_range(const WeightSeries& w, std::uint64_t N) {
  if (N < 1) fail(ErrorCode::InvalidArgument, "N must be at least 1");
  if (N > w.size())
    fail(ErrorCode::OutOfRange, "N = " + std::to_string(N) + " exceeds the series length " +
                                    std::to_string(w.size()));
}

// FFTW planning is not thread safe; execution of distinct plans is.
std::mutex& plan_mutex() {
  static std::mutex m;
  return m;
}

// sum_{j <= K-1-r} u[j+r] conj(u[j]) for r = 0..R.
std::vector<cplx> lag_sums_direct(std::span<const cplx> u, std::uint64_t R) {
  std::vector<cplx> out(R + 1);
  const std::size_t K = u.size();
  parallel_for(R + 1, [&](std::size_t r) {
    if (r >= K) return;
    out[r] = pairwise_reduce<cplx>(0, K - r, [&](std::size_t j) { return u[j + r] * std::conj(u[j]); });
  });
  return out;
}

std::vector<cplx> lag_sums_fft(std::span<const cplx> u, std::uint64_t R) {
  const std::size_t K = u.size();
  std::size_t P = 1;
  while (P < 2 * K) P <<= 1;
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * P));
  if (buf == nullptr) throw std::bad_alloc();
  fftw_plan fwd, bwd;
  {
    std::lock_guard lock(plan_mutex());
    fwd = fftw_plan_dft_1d(static_cast<int>(P), buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_1d(static_cast<int>(P), buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  for (std::size_t j = 0; j < P; ++j) {
    buf[j][0] = j < K ? u[j].real() : 0.0;
    buf[j][1] = j < K ? u[j].imag() : 0.0;
  }
  fftw_execute(fwd);
  for (std::size_t j = 0; j < P; ++j) {
    buf[j][0] = buf[j][0] * buf[j][0] + buf[j][1] * buf[j][1];
    buf[j][1] = 0.0;
  }
  fftw_execute(bwd);
  std::vector<cplx> out(R + 1);
  const double scale = 1.0 / static_cast<double>(P);
  for (std::uint64_t r = 0; r <= R && r < K; ++r) out[r] = cplx(buf[r][0], buf[r][1]) * scale;
  {
    std::lock_guard lock(plan_mutex());
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }
  fftw_free(buf);
  return out;
}

std::vector<cplx> lag_sums(std::span<const cplx> u, std::uint64_t R, LagMethod method) {
  if (method == LagMethod::Auto) {
    const double work = static_cast<double>(u.size()) * static_cast<double>(R);
    method = work <= 16.0 * 1024 * 1024 ? LagMethod::Direct : LagMethod::Fft;
  }
  return method == LagMethod::Direct ? lag_sums_direct(u, R) : lag_sums_fft(u, R);
}

struct Window {
  std::uint64_t R = 0;
  std::uint64_t lower = 0;
  double factor = 0.0;
  bool empty = true;
};

Window i_window(std::uint64_t N, std::uint64_t m, double delta, double c_exponent) {
  if (m < 1) fail(ErrorCode::InvalidArgument, "m must be at least 1");
  Window win;
  win.R = floor_power(N, c_exponent);
  if (win.R < 2)
    fail(ErrorCode::InvalidArgument, "R = floor(N^c) must be at least 2, got " + std::to_string(win.R));
  win.lower = ceil_power(N, 1.0 - delta);
  win.factor = m < N ? static_cast<double>(N - m) / static_cast<double>(win.R) : 0.0;
  win.empty = m >= N || win.lower > N - m;
  return win;
}

// u_n = c_{n+m} conj(c_n) for n = lower..N-m.
std::vector<cplx> products(const WeightSeries& w, std::uint64_t N, std::uint64_t m,
                           std::uint64_t lower) {
  std::vector<cplx> u(N - m - lower + 1);
  for (std::uint64_t n = lower; n <= N - m; ++n) u[n - lower] = w.at(n + m) * std::conj(w.at(n));
  return u;
}

double i1_inner(const WeightSeries& w, std::uint64_t N, std::uint64_t m, std::uint64_t lower) {
  return pairwise_reduce<double>(lower, N - m + 1, [&](std::size_t n) {
    return std::norm(w.at(n)) * std::norm(w.at(n + m));
  });
}

cplx i2_inner(std::span<const cplx> u, std::uint64_t m) {
  if (m >= u.size()) return {};
  return pairwise_reduce<cplx>(0, u.size() - m, [&](std::size_t j) { return u[j + m] * std::conj(u[j]); });
}

}  // namespace

CorrelationParams CorrelationParams::defaults(double a) {
  CorrelationParams p;
  p.a = a;
  p.delta = 0.1;
  p.b = (a + 0.5) / 2.0;
  p.c_exponent = (2.0 * a + 1.0) / 2.0;
  return p;
}

void CorrelationParams::validate() const {
  if (!(a > 0.0 && a < 0.5)) fail(ErrorCode::InvalidArgument, "a must lie in (0, 1/2), got " + fmt(a));
  if (!(delta > 0.0 && delta < 0.5))
    fail(ErrorCode::InvalidArgument, "delta must lie in (0, 1/2), got " + fmt(delta));
  if (!(b > a && b < 0.5))
    fail(ErrorCode::InvalidArgument, "b must lie in (a, 1/2), got " + fmt(b));
  if (!(c_exponent > 2.0 * a && c_exponent < 1.0))
    fail(ErrorCode::InvalidArgument, "c must lie in (2a, 1), got " + fmt(c_exponent));
  if (!(rho > 1.0)) fail(ErrorCode::InvalidArgument, "rho must exceed 1, got " + fmt(rho));
  if (!std::isfinite(kappa)) fail(ErrorCode::InvalidArgument, "kappa must be finite");
}

std::uint64_t floor_power(std::uint64_t N, double e) { return snapped_power(N, e, false); }
std::uint64_t ceil_power(std::uint64_t N, double e) { return snapped_power(N, e, true); }

WeightSeries WeightSeries::build(const Realization& r, const HardyExpr& p,
                                 const CorrelationParams& params, int precision_bits) {
  params.validate();
  if (std::abs(r.a() - params.a) > 0.0)
    fail(ErrorCode::InvalidArgument, "realization exponent differs from params.a");
  const std::uint64_t n_max = r.n_max();
  if (n_max > std::numeric_limits<std::uint32_t>::max())
    fail(ErrorCode::OutOfRange, "realization too long for a weight series");
  if (!r.bit(1)) fail(ErrorCode::InvalidArgument, "S_1 = 0: p(S_n) undefined before the first selection");

  WeightSeries w;
  w.params_ = params;
  w.s_.resize(n_max);
  w.c_.resize(n_max);
  std::uint64_t s = 0;
  for (std::uint64_t n = 1; n <= n_max; ++n) {
    s += r.bit(n) ? 1 : 0;
    w.s_[n - 1] = static_cast<std::uint32_t>(s);
  }
  w.phases_ = phase_table(p, s, precision_bits);
  parallel_for((n_max + 4095) / 4096, [&](std::size_t chunk) {
    const std::uint64_t lo = chunk * 4096 + 1;
    const std::uint64_t hi = std::min<std::uint64_t>(n_max, lo + 4095);
    for (std::uint64_t n = lo; n <= hi; ++n) w.c_[n - 1] = r.centered(n) * w.phases_[w.s_[n - 1] - 1];
  });
  return w;
}

WeightSeries WeightSeries::from_values(std::vector<cplx> c, const CorrelationParams& params) {
  params.validate();
  WeightSeries w;
  w.params_ = params;
  w.c_ = std::move(c);
  return w;
}

double WeightSeries::centered(std::uint64_t n) const {
  if (!has_source()) fail(ErrorCode::InvalidArgument, "synthetic series has no selector");
  return (selected(n) ? 1.0 : 0.0) - selection_probability(params_.a, n);
}

std::vector<double> c_sum_check(const WeightSeries& w, std::span<const std::uint64_t> schedule) {
  std::vector<double> out;
  out.reserve(schedule.size());
  CompensatedSum acc;
  std::uint64_t done = 0;
  std::uint64_t last = 0;
  for (std::uint64_t N : schedule) {
    check_range(w, N);
    if (N < last) fail(ErrorCode::InvalidArgument, "schedule must be nondecreasing");
    last = N;
    for (; done < N; ++done) acc.add(std::abs(w.at(done + 1)));
    out.push_back(acc.value() / std::pow(static_cast<double>(N), 1.0 - w.params().a));
  }
  return out;
}

cplx correlation_sum(const WeightSeries& w, std::uint64_t N, std::uint64_t m, double delta) {
  if (m < 1) fail(ErrorCode::InvalidArgument, "m must be at least 1");
  check_range(w, N);
  const std::uint64_t lower = ceil_power(N, 1.0 - delta);
  if (m >= N || lower > N - m) return {};
  return pairwise_reduce<cplx>(lower, N - m + 1, [&](std::size_t n) {
    return w.at(n + m) * std::conj(w.at(n));
  });
}

std::vector<SummabilityEntry> summability_statistic(const WeightSeries& w,
                                                    std::span<const std::uint64_t> schedule) {
  const CorrelationParams& prm = w.params();
  std::vector<SummabilityEntry> out;
  out.reserve(schedule.size());
  double partial = 0.0;
  for (std::uint64_t N : schedule) {
    check_range(w, N);
    SummabilityEntry e;
    e.N = N;
    e.m_max = floor_power(N, prm.b);
    e.correlations.resize(e.m_max);
    parallel_for(e.m_max, [&](std::size_t i) {
      e.correlations[i] = correlation_sum(w, N, i + 1, prm.delta);
    });
    CompensatedSum inner;
    for (const cplx& v : e.correlations) inner.add(std::abs(v));
    e.inner = inner.value();
    e.increment = std::pow(static_cast<double>(N), 2.0 * prm.a - 1.0 - prm.b) * e.inner;
    partial += e.increment;
    e.partial = partial;
    out.push_back(std::move(e));
  }
  return out;
}

VdcResult vdc_inequality_check(std::span<const std::vector<cplx>> v, std::size_t M) {
  const std::size_t N = v.size();
  if (M < 1 || M > N) fail(ErrorCode::InvalidArgument, "need 1 <= M <= N");
  const std::size_t dim = v[0].size();
  for (const auto& x : v)
    if (x.size() != dim) fail(ErrorCode::InvalidArgument, "vectors must share one dimension");

  auto inner = [&](const std::vector<cplx>& x, const std::vector<cplx>& y) {
    cplx s{};
    for (std::size_t i = 0; i < dim; ++i) s += x[i] * std::conj(y[i]);
    return s;
  };

  std::vector<cplx> total(dim);
  double norms = 0.0;
  for (const auto& x : v) {
    for (std::size_t i = 0; i < dim; ++i) total[i] += x[i];
    norms += std::real(inner(x, x));
  }
  double corr = 0.0;
  for (std::size_t m = 1; m <= M; ++m) {
    cplx s{};
    for (std::size_t n = 0; n + m < N; ++n) s += inner(v[n + m], v[n]);
    corr += std::abs(s);
  }
  const double ratio = static_cast<double>(N) / static_cast<double>(M);
  VdcResult res;
  res.lhs = std::real(inner(total, total));
  res.rhs = 2.0 * ratio * norms + 4.0 * ratio * corr;
  res.holds = res.lhs <= res.rhs * (1.0 + 1e-9);
  return res;
}

ITerms i_terms_profile(const WeightSeries& w, std::uint64_t N, std::uint64_t m,
                       double c_exponent, double kappa, LagMethod method) {
  const CorrelationParams& prm = w.params();
  ITermsAccumulator acc(N, m, prm.a, prm.delta, c_exponent, kappa, method);
  acc.add(w);
  return acc.result();
}

ITermsAccumulator::ITermsAccumulator(std::uint64_t N, std::uint64_t m, double a, double delta,
                                     double c_exponent, double kappa, LagMethod method)
    : N_(N), m_(m), a_(a), delta_(delta), c_exponent_(c_exponent), kappa_(kappa), method_(method) {
  const Window win = i_window(N, m, delta, c_exponent);
  R_ = win.R;
  lower_ = win.lower;
  lag_sum_.assign(R_ + 1, cplx{});
}

void ITermsAccumulator::add(const WeightSeries& w) {
  check_range(w, N_);
  ++samples_;
  const Window win = i_window(N_, m_, delta_, c_exponent_);
  if (win.empty) return;
  const std::vector<cplx> u = products(w, N_, m_, lower_);
  const double i1 = i1_inner(w, N_, m_, lower_);
  i1_sum_ += i1;
  i1_sq_ += i1 * i1;
  i2_sum_ += i2_inner(u, m_);
  const std::vector<cplx> lags = lag_sums(u, R_, method_);
  for (std::uint64_t r = 0; r <= R_; ++r) lag_sum_[r] += lags[r];
}

ITerms ITermsAccumulator::result() const {
  ITerms t;
  t.R = R_;
  t.lower = lower_;
  t.samples = samples_;
  t.envelope = std::pow(static_cast<double>(N_), 2.0 - 4.0 * a_ - kappa_);
  if (samples_ == 0) return t;
  const double k = static_cast<double>(samples_);
  const Window win = i_window(N_, m_, delta_, c_exponent_);
  t.i1 = win.factor * i1_sum_ / k;
  t.i2 = win.factor * std::abs(i2_sum_ / k);
  double i3 = 0.0;
  for (std::uint64_t r = 1; r <= R_; ++r)
    if (r != m_) i3 += std::abs(lag_sum_[r] / k);
  t.i3 = win.factor * i3;
  if (samples_ > 1) {
    const double mean = i1_sum_ / k;
    const double var = std::max(0.0, (i1_sq_ - k * mean * mean) / (k - 1.0));
    t.i1_stderr = win.factor * std::sqrt(var / k);
  }
  return t;
}

ITerms i_terms_ensemble(std::span<const WeightSeries> ensemble, std::uint64_t N, std::uint64_t m,
                        double c_exponent, double kappa, LagMethod method) {
  if (ensemble.empty()) fail(ErrorCode::InvalidArgument, "empty ensemble");
  const CorrelationParams& prm = ensemble.front().params();
  ITermsAccumulator acc(N, m, prm.a, prm.delta, c_exponent, kappa, method);
  for (const WeightSeries& w : ensemble) acc.add(w);
  return acc.result();
}

IndependenceSplit independence_split(const WeightSeries& w, std::uint64_t N, std::uint64_t m,
                                     std::uint64_t r, double epsilon) {
  if (!w.has_source()) fail(ErrorCode::InvalidArgument, "independence split needs a realization");
  if (m < 1 || r < 1) fail(ErrorCode::InvalidArgument, "m and r must be at least 1");
  if (r == m) fail(ErrorCode::InvalidArgument, "r must differ from m");
  check_range(w, N);
  const std::uint64_t lower = ceil_power(N, 1.0 - w.params().delta);
  IndependenceSplit out;
  if (m + r >= N || lower > N - m - r) return out;
  const std::uint64_t s = std::min(r, m);
  const std::uint64_t t = std::max(r, m);
  auto e = [&](std::uint64_t k) { return w.phase_of_count(k); };
  out.main = pairwise_reduce<cplx>(lower, N - m - r + 1, [&](std::size_t n) {
    const double weight = w.centered(n + r) * w.centered(n + r + m) * w.centered(n) * w.centered(n + m);
    const std::uint64_t x = w.prefix(n + t - 1);
    const std::uint64_t z = w.prefix(n + t + s) - w.prefix(n + t);
    return weight * e(x + z) * std::conj(e(x)) * std::conj(e(w.prefix(n + s))) * e(w.prefix(n));
  });
  out.remainder = pairwise_reduce<double>(lower, N - m - r + 1, [&](std::size_t n) {
    const double weight =
        std::abs(w.centered(n + r) * w.centered(n + r + m) * w.centered(n) * w.centered(n + m));
    const double x = static_cast<double>(w.prefix(n + t - 1));
    const double y = w.selected(n + t) ? 1.0 : 0.0;
    const double z = static_cast<double>(w.prefix(n + t + s) - w.prefix(n + t));
    return weight * std::min(std::pow(x, epsilon - 1.0) * y * z, 1.0);
  });
  return out;
}

}  // namespace ergolab
