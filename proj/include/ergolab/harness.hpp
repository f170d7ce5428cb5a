#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <span>
#include <vector>

namespace ergolab {

// {floor(rho^k) : k >= 0} within [N_min, N_max], sorted and deduplicated.
// rho^k is formed exactly (multiprecision) before taking the floor.
std::vector<std::uint64_t> lacunary_schedule(double rho, std::uint64_t n_min, std::uint64_t n_max);

inline constexpr double kSlopeFloor = 1e-15;

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double half_width = 0.0;   // 95% confidence half-width of the slope
  std::size_t points = 0;
  std::size_t clamped = 0;   // magnitudes raised to the floor
};

// Least squares of log(magnitude) on log(N). Needs >= 3 points; throws
// InvalidArgument when every N is equal.
SlopeFit slope_fit(std::span<const std::pair<double, double>> series, double floor = kSlopeFloor);

enum class Pipeline { Generate, Expsum, Average, Chain, Correlation, Deviation, VdcSelftest };

std::string_view pipeline_name(Pipeline p);
Pipeline parse_pipeline(std::string_view name);

// Flat key=value configuration. Keys (defaults in brackets):
//   pipeline [expsum]   a [0.3] (comma list)   eps [0.5]   p [x^(3/2)]
//   rho [2] (comma list)   delta [0.1]   b [auto]   c [auto]   kappa [0]
//   seeds [1] (count)   seed_base [1]   seed_list (explicit, overrides seeds)
//   Nmin [1024]   Nmax [1048576]   N (sets both)   bits [auto]
//   system [rotation]   alpha [sqrt2m1]   q [5]   alphabet [2]   window [8]
//   f [e(x)]   samples [16]   out []   trials [1000]   thresholds [auto]
//   chernoff_c [0.125]   instances [1000]   max_n [64]   max_dim [8]
struct ExperimentConfig {
  Pipeline pipeline = Pipeline::Expsum;
  std::vector<double> a{0.3};
  double eps = 0.5;
  std::string p = "x^(3/2)";
  std::vector<double> rho{2.0};
  double delta = 0.1;
  std::optional<double> b;
  std::optional<double> c;
  double kappa = 0.0;
  std::uint64_t seed_count = 1;
  std::uint64_t seed_base = 1;
  std::optional<std::vector<std::uint64_t>> seed_list;
  std::uint64_t n_min = 1024;
  std::uint64_t n_max = 1048576;
  int bits = 0;
  std::string system = "rotation";
  std::string alpha = "sqrt2m1";
  std::uint64_t q = 5;
  std::uint32_t alphabet = 2;
  std::uint32_t window = 8;
  std::string f = "e(x)";
  std::size_t samples = 16;
  std::string out;
  std::uint64_t trials = 1000;
  std::vector<double> thresholds;  // empty: defaults derived from W_N
  double chernoff_c = 0.125;
  std::uint64_t instances = 1000;
  std::uint64_t max_n = 64;
  std::uint64_t max_dim = 8;

  // Throws InvalidArgument for unknown keys or malformed values.
  void set(std::string_view key, std::string_view value);
  // Lines "key = value"; '#' starts a comment.
  void merge_text(std::string_view text);
  static ExperimentConfig from_text(std::string_view text);
  static ExperimentConfig load(const std::string& path);

  std::vector<std::uint64_t> seeds() const;
  void validate() const;
  // Canonical "key=value;..." listing of every parameter except `out`.
  std::string canonical() const;
  // 16 hex digits identifying canonical().
  std::string fingerprint() const;
};

struct Table {
  std::string name;  // "" for the main table
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
};

struct Report {
  Pipeline pipeline = Pipeline::Expsum;
  std::string canonical;
  std::string fingerprint;
  std::vector<Table> tables;  // tables[0] is the main table

  const Table& main() const { return tables.front(); }
  const Table* find(std::string_view name) const;
};

Report run_experiment(const ExperimentConfig& cfg);

// "# schema=1", "# config: ...", header, rows.
std::string render_csv(const Report& report, const Table& table);

// Main table to `out`, others to `<out stem>.<name>.csv`; each file is written
// to a temporary and renamed into place. Returns the paths written.
std::vector<std::string> write_report(const Report& report, const std::string& out);

// Shortest round-trip decimal form.
std::string format_number(double v);

}  // namespace ergolab
