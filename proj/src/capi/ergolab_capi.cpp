#include "ergolab/ergolab.h"

#include <cstring>
#include <algorithm>
#include <complex>
#include <exception>
#include <fstream>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "ergolab/error.hpp"
#include "ergolab/hardy.hpp"
#include "ergolab/harness.hpp"
#include "ergolab/random_sequence.hpp"

struct ergo_config {
  ergolab::ExperimentConfig cfg;
};

struct ergo_report {
  ergolab::Report report;
  std::vector<std::string> csv;
};

struct ergo_realization {
  ergolab::Realization r;
};

struct ergo_expr {
  ergolab::HardyExpr p;
};

namespace {

thread_local std::string last_error;

ergo_status map_code(ergolab::ErrorCode code) {
  using ergolab::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return ERGO_INVALID_ARGUMENT;
    case ErrorCode::OutOfRange: return ERGO_OUT_OF_RANGE;
    case ErrorCode::Parse: return ERGO_PARSE;
    case ErrorCode::Unsupported: return ERGO_UNSUPPORTED;
    case ErrorCode::InsufficientPrecision: return ERGO_INSUFFICIENT_PRECISION;
    case ErrorCode::Domain: return ERGO_DOMAIN;
    case ErrorCode::Io: return ERGO_IO;
  }
  return ERGO_INTERNAL;
}

template <class Fn>
ergo_status guarded(Fn&& fn) {
  try {
    fn();
    last_error.clear();
    return ERGO_OK;
  } catch (const ergolab::Error& e) {
    last_error = e.what();
    return map_code(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return ERGO_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return ERGO_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return ERGO_INTERNAL;
  }
}

void require(const void* ptr, const char* what) {
  if (ptr == nullptr) ergolab::fail(ergolab::ErrorCode::InvalidArgument, std::string(what) + " is null");
}

void copy_string(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed != nullptr) *needed = s.size() + 1;
  if (buf != nullptr && cap > s.size()) std::memcpy(buf, s.c_str(), s.size() + 1);
  else if (buf != nullptr && cap > 0)
    ergolab::fail(ergolab::ErrorCode::OutOfRange, "buffer too small");
}

}  // namespace

extern "C" {

const char* ergo_version(void) { return "1.0.0"; }

const char* ergo_last_error(void) { return last_error.c_str(); }

const char* ergo_status_name(ergo_status status) {
  switch (status) {
    case ERGO_OK: return "ok";
    case ERGO_INVALID_ARGUMENT: return "invalid argument";
    case ERGO_OUT_OF_RANGE: return "out of range";
    case ERGO_PARSE: return "parse error";
    case ERGO_UNSUPPORTED: return "unsupported";
    case ERGO_INSUFFICIENT_PRECISION: return "insufficient precision";
    case ERGO_DOMAIN: return "domain error";
    case ERGO_IO: return "i/o error";
    case ERGO_INTERNAL: return "internal error";
  }
  return "unknown status";
}

ergo_status ergo_config_new(ergo_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new ergo_config{};
  });
}

void ergo_config_free(ergo_config* cfg) { delete cfg; }

ergo_status ergo_config_set(ergo_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    cfg->cfg.set(key, value);
  });
}

ergo_status ergo_config_load_file(ergo_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "config");
    require(path, "path");
    std::ifstream in(path, std::ios::binary);
    if (!in) ergolab::fail(ergolab::ErrorCode::Io, std::string("cannot open config file ") + path);
    std::ostringstream text;
    text << in.rdbuf();
    // Merge into a copy so a bad line leaves cfg untouched.
    ergolab::ExperimentConfig merged = cfg->cfg;
    merged.merge_text(text.str());
    cfg->cfg = std::move(merged);
  });
}

ergo_status ergo_config_validate(const ergo_config* cfg) {
  return guarded([&] {
    require(cfg, "config");
    cfg->cfg.validate();
  });
}

ergo_status ergo_config_canonical(const ergo_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(cfg, "config");
    copy_string(cfg->cfg.canonical(), buf, cap, needed);
  });
}

ergo_status ergo_config_output_path(const ergo_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(cfg, "config");
    copy_string(cfg->cfg.out, buf, cap, needed);
  });
}

ergo_status ergo_run(const ergo_config* cfg, ergo_report** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    auto rep = std::make_unique<ergo_report>();
    rep->report = ergolab::run_experiment(cfg->cfg);
    for (const ergolab::Table& t : rep->report.tables)
      rep->csv.push_back(ergolab::render_csv(rep->report, t));
    *out = rep.release();
  });
}

void ergo_report_free(ergo_report* report) { delete report; }

ergo_status ergo_report_table_count(const ergo_report* report, size_t* count) {
  return guarded([&] {
    require(report, "report");
    require(count, "count");
    *count = report->report.tables.size();
  });
}

ergo_status ergo_report_table(const ergo_report* report, size_t index, const char** name,
                              const char** csv, size_t* rows) {
  return guarded([&] {
    require(report, "report");
    if (index >= report->report.tables.size())
      ergolab::fail(ergolab::ErrorCode::OutOfRange, "table index out of range");
    const ergolab::Table& t = report->report.tables[index];
    if (name != nullptr) *name = t.name.c_str();
    if (csv != nullptr) *csv = report->csv[index].c_str();
    if (rows != nullptr) *rows = t.rows.size();
  });
}

ergo_status ergo_report_write(const ergo_report* report, const char* path) {
  return guarded([&] {
    require(report, "report");
    require(path, "path");
    ergolab::write_report(report->report, path);
  });
}

ergo_status ergo_realization_generate(double a, uint64_t seed, uint64_t n_max,
                                      ergo_realization** out) {
  return guarded([&] {
    require(out, "out");
    *out = new ergo_realization{ergolab::Realization::generate({a, seed, n_max})};
  });
}

void ergo_realization_free(ergo_realization* r) { delete r; }

ergo_status ergo_realization_n_max(const ergo_realization* r, uint64_t* out) {
  return guarded([&] {
    require(r, "realization");
    require(out, "out");
    *out = r->r.n_max();
  });
}

ergo_status ergo_realization_bit(const ergo_realization* r, uint64_t n, int* out) {
  return guarded([&] {
    require(r, "realization");
    require(out, "out");
    *out = r->r.bit(n) ? 1 : 0;
  });
}

ergo_status ergo_realization_prefix(const ergo_realization* r, uint64_t N, uint64_t* out) {
  return guarded([&] {
    require(r, "realization");
    require(out, "out");
    *out = r->r.prefix(N);
  });
}

ergo_status ergo_realization_counting(const ergo_realization* r, uint64_t n, uint64_t* out) {
  return guarded([&] {
    require(r, "realization");
    require(out, "out");
    *out = r->r.counting_function(n);
  });
}

ergo_status ergo_realization_w(const ergo_realization* r, uint64_t N, double* out) {
  return guarded([&] {
    require(r, "realization");
    require(out, "out");
    *out = r->r.w(N);
  });
}

ergo_status ergo_expr_parse(const char* source, double epsilon, ergo_expr** out) {
  return guarded([&] {
    require(source, "source");
    require(out, "out");
    *out = new ergo_expr{ergolab::HardyExpr::parse(source, epsilon)};
  });
}

void ergo_expr_free(ergo_expr* p) { delete p; }

ergo_status ergo_expr_canonical(const ergo_expr* p, char* buf, size_t cap, size_t* needed) {
  return guarded([&] {
    require(p, "expression");
    copy_string(p->p.canonical(), buf, cap, needed);
  });
}

ergo_status ergo_expr_required_bits(const ergo_expr* p, uint64_t x, int* out) {
  return guarded([&] {
    require(p, "expression");
    require(out, "out");
    *out = ergolab::required_precision(p->p, x);
  });
}

ergo_status ergo_expr_eval_mod1(const ergo_expr* p, uint64_t x, int bits, double* frac,
                                double* error_bound) {
  return guarded([&] {
    require(p, "expression");
    const ergolab::PhaseValue v = ergolab::eval_mod1(p->p, x, bits);
    if (frac != nullptr) *frac = v.frac;
    if (error_bound != nullptr) *error_bound = v.error_bound;
  });
}

ergo_status ergo_exp_sum(const ergo_expr* p, uint64_t N, int bits, double* re, double* im) {
  return guarded([&] {
    require(p, "expression");
    const std::complex<double> v = ergolab::exp_sum(p->p, N, bits);
    if (re != nullptr) *re = v.real();
    if (im != nullptr) *im = v.imag();
  });
}

ergo_status ergo_lacunary_schedule(double rho, uint64_t n_min, uint64_t n_max, uint64_t* buf,
                                   size_t cap, size_t* count) {
  return guarded([&] {
    const auto s = ergolab::lacunary_schedule(rho, n_min, n_max);
    if (count != nullptr) *count = s.size();
    if (buf != nullptr) std::memcpy(buf, s.data(), std::min(cap, s.size()) * sizeof(uint64_t));
  });
}

}  // extern "C"
