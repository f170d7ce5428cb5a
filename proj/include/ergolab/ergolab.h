/* C interface to the ergolab library. All functions return an ergo_status;
 * on failure ergo_last_error() describes the most recent error of the calling
 * thread. Handles are opaque and must be released with the matching _free. */
#ifndef ERGOLAB_ERGOLAB_H
#define ERGOLAB_ERGOLAB_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define ERGO_API __declspec(dllexport)
#else
#define ERGO_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum ergo_status {
  ERGO_OK = 0,
  ERGO_INVALID_ARGUMENT = 1,
  ERGO_OUT_OF_RANGE = 2,
  ERGO_PARSE = 3,
  ERGO_UNSUPPORTED = 4,
  ERGO_INSUFFICIENT_PRECISION = 5,
  ERGO_DOMAIN = 6,
  ERGO_IO = 7,
  ERGO_INTERNAL = 8
} ergo_status;

typedef struct ergo_config ergo_config;
typedef struct ergo_report ergo_report;
typedef struct ergo_realization ergo_realization;
typedef struct ergo_expr ergo_expr;

ERGO_API const char* ergo_version(void);
ERGO_API const char* ergo_last_error(void);
ERGO_API const char* ergo_status_name(ergo_status status);

/* Experiment configuration (flat key=value). */
ERGO_API ergo_status ergo_config_new(ergo_config** out);
ERGO_API void ergo_config_free(ergo_config* cfg);
ERGO_API ergo_status ergo_config_set(ergo_config* cfg, const char* key, const char* value);
/* Merges the key=value lines of a file into cfg. */
ERGO_API ergo_status ergo_config_load_file(ergo_config* cfg, const char* path);
ERGO_API ergo_status ergo_config_validate(const ergo_config* cfg);
/* Copies a NUL-terminated string into buf (if cap suffices); *needed gets the
 * full length including the terminator. Same convention for every _string call. */
ERGO_API ergo_status ergo_config_canonical(const ergo_config* cfg, char* buf, size_t cap,
                                           size_t* needed);
ERGO_API ergo_status ergo_config_output_path(const ergo_config* cfg, char* buf, size_t cap,
                                             size_t* needed);

/* Runs the configured pipeline. */
ERGO_API ergo_status ergo_run(const ergo_config* cfg, ergo_report** out);
ERGO_API void ergo_report_free(ergo_report* report);
ERGO_API ergo_status ergo_report_table_count(const ergo_report* report, size_t* count);
/* name and csv stay valid until the report is freed; the main table has name "". */
ERGO_API ergo_status ergo_report_table(const ergo_report* report, size_t index, const char** name,
                                       const char** csv, size_t* rows);
/* Writes every table atomically; companions go to <stem>.<name>.csv. */
ERGO_API ergo_status ergo_report_write(const ergo_report* report, const char* path);

/* Random selector realizations, X_n ~ Bernoulli(n^{-a}). */
ERGO_API ergo_status ergo_realization_generate(double a, uint64_t seed, uint64_t n_max,
                                               ergo_realization** out);
ERGO_API void ergo_realization_free(ergo_realization* r);
ERGO_API ergo_status ergo_realization_n_max(const ergo_realization* r, uint64_t* out);
ERGO_API ergo_status ergo_realization_bit(const ergo_realization* r, uint64_t n, int* out);
ERGO_API ergo_status ergo_realization_prefix(const ergo_realization* r, uint64_t N, uint64_t* out);
ERGO_API ergo_status ergo_realization_counting(const ergo_realization* r, uint64_t n,
                                               uint64_t* out);
ERGO_API ergo_status ergo_realization_w(const ergo_realization* r, uint64_t N, double* out);

/* Phase functions p. */
ERGO_API ergo_status ergo_expr_parse(const char* source, double epsilon, ergo_expr** out);
ERGO_API void ergo_expr_free(ergo_expr* p);
ERGO_API ergo_status ergo_expr_canonical(const ergo_expr* p, char* buf, size_t cap, size_t* needed);
ERGO_API ergo_status ergo_expr_required_bits(const ergo_expr* p, uint64_t x, int* out);
ERGO_API ergo_status ergo_expr_eval_mod1(const ergo_expr* p, uint64_t x, int bits, double* frac,
                                         double* error_bound);
/* (1/N) sum_{n<=N} e(p(n)); bits <= 0 selects the minimum admissible precision. */
ERGO_API ergo_status ergo_exp_sum(const ergo_expr* p, uint64_t N, int bits, double* re, double* im);

/* floor(rho^k) within [n_min, n_max]. *count receives the full length. */
ERGO_API ergo_status ergo_lacunary_schedule(double rho, uint64_t n_min, uint64_t n_max,
                                            uint64_t* buf, size_t cap, size_t* count);

#ifdef __cplusplus
}
#endif

#endif
