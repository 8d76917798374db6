#ifndef HADAMARD_H
#define HADAMARD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status code returned by every function.
typedef enum HdStatus {
  HD_STATUS_OK = 0,
  HD_STATUS_NULL_POINTER = 1,
  HD_STATUS_INVALID_UTF8 = 2,
  HD_STATUS_CONFIG = 3,
  HD_STATUS_IO = 4,
  HD_STATUS_INVALID_ARGUMENT = 5,
  HD_STATUS_NUMERICAL = 6,
  // The call completed but at least one check failed.
  HD_STATUS_CHECKS_FAILED = 7,
  HD_STATUS_PANIC = 8,
} HdStatus;

// Assembled parametrix on the configured grid and window.
typedef struct HdBundle HdBundle;

// Parsed and validated run configuration.
typedef struct HdConfig HdConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t hd_last_error(char *buf, size_t len);

// Parses a TOML configuration.
//
// # Safety
// `toml` must be a NUL-terminated string; `out` must be writable.
enum HdStatus hd_config_from_toml(const char *toml, struct HdConfig **out);

// Reads a TOML configuration file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum HdStatus hd_config_load(const char *path, struct HdConfig **out);

// # Safety
// `cfg` must be a live handle.
enum HdStatus hd_config_set_seed(struct HdConfig *cfg, uint64_t seed);

// # Safety
// `cfg` must be null or a handle not yet freed.
void hd_config_free(struct HdConfig *cfg);

// Runs a subcommand (`reduce`, `parametrix`, `state`, `verify`, `static`,
// `glue`, `egorov`, `sweep`) into `out_dir`. Returns `ChecksFailed` when
// the report was written but not every check passed.
//
// # Safety
// `cfg` must be a live handle; strings must be NUL-terminated.
enum HdStatus hd_run(const struct HdConfig *cfg, const char *command, const char *out_dir);

// Builds the parametrix for the configured model.
//
// # Safety
// `cfg` must be a live handle; `out` must be writable.
enum HdStatus hd_bundle_build(const struct HdConfig *cfg, struct HdBundle **out);

// # Safety
// `b` must be null or a handle not yet freed.
void hd_bundle_free(struct HdBundle *b);

// Number of grid points.
//
// # Safety
// `b` must be a live handle; `n` must be writable.
enum HdStatus hd_bundle_grid_size(const struct HdBundle *b, size_t *n);

// Copies the `n × n` operator `r` row-major into `out` (`2n²` doubles).
//
// # Safety
// `b` must be a live handle; `out` must hold `len` doubles.
enum HdStatus hd_bundle_r(const struct HdBundle *b, double *out, size_t len);

// Evolves Cauchy data `(f0, f1)` from time 0 to `t` with the parametrix.
// All four arrays hold `2n` doubles.
//
// # Safety
// `b` must be a live handle; the arrays must hold `2n` doubles each.
enum HdStatus hd_bundle_evolve(const struct HdBundle *b,
                               double t,
                               const double *f0,
                               const double *f1,
                               double *out0,
                               double *out1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HADAMARD_H */
