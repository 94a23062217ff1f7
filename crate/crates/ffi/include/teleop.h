#ifndef TELEOP_H
#define TELEOP_H

/* Generated by cbindgen from teleop-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a C API call.
 */
typedef enum TeleopStatus {
  /**
   * Success.
   */
  TeleopStatus_Ok = 0,
  /**
   * A required pointer argument was null or otherwise unusable.
   */
  TeleopStatus_NullArgument = 1,
  /**
   * The scenario file or text could not be parsed or validated.
   */
  TeleopStatus_ParseError = 2,
  /**
   * The simulation left the configured blow-up bound.
   */
  TeleopStatus_Divergence = 3,
  /**
   * A numerical operation failed.
   */
  TeleopStatus_NumericalError = 4,
  /**
   * Filesystem failure.
   */
  TeleopStatus_IoError = 5,
  /**
   * Internal panic caught at the boundary.
   */
  TeleopStatus_InternalError = 6,
} TeleopStatus;

/**
 * Opaque gain certificate.
 */
typedef struct TeleopCertificate TeleopCertificate;

/**
 * Opaque simulation scenario.
 */
typedef struct TeleopScenario TeleopScenario;

/**
 * Opaque simulation trace.
 */
typedef struct TeleopTrace TeleopTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message of this thread, or null when no error has occurred.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *teleop_last_error_message(void);

/**
 * Load a scenario from a TOML file.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to a writable
 * pointer slot. On success `*out` owns the scenario and must be released
 * with [`teleop_scenario_free`].
 */
enum TeleopStatus teleop_scenario_load(const char *path, struct TeleopScenario **out);

/**
 * Parse a scenario from TOML text.
 *
 * # Safety
 * `text` must point to a NUL-terminated string and `out` to a writable
 * pointer slot; see [`teleop_scenario_load`].
 */
enum TeleopStatus teleop_scenario_parse(const char *text, struct TeleopScenario **out);

/**
 * Override the seeds of randomized delay profiles.
 *
 * # Safety
 * `sc` must be a live handle from a scenario constructor.
 */
enum TeleopStatus teleop_scenario_reseed(struct TeleopScenario *sc, uint64_t seed);

/**
 * Release a scenario handle. Null is ignored.
 *
 * # Safety
 * `sc` must have come from a scenario constructor and not be freed twice.
 */
void teleop_scenario_free(struct TeleopScenario *sc);

/**
 * Certify the scenario's gains against the mode-appropriate stability
 * conditions. A completed certification returns `Ok` even when the verdict
 * is fail; query [`teleop_certificate_passed`].
 *
 * # Safety
 * `sc` must be a live scenario handle and `out` a writable pointer slot.
 * On success `*out` must be released with [`teleop_certificate_free`].
 */
enum TeleopStatus teleop_certify(const struct TeleopScenario *sc, struct TeleopCertificate **out);

/**
 * Whether every certified inequality holds with nonnegative margin.
 *
 * # Safety
 * `cert` must be a live certificate handle and `out` writable.
 */
enum TeleopStatus teleop_certificate_passed(const struct TeleopCertificate *cert, bool *out);

/**
 * Certified exponential decay rate.
 *
 * # Safety
 * `cert` must be a live certificate handle and `out` writable.
 */
enum TeleopStatus teleop_certificate_kappa(const struct TeleopCertificate *cert, double *out);

/**
 * Attractive-set radius squared for the certified input bound.
 *
 * # Safety
 * `cert` must be a live certificate handle and `out` writable.
 */
enum TeleopStatus teleop_certificate_attractive_radius_sq(const struct TeleopCertificate *cert,
                                                          double *out);

/**
 * Full certificate (verdict, named inequalities with margins, derived
 * constants) as a JSON string.
 *
 * # Safety
 * `cert` must be a live certificate handle; `out` receives a string to be
 * released with [`teleop_string_free`].
 */
enum TeleopStatus teleop_certificate_report_json(const struct TeleopCertificate *cert, char **out);

/**
 * Release a certificate handle. Null is ignored.
 *
 * # Safety
 * `cert` must have come from [`teleop_certify`] and not be freed twice.
 */
void teleop_certificate_free(struct TeleopCertificate *cert);

/**
 * Integrate the scenario. Returns `Divergence` when the state leaves the
 * blow-up bound; the certificate (pass or fail) is embedded in the trace
 * metadata.
 *
 * # Safety
 * `sc` and `cert` must be live handles and `out` a writable pointer slot.
 * On success `*out` must be released with [`teleop_trace_free`].
 */
enum TeleopStatus teleop_run(const struct TeleopScenario *sc,
                             const struct TeleopCertificate *cert,
                             struct TeleopTrace **out);

/**
 * Number of sampled instants in the trace.
 *
 * # Safety
 * `trace` must be a live trace handle and `out` writable.
 */
enum TeleopStatus teleop_trace_steps(const struct TeleopTrace *trace, size_t *out);

/**
 * Master-slave position error norm at the final sample.
 *
 * # Safety
 * `trace` must be a live trace handle and `out` writable.
 */
enum TeleopStatus teleop_trace_final_error(const struct TeleopTrace *trace, double *out);

/**
 * Write the trace as CSV (fixed documented column order, 17 significant
 * digits).
 *
 * # Safety
 * `trace` must be a live trace handle and `path` a NUL-terminated string.
 */
enum TeleopStatus teleop_trace_write_csv(const struct TeleopTrace *trace, const char *path);

/**
 * Trace metadata (mode, step, seeds, initial Lyapunov value, embedded
 * certificate) as a JSON string.
 *
 * # Safety
 * `trace` must be a live trace handle; `out` receives a string to be
 * released with [`teleop_string_free`].
 */
enum TeleopStatus teleop_trace_metadata_json(const struct TeleopTrace *trace, char **out);

/**
 * Run every trajectory check (decay bound, set membership, ISS estimate,
 * norm sandwich) at relative slack `eps_num` and return the report as JSON.
 *
 * # Safety
 * `trace` and `cert` must be live handles; `out` receives a string to be
 * released with [`teleop_string_free`].
 */
enum TeleopStatus teleop_analyze_json(const struct TeleopTrace *trace,
                                      const struct TeleopCertificate *cert,
                                      double eps_num,
                                      char **out);

/**
 * Release a trace handle. Null is ignored.
 *
 * # Safety
 * `trace` must have come from [`teleop_run`] and not be freed twice.
 */
void teleop_trace_free(struct TeleopTrace *trace);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must have been returned by one of the `_json` functions and not be
 * freed twice.
 */
void teleop_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TELEOP_H */
