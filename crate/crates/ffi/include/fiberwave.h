#ifndef FIBERWAVE_H
#define FIBERWAVE_H

#include <stddef.h>
#include <stdint.h>

typedef enum FwStatus {
  FW_STATUS_OK = 0,
  FW_STATUS_NULL_POINTER = 1,
  // Invalid configuration or arguments.
  FW_STATUS_CONFIG = 2,
  FW_STATUS_NUMERIC = 3,
  FW_STATUS_IO = 4,
  FW_STATUS_BUFFER_TOO_SMALL = 5,
  FW_STATUS_PANIC = 6,
} FwStatus;

typedef enum FwWindowMode {
  FW_WINDOW_MODE_PURE = 0,
  FW_WINDOW_MODE_FDD = 1,
} FwWindowMode;

// Dual-polarization sampled field.
typedef struct FwField FwField;

// A transmitted frame plus the link it is sent over.
typedef struct FwSimulation FwSimulation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread into `buf` (NUL-terminated).
// Returns the message length without the terminator, or 0 if none.
// The message is truncated when `len` is too small.
//
// # Safety
// `buf` must point to `len` writable bytes or be null.
size_t fw_last_error(char *buf, size_t len);

// Library version as a static NUL-terminated string.
const char *fw_version(void);

// Free a string returned by this library.
//
// # Safety
// `s` must come from this library and not be freed twice.
void fw_string_free(char *s);

// Q-factor in dB for a bit error rate. Infinite values are returned as
// IEEE infinities.
//
// # Safety
// `out` must be a valid pointer.
enum FwStatus fw_q_from_ber(double ber, double *out);

// Input window length in symbols for a span.
//
// # Safety
// `out` must be a valid pointer.
enum FwStatus fw_window_length(size_t num_channels,
                               double symbol_rate_baud,
                               double distance_km,
                               double alpha_db_per_km,
                               double beta2_ps2_per_km,
                               enum FwWindowMode mode,
                               size_t *out);

// Build a field from `len` interleaved `[XI, XQ, YI, YQ]` records.
//
// # Safety
// `data` must point to `4 * len` doubles; `out` must be valid.
enum FwStatus fw_field_new(const double *data,
                           size_t len,
                           double sample_rate_hz,
                           double center_wavelength_m,
                           double position_km,
                           struct FwField **out);

// # Safety
// `path` must be a NUL-terminated string; `out` must be valid.
enum FwStatus fw_field_read(const char *path, struct FwField **out);

// # Safety
// `field` must be a live handle; `path` a NUL-terminated string.
enum FwStatus fw_field_write(const struct FwField *field, const char *path);

// Number of samples per polarization, 0 for a null handle.
//
// # Safety
// `field` must be a live handle or null.
size_t fw_field_len(const struct FwField *field);

// Sample rate, center wavelength and position of a field.
//
// # Safety
// All pointers must be valid.
enum FwStatus fw_field_metadata(const struct FwField *field,
                                double *sample_rate_hz,
                                double *center_wavelength_m,
                                double *position_km);

// Copy the samples as interleaved `[XI, XQ, YI, YQ]` records into `buf`,
// which holds `capacity` doubles and must fit `4 * fw_field_len`.
//
// # Safety
// `buf` must point to `capacity` writable doubles.
enum FwStatus fw_field_copy(const struct FwField *field, double *buf, size_t capacity);

// NMSE of `candidate` against `reference` over both polarizations.
//
// # Safety
// Handles must be live; `out` must be valid.
enum FwStatus fw_field_nmse(const struct FwField *reference,
                            const struct FwField *candidate,
                            double *out);

// # Safety
// `field` must come from this library and not be freed twice.
void fw_field_free(struct FwField *field);

// Generate the transmitted frame described by a JSON run configuration
// (an empty object gives the defaults).
//
// # Safety
// `config_json` must be a NUL-terminated string; `out` must be valid.
enum FwStatus fw_simulation_new(const char *config_json, struct FwSimulation **out);

// Number of spans of the simulation's link.
//
// # Safety
// `sim` must be a live handle or null.
size_t fw_simulation_num_spans(const struct FwSimulation *sim);

// A copy of the transmitted field.
//
// # Safety
// `sim` must be a live handle; `out` must be valid.
enum FwStatus fw_simulation_tx_field(const struct FwSimulation *sim, struct FwField **out);

// Propagate the transmitted frame through the first `num_spans` spans.
//
// # Safety
// `sim` must be a live handle; `out` must be valid.
enum FwStatus fw_simulation_propagate(const struct FwSimulation *sim,
                                      size_t num_spans,
                                      struct FwField **out);

// Center-channel index of the simulation's WDM grid.
//
// # Safety
// `sim` must be a live handle or null.
size_t fw_simulation_center_channel(const struct FwSimulation *sim);

// # Safety
// `sim` must come from this library and not be freed twice.
void fw_simulation_free(struct FwSimulation *sim);

// Run the evaluation described by a JSON run configuration and return the
// report as JSON. Free the result with [`fw_string_free`].
//
// # Safety
// `config_json` must be a NUL-terminated string; `out` must be valid.
enum FwStatus fw_evaluate(const char *config_json, char **out);

// Run the launch-power sweep of a JSON run configuration and return it as
// JSON. Free the result with [`fw_string_free`].
//
// # Safety
// `config_json` must be a NUL-terminated string; `out` must be valid.
enum FwStatus fw_sweep_power(const char *config_json, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIBERWAVE_H */
