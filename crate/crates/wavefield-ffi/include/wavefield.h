#ifndef WAVEFIELD_H
#define WAVEFIELD_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Border handling for convolutions.
 */
typedef enum WvPadMode {
  WV_PAD_MODE_CIRCULAR = 0,
  WV_PAD_MODE_ZERO = 1,
} WvPadMode;

/**
 * Status codes returned by every fallible call.
 */
typedef enum WvStatus {
  WV_STATUS_OK = 0,
  WV_STATUS_NULL_POINTER = 1,
  WV_STATUS_INVALID_ARGUMENT = 2,
  WV_STATUS_SHAPE_MISMATCH = 3,
  WV_STATUS_DIVERGED = 4,
  WV_STATUS_NO_PEAK = 5,
  WV_STATUS_UNSTABLE = 6,
  WV_STATUS_IO = 7,
  WV_STATUS_FORMAT = 8,
  WV_STATUS_INTERNAL = 9,
} WvStatus;

/**
 * Dense channels x height x width scalar field (opaque).
 */
typedef struct WvField WvField;

/**
 * 3x3 convolution kernel with bias (opaque).
 */
typedef struct WvKernel WvKernel;

/**
 * Drum simulation trace (opaque).
 */
typedef struct WvTrace WvTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *wv_version(void);

/**
 * Message for the most recent failure on this thread. Valid until the next
 * failing call on the same thread.
 */
const char *wv_last_error(void);

/**
 * Create a field; `data` may be NULL for zeros, otherwise it must hold
 * `channels * height * width` doubles (channel-outermost, row-major).
 */
struct WvField *wv_field_new(uintptr_t channels,
                             uintptr_t height,
                             uintptr_t width,
                             const double *data);

void wv_field_free(struct WvField *field);

uintptr_t wv_field_channels(const struct WvField *field);

uintptr_t wv_field_height(const struct WvField *field);

uintptr_t wv_field_width(const struct WvField *field);

/**
 * Copy the field payload into `out` (length `len` doubles, which must equal
 * channels * height * width).
 */
enum WvStatus wv_field_copy_data(const struct WvField *field, double *out, uintptr_t len);

/**
 * Write the field as a WFT1 dump (rank 3).
 */
enum WvStatus wv_field_write_wft1(const struct WvField *field, const char *path);

/**
 * Read a rank-2 or rank-3 WFT1 dump as a field (rank 2 becomes 1 channel).
 */
enum WvStatus wv_field_read_wft1(const char *path, struct WvField **out);

/**
 * Five-point Laplacian stencil kernel over `channels` channels.
 */
struct WvKernel *wv_kernel_laplacian(uintptr_t channels);

/**
 * Kernel from raw taps: `weights` is out*in*9 doubles ([out][in][ky][kx]);
 * `bias` may be NULL for zero bias, otherwise `out` doubles.
 */
struct WvKernel *wv_kernel_new(uintptr_t out_ch,
                               uintptr_t in_ch,
                               const double *weights,
                               const double *bias);

void wv_kernel_free(struct WvKernel *kernel);

/**
 * 3x3 cross-correlation; writes a new field handle to `out`.
 */
enum WvStatus wv_conv2d(const struct WvField *field,
                        const struct WvKernel *kernel,
                        enum WvPadMode pad,
                        struct WvField **out);

/**
 * Multiply every channel by a binary 1-channel mask.
 */
enum WvStatus wv_masked_clamp(const struct WvField *field,
                              const struct WvField *mask,
                              struct WvField **out);

/**
 * Centered square clamp mask with side length `l` on an h x w grid.
 */
enum WvStatus wv_drum_square_mask(uintptr_t l,
                                  uintptr_t height,
                                  uintptr_t width,
                                  struct WvField **out);

/**
 * Clamped Verlet simulation from a unit displacement at (src_row, src_col);
 * records the source displacement per step.
 */
enum WvStatus wv_drum_simulate(const struct WvField *mask,
                               uintptr_t src_row,
                               uintptr_t src_col,
                               double wave_speed,
                               double dt,
                               uintptr_t steps,
                               struct WvTrace **out);

uintptr_t wv_trace_len(const struct WvTrace *trace);

enum WvStatus wv_trace_copy(const struct WvTrace *trace, double *out, uintptr_t len);

void wv_trace_free(struct WvTrace *trace);

/**
 * Continuum square-drum mode frequency in Hz: c * sqrt(m^2 + n^2) / (2L).
 */
double wv_drum_theoretical_frequency(uint32_t m, uint32_t n, double l, double c);

/**
 * Lowest spectral peak of a trace (Hann window, parabolic refinement).
 */
enum WvStatus wv_drum_measure_fundamental(const struct WvTrace *trace, double *out_hz);

/**
 * One-sided DFT amplitudes (DC dropped) of an even-length series; `out`
 * must hold len/2 doubles.
 */
enum WvStatus wv_dft_amplitudes(const double *series, uintptr_t len, double dt, double *out);

/**
 * Instantaneous phase (radians) of a real series via the analytic signal;
 * `out` must hold `len` doubles.
 */
enum WvStatus wv_hilbert_phase(const double *series, uintptr_t len, double *out);

/**
 * Pearson product-moment correlation of two equal-length series.
 */
enum WvStatus wv_pearson(const double *x, const double *y, uintptr_t len, double *out);

/**
 * Generate a polygons dataset directory (images + masks as WFT1 dumps plus
 * a JSON manifest). `shape_classes` starts at triangles.
 */
enum WvStatus wv_gen_polygons(uintptr_t count,
                              uintptr_t canvas,
                              uintptr_t shape_classes,
                              double radius_min,
                              double radius_max,
                              uint64_t seed,
                              const char *out_dir);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* WAVEFIELD_H */
