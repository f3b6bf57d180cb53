#ifndef PHOTOSCORE_H
#define PHOTOSCORE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Number of score classes (scores 2 through 9).
#define PS_NUM_CLASSES 8

// Required input edge length in pixels.
#define PS_INPUT_SIZE 227

typedef enum PsStatus {
  PS_STATUS_OK = 0,
  PS_STATUS_NULL_POINTER = 1,
  PS_STATUS_INVALID_ARGUMENT = 2,
  PS_STATUS_IO = 3,
  PS_STATUS_FORMAT = 4,
  PS_STATUS_NUMERIC = 5,
  PS_STATUS_PANIC = 6,
} PsStatus;

// Opaque trained network.
typedef struct PsModel PsModel;

// Outcome of FD model selection. `converged` is 1 when the F_all-best model
// clears the threshold, in which case `index` names it; otherwise `index`
// is -1 and `fd` is the FD of the F_all-best model.
typedef struct PsSelection {
  uint8_t converged;
  int64_t index;
  double fd;
  uint64_t by_f;
  uint64_t by_d;
  uint64_t by_fd;
} PsSelection;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread, or an empty string.
// The pointer stays valid until the next `ps_*` call on the same thread.
const char *ps_last_error(void);

// Library version as a static NUL-terminated string.
const char *ps_version(void);

// Loads a model file. On success `*out` receives a handle owned by the
// caller.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum PsStatus ps_model_load(const char *path, struct PsModel **out);

// Releases a handle from [`ps_model_load`]. Null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void ps_model_free(struct PsModel *model);

// Class probabilities for one `PS_INPUT_SIZE` square RGB image given as
// `height * width * 3` bytes, row-major. Writes `PS_NUM_CLASSES` values
// (scores 2..9 in order) to `probs`.
//
// # Safety
// `rgb` must hold `width * height * 3` bytes and `probs` room for
// `PS_NUM_CLASSES` doubles.
enum PsStatus ps_model_predict(const struct PsModel *model,
                               const uint8_t *rgb,
                               uintptr_t width,
                               uintptr_t height,
                               double *probs);

// D-measure of the model's final fully connected layer.
//
// # Safety
// `out` must be a valid pointer.
enum PsStatus ps_model_d_measure(const struct PsModel *model, double *out);

// D-measure of a `rows x cols` weight matrix stored row-major, where
// columns are output nodes.
//
// # Safety
// `weights` must hold `rows * cols` doubles and `out` be a valid pointer.
enum PsStatus ps_d_measure(const double *weights, uintptr_t rows, uintptr_t cols, double *out);

// Score (2..9) at the maximum of the equal-weight blend of two
// `PS_NUM_CLASSES`-long probability vectors.
//
// # Safety
// `p_f` and `p_d` must hold `len` doubles and `score` be a valid pointer.
enum PsStatus ps_ensemble_predict(const double *p_f,
                                  const double *p_d,
                                  uintptr_t len,
                                  uint8_t *score);

// FD selection over a family of `len` models given raw F_all and
// D-measure values.
//
// # Safety
// `f_all` and `d` must hold `len` doubles and `out` be a valid pointer.
enum PsStatus ps_select_optimal(const double *f_all,
                                const double *d,
                                uintptr_t len,
                                double threshold,
                                struct PsSelection *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHOTOSCORE_H */
