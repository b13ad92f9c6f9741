#ifndef FRAMECORR_H
#define FRAMECORR_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define FC_ORIGIN_DETECTOR 0

#define FC_ORIGIN_INTERPOLATED 1

/**
 * Opaque streaming correlator.
 */
typedef struct FcCorrelator FcCorrelator;

typedef int32_t FcStatus;

/**
 * Flat correlator settings. `window_size == 0` selects global SSIM.
 */
typedef struct FcConfig {
  uint32_t half_window;
  double confidence_gate;
  uint32_t fc_quorum;
  uint32_t fill_quorum;
  double fill_iou;
  double similarity_threshold;
  double k1;
  double k2;
  double dynamic_range;
  uint32_t downsample_w;
  uint32_t downsample_h;
  uint32_t window_size;
  uint32_t window_stride;
} FcConfig;

/**
 * Corner box with a score. `origin` is one of the `FC_ORIGIN_*` values and
 * is ignored on input.
 */
typedef struct FcBox {
  double x_min;
  double y_min;
  double x_max;
  double y_max;
  double confidence;
  uint32_t origin;
} FcBox;

/**
 * Summary of one emitted frame. Boxes are written kept first, then added.
 */
typedef struct FcFrameInfo {
  uint64_t frame_index;
  uint32_t n_kept;
  uint32_t n_added;
  uint32_t removed_count;
  uint32_t similar_neighbors;
  bool used_fc;
} FcFrameInfo;

/**
 * Metrics from raw counts. Percentages are NaN when undefined.
 */
typedef struct FcReport {
  double sen;
  double pre;
  double spe;
  double f1;
  double f2;
  double mnfp;
} FcReport;

#define FC_OK 0

/**
 * A required pointer was null.
 */
#define FC_NULL 1

/**
 * Arguments or configuration rejected.
 */
#define FC_INPUT 2

/**
 * Frame indices not strictly increasing.
 */
#define FC_SEQUENCE 3

/**
 * Output buffer shorter than needed; the required count is written back.
 */
#define FC_BUFFER_TOO_SMALL 4

#define FC_PANIC 5

/**
 * Internal consistency check failed.
 */
#define FC_INTERNAL 6

/**
 * No filtered frame is waiting.
 */
#define FC_EMPTY 7

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Writes the library defaults into `out`.
 */
FcStatus fc_default_config(struct FcConfig *out);

/**
 * Creates a correlator. `config` may be null for defaults. Release with
 * [`fc_correlator_free`].
 */
FcStatus fc_correlator_new(const struct FcConfig *config, struct FcCorrelator **out);

/**
 * Null is accepted.
 */
void fc_correlator_free(struct FcCorrelator *handle);

/**
 * Pushes one grayscale frame (`width * height` bytes, row-major) with its
 * detections. Filtered frames become available through [`fc_correlator_pop`].
 */
FcStatus fc_correlator_push(struct FcCorrelator *handle,
                            const uint8_t *samples,
                            uint32_t width,
                            uint32_t height,
                            uint64_t frame_index,
                            const struct FcBox *boxes,
                            size_t n_boxes);

/**
 * Emits every frame still held back and readies the handle for a new
 * sequence.
 */
FcStatus fc_correlator_flush(struct FcCorrelator *handle);

/**
 * Frames pushed but not yet filtered, and frames filtered but not popped.
 */
FcStatus fc_correlator_pending(const struct FcCorrelator *handle, size_t *held, size_t *ready);

/**
 * Takes the oldest filtered frame. `*n_boxes` is set to the box count; when
 * it exceeds `capacity` nothing is consumed and `FC_BUFFER_TOO_SMALL` is
 * returned. Returns `FC_EMPTY` when no frame is ready.
 */
FcStatus fc_correlator_pop(struct FcCorrelator *handle,
                           struct FcFrameInfo *info,
                           struct FcBox *boxes,
                           size_t capacity,
                           size_t *n_boxes);

/**
 * SSIM of two equally sized grayscale frames under `config`'s similarity
 * settings (defaults when null).
 */
FcStatus fc_ssim(const uint8_t *a,
                 const uint8_t *b,
                 uint32_t width,
                 uint32_t height,
                 const struct FcConfig *config,
                 double *out);

FcStatus fc_iou(const struct FcBox *a, const struct FcBox *b, double *out);

/**
 * Percent metrics from raw counts.
 */
FcStatus fc_eval_counts(uint64_t tp,
                        uint64_t fp,
                        uint64_t fn_,
                        uint64_t tn,
                        uint64_t negative_frames,
                        uint64_t frames,
                        struct FcReport *out);

/**
 * Message for the last failing call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *fc_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FRAMECORR_H */
