#ifndef KEYPOLY_H
#define KEYPOLY_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum KpStatus {
  KP_STATUS_OK = 0,
  KP_STATUS_NULL_POINTER = 1,
  KP_STATUS_SHAPE = 2,
  KP_STATUS_OUT_OF_BOUNDS = 3,
  KP_STATUS_CONFIG = 4,
  KP_STATUS_VALUE = 5,
  KP_STATUS_EMPTY_INPUT = 6,
  KP_STATUS_INSUFFICIENT_POINTS = 7,
  KP_STATUS_DUPLICATE_POINT = 8,
  KP_STATUS_DEGENERATE = 9,
  KP_STATUS_GENERATION = 10,
  KP_STATUS_PARSE = 11,
  KP_STATUS_IO = 12,
  KP_STATUS_PANIC = 13,
} KpStatus;

// Heatmap with values in [0, 1].
typedef struct KpHeatmap KpHeatmap;

// Ordered list of keypoints.
typedef struct KpKeypoints KpKeypoints;

// Binary mask.
typedef struct KpMask KpMask;

// Closed polygon in (x = column, y = row) coordinates.
typedef struct KpPolygon KpPolygon;

// A keypoint at pixel (`row`, `col`).
typedef struct KpKeypoint {
  size_t row;
  size_t col;
  double score;
} KpKeypoint;

// Mask and boundary accuracy of one patch.
typedef struct KpEvalReport {
  double f1;
  double iou;
  double ssim;
  double boundary_f;
  size_t n_patches;
} KpEvalReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *kp_last_error_message(void);

// Copy `height * width` values into a new heatmap.
//
// # Safety
// `values` must point to `height * width` readable doubles.
enum KpStatus kp_heatmap_new(size_t height,
                             size_t width,
                             const double *values,
                             struct KpHeatmap **out);

// # Safety
// `heatmap` must be NULL or a handle from this library not yet freed.
void kp_heatmap_free(struct KpHeatmap *heatmap);

// # Safety
// `heatmap` must be a live handle; `height` and `width` writable.
enum KpStatus kp_heatmap_dims(const struct KpHeatmap *heatmap, size_t *height, size_t *width);

// Copy the heatmap values into `out`, which must hold exactly `len` doubles.
//
// # Safety
// `heatmap` must be a live handle; `out` must point to `len` writable doubles.
enum KpStatus kp_heatmap_copy_values(const struct KpHeatmap *heatmap, double *out, size_t len);

// Render the Gaussian target for `n` keypoints. A `truncation_radius` of 0
// selects the default `ceil(3 * sigma)`.
//
// # Safety
// `keypoints` must point to `n` readable keypoints (or be NULL when `n` is 0).
enum KpStatus kp_render_gaussian_target(const struct KpKeypoint *keypoints,
                                        size_t n,
                                        size_t height,
                                        size_t width,
                                        double sigma,
                                        double truncation_radius,
                                        struct KpHeatmap **out);

// Focal loss of `prediction` against `target`.
//
// # Safety
// Handles must be live; `loss` writable.
enum KpStatus kp_focal_loss(const struct KpHeatmap *prediction,
                            const struct KpHeatmap *target,
                            double alpha,
                            double beta,
                            size_t n_objects,
                            double *loss);

// Gradient of the focal loss with respect to each prediction value.
//
// # Safety
// Handles must be live; `out` must point to `len` writable doubles.
enum KpStatus kp_focal_loss_gradient(const struct KpHeatmap *prediction,
                                     const struct KpHeatmap *target,
                                     double alpha,
                                     double beta,
                                     size_t n_objects,
                                     double *out,
                                     size_t len);

// # Safety
// `keypoints` must point to `n` readable keypoints (or be NULL when `n` is 0).
enum KpStatus kp_keypoints_new(const struct KpKeypoint *keypoints,
                               size_t n,
                               struct KpKeypoints **out);

// # Safety
// `keypoints` must be NULL or a handle from this library not yet freed.
void kp_keypoints_free(struct KpKeypoints *keypoints);

// Number of keypoints; 0 for NULL.
//
// # Safety
// `keypoints` must be NULL or a live handle.
size_t kp_keypoints_len(const struct KpKeypoints *keypoints);

// # Safety
// `keypoints` must be a live handle; `out` writable.
enum KpStatus kp_keypoints_get(const struct KpKeypoints *keypoints,
                               size_t index,
                               struct KpKeypoint *out);

// Local maxima above `threshold` within a `window` x `window` neighborhood.
//
// # Safety
// `heatmap` must be a live handle.
enum KpStatus kp_extract_peaks(const struct KpHeatmap *heatmap,
                               double threshold,
                               size_t window,
                               struct KpKeypoints **out);

// Build a polygon from `n` interleaved (x, y) pairs.
//
// # Safety
// `xy` must point to `2 * n` readable doubles.
enum KpStatus kp_polygon_new(const double *xy, size_t n, struct KpPolygon **out);

// # Safety
// `polygon` must be NULL or a handle from this library not yet freed.
void kp_polygon_free(struct KpPolygon *polygon);

// Number of vertices; 0 for NULL.
//
// # Safety
// `polygon` must be NULL or a live handle.
size_t kp_polygon_len(const struct KpPolygon *polygon);

// # Safety
// `polygon` must be a live handle; `x` and `y` writable.
enum KpStatus kp_polygon_vertex(const struct KpPolygon *polygon,
                                size_t index,
                                double *x,
                                double *y);

// Whether any two non-adjacent edges intersect; false for NULL.
//
// # Safety
// `polygon` must be NULL or a live handle.
bool kp_polygon_is_self_intersecting(const struct KpPolygon *polygon);

// Chain keypoints by nearest-neighbor grouping. `tie_events` may be NULL.
//
// # Safety
// `keypoints` must be a live handle.
enum KpStatus kp_group_keypoints(const struct KpKeypoints *keypoints,
                                 struct KpPolygon **out,
                                 size_t *tie_events);

// Copy `height * width` bytes into a new mask; nonzero bytes are set.
//
// # Safety
// `values` must point to `height * width` readable bytes.
enum KpStatus kp_mask_new(size_t height, size_t width, const uint8_t *values, struct KpMask **out);

// # Safety
// `mask` must be NULL or a handle from this library not yet freed.
void kp_mask_free(struct KpMask *mask);

// # Safety
// `mask` must be a live handle; `height` and `width` writable.
enum KpStatus kp_mask_dims(const struct KpMask *mask, size_t *height, size_t *width);

// Number of set pixels; 0 for NULL.
//
// # Safety
// `mask` must be NULL or a live handle.
size_t kp_mask_count(const struct KpMask *mask);

// Copy the 0/1 mask values into `out`, which must hold exactly `len` bytes.
//
// # Safety
// `mask` must be a live handle; `out` must point to `len` writable bytes.
enum KpStatus kp_mask_copy_values(const struct KpMask *mask, uint8_t *out, size_t len);

// Even-odd fill sampled at pixel centers. `degenerate` may be NULL; it is
// set when all vertices are collinear and the mask is empty.
//
// # Safety
// `polygon` must be a live handle.
enum KpStatus kp_rasterize(const struct KpPolygon *polygon,
                           size_t height,
                           size_t width,
                           struct KpMask **out,
                           bool *degenerate);

// Set pixels with a 4-neighbor that is unset or outside the grid.
//
// # Safety
// `mask` must be a live handle.
enum KpStatus kp_extract_boundary(const struct KpMask *mask, struct KpMask **out);

// F1, IoU, boundary SSIM and boundary F-measure of `pred` against `truth`.
// Masks must be at least 11 x 11.
//
// # Safety
// Handles must be live; `out` writable.
enum KpStatus kp_evaluate_patch(const struct KpMask *pred,
                                const struct KpMask *truth,
                                double tolerance,
                                struct KpEvalReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KEYPOLY_H */
