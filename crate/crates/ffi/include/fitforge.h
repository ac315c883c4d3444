#ifndef FITFORGE_H
#define FITFORGE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum FfStatus {
  FF_STATUS_OK = 0,
  FF_STATUS_NULL_POINTER = 1,
  FF_STATUS_INVALID_UTF8 = 2,
  FF_STATUS_IO = 3,
  FF_STATUS_CHECKSUM = 4,
  FF_STATUS_VERSION_MISMATCH = 5,
  FF_STATUS_NOT_FOUND = 6,
  FF_STATUS_VALIDATION = 7,
  FF_STATUS_INTERNAL = 8,
  FF_STATUS_PANIC = 9,
} FfStatus;

/**
 * A loaded, immutable model bundle.
 */
typedef struct FfBundle FfBundle;

/**
 * Result of one recommendation.
 */
typedef struct FfRecommendation FfRecommendation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Bundle format version understood by this library.
 */
uint32_t ff_bundle_format_version(void);

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *ff_last_error(void);

/**
 * Loads a bundle from `path` into `*out`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FfStatus ff_bundle_open(const char *path, struct FfBundle **out);

/**
 * Releases a bundle. Null is ignored.
 *
 * # Safety
 * `bundle` must come from [`ff_bundle_open`] and not be used afterwards.
 */
void ff_bundle_close(struct FfBundle *bundle);

/**
 * Steps per route profile, or 0 for a null bundle.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
size_t ff_bundle_sequence_length(const struct FfBundle *bundle);

/**
 * Embedding rank, or 0 for a null bundle.
 *
 * # Safety
 * `bundle` must be null or a live handle.
 */
size_t ff_bundle_rank(const struct FfBundle *bundle);

/**
 * Runs one recommendation. `sport` is "run", "bike" or "mountain-bike";
 * `gender` may be null to use the stored value.
 *
 * # Safety
 * String arguments must be NUL-terminated, `bundle` live, `out` valid.
 */
enum FfStatus ff_recommend(const struct FfBundle *bundle,
                           const char *user_id,
                           const char *route_id,
                           const char *sport,
                           double target_calories,
                           const char *gender,
                           struct FfRecommendation **out);

/**
 * Releases a recommendation. Null is ignored.
 *
 * # Safety
 * `rec` must come from [`ff_recommend`] and not be used afterwards.
 */
void ff_recommendation_free(struct FfRecommendation *rec);

/**
 * Predicted distance in km, NaN for null.
 *
 * # Safety
 * `rec` must be null or a live handle.
 */
double ff_recommendation_distance_km(const struct FfRecommendation *rec);

/**
 * Mean predicted speed in km/h, NaN for null.
 *
 * # Safety
 * `rec` must be null or a live handle.
 */
double ff_recommendation_avg_speed(const struct FfRecommendation *rec);

/**
 * Mean predicted heart rate in bpm, NaN for null.
 *
 * # Safety
 * `rec` must be null or a live handle.
 */
double ff_recommendation_avg_heartrate(const struct FfRecommendation *rec);

/**
 * Number of steps in each predicted sequence, 0 for null.
 *
 * # Safety
 * `rec` must be null or a live handle.
 */
size_t ff_recommendation_len(const struct FfRecommendation *rec);

/**
 * Copies the speed sequence (km/h) into `buf`, which must hold
 * [`ff_recommendation_len`] values.
 *
 * # Safety
 * `rec` must be live and `buf` valid for `cap` writes.
 */
enum FfStatus ff_recommendation_speed(const struct FfRecommendation *rec, double *buf, size_t cap);

/**
 * Copies the heart-rate sequence (bpm) into `buf`, which must hold
 * [`ff_recommendation_len`] values.
 *
 * # Safety
 * `rec` must be live and `buf` valid for `cap` writes.
 */
enum FfStatus ff_recommendation_heartrate(const struct FfRecommendation *rec,
                                          double *buf,
                                          size_t cap);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FITFORGE_H */
