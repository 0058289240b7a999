#ifndef ASI_NOWCAST_H
#define ASI_NOWCAST_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AsiStatus {
  ASI_STATUS_OK = 0,
  ASI_STATUS_NULL_POINTER = 1,
  ASI_STATUS_INVALID_INPUT = 2,
  ASI_STATUS_CONFIG = 3,
  ASI_STATUS_DATA = 4,
  ASI_STATUS_NUMERIC = 5,
  ASI_STATUS_PANIC = 6,
} AsiStatus;

// Dense optical flow between two images, px/frame.
typedef struct AsiFlow AsiFlow;

// Cloud segmentation of one image.
typedef struct AsiSegmentation AsiSegmentation;

// Reprojected sky image.
typedef struct AsiSkyImage AsiSkyImage;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length without the NUL,
// or 0 when no error was recorded.
size_t asi_last_error(char *buf, size_t len);

// Solar zenith and azimuth (degrees, azimuth clockwise from north).
enum AsiStatus asi_solar_position(int64_t unix_seconds,
                                  double latitude_deg,
                                  double longitude_deg,
                                  double *zenith_deg,
                                  double *azimuth_deg);

// Clear-sky GHI in W/m² for a solar zenith angle; 0 below the horizon.
enum AsiStatus asi_clear_sky_ghi(double zenith_deg, double solar_constant, double *ghi);

// `1 - rmse / rmse_reference`. Fails with `ASI_STATUS_NUMERIC` when the
// reference RMSE is zero.
enum AsiStatus asi_skill_score(double rmse, double rmse_reference, double *ss);

// Smart persistence over the 90 horizons: `forecast[h] = ghi_now / ghi_clear_now * ghi_clear_future[h]`.
enum AsiStatus asi_smart_persistence(double ghi_now,
                                     double ghi_clear_now,
                                     const double *ghi_clear_future,
                                     size_t len,
                                     double *forecast);

// Number of horizons every forecast covers.
size_t asi_horizon_count(void);

// Builds a square sky image from `size * size` interleaved RGB floats in
// [0, 1], row-major, on an equidistant grid of the given field of view.
enum AsiStatus asi_sky_image_new(const float *rgb,
                                 size_t size,
                                 double fov_deg,
                                 int64_t unix_seconds,
                                 struct AsiSkyImage **image);

void asi_sky_image_free(struct AsiSkyImage *image);

// Segments an image with the default thresholds.
enum AsiStatus asi_segment(const struct AsiSkyImage *image, struct AsiSegmentation **segmentation);

// Cloud share of the valid pixels.
enum AsiStatus asi_segmentation_cloud_fraction(const struct AsiSegmentation *segmentation,
                                               double *fraction);

// Per-pixel classes as gray codes (0 outside the disk, 128 sky, 255 cloud);
// `len` must equal `size * size`.
enum AsiStatus asi_segmentation_classes(const struct AsiSegmentation *segmentation,
                                        uint8_t *classes,
                                        size_t len);

void asi_segmentation_free(struct AsiSegmentation *segmentation);

// Dense flow from `prev` to `next` with the default parameters.
enum AsiStatus asi_flow(const struct AsiSkyImage *prev,
                        const struct AsiSkyImage *next,
                        struct AsiFlow **flow);

// Copies the u and v components (`len` = width * height each).
enum AsiStatus asi_flow_components(const struct AsiFlow *flow, double *u, double *v, size_t len);

void asi_flow_free(struct AsiFlow *flow);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ASI_NOWCAST_H */
