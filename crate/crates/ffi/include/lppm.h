/* C interface to the lppm location-privacy evaluation library. */

#ifndef LPPM_H
#define LPPM_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  LPPM_STATUS_OK = 0,
  LPPM_STATUS_NULL_POINTER = 1,
  LPPM_STATUS_INVALID_ARGUMENT = 2,
  LPPM_STATUS_INDEX_OUT_OF_RANGE = 3,
  LPPM_STATUS_IO = 4,
  /**
   * The requested value is not defined for the inputs, e.g. recall
   * with no original POIs.
   */
  LPPM_STATUS_UNDEFINED = 5,
  LPPM_STATUS_PANIC = 6,
} LppmStatus;

/**
 * POIs extracted from a trace.
 */
typedef struct LppmPoiList LppmPoiList;

/**
 * Road network nodes used for map matching.
 */
typedef struct LppmRoadGraph LppmRoadGraph;

/**
 * A single user's time-ordered trace.
 */
typedef struct LppmTrace LppmTrace;

typedef struct {
  double lat;
  double lon;
  int64_t t_start;
  int64_t t_end;
  size_t n_points;
} LppmPoi;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lppm_version(void);

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *lppm_last_error_message(void);

/**
 * Great-circle distance in meters.
 */
LppmStatus lppm_distance(double lat1, double lon1, double lat2, double lon2, double *out_m);

/**
 * Noise radius at cumulative probability `p` in [0, 1).
 */
LppmStatus lppm_inverse_cdf_radius(double p, double epsilon, double *out_m);

/**
 * New empty trace. Returns NULL if `user_id` is NULL or not UTF-8.
 */
LppmTrace *lppm_trace_new(const char *user_id);

void lppm_trace_free(LppmTrace *trace);

/**
 * Appends a point. Timestamps (Unix seconds) must not decrease.
 */
LppmStatus lppm_trace_push(LppmTrace *trace, int64_t t, double lat, double lon);

/**
 * Number of points; 0 for NULL.
 */
size_t lppm_trace_len(const LppmTrace *trace);

/**
 * Reads point `index`. Any of the out-pointers may be NULL.
 */
LppmStatus lppm_trace_get(const LppmTrace *trace,
                          size_t index,
                          int64_t *out_t,
                          double *out_lat,
                          double *out_lon);

/**
 * Planar Laplace noise on every point. The result goes to `*out` and must
 * be freed with `lppm_trace_free`.
 */
LppmStatus lppm_obfuscate_planar_laplace(const LppmTrace *trace,
                                         double epsilon,
                                         uint64_t seed,
                                         LppmTrace **out);

/**
 * Adaptive mechanism with the default window and thresholds.
 */
LppmStatus lppm_obfuscate_adaptive(const LppmTrace *trace,
                                   double epsilon,
                                   uint64_t seed,
                                   LppmTrace **out);

LppmStatus lppm_obfuscate_clustering(const LppmTrace *trace,
                                     double radius_m,
                                     double epsilon,
                                     uint64_t seed,
                                     LppmTrace **out);

LppmStatus lppm_obfuscate_memory_clustering(const LppmTrace *trace,
                                            double radius_m,
                                            double epsilon,
                                            uint64_t seed,
                                            LppmTrace **out);

/**
 * Replaces each point by the centroid of its `k` neighbours on each side.
 */
LppmStatus lppm_sliding_average(const LppmTrace *trace, size_t k, LppmTrace **out);

LppmRoadGraph *lppm_road_graph_new(void);

/**
 * Loads a `node_id,lat,lon` CSV file.
 */
LppmStatus lppm_road_graph_load(const char *path, LppmRoadGraph **out);

void lppm_road_graph_free(LppmRoadGraph *graph);

/**
 * Adds a node. Ids must be unique.
 */
LppmStatus lppm_road_graph_add_node(LppmRoadGraph *graph, uint64_t id, double lat, double lon);

size_t lppm_road_graph_len(const LppmRoadGraph *graph);

/**
 * Snaps every point to its nearest graph node.
 */
LppmStatus lppm_map_match(const LppmTrace *trace, const LppmRoadGraph *graph, LppmTrace **out);

/**
 * Stays of diameter at most `max_diameter_m` lasting at least
 * `min_dwell_s` seconds.
 */
LppmStatus lppm_extract_pois(const LppmTrace *trace,
                             double max_diameter_m,
                             int64_t min_dwell_s,
                             LppmPoiList **out);

void lppm_poi_list_free(LppmPoiList *list);

size_t lppm_poi_list_len(const LppmPoiList *list);

LppmStatus lppm_poi_list_get(const LppmPoiList *list, size_t index, LppmPoi *out);

/**
 * Mean distance in meters between corresponding points of two traces with
 * the same timestamps.
 */
LppmStatus lppm_average_error(const LppmTrace *orig, const LppmTrace *other, double *out_m);

/**
 * Fraction of points within each of the `n` radii in `alphas` (ascending,
 * meters); writes `n` values to `out_deltas`.
 */
LppmStatus lppm_usefulness(const LppmTrace *orig,
                           const LppmTrace *other,
                           const double *alphas,
                           size_t n,
                           double *out_deltas);

/**
 * Share of original POIs matched by at least one attacked POI. Returns
 * `LPPM_STATUS_UNDEFINED` when `orig` is empty.
 */
LppmStatus lppm_poi_recall(const LppmPoiList *orig,
                           const LppmPoiList *attacked,
                           double *out_recall);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LPPM_H */
