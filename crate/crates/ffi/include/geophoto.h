/* C interface of geophoto-core. Generated by cbindgen; do not edit. */

#ifndef GEOPHOTO_H
#define GEOPHOTO_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Call outcome. Nonzero codes match the CLI exit codes (2 config, 3 data,
 * 4 numeric); 1 marks misuse of the binding itself, such as a null pointer
 * or an undersized buffer.
 */
typedef enum GpStatus {
  GP_STATUS_OK = 0,
  GP_STATUS_INVALID_ARGUMENT = 1,
  GP_STATUS_CONFIG = 2,
  GP_STATUS_DATA = 3,
  GP_STATUS_NUMERIC = 4,
} GpStatus;

/**
 * Hotspot components extracted from one activity grid. Opaque; read through
 * the `gp_hotspot_*` accessors and release with [`gp_hotspots_free`].
 */
typedef struct GpHotspots GpHotspots;

/**
 * City registry handle. Opaque; release with [`gp_registry_free`].
 */
typedef struct GpRegistry GpRegistry;

/**
 * Least-squares line `y = slope*x + intercept` with its R-squared.
 */
typedef struct GpLinearFit {
  double slope;
  double intercept;
  double r_squared;
  size_t n_points;
} GpLinearFit;

/**
 * Power law `y = prefactor * x^(-exponent)` fitted in log-log space.
 */
typedef struct GpPowerLawFit {
  double exponent;
  double prefactor;
  double r_squared;
  size_t n_points;
} GpPowerLawFit;

/**
 * Exponential decay `y = amplitude * exp(-decay_rate * x)` fitted in
 * semi-log space.
 */
typedef struct GpExponentialFit {
  double amplitude;
  double decay_rate;
  double r_squared;
  size_t n_points;
} GpExponentialFit;

/**
 * Maximum-likelihood log-normal parameters for samples left-truncated at a
 * known point. `mu` and `sigma_sq` describe ln x of the untruncated law.
 */
typedef struct GpLognormalFit {
  double mu;
  double sigma_sq;
  double log_likelihood;
  size_t n_points;
  bool converged;
  double gradient_norm;
  size_t iterations;
} GpLognormalFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failing call on this thread. The pointer
 * stays valid until the next failing call on the same thread; the string is
 * empty if nothing failed yet.
 */
const char *gp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *gp_version(void);

/**
 * Great-circle distance in kilometers on a sphere of radius 6371 km.
 */
double gp_great_circle_km(double lat1, double lon1, double lat2, double lon2);

/**
 * Expected flows under homogeneous mixing for a trip matrix, and the
 * observed/expected ratios.
 *
 * `counts` is row-major `n_regions * n_regions`; the diagonal holds home
 * loops and is ignored by the model. On success `model_out` and `ratio_out`
 * (each `n_regions * n_regions` doubles, row-major, either may be NULL to
 * skip) receive the expectations and ratios, with NaN wherever the quantity
 * is undefined: the diagonal, rows whose origin sees no visitor inflow
 * anywhere else, and ratios over zero expectations.
 *
 * # Safety
 * `counts` must point to `n_regions * n_regions` readable elements and the
 * non-NULL outputs to as many writable ones.
 */
enum GpStatus gp_null_model(const uint64_t *counts,
                            size_t n_regions,
                            double *model_out,
                            double *ratio_out);

/**
 * Ordinary least squares of ys on xs. Needs at least 3 points.
 *
 * # Safety
 * `xs` and `ys` must point to `len` readable doubles, `out` to writable
 * memory.
 */
enum GpStatus gp_fit_linear(const double *xs,
                            const double *ys,
                            size_t len,
                            struct GpLinearFit *out);

/**
 * Fit `y = c * x^(-q)` by least squares on log-log axes. All inputs must be
 * positive.
 *
 * # Safety
 * Same contract as [`gp_fit_linear`].
 */
enum GpStatus gp_fit_power_law(const double *xs,
                               const double *ys,
                               size_t len,
                               struct GpPowerLawFit *out);

/**
 * Fit `y = A * exp(-beta * x)` by least squares of ln y on x. The ys must
 * be positive.
 *
 * # Safety
 * Same contract as [`gp_fit_linear`].
 */
enum GpStatus gp_fit_exponential(const double *xs,
                                 const double *ys,
                                 size_t len,
                                 struct GpExponentialFit *out);

/**
 * Maximum-likelihood fit of a log-normal law left-truncated at
 * `truncation_point` to samples that all lie at or above it.
 *
 * # Safety
 * `samples` must point to `len` readable doubles, `out` to writable memory.
 */
enum GpStatus gp_fit_truncated_lognormal(const double *samples,
                                         size_t len,
                                         double truncation_point,
                                         struct GpLognormalFit *out);

/**
 * Extract up to `n_hotspots` components from a row-major
 * `n_rows * n_cols` grid of activity counts: take the cells at or above the
 * n-th highest value and lower that threshold until the selected cells
 * split into at least n 8-connected components. Components are ranked by
 * activity. Fails when the grid has fewer than `n_hotspots` nonzero cells;
 * flat fields may legitimately return fewer components than asked.
 *
 * # Safety
 * `counts` must point to `n_rows * n_cols` readable elements; `out` must be
 * writable.
 */
enum GpStatus gp_hotspots_extract(const uint64_t *counts,
                                  size_t n_rows,
                                  size_t n_cols,
                                  size_t n_hotspots,
                                  struct GpHotspots **out);

/**
 * Number of components in the set. NULL yields 0.
 *
 * # Safety
 * `h` must be NULL or a live handle from [`gp_hotspots_extract`].
 */
size_t gp_hotspots_len(const struct GpHotspots *h);

/**
 * Total activity of the component at `index` (0 = highest ranked). Out of
 * range yields 0.
 *
 * # Safety
 * Same contract as [`gp_hotspots_len`].
 */
uint64_t gp_hotspot_activity(const struct GpHotspots *h, size_t index);

/**
 * Cell-count level at which the component at `index` was frozen. Out of
 * range yields 0.
 *
 * # Safety
 * Same contract as [`gp_hotspots_len`].
 */
uint64_t gp_hotspot_threshold(const struct GpHotspots *h, size_t index);

/**
 * Number of cells in the component at `index`. Out of range yields 0.
 *
 * # Safety
 * Same contract as [`gp_hotspots_len`].
 */
size_t gp_hotspot_cell_count(const struct GpHotspots *h, size_t index);

/**
 * Copy up to `cap` of the component's (row, col) cells, sorted, into
 * `rows_out`/`cols_out`. Returns the number copied.
 *
 * # Safety
 * `rows_out` and `cols_out` must point to `cap` writable elements.
 */
size_t gp_hotspot_cells(const struct GpHotspots *h,
                        size_t index,
                        size_t *rows_out,
                        size_t *cols_out,
                        size_t cap);

/**
 * Release a hotspot set. NULL is a no-op.
 *
 * # Safety
 * `h` must be NULL or a live handle; the handle is dead afterwards.
 */
void gp_hotspots_free(struct GpHotspots *h);

/**
 * The registry compiled into the library.
 */
struct GpRegistry *gp_registry_bundled(void);

/**
 * Load a registry from a city CSV, with an optional alias CSV
 * (`aliases_path` may be NULL).
 *
 * # Safety
 * The paths must be NUL-terminated strings; `out` must be writable.
 */
enum GpStatus gp_registry_open(const char *cities_path,
                               const char *aliases_path,
                               struct GpRegistry **out);

/**
 * Number of cities in the registry. NULL yields 0.
 *
 * # Safety
 * `reg` must be NULL or a live handle.
 */
size_t gp_registry_len(const struct GpRegistry *reg);

/**
 * Resolve a photo record to a city: the alias table first, then the
 * smallest bounding box containing the point. Writes the city id
 * NUL-terminated into `city_id_out` (empty string when nothing matches);
 * `location_id` may be NULL when only coordinates are known.
 *
 * # Safety
 * `city_id_out` must point to `cap` writable bytes.
 */
enum GpStatus gp_registry_locate(const struct GpRegistry *reg,
                                 const char *location_id,
                                 double lat,
                                 double lon,
                                 char *city_id_out,
                                 size_t cap);

/**
 * Release a registry. NULL is a no-op.
 *
 * # Safety
 * `reg` must be NULL or a live handle; the handle is dead afterwards.
 */
void gp_registry_free(struct GpRegistry *reg);

/**
 * Run the full pipeline. `config_json` uses the same flat schema as the
 * CLI's --config file. On success, when `report_json_out` is not NULL it
 * receives the run report as an owned JSON string; release it with
 * [`gp_string_free`].
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `report_json_out` must be
 * NULL or writable.
 */
enum GpStatus gp_run_pipeline(const char *config_json, char **report_json_out);

/**
 * Release a string produced by this library. NULL is a no-op.
 *
 * # Safety
 * `s` must be NULL or an owned string from this library; it is dead
 * afterwards.
 */
void gp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GEOPHOTO_H */
