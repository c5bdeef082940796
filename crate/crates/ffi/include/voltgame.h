#ifndef VOLTGAME_H
#define VOLTGAME_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

#define VG_OK 0

#define VG_ERR_NULL 1

#define VG_ERR_UTF8 2

#define VG_ERR_PARSE 3

#define VG_ERR_TOPOLOGY 4

#define VG_ERR_DIMENSION 5

#define VG_ERR_NUMERIC 6

#define VG_ERR_CONTROL 7

#define VG_ERR_PANIC 8

#define VG_LAW_TAKING 0

#define VG_LAW_ANTICIPATING 1

#define VG_VERDICT_CONVERGED 0

#define VG_VERDICT_MAX_ITER 1

#define VG_VERDICT_DIVERGED 2

/*
 Opaque network handle.
 */
typedef struct VgNetwork VgNetwork;

typedef struct VgPosaReport {
  /*
   Number of actuator buses.
   */
  size_t n;
  double posa_max;
  double upper;
  double refined_upper;
  double lower;
  double lower_clamped;
  double gap_bound;
  double lambda_min_x;
  double d;
  double y;
} VgPosaReport;

typedef struct VgConditionReport {
  double sigma_taking;
  double sigma_anticipating;
  double sufficient_lhs;
  bool taking_contracts;
  bool anticipating_contracts;
  bool sufficient_holds;
} VgConditionReport;

typedef struct VgSimResult {
  /*
   One of the `VG_VERDICT_*` codes.
   */
  int32_t verdict;
  /*
   Steps taken.
   */
  size_t iterations;
} VgSimResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after success.
 The pointer stays valid until the next call on the same thread.
 */
const char *vg_last_error_message(void);

/*
 Parses network JSON. On success `*out` owns a new handle.

 # Safety
 `json` must be a NUL-terminated string and `out` a valid pointer.
 */
int32_t vg_network_from_json(const char *json, struct VgNetwork **out);

/*
 Releases a handle. Null is ignored.

 # Safety
 `net` must come from `vg_network_from_json` and not be used afterwards.
 */
void vg_network_free(struct VgNetwork *net);

/*
 Number of non-root buses.

 # Safety
 `net` must be a live handle and `out` a valid pointer.
 */
int32_t vg_network_node_count(const struct VgNetwork *net, size_t *out);

/*
 Number of actuator buses.

 # Safety
 `net` must be a live handle and `out` a valid pointer.
 */
int32_t vg_network_actuator_count(const struct VgNetwork *net, size_t *out);

/*
 Writes the n×n reactance sensitivity matrix `X` row-major into `buf`.

 # Safety
 `buf` must hold `len` doubles.
 */
int32_t vg_reactance_matrix(const struct VgNetwork *net, double *buf, size_t len);

/*
 Writes `X⁻¹` row-major into `buf`, built from the tree structure.

 # Safety
 `buf` must hold `len` doubles.
 */
int32_t vg_reactance_inverse(const struct VgNetwork *net, double *buf, size_t len);

/*
 PoSA report over the actuator buses with quadratic cost coefficients
 `y` (one per actuator). Pass `y = NULL` to use `1/alpha` from the
 network's control block, which must then have zero deadbands.

 # Safety
 `y` must be null or hold `len` doubles; `out` must be valid.
 */
int32_t vg_posa_report(const struct VgNetwork *net,
                       const double *y,
                       size_t len,
                       struct VgPosaReport *out);

/*
 Contraction conditions for droop slopes `alphas`, one per actuator.

 # Safety
 `alphas` must hold `len` doubles; `out` must be valid.
 */
int32_t vg_condition_report(const struct VgNetwork *net,
                            const double *alphas,
                            size_t len,
                            struct VgConditionReport *out);

/*
 Runs the closed loop from `q = 0` and writes the final reactive powers
 into `q_out` (one per actuator). With `alpha > 0` every actuator uses a
 droop law `(alpha, delta)` boxed by its bus limits; otherwise the
 network's control block is used. `ac` observes voltages from the
 branch-flow solution instead of the linear model.

 # Safety
 `q_out` must hold `len` doubles; `out` must be valid.
 */
int32_t vg_simulate(const struct VgNetwork *net,
                    int32_t law,
                    double alpha,
                    double delta,
                    bool ac,
                    size_t max_iter,
                    double tol,
                    double *q_out,
                    size_t len,
                    struct VgSimResult *out);

/*
 Library version as a static NUL-terminated string.
 */
const char *vg_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOLTGAME_H */
