/* C interface for the varlap grid calculus library.
 *
 * Conventions: every function returns a status code (VXP_OK = 0); outputs go
 * through pointers. Handles are opaque and must be released with the
 * matching vxp_*_free. On failure, vxp_last_error() retrieves a thread-local
 * UTF-8 message describing the cause.
 */

#ifndef VARLAP_H
#define VARLAP_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

enum {
  VXP_OK = 0,      /* success */
  VXP_FAILED = 1,  /* a checked property failed */
  VXP_INVALID = 2, /* invalid configuration or arguments */
  VXP_NUMERIC = 3, /* numerical failure inside the library */
  VXP_NULL = 4,    /* a required pointer was null */
  VXP_PANIC = 5    /* a panic was caught at the boundary */
};

/* Opaque handles. */
typedef struct VxpGrid VxpGrid;
typedef struct VxpField VxpField;
typedef struct VxpExponent VxpExponent;

/* Copies the last error message (NUL-terminated, truncated to len bytes)
 * into buf; returns the full message length excluding the NUL. buf may be
 * null to query the length. */
size_t vxp_last_error(char *buf, size_t len);

/* Rectangular grid over dim axes (dim in 1..3). bounds holds 2*dim values
 * (lo, hi per axis); n_cells holds dim per-axis cell counts (>= 4). */
int32_t vxp_grid_new(size_t dim, const double *bounds, const size_t *n_cells,
                     VxpGrid **out);
void vxp_grid_free(VxpGrid *grid);
int32_t vxp_grid_node_count(const VxpGrid *grid, size_t *out);

/* Node-sampled scalar fields, row-major with the last axis fastest. */
int32_t vxp_field_from_values(const VxpGrid *grid, const double *values,
                              size_t len, VxpField **out);
int32_t vxp_field_constant(const VxpGrid *grid, double value, VxpField **out);
int32_t vxp_field_len(const VxpField *field, size_t *out);
int32_t vxp_field_values(const VxpField *field, double *buf, size_t len);
void vxp_field_free(VxpField *field);

/* Exponent expression: constants, x1..x3, + - * /, sin, cos, exp. Bounds are
 * certified on the grid; p must stay above 1 everywhere. */
int32_t vxp_exponent_parse(const char *src, const VxpGrid *grid,
                           VxpExponent **out);
void vxp_exponent_free(VxpExponent *exponent);
int32_t vxp_exponent_bounds(const VxpExponent *exponent, double *p_minus,
                            double *p_plus, double *kappa);

/* Variable-exponent Lebesgue machinery. */
int32_t vxp_modular(const VxpField *field, const VxpExponent *exponent,
                    double *out);
int32_t vxp_luxemburg_norm(const VxpField *field, const VxpExponent *exponent,
                           double tol, double *out);

/* Infimal convolution; the result lives on the effective subdomain and
 * out_r_eps (optional) receives the crop radius. */
int32_t vxp_inf_convolve_degenerate(const VxpField *field, double eps,
                                    VxpField **out, double *out_r_eps);
int32_t vxp_inf_convolve_singular(const VxpField *field, double eps, double q,
                                  VxpField **out, double *out_r_eps);

/* Pointwise operator evaluation; components (optional) receives the trace,
 * gradient-direction and log terms. */
int32_t vxp_nondiv_eval(const VxpField *field, const VxpExponent *exponent,
                        size_t node, double *out_total, double *components);

/* Discrete Dirichlet energy. */
int32_t vxp_energy(const VxpField *field, const VxpExponent *exponent,
                   double *out);

/* Energy minimization with the boundary values of `boundary`; out receives
 * the solution field. out_iterations, out_residual, out_converged are
 * optional. */
int32_t vxp_solve_dirichlet(const VxpExponent *exponent,
                            const VxpField *boundary, size_t max_iters,
                            double tol, VxpField **out, size_t *out_iterations,
                            double *out_residual, int32_t *out_converged);

/* Supersolution classifiers; out_passed / out_margin are optional. */
int32_t vxp_weak_test(const VxpField *field, const VxpExponent *exponent,
                      size_t n_tests, double tol, int32_t *out_passed,
                      double *out_margin);
int32_t vxp_viscosity_test(const VxpField *field, const VxpExponent *exponent,
                           size_t max_nodes, uint32_t curvature_levels,
                           uint64_t seed, double tol, int32_t *out_passed,
                           double *out_margin);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* VARLAP_H */
