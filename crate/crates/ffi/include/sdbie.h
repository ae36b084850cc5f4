#ifndef SDBIE_H
#define SDBIE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes. Zero means success.
 */
typedef enum SdbieStatus {
  SDBIE_STATUS_OK = 0,
  SDBIE_STATUS_NULL_POINTER = 1,
  SDBIE_STATUS_INVALID_ARGUMENT = 2,
  SDBIE_STATUS_BUFFER_TOO_SMALL = 3,
  SDBIE_STATUS_NOT_CONVERGED = 4,
  SDBIE_STATUS_SINGULAR = 5,
  SDBIE_STATUS_TOO_LARGE = 6,
  SDBIE_STATUS_UNSUPPORTED = 7,
  SDBIE_STATUS_IO = 8,
  SDBIE_STATUS_PANIC = 9,
} SdbieStatus;

/**
 * Inner solver or outer iteration choice.
 */
typedef enum SdbieMethod {
  SDBIE_METHOD_SUCCESSIVE_APPROX = 0,
  SDBIE_METHOD_GMRES = 1,
} SdbieMethod;

/**
 * Outcome of the interface iteration.
 */
typedef enum SdbieConvergence {
  SDBIE_CONVERGENCE_CONVERGED = 0,
  SDBIE_CONVERGENCE_STAGNATED = 1,
  SDBIE_CONVERGENCE_MAX_ITERATIONS = 2,
} SdbieConvergence;

/**
 * Surface quadrature handle.
 */
typedef struct SdbieQuadrature SdbieQuadrature;

/**
 * Result of a coupled solve.
 */
typedef struct SdbieSolution SdbieSolution;

/**
 * Parameters of a coupled solve. Start from [`sdbie_params_default`].
 */
typedef struct SdbieParams {
  double mu;
  double kappa;
  double gamma;
  double theta;
  double u_inf[3];
  double delta_ratio;
  enum SdbieMethod inner;
  enum SdbieMethod outer;
  double inner_tol;
  size_t inner_maxit;
  double outer_tol;
  size_t outer_maxit;
} SdbieParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *sdbie_version(void);

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into the library from the same thread.
 */
const char *sdbie_last_error(void);

/**
 * Quadrature on the sphere of the given radius centred at the origin.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SdbieStatus sdbie_quadrature_sphere(double radius, double h, struct SdbieQuadrature **out);

/**
 * Quadrature on the axis-aligned ellipsoid with semi-axes `a`, `b`, `c`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SdbieStatus sdbie_quadrature_ellipsoid(double a,
                                            double b,
                                            double c,
                                            double h,
                                            struct SdbieQuadrature **out);

/**
 * Quadrature on the four-atom molecular surface.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SdbieStatus sdbie_quadrature_molecule(double h, struct SdbieQuadrature **out);

/**
 * Number of nodes, or 0 for a null handle.
 *
 * # Safety
 * `q` must be null or a live handle.
 */
size_t sdbie_quadrature_len(const struct SdbieQuadrature *q);

/**
 * Writes node coordinates as `x0 y0 z0 x1 ...` (3 per node).
 *
 * # Safety
 * `q` must be a live handle and `out` must hold `cap` doubles.
 */
enum SdbieStatus sdbie_quadrature_nodes(const struct SdbieQuadrature *q, double *out, size_t cap);

/**
 * Writes unit outward normals (3 per node).
 *
 * # Safety
 * `q` must be a live handle and `out` must hold `cap` doubles.
 */
enum SdbieStatus sdbie_quadrature_normals(const struct SdbieQuadrature *q, double *out, size_t cap);

/**
 * Writes quadrature weights (1 per node).
 *
 * # Safety
 * `q` must be a live handle and `out` must hold `cap` doubles.
 */
enum SdbieStatus sdbie_quadrature_weights(const struct SdbieQuadrature *q, double *out, size_t cap);

/**
 * Integrates nodal values `f[0..len]` over the surface.
 *
 * # Safety
 * `q` must be a live handle, `f` must point to `len` doubles and `out` to one.
 */
enum SdbieStatus sdbie_quadrature_integrate(const struct SdbieQuadrature *q,
                                            const double *f,
                                            size_t len,
                                            double *out);

/**
 * Releases a quadrature handle. Null is ignored.
 *
 * # Safety
 * `q` must be null or a handle not yet freed.
 */
void sdbie_quadrature_free(struct SdbieQuadrature *q);

/**
 * Closed-form contraction factor of spherical harmonic mode `n` on a
 * sphere of radius `radius`.
 *
 * # Safety
 * `out` must point to writable storage for one double.
 */
enum SdbieStatus sdbie_mode_coefficient(size_t n,
                                        double theta,
                                        double kappa,
                                        double radius,
                                        double *out);

/**
 * Default parameters: unit viscosity and permeability, no slip term,
 * relaxation 0.5, unit flow along z, GMRES inner solves and successive
 * approximation outside.
 */
struct SdbieParams sdbie_params_default(void);

/**
 * Solves the coupled problem on the surface of `q`. A solution handle is
 * returned even when the iteration stops without converging; inspect it
 * with [`sdbie_solution_convergence`].
 *
 * # Safety
 * `q` must be a live handle, `params` must point to valid parameters and
 * `out` to writable storage for one handle.
 */
enum SdbieStatus sdbie_solve(const struct SdbieQuadrature *q,
                             const struct SdbieParams *params,
                             struct SdbieSolution **out);

/**
 * Outer iterations performed.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
size_t sdbie_solution_iterations(const struct SdbieSolution *s);

/**
 * How the iteration ended.
 *
 * # Safety
 * `s` must be a live handle.
 */
enum SdbieStatus sdbie_solution_convergence(const struct SdbieSolution *s,
                                            enum SdbieConvergence *out);

/**
 * Final relative interface residual.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
double sdbie_solution_residual(const struct SdbieSolution *s);

/**
 * Hydrodynamic force on the body (3 doubles).
 *
 * # Safety
 * `s` must be a live handle and `out` must hold `cap` doubles.
 */
enum SdbieStatus sdbie_solution_drag(const struct SdbieSolution *s, double *out, size_t cap);

/**
 * Darcy pressure on the surface (1 per node).
 *
 * # Safety
 * `s` must be a live handle and `out` must hold `cap` doubles.
 */
enum SdbieStatus sdbie_solution_pressure(const struct SdbieSolution *s, double *out, size_t cap);

/**
 * Normal velocity on the interface (1 per node).
 *
 * # Safety
 * `s` must be a live handle and `out` must hold `cap` doubles.
 */
enum SdbieStatus sdbie_solution_flux(const struct SdbieSolution *s, double *out, size_t cap);

/**
 * Stokes velocity on the surface (3 per node).
 *
 * # Safety
 * `s` must be a live handle and `out` must hold `cap` doubles.
 */
enum SdbieStatus sdbie_solution_velocity(const struct SdbieSolution *s, double *out, size_t cap);

/**
 * Stokes traction on the surface (3 per node).
 *
 * # Safety
 * `s` must be a live handle and `out` must hold `cap` doubles.
 */
enum SdbieStatus sdbie_solution_traction(const struct SdbieSolution *s, double *out, size_t cap);

/**
 * Releases a solution handle. Null is ignored.
 *
 * # Safety
 * `s` must be null or a handle not yet freed.
 */
void sdbie_solution_free(struct SdbieSolution *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDBIE_H */
