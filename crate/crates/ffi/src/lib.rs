//! C interface to the `sdbie` solver.
//!
//! Objects cross the boundary as opaque handles that the caller releases with
//! the matching `*_free` function. Every fallible call returns an
//! [`SdbieStatus`]; the message of the most recent failure on the calling
//! thread is available from [`sdbie_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sdbie::coupled::{
    run_ddm, DdmConfig, DdmOutcome, DdmStatus, InnerConfig, InnerSolver, OuterMode, PhysicalParams,
};
use sdbie::geometry::find_quadrature_points;
use sdbie::kernels::DEFAULT_DELTA_RATIO;
use sdbie::spectral::analytic_mode_coefficient;
use sdbie::{Discretization, Error, LevelSetSurface, Regularization, SurfaceQuadrature, Vec3};

/// Result codes. Zero means success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdbieStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    NotConverged = 4,
    Singular = 5,
    TooLarge = 6,
    Unsupported = 7,
    Io = 8,
    Panic = 9,
}

/// Inner solver or outer iteration choice.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdbieMethod {
    SuccessiveApprox = 0,
    Gmres = 1,
}

/// Outcome of the interface iteration.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdbieConvergence {
    Converged = 0,
    Stagnated = 1,
    MaxIterations = 2,
}

/// Parameters of a coupled solve. Start from [`sdbie_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdbieParams {
    pub mu: f64,
    pub kappa: f64,
    pub gamma: f64,
    pub theta: f64,
    pub u_inf: [f64; 3],
    pub delta_ratio: f64,
    pub inner: SdbieMethod,
    pub outer: SdbieMethod,
    pub inner_tol: f64,
    pub inner_maxit: usize,
    pub outer_tol: f64,
    pub outer_maxit: usize,
}

/// Surface quadrature handle.
pub struct SdbieQuadrature {
    quad: SurfaceQuadrature,
}

/// Result of a coupled solve.
pub struct SdbieSolution {
    outcome: DdmOutcome,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SdbieStatus {
    match e {
        Error::InvalidParameter(_)
        | Error::DegenerateGradient { .. }
        | Error::EmptyQuadrature { .. }
        | Error::LengthMismatch { .. }
        | Error::RegionMismatch { .. }
        | Error::Config(_) => SdbieStatus::InvalidArgument,
        Error::Divergence { .. } | Error::NoConvergence { .. } | Error::InnerFailure { .. } | Error::Breakdown { .. } => {
            SdbieStatus::NotConverged
        }
        Error::Singular(_) | Error::ZeroDenominator(_) => SdbieStatus::Singular,
        Error::TooLarge { .. } => SdbieStatus::TooLarge,
        Error::Unsupported(_) => SdbieStatus::Unsupported,
        Error::Io(_) => SdbieStatus::Io,
    }
}

/// Runs `f`, converting errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), (SdbieStatus, String)>) -> SdbieStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SdbieStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {msg}"));
            SdbieStatus::Panic
        }
    }
}

fn lift<T>(r: sdbie::Result<T>) -> Result<T, (SdbieStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (SdbieStatus, String) {
    (SdbieStatus::NullPointer, format!("{what} is null"))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, (SdbieStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Copies `src` into a caller buffer of `cap` elements.
unsafe fn copy_out(src: &[f64], out: *mut f64, cap: usize) -> Result<(), (SdbieStatus, String)> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if cap < src.len() {
        return Err((SdbieStatus::BufferTooSmall, format!("buffer holds {cap} values, {} needed", src.len())));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

fn flat(v: &[Vec3]) -> Vec<f64> {
    v.iter().flat_map(|x| x.to_array()).collect()
}

unsafe fn build_quadrature(
    surface: sdbie::Result<LevelSetSurface>,
    h: f64,
    out: *mut *mut SdbieQuadrature,
) -> SdbieStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let quad = lift(surface.and_then(|s| find_quadrature_points(&s, h)))?;
        *out = Box::into_raw(Box::new(SdbieQuadrature { quad }));
        Ok(())
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sdbie_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn sdbie_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Quadrature on the sphere of the given radius centred at the origin.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sdbie_quadrature_sphere(radius: f64, h: f64, out: *mut *mut SdbieQuadrature) -> SdbieStatus {
    build_quadrature(LevelSetSurface::sphere(radius), h, out)
}

/// Quadrature on the axis-aligned ellipsoid with semi-axes `a`, `b`, `c`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sdbie_quadrature_ellipsoid(
    a: f64,
    b: f64,
    c: f64,
    h: f64,
    out: *mut *mut SdbieQuadrature,
) -> SdbieStatus {
    build_quadrature(LevelSetSurface::ellipsoid(a, b, c), h, out)
}

/// Quadrature on the four-atom molecular surface.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sdbie_quadrature_molecule(h: f64, out: *mut *mut SdbieQuadrature) -> SdbieStatus {
    build_quadrature(Ok(LevelSetSurface::molecule()), h, out)
}

/// Number of nodes, or 0 for a null handle.
///
/// # Safety
/// `q` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdbie_quadrature_len(q: *const SdbieQuadrature) -> usize {
    q.as_ref().map_or(0, |q| q.quad.len())
}

/// Writes node coordinates as `x0 y0 z0 x1 ...` (3 per node).
///
/// # Safety
/// `q` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdbie_quadrature_nodes(q: *const SdbieQuadrature, out: *mut f64, cap: usize) -> SdbieStatus {
    guard(|| copy_out(&flat(&handle(q, "quadrature")?.quad.nodes), out, cap))
}

/// Writes unit outward normals (3 per node).
///
/// # Safety
/// `q` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdbie_quadrature_normals(q: *const SdbieQuadrature, out: *mut f64, cap: usize) -> SdbieStatus {
    guard(|| copy_out(&flat(&handle(q, "quadrature")?.quad.normals), out, cap))
}

/// Writes quadrature weights (1 per node).
///
/// # Safety
/// `q` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdbie_quadrature_weights(q: *const SdbieQuadrature, out: *mut f64, cap: usize) -> SdbieStatus {
    guard(|| copy_out(&handle(q, "quadrature")?.quad.weights, out, cap))
}

/// Integrates nodal values `f[0..len]` over the surface.
///
/// # Safety
/// `q` must be a live handle, `f` must point to `len` doubles and `out` to one.
#[no_mangle]
pub unsafe extern "C" fn sdbie_quadrature_integrate(
    q: *const SdbieQuadrature,
    f: *const f64,
    len: usize,
    out: *mut f64,
) -> SdbieStatus {
    guard(|| {
        let q = handle(q, "quadrature")?;
        if f.is_null() {
            return Err(null("values"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let vals = std::slice::from_raw_parts(f, len);
        *out = lift(q.quad.integrate(vals))?;
        Ok(())
    })
}

/// Releases a quadrature handle. Null is ignored.
///
/// # Safety
/// `q` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdbie_quadrature_free(q: *mut SdbieQuadrature) {
    if !q.is_null() {
        drop(Box::from_raw(q));
    }
}

/// Closed-form contraction factor of spherical harmonic mode `n` on a
/// sphere of radius `radius`.
///
/// # Safety
/// `out` must point to writable storage for one double.
#[no_mangle]
pub unsafe extern "C" fn sdbie_mode_coefficient(
    n: usize,
    theta: f64,
    kappa: f64,
    radius: f64,
    out: *mut f64,
) -> SdbieStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = lift(analytic_mode_coefficient(n, theta, kappa, radius))?;
        Ok(())
    })
}

/// Default parameters: unit viscosity and permeability, no slip term,
/// relaxation 0.5, unit flow along z, GMRES inner solves and successive
/// approximation outside.
#[no_mangle]
pub extern "C" fn sdbie_params_default() -> SdbieParams {
    let p = PhysicalParams::default();
    let c = DdmConfig::default();
    SdbieParams {
        mu: p.mu,
        kappa: p.kappa,
        gamma: p.gamma,
        theta: p.theta,
        u_inf: p.u_inf.to_array(),
        delta_ratio: DEFAULT_DELTA_RATIO,
        inner: SdbieMethod::Gmres,
        outer: SdbieMethod::SuccessiveApprox,
        inner_tol: c.inner.tol,
        inner_maxit: c.inner.maxit,
        outer_tol: c.outer_tol,
        outer_maxit: c.outer_maxit,
    }
}

fn ddm_config(p: &SdbieParams) -> DdmConfig {
    DdmConfig {
        params: PhysicalParams {
            mu: p.mu,
            kappa: p.kappa,
            gamma: p.gamma,
            u_inf: Vec3::from(p.u_inf),
            theta: p.theta,
        },
        inner: InnerConfig {
            solver: match p.inner {
                SdbieMethod::SuccessiveApprox => InnerSolver::SuccessiveApprox,
                SdbieMethod::Gmres => InnerSolver::Gmres,
            },
            tol: p.inner_tol,
            maxit: p.inner_maxit,
        },
        outer: match p.outer {
            SdbieMethod::SuccessiveApprox => OuterMode::SuccessiveApprox,
            SdbieMethod::Gmres => OuterMode::Gmres,
        },
        outer_tol: p.outer_tol,
        outer_maxit: p.outer_maxit,
        warm_start: true,
    }
}

/// Solves the coupled problem on the surface of `q`. A solution handle is
/// returned even when the iteration stops without converging; inspect it
/// with [`sdbie_solution_convergence`].
///
/// # Safety
/// `q` must be a live handle, `params` must point to valid parameters and
/// `out` to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn sdbie_solve(
    q: *const SdbieQuadrature,
    params: *const SdbieParams,
    out: *mut *mut SdbieSolution,
) -> SdbieStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let q = handle(q, "quadrature")?;
        let p = handle(params, "params")?;
        let cfg = ddm_config(p);
        lift(cfg.validate())?;
        let reg = lift(Regularization::from_grid(q.quad.h, p.delta_ratio))?;
        let disc = Discretization::new(q.quad.clone(), reg);
        let outcome = lift(run_ddm(&disc, &cfg, None, |_| Ok(())))?;
        *out = Box::into_raw(Box::new(SdbieSolution { outcome }));
        Ok(())
    })
}

/// Outer iterations performed.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdbie_solution_iterations(s: *const SdbieSolution) -> usize {
    s.as_ref().map_or(0, |s| s.outcome.iterations)
}

/// How the iteration ended.
///
/// # Safety
/// `s` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdbie_solution_convergence(s: *const SdbieSolution, out: *mut SdbieConvergence) -> SdbieStatus {
    guard(|| {
        let s = handle(s, "solution")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = match s.outcome.status {
            DdmStatus::Converged => SdbieConvergence::Converged,
            DdmStatus::Stagnated => SdbieConvergence::Stagnated,
            DdmStatus::MaxIterations => SdbieConvergence::MaxIterations,
        };
        Ok(())
    })
}

/// Final relative interface residual.
///
/// # Safety
/// `s` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdbie_solution_residual(s: *const SdbieSolution) -> f64 {
    s.as_ref().map_or(f64::NAN, |s| s.outcome.final_residual)
}

/// Hydrodynamic force on the body (3 doubles).
///
/// # Safety
/// `s` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdbie_solution_drag(s: *const SdbieSolution, out: *mut f64, cap: usize) -> SdbieStatus {
    guard(|| copy_out(&handle(s, "solution")?.outcome.drag.to_array(), out, cap))
}

/// Darcy pressure on the surface (1 per node).
///
/// # Safety
/// `s` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdbie_solution_pressure(s: *const SdbieSolution, out: *mut f64, cap: usize) -> SdbieStatus {
    guard(|| copy_out(&handle(s, "solution")?.outcome.state.p_d, out, cap))
}

/// Normal velocity on the interface (1 per node).
///
/// # Safety
/// `s` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdbie_solution_flux(s: *const SdbieSolution, out: *mut f64, cap: usize) -> SdbieStatus {
    guard(|| copy_out(&handle(s, "solution")?.outcome.state.q, out, cap))
}

/// Stokes velocity on the surface (3 per node).
///
/// # Safety
/// `s` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdbie_solution_velocity(s: *const SdbieSolution, out: *mut f64, cap: usize) -> SdbieStatus {
    guard(|| copy_out(&handle(s, "solution")?.outcome.state.u_s, out, cap))
}

/// Stokes traction on the surface (3 per node).
///
/// # Safety
/// `s` must be a live handle and `out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn sdbie_solution_traction(s: *const SdbieSolution, out: *mut f64, cap: usize) -> SdbieStatus {
    guard(|| copy_out(&handle(s, "solution")?.outcome.state.f_s, out, cap))
}

/// Releases a solution handle. Null is ignored.
///
/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn sdbie_solution_free(s: *mut SdbieSolution) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_mapping() {
        assert_eq!(status_of(&Error::TooLarge { order: 1, limit: 0 }), SdbieStatus::TooLarge);
        assert_eq!(status_of(&Error::Config("x".into())), SdbieStatus::InvalidArgument);
        assert_eq!(status_of(&Error::Singular("lu")), SdbieStatus::Singular);
    }

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, SdbieStatus::Panic);
        let msg = unsafe { std::ffi::CStr::from_ptr(sdbie_last_error()) };
        assert!(msg.to_str().unwrap().contains("boom"));
    }
}
