//! Dirichlet-Neumann coupling of the interior Darcy problem and the exterior
//! Stokes problem through the interface normal flux q = u·n, with n the
//! outward normal of the body.
//!
//! One sweep maps q to a Darcy Neumann solve for the pressure, the traction
//! that pressure exerts on the fluid, an exterior Stokes solve, and the
//! relaxed update q ← (1-θ)q + θ u_S·n.

use std::cell::Cell;
use std::time::Instant;

use crate::benchmarks::ExactSolution;
use crate::error::{check_len, check_positive, Error, Result};
use crate::potentials::Discretization;
use crate::solvers::{gmres_from, gmres_monitored, norm, successive_approx, Control, SolveReport};
use crate::vec3::{get3, set3, Vec3};

/// Consecutive outer residuals closer than this flag a stagnated run.
pub const STAGNATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    pub mu: f64,
    pub kappa: f64,
    /// Dimensionless slip coefficient of the interface law.
    pub gamma: f64,
    pub u_inf: Vec3,
    /// Relaxation parameter in (0, 1).
    pub theta: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self { mu: 1.0, kappa: 1.0, gamma: 0.0, u_inf: Vec3::new(0.0, 0.0, 1.0), theta: 0.5 }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("viscosity", self.mu)?;
        check_positive("permeability", self.kappa)?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("slip coefficient must be nonnegative, got {}", self.gamma)));
        }
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::InvalidParameter(format!("relaxation must lie in (0, 1), got {}", self.theta)));
        }
        if !self.u_inf.is_finite() {
            return Err(Error::InvalidParameter("background velocity must be finite".into()));
        }
        Ok(())
    }

    /// Relaxation proportional to the permeability, as used for small κ.
    pub fn with_theta_multiplier(mut self, c: f64) -> Self {
        self.theta = c * self.kappa;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerSolver {
    SuccessiveApprox,
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerConfig {
    pub solver: InnerSolver,
    pub tol: f64,
    pub maxit: usize,
}

impl Default for InnerConfig {
    fn default() -> Self {
        Self { solver: InnerSolver::Gmres, tol: 1e-9, maxit: 200 }
    }
}

impl InnerConfig {
    pub fn new(solver: InnerSolver, tol: f64) -> Self {
        Self { solver, tol, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OuterMode {
    SuccessiveApprox,
    Gmres,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdmConfig {
    pub params: PhysicalParams,
    pub inner: InnerConfig,
    pub outer: OuterMode,
    pub outer_tol: f64,
    pub outer_maxit: usize,
    /// Start inner successive approximation from the previous outer
    /// iterate. GMRES inner solves always start from zero so that their
    /// counts measure the conditioning of each local problem.
    pub warm_start: bool,
}

impl Default for DdmConfig {
    fn default() -> Self {
        Self {
            params: PhysicalParams::default(),
            inner: InnerConfig::default(),
            outer: OuterMode::SuccessiveApprox,
            outer_tol: 1e-9,
            outer_maxit: 100,
            warm_start: true,
        }
    }
}

impl DdmConfig {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        check_positive("inner tolerance", self.inner.tol)?;
        check_positive("outer tolerance", self.outer_tol)?;
        if self.inner.maxit == 0 || self.outer_maxit == 0 {
            return Err(Error::InvalidParameter("iteration caps must be positive".into()));
        }
        Ok(())
    }
}

/// Interface unknowns. Vectors are interleaved xyz per node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InterfaceState {
    pub q: Vec<f64>,
    pub p_d: Vec<f64>,
    pub u_s: Vec<f64>,
    pub f_s: Vec<f64>,
}

impl InterfaceState {
    pub fn zeros(n: usize) -> Self {
        Self { q: vec![0.0; n], p_d: vec![0.0; n], u_s: vec![0.0; 3 * n], f_s: vec![0.0; 3 * n] }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub residual: f64,
    pub darcy_inner: usize,
    pub stokes_inner: usize,
    pub drag_err: Option<f64>,
    pub p_err: Option<f64>,
    pub u_err: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationHistory {
    pub records: Vec<IterationRecord>,
}

impl IterationHistory {
    pub fn residuals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.residual).collect()
    }

    /// Inner counts at the first outer iteration with nonzero interface
    /// data and at the last one. The first sweep starts from q = 0 and is
    /// skipped when later sweeps exist.
    pub fn inner_range(&self) -> Option<((usize, usize), (usize, usize))> {
        let a = self.records.get(1).or(self.records.first())?;
        let b = self.records.last()?;
        Some(((a.darcy_inner, b.darcy_inner), (a.stokes_inner, b.stokes_inner)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdmStatus {
    Converged,
    Stagnated,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct DdmOutcome {
    pub state: InterfaceState,
    pub history: IterationHistory,
    pub status: DdmStatus,
    pub iterations: usize,
    /// Force exerted by the fluid on the body.
    pub drag: Vec3,
    pub final_residual: f64,
    pub darcy_seconds: f64,
    pub stokes_seconds: f64,
}

/// Outward normals of the two subdomains: Darcy inside the body, Stokes
/// outside.
pub fn normal_orientation(disc: &Discretization) -> (Vec<Vec3>, Vec<Vec3>) {
    let n_d = disc.quad.normals.clone();
    let n_s = n_d.iter().map(|n| -*n).collect();
    (n_d, n_s)
}

fn weighted_mean(disc: &Discretization, v: &[f64]) -> f64 {
    let w = &disc.quad.weights;
    let s: f64 = v.iter().zip(w).map(|(a, b)| a * b).sum();
    s / disc.quad.total_weight()
}

fn remove_mean(disc: &Discretization, v: &mut [f64]) {
    let m = weighted_mean(disc, v);
    v.iter_mut().for_each(|x| *x -= m);
}

/// Neumann data for the Darcy solve, (μ/κ)·L q after projecting q onto
/// zero weighted mean.
pub fn darcy_rhs(disc: &Discretization, q: &[f64], params: &PhysicalParams) -> Result<Vec<f64>> {
    check_len(disc.len(), q.len())?;
    let mut qp = q.to_vec();
    remove_mean(disc, &mut qp);
    let s = params.mu / params.kappa;
    Ok(disc.laplace_single(&qp)?.into_iter().map(|v| s * v).collect())
}

fn finish(rep: SolveReport, solver: &'static str) -> Result<SolveReport> {
    if rep.converged {
        Ok(rep)
    } else {
        Err(Error::NoConvergence { solver, iterations: rep.iterations, residual: rep.residual })
    }
}

/// Solves ½p = Hp + b for a zero-mean pressure. The constant null mode is
/// removed from the iteration.
pub fn solve_darcy(
    disc: &Discretization,
    b: &[f64],
    inner: &InnerConfig,
    x0: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    check_len(disc.len(), b.len())?;
    let rep = match inner.solver {
        InnerSolver::SuccessiveApprox => {
            let start = x0.map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; b.len()]);
            let apply = |p: &[f64], out: &mut [f64]| {
                let hp = disc.laplace_double(p)?;
                let m = weighted_mean(disc, p);
                for ((o, h), pi) in out.iter_mut().zip(hp).zip(p) {
                    *o = 0.5 * pi + h - m;
                }
                Ok(())
            };
            finish(successive_approx(apply, b, &start, inner.tol, inner.maxit)?, "Darcy successive approximation")?
        }
        InnerSolver::Gmres => {
            let apply = |p: &[f64], out: &mut [f64]| {
                let hp = disc.laplace_double(p)?;
                let m = weighted_mean(disc, p);
                for ((o, h), pi) in out.iter_mut().zip(hp).zip(p) {
                    *o = 0.5 * pi - h + m;
                }
                Ok(())
            };
            finish(gmres_from(apply, b, x0, inner.tol, inner.maxit)?, "Darcy GMRES")?
        }
    };
    let mut p = rep.solution.clone();
    remove_mean(disc, &mut p);
    Ok((p, rep))
}

/// Fluid traction σ·n_S on the interface from the Darcy pressure and the
/// tangential part of the previous exterior velocity.
pub fn assemble_traction(p_d: &[f64], u_prev: &[f64], n_s: &[Vec3], params: &PhysicalParams) -> Result<Vec<f64>> {
    let n = n_s.len();
    check_len(n, p_d.len())?;
    check_len(3 * n, u_prev.len())?;
    let slip = if params.gamma > 0.0 { params.gamma / params.kappa.sqrt() } else { 0.0 };
    let mut f = vec![0.0; 3 * n];
    for i in 0..n {
        let ni = n_s[i];
        let mut fi = ni * (-p_d[i]);
        if slip != 0.0 {
            let u = get3(u_prev, i);
            fi -= (u - ni * u.dot(ni)) * slip;
        }
        set3(&mut f, i, fi);
    }
    Ok(f)
}

/// Stokes right-hand side u∞ + (1/μ)·M f_S.
pub fn stokes_rhs(disc: &Discretization, f_s: &[f64], params: &PhysicalParams) -> Result<Vec<f64>> {
    let mf = disc.stokes_single(f_s)?;
    let u = params.u_inf.to_array();
    Ok(mf.iter().enumerate().map(|(k, v)| v / params.mu + u[k % 3]).collect())
}

/// Weighted net flux Σ w u·n divided by the surface area.
fn mean_flux(disc: &Discretization, u: &[f64]) -> f64 {
    let q = &disc.quad;
    let s: f64 = (0..q.len()).map(|i| q.weights[i] * get3(u, i).dot(q.normals[i])).sum();
    s / q.total_weight()
}

/// Solves ½u = Ku + b on the interface for a velocity with zero net flux.
///
/// The normal field spans the null space of ½I - K, so that mode is
/// removed from the iteration in the same way as the Darcy constant mode.
pub fn solve_stokes(
    disc: &Discretization,
    b: &[f64],
    inner: &InnerConfig,
    x0: Option<&[f64]>,
) -> Result<(Vec<f64>, SolveReport)> {
    check_len(3 * disc.len(), b.len())?;
    let rep = match inner.solver {
        InnerSolver::SuccessiveApprox => {
            let start = x0.map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; b.len()]);
            let apply = |u: &[f64], out: &mut [f64]| {
                let ku = disc.stokes_double(u)?;
                let m = mean_flux(disc, u);
                for (i, ((o, k), ui)) in out.iter_mut().zip(ku).zip(u).enumerate() {
                    *o = 0.5 * ui + k - m * disc.quad.normals[i / 3][i % 3];
                }
                Ok(())
            };
            finish(successive_approx(apply, b, &start, inner.tol, inner.maxit)?, "Stokes successive approximation")?
        }
        InnerSolver::Gmres => {
            let apply = |u: &[f64], out: &mut [f64]| {
                let ku = disc.stokes_double(u)?;
                let m = mean_flux(disc, u);
                for (i, ((o, k), ui)) in out.iter_mut().zip(ku).zip(u).enumerate() {
                    *o = 0.5 * ui - k + m * disc.quad.normals[i / 3][i % 3];
                }
                Ok(())
            };
            finish(gmres_from(apply, b, x0, inner.tol, inner.maxit)?, "Stokes GMRES")?
        }
    };
    let u = rep.solution.clone();
    Ok((u, rep))
}

/// Relative change ‖q_new - q_old‖ / ‖q_new‖ over the nodes.
pub fn ddm_residual(q_new: &[f64], q_old: &[f64]) -> Result<f64> {
    check_len(q_new.len(), q_old.len())?;
    let num: f64 = q_new.iter().zip(q_old).map(|(a, b)| (a - b) * (a - b)).sum();
    let den: f64 = q_new.iter().map(|a| a * a).sum();
    if den == 0.0 {
        return Err(Error::ZeroDenominator("interface residual"));
    }
    Ok((num / den).sqrt())
}

/// Normal component u·n of an interleaved vector field.
pub fn normal_flux(disc: &Discretization, u: &[f64]) -> Result<Vec<f64>> {
    check_len(3 * disc.len(), u.len())?;
    Ok(disc.quad.normals.iter().enumerate().map(|(i, n)| get3(u, i).dot(*n)).collect())
}

/// Force on the body, the negative integral of the fluid traction.
pub fn body_force(disc: &Discretization, f_s: &[f64]) -> Result<Vec3> {
    Ok(-crate::benchmarks::drag(&disc.quad, f_s)?)
}

struct Sweep {
    q_new: Vec<f64>,
    p_d: Vec<f64>,
    f_s: Vec<f64>,
    u_s: Vec<f64>,
    darcy: usize,
    stokes: usize,
    darcy_seconds: f64,
    stokes_seconds: f64,
}

#[derive(Clone, Copy)]
enum SweepStage {
    Darcy,
    Stokes,
}

fn sweep(
    disc: &Discretization,
    params: &PhysicalParams,
    inner: &InnerConfig,
    q: &[f64],
    prev: Option<&InterfaceState>,
    warm: bool,
) -> std::result::Result<Sweep, (SweepStage, Error)> {
    let n_s: Vec<Vec3> = disc.quad.normals.iter().map(|n| -*n).collect();
    let warm = warm && inner.solver == InnerSolver::SuccessiveApprox;
    let t0 = Instant::now();
    let darcy = (|| {
        let b_d = darcy_rhs(disc, q, params)?;
        solve_darcy(disc, &b_d, inner, prev.filter(|_| warm).map(|s| s.p_d.as_slice()))
    })()
    .map_err(|e| (SweepStage::Darcy, e))?;
    let t1 = Instant::now();
    let zeros;
    let u_prev = match prev {
        Some(s) => s.u_s.as_slice(),
        None => {
            zeros = vec![0.0; 3 * disc.len()];
            zeros.as_slice()
        }
    };
    let (p_d, darcy_rep) = darcy;
    let stokes = (|| {
        let f_s = assemble_traction(&p_d, u_prev, &n_s, params)?;
        let b_s = stokes_rhs(disc, &f_s, params)?;
        let (u, rep) = solve_stokes(disc, &b_s, inner, prev.filter(|_| warm).map(|s| s.u_s.as_slice()))?;
        Ok((f_s, u, rep))
    })()
    .map_err(|e| (SweepStage::Stokes, e))?;
    let t2 = Instant::now();
    let (f_s, u_s, stokes_rep) = stokes;
    let un = normal_flux(disc, &u_s).map_err(|e| (SweepStage::Stokes, e))?;
    let th = params.theta;
    let q_new = q.iter().zip(&un).map(|(a, b)| (1.0 - th) * a + th * b).collect();
    Ok(Sweep {
        q_new,
        p_d,
        f_s,
        u_s,
        darcy: darcy_rep.iterations,
        stokes: stokes_rep.iterations,
        darcy_seconds: (t1 - t0).as_secs_f64(),
        stokes_seconds: (t2 - t1).as_secs_f64(),
    })
}

/// Nodal errors of a state against an exact solution: (drag, p, u).
pub fn state_errors(disc: &Discretization, state: &InterfaceState, exact: &dyn ExactSolution) -> Result<(f64, f64, f64)> {
    let nodes = &disc.quad.nodes;
    let pe: Vec<f64> = nodes.iter().map(|x| exact.darcy_pressure(*x)).collect();
    let mut ue = vec![0.0; 3 * nodes.len()];
    for (i, x) in nodes.iter().enumerate() {
        set3(&mut ue, i, exact.stokes_velocity(*x));
    }
    let d = body_force(disc, &state.f_s)?.z;
    let de = exact.drag();
    Ok((
        ((d - de) / de).abs(),
        crate::benchmarks::l2_error_scalar(&state.p_d, &pe)?,
        crate::benchmarks::l2_error_vector(&state.u_s, &ue)?,
    ))
}

fn record(
    disc: &Discretization,
    iter: usize,
    residual: f64,
    darcy_inner: usize,
    stokes_inner: usize,
    state: Option<&InterfaceState>,
    exact: Option<&dyn ExactSolution>,
) -> Result<IterationRecord> {
    let mut r = IterationRecord { iter, residual, darcy_inner, stokes_inner, drag_err: None, p_err: None, u_err: None };
    if let (Some(s), Some(ex)) = (state, exact) {
        let (d, p, u) = state_errors(disc, s, ex)?;
        r.drag_err = Some(d);
        r.p_err = Some(p);
        r.u_err = Some(u);
    }
    Ok(r)
}

fn inner_failure(stage: SweepStage, iteration: usize, history: &IterationHistory, e: Error) -> Error {
    let stage = match stage {
        SweepStage::Darcy => "Darcy",
        SweepStage::Stokes => "Stokes",
    };
    Error::InnerFailure { stage, iteration, history: Box::new(history.clone()), source: Box::new(e) }
}

/// Relaxed Dirichlet-Neumann iteration from q = 0, u_S = 0.
///
/// `observer` sees every record as soon as it is formed, so callers can
/// persist diagnostics of runs that later abort. A run is flagged as
/// stagnated when two consecutive residuals differ by less than
/// [`STAGNATION_TOL`] while still above ten times the tolerance.
pub fn run_ddm_sa(
    disc: &Discretization,
    cfg: &DdmConfig,
    exact: Option<&dyn ExactSolution>,
    mut observer: impl FnMut(&IterationRecord) -> Result<()>,
) -> Result<DdmOutcome> {
    cfg.validate()?;
    let n = disc.len();
    let mut state = InterfaceState::zeros(n);
    let mut history = IterationHistory::default();
    let mut status = DdmStatus::MaxIterations;
    let (mut td, mut ts) = (0.0, 0.0);
    let mut residual = f64::INFINITY;
    for k in 1..=cfg.outer_maxit {
        let prev = if k == 1 { None } else { Some(&state) };
        let sw = sweep(disc, &cfg.params, &cfg.inner, &state.q, prev, cfg.warm_start)
            .map_err(|(stage, e)| inner_failure(stage, k, &history, e))?;
        td += sw.darcy_seconds;
        ts += sw.stokes_seconds;
        let r = ddm_residual(&sw.q_new, &state.q)?;
        state = InterfaceState { q: sw.q_new, p_d: sw.p_d, u_s: sw.u_s, f_s: sw.f_s };
        let rec = record(disc, k, r, sw.darcy, sw.stokes, Some(&state), exact)?;
        observer(&rec)?;
        history.records.push(rec);
        let last = residual;
        residual = r;
        if r <= cfg.outer_tol {
            status = DdmStatus::Converged;
            break;
        }
        if k > 1 && (r - last).abs() < STAGNATION_TOL && r > 10.0 * cfg.outer_tol {
            status = DdmStatus::Stagnated;
            break;
        }
    }
    let drag = body_force(disc, &state.f_s)?;
    Ok(DdmOutcome {
        iterations: history.records.len(),
        state,
        history,
        status,
        drag,
        final_residual: residual,
        darcy_seconds: td,
        stokes_seconds: ts,
    })
}

/// Dirichlet-Neumann iteration accelerated by an outer GMRES on the affine
/// sweep map. Only the zero-slip interface law is supported.
///
/// The sweep F(q) = c + A q is linear in q apart from the background flow,
/// so A v is obtained from one sweep with u∞ = 0 and c from one sweep at
/// q = 0. Iteration stops on the same interface residual as the relaxed
/// iteration, ‖F(q) - q‖/‖q‖, evaluated from the GMRES residual.
pub fn run_ddm_gmres(
    disc: &Discretization,
    cfg: &DdmConfig,
    exact: Option<&dyn ExactSolution>,
    mut observer: impl FnMut(&IterationRecord) -> Result<()>,
) -> Result<DdmOutcome> {
    cfg.validate()?;
    if cfg.params.gamma > 0.0 {
        return Err(Error::Unsupported("outer GMRES requires a zero slip coefficient".into()));
    }
    let n = disc.len();
    let mut history = IterationHistory::default();
    let homogeneous = PhysicalParams { u_inf: Vec3::ZERO, ..cfg.params };
    let (td, ts) = (Cell::new(0.0), Cell::new(0.0));
    let (nd, ns) = (Cell::new(0usize), Cell::new(0usize));

    let c = sweep(disc, &cfg.params, &cfg.inner, &vec![0.0; n], None, false)
        .map_err(|(stage, e)| inner_failure(stage, 0, &history, e))?;
    td.set(c.darcy_seconds);
    ts.set(c.stokes_seconds);

    let failure = std::cell::RefCell::new(None);
    let apply = |v: &[f64], out: &mut [f64]| {
        match sweep(disc, &homogeneous, &cfg.inner, v, None, false) {
            Ok(sw) => {
                td.set(td.get() + sw.darcy_seconds);
                ts.set(ts.get() + sw.stokes_seconds);
                nd.set(sw.darcy);
                ns.set(sw.stokes);
                for ((o, vi), f) in out.iter_mut().zip(v).zip(&sw.q_new) {
                    *o = vi - f;
                }
                Ok(())
            }
            Err((stage, e)) => {
                *failure.borrow_mut() = Some(stage);
                Err(e)
            }
        }
    };

    // The GMRES residual is only an estimate of ‖F(q) - q‖ once the inner
    // solves are inexact, so each cycle ends with a full sweep and restarts
    // from its iterate until the sweep itself meets the tolerance.
    let mut x0: Option<Vec<f64>> = None;
    let mut previous = f64::INFINITY;
    let (fin, status, final_residual) = loop {
        let done = history.records.len();
        let mut monitor_err = None;
        let rep = gmres_monitored(&apply, &c.q_new, x0.as_deref(), cfg.outer_maxit - done, |p| {
            if p.iteration == 0 {
                return Control::Continue;
            }
            let qn = norm(&p.solution());
            let residual = if qn > 0.0 { p.abs_residual / qn } else { f64::INFINITY };
            match record(disc, done + p.iteration, residual, nd.get(), ns.get(), None, None) {
                Ok(rec) => {
                    if let Err(e) = observer(&rec) {
                        monitor_err = Some(e);
                        return Control::Stop;
                    }
                    history.records.push(rec);
                    if residual <= cfg.outer_tol {
                        Control::Converged
                    } else {
                        Control::Continue
                    }
                }
                Err(e) => {
                    monitor_err = Some(e);
                    Control::Stop
                }
            }
        });
        if let Some(e) = monitor_err {
            return Err(e);
        }
        let rep = match rep {
            Ok(r) => r,
            Err(e) => {
                let stage = failure.borrow().unwrap_or(SweepStage::Darcy);
                return Err(inner_failure(stage, history.records.len() + 1, &history, e));
            }
        };
        let fin = sweep(disc, &cfg.params, &cfg.inner, &rep.solution, None, false)
            .map_err(|(stage, e)| inner_failure(stage, history.records.len() + 1, &history, e))?;
        td.set(td.get() + fin.darcy_seconds);
        ts.set(ts.get() + fin.stokes_seconds);
        let r = ddm_residual(&fin.q_new, &rep.solution)?;
        let status = if r <= cfg.outer_tol {
            Some(DdmStatus::Converged)
        } else if !rep.converged || history.records.len() >= cfg.outer_maxit {
            Some(DdmStatus::MaxIterations)
        } else if r > 0.5 * previous {
            Some(DdmStatus::Stagnated)
        } else {
            None
        };
        if let Some(st) = status {
            break (fin, st, r);
        }
        previous = r;
        x0 = Some(rep.solution);
    };
    let state = InterfaceState { q: fin.q_new, p_d: fin.p_d, u_s: fin.u_s, f_s: fin.f_s };
    if let (Some(ex), Some(last)) = (exact, history.records.last_mut()) {
        let (d, p, u) = state_errors(disc, &state, ex)?;
        last.drag_err = Some(d);
        last.p_err = Some(p);
        last.u_err = Some(u);
    }
    let drag = body_force(disc, &state.f_s)?;
    Ok(DdmOutcome {
        state,
        iterations: history.records.len(),
        history,
        status,
        drag,
        final_residual,
        darcy_seconds: td.get(),
        stokes_seconds: ts.get(),
    })
}

/// Runs the outer mode selected in the configuration.
pub fn run_ddm(
    disc: &Discretization,
    cfg: &DdmConfig,
    exact: Option<&dyn ExactSolution>,
    observer: impl FnMut(&IterationRecord) -> Result<()>,
) -> Result<DdmOutcome> {
    match cfg.outer {
        OuterMode::SuccessiveApprox => run_ddm_sa(disc, cfg, exact, observer),
        OuterMode::Gmres => run_ddm_gmres(disc, cfg, exact, observer),
    }
}

/// One homogeneous relaxed sweep (u∞ = 0, no slip term) applied to `q`.
/// This is the action of the discrete iteration operator.
pub fn homogeneous_sweep(disc: &Discretization, params: &PhysicalParams, inner: &InnerConfig, q: &[f64]) -> Result<Vec<f64>> {
    let p = PhysicalParams { u_inf: Vec3::ZERO, gamma: 0.0, ..*params };
    sweep(disc, &p, inner, q, None, false).map(|s| s.q_new).map_err(|(_, e)| e)
}
