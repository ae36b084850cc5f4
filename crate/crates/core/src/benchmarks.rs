//! Closed-form reference solutions, error norms and the standalone boundary
//! solver accuracy tests.
//!
//! Two exact solutions for a porous sphere in uniform flow along +z are
//! provided. [`JosephTao`] is the classical matching with exterior no-slip
//! and pressure continuity. [`ShearFreeSphere`] solves the interface
//! conditions enforced by the coupled iteration with zero slip coefficient:
//! continuity of normal velocity, balance of normal stress and zero
//! tangential stress.

use std::f64::consts::PI;
use std::time::Instant;

use crate::coupled::{solve_darcy, solve_stokes, InnerConfig};
use crate::error::{check_len, check_positive, Error, Result};
use crate::geometry::{find_quadrature_points, LevelSetSurface, SurfaceQuadrature};
use crate::kernels::{stokeslet, stresslet_apply, Regularization};
use crate::potentials::Discretization;
use crate::vec3::{flatten, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Darcy,
    Stokes,
}

/// Sphere radius R, free-stream speed U along +z, viscosity and permeability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphereFlowParams {
    pub radius: f64,
    pub speed: f64,
    pub mu: f64,
    pub kappa: f64,
}

impl SphereFlowParams {
    pub fn unit(kappa: f64) -> Self {
        Self { radius: 1.0, speed: 1.0, mu: 1.0, kappa }
    }

    fn validate(&self) -> Result<()> {
        check_positive("sphere radius", self.radius)?;
        check_positive("viscosity", self.mu)?;
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::InvalidParameter(format!("permeability must be nonnegative, got {}", self.kappa)));
        }
        Ok(())
    }
}

/// Polar angle measured from +z: returns (r, cos θ, sin²θ).
fn polar(x: Vec3) -> (f64, f64, f64) {
    let r = x.norm();
    if r == 0.0 {
        return (0.0, 1.0, 0.0);
    }
    let c = x.z / r;
    (r, c, (1.0 - c * c).max(0.0))
}

/// Cartesian form of `a·cosθ e_r + b·sinθ e_θ`, regular at the poles.
fn axisymmetric(x: Vec3, a: f64, b: f64) -> Vec3 {
    let (r, c, s2) = polar(x);
    if r == 0.0 {
        return Vec3::new(0.0, 0.0, a);
    }
    let ab = (a + b) * c / r;
    Vec3::new(ab * x.x, ab * x.y, a * c * c - b * s2)
}

fn check_region(region: Region, r: f64, radius: f64) -> Result<()> {
    let eps = 1e-9 * radius;
    match region {
        Region::Darcy if r > radius + eps => Err(Error::RegionMismatch { region: "Darcy", radius: r }),
        Region::Stokes if r < radius - eps => Err(Error::RegionMismatch { region: "Stokes", radius: r }),
        _ => Ok(()),
    }
}

fn check_on_sphere(x: Vec3, radius: f64) -> Result<()> {
    let r = x.norm();
    if (r - radius).abs() > 1e-9 * radius {
        return Err(Error::InvalidParameter(format!("point at distance {r} is not on the sphere of radius {radius}")));
    }
    Ok(())
}

/// Exact interface data for a porous sphere benchmark.
pub trait ExactSolution: Sync {
    /// Pressure inside the body.
    fn darcy_pressure(&self, x: Vec3) -> f64;
    /// Velocity in the exterior fluid.
    fn stokes_velocity(&self, x: Vec3) -> Vec3;
    /// Force per area exerted by the fluid on the body at a surface point.
    fn body_traction(&self, x: Vec3) -> Vec3;
    /// z-component of the total force on the body.
    fn drag(&self) -> f64;
    fn name(&self) -> &'static str;
}

/// Joseph-Tao solution for a porous sphere.
#[derive(Debug, Clone, Copy)]
pub struct JosephTao(pub SphereFlowParams);

impl JosephTao {
    pub fn new(p: SphereFlowParams) -> Result<Self> {
        p.validate()?;
        Ok(Self(p))
    }

    fn a_beta(&self) -> (f64, f64) {
        let p = self.0;
        let k = p.kappa / (p.radius * p.radius);
        (3.0 * p.radius * p.speed / (2.0 + k), (1.0 + 2.0 * k) / 3.0)
    }

    /// Radial and polar profiles of the exterior velocity with derivatives:
    /// u_r = a(r) cosθ, u_θ = b(r) sinθ.
    fn exterior_profiles(&self, r: f64) -> (f64, f64, f64, f64) {
        let (a_, beta) = self.a_beta();
        let (rr, u) = (self.0.radius, self.0.speed);
        let q = beta * rr * rr;
        let a = -a_ / r * (1.0 - q / (r * r)) + u;
        let da = a_ / (r * r) - 3.0 * a_ * q / r.powi(4);
        let b = a_ / (2.0 * r) * (1.0 + q / (r * r)) - u;
        let db = -a_ / (2.0 * r * r) - 1.5 * a_ * q / r.powi(4);
        (a, da, b, db)
    }

    /// Pressure and Cartesian velocity in the requested region.
    pub fn exact(&self, x: Vec3, region: Region) -> Result<(f64, Vec3)> {
        let p = self.0;
        let (r, c, _) = polar(x);
        check_region(region, r, p.radius)?;
        match region {
            Region::Darcy => {
                let den = 2.0 * p.radius * p.radius + p.kappa;
                let pr = -3.0 * p.mu * p.speed * r * c / den;
                let a = 3.0 * p.speed * p.kappa / den;
                Ok((pr, axisymmetric(x, a, -a)))
            }
            Region::Stokes => {
                let (a_, _) = self.a_beta();
                let (a, _, b, _) = self.exterior_profiles(r);
                Ok((-p.mu * a_ * c / (r * r), axisymmetric(x, a, b)))
            }
        }
    }

    /// Traction with the normal and shear components built from the
    /// exterior velocity and the Darcy pressure at r = R.
    pub fn traction(&self, x: Vec3) -> Result<Vec3> {
        let p = self.0;
        check_on_sphere(x, p.radius)?;
        let rr = p.radius;
        let (_, c, _) = polar(x);
        let (pd, _) = self.exact(x, Region::Darcy)?;
        let (a, da, b, db) = self.exterior_profiles(rr);
        let fr = -pd + 2.0 * p.mu * da * c;
        let ft = p.mu * (db - b / rr - a / rr);
        let er = x * (1.0 / rr);
        Ok(er * fr + axisymmetric(x, 0.0, ft))
    }

    /// Closed-form drag 6πμRU / (1 + κ/(2R²)).
    pub fn drag_formula(&self) -> f64 {
        let p = self.0;
        6.0 * PI * p.mu * p.radius * p.speed / (1.0 + p.kappa / (2.0 * p.radius * p.radius))
    }
}

impl ExactSolution for JosephTao {
    fn darcy_pressure(&self, x: Vec3) -> f64 {
        let (r, c, _) = polar(x);
        let p = self.0;
        -3.0 * p.mu * p.speed * r * c / (2.0 * p.radius * p.radius + p.kappa)
    }
    fn stokes_velocity(&self, x: Vec3) -> Vec3 {
        let (a, _, b, _) = self.exterior_profiles(x.norm());
        axisymmetric(x, a, b)
    }
    fn body_traction(&self, x: Vec3) -> Vec3 {
        self.traction(x * (self.0.radius / x.norm())).expect("projected onto the sphere")
    }
    fn drag(&self) -> f64 {
        self.drag_formula()
    }
    fn name(&self) -> &'static str {
        "joseph-tao"
    }
}

/// Exact solution of the coupled problem with zero tangential stress on the
/// exterior side: stream function with a single dipole-free Stokeslet term.
#[derive(Debug, Clone, Copy)]
pub struct ShearFreeSphere(pub SphereFlowParams);

impl ShearFreeSphere {
    pub fn new(p: SphereFlowParams) -> Result<Self> {
        p.validate()?;
        Ok(Self(p))
    }

    /// Stokeslet coefficient B with u_r = (U + 2B/r) cosθ outside.
    fn b(&self) -> f64 {
        let p = self.0;
        -p.speed * p.radius.powi(3) / (2.0 * p.radius * p.radius + 6.0 * p.kappa)
    }

    /// Darcy pressure gradient magnitude: p_D = g r cosθ.
    fn gradient(&self) -> f64 {
        6.0 * self.0.mu * self.b() / self.0.radius.powi(3)
    }

    pub fn exact(&self, x: Vec3, region: Region) -> Result<(f64, Vec3)> {
        let p = self.0;
        let (r, c, _) = polar(x);
        check_region(region, r, p.radius)?;
        match region {
            Region::Darcy => {
                let g = self.gradient();
                Ok((g * r * c, Vec3::new(0.0, 0.0, -p.kappa / p.mu * g)))
            }
            Region::Stokes => {
                let b = self.b();
                Ok((2.0 * p.mu * b * c / (r * r), self.stokes_velocity(x)))
            }
        }
    }
}

impl ExactSolution for ShearFreeSphere {
    fn darcy_pressure(&self, x: Vec3) -> f64 {
        self.gradient() * x.z
    }
    fn stokes_velocity(&self, x: Vec3) -> Vec3 {
        let (b, u) = (self.b(), self.0.speed);
        let r = x.norm();
        axisymmetric(x, u + 2.0 * b / r, -(u + b / r))
    }
    fn body_traction(&self, x: Vec3) -> Vec3 {
        let p = self.0;
        let (r, c, _) = polar(x);
        x * (-6.0 * p.mu * self.b() * c / (p.radius * p.radius) / r)
    }
    fn drag(&self) -> f64 {
        -8.0 * PI * self.0.mu * self.b()
    }
    fn name(&self) -> &'static str {
        "shear-free"
    }
}

/// Componentwise surface integral of an interleaved vector field.
pub fn drag(quad: &SurfaceQuadrature, f: &[f64]) -> Result<Vec3> {
    check_len(3 * quad.len(), f.len())?;
    let mut d = [0.0; 3];
    for (c, dc) in d.iter_mut().enumerate() {
        let comp: Vec<f64> = (0..quad.len()).map(|i| f[3 * i + c]).collect();
        *dc = quad.integrate(&comp)?;
    }
    Ok(Vec3::from(d))
}

/// Root mean square of the nodal differences.
pub fn l2_error_scalar(computed: &[f64], exact: &[f64]) -> Result<f64> {
    check_len(exact.len(), computed.len())?;
    if computed.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = computed.iter().zip(exact).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((s / computed.len() as f64).sqrt())
}

/// Root mean square over nodes of the Euclidean difference of interleaved
/// vectors.
pub fn l2_error_vector(computed: &[f64], exact: &[f64]) -> Result<f64> {
    check_len(exact.len(), computed.len())?;
    if computed.len() % 3 != 0 {
        return Err(Error::LengthMismatch { expected: 3 * (computed.len() / 3), got: computed.len() });
    }
    let n = computed.len() / 3;
    if n == 0 {
        return Ok(0.0);
    }
    let s: f64 = computed.iter().zip(exact).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((s / n as f64).sqrt())
}

/// Error between a solution at spacing h and one at h/2, evaluated on the
/// nodes shared by both lattices. `width` is the number of values per node.
pub fn empirical_error(
    coarse: &SurfaceQuadrature,
    coarse_vals: &[f64],
    fine: &SurfaceQuadrature,
    fine_vals: &[f64],
    width: usize,
) -> Result<f64> {
    check_len(width * coarse.len(), coarse_vals.len())?;
    check_len(width * fine.len(), fine_vals.len())?;
    if ((fine.h * 2.0) / coarse.h - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParameter("fine spacing must be half the coarse spacing".into()));
    }
    let mut index = std::collections::HashMap::new();
    for (j, t) in fine.tags.iter().enumerate() {
        index.entry(*t).or_insert_with(Vec::new).push(j);
    }
    let tol = 1e-9 * coarse.h;
    let mut sum = 0.0;
    let mut matched = 0usize;
    for (i, t) in coarse.tags.iter().enumerate() {
        let key = crate::geometry::NodeTag { axis: t.axis, ja: 2 * t.ja, jb: 2 * t.jb };
        let Some(cands) = index.get(&key) else { continue };
        let Some(&j) = cands.iter().find(|&&j| (fine.nodes[j] - coarse.nodes[i]).norm() < tol) else { continue };
        for c in 0..width {
            let d = coarse_vals[width * i + c] - fine_vals[width * j + c];
            sum += d * d;
        }
        matched += 1;
    }
    if matched == 0 {
        return Err(Error::InvalidParameter("no shared nodes between the two quadratures".into()));
    }
    Ok((sum / matched as f64).sqrt())
}

/// Result of a standalone boundary solve against a known field.
#[derive(Debug, Clone)]
pub struct SelftestReport {
    pub h: f64,
    pub nodes: usize,
    pub error: f64,
    pub iterations: usize,
    pub seconds: f64,
}

/// Radius of the sphere used by both self-tests.
pub const SELFTEST_RADIUS: f64 = 0.8;

fn selftest_disc(h: f64, delta_ratio: f64) -> Result<Discretization> {
    let surface = LevelSetSurface::sphere(SELFTEST_RADIUS)?;
    let quad = find_quadrature_points(&surface, h)?;
    Ok(Discretization::new(quad, Regularization::from_grid(h, delta_ratio)?))
}

/// Interior Neumann solve for the harmonic p = e^x sin y.
pub fn darcy_selftest(h: f64, delta_ratio: f64, inner: &InnerConfig) -> Result<SelftestReport> {
    let t0 = Instant::now();
    let disc = selftest_disc(h, delta_ratio)?;
    let q = &disc.quad;
    let exact: Vec<f64> = q.nodes.iter().map(|x| x.x.exp() * x.y.sin()).collect();
    let dpdn: Vec<f64> = q
        .nodes
        .iter()
        .zip(&q.normals)
        .map(|(x, n)| Vec3::new(x.x.exp() * x.y.sin(), x.x.exp() * x.y.cos(), 0.0).dot(*n))
        .collect();
    let b: Vec<f64> = disc.laplace_single(&dpdn)?.iter().map(|v| -v).collect();
    let (p, rep) = solve_darcy(&disc, &b, inner, None)?;
    let mean = q.integrate(&exact)? / q.total_weight();
    let shifted: Vec<f64> = exact.iter().map(|v| v - mean).collect();
    Ok(SelftestReport {
        h,
        nodes: q.len(),
        error: l2_error_scalar(&p, &shifted)?,
        iterations: rep.iterations,
        seconds: t0.elapsed().as_secs_f64(),
    })
}

/// Location and strength of the point force in the Stokes self-test.
pub const SELFTEST_POLE: Vec3 = Vec3::new(0.2, 0.0, 0.0);
pub const SELFTEST_FORCE: Vec3 = Vec3::new(1.0, 0.0, 0.0);

/// Velocity of a point force `g` at `x0` in a fluid of viscosity `mu`.
pub fn stokeslet_velocity(x: Vec3, x0: Vec3, g: Vec3, mu: f64) -> Vec3 {
    let s = stokeslet(x, x0);
    let ga = g.to_array();
    Vec3::from([0, 1, 2].map(|i| (0..3).map(|j| s[i][j] * ga[j]).sum::<f64>() / (8.0 * PI * mu)))
}

/// Traction σ·n of the point-force field on a surface with normal `n`.
pub fn stokeslet_traction(x: Vec3, x0: Vec3, g: Vec3, n: Vec3) -> Vec3 {
    let t = stresslet_apply(x, x0, n);
    let ga = g.to_array();
    Vec3::from([0, 1, 2].map(|i| (0..3).map(|j| t[i][j] * ga[j]).sum::<f64>() / (8.0 * PI)))
}

/// Exterior Stokes solve for the point-force field.
pub fn stokes_selftest(h: f64, delta_ratio: f64, inner: &InnerConfig) -> Result<SelftestReport> {
    let t0 = Instant::now();
    let disc = selftest_disc(h, delta_ratio)?;
    let q = &disc.quad;
    let mu = 1.0;
    let exact: Vec<Vec3> = q.nodes.iter().map(|x| stokeslet_velocity(*x, SELFTEST_POLE, SELFTEST_FORCE, mu)).collect();
    // Traction on the fluid side of the body, normal into the body.
    let f_s: Vec<Vec3> = q
        .nodes
        .iter()
        .zip(&q.normals)
        .map(|(x, n)| stokeslet_traction(*x, SELFTEST_POLE, SELFTEST_FORCE, -*n))
        .collect();
    let mf = disc.stokes_single(&flatten(&f_s))?;
    let b: Vec<f64> = mf.iter().map(|v| v / mu).collect();
    let (u, rep) = solve_stokes(&disc, &b, inner, None)?;
    let err = l2_error_vector(&u, &flatten(&exact))?;
    Ok(SelftestReport { h, nodes: q.len(), error: err, iterations: rep.iterations, seconds: t0.elapsed().as_secs_f64() })
}

/// Observed order of convergence between two grid spacings.
pub fn observed_order(h1: f64, e1: f64, h2: f64, e2: f64) -> f64 {
    (e1 / e2).ln() / (h1 / h2).ln()
}
