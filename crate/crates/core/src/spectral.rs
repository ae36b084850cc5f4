//! Spectrum of the relaxed interface iteration: closed-form mode
//! coefficients on the sphere and the dense discrete iteration matrix.

use std::f64::consts::PI;

use faer::linalg::matmul::matmul;
use faer::{c64, Accum, ColMut, ColRef, Mat, Par};
use rayon::prelude::*;

use crate::coupled::PhysicalParams;
use crate::error::{check_len, check_positive, Error, Result};
use crate::kernels::kernel_factors;
use crate::potentials::{Discretization, NEAR_CUTOFF};
use crate::solvers::{arnoldi_eigs, DenseLu};
use crate::vec3::Vec3;

/// Largest dense order assembled (the Stokes block has order 3N).
pub const DENSE_LIMIT: usize = 20000;

/// Thick-restart cycles for the discrete spectrum. The bulk of the top
/// values is a tight cluster that no restart count resolves.
pub const SPECTRUM_RESTARTS: usize = 60;

/// Default number of Ritz values.
pub const DEFAULT_EIGS: usize = 50;

/// Mode coefficient 𝒜ₙ = (1-θ) - θ (R²/κ) (n+1) / (n(n+2)(2n-1)).
pub fn analytic_mode_coefficient(n: usize, theta: f64, kappa: f64, radius: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter("mode index must be at least 1".into()));
    }
    check_positive("permeability", kappa)?;
    check_positive("radius", radius)?;
    let nf = n as f64;
    Ok((1.0 - theta) - theta * radius * radius / kappa * (nf + 1.0) / (nf * (nf + 2.0) * (2.0 * nf - 1.0)))
}

/// Coefficients for n = 1..=nmax.
pub fn analytic_modes(nmax: usize, theta: f64, kappa: f64, radius: f64) -> Result<Vec<(usize, f64)>> {
    (1..=nmax).map(|n| analytic_mode_coefficient(n, theta, kappa, radius).map(|a| (n, a))).collect()
}

fn pair_factors(d: Vec3, delta: f64) -> [f64; 4] {
    let r = d.norm();
    if r < NEAR_CUTOFF * delta {
        kernel_factors(r, delta)
    } else {
        let ir = 1.0 / r;
        let ir3 = ir * ir * ir;
        [ir, ir3, ir3, ir3 * ir * ir]
    }
}

/// Fills column `j` of each matrix in parallel.
fn fill_columns(m: &mut Mat<f64>, f: impl Fn(usize, &mut [f64]) + Sync) {
    m.par_col_iter_mut().enumerate().for_each(|(j, col)| {
        let slice = col.try_as_col_major_mut().expect("owned matrices are column major").as_slice_mut();
        f(j, slice);
    });
}

/// θ-independent part of the discrete iteration matrix: the map
/// q ↦ u_S·n of one homogeneous sweep without relaxation, so that
/// 𝒜̃(θ) = (1-θ)I + θ C.
pub struct IterationOperator {
    pub coupling: Mat<f64>,
    pub kappa: f64,
    pub mu: f64,
    pub h: f64,
}

impl IterationOperator {
    pub fn dim(&self) -> usize {
        self.coupling.nrows()
    }

    /// Dense 𝒜̃ at relaxation θ.
    pub fn matrix(&self, theta: f64) -> Mat<f64> {
        let n = self.dim();
        Mat::from_fn(n, n, |i, j| theta * self.coupling[(i, j)] + if i == j { 1.0 - theta } else { 0.0 })
    }

    /// y = 𝒜̃(θ) x.
    pub fn apply(&self, theta: f64, x: &[f64], y: &mut [f64]) -> Result<()> {
        let n = self.dim();
        check_len(n, x.len())?;
        check_len(n, y.len())?;
        y.copy_from_slice(x);
        let mut yc = ColMut::from_slice_mut(y);
        yc *= faer::Scale(1.0 - theta);
        matmul(yc.as_mat_mut(), Accum::Add, self.coupling.as_ref(), ColRef::from_slice(x).as_mat(), theta, Par::Seq);
        Ok(())
    }
}

/// Assembles the dense operators of both boundary problems and forms the
/// coupling matrix. The null modes of the two interior operators are
/// removed by the same rank-one terms as in the iterative solvers.
pub fn assemble_iteration_operator(disc: &Discretization, params: &PhysicalParams) -> Result<IterationOperator> {
    check_positive("permeability", params.kappa)?;
    check_positive("viscosity", params.mu)?;
    let n = disc.len();
    if 3 * n > DENSE_LIMIT {
        return Err(Error::TooLarge { order: 3 * n, limit: DENSE_LIMIT });
    }
    let q = &disc.quad;
    let (x, nrm, w) = (&q.nodes, &q.normals, &q.weights);
    let delta = disc.reg.delta;
    let area = q.total_weight();
    let self_f = kernel_factors(0.0, delta);
    let c4 = 1.0 / (4.0 * PI);
    let c8 = 1.0 / (8.0 * PI);
    let c6 = 6.0 / (8.0 * PI);

    // Row sums that form the diagonals of the subtracted double layers.
    let (hsum, ksum): (Vec<f64>, Vec<[[f64; 3]; 3]>) = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut hs = 0.0;
            let mut ks = [[0.0; 3]; 3];
            for j in 0..n {
                if j == i {
                    continue;
                }
                let d = x[i] - x[j];
                let f = pair_factors(d, delta);
                let dn = d.dot(nrm[j]);
                hs += dn * f[1] * w[j];
                let s = c6 * f[3] * dn * w[j];
                for (a, row) in ks.iter_mut().enumerate() {
                    for (b, v) in row.iter_mut().enumerate() {
                        *v += s * d[a] * d[b];
                    }
                }
            }
            (hs * c4, ks)
        })
        .unzip();

    // Darcy: A_D = ½I - H̃ + 1wᵀ/W, and L̃.
    let mut a_d = Mat::<f64>::zeros(n, n);
    fill_columns(&mut a_d, |j, col| {
        for (i, v) in col.iter_mut().enumerate() {
            let h = if i == j {
                0.5 + hsum[i]
            } else {
                let d = x[i] - x[j];
                -c4 * d.dot(nrm[j]) * pair_factors(d, delta)[1] * w[j]
            };
            *v = if i == j { 0.5 } else { 0.0 } - h + w[j] / area;
        }
    });
    let mut l = Mat::<f64>::zeros(n, n);
    fill_columns(&mut l, |j, col| {
        for (i, v) in col.iter_mut().enumerate() {
            let f0 = if i == j { self_f[0] } else { pair_factors(x[i] - x[j], delta)[0] };
            *v = -c4 * f0 * w[j];
        }
    });
    // L̃Π with Π = I - 1wᵀ/W.
    let lrow: Vec<f64> = (0..n).map(|i| (0..n).map(|j| l[(i, j)]).sum()).collect();
    fill_columns(&mut l, |j, col| {
        for (i, v) in col.iter_mut().enumerate() {
            *v -= lrow[i] * w[j] / area;
        }
    });
    let lu_d = DenseLu::factor(a_d, "Darcy double layer")?;
    lu_d.solve_in_place(l.as_mut());
    let mut p = l;
    // Π on the left: the solver returns zero-mean pressures.
    fill_columns(&mut p, |_, col| {
        let m: f64 = col.iter().zip(w.iter()).map(|(a, b)| a * b).sum::<f64>() / area;
        col.iter_mut().for_each(|v| *v -= m);
    });

    // Stokes: Y = M·N, the single layer of the traction p n.
    let mut y = Mat::<f64>::zeros(3 * n, n);
    fill_columns(&mut y, |j, col| {
        let nj = nrm[j];
        for i in 0..n {
            let v = if i == j {
                nj * (c8 * self_f[0] * w[j])
            } else {
                let d = x[i] - x[j];
                let f = pair_factors(d, delta);
                (nj * f[0] + d * (f[2] * d.dot(nj))) * (c8 * w[j])
            };
            col[3 * i] = v.x;
            col[3 * i + 1] = v.y;
            col[3 * i + 2] = v.z;
        }
    });
    // A_S = ½I - K̃ + N Nᵀ diag(w)/W.
    let mut a_s = Mat::<f64>::zeros(3 * n, 3 * n);
    fill_columns(&mut a_s, |col_idx, col| {
        let (j, b) = (col_idx / 3, col_idx % 3);
        let nj = nrm[j];
        for i in 0..n {
            for a in 0..3 {
                let k = if i == j {
                    -ksum[i][a][b] - if a == b { 0.5 } else { 0.0 }
                } else {
                    let d = x[i] - x[j];
                    c6 * pair_factors(d, delta)[3] * d.dot(nj) * w[j] * d[a] * d[b]
                };
                let id = if i == j && a == b { 0.5 } else { 0.0 };
                col[3 * i + a] = id - k + nrm[i][a] * nj[b] * w[j] / area;
            }
        }
    });
    let lu_s = DenseLu::factor(a_s, "Stokes double layer")?;
    lu_s.solve_in_place(y.as_mut());

    // Normal component, then the product with the Darcy map.
    let t = Mat::<f64>::from_fn(n, n, |i, j| (0..3).map(|a| nrm[i][a] * y[(3 * i + a, j)]).sum::<f64>());
    drop(y);
    let mut coupling = &t * &p;
    let s = 1.0 / params.kappa;
    fill_columns(&mut coupling, |_, col| col.iter_mut().for_each(|v| *v *= s));
    Ok(IterationOperator { coupling, kappa: params.kappa, mu: params.mu, h: disc.quad.h })
}

/// Dense 𝒜̃ for the relaxation in `params`.
pub fn assemble_iteration_matrix(disc: &Discretization, params: &PhysicalParams) -> Result<Mat<f64>> {
    Ok(assemble_iteration_operator(disc, params)?.matrix(params.theta))
}

#[derive(Debug, Clone)]
pub struct SpectrumReport {
    /// Ritz values by descending real part.
    pub values: Vec<c64>,
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub theta: f64,
    pub kappa: f64,
    pub mu: f64,
    pub h: f64,
}

impl SpectrumReport {
    pub fn spectral_radius(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Fraction of the values within `tol` of `target` on the real axis.
    pub fn fraction_near(&self, target: f64, tol: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        let k = self.values.iter().filter(|v| (**v - c64::new(target, 0.0)).norm() <= tol).count();
        k as f64 / self.values.len() as f64
    }
}

/// `k` dominant Ritz values of 𝒜̃(θ).
pub fn iteration_spectrum(op: &IterationOperator, theta: f64, k: usize) -> Result<SpectrumReport> {
    let est = arnoldi_eigs(|x, y| op.apply(theta, x, y), op.dim(), k, SPECTRUM_RESTARTS)?;
    Ok(SpectrumReport {
        values: est.values,
        residuals: est.residuals,
        converged: est.converged,
        theta,
        kappa: op.kappa,
        mu: op.mu,
        h: op.h,
    })
}
