//! On-surface layer potentials for Laplace and Stokes.
//!
//! Every apply is a dense O(N^2) sum over node pairs. Each unordered pair is
//! visited once and its kernel value scattered to both targets. Pairs closer
//! than `NEAR_CUTOFF·δ` need the smoothing functions; for all others the
//! smoothing equals one to rounding and the bare powers of `1/r` are used.
//! A [`Discretization`] optionally caches the near-pair factors, which
//! removes all `erf`/`exp` work from repeated applies.
//!
//! Work is split into a fixed set of row chunks whose partial sums are added
//! in chunk order, so results do not depend on the number of threads.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{check_len, Result};
use crate::geometry::SurfaceQuadrature;
use crate::kernels::{kernel_factors, Regularization};
use crate::vec3::{get3, Vec3};

/// Separation, in units of δ, beyond which the smoothing is dropped.
/// At r/δ = 7 every s_k differs from one by less than 5e-16.
pub const NEAR_CUTOFF: f64 = 7.0;

/// Default memory budget for the near-pair cache.
pub const DEFAULT_CACHE_MB: usize = 1536;

/// Environment variable overriding the cache budget in megabytes
/// (0 disables the cache).
pub const CACHE_ENV: &str = "SDBIE_NEAR_CACHE_MB";

const CHUNKS: usize = 64;

/// Smoothing factors for every near pair (i, j) with j > i, row-compressed.
#[derive(Debug, Clone)]
pub struct NearField {
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    coef: Vec<[f64; 4]>,
}

impl NearField {
    pub fn pairs(&self) -> usize {
        self.cols.len()
    }

    pub fn bytes(&self) -> usize {
        self.cols.len() * (4 + 32) + self.row_ptr.len() * 8
    }
}

/// Borrowed view used by all pair sweeps.
#[derive(Clone, Copy)]
pub(crate) struct PairCore<'a> {
    nodes: &'a [Vec3],
    normals: &'a [Vec3],
    weights: &'a [f64],
    delta: f64,
    near: Option<&'a NearField>,
}

fn row_chunks(n: usize) -> Vec<(usize, usize)> {
    let chunks = CHUNKS.min(n.max(1));
    let total = n * n.saturating_sub(1) / 2;
    let mut out = Vec::with_capacity(chunks);
    let mut start = 0;
    let mut acc = 0usize;
    for c in 1..=chunks {
        let target = total * c / chunks;
        let mut end = start;
        while end < n && (acc < target || c == chunks) {
            acc += n - 1 - end;
            end += 1;
        }
        if end > start {
            out.push((start, end));
        }
        start = end;
    }
    if start < n {
        out.push((start, n));
    }
    out
}

impl<'a> PairCore<'a> {
    pub(crate) fn new(quad: &'a SurfaceQuadrature, delta: f64, near: Option<&'a NearField>) -> Self {
        Self { nodes: &quad.nodes, normals: &quad.normals, weights: &quad.weights, delta, near }
    }

    pub(crate) fn len(&self) -> usize {
        self.nodes.len()
    }

    /// Factors at r = 0: the finite limits of s_k(r/δ)/r^p.
    pub(crate) fn self_factors(&self) -> [f64; 4] {
        kernel_factors(0.0, self.delta)
    }

    /// Calls `f(j, x_i - x_j, factors)` for every j > i.
    #[inline(always)]
    pub(crate) fn row_pairs<F: FnMut(usize, Vec3, &[f64; 4])>(&self, i: usize, mut f: F) {
        let n = self.nodes.len();
        let xi = self.nodes[i];
        let far = |d: Vec3| {
            let ir = 1.0 / d.norm_sq().sqrt();
            let ir2 = ir * ir;
            let ir3 = ir * ir2;
            [ir, ir3, ir3, ir3 * ir2]
        };
        match self.near {
            Some(nf) => {
                let (mut k, kend) = (nf.row_ptr[i], nf.row_ptr[i + 1]);
                for j in (i + 1)..n {
                    let d = xi - self.nodes[j];
                    if k < kend && nf.cols[k] as usize == j {
                        f(j, d, &nf.coef[k]);
                        k += 1;
                    } else {
                        f(j, d, &far(d));
                    }
                }
            }
            None => {
                let cut2 = (NEAR_CUTOFF * self.delta).powi(2);
                for j in (i + 1)..n {
                    let d = xi - self.nodes[j];
                    let r2 = d.norm_sq();
                    if r2 < cut2 {
                        f(j, d, &kernel_factors(r2.sqrt(), self.delta));
                    } else {
                        f(j, d, &far(d));
                    }
                }
            }
        }
    }

    /// Runs `body(i, out)` for every row, each chunk into its own buffer of
    /// length `width·N`, and adds the buffers in chunk order.
    fn sweep<B>(&self, width: usize, body: B) -> Vec<f64>
    where
        B: Fn(usize, &mut [f64]) + Sync,
    {
        let n = self.len();
        let parts: Vec<Vec<f64>> = row_chunks(n)
            .into_par_iter()
            .map(|(a, b)| {
                let mut out = vec![0.0; width * n];
                for i in a..b {
                    body(i, &mut out);
                }
                out
            })
            .collect();
        let mut total = vec![0.0; width * n];
        for p in parts {
            for (t, v) in total.iter_mut().zip(p) {
                *t += v;
            }
        }
        total
    }

    pub(crate) fn laplace_single(&self, rho: &[f64]) -> Vec<f64> {
        let v: Vec<f64> = rho.iter().zip(self.weights).map(|(r, w)| r * w).collect();
        let mut out = self.sweep(1, |i, out| {
            let vi = v[i];
            let mut acc = 0.0;
            self.row_pairs(i, |j, _d, f| {
                acc += f[0] * v[j];
                out[j] += f[0] * vi;
            });
            out[i] += acc;
        });
        let f0 = self.self_factors()[0];
        for (o, vi) in out.iter_mut().zip(&v) {
            *o = -(*o + f0 * vi) / (4.0 * PI);
        }
        out
    }

    pub(crate) fn laplace_double(&self, p: &[f64]) -> Vec<f64> {
        let (nrm, w) = (self.normals, self.weights);
        let mut out = self.sweep(1, |i, out| {
            let (pi, ni, wi) = (p[i], nrm[i], w[i]);
            let mut acc = 0.0;
            self.row_pairs(i, |j, d, f| {
                let dp = p[j] - pi;
                acc -= dp * d.dot(nrm[j]) * f[1] * w[j];
                out[j] -= dp * d.dot(ni) * f[1] * wi;
            });
            out[i] += acc;
        });
        for (o, pi) in out.iter_mut().zip(p) {
            *o = *o / (4.0 * PI) + 0.5 * pi;
        }
        out
    }

    pub(crate) fn stokes_single(&self, f: &[f64]) -> Vec<f64> {
        let n = self.len();
        let g: Vec<Vec3> = (0..n).map(|i| get3(f, i) * self.weights[i]).collect();
        let mut out = self.sweep(3, |i, out| {
            let gi = g[i];
            let mut acc = Vec3::ZERO;
            self.row_pairs(i, |j, d, k| {
                let gj = g[j];
                acc += gj * k[0] + d * (k[2] * d.dot(gj));
                let t = gi * k[0] + d * (k[2] * d.dot(gi));
                out[3 * j] += t.x;
                out[3 * j + 1] += t.y;
                out[3 * j + 2] += t.z;
            });
            out[3 * i] += acc.x;
            out[3 * i + 1] += acc.y;
            out[3 * i + 2] += acc.z;
        });
        let f0 = self.self_factors()[0];
        for i in 0..n {
            for c in 0..3 {
                let o = &mut out[3 * i + c];
                *o = (*o + f0 * g[i][c]) / (8.0 * PI);
            }
        }
        out
    }

    pub(crate) fn stokes_double(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        let (nrm, w) = (self.normals, self.weights);
        let uv: Vec<Vec3> = (0..n).map(|i| get3(u, i)).collect();
        let mut out = self.sweep(3, |i, out| {
            let (ui, ni, wi) = (uv[i], nrm[i], w[i]);
            let mut acc = Vec3::ZERO;
            self.row_pairs(i, |j, d, k| {
                let t = k[3] * d.dot(uv[j] - ui);
                acc += d * (t * d.dot(nrm[j]) * w[j]);
                let s = t * d.dot(ni) * wi;
                out[3 * j] += d.x * s;
                out[3 * j + 1] += d.y * s;
                out[3 * j + 2] += d.z * s;
            });
            out[3 * i] += acc.x;
            out[3 * i + 1] += acc.y;
            out[3 * i + 2] += acc.z;
        });
        let c = 6.0 / (8.0 * PI);
        for (o, ui) in out.iter_mut().zip(u) {
            *o = c * *o - 0.5 * ui;
        }
        out
    }

    fn build_near(&self) -> NearField {
        let n = self.len();
        let cut2 = (NEAR_CUTOFF * self.delta).powi(2);
        let parts: Vec<(Vec<usize>, Vec<u32>, Vec<[f64; 4]>)> = row_chunks(n)
            .into_par_iter()
            .map(|(a, b)| {
                let mut lens = Vec::with_capacity(b - a);
                let mut cols = Vec::new();
                let mut coef = Vec::new();
                for i in a..b {
                    let before = cols.len();
                    let xi = self.nodes[i];
                    for j in (i + 1)..n {
                        let r2 = (xi - self.nodes[j]).norm_sq();
                        if r2 < cut2 {
                            cols.push(j as u32);
                            coef.push(kernel_factors(r2.sqrt(), self.delta));
                        }
                    }
                    lens.push(cols.len() - before);
                }
                (lens, cols, coef)
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let total: usize = parts.iter().map(|p| p.1.len()).sum();
        let mut cols = Vec::with_capacity(total);
        let mut coef = Vec::with_capacity(total);
        for (lens, c, k) in parts {
            for l in lens {
                row_ptr.push(row_ptr.last().unwrap() + l);
            }
            cols.extend(c);
            coef.extend(k);
        }
        NearField { row_ptr, cols, coef }
    }

    fn count_near(&self) -> usize {
        let n = self.len();
        let cut2 = (NEAR_CUTOFF * self.delta).powi(2);
        (0..n)
            .into_par_iter()
            .map(|i| {
                let xi = self.nodes[i];
                self.nodes[i + 1..].iter().filter(|x| (xi - **x).norm_sq() < cut2).count()
            })
            .sum()
    }
}

/// A quadrature together with its regularization and optional near-pair
/// cache. All layer potentials are methods on this type.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub quad: SurfaceQuadrature,
    pub reg: Regularization,
    near: Option<NearField>,
}

fn cache_budget_bytes() -> usize {
    std::env::var(CACHE_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(DEFAULT_CACHE_MB)
        * (1 << 20)
}

impl Discretization {
    /// Builds the near-pair cache when it fits the memory budget.
    pub fn new(quad: SurfaceQuadrature, reg: Regularization) -> Self {
        Self::with_cache_budget(quad, reg, cache_budget_bytes())
    }

    pub fn with_cache_budget(quad: SurfaceQuadrature, reg: Regularization, budget_bytes: usize) -> Self {
        let near = {
            let core = PairCore::new(&quad, reg.delta, None);
            let bytes = core.count_near() * 36 + (quad.len() + 1) * 8;
            (budget_bytes > 0 && bytes <= budget_bytes).then(|| core.build_near())
        };
        Self { quad, reg, near }
    }

    /// No cache: every apply evaluates the smoothing functions afresh.
    pub fn uncached(quad: SurfaceQuadrature, reg: Regularization) -> Self {
        Self { quad, reg, near: None }
    }

    pub fn len(&self) -> usize {
        self.quad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quad.is_empty()
    }

    pub fn near_field(&self) -> Option<&NearField> {
        self.near.as_ref()
    }

    pub(crate) fn core(&self) -> PairCore<'_> {
        PairCore::new(&self.quad, self.reg.delta, self.near.as_ref())
    }

    /// Single layer (Lρ)_i = Σ_j G^δ(x_i, x_j) ρ_j w_j.
    pub fn laplace_single(&self, rho: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), rho.len())?;
        Ok(self.core().laplace_single(rho))
    }

    /// Subtracted double layer (Hp)_i = Σ_j (p_j - p_i) ∂G^δ/∂n_j w_j + p_i/2.
    pub fn laplace_double(&self, p: &[f64]) -> Result<Vec<f64>> {
        check_len(self.len(), p.len())?;
        Ok(self.core().laplace_double(p))
    }

    /// Stokes single layer (Mf)_i = (1/8π) Σ_j S^δ(x_i, x_j) f_j w_j, with
    /// `f` interleaved as [x0, y0, z0, x1, ...].
    pub fn stokes_single(&self, f: &[f64]) -> Result<Vec<f64>> {
        check_len(3 * self.len(), f.len())?;
        Ok(self.core().stokes_single(f))
    }

    /// Subtracted Stokes double layer
    /// (Ku)_i = -(1/8π) Σ_j (u_j - u_i)·T^δ(x_i, x_j)·n_j w_j - u_i/2.
    pub fn stokes_double(&self, u: &[f64]) -> Result<Vec<f64>> {
        check_len(3 * self.len(), u.len())?;
        Ok(self.core().stokes_double(u))
    }
}

/// Uncached single layer; see [`Discretization::laplace_single`].
pub fn laplace_single(quad: &SurfaceQuadrature, rho: &[f64], reg: &Regularization) -> Result<Vec<f64>> {
    check_len(quad.len(), rho.len())?;
    Ok(PairCore::new(quad, reg.delta, None).laplace_single(rho))
}

/// Uncached subtracted double layer; see [`Discretization::laplace_double`].
pub fn laplace_double_subtracted(quad: &SurfaceQuadrature, p: &[f64], reg: &Regularization) -> Result<Vec<f64>> {
    check_len(quad.len(), p.len())?;
    Ok(PairCore::new(quad, reg.delta, None).laplace_double(p))
}

/// Uncached Stokes single layer; see [`Discretization::stokes_single`].
pub fn stokes_single(quad: &SurfaceQuadrature, f: &[f64], reg: &Regularization) -> Result<Vec<f64>> {
    check_len(3 * quad.len(), f.len())?;
    Ok(PairCore::new(quad, reg.delta, None).stokes_single(f))
}

/// Uncached subtracted Stokes double layer; see [`Discretization::stokes_double`].
pub fn stokes_double_subtracted(quad: &SurfaceQuadrature, u: &[f64], reg: &Regularization) -> Result<Vec<f64>> {
    check_len(3 * quad.len(), u.len())?;
    Ok(PairCore::new(quad, reg.delta, None).stokes_double(u))
}
