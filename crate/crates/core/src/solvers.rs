//! Matrix-free iterative solvers over abstract linear applies.
//!
//! An apply is any `FnMut(&[f64], &mut [f64]) -> Result<()>` writing `A x`
//! into its second argument. Applies may fail (for example when they wrap an
//! inner iterative solve), and failures propagate out of the solver.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::lu::partial_pivoting::{factor, solve};
use faer::perm::PermRef;
use faer::{c64, Conj, Mat, MatMut};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};

/// Default iteration cap for GMRES.
pub const GMRES_MAXIT: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Relative change (successive approximation) or relative residual
    /// (GMRES) at the last iteration.
    pub residual: f64,
    pub converged: bool,
    /// The same quantity after every iteration.
    pub history: Vec<f64>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Fixed-point iteration x <- apply(x) + b from `x0`.
///
/// Stops when ‖x_{n+1} - x_n‖ ≤ tol·‖x_{n+1}‖. The iteration count is the
/// number of applies performed, including the one that detects convergence.
pub fn successive_approx<F>(mut apply: F, b: &[f64], x0: &[f64], tol: f64, maxit: usize) -> Result<SolveReport>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    check_len(b.len(), x0.len())?;
    let mut x = x0.to_vec();
    let mut next = vec![0.0; b.len()];
    let mut history = Vec::new();
    for it in 1..=maxit {
        apply(&x, &mut next)?;
        let mut diff2 = 0.0;
        let mut norm2 = 0.0;
        for ((n, bi), xi) in next.iter_mut().zip(b).zip(&x) {
            *n += bi;
            diff2 += (*n - xi) * (*n - xi);
            norm2 += *n * *n;
        }
        if !(diff2.is_finite() && norm2.is_finite()) {
            return Err(Error::Divergence { solver: "successive approximation", iteration: it });
        }
        let change = if norm2 > 0.0 { (diff2 / norm2).sqrt() } else if diff2 == 0.0 { 0.0 } else { f64::INFINITY };
        history.push(change);
        std::mem::swap(&mut x, &mut next);
        if change <= tol {
            return Ok(SolveReport { solution: x, iterations: it, residual: change, converged: true, history });
        }
    }
    let residual = history.last().copied().unwrap_or(f64::INFINITY);
    Ok(SolveReport { solution: x, iterations: maxit, residual, converged: false, history })
}

/// Full GMRES with modified Gram-Schmidt from a zero initial guess.
pub fn gmres<F>(apply: F, b: &[f64], tol: f64, maxit: usize) -> Result<SolveReport>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    gmres_from(apply, b, None, tol, maxit)
}

/// Full GMRES from an optional initial guess. The residual is measured
/// relative to ‖b‖.
pub fn gmres_from<F>(apply: F, b: &[f64], x0: Option<&[f64]>, tol: f64, maxit: usize) -> Result<SolveReport>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    gmres_monitored(apply, b, x0, maxit, |p| if p.residual <= tol { Control::Converged } else { Control::Continue })
}

/// Decision returned by a GMRES monitor after each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Converged,
    Stop,
}

/// State of a GMRES run after one Arnoldi step.
pub struct GmresProgress<'a> {
    pub iteration: usize,
    /// Residual norm relative to ‖b‖.
    pub residual: f64,
    /// Absolute residual norm.
    pub abs_residual: f64,
    x0: &'a [f64],
    basis: &'a [Vec<f64>],
    h: &'a [Vec<f64>],
    g: &'a [f64],
}

impl GmresProgress<'_> {
    /// Forms the current iterate, at a cost of one pass over the basis.
    pub fn solution(&self) -> Vec<f64> {
        let mut x = self.x0.to_vec();
        combine(self.h, self.g, self.basis, self.iteration, &mut x);
        x
    }
}

fn combine(h: &[Vec<f64>], g: &[f64], v: &[Vec<f64>], k: usize, x: &mut [f64]) {
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let mut s = g[i];
        for l in (i + 1)..k {
            s -= h[l][i] * y[l];
        }
        y[i] = s / h[i][i];
    }
    for (l, yl) in y.iter().enumerate() {
        axpy(*yl, &v[l], x);
    }
}

/// GMRES whose stopping rule is supplied by `monitor`, which sees the
/// progress after every step.
pub fn gmres_monitored<F, M>(mut apply: F, b: &[f64], x0: Option<&[f64]>, maxit: usize, mut monitor: M) -> Result<SolveReport>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
    M: FnMut(&GmresProgress<'_>) -> Control,
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = match x0 {
        Some(g) => {
            check_len(n, g.len())?;
            g.to_vec()
        }
        None => vec![0.0; n],
    };
    if bnorm == 0.0 {
        return Ok(SolveReport { solution: vec![0.0; n], iterations: 0, residual: 0.0, converged: true, history: vec![] });
    }
    let mut r = b.to_vec();
    if x0.is_some() {
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax)?;
        axpy(-1.0, &ax, &mut r);
    }
    let beta = norm(&r);
    if !beta.is_finite() {
        return Err(Error::Divergence { solver: "GMRES", iteration: 0 });
    }
    let initial = GmresProgress { iteration: 0, residual: beta / bnorm, abs_residual: beta, x0: &x, basis: &[], h: &[], g: &[] };
    if beta == 0.0 || monitor(&initial) == Control::Converged {
        return Ok(SolveReport { solution: x, iterations: 0, residual: beta / bnorm, converged: true, history: vec![] });
    }

    let mut v: Vec<Vec<f64>> = vec![r.iter().map(|t| t / beta).collect()];
    let mut h: Vec<Vec<f64>> = Vec::new(); // h[j] = column j, length j+2
    let (mut cs, mut sn) = (Vec::<f64>::new(), Vec::<f64>::new());
    let mut g = vec![beta];
    let mut history = Vec::new();
    let mut w = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    for j in 0..maxit.min(n) {
        apply(&v[j], &mut w)?;
        let wnorm0 = norm(&w);
        let mut col = vec![0.0; j + 2];
        for i in 0..=j {
            col[i] = dot(&w, &v[i]);
            axpy(-col[i], &v[i], &mut w);
        }
        let hn = norm(&w);
        col[j + 1] = hn;
        if !hn.is_finite() {
            return Err(Error::Divergence { solver: "GMRES", iteration: j + 1 });
        }
        for i in 0..j {
            let t = cs[i] * col[i] + sn[i] * col[i + 1];
            col[i + 1] = -sn[i] * col[i] + cs[i] * col[i + 1];
            col[i] = t;
        }
        let rho = col[j].hypot(col[j + 1]);
        let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (col[j] / rho, col[j + 1] / rho) };
        col[j] = rho;
        col[j + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        g.push(-s * g[j]);
        g[j] *= c;
        h.push(col);
        iterations = j + 1;
        let abs = g[j + 1].abs();
        history.push(abs / bnorm);
        let progress =
            GmresProgress { iteration: j + 1, residual: abs / bnorm, abs_residual: abs, x0: &x, basis: &v, h: &h, g: &g };
        match monitor(&progress) {
            Control::Converged => {
                converged = true;
                break;
            }
            Control::Stop => break,
            Control::Continue => {}
        }
        if hn <= 1e-14 * wnorm0.max(f64::MIN_POSITIVE) {
            return Err(Error::Breakdown { step: j + 1 });
        }
        v.push(w.iter().map(|t| t / hn).collect());
    }

    combine(&h, &g, &v, iterations, &mut x);
    if x.iter().any(|t| !t.is_finite()) {
        return Err(Error::Divergence { solver: "GMRES", iteration: iterations });
    }
    let residual = history.last().copied().unwrap_or(0.0);
    Ok(SolveReport { solution: x, iterations, residual, converged, history })
}

/// Ritz values from [`arnoldi_eigs`].
#[derive(Debug, Clone)]
pub struct EigenEstimate {
    /// Sorted by descending real part.
    pub values: Vec<c64>,
    /// Residual bound |h_{m+1,m}|·|e_m^T z| for each value, same order.
    pub residuals: Vec<f64>,
    /// Every requested value met the residual tolerance.
    pub converged: bool,
    /// Fewer than the requested number of values could be formed.
    pub partial: bool,
    pub restarts: usize,
}

const RITZ_TOL: f64 = 1e-10;

fn random_unit_orthogonal(rng: &mut ChaCha8Rng, basis: &[Vec<f64>], n: usize) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
        for _ in 0..2 {
            for b in basis {
                let c = dot(&w, b);
                axpy(-c, b, &mut w);
            }
        }
        let nw = norm(&w);
        if nw > 1e-8 {
            w.iter_mut().for_each(|t| *t /= nw);
            return Some(w);
        }
    }
    None
}

/// Estimates the `k` eigenvalues of largest magnitude of a real operator
/// with a thick-restarted Arnoldi process. At most `iters` restart cycles
/// are performed.
pub fn arnoldi_eigs<F>(mut apply: F, dim: usize, k: usize, iters: usize) -> Result<EigenEstimate>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    if k == 0 || k > dim {
        return Err(Error::InvalidParameter(format!("requested {k} eigenvalues of a {dim}-dimensional operator")));
    }
    let m = dim.min((2 * k + 10).max(20));
    let mut rng = ChaCha8Rng::seed_from_u64(0x5d_b1e);
    let start = random_unit_orthogonal(&mut rng, &[], dim).expect("nonzero random vector");
    let mut v: Vec<Vec<f64>> = vec![start];
    // Projected matrix, (m+1) x m, column-major through h[row][col].
    let mut h = vec![vec![0.0; m]; m + 1];
    let mut j0 = 0;
    let mut w = vec![0.0; dim];
    let mut restarts = 0;

    loop {
        // Expand the basis to m vectors.
        let mut size = m;
        let mut exhausted = false;
        for j in j0..m {
            apply(&v[j], &mut w)?;
            let scale = norm(&w);
            for _ in 0..2 {
                for i in 0..=j {
                    let c = dot(&w, &v[i]);
                    h[i][j] += c;
                    axpy(-c, &v[i], &mut w);
                }
            }
            let beta = norm(&w);
            if !beta.is_finite() {
                return Err(Error::Divergence { solver: "Arnoldi", iteration: j + 1 });
            }
            if j + 1 == dim {
                size = j + 1;
                exhausted = true;
                h[j + 1][j] = 0.0;
                break;
            }
            if beta <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
                // Invariant subspace: continue with a fresh direction.
                h[j + 1][j] = 0.0;
                match random_unit_orthogonal(&mut rng, &v, dim) {
                    Some(r) => v.push(r),
                    None => {
                        size = j + 1;
                        exhausted = true;
                        break;
                    }
                }
            } else {
                h[j + 1][j] = beta;
                v.push(w.iter().map(|t| t / beta).collect());
            }
        }

        let hm = Mat::<f64>::from_fn(size, size, |i, j| h[i][j]);
        let eig = hm.eigen().map_err(|_| Error::Singular("Ritz eigen-decomposition"))?;
        let vals: Vec<c64> = (0..size).map(|i| eig.S().column_vector()[i]).collect();
        let u = eig.U();
        let tail = if exhausted { 0.0 } else { h[size][size - 1].abs() };
        let resid: Vec<f64> = (0..size)
            .map(|i| {
                let nz = (0..size).map(|r| u[(r, i)].norm_sqr()).sum::<f64>().sqrt();
                tail * u[(size - 1, i)].norm() / nz.max(f64::MIN_POSITIVE)
            })
            .collect();
        let mut order: Vec<usize> = (0..size).collect();
        order.sort_by(|&a, &b| vals[b].norm().total_cmp(&vals[a].norm()));
        let want = k.min(size);
        let scale = vals[order[0]].norm().max(f64::MIN_POSITIVE);
        let done = order[..want].iter().all(|&i| resid[i] <= RITZ_TOL * scale);

        if done || exhausted || restarts >= iters {
            let mut chosen: Vec<(c64, f64)> = order[..want].iter().map(|&i| (vals[i], resid[i])).collect();
            chosen.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(b.0.im.total_cmp(&a.0.im)));
            return Ok(EigenEstimate {
                values: chosen.iter().map(|c| c.0).collect(),
                residuals: chosen.iter().map(|c| c.1).collect(),
                converged: done || exhausted,
                partial: want < k,
                restarts,
            });
        }

        // Thick restart: keep a real orthonormal basis of the wanted Ritz
        // vectors (both parts of complex pairs) plus the residual direction.
        let keep_target = (k + k / 2 + 1).min(m.saturating_sub(2)).max(1);
        let mut y: Vec<Vec<f64>> = Vec::new();
        let mut used = vec![false; size];
        for &i in &order {
            if y.len() >= keep_target {
                break;
            }
            if used[i] {
                continue;
            }
            used[i] = true;
            let mut cand = vec![(0..size).map(|r| u[(r, i)].re).collect::<Vec<f64>>()];
            if vals[i].im.abs() > 1e-14 * scale {
                cand.push((0..size).map(|r| u[(r, i)].im).collect());
                if let Some(p) = (0..size).find(|&p| !used[p] && (vals[p] - vals[i].conj()).norm() <= 1e-10 * scale) {
                    used[p] = true;
                }
            }
            for mut c in cand {
                for _ in 0..2 {
                    for b in &y {
                        let d = dot(&c, b);
                        axpy(-d, b, &mut c);
                    }
                }
                let nc = norm(&c);
                if nc > 1e-10 {
                    c.iter_mut().for_each(|t| *t /= nc);
                    y.push(c);
                }
            }
        }
        let p = y.len();
        let mut new_v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        for yc in &y {
            let mut acc = vec![0.0; dim];
            for (r, coef) in yc.iter().enumerate() {
                axpy(*coef, &v[r], &mut acc);
            }
            new_v.push(acc);
        }
        new_v.push(v[size].clone());
        let mut new_h = vec![vec![0.0; m]; m + 1];
        for a in 0..p {
            for c in 0..p {
                let mut s = 0.0;
                for r in 0..size {
                    let mut hy = 0.0;
                    for l in 0..size {
                        hy += h[r][l] * y[c][l];
                    }
                    s += y[a][r] * hy;
                }
                new_h[a][c] = s;
            }
            new_h[p][a] = h[size][size - 1] * y[a][size - 1];
        }
        v = new_v;
        h = new_h;
        j0 = p;
        restarts += 1;
    }
}

/// Dense LU factorization with partial pivoting, factored in place.
pub struct DenseLu {
    lu: Mat<f64>,
    perm: Vec<usize>,
    perm_inv: Vec<usize>,
}

impl DenseLu {
    pub fn factor(mut a: Mat<f64>, what: &'static str) -> Result<Self> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "LU needs a square matrix");
        let par = faer::get_global_parallelism();
        let mut perm = vec![0usize; n];
        let mut perm_inv = vec![0usize; n];
        let mut mem = MemBuffer::new(factor::lu_in_place_scratch::<usize, f64>(n, n, par, Default::default()));
        factor::lu_in_place(a.as_mut(), &mut perm, &mut perm_inv, par, MemStack::new(&mut mem), Default::default());
        let dmax = (0..n).map(|i| a[(i, i)].abs()).fold(0.0, f64::max);
        let bad = (0..n).any(|i| {
            let d = a[(i, i)];
            !d.is_finite() || d.abs() <= 1e-14 * dmax
        });
        if bad || dmax == 0.0 {
            return Err(Error::Singular(what));
        }
        Ok(Self { lu: a, perm, perm_inv })
    }

    pub fn dim(&self) -> usize {
        self.lu.nrows()
    }

    /// Overwrites `rhs` with the solution of A X = rhs.
    pub fn solve_in_place(&self, rhs: MatMut<'_, f64>) {
        let n = self.dim();
        let par = faer::get_global_parallelism();
        let perm = PermRef::new_checked(&self.perm, &self.perm_inv, n);
        let mut mem = MemBuffer::new(solve::solve_in_place_scratch::<usize, f64>(n, rhs.ncols(), par));
        solve::solve_in_place_with_conj(
            self.lu.as_ref(),
            self.lu.as_ref(),
            perm,
            Conj::No,
            rhs,
            par,
            MemStack::new(&mut mem),
        );
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        self.solve_in_place(x.as_mut());
        (0..b.len()).map(|i| x[(i, 0)]).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_apply(a: &[Vec<f64>]) -> impl FnMut(&[f64], &mut [f64]) -> Result<()> + '_ {
        move |x, y| {
            for (yi, row) in y.iter_mut().zip(a) {
                *yi = dot(row, x);
            }
            Ok(())
        }
    }

    fn random_matrix(n: usize, seed: u64, shift: f64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| (0..n).map(|j| rng.random::<f64>() - 0.5 + if i == j { shift } else { 0.0 }).collect())
            .collect()
    }

    #[test]
    fn sa_zero_map_returns_b() {
        let b = vec![1.0, -2.0, 3.0];
        let r = successive_approx(|_x, y| { y.fill(0.0); Ok(()) }, &b, &[0.0; 3], 1e-12, 10).unwrap();
        assert!(r.converged);
        assert_eq!(r.solution, b);
        assert_eq!(r.iterations, 2);
    }

    #[test]
    fn sa_geometric_series() {
        let tol = 1e-9;
        let r = successive_approx(|x, y| { y[0] = 0.5 * x[0]; Ok(()) }, &[1.0], &[0.0], tol, 200).unwrap();
        assert!(r.converged);
        assert!((r.solution[0] - 2.0).abs() < 4.0 * tol);
        let expected = (1.0 / tol).log2();
        assert!((r.iterations as f64 - expected).abs() <= 2.0, "{} vs {expected}", r.iterations);
    }

    #[test]
    fn sa_divergence_is_reported() {
        let r = successive_approx(|x, y| { y[0] = 1e300 * x[0]; Ok(()) }, &[1.0], &[1.0], 1e-9, 50);
        assert!(matches!(r, Err(Error::Divergence { .. })));
    }

    #[test]
    fn gmres_identity_one_step() {
        let b = vec![3.0, 4.0];
        let r = gmres(|x, y| { y.copy_from_slice(x); Ok(()) }, &b, 1e-12, 10).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.converged);
        assert!((r.solution[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn gmres_matches_lu() {
        let n = 20;
        let a = random_matrix(n, 7, 4.0);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let tol = 1e-10;
        let r = gmres(dense_apply(&a), &b, tol, 200).unwrap();
        assert!(r.converged && r.residual <= tol);
        let lu = DenseLu::factor(Mat::from_fn(n, n, |i, j| a[i][j]), "test").unwrap();
        let x = lu.solve_vec(&b);
        let err = r.solution.iter().zip(&x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 10.0 * tol * norm(&x), "err {err}");
        for w in r.history.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn gmres_warm_start() {
        let n = 12;
        let a = random_matrix(n, 3, 3.0);
        let b = vec![1.0; n];
        let exact = gmres(dense_apply(&a), &b, 1e-13, 100).unwrap().solution;
        let r = gmres_from(dense_apply(&a), &b, Some(&exact), 1e-10, 100).unwrap();
        assert_eq!(r.iterations, 0);
    }

    #[test]
    fn arnoldi_diagonal() {
        let d: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let e = arnoldi_eigs(|x, y| { for i in 0..10 { y[i] = d[i] * x[i]; } Ok(()) }, 10, 3, 50).unwrap();
        assert_eq!(e.values.len(), 3);
        for (v, want) in e.values.iter().zip([10.0, 9.0, 8.0]) {
            assert!((v.re - want).abs() < 1e-8 && v.im.abs() < 1e-8);
        }
    }

    #[test]
    fn arnoldi_scaled_identity() {
        let theta = 0.3;
        let e = arnoldi_eigs(|x, y| { for i in 0..x.len() { y[i] = (1.0 - theta) * x[i]; } Ok(()) }, 40, 5, 10).unwrap();
        assert_eq!(e.values.len(), 5);
        assert!(e.values.iter().all(|v| (v.re - (1.0 - theta)).abs() < 1e-12 && v.im.abs() < 1e-12));
    }

    #[test]
    fn arnoldi_restarts_on_nonsymmetric_operator() {
        // A = S D S^-1 with a mild similarity transform.
        let n = 150;
        let r = random_matrix(n, 11, 0.0);
        let s = Mat::<f64>::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } + 0.05 * r[i][j]);
        let lu = DenseLu::factor(s.clone(), "test").unwrap();
        let mut sinv = Mat::<f64>::identity(n, n);
        lu.solve_in_place(sinv.as_mut());
        let lam: Vec<f64> = (0..n).map(|i| 0.95f64.powi(i as i32)).collect();
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| (0..n).map(|l| s[(i, l)] * lam[l] * sinv[(l, j)]).sum()).collect())
            .collect();
        let e = arnoldi_eigs(dense_apply(&a), n, 4, 500).unwrap();
        assert!(e.restarts > 0);
        assert!(e.converged);
        for (v, want) in e.values.iter().zip(&lam) {
            assert!((v.re - want).abs() < 1e-8 && v.im.abs() < 1e-8, "{v:?} vs {want}");
        }
    }
}
