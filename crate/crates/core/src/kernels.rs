//! Free-space Laplace and Stokes kernels and their smoothed versions.
//!
//! Each singular factor `1/r^p` is replaced by `s_k(r/δ)/r^p`, where the
//! smoothing functions are built from `erf` and a Gaussian so that the
//! on-surface regularization error is fifth order in δ.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{check_positive, Result};
use crate::vec3::Vec3;

/// Default ratio δ/h.
pub const DEFAULT_DELTA_RATIO: f64 = 3.0;

/// Below this value of r/δ the smoothing ratios are evaluated by power
/// series, which avoids cancellation between erf and the Gaussian term.
const SERIES_THRESHOLD: f64 = 0.25;
const SERIES_TERMS: usize = 32;

/// Smoothing length for the regularized kernels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub delta: f64,
}

impl Regularization {
    pub fn new(delta: f64) -> Result<Self> {
        check_positive("regularization length delta", delta)?;
        Ok(Self { delta })
    }

    /// δ = ratio·h.
    pub fn from_grid(h: f64, ratio: f64) -> Result<Self> {
        check_positive("grid spacing h", h)?;
        check_positive("delta ratio", ratio)?;
        Self::new(ratio * h)
    }
}

/// Which of the four smoothing functions to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// s1, for 1/r.
    S1,
    /// s2, for the Laplace dipole 1/r^3.
    S2,
    /// s3, for the Stokeslet 1/r^3 term.
    S3,
    /// s4, for the stresslet 1/r^5.
    S4,
}

impl Smoothing {
    pub const ALL: [Smoothing; 4] = [Smoothing::S1, Smoothing::S2, Smoothing::S3, Smoothing::S4];

    fn index(self) -> usize {
        self as usize
    }

    /// Power p of the singular factor 1/r^p that this function smooths.
    pub fn power(self) -> i32 {
        [1, 3, 3, 5][self.index()]
    }
}

fn poly_terms(k: Smoothing, r: f64) -> f64 {
    let sp = PI.sqrt();
    let r2 = r * r;
    match k {
        Smoothing::S1 => -(2.0 / (3.0 * sp)) * r * (2.0 * r2 - 5.0),
        Smoothing::S2 => (2.0 / (3.0 * sp)) * r * (2.0 * r2 - 3.0),
        Smoothing::S3 => -(2.0 / (3.0 * sp)) * r * ((4.0 * r2 - 14.0) * r2 + 3.0),
        Smoothing::S4 => -(2.0 / (9.0 * sp)) * r * (((8.0 * r2 - 36.0) * r2 + 6.0) * r2 + 9.0),
    }
}

/// The smoothing function s_k(r).
pub fn smoothing(k: Smoothing, r: f64) -> f64 {
    libm::erf(r) + poly_terms(k, r) * (-r * r).exp()
}

/// Taylor coefficients of s_k(r)/r^p, where p is the kernel power.
fn series_coefficients() -> &'static [[f64; SERIES_TERMS]; 4] {
    static COEF: OnceLock<[[f64; SERIES_TERMS]; 4]> = OnceLock::new();
    COEF.get_or_init(|| {
        let n = SERIES_TERMS + 8;
        let sp = PI.sqrt();
        // Coefficients in powers of r.
        let mut erf = vec![0.0; n];
        let mut gauss = vec![0.0; n];
        let mut fact = 1.0;
        for m in 0..n / 2 {
            if m > 0 {
                fact *= m as f64;
            }
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            gauss[2 * m] = sign / fact;
            if 2 * m + 1 < n {
                erf[2 * m + 1] = 2.0 / sp * sign / (fact * (2 * m + 1) as f64);
            }
        }
        let c = 2.0 / (3.0 * sp);
        let polys: [Vec<(usize, f64)>; 4] = [
            vec![(1, 5.0 * c), (3, -2.0 * c)],
            vec![(1, -3.0 * c), (3, 2.0 * c)],
            vec![(1, -3.0 * c), (3, 14.0 * c), (5, -4.0 * c)],
            vec![(1, -9.0 * c / 3.0), (3, -6.0 * c / 3.0), (5, 36.0 * c / 3.0), (7, -8.0 * c / 3.0)],
        ];
        let mut out = [[0.0; SERIES_TERMS]; 4];
        for (k, poly) in polys.iter().enumerate() {
            let mut s = erf.clone();
            for &(d, a) in poly {
                for (m, g) in gauss.iter().enumerate() {
                    if m + d < n {
                        s[m + d] += a * g;
                    }
                }
            }
            let p = Smoothing::ALL[k].power() as usize;
            // Coefficients below r^p vanish identically; they are dropped
            // rather than carried as rounding residue.
            for j in 0..SERIES_TERMS {
                out[k][j] = s[j + p];
            }
        }
        out
    })
}

fn series_eval(c: &[f64; SERIES_TERMS], r: f64) -> f64 {
    let r2 = r * r;
    // Only even powers survive: each s_k is odd and p is odd.
    let mut acc = 0.0;
    let mut j = SERIES_TERMS - 1;
    if j % 2 == 1 {
        j -= 1;
    }
    loop {
        acc = acc * r2 + c[j];
        if j < 2 {
            break;
        }
        j -= 2;
    }
    acc
}

/// Values of s_k(r)/r^p for all four functions, finite at r = 0.
pub fn smoothing_ratios(r: f64) -> [f64; 4] {
    if r < SERIES_THRESHOLD {
        let c = series_coefficients();
        return [series_eval(&c[0], r), series_eval(&c[1], r), series_eval(&c[2], r), series_eval(&c[3], r)];
    }
    let e = libm::erf(r);
    let g = (-r * r).exp();
    let r2 = r * r;
    let r3 = r2 * r;
    let r5 = r3 * r2;
    [
        (e + poly_terms(Smoothing::S1, r) * g) / r,
        (e + poly_terms(Smoothing::S2, r) * g) / r3,
        (e + poly_terms(Smoothing::S3, r) * g) / r3,
        (e + poly_terms(Smoothing::S4, r) * g) / r5,
    ]
}

/// Regularized replacements of 1/r, 1/r^3 (dipole), 1/r^3 (Stokeslet) and
/// 1/r^5 at separation `r`.
#[inline]
pub fn kernel_factors(r: f64, delta: f64) -> [f64; 4] {
    let g = smoothing_ratios(r / delta);
    let id = 1.0 / delta;
    let id3 = id * id * id;
    let id5 = id3 * id * id;
    [g[0] * id, g[1] * id3, g[2] * id3, g[3] * id5]
}

/// Regularized Green's function and its normal derivative at the source,
/// with target `y`, source `x` and source normal `n`.
///
/// At coincident points the Green's function takes its finite limit
/// `-s1'(0)/(4πδ)`; the dipole term vanishes.
pub fn laplace_kernels_reg(y: Vec3, x: Vec3, n: Vec3, reg: &Regularization) -> (f64, f64) {
    let d = y - x;
    let f = kernel_factors(d.norm(), reg.delta);
    (-f[0] / (4.0 * PI), -d.dot(n) * f[1] / (4.0 * PI))
}

/// Singular Green's function and normal derivative, for comparison.
pub fn laplace_kernels(y: Vec3, x: Vec3, n: Vec3) -> (f64, f64) {
    let d = y - x;
    let r = d.norm();
    (-1.0 / (4.0 * PI * r), -d.dot(n) / (4.0 * PI * r * r * r))
}

fn outer(d: Vec3, s: f64, diag: f64) -> [[f64; 3]; 3] {
    let a = d.to_array();
    let mut m = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[i] * a[j] * s;
        }
        m[i][i] += diag;
    }
    m
}

/// Regularized Stokeslet tensor. At coincident points it is the finite
/// limit `s1'(0)/δ · I`.
pub fn stokeslet_reg(y: Vec3, x: Vec3, reg: &Regularization) -> [[f64; 3]; 3] {
    let d = y - x;
    let f = kernel_factors(d.norm(), reg.delta);
    outer(d, f[2], f[0])
}

pub fn stokeslet(y: Vec3, x: Vec3) -> [[f64; 3]; 3] {
    let d = y - x;
    let r = d.norm();
    outer(d, 1.0 / (r * r * r), 1.0 / r)
}

/// Regularized stresslet contracted with the source normal:
/// `Q_ij = -6 (ŷ·n) ŷ_i ŷ_j s4/r^5`.
pub fn stresslet_reg_apply(y: Vec3, x: Vec3, n: Vec3, reg: &Regularization) -> [[f64; 3]; 3] {
    let d = y - x;
    let f = kernel_factors(d.norm(), reg.delta);
    outer(d, -6.0 * d.dot(n) * f[3], 0.0)
}

pub fn stresslet_apply(y: Vec3, x: Vec3, n: Vec3) -> [[f64; 3]; 3] {
    let d = y - x;
    let r = d.norm();
    outer(d, -6.0 * d.dot(n) / r.powi(5), 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reg(delta: f64) -> Regularization {
        Regularization::new(delta).unwrap()
    }

    #[test]
    fn smoothing_endpoints() {
        for k in Smoothing::ALL {
            assert_eq!(smoothing(k, 0.0), 0.0);
            assert!((smoothing(k, 30.0) - 1.0).abs() < 1e-15);
        }
        let sp = PI.sqrt();
        let s2 = libm::erf(1.0) - 2.0 / (3.0 * sp) * (-1.0f64).exp();
        assert!((smoothing(Smoothing::S2, 1.0) - s2).abs() < 1e-15);
        // The quoted six-digit value 0.704318 is itself rounded loosely.
        assert!((smoothing(Smoothing::S2, 1.0) - 0.704318).abs() < 2e-5);
    }

    #[test]
    fn ratio_limits_at_zero() {
        let sp = PI.sqrt();
        let expected = [16.0 / (3.0 * sp), 8.0 / (3.0 * sp), 32.0 / (3.0 * sp), 128.0 / (15.0 * sp)];
        let got = smoothing_ratios(0.0);
        for k in 0..4 {
            assert!((got[k] - expected[k]).abs() < 1e-14 * expected[k], "k={k}");
        }
    }

    #[test]
    fn series_matches_direct_formula_at_threshold() {
        for &r in &[0.2, 0.2499, 0.25, 0.26] {
            let c = series_coefficients();
            for k in 0..4 {
                let p = Smoothing::ALL[k].power();
                let direct = smoothing(Smoothing::ALL[k], r) / r.powi(p);
                let series = series_eval(&c[k], r);
                assert!((direct - series).abs() < 1e-12 * series.abs(), "k={k} r={r}");
            }
        }
    }

    #[test]
    fn far_field_saturation() {
        let r = reg(0.1);
        let x = Vec3::ZERO;
        let y = Vec3::new(0.6, 0.8, 0.0);
        let (g, _) = laplace_kernels_reg(y, x, Vec3::axis(2), &r);
        assert!((g + 1.0 / (4.0 * PI)).abs() < 1e-15);

        let s = stokeslet_reg(Vec3::new(1.0, 0.0, 0.0), x, &reg(0.05));
        let want = [[2.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((s[i][j] - want[i][j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coincident_points_are_finite() {
        let r = reg(0.1);
        let x = Vec3::new(0.3, -0.2, 0.1);
        let (g, dg) = laplace_kernels_reg(x, x, Vec3::axis(0), &r);
        assert_eq!(dg, 0.0);
        let limit = -16.0 / (3.0 * PI.sqrt()) / 0.1 / (4.0 * PI);
        assert!((g - limit).abs() < 1e-12 * limit.abs());
        let q = stresslet_reg_apply(x, x, Vec3::axis(1), &r);
        assert!(q.iter().flatten().all(|v| *v == 0.0));
        let s = stokeslet_reg(x, x, &r);
        assert_eq!(s[0][1], 0.0);
        assert!((s[0][0] - 16.0 / (3.0 * PI.sqrt()) / 0.1).abs() < 1e-12);
    }

    #[test]
    fn stresslet_vanishes_for_tangential_offsets() {
        let q = stresslet_reg_apply(Vec3::new(1.0, 0.0, 0.0), Vec3::ZERO, Vec3::axis(2), &reg(0.01));
        assert!(q.iter().flatten().all(|v| v.abs() < 1e-12));
    }
}
