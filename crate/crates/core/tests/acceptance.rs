//! Acceptance report: one PASS/FAIL line per criterion, plus INFO lines with
//! the measured values. Set SDBIE_ACCEPT_STRICT=1 to exit non-zero when any
//! criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use sdbie::benchmarks::{
    darcy_selftest, drag, observed_order, stokes_selftest, ExactSolution, JosephTao, ShearFreeSphere, SphereFlowParams,
};
use sdbie::coupled::{
    run_ddm, state_errors, DdmConfig, DdmOutcome, DdmStatus, InnerConfig, InnerSolver, OuterMode, PhysicalParams,
};
use sdbie::geometry::{find_quadrature_points, partition_weights};
use sdbie::kernels::laplace_kernels_reg;
use sdbie::spectral::{analytic_mode_coefficient, assemble_iteration_operator, iteration_spectrum};
use sdbie::{Discretization, LevelSetSurface, Regularization, Vec3};

struct Report {
    failures: Vec<String>,
    passes: usize,
}

impl Report {
    fn check(&mut self, id: &str, ok: bool, what: &str) {
        println!("{} {id}: {what}", if ok { "PASS" } else { "FAIL" });
        if ok {
            self.passes += 1;
        } else {
            self.failures.push(id.to_string());
        }
    }
}

fn info(msg: impl AsRef<str>) {
    println!("INFO  {}", msg.as_ref());
}

fn sphere_disc(h: f64) -> Discretization {
    let q = find_quadrature_points(&LevelSetSurface::sphere(1.0).unwrap(), h).unwrap();
    Discretization::new(q, Regularization::from_grid(h, 3.0).unwrap())
}

fn ddm(disc: &Discretization, params: PhysicalParams, inner: InnerSolver, outer: OuterMode) -> DdmOutcome {
    let cfg = DdmConfig {
        params,
        inner: InnerConfig { solver: inner, ..InnerConfig::default() },
        outer,
        ..DdmConfig::default()
    };
    let t0 = Instant::now();
    let o = run_ddm(disc, &cfg, None, |_| Ok(())).expect("coupled solve");
    info(format!(
        "h={} kappa={} theta={} inner={inner:?} outer={outer:?}: {:?} after {} iterations, residual {:.3e}, {:.1} s",
        disc.quad.h,
        params.kappa,
        params.theta,
        o.status,
        o.iterations,
        o.final_residual,
        t0.elapsed().as_secs_f64()
    ));
    o
}

fn within_factor(v: f64, target: f64, f: f64) -> bool {
    v <= f * target && v >= target / f
}

fn main() {
    let mut rep = Report { failures: Vec::new(), passes: 0 };
    let start = Instant::now();

    // 1. Quadrature node counts.
    let count = |s: LevelSetSurface, h: f64| find_quadrature_points(&s, h).unwrap().len();
    let n16 = count(LevelSetSurface::sphere(1.0).unwrap(), 1.0 / 16.0);
    let n32 = count(LevelSetSurface::sphere(1.0).unwrap(), 1.0 / 32.0);
    let ne = count(LevelSetSurface::ellipsoid(1.0, 0.6, 0.4).unwrap(), 1.0 / 16.0);
    rep.check(
        "AC1",
        n16 == 4302 && n32 == 17070 && ne == 1742,
        &format!("node counts sphere {n16} (4302), {n32} (17070), ellipsoid {ne} (1742)"),
    );

    // 2. Boundary self-tests.
    let inner = InnerConfig { tol: 1e-11, ..InnerConfig::default() };
    let mut ok2 = true;
    let mut msg2 = Vec::new();
    for (name, f) in [
        ("Darcy", darcy_selftest as fn(f64, f64, &InnerConfig) -> sdbie::Result<_>),
        ("Stokes", stokes_selftest),
    ] {
        let a = f(1.0 / 16.0, 3.0, &inner).unwrap();
        let b = f(1.0 / 32.0, 3.0, &inner).unwrap();
        let order = observed_order(a.h, a.error, b.h, b.error);
        info(format!(
            "{name} self-test: errors {:.3e}, {:.3e}; order {order:.2}; {:.1} s at h=1/32",
            a.error, b.error, b.seconds
        ));
        ok2 &= order >= 4.5 && b.seconds < 120.0;
        msg2.push(format!("{name} order {order:.2}, {:.1} s", b.seconds));
    }
    rep.check("AC2", ok2, &format!("self-test orders >= 4.5 and < 2 min: {}", msg2.join("; ")));

    // 3. Table 1 on the unit sphere at unit permeability.
    let d16 = sphere_disc(1.0 / 16.0);
    let base = PhysicalParams::default();
    let sa05 = ddm(&d16, PhysicalParams { theta: 0.5, ..base }, InnerSolver::Gmres, OuterMode::SuccessiveApprox);
    let sa075 = ddm(&d16, PhysicalParams { theta: 0.75, ..base }, InnerSolver::Gmres, OuterMode::SuccessiveApprox);
    let local = sa075.history.records.get(1).map(|r| (r.darcy_inner, r.stokes_inner)).unwrap_or((0, 0));
    let jt = JosephTao::new(SphereFlowParams::unit(1.0)).unwrap();
    let sf = ShearFreeSphere::new(SphereFlowParams::unit(1.0)).unwrap();
    let (_, p16, u16) = state_errors(&d16, &sa075.state, &jt).unwrap();
    let (sd16, sp16, su16) = state_errors(&d16, &sa075.state, &sf).unwrap();
    info(format!("h=1/16 errors against the shear-free solution: drag {sd16:.3e}, p {sp16:.3e}, u {su16:.3e}"));
    let d32 = sphere_disc(1.0 / 32.0);
    let sa32 = ddm(&d32, PhysicalParams { theta: 0.75, ..base }, InnerSolver::Gmres, OuterMode::SuccessiveApprox);
    let (_, p32, u32_) = state_errors(&d32, &sa32.state, &jt).unwrap();
    let (sd32, sp32, su32) = state_errors(&d32, &sa32.state, &sf).unwrap();
    info(format!("h=1/32 errors against the shear-free solution: drag {sd32:.3e}, p {sp32:.3e}, u {su32:.3e}"));
    let counts_ok = sa05.status == DdmStatus::Converged
        && sa075.status == DdmStatus::Converged
        && sa05.iterations.abs_diff(19) <= 2
        && sa075.iterations.abs_diff(7) <= 2;
    let local_ok = local.0.abs_diff(5) <= 2 && local.1.abs_diff(8) <= 2;
    let err_ok = within_factor(p16, 3.450e-5, 3.0)
        && within_factor(u16, 1.053e-4, 3.0)
        && within_factor(p32, 1.442e-6, 3.0)
        && within_factor(u32_, 5.525e-6, 3.0);
    info(format!(
        "Table 1: outer {} / {}, local GMRES {local:?}, p errors {p16:.3e} / {p32:.3e}, u errors {u16:.3e} / {u32_:.3e}",
        sa05.iterations, sa075.iterations
    ));
    rep.check(
        "AC3",
        counts_ok && local_ok && err_ok,
        &format!("outer counts ok={counts_ok}, local GMRES ok={local_ok}, Joseph-Tao errors ok={err_ok}"),
    );

    // 4. Drag.
    let dz = sa075.drag.z;
    let jt0 = JosephTao::new(SphereFlowParams::unit(0.0)).unwrap();
    let tr: Vec<f64> = d16.quad.nodes.iter().flat_map(|x| jt0.body_traction(*x).to_array()).collect();
    let drag0 = drag(&d16.quad, &tr).unwrap().z;
    let tr1: Vec<f64> = d16.quad.nodes.iter().flat_map(|x| jt.body_traction(*x).to_array()).collect();
    let drag1 = drag(&d16.quad, &tr1).unwrap().z;
    info(format!("Joseph-Tao traction quadrature at kappa=1 gives {drag1:.6} (4 pi = {:.6})", 4.0 * PI));
    info(format!("solver drag {dz:.6}; shear-free closed form {:.6}", sf.drag()));
    let ok4 = (dz - 4.0 * PI).abs() <= 5e-3 * 4.0 * PI && (drag0 - 6.0 * PI).abs() <= 1e-3 * 6.0 * PI;
    rep.check("AC4", ok4, &format!("solver z-drag {dz:.5} vs 4 pi; kappa=0 traction quadrature {drag0:.5} vs 6 pi"));

    // 5. Table 2: outer GMRES over permeabilities, and SA non-convergence.
    let mut gm = Vec::new();
    for kappa in [1.0, 1e-2, 1e-4] {
        let o = ddm(&d16, PhysicalParams { kappa, ..base }.with_theta_multiplier(0.5), InnerSolver::Gmres, OuterMode::Gmres);
        gm.push((kappa, o.status, o.iterations));
    }
    let sa_small = {
        let cfg = DdmConfig {
            params: PhysicalParams { kappa: 1e-2, ..base }.with_theta_multiplier(0.75),
            ..DdmConfig::default()
        };
        let t0 = Instant::now();
        let r = run_ddm(&d16, &cfg, None, |_| Ok(()));
        let desc = match &r {
            Ok(o) => format!("{:?} after {} iterations, residual {:.3e}", o.status, o.iterations, o.final_residual),
            Err(e) => format!("error: {e}"),
        };
        info(format!("SA at kappa=1e-2, theta=0.75 kappa: {desc}, {:.1} s", t0.elapsed().as_secs_f64()));
        !matches!(r, Ok(ref o) if o.status == DdmStatus::Converged)
    };
    let ok5 = gm.iter().all(|(_, s, it)| *s == DdmStatus::Converged && *it <= 10) && sa_small;
    let gm_desc: Vec<String> = gm.iter().map(|(k, s, it)| format!("kappa={k}: {it} ({s:?})")).collect();
    rep.check(
        "AC5",
        ok5,
        &format!("outer GMRES at theta=0.5 kappa <= 10 [{}]; SA at kappa=1e-2 fails to converge in 100: {sa_small}", gm_desc.join(", ")),
    );

    // 6. Spectrum.
    let mut ok_a1 = true;
    for theta in [0.5, 0.75] {
        for n in 1..=50 {
            ok_a1 &= analytic_mode_coefficient(n, theta, 1.0, 1.0).unwrap() <= 1.0 - theta + 1e-12;
        }
        ok_a1 &= (analytic_mode_coefficient(1_000_000, theta, 1.0, 1.0).unwrap() - (1.0 - theta)).abs() < 1e-12;
    }
    let min_small = (1..=50)
        .map(|n| analytic_mode_coefficient(n, 0.75e-4, 1e-4, 1.0).unwrap())
        .fold(f64::INFINITY, f64::min);
    let t0 = Instant::now();
    let disc_dense = {
        let q = d16.quad.clone();
        Discretization::uncached(q, d16.reg)
    };
    let op = assemble_iteration_operator(&disc_dense, &PhysicalParams { theta: 0.75, ..base }).unwrap();
    let spec = iteration_spectrum(&op, 0.75, 50).unwrap();
    let frac = spec.fraction_near(0.25, 0.05);
    let rho = spec.spectral_radius();
    info(format!(
        "discrete spectrum h=1/16: radius {rho:.4}, {:.0}% within 0.05 of 0.25, Ritz converged {}, {:.1} s",
        100.0 * frac,
        spec.converged,
        t0.elapsed().as_secs_f64()
    ));
    info(format!("analytic minimum over n <= 50 at kappa=1e-4, theta=0.75 kappa: {min_small:.5}"));
    rep.check(
        "AC6",
        ok_a1 && min_small >= 0.99 && frac >= 0.8 && rho < 1.0,
        &format!("analytic bound at kappa=1 ok={ok_a1}; small-kappa min {min_small:.4} >= 0.99; clustering {frac:.2} >= 0.8; radius {rho:.4} < 1"),
    );
    drop(op);

    // 7. Property checks.
    let t0 = Instant::now();
    let mut props = Vec::new();
    let pou = (0..200).all(|k| {
        let t = k as f64 * 0.37;
        let n = Vec3::new(t.sin() * (2.0 * t).cos(), t.sin() * (2.0 * t).sin(), t.cos());
        (partition_weights(n).iter().sum::<f64>() - 1.0).abs() < 1e-14
    });
    props.push(("partition of unity", pou));
    let ones = vec![1.0; d16.len()];
    let hc = d16.laplace_double(&ones).unwrap();
    props.push(("Laplace constant identity", hc.iter().all(|v| (v - 0.5).abs() < 1e-12)));
    let c: Vec<f64> = (0..d16.len()).flat_map(|_| [0.3, -1.0, 2.0]).collect();
    let kc = d16.stokes_double(&c).unwrap();
    props.push(("Stokes constant identity", kc.iter().zip(&c).all(|(k, v)| (k + 0.5 * v).abs() < 1e-12)));
    let y = d16.quad.nodes[0];
    let jump: f64 = (0..d16.len())
        .map(|j| laplace_kernels_reg(y, d16.quad.nodes[j], d16.quad.normals[j], &d16.reg).1 * d16.quad.weights[j])
        .sum();
    let darcy_level = darcy_selftest(1.0 / 16.0, 3.0, &inner).unwrap().error;
    info(format!("jump sum {jump:.6}, |sum - 1/2| = {:.3e}, 10x self-test error = {:.3e}", (jump - 0.5).abs(), 10.0 * darcy_level));
    props.push(("jump value 1/2", (jump - 0.5).abs() <= 10.0 * darcy_level));
    let u_inf: Vec<f64> = (0..d16.len()).flat_map(|_| [0.0, 0.0, 1.0]).collect();
    let (u, _) = sdbie::coupled::solve_stokes(&d16, &u_inf, &InnerConfig::default(), None).unwrap();
    props.push(("free stream", u.iter().zip(&u_inf).all(|(a, b)| (a - b).abs() < 1e-8)));
    let x: Vec<f64> = d16.quad.nodes.iter().map(|p| p.x).collect();
    let z: Vec<f64> = d16.quad.nodes.iter().map(|p| p.z * p.z).collect();
    let lx = d16.laplace_single(&x).unwrap();
    let lz = d16.laplace_single(&z).unwrap();
    let wdot = |a: &[f64], b: &[f64]| a.iter().zip(b).zip(&d16.quad.weights).map(|((p, q), w)| p * q * w).sum::<f64>();
    let (s1, s2) = (wdot(&z, &lx), wdot(&x, &lz));
    let combo: Vec<f64> = x.iter().zip(&z).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
    let lc = d16.laplace_single(&combo).unwrap();
    let lin = lc.iter().zip(lx.iter().zip(&lz)).all(|(c, (a, b))| (c - (2.0 * a - 3.0 * b)).abs() < 1e-12);
    props.push(("linearity and symmetry", lin && (s1 - s2).abs() < 1e-12 * s1.abs().max(1.0)));
    let coarse = sphere_disc(0.25);
    let p75 = PhysicalParams { theta: 0.75, ..base };
    let a = ddm(&coarse, p75, InnerSolver::Gmres, OuterMode::SuccessiveApprox);
    let b = ddm(&coarse, p75, InnerSolver::SuccessiveApprox, OuterMode::SuccessiveApprox);
    let dq = a.state.q.iter().zip(&b.state.q).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    props.push(("GMRES vs SA at kappa=1", dq < 1e-7));
    let secs = t0.elapsed().as_secs_f64();
    for (name, ok) in &props {
        info(format!("property {name}: {}", if *ok { "holds" } else { "violated" }));
    }
    let failed: Vec<&str> = props.iter().filter(|p| !p.1).map(|p| p.0).collect();
    rep.check(
        "AC7",
        failed.is_empty() && secs < 60.0,
        &format!("property suite in {secs:.1} s; violated: {}", if failed.is_empty() { "none".into() } else { failed.join(", ") }),
    );

    // 8. O(N²) scaling of one apply.
    let time_apply = |d: &Discretization| {
        let u: Vec<f64> = d.quad.nodes.iter().flat_map(|p| [p.y, p.z, p.x]).collect();
        (0..3)
            .map(|_| {
                let t = Instant::now();
                std::hint::black_box(d.stokes_double(&u).unwrap());
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let slope = |a: f64, b: f64| (b / a).ln() / 2f64.ln();
    let (c16, c32) = (time_apply(&d16), time_apply(&d32));
    info(format!("cached near field: {c16:.3} s -> {c32:.3} s, log-log slope {:.2}", slope(c16, c32)));
    drop(d32);
    let direct = |h: f64| {
        let q = find_quadrature_points(&LevelSetSurface::sphere(1.0).unwrap(), h).unwrap();
        Discretization::uncached(q, Regularization::from_grid(h, 3.0).unwrap())
    };
    let t16 = time_apply(&direct(1.0 / 16.0));
    let t32 = time_apply(&direct(1.0 / 32.0));
    let s = slope(t16, t32);
    rep.check(
        "AC8",
        (s - 4.0).abs() <= 0.3,
        &format!("Stokes double-layer direct summation {t16:.3} s -> {t32:.3} s, log-log slope {s:.2} (4.0 +- 0.3)"),
    );

    println!(
        "acceptance: {} passed, {} failed ({}) in {:.0} s",
        rep.passes,
        rep.failures.len(),
        rep.failures.join(", "),
        start.elapsed().as_secs_f64()
    );
    if std::env::var("SDBIE_ACCEPT_STRICT").is_ok_and(|v| v == "1") && !rep.failures.is_empty() {
        std::process::exit(1);
    }
}
