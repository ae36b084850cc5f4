use std::ffi::CStr;
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use sdbie_ffi::*;

fn sphere(h: f64) -> *mut SdbieQuadrature {
    let mut q = ptr::null_mut();
    assert_eq!(unsafe { sdbie_quadrature_sphere(1.0, h, &mut q) }, SdbieStatus::Ok);
    assert!(!q.is_null());
    q
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(sdbie_version()) };
    assert_eq!(v.to_str().unwrap(), sdbie::VERSION);
}

#[test]
fn quadrature_round_trip() {
    let q = sphere(0.125);
    let n = unsafe { sdbie_quadrature_len(q) };
    assert!(n > 500);
    let mut w = vec![0.0; n];
    let mut x = vec![0.0; 3 * n];
    let mut nrm = vec![0.0; 3 * n];
    unsafe {
        assert_eq!(sdbie_quadrature_weights(q, w.as_mut_ptr(), n), SdbieStatus::Ok);
        assert_eq!(sdbie_quadrature_nodes(q, x.as_mut_ptr(), 3 * n), SdbieStatus::Ok);
        assert_eq!(sdbie_quadrature_normals(q, nrm.as_mut_ptr(), 3 * n), SdbieStatus::Ok);
    }
    for i in 0..n {
        let r = (x[3 * i].powi(2) + x[3 * i + 1].powi(2) + x[3 * i + 2].powi(2)).sqrt();
        assert!((r - 1.0).abs() < 1e-12);
        assert!((nrm[3 * i] - x[3 * i]).abs() < 1e-12);
    }
    let ones = vec![1.0; n];
    let mut area = 0.0;
    unsafe {
        assert_eq!(sdbie_quadrature_integrate(q, ones.as_ptr(), n, &mut area), SdbieStatus::Ok);
    }
    assert!((area - w.iter().sum::<f64>()).abs() < 1e-12);
    assert!((area / (4.0 * std::f64::consts::PI) - 1.0).abs() < 1e-2, "{area}");
    unsafe { sdbie_quadrature_free(q) };
}

#[test]
fn errors_are_reported() {
    let mut q = ptr::null_mut();
    let s = unsafe { sdbie_quadrature_sphere(-1.0, 0.1, &mut q) };
    assert_eq!(s, SdbieStatus::InvalidArgument);
    assert!(q.is_null());
    let msg = unsafe { CStr::from_ptr(sdbie_last_error()) }.to_str().unwrap().to_owned();
    assert!(msg.contains("radius"), "{msg}");

    assert_eq!(unsafe { sdbie_quadrature_sphere(1.0, 0.1, ptr::null_mut()) }, SdbieStatus::NullPointer);
    assert_eq!(unsafe { sdbie_quadrature_weights(ptr::null(), ptr::null_mut(), 0) }, SdbieStatus::NullPointer);

    let q = sphere(0.25);
    let mut small = [0.0; 2];
    assert_eq!(unsafe { sdbie_quadrature_weights(q, small.as_mut_ptr(), 2) }, SdbieStatus::BufferTooSmall);
    let ones = [1.0; 3];
    let mut out = 0.0;
    assert_eq!(unsafe { sdbie_quadrature_integrate(q, ones.as_ptr(), 3, &mut out) }, SdbieStatus::InvalidArgument);
    unsafe { sdbie_quadrature_free(q) };
    unsafe { sdbie_quadrature_free(ptr::null_mut()) };

    let mut a = 0.0;
    assert_eq!(unsafe { sdbie_mode_coefficient(0, 0.5, 1.0, 1.0, &mut a) }, SdbieStatus::InvalidArgument);
    assert_eq!(unsafe { sdbie_quadrature_len(ptr::null()) }, 0);
}

#[test]
fn mode_coefficient_matches_core() {
    let mut a = 0.0;
    assert_eq!(unsafe { sdbie_mode_coefficient(3, 0.75, 1.0, 1.0, &mut a) }, SdbieStatus::Ok);
    let b = sdbie::spectral::analytic_mode_coefficient(3, 0.75, 1.0, 1.0).unwrap();
    assert_eq!(a, b);
}

#[test]
fn bad_params_are_rejected() {
    let q = sphere(0.25);
    let mut p = sdbie_params_default();
    p.theta = 1.5;
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { sdbie_solve(q, &p, &mut s) }, SdbieStatus::InvalidArgument);
    assert!(s.is_null());
    p = sdbie_params_default();
    p.gamma = 0.5;
    p.outer = SdbieMethod::Gmres;
    assert_eq!(unsafe { sdbie_solve(q, &p, &mut s) }, SdbieStatus::Unsupported);
    unsafe { sdbie_quadrature_free(q) };
}

#[test]
fn coarse_solve() {
    let q = sphere(0.25);
    let n = unsafe { sdbie_quadrature_len(q) };
    let mut p = sdbie_params_default();
    p.theta = 0.75;
    let mut s = ptr::null_mut();
    assert_eq!(unsafe { sdbie_solve(q, &p, &mut s) }, SdbieStatus::Ok);
    let mut conv = SdbieConvergence::MaxIterations;
    let mut drag = [0.0; 3];
    let mut pd = vec![0.0; n];
    let mut u = vec![0.0; 3 * n];
    unsafe {
        assert_eq!(sdbie_solution_convergence(s, &mut conv), SdbieStatus::Ok);
        assert_eq!(sdbie_solution_drag(s, drag.as_mut_ptr(), 3), SdbieStatus::Ok);
        assert_eq!(sdbie_solution_pressure(s, pd.as_mut_ptr(), n), SdbieStatus::Ok);
        assert_eq!(sdbie_solution_velocity(s, u.as_mut_ptr(), 3 * n), SdbieStatus::Ok);
        assert!(sdbie_solution_iterations(s) > 0);
        assert!(sdbie_solution_residual(s) <= 1e-9);
    }
    assert_eq!(conv, SdbieConvergence::Converged);
    // Drag for unit flow past the unit porous sphere at unit permeability.
    assert!((drag[2] - std::f64::consts::PI).abs() < 0.05, "{drag:?}");
    assert!(drag[0].abs() < 1e-6 && drag[1].abs() < 1e-6);
    unsafe {
        sdbie_solution_free(s);
        sdbie_quadrature_free(q);
    }
}

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("sdbie.h")
}

#[test]
fn header_declares_every_export() {
    let text = std::fs::read_to_string(header()).unwrap();
    let src = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = src
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|l| l.split('(').next().unwrap())
        .collect();
    assert!(exports.len() > 15);
    for f in exports {
        assert!(text.contains(&format!("{f}(")), "missing {f}");
    }
    assert!(text.contains("typedef struct SdbieQuadrature SdbieQuadrature;"));
}

#[test]
fn header_compiles_as_c() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let dir = std::env::temp_dir().join(format!("sdbie-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("use.c");
    std::fs::write(
        &src,
        "#include \"sdbie.h\"\nint main(void) { SdbieParams p = sdbie_params_default(); \
         SdbieQuadrature *q = 0; (void)p; return sdbie_quadrature_len(q) == 0 ? 0 : 1; }\n",
    )
    .unwrap();
    let status = Command::new(&cc)
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-fsyntax-only")
        .arg("-I")
        .arg(header().parent().unwrap())
        .arg(&src)
        .status();
    match status {
        Ok(s) => assert!(s.success(), "C compiler rejected the header"),
        Err(e) => eprintln!("skipping: no C compiler ({e})"),
    }
    std::fs::remove_dir_all(&dir).ok();
}
