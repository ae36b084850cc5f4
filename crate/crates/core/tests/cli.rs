use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sdbie"));
    c.env("SDBIE_THREADS", "2");
    c
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("sdbie-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn quadrature_export() {
    let out = scratch("quad");
    let st = bin().args(["quadrature", "--surface", "ellipsoid", "--h", "0.0625", "--out"]).arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let csv = read(&out.join("quadrature.csv"));
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("# sdbie "));
    assert_eq!(lines.next().unwrap(), "x,y,z,nx,ny,nz,w");
    assert_eq!(lines.count(), 1742);
    let manifest = read(&out.join("manifest.txt"));
    assert!(manifest.contains("nodes = 1742"));
    assert!(manifest.contains("time.total = "));
}

#[test]
fn usage_errors_exit_with_one() {
    let st = bin().args(["solve", "--theta", "1.5"]).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&st.stderr).contains("relaxation"));
    let st = bin().args(["solve", "--surface", "torus"]).output().unwrap();
    assert_eq!(st.status.code(), Some(1));
    let st = bin().arg("--help").output().unwrap();
    assert_eq!(st.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&st.stdout).contains("selftest-darcy"));
}

#[test]
fn analytic_spectrum_file() {
    let out = scratch("modes");
    let st = bin()
        .args(["spectrum", "--analytic", "--kappa", "1e-4", "--theta-mult", "0.5", "--nmax", "50", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let csv = read(&out.join("modes.csv"));
    let rows: Vec<&str> = csv.lines().skip(2).collect();
    assert_eq!(rows.len(), 50);
    let last: f64 = rows[49].split(',').nth(1).unwrap().parse().unwrap();
    assert!((last - 0.99985).abs() < 1e-5);
}

#[test]
fn coarse_solve_with_config_file() {
    let out = scratch("solve");
    let conf = out.join("run.conf");
    std::fs::write(&conf, "# coarse run\nh = 0.25\ntheta = 0.75\nexact = shear-free\nouter_maxit = 60\n").unwrap();
    let st = bin().args(["solve", "--config"]).arg(&conf).arg("--out").arg(&out).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let hist = read(&out.join("history.csv"));
    let mut lines = hist.lines();
    assert!(lines.next().unwrap().contains("theta=0.75"));
    assert_eq!(lines.next().unwrap(), "iter,residual,darcy_inner,stokes_inner,drag_err,p_err,u_err");
    let last = lines.last().unwrap();
    let res: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
    assert!(res <= 1e-9);
    let manifest = read(&out.join("manifest.txt"));
    assert!(manifest.contains("status = Converged"));
    assert!(manifest.contains("time.apply.stokes_double"));
    let sol = read(&out.join("solution.csv"));
    assert!(sol.lines().nth(1).unwrap().starts_with("x,y,z,w,q,p"));
}

#[test]
fn iteration_cap_exits_with_one() {
    let out = scratch("cap");
    let st = bin()
        .args(["solve", "--h", "0.25", "--theta", "0.5", "--outer-maxit", "3", "--exact", "none", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(1));
    assert!(read(&out.join("manifest.txt")).contains("status = MaxIterations"));
}

#[test]
fn identical_runs_give_identical_csv() {
    let runs: Vec<PathBuf> = (0..2)
        .map(|k| {
            let out = scratch(&format!("repeat{k}"));
            let st = bin()
                .args(["solve", "--h", "0.25", "--theta", "0.75", "--exact", "shear-free", "--out"])
                .arg(&out)
                .status()
                .unwrap();
            assert_eq!(st.code(), Some(0));
            let st = bin().args(["selftest-darcy", "--h", "0.25", "--h", "0.125", "--out"]).arg(&out).status().unwrap();
            assert_eq!(st.code(), Some(0));
            out
        })
        .collect();
    for file in ["history.csv", "solution.csv", "selftest_darcy.csv"] {
        let a = read(&runs[0].join(file));
        assert!(a.starts_with("# sdbie "), "{file}");
        assert_eq!(a, read(&runs[1].join(file)), "{file}");
    }
}
