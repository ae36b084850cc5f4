//! Command-line front end: option parsing, config files and the commands
//! that write CSV results and a run manifest.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::benchmarks::{
    darcy_selftest, empirical_error, observed_order, stokes_selftest, ExactSolution, JosephTao, ShearFreeSphere,
    SphereFlowParams,
};
use crate::coupled::{
    run_ddm, state_errors, DdmConfig, DdmOutcome, DdmStatus, InnerConfig, InnerSolver, OuterMode, PhysicalParams,
};
use crate::error::{Error, Result};
use crate::geometry::{find_quadrature_points, LevelSetSurface};
use crate::kernels::{Regularization, DEFAULT_DELTA_RATIO};
use crate::output::{self, HistoryWriter, TableRow};
use crate::potentials::Discretization;
use crate::spectral::{analytic_modes, assemble_iteration_operator, iteration_spectrum, DEFAULT_EIGS};
use crate::vec3::{flatten, get3, Vec3};

/// Caps the worker threads when set.
pub const THREADS_ENV: &str = "SDBIE_THREADS";

#[derive(Parser, Debug)]
#[command(name = "sdbie", version, about = "Stokes-Darcy boundary integral solver")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandKind,
}

#[derive(Subcommand, Debug, Clone)]
pub enum CommandKind {
    /// Export the surface quadrature.
    Quadrature(RunArgs),
    /// Interior Laplace Neumann solve against a harmonic function.
    SelftestDarcy(RunArgs),
    /// Exterior Stokes solve against a point-force field.
    SelftestStokes(RunArgs),
    /// Coupled Darcy-Stokes solve.
    Solve(RunArgs),
    /// Spectrum of the interface iteration.
    Spectrum(RunArgs),
    /// Iteration counts and errors over several grid spacings.
    Table(RunArgs),
}

impl CommandKind {
    fn args(&self) -> &RunArgs {
        match self {
            Self::Quadrature(a)
            | Self::SelftestDarcy(a)
            | Self::SelftestStokes(a)
            | Self::Solve(a)
            | Self::Spectrum(a)
            | Self::Table(a) => a,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceArg {
    Sphere,
    Ellipsoid,
    Molecule,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverArg {
    Sa,
    Gmres,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactArg {
    JosephTao,
    ShearFree,
    None,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// File of `key = value` lines; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub surface: Option<SurfaceArg>,
    /// Sphere radius.
    #[arg(long)]
    pub radius: Option<f64>,
    /// Ellipsoid semi-axes as `a,b,c`.
    #[arg(long)]
    pub axes: Option<String>,
    /// Grid spacing; repeat for several spacings.
    #[arg(long)]
    pub h: Vec<f64>,
    /// Regularization length in units of h.
    #[arg(long)]
    pub delta_ratio: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    #[arg(long)]
    pub kappa: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    /// Relaxation as a multiple of the permeability.
    #[arg(long)]
    pub theta_mult: Option<f64>,
    /// Background velocity as `x,y,z`.
    #[arg(long)]
    pub u_inf: Option<String>,
    #[arg(long, value_enum)]
    pub inner: Option<SolverArg>,
    #[arg(long, value_enum)]
    pub outer: Option<SolverArg>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub outer_tol: Option<f64>,
    #[arg(long)]
    pub inner_maxit: Option<usize>,
    #[arg(long)]
    pub outer_maxit: Option<usize>,
    #[arg(long, value_enum)]
    pub exact: Option<ExactArg>,
    /// Closed-form coefficients instead of the discrete spectrum.
    #[arg(long)]
    pub analytic: bool,
    #[arg(long)]
    pub nmax: Option<usize>,
    /// Number of Ritz values.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SurfaceSpec {
    Sphere { radius: f64 },
    Ellipsoid { a: f64, b: f64, c: f64 },
    Molecule,
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<LevelSetSurface> {
        match *self {
            Self::Sphere { radius } => LevelSetSurface::sphere(radius),
            Self::Ellipsoid { a, b, c } => LevelSetSurface::ellipsoid(a, b, c),
            Self::Molecule => Ok(LevelSetSurface::molecule()),
        }
    }

    fn describe(&self) -> String {
        match *self {
            Self::Sphere { radius } => format!("sphere(r={radius})"),
            Self::Ellipsoid { a, b, c } => format!("ellipsoid({a},{b},{c})"),
            Self::Molecule => "molecule".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Quadrature,
    SelftestDarcy,
    SelftestStokes,
    Solve,
    Spectrum,
    Table,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Quadrature => "quadrature",
            Self::SelftestDarcy => "selftest-darcy",
            Self::SelftestStokes => "selftest-stokes",
            Self::Solve => "solve",
            Self::Spectrum => "spectrum",
            Self::Table => "table",
        }
    }
}

/// Validated settings of one invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub surface: SurfaceSpec,
    pub hs: Vec<f64>,
    pub delta_ratio: f64,
    pub ddm: DdmConfig,
    /// Set when θ was given as a multiple of κ.
    pub theta_mult: Option<f64>,
    pub exact: ExactArg,
    pub analytic: bool,
    pub nmax: usize,
    pub k: usize,
    pub out_dir: PathBuf,
}

impl RunConfig {
    /// Regularization for the first grid spacing.
    pub fn delta(&self) -> f64 {
        self.delta_ratio * self.hs[0]
    }

    /// Key/value description used in file headers and the manifest.
    pub fn describe(&self) -> Vec<(&'static str, String)> {
        let p = &self.ddm.params;
        let hs: Vec<String> = self.hs.iter().map(|h| h.to_string()).collect();
        let mut v = vec![
            ("surface", self.surface.describe()),
            ("h", hs.join(";")),
            ("delta_ratio", self.delta_ratio.to_string()),
            ("mu", p.mu.to_string()),
            ("kappa", p.kappa.to_string()),
            ("gamma", p.gamma.to_string()),
            ("theta", p.theta.to_string()),
            ("u_inf", format!("{};{};{}", p.u_inf.x, p.u_inf.y, p.u_inf.z)),
            ("inner", format!("{:?}", self.ddm.inner.solver)),
            ("inner_tol", self.ddm.inner.tol.to_string()),
            ("outer", format!("{:?}", self.ddm.outer)),
            ("outer_tol", self.ddm.outer_tol.to_string()),
            ("outer_maxit", self.ddm.outer_maxit.to_string()),
        ];
        if let Some(c) = self.theta_mult {
            v.push(("theta_mult", c.to_string()));
        }
        if self.command == Command::Spectrum {
            v.push(("analytic", self.analytic.to_string()));
            v.push(("nmax", self.nmax.to_string()));
            v.push(("k", self.k.to_string()));
        }
        v
    }

    fn comment(&self) -> String {
        output::comment_line(self.command.name(), &self.describe())
    }
}

fn parse_triplet(name: &str, s: &str) -> Result<[f64; 3]> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("--{name} expects three comma-separated numbers, got '{s}'")));
    }
    let mut out = [0.0; 3];
    for (o, p) in out.iter_mut().zip(parts) {
        *o = p.parse().map_err(|_| Error::Config(format!("--{name}: malformed number '{p}'")))?;
    }
    Ok(out)
}

/// Reads `key = value` lines. Blank lines and `#` comments are skipped.
pub fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read config file {}: {e}", path.display())))?;
    parse_config_text(&text)
}

pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("config line {}: expected 'key = value', got '{raw}'", lineno + 1)));
        };
        let key = k.trim().replace('_', "-");
        if key == "config" {
            return Err(Error::Config("config files cannot include other config files".into()));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Long option names present in an argument list.
fn given_flags(args: &[String]) -> BTreeSet<String> {
    args.iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect()
}

fn find_config_path(args: &[String]) -> Option<PathBuf> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(v) = a.strip_prefix("--config=") {
            return Some(PathBuf::from(v));
        }
    }
    None
}

/// Parses `argv` (including the program name), merging an optional config
/// file. Command-line flags override file entries.
pub fn parse_config(argv: &[String]) -> Result<RunConfig> {
    let mut merged: Vec<String> = argv.to_vec();
    if let Some(path) = find_config_path(argv) {
        let entries = read_config_file(&path)?;
        let given = given_flags(argv);
        let cmd = Cli::command();
        let sub = argv
            .get(1)
            .and_then(|name| cmd.find_subcommand(name))
            .ok_or_else(|| Error::Config("the config file needs a command before it".into()))?;
        let mut extra = Vec::new();
        for (key, value) in entries {
            let arg = sub
                .get_arguments()
                .find(|a| a.get_long() == Some(key.as_str()))
                .ok_or_else(|| Error::Config(format!("unknown config key '{key}'")))?;
            if given.contains(&key) {
                continue;
            }
            if matches!(arg.get_action(), clap::ArgAction::SetTrue) {
                match value.as_str() {
                    "true" | "1" | "yes" => extra.push(format!("--{key}")),
                    "false" | "0" | "no" => {}
                    _ => return Err(Error::Config(format!("config key '{key}' expects true or false, got '{value}'"))),
                }
            } else if key == "h" {
                for part in value.split(',') {
                    extra.push("--h".into());
                    extra.push(part.trim().to_string());
                }
            } else {
                extra.push(format!("--{key}"));
                extra.push(value);
            }
        }
        merged.splice(2..2, extra);
    }
    let cli = Cli::try_parse_from(&merged)
        .map_err(|e| Error::Config(e.to_string().trim_start_matches("error: ").trim_end().to_string()))?;
    build_config(&cli.command)
}

fn build_config(kind: &CommandKind) -> Result<RunConfig> {
    let a = kind.args();
    let command = match kind {
        CommandKind::Quadrature(_) => Command::Quadrature,
        CommandKind::SelftestDarcy(_) => Command::SelftestDarcy,
        CommandKind::SelftestStokes(_) => Command::SelftestStokes,
        CommandKind::Solve(_) => Command::Solve,
        CommandKind::Spectrum(_) => Command::Spectrum,
        CommandKind::Table(_) => Command::Table,
    };
    let selftest = matches!(command, Command::SelftestDarcy | Command::SelftestStokes);
    let surface = match a.surface.unwrap_or(SurfaceArg::Sphere) {
        SurfaceArg::Sphere => {
            let default_r = if selftest { crate::benchmarks::SELFTEST_RADIUS } else { 1.0 };
            SurfaceSpec::Sphere { radius: a.radius.unwrap_or(default_r) }
        }
        SurfaceArg::Ellipsoid => {
            let [x, y, z] = match &a.axes {
                Some(s) => parse_triplet("axes", s)?,
                None => [1.0, 0.6, 0.4],
            };
            SurfaceSpec::Ellipsoid { a: x, b: y, c: z }
        }
        SurfaceArg::Molecule => SurfaceSpec::Molecule,
    };
    if selftest && a.surface.is_some_and(|s| s != SurfaceArg::Sphere) {
        return Err(Error::Config("self-tests run on the sphere only".into()));
    }
    let mut hs = a.h.clone();
    if hs.is_empty() {
        hs = if selftest { vec![1.0 / 16.0, 1.0 / 32.0] } else { vec![1.0 / 16.0] };
    }
    if hs.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::Config("grid spacings must be positive".into()));
    }
    if hs.len() > 1 && matches!(command, Command::Quadrature | Command::Solve | Command::Spectrum) {
        return Err(Error::Config(format!("{} takes a single --h", command.name())));
    }
    let delta_ratio = a.delta_ratio.unwrap_or(DEFAULT_DELTA_RATIO);
    if !(delta_ratio.is_finite() && delta_ratio > 0.0) {
        return Err(Error::Config("--delta-ratio must be positive".into()));
    }
    let u_inf = match &a.u_inf {
        Some(s) => Vec3::from(parse_triplet("u-inf", s)?),
        None => Vec3::new(0.0, 0.0, 1.0),
    };
    let kappa = a.kappa.unwrap_or(1.0);
    if a.theta.is_some() && a.theta_mult.is_some() {
        return Err(Error::Config("give either --theta or --theta-mult, not both".into()));
    }
    let theta = match (a.theta, a.theta_mult) {
        (Some(t), _) => t,
        (None, Some(c)) => c * kappa,
        (None, None) => 0.5,
    };
    let params = PhysicalParams { mu: a.mu.unwrap_or(1.0), kappa, gamma: a.gamma.unwrap_or(0.0), u_inf, theta };
    params.validate().map_err(|e| Error::Config(e.to_string()))?;
    let solver = |s: Option<SolverArg>| match s.unwrap_or(SolverArg::Gmres) {
        SolverArg::Sa => InnerSolver::SuccessiveApprox,
        SolverArg::Gmres => InnerSolver::Gmres,
    };
    let outer = match a.outer.unwrap_or(SolverArg::Sa) {
        SolverArg::Sa => OuterMode::SuccessiveApprox,
        SolverArg::Gmres => OuterMode::Gmres,
    };
    let ddm = DdmConfig {
        params,
        inner: InnerConfig {
            solver: solver(a.inner),
            tol: a.inner_tol.unwrap_or(1e-9),
            maxit: a.inner_maxit.unwrap_or(200),
        },
        outer,
        outer_tol: a.outer_tol.unwrap_or(1e-9),
        outer_maxit: a.outer_maxit.unwrap_or(100),
        warm_start: true,
    };
    ddm.validate().map_err(|e| Error::Config(e.to_string()))?;
    if outer == OuterMode::Gmres && params.gamma > 0.0 {
        return Err(Error::Config("outer GMRES requires --gamma 0".into()));
    }
    let exact = a.exact.unwrap_or(match surface {
        SurfaceSpec::Sphere { .. } => ExactArg::JosephTao,
        _ => ExactArg::None,
    });
    if exact != ExactArg::None && !matches!(surface, SurfaceSpec::Sphere { .. }) {
        return Err(Error::Config("exact solutions exist for the sphere only".into()));
    }
    let nmax = a.nmax.unwrap_or(50);
    let k = a.k.unwrap_or(DEFAULT_EIGS);
    if nmax == 0 || k == 0 {
        return Err(Error::Config("--nmax and --k must be positive".into()));
    }
    Ok(RunConfig {
        command,
        surface,
        hs,
        delta_ratio,
        ddm,
        theta_mult: a.theta_mult,
        exact,
        analytic: a.analytic,
        nmax,
        k,
        out_dir: a.out.clone().unwrap_or_else(|| PathBuf::from(".")),
    })
}

/// Wall-clock phases and scalar results written to `manifest.txt`.
#[derive(Default)]
struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    fn time(&mut self, phase: &str, t0: Instant) {
        self.entries.push((format!("time.{phase}"), format!("{:.3}", t0.elapsed().as_secs_f64())));
    }

    fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    fn write(&self, cfg: &RunConfig) -> Result<()> {
        let mut s = String::new();
        writeln!(s, "# {}", cfg.comment()).ok();
        writeln!(s, "version = {}", crate::VERSION).ok();
        writeln!(s, "command = {}", cfg.command.name()).ok();
        for (k, v) in cfg.describe() {
            writeln!(s, "{k} = {v}").ok();
        }
        for (k, v) in &self.entries {
            writeln!(s, "{k} = {v}").ok();
        }
        std::fs::write(cfg.out_dir.join("manifest.txt"), s)?;
        Ok(())
    }
}

fn exact_solution(cfg: &RunConfig) -> Result<Option<Box<dyn ExactSolution>>> {
    let SurfaceSpec::Sphere { radius } = cfg.surface else { return Ok(None) };
    let p = &cfg.ddm.params;
    let axis = p.u_inf.x == 0.0 && p.u_inf.y == 0.0;
    if !axis || p.gamma != 0.0 {
        return Ok(None);
    }
    let sp = SphereFlowParams { radius, speed: p.u_inf.z, mu: p.mu, kappa: p.kappa };
    Ok(match cfg.exact {
        ExactArg::JosephTao => Some(Box::new(JosephTao::new(sp)?)),
        ExactArg::ShearFree => Some(Box::new(ShearFreeSphere::new(sp)?)),
        ExactArg::None => None,
    })
}

fn discretization(cfg: &RunConfig, h: f64, manifest: &mut Manifest) -> Result<Discretization> {
    let t0 = Instant::now();
    let quad = find_quadrature_points(&cfg.surface.build()?, h)?;
    manifest.time(&format!("quadrature[h={h}]"), t0);
    let t0 = Instant::now();
    let disc = Discretization::new(quad, Regularization::from_grid(h, cfg.delta_ratio)?);
    manifest.time(&format!("near_cache[h={h}]"), t0);
    manifest.set(&format!("nodes[h={h}]"), disc.len());
    manifest.set(&format!("near_cache_bytes[h={h}]"), disc.near_field().map_or(0, |n| n.bytes()));
    Ok(disc)
}

/// Times one application of each boundary operator.
fn time_applies(disc: &Discretization, h: f64, manifest: &mut Manifest) -> Result<()> {
    let s: Vec<f64> = disc.quad.nodes.iter().map(|x| x.z).collect();
    let v = flatten(&disc.quad.nodes);
    let t0 = Instant::now();
    disc.laplace_single(&s)?;
    manifest.time(&format!("apply.laplace_single[h={h}]"), t0);
    let t0 = Instant::now();
    disc.laplace_double(&s)?;
    manifest.time(&format!("apply.laplace_double[h={h}]"), t0);
    let t0 = Instant::now();
    disc.stokes_single(&v)?;
    manifest.time(&format!("apply.stokes_single[h={h}]"), t0);
    let t0 = Instant::now();
    disc.stokes_double(&v)?;
    manifest.time(&format!("apply.stokes_double[h={h}]"), t0);
    Ok(())
}

fn run_quadrature(cfg: &RunConfig, manifest: &mut Manifest) -> Result<i32> {
    let h = cfg.hs[0];
    let t0 = Instant::now();
    let quad = find_quadrature_points(&cfg.surface.build()?, h)?;
    manifest.time("quadrature", t0);
    manifest.set("nodes", quad.len());
    manifest.set("area", format!("{:.15e}", quad.total_weight()));
    quad.write_csv(output::create(&cfg.out_dir.join("quadrature.csv"))?, &cfg.comment())?;
    println!("{} nodes, area {:.12}", quad.len(), quad.total_weight());
    Ok(0)
}

fn run_selftest(cfg: &RunConfig, stokes: bool, manifest: &mut Manifest) -> Result<i32> {
    let SurfaceSpec::Sphere { radius } = cfg.surface else { unreachable!("checked while parsing") };
    if (radius - crate::benchmarks::SELFTEST_RADIUS).abs() > 0.0 {
        return Err(Error::Config(format!("self-tests use the sphere of radius {}", crate::benchmarks::SELFTEST_RADIUS)));
    }
    let inner = InnerConfig { tol: cfg.ddm.inner.tol.min(1e-11), ..cfg.ddm.inner };
    let mut rows = Vec::new();
    for &h in &cfg.hs {
        let t0 = Instant::now();
        let r = if stokes { stokes_selftest(h, cfg.delta_ratio, &inner)? } else { darcy_selftest(h, cfg.delta_ratio, &inner)? };
        manifest.time(&format!("selftest[h={h}]"), t0);
        println!("h = {h}: N = {}, error = {:.3e}, {} iterations", r.nodes, r.error, r.iterations);
        rows.push(r);
    }
    for w in rows.windows(2) {
        let p = observed_order(w[0].h, w[0].error, w[1].h, w[1].error);
        println!("observed order between h = {} and h = {}: {p:.2}", w[0].h, w[1].h);
        manifest.set(&format!("order[{}->{}]", w[0].h, w[1].h), format!("{p:.3}"));
    }
    let name = if stokes { "selftest_stokes.csv" } else { "selftest_darcy.csv" };
    output::write_selftest(output::create(&cfg.out_dir.join(name))?, &cfg.comment(), &rows)?;
    Ok(0)
}

fn write_state(path: &Path, comment: &str, disc: &Discretization, o: &DdmOutcome) -> Result<()> {
    let mut w = output::create(path)?;
    writeln!(w, "# {comment}")?;
    writeln!(w, "x,y,z,w,q,p,ux,uy,uz,fx,fy,fz")?;
    let s = &o.state;
    for (i, x) in disc.quad.nodes.iter().enumerate() {
        let u = get3(&s.u_s, i);
        let f = get3(&s.f_s, i);
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            x.x, x.y, x.z, disc.quad.weights[i], s.q[i], s.p_d[i], u.x, u.y, u.z, f.x, f.y, f.z
        )?;
    }
    w.flush()?;
    Ok(())
}

fn status_code(s: DdmStatus) -> i32 {
    match s {
        DdmStatus::Converged => 0,
        DdmStatus::Stagnated => 2,
        DdmStatus::MaxIterations => 1,
    }
}

fn run_solve(cfg: &RunConfig, manifest: &mut Manifest) -> Result<i32> {
    let h = cfg.hs[0];
    let disc = discretization(cfg, h, manifest)?;
    time_applies(&disc, h, manifest)?;
    let exact = exact_solution(cfg)?;
    let mut hist = HistoryWriter::new(output::create(&cfg.out_dir.join("history.csv"))?, &cfg.comment())?;
    let t0 = Instant::now();
    let o = run_ddm(&disc, &cfg.ddm, exact.as_deref(), |r| hist.write(r))?;
    manifest.time("ddm", t0);
    manifest.set("time.darcy_solves", format!("{:.3}", o.darcy_seconds));
    manifest.set("time.stokes_solves", format!("{:.3}", o.stokes_seconds));
    manifest.set("status", format!("{:?}", o.status));
    manifest.set("outer_iterations", o.iterations);
    manifest.set("final_residual", format!("{:.6e}", o.final_residual));
    manifest.set("drag", format!("{:.12e},{:.12e},{:.12e}", o.drag.x, o.drag.y, o.drag.z));
    if let Some(ex) = exact.as_deref() {
        let (d, p, u) = state_errors(&disc, &o.state, ex)?;
        manifest.set("exact", ex.name());
        manifest.set("exact_drag", format!("{:.12e}", ex.drag()));
        manifest.set("drag_err", format!("{d:.6e}"));
        manifest.set("p_err", format!("{p:.6e}"));
        manifest.set("u_err", format!("{u:.6e}"));
        println!("errors against {}: drag {d:.3e}, p {p:.3e}, u {u:.3e}", ex.name());
    }
    write_state(&cfg.out_dir.join("solution.csv"), &cfg.comment(), &disc, &o)?;
    println!(
        "{:?} after {} outer iterations, residual {:.3e}, drag ({:.6}, {:.6}, {:.6})",
        o.status, o.iterations, o.final_residual, o.drag.x, o.drag.y, o.drag.z
    );
    Ok(status_code(o.status))
}

fn run_spectrum(cfg: &RunConfig, manifest: &mut Manifest) -> Result<i32> {
    let p = &cfg.ddm.params;
    if cfg.analytic {
        let radius = match cfg.surface {
            SurfaceSpec::Sphere { radius } => radius,
            _ => return Err(Error::Config("closed-form coefficients exist for the sphere only".into())),
        };
        let modes = analytic_modes(cfg.nmax, p.theta, p.kappa, radius)?;
        output::write_mode_coefficients(output::create(&cfg.out_dir.join("modes.csv"))?, &cfg.comment(), &modes)?;
        println!("wrote {} mode coefficients", modes.len());
        return Ok(0);
    }
    let h = cfg.hs[0];
    let t0 = Instant::now();
    let quad = find_quadrature_points(&cfg.surface.build()?, h)?;
    let disc = Discretization::uncached(quad, Regularization::from_grid(h, cfg.delta_ratio)?);
    manifest.set("nodes", disc.len());
    let op = assemble_iteration_operator(&disc, p)?;
    manifest.time("assemble", t0);
    let t0 = Instant::now();
    let rep = iteration_spectrum(&op, p.theta, cfg.k.min(op.dim()))?;
    manifest.time("arnoldi", t0);
    manifest.set("ritz_converged", rep.converged);
    manifest.set("spectral_radius", format!("{:.12e}", rep.spectral_radius()));
    output::write_spectrum(output::create(&cfg.out_dir.join("spectrum.csv"))?, &cfg.comment(), &rep.values)?;
    println!("spectral radius {:.6}, {} values", rep.spectral_radius(), rep.values.len());
    Ok(0)
}

fn run_table(cfg: &RunConfig, manifest: &mut Manifest) -> Result<i32> {
    let exact = exact_solution(cfg)?;
    let mut rows = Vec::new();
    let mut fields: Vec<(Discretization, Vec<f64>, Vec<f64>)> = Vec::new();
    for &h in &cfg.hs {
        let disc = discretization(cfg, h, manifest)?;
        time_applies(&disc, h, manifest)?;
        let mut row = TableRow { h, n: disc.len(), ..Default::default() };
        let run = |theta: f64, solver: InnerSolver| -> Result<DdmOutcome> {
            let mut c = cfg.ddm;
            c.params.theta = match cfg.theta_mult {
                Some(_) => theta * c.params.kappa,
                None => theta,
            };
            c.inner.solver = solver;
            c.outer = OuterMode::SuccessiveApprox;
            run_ddm(&disc, &c, None, |_| Ok(()))
        };
        let t0 = Instant::now();
        let a = run(0.5, InnerSolver::Gmres)?;
        let b = run(0.75, InnerSolver::Gmres)?;
        let converged = |o: &DdmOutcome| (o.status == DdmStatus::Converged).then_some(o.iterations);
        row.dn_sa_05 = converged(&a);
        row.dn_sa_075 = converged(&b);
        if let Some(r) = b.history.records.get(1).or(b.history.records.first()) {
            row.local_gmres_darcy = Some(r.darcy_inner);
            row.local_gmres_stokes = Some(r.stokes_inner);
        }
        let c = run(0.75, InnerSolver::SuccessiveApprox)?;
        if let Some((d, s)) = c.history.inner_range() {
            row.local_sa_darcy = Some(d);
            row.local_sa_stokes = Some(s);
        }
        manifest.time(&format!("table_row[h={h}]"), t0);
        if let Some(ex) = exact.as_deref() {
            let (_, p, u) = state_errors(&disc, &b.state, ex)?;
            row.p_err = Some(p);
            row.u_err = Some(u);
        }
        rows.push(row);
        fields.push((disc, b.state.p_d.clone(), b.state.u_s.clone()));
    }
    if exact.is_none() {
        // Empirical errors against the next finer spacing when it is h/2.
        for i in 0..fields.len().saturating_sub(1) {
            let (c, f) = (&fields[i], &fields[i + 1]);
            if ((c.0.quad.h / f.0.quad.h) - 2.0).abs() < 1e-12 {
                rows[i].p_err = Some(empirical_error(&c.0.quad, &c.1, &f.0.quad, &f.1, 1)?);
                rows[i].u_err = Some(empirical_error(&c.0.quad, &c.2, &f.0.quad, &f.2, 3)?);
            }
        }
    }
    output::write_table(output::create(&cfg.out_dir.join("table.csv"))?, &cfg.comment(), &rows)?;
    for r in &rows {
        println!("h = {}: N = {}, D-N {:?}/{:?}, p err {:?}, u err {:?}", r.h, r.n, r.dn_sa_05, r.dn_sa_075, r.p_err, r.u_err);
    }
    Ok(0)
}

fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.trim().parse().map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer")))?;
        if n == 0 {
            return Err(Error::Config(format!("{THREADS_ENV} must be a positive integer")));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

/// Executes a parsed configuration. Returns the process exit code.
pub fn run(cfg: &RunConfig) -> Result<i32> {
    configure_threads()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut manifest = Manifest::default();
    let t0 = Instant::now();
    let code = match cfg.command {
        Command::Quadrature => run_quadrature(cfg, &mut manifest),
        Command::SelftestDarcy => run_selftest(cfg, false, &mut manifest),
        Command::SelftestStokes => run_selftest(cfg, true, &mut manifest),
        Command::Solve => run_solve(cfg, &mut manifest),
        Command::Spectrum => run_spectrum(cfg, &mut manifest),
        Command::Table => run_table(cfg, &mut manifest),
    };
    manifest.time("total", t0);
    match &code {
        Ok(c) => manifest.set("exit_code", c),
        Err(e) => manifest.set("error", e),
    }
    manifest.write(cfg)?;
    code
}

/// Entry point shared by the binary: parse, run, report.
pub fn main_with_args(argv: &[String]) -> i32 {
    use clap::error::ErrorKind;
    if let Err(e) = Cli::try_parse_from(argv) {
        if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
            print!("{e}");
            return 0;
        }
    }
    let cfg = match parse_config(argv) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error (cli): {e}");
            return 1;
        }
    };
    match run(&cfg) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error ({}): {e}", e.module());
            1
        }
    }
}
