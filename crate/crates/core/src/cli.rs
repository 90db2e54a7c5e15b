//! Command-line front end. Each subcommand reads an optional JSON config,
//! applies flag overrides, validates, runs, and writes its outputs together
//! with the resolved config and a column schema into `--out`.
//!
//! Exit codes: 0 success, 1 solver or verification failure, 2 invalid
//! configuration (including non-coercive constants and folded shells).

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::elastic::{coercivity_margin, AnchoringParams, ElasticConstants, LdGParams};
use crate::error::{Error, Result};
use crate::film3d::{self, FilmParams, SurfaceField, SurfaceGrid};
use crate::frustum::{self, SectorOptions};
use crate::reduced::{self, PField, ReducedConfig, SolverOptions};
use crate::remnant::{oracle_gap, sample};
use crate::surface::{BuiltinProfile, SurfaceOfRevolution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "thinfilm", version, about = "Thin nematic films on curved substrates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON config file; flags given on the command line take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare the closed-form remnant and reduced density against a direct
    /// 5x5 minimization on random inputs.
    #[command(after_help = "Writes report.json: {n_cases, max_abs_gap, max_g_gap, max_f_gap, tolerance, pass}.")]
    RemnantCheck(RemnantArgs),
    /// Sector minima of the frustum energy over a grid of cone angles.
    #[command(after_help = "Writes sweep.csv with columns phi0,k,energy,el_residual,n_iters,converged, \
        one row per (phi0, k), followed by a row 'critical_angle,,<angle>,,,' when bisection is enabled.")]
    FrustumSweep(SweepArgs),
    /// Gradient flow of the reduced energy in the p-representation.
    #[command(after_help = "Surfaces and their --param: frustum (phi0, default 1.5), cylinder (radius, \
        default 1), sphere-cap (radius, default 1), plane-annulus (none).\n\
        Writes field.csv with columns s,theta,p1,p2,psi (psi = atan2(p2, p1)/2) and report.json.")]
    Minimize(MinimizeArgs),
    /// Convergence of the shell energy of the recovery field to the limit.
    #[command(after_help = "Surfaces and their --param: frustum (phi0), cylinder (radius, default 1), \
        sphere-cap (radius), plane-annulus (none).\n\
        Writes rate.csv with columns eps,F_eps,F0,gap,fitted_order (order on the final row) and report.json.")]
    GammaRate(GammaArgs),
    /// Minimum eigenvalue of the elastic form over a grid of (M2, M3).
    #[command(after_help = "Writes coercivity.csv with columns m2,m3,margin,coercive.")]
    CoercivityMap(MapArgs),
}

fn parse_surface(name: &str, param: Option<f64>) -> Result<BuiltinProfile> {
    Ok(match name {
        "frustum" => BuiltinProfile::Frustum { phi0: param.unwrap_or(1.5) },
        "cylinder" => BuiltinProfile::Cylinder { radius: param.unwrap_or(1.0) },
        "sphere-cap" => BuiltinProfile::SphereCap { radius: param.unwrap_or(1.0) },
        "plane-annulus" => BuiltinProfile::PlaneAnnulus,
        other => {
            return Err(Error::InvalidInput(format!(
                "unknown surface '{other}' (expected frustum, cylinder, sphere-cap or plane-annulus)"
            )))
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub profile: BuiltinProfile,
    pub s0: f64,
    pub length: f64,
}

impl SurfaceSpec {
    pub fn build(&self) -> Result<SurfaceOfRevolution> {
        SurfaceOfRevolution::builtin(self.profile, self.s0, self.length)
    }

    fn apply(&mut self, name: Option<&str>, param: Option<f64>, s0: Option<f64>, length: Option<f64>) -> Result<()> {
        if let Some(n) = name {
            self.profile = parse_surface(n, param)?;
        } else if let Some(p) = param {
            match &mut self.profile {
                BuiltinProfile::Frustum { phi0 } => *phi0 = p,
                BuiltinProfile::Cylinder { radius } | BuiltinProfile::SphereCap { radius } => *radius = p,
                BuiltinProfile::PlaneAnnulus => {}
            }
        }
        set(&mut self.s0, s0);
        set(&mut self.length, length);
        Ok(())
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

// ---------------------------------------------------------------- remnant-check

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct RemnantArgs {
    #[arg(long)]
    pub n_cases: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Fix M2 (together with --m3) instead of sampling the coercive region.
    #[arg(long)]
    pub m2: Option<f64>,
    #[arg(long)]
    pub m3: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemnantConfig {
    pub n_cases: usize,
    pub tolerance: f64,
    /// Fixed `(M2, M3)`; random coercive constants per case when absent.
    pub constants: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for RemnantConfig {
    fn default() -> Self {
        RemnantConfig { n_cases: 1000, tolerance: 1e-8, constants: None, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemnantReport {
    pub n_cases: usize,
    pub max_abs_gap: f64,
    pub max_g_gap: f64,
    pub max_f_gap: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn remnant_check(cfg: &RemnantConfig) -> Result<RemnantReport> {
    if cfg.n_cases == 0 || !(cfg.tolerance > 0.0) {
        return Err(Error::InvalidInput("n_cases and tolerance must be positive".into()));
    }
    if let Some([m2, m3]) = cfg.constants {
        if !ElasticConstants::new(m2, m3).is_coercive() {
            return Err(Error::IllPosed(format!("(M2, M3) = ({m2}, {m3}) is outside coercive region")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let inputs = (0..cfg.n_cases)
        .map(|_| match cfg.constants {
            Some([m2, m3]) => sample::random_input_with(&mut rng, ElasticConstants::new(m2, m3)),
            None => Ok(sample::random_input(&mut rng)),
        })
        .collect::<Result<Vec<_>>>()?;
    let gaps = inputs.par_iter().map(oracle_gap).collect::<Result<Vec<_>>>()?;
    let max_g_gap = gaps.iter().map(|g| g.0).fold(0.0, f64::max);
    let max_f_gap = gaps.iter().map(|g| g.1).fold(0.0, f64::max);
    let max_abs_gap = max_g_gap.max(max_f_gap);
    Ok(RemnantReport {
        n_cases: cfg.n_cases,
        max_abs_gap,
        max_g_gap,
        max_f_gap,
        tolerance: cfg.tolerance,
        pass: max_abs_gap <= cfg.tolerance,
    })
}

// ---------------------------------------------------------------- frustum-sweep

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct SweepArgs {
    #[arg(long)]
    pub phi_min: Option<f64>,
    #[arg(long)]
    pub phi_max: Option<f64>,
    #[arg(long)]
    pub phi_step: Option<f64>,
    /// Comma-separated sector list, e.g. "0,-1,-2".
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<i32>>,
    /// Nodes on [0, 2pi).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub starts: Option<usize>,
    /// Skip the critical-angle bisection.
    #[arg(long)]
    pub no_critical: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub phi_min: f64,
    pub phi_max: f64,
    pub phi_step: f64,
    pub ks: Vec<i32>,
    pub sector: SectorOptions,
    pub critical: bool,
    /// Bisection bracket and tolerance for the critical angle.
    pub critical_bracket: [f64; 2],
    pub critical_tol: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            phi_min: 0.2,
            phi_max: 1.5,
            phi_step: 0.05,
            ks: vec![0, -1],
            sector: SectorOptions::default(),
            critical: true,
            critical_bracket: [0.8, FRAC_PI_2],
            critical_tol: 1e-6,
        }
    }
}

impl SweepConfig {
    pub fn angles(&self) -> Result<Vec<f64>> {
        let ok = |p: f64| p > 0.0 && p <= FRAC_PI_2 + 1e-12;
        if !ok(self.phi_min) || !ok(self.phi_max) || self.phi_max < self.phi_min || !(self.phi_step > 0.0) {
            return Err(Error::InvalidInput(format!(
                "phi0 grid {}..{} step {} must lie in (0, pi/2] with positive step",
                self.phi_min, self.phi_max, self.phi_step
            )));
        }
        if self.ks.is_empty() {
            return Err(Error::InvalidInput("empty sector list".into()));
        }
        let n = ((self.phi_max - self.phi_min) / self.phi_step + 1e-9).floor() as usize;
        Ok((0..=n).map(|i| self.phi_min + i as f64 * self.phi_step).collect())
    }
}

pub struct SweepOutput {
    pub rows: Vec<frustum::SweepRow>,
    pub critical: Option<f64>,
}

pub fn frustum_sweep(cfg: &SweepConfig) -> Result<SweepOutput> {
    let phis = cfg.angles()?;
    let rows = frustum::sweep(&phis, &cfg.ks, &cfg.sector)?;
    let critical = if cfg.critical {
        let [lo, hi] = cfg.critical_bracket;
        Some(frustum::critical_angle(lo, hi, cfg.critical_tol, &cfg.sector)?)
    } else {
        None
    };
    Ok(SweepOutput { rows, critical })
}

// ---------------------------------------------------------------- minimize

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct MinimizeArgs {
    /// frustum, cylinder, sphere-cap or plane-annulus.
    #[arg(long)]
    pub surface: Option<String>,
    /// Shape parameter of the surface (see below).
    #[arg(long)]
    pub param: Option<f64>,
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long)]
    pub length: Option<f64>,
    #[arg(long)]
    pub ns: Option<usize>,
    #[arg(long)]
    pub ntheta: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Winding of p for the initial field p = (cos k theta, sin k theta).
    #[arg(long)]
    pub winding: Option<i32>,
    /// Amplitude of the random angular perturbation of the initial field.
    #[arg(long)]
    pub noise: Option<f64>,
    /// Start from a field snapshot (columns s,theta,p1,p2[,psi]).
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[arg(long)]
    pub gtol: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimizeConfig {
    pub surface: SurfaceSpec,
    pub ns: usize,
    pub ntheta: usize,
    pub beta: f64,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub winding: i32,
    pub noise: f64,
    pub init: Option<PathBuf>,
    pub solver: SolverOptions,
    pub seed: u64,
}

impl Default for MinimizeConfig {
    fn default() -> Self {
        MinimizeConfig {
            surface: SurfaceSpec { profile: BuiltinProfile::Frustum { phi0: 1.5 }, s0: 1.0, length: 1.0 },
            ns: 16,
            ntheta: 64,
            beta: -1.0 / 3.0,
            a: -13.0 / 6.0,
            b: 0.0,
            delta: 0.05,
            winding: 0,
            noise: 0.1,
            init: None,
            solver: SolverOptions { max_iter: 200_000, ..SolverOptions::default() },
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeReport {
    pub energy: f64,
    /// Winding of p on the middle parallel; `None` if p vanishes there.
    pub winding: Option<i32>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
    pub reason: String,
}

/// Initial field `p = (cos(kθ + η), sin(kθ + η))` with `η` uniform in
/// `[−noise, noise]` per node.
pub fn initial_field(cfg: &MinimizeConfig, surface: &SurfaceOfRevolution) -> Result<PField> {
    if let Some(path) = &cfg.init {
        return PField::read_csv(path);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut field = PField::from_fn(surface, cfg.ns, cfg.ntheta, |_, _| [0.0, 0.0])?;
    for i in 0..field.ns() {
        for j in 0..field.ntheta() {
            let a = cfg.winding as f64 * field.theta(j) + cfg.noise * rng.gen_range(-1.0..=1.0);
            field.set(i, j, [a.cos(), a.sin()]);
        }
    }
    Ok(field)
}

pub fn minimize(cfg: &MinimizeConfig) -> Result<(PField, MinimizeReport)> {
    let surface = cfg.surface.build()?;
    let mut rc = ReducedConfig::new(surface.clone(), cfg.beta, LdGParams::new(cfg.a, cfg.b, cfg.delta)?)?;
    rc.solver = cfg.solver;
    let init = initial_field(cfg, &surface)?;
    let (field, energy, flow) = reduced::gradient_flow_minimize(&init, &rc)?;
    let winding = reduced::winding_number(&field, field.ns() / 2, 1e-6).ok();
    let report = MinimizeReport {
        energy,
        winding,
        iterations: flow.iterations,
        converged: flow.converged,
        grad_norm: flow.grad_norm,
        reason: flow.reason,
    };
    Ok((field, report))
}

pub fn write_field_csv(field: &PField, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["s", "theta", "p1", "p2", "psi"])?;
    let psi = field.director_angles();
    for i in 0..field.ns() {
        for j in 0..field.ntheta() {
            let p = field.get(i, j);
            w.serialize((field.s(i), field.theta(j), p[0], p[1], psi[i * field.ntheta() + j]))?;
        }
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- gamma-rate

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct GammaArgs {
    #[arg(long)]
    pub surface: Option<String>,
    #[arg(long)]
    pub param: Option<f64>,
    #[arg(long)]
    pub s0: Option<f64>,
    #[arg(long)]
    pub length: Option<f64>,
    /// Comma-separated, strictly decreasing thickness list.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
    #[arg(long)]
    pub m2: Option<f64>,
    #[arg(long)]
    pub m3: Option<f64>,
    #[arg(long)]
    pub ns: Option<usize>,
    #[arg(long)]
    pub ntheta: Option<usize>,
    /// Even number of intervals across the thickness.
    #[arg(long)]
    pub nt: Option<usize>,
    /// Minimum fitted order for a passing run.
    #[arg(long)]
    pub min_order: Option<f64>,
}

/// `Q₀` in the p-representation with `p = ρ(cos 2ψ, sin 2ψ)`,
/// `ψ = amplitude·sin θ + slope·s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestField {
    pub rho: f64,
    pub amplitude: f64,
    pub slope: f64,
}

impl Default for TestField {
    fn default() -> Self {
        TestField { rho: 1.0, amplitude: 0.3, slope: 0.2 }
    }
}

impl TestField {
    pub fn p(&self, s: f64, theta: f64) -> [f64; 2] {
        let psi = self.amplitude * theta.sin() + self.slope * s;
        [self.rho * (2.0 * psi).cos(), self.rho * (2.0 * psi).sin()]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GammaConfig {
    pub surface: SurfaceSpec,
    pub eps: Vec<f64>,
    pub m2: f64,
    pub m3: f64,
    pub a: f64,
    pub b: f64,
    pub delta: f64,
    pub beta: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub grid: [usize; 3],
    pub field: TestField,
    pub min_order: f64,
}

impl Default for GammaConfig {
    fn default() -> Self {
        let (ns, nth, nt) = film3d::DEFAULT_SHELL_GRID;
        GammaConfig {
            surface: SurfaceSpec { profile: BuiltinProfile::Cylinder { radius: 1.0 }, s0: 0.0, length: 1.0 },
            eps: vec![0.1, 0.05, 0.025, 0.0125],
            m2: 0.0,
            m3: 0.0,
            a: -13.0 / 6.0,
            b: 0.0,
            delta: 1.0,
            beta: -1.0 / 3.0,
            alpha0: 1.0,
            alpha1: 0.0,
            gamma0: 1.0,
            gamma1: 0.0,
            grid: [ns, nth, nt],
            field: TestField::default(),
            min_order: 0.9,
        }
    }
}

impl GammaConfig {
    pub fn params(&self) -> Result<FilmParams> {
        let elastic = ElasticConstants::new(self.m2, self.m3);
        if !elastic.is_coercive() {
            return Err(Error::IllPosed(format!(
                "(M2, M3) = ({}, {}) is outside coercive region",
                self.m2, self.m3
            )));
        }
        Ok(FilmParams {
            elastic,
            ldg: LdGParams::new(self.a, self.b, self.delta)?,
            anchoring: AnchoringParams::new(self.alpha0, self.alpha1, self.gamma0, self.gamma1, self.beta)?,
        })
    }

    pub fn q0(&self) -> Result<SurfaceField> {
        let [ns, nth, _] = self.grid;
        let grid = SurfaceGrid::new(self.surface.build()?, ns, nth)?;
        let f = self.field;
        Ok(SurfaceField::from_p(grid, self.beta, move |s, th| f.p(s, th)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaOutput {
    pub report: film3d::GammaReport,
    pub pass: bool,
}

pub fn gamma_rate(cfg: &GammaConfig) -> Result<GammaOutput> {
    let params = cfg.params()?;
    let q0 = cfg.q0()?;
    let surface = q0.grid().surface();
    if let Some(&e) = cfg.eps.first() {
        surface.check_fold(e)?;
    }
    let report = film3d::gamma_rate(&q0, &params, &cfg.eps, cfg.grid[2])?;
    let pass = report.monotone && report.fitted_order.is_some_and(|o| o >= cfg.min_order);
    Ok(GammaOutput { report, pass })
}

// ---------------------------------------------------------------- coercivity-map

#[derive(Debug, Args)]
#[command(allow_negative_numbers = true)]
pub struct MapArgs {
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub m2_range: Option<Vec<f64>>,
    #[arg(long, num_args = 2, value_names = ["MIN", "MAX"])]
    pub m3_range: Option<Vec<f64>>,
    /// Grid points per axis.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapConfig {
    pub m2_range: [f64; 2],
    pub m3_range: [f64; 2],
    pub n: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        MapConfig { m2_range: [-1.0, 3.0], m3_range: [-1.5, 2.5], n: 41 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MapRow {
    pub m2: f64,
    pub m3: f64,
    pub margin: f64,
    pub coercive: bool,
}

pub fn coercivity_map(cfg: &MapConfig) -> Result<Vec<MapRow>> {
    if cfg.n < 2 || cfg.m2_range[1] <= cfg.m2_range[0] || cfg.m3_range[1] <= cfg.m3_range[0] {
        return Err(Error::InvalidInput("map needs n >= 2 and increasing ranges".into()));
    }
    let lin = |r: [f64; 2], i: usize| r[0] + (r[1] - r[0]) * i as f64 / (cfg.n - 1) as f64;
    Ok((0..cfg.n * cfg.n)
        .into_par_iter()
        .map(|k| {
            let c = ElasticConstants::new(lin(cfg.m2_range, k / cfg.n), lin(cfg.m3_range, k % cfg.n));
            MapRow { m2: c.m2, m3: c.m3, margin: coercivity_margin(&c), coercive: c.is_coercive() }
        })
        .collect())
}

// ---------------------------------------------------------------- plumbing

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => Ok(serde_json::from_str(&fs::read_to_string(p)?)?),
        None => Ok(T::default()),
    }
}

fn write_json(dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    fs::write(dir.join(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn schema(file: &str, columns: &[(&str, &str)]) -> serde_json::Value {
    json!({
        "file": file,
        "format": "csv, utf-8, header row, '.' decimal separator",
        "columns": columns.iter().map(|(n, d)| json!({"name": n, "description": d})).collect::<Vec<_>>(),
    })
}

/// Errors caused by the configuration, as opposed to failures of a run.
fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidInput(_)
            | Error::IllPosed(_)
            | Error::OutOfRange { .. }
            | Error::Fold { .. }
            | Error::Inadmissible { .. }
            | Error::NotRepresentable { .. }
            | Error::NoNematicMinimum { .. }
            | Error::Json(_)
    )
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let config_stage = std::cell::Cell::new(true);
    let result = dispatch(&cli, &config_stage);
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if config_stage.get() || is_config_error(&e) {
                EXIT_CONFIG
            } else {
                EXIT_FAILURE
            }
        }
    }
}

fn dispatch(cli: &Cli, config_stage: &std::cell::Cell<bool>) -> Result<i32> {
    let cfg_path = cli.config.as_deref();
    let out = &cli.out;
    match &cli.command {
        Command::RemnantCheck(a) => {
            let mut cfg: RemnantConfig = load(cfg_path)?;
            set(&mut cfg.n_cases, a.n_cases);
            set(&mut cfg.tolerance, a.tolerance);
            set(&mut cfg.seed, cli.seed);
            match (a.m2, a.m3) {
                (None, None) => {}
                (m2, m3) => {
                    let [c2, c3] = cfg.constants.unwrap_or([0.0, 0.0]);
                    cfg.constants = Some([m2.unwrap_or(c2), m3.unwrap_or(c3)]);
                }
            }
            if let Some([m2, m3]) = cfg.constants {
                if !ElasticConstants::new(m2, m3).is_coercive() {
                    return Err(Error::IllPosed(format!("(M2, M3) = ({m2}, {m3}) is outside coercive region")));
                }
            }
            fs::create_dir_all(out)?;
            write_json(out, "config.json", &cfg)?;
            config_stage.set(false);
            let report = remnant_check(&cfg)?;
            write_json(out, "report.json", &report)?;
            write_json(
                out,
                "schema.json",
                &json!({"file": "report.json", "fields": ["n_cases", "max_abs_gap", "max_g_gap", "max_f_gap", "tolerance", "pass"]}),
            )?;
            println!("{}", serde_json::to_string(&report)?);
            Ok(if report.pass { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::FrustumSweep(a) => {
            let mut cfg: SweepConfig = load(cfg_path)?;
            set(&mut cfg.phi_min, a.phi_min);
            set(&mut cfg.phi_max, a.phi_max);
            set(&mut cfg.phi_step, a.phi_step);
            set(&mut cfg.ks, a.ks.clone());
            set(&mut cfg.sector.n, a.n);
            set(&mut cfg.sector.starts, a.starts);
            set(&mut cfg.sector.seed, cli.seed);
            if a.no_critical {
                cfg.critical = false;
            }
            cfg.angles()?;
            fs::create_dir_all(out)?;
            write_json(out, "config.json", &cfg)?;
            write_json(
                out,
                "schema.json",
                &schema(
                    "sweep.csv",
                    &[
                        ("phi0", "cone angle in radians; 'critical_angle' on the summary row"),
                        ("k", "winding of the sector"),
                        ("energy", "sector minimum; the critical angle on the summary row"),
                        ("el_residual", "max-norm Euler-Lagrange residual of the minimizer"),
                        ("n_iters", "descent iterations"),
                        ("converged", "residual reached the tolerance"),
                    ],
                ),
            )?;
            config_stage.set(false);
            let res = frustum_sweep(&cfg)?;
            frustum::write_sweep_csv(&res.rows, res.critical, &out.join("sweep.csv"))?;
            let failed = res.rows.iter().filter(|r| !r.converged).count();
            if failed > 0 {
                eprintln!("{failed} row(s) did not converge");
                return Ok(EXIT_FAILURE);
            }
            if let Some(c) = res.critical {
                println!("critical angle {c}");
            }
            Ok(EXIT_OK)
        }
        Command::Minimize(a) => {
            let mut cfg: MinimizeConfig = load(cfg_path)?;
            cfg.surface.apply(a.surface.as_deref(), a.param, a.s0, a.length)?;
            set(&mut cfg.ns, a.ns);
            set(&mut cfg.ntheta, a.ntheta);
            set(&mut cfg.delta, a.delta);
            set(&mut cfg.beta, a.beta);
            set(&mut cfg.winding, a.winding);
            set(&mut cfg.noise, a.noise);
            set(&mut cfg.solver.max_iter, a.max_iter);
            set(&mut cfg.solver.gtol, a.gtol);
            set(&mut cfg.seed, cli.seed);
            if a.init.is_some() {
                cfg.init = a.init.clone();
            }
            let surface = cfg.surface.build()?;
            ReducedConfig::new(surface, cfg.beta, LdGParams::new(cfg.a, cfg.b, cfg.delta)?)?;
            fs::create_dir_all(out)?;
            write_json(out, "config.json", &cfg)?;
            write_json(
                out,
                "schema.json",
                &schema(
                    "field.csv",
                    &[
                        ("s", "arclength along the meridian"),
                        ("theta", "azimuth"),
                        ("p1", "coefficient of T(x)T - N(x)N"),
                        ("p2", "coefficient of T(x)N + N(x)T"),
                        ("psi", "director angle atan2(p2, p1)/2 from T"),
                    ],
                ),
            )?;
            config_stage.set(false);
            let (field, report) = minimize(&cfg)?;
            write_field_csv(&field, &out.join("field.csv"))?;
            write_json(out, "report.json", &report)?;
            println!("{}", serde_json::to_string(&report)?);
            Ok(if report.converged { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::GammaRate(a) => {
            let mut cfg: GammaConfig = load(cfg_path)?;
            cfg.surface.apply(a.surface.as_deref(), a.param, a.s0, a.length)?;
            set(&mut cfg.eps, a.eps.clone());
            set(&mut cfg.m2, a.m2);
            set(&mut cfg.m3, a.m3);
            set(&mut cfg.grid[0], a.ns);
            set(&mut cfg.grid[1], a.ntheta);
            set(&mut cfg.grid[2], a.nt);
            set(&mut cfg.min_order, a.min_order);
            cfg.params()?;
            if let Some(&e) = cfg.eps.first() {
                cfg.surface.build()?.check_fold(e)?;
            }
            fs::create_dir_all(out)?;
            write_json(out, "config.json", &cfg)?;
            write_json(
                out,
                "schema.json",
                &schema(
                    "rate.csv",
                    &[
                        ("eps", "shell half-thickness"),
                        ("F_eps", "shell energy of the recovery field"),
                        ("F0", "limit energy integrated over the thickness"),
                        ("gap", "|F_eps - F0|"),
                        ("fitted_order", "log-log slope of gap against eps (final row only)"),
                    ],
                ),
            )?;
            config_stage.set(false);
            let res = gamma_rate(&cfg)?;
            film3d::write_rate_csv(&res.report, &out.join("rate.csv"))?;
            write_json(out, "report.json", &res)?;
            println!(
                "fitted order {:?}, monotone {}, pass {}",
                res.report.fitted_order, res.report.monotone, res.pass
            );
            Ok(if res.pass { EXIT_OK } else { EXIT_FAILURE })
        }
        Command::CoercivityMap(a) => {
            let mut cfg: MapConfig = load(cfg_path)?;
            if let Some(r) = &a.m2_range {
                cfg.m2_range = [r[0], r[1]];
            }
            if let Some(r) = &a.m3_range {
                cfg.m3_range = [r[0], r[1]];
            }
            set(&mut cfg.n, a.n);
            fs::create_dir_all(out)?;
            write_json(out, "config.json", &cfg)?;
            write_json(
                out,
                "schema.json",
                &schema(
                    "coercivity.csv",
                    &[
                        ("m2", "M2"),
                        ("m3", "M3"),
                        ("margin", "minimum eigenvalue of the elastic form"),
                        ("coercive", "inside the open coercive region"),
                    ],
                ),
            )?;
            let rows = coercivity_map(&cfg)?;
            config_stage.set(false);
            let mut w = csv::Writer::from_path(out.join("coercivity.csv"))?;
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            Ok(EXIT_OK)
        }
    }
}
