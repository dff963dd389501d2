//! Command-line front end.
//!
//! Every subcommand writes a CSV table (header row, floats with 17
//! significant digits) and a JSON summary that echoes the resolved
//! configuration. Exit codes: 0 success, 1 usage or configuration error,
//! 2 numerical failure.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::bounds::{measure_zt, prop31_bound, Prop31Inputs};
use crate::dos::{dos_histogram, empirical_g, frac_moment_bound, window_mass_mc};
use crate::dynamics::{reduce_angle, std_map_orbit, Angle, StdMapState};
use crate::error::Error;
use crate::lyapunov::lyapunov_scan;
use crate::operator::{ComplexEnergy, Distribution, Driver, HProfile, InitLaw, OperatorSpec};
use crate::quad::QuadOptions;
use crate::resonance::{classify_lambda, hbar_roots, i_integral, j_integral, k_integral, DEFAULT_DELTA_EXP};
use crate::thouless::{hull_edges, thouless_scan, ThoulessBudget};
use crate::verify::run_invariants;

#[derive(Debug, Parser)]
#[command(name = "ergolab", version, about = "Ergodic Schrödinger operators at large coupling")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Standard-map orbit x_{−1}, x_0, …, x_steps.
    Orbit(Opts),
    /// Lyapunov exponent on an energy grid.
    Lyapunov(Opts),
    /// Density-of-states histogram.
    Dos(Opts),
    /// Transfer-matrix γ against the log-potential of the DOS.
    Thouless(Opts),
    /// γ scan with the low-γ set measure.
    Scan(Opts),
    /// Exceptional-set and fractional-moment bounds.
    Bounds(Opts),
    /// Resonance integrals, roots of h and λ classification.
    Resonance(Opts),
    /// Run the invariant suite.
    Verify(Opts),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Stdmap,
    Constant,
    Periodic,
    Iid,
    Skewshift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BoundsKind {
    Prop31,
    FracMoment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ResonanceKind {
    K,
    J,
    I,
    Roots,
    Classify,
}

/// Everything a run depends on. Fields left unset take per-subcommand
/// defaults, which are written back before the summary is produced.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, Args)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambda: Option<f64>,
    /// Constant potential value.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub value: Option<f64>,
    /// Period of a periodic potential.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub values: Option<Vec<f64>>,
    /// Uniform i.i.d. support `[lo, hi]`.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lo: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hi: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dim: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rotation_alpha: Option<f64>,

    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub energy: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub e_min: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub e_max: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub e_count: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lambdas: Option<Vec<f64>>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub steps: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ensemble: Option<u64>,
    /// Window length for eigenvalue counts.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub size: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dos_ensemble: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bins: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub samples: Option<u64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub window_half: Option<usize>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tol: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub max_subdiv: Option<usize>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub threshold_frac: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ell: Option<u32>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub xi: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub g: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub a_cut: Option<f64>,
    /// Phase `b` of the K integral and the roots of h; also θ for J.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub b: Option<f64>,
    /// ε of the J integral.
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps: Option<f64>,
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub delta_exp: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub offsets: Option<Vec<f64>>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bounds_kind: Option<BoundsKind>,
    #[arg(long, value_enum)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub resonance_kind: Option<ResonanceKind>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub x_prev: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub x_curr: Option<f64>,

    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    /// CSV output; standard output when absent.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub out: Option<PathBuf>,
    /// JSON summary; defaults to the CSV path with a `.json` extension,
    /// or standard error when writing CSV to standard output.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
struct Opts {
    /// JSON file with RunConfig fields; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    #[command(flatten)]
    run: RunConfig,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Numerical(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Usage(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Usage(format!("i/o: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(format!("csv: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage<T>(msg: impl Into<String>) -> CliResult<T> {
    Err(CliError::Usage(msg.into()))
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            1
        }
        Err(CliError::Numerical(m)) => {
            eprintln!("numerical failure: {m}");
            2
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    let (name, opts): (&str, Opts) = match cmd {
        Command::Orbit(o) => ("orbit", o),
        Command::Lyapunov(o) => ("lyapunov", o),
        Command::Dos(o) => ("dos", o),
        Command::Thouless(o) => ("thouless", o),
        Command::Scan(o) => ("scan", o),
        Command::Bounds(o) => ("bounds", o),
        Command::Resonance(o) => ("resonance", o),
        Command::Verify(o) => ("verify", o),
    };
    let mut cfg = merge_config(opts.config.as_deref(), &opts.run)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = opts.workers {
        if w == 0 {
            return usage("--workers must be positive");
        }
        builder = builder.num_threads(w);
    }
    let pool = builder.build().map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let out = pool.install(|| match name {
        "orbit" => cmd_orbit(&mut cfg),
        "lyapunov" => cmd_lyapunov(&mut cfg),
        "dos" => cmd_dos(&mut cfg),
        "thouless" => cmd_thouless(&mut cfg),
        "scan" => cmd_scan(&mut cfg),
        "bounds" => cmd_bounds(&mut cfg),
        "resonance" => cmd_resonance(&mut cfg),
        _ => cmd_verify(&mut cfg),
    })?;
    let wall = start.elapsed().as_secs_f64();
    write_outputs(name, &cfg, out, wall)
}

/// File values overridden by flags.
fn merge_config(path: Option<&Path>, flags: &RunConfig) -> CliResult<RunConfig> {
    let Some(path) = path else {
        return Ok(flags.clone());
    };
    let text = fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut base: Value =
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let Value::Object(ref mut obj) = base else {
        return usage("config file must hold a JSON object");
    };
    let Value::Object(over) = serde_json::to_value(flags).expect("config serializes") else {
        unreachable!("RunConfig serializes to an object")
    };
    obj.extend(over);
    serde_json::from_value(base).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// A finished computation: CSV table plus summary statistics.
struct Output {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
    stats: Map<String, Value>,
    failure: Option<String>,
}

impl Output {
    fn new(header: Vec<&'static str>) -> Self {
        Self { header, rows: Vec::new(), stats: Map::new(), failure: None }
    }

    fn stat(&mut self, key: &str, v: impl Serialize) {
        self.stats.insert(key.into(), serde_json::to_value(v).expect("serializable"));
    }
}

fn f(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_outputs(name: &str, cfg: &RunConfig, out: Output, wall: f64) -> CliResult<()> {
    let mut csv_buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut csv_buf);
        w.write_record(&out.header)?;
        for r in &out.rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    let summary = json!({
        "command": name,
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cfg.seed,
        "config": cfg,
        "stats": out.stats,
        "status": if out.failure.is_some() { "numerical_failure" } else { "ok" },
        "wall_time": wall,
    });
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    match &cfg.out {
        Some(p) => {
            fs::write(p, &csv_buf)?;
            fs::write(cfg.summary.clone().unwrap_or_else(|| p.with_extension("json")), text)?;
        }
        None => {
            io::stdout().write_all(&csv_buf)?;
            match &cfg.summary {
                Some(s) => fs::write(s, text)?,
                None => io::stderr().write_all(text.as_bytes())?,
            }
        }
    }
    match out.failure {
        Some(m) => Err(CliError::Numerical(m)),
        None => Ok(()),
    }
}

// ---------------------------------------------------------------- resolution

fn require<T: Copy>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

fn positive<T: PartialOrd + Default + Copy + std::fmt::Display>(v: T, flag: &str) -> CliResult<T> {
    if v > T::default() {
        Ok(v)
    } else {
        usage(format!("--{flag} must be positive, got {v}"))
    }
}

fn build_spec(cfg: &mut RunConfig) -> CliResult<OperatorSpec> {
    let model = *cfg.model.get_or_insert(ModelKind::Stdmap);
    let lambda = require(cfg.lambda, "lambda")?;
    let driver = match model {
        ModelKind::Stdmap => Driver::StdMap { init: InitLaw::Uniform },
        ModelKind::Constant => Driver::Constant { value: *cfg.value.get_or_insert(0.0) },
        ModelKind::Periodic => Driver::Periodic {
            values: cfg
                .values
                .clone()
                .ok_or_else(|| CliError::Usage("--values is required for the periodic model".into()))?,
        },
        ModelKind::Iid => Driver::Iid {
            dist: Distribution::Uniform { lo: *cfg.lo.get_or_insert(0.0), hi: *cfg.hi.get_or_insert(1.0) },
        },
        ModelKind::Skewshift => Driver::SkewShift {
            dim: *cfg.dim.get_or_insert(3),
            rotation_alpha: *cfg.rotation_alpha.get_or_insert((5f64.sqrt() - 1.0) / 2.0),
            profile: HProfile::Cosine { amplitude: 1.0 },
            init: InitLaw::Uniform,
        },
    };
    Ok(OperatorSpec::new(driver, lambda)?)
}

/// Explicit `--energy`, else `e_count` points from `e_min` to `e_max`.
fn energy_grid(cfg: &mut RunConfig) -> CliResult<Vec<f64>> {
    if let Some(e) = cfg.energy {
        return Ok(vec![e]);
    }
    let lo = *cfg.e_min.get_or_insert(-0.5);
    let hi = *cfg.e_max.get_or_insert(0.5);
    let n = positive(*cfg.e_count.get_or_insert(101), "e-count")?;
    if n == 1 {
        return Ok(vec![lo]);
    }
    if !(hi > lo) {
        return usage("--e-max must exceed --e-min");
    }
    Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
}

fn default_delta(cfg: &mut RunConfig, spec: &OperatorSpec) -> f64 {
    let ell = *cfg.ell.get_or_insert(match &spec.driver {
        Driver::StdMap { .. } => 2,
        Driver::SkewShift { dim, .. } => ((dim.saturating_sub(1)) / 2).max(1) as u32,
        _ => 1,
    });
    *cfg.delta.get_or_insert(spec.lambda.powi(-(ell as i32)))
}

fn quad_opts(cfg: &mut RunConfig) -> CliResult<QuadOptions> {
    let d = QuadOptions::default();
    Ok(QuadOptions {
        tol: positive(*cfg.tol.get_or_insert(d.tol), "tol")?,
        max_subdiv: positive(*cfg.max_subdiv.get_or_insert(d.max_subdiv), "max-subdiv")?,
    })
}

// ---------------------------------------------------------------- commands

fn cmd_orbit(cfg: &mut RunConfig) -> CliResult<Output> {
    let lambda = require(cfg.lambda, "lambda")?;
    if cfg.model.is_some_and(|m| m != ModelKind::Stdmap) {
        return usage("orbit is defined for the standard map only");
    }
    cfg.model = Some(ModelKind::Stdmap);
    let init = StdMapState::new(*cfg.x_prev.get_or_insert(0.5), *cfg.x_curr.get_or_insert(1.0))?;
    let steps = *cfg.steps.get_or_insert(1000);
    let mut out = Output::new(vec!["n", "x"]);
    for (k, x) in std_map_orbit(init, lambda, steps as usize)?.enumerate() {
        out.rows.push(vec![(k as i64 - 1).to_string(), f(x.value())]);
    }
    out.stat("points", out.rows.len());
    Ok(out)
}

fn cmd_lyapunov(cfg: &mut RunConfig) -> CliResult<Output> {
    let spec = build_spec(cfg)?;
    let grid = energy_grid(cfg)?;
    let n = positive(*cfg.steps.get_or_insert(1_000_000), "steps")?;
    let b = positive(*cfg.ensemble.get_or_insert(16), "ensemble")?;
    let seed = *cfg.seed.get_or_insert(0);
    let est = lyapunov_scan(&spec, &grid, n, b, seed)?;
    let mut out = Output::new(vec!["E", "gamma", "stderr", "steps", "ensemble"]);
    for (e, g) in grid.iter().zip(&est) {
        out.rows.push(vec![f(*e), f(g.gamma), f(g.stderr), g.steps.to_string(), g.ensemble.to_string()]);
    }
    let gammas: Vec<f64> = est.iter().map(|g| g.gamma).collect();
    out.stat("gamma_min", gammas.iter().cloned().fold(f64::INFINITY, f64::min));
    out.stat("gamma_max", gammas.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    out.stat("ln_lambda", spec.lambda.ln());
    out.stat("model", &spec);
    Ok(out)
}

fn dos_edges(cfg: &mut RunConfig, spec: &OperatorSpec) -> CliResult<Vec<f64>> {
    let bins = positive(*cfg.bins.get_or_insert(200), "bins")?;
    match (cfg.e_min, cfg.e_max) {
        (Some(lo), Some(hi)) if hi > lo => Ok((0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect()),
        (None, None) => Ok(hull_edges(spec, bins)?),
        _ => usage("give both --e-min and --e-max (with e-max > e-min) or neither"),
    }
}

fn cmd_dos(cfg: &mut RunConfig) -> CliResult<Output> {
    let spec = build_spec(cfg)?;
    let edges = dos_edges(cfg, &spec)?;
    let n = positive(*cfg.size.get_or_insert(1000), "size")?;
    let b = positive(*cfg.ensemble.get_or_insert(16), "ensemble")?;
    let seed = *cfg.seed.get_or_insert(0);
    let h = dos_histogram(&spec, n, b, &edges, seed)?;
    let mut out = Output::new(vec!["lo", "hi", "mass", "density"]);
    for (lo, hi, m) in h.bins() {
        out.rows.push(vec![f(lo), f(hi), f(m), f(m / (hi - lo))]);
    }
    out.stat("total_mass", h.mass().iter().sum::<f64>());
    out.stat("coverage_warning", h.coverage_warning);
    out.stat("model", &spec);
    Ok(out)
}

fn cmd_thouless(cfg: &mut RunConfig) -> CliResult<Output> {
    let spec = build_spec(cfg)?;
    let grid = energy_grid(cfg)?;
    let budget = ThoulessBudget {
        steps: positive(*cfg.steps.get_or_insert(100_000), "steps")?,
        ensemble: positive(*cfg.ensemble.get_or_insert(16), "ensemble")?,
        dos_size: positive(*cfg.size.get_or_insert(1000), "size")?,
        dos_ensemble: positive(*cfg.dos_ensemble.get_or_insert(16), "dos-ensemble")?,
        bins: positive(*cfg.bins.get_or_insert(400), "bins")?,
    };
    let seed = *cfg.seed.get_or_insert(0);
    let rows = thouless_scan(&spec, &grid, budget, seed)?;
    let mut out = Output::new(vec!["E", "gamma_transfer", "stderr", "gamma_thouless", "residual"]);
    for r in &rows {
        out.rows.push(vec![f(r.e), f(r.gamma_transfer), f(r.stderr), f(r.gamma_thouless), f(r.residual)]);
    }
    out.stat("max_abs_residual", rows.iter().map(|r| r.residual.abs()).fold(0.0, f64::max));
    out.stat("model", &spec);
    Ok(out)
}

fn cmd_scan(cfg: &mut RunConfig) -> CliResult<Output> {
    let spec = build_spec(cfg)?;
    if cfg.energy.is_some() {
        return usage("scan needs an energy window, not --energy");
    }
    let lo = *cfg.e_min.get_or_insert(-0.5);
    let hi = *cfg.e_max.get_or_insert(0.5);
    let count = positive(*cfg.e_count.get_or_insert(101), "e-count")?;
    if !(hi > lo) {
        return usage("--e-max must exceed --e-min");
    }
    // cell midpoints of the open window, so each point carries weight h
    let h = (hi - lo) / count as f64;
    let grid: Vec<f64> = (0..count).map(|k| lo + (k as f64 + 0.5) * h).collect();
    let n = positive(*cfg.steps.get_or_insert(1_000_000), "steps")?;
    let b = positive(*cfg.ensemble.get_or_insert(16), "ensemble")?;
    let frac = *cfg.threshold_frac.get_or_insert(0.8);
    let seed = *cfg.seed.get_or_insert(0);
    let est = lyapunov_scan(&spec, &grid, n, b, seed)?;
    let t = frac * spec.lambda.ln();
    let rows: Vec<(f64, f64)> = grid.iter().zip(&est).map(|(e, g)| (*e, g.gamma)).collect();
    let meas = if count >= 2 {
        measure_zt(&rows, t, 0.5 * (lo + hi), 0.5 * (hi - lo))?
    } else {
        h * (rows[0].1 <= t) as u8 as f64
    };
    let below = rows.iter().filter(|r| r.1 <= t).count();
    let mut out = Output::new(vec!["E", "gamma", "stderr"]);
    for (e, g) in grid.iter().zip(&est) {
        out.rows.push(vec![f(*e), f(g.gamma), f(g.stderr)]);
    }
    out.stat("threshold", t);
    out.stat("meas_Zt", meas);
    out.stat("fraction_below", below as f64 / count as f64);
    out.stat("gamma_min", rows.iter().map(|r| r.1).fold(f64::INFINITY, f64::min));
    out.stat("gamma_max", rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max));
    if matches!(spec.driver, Driver::StdMap { .. }) && spec.lambda >= std::f64::consts::TAU {
        let d = *cfg.delta_exp.get_or_insert(DEFAULT_DELTA_EXP);
        let off = offsets(cfg)?;
        out.stat("classification", classify_lambda(spec.lambda, d, &off)?);
    }
    out.stat("model", &spec);
    Ok(out)
}

fn offsets(cfg: &mut RunConfig) -> CliResult<Vec<Angle>> {
    let raw = cfg.offsets.get_or_insert_with(|| vec![0.0, std::f64::consts::PI]).clone();
    raw.into_iter().map(|o| Ok(reduce_angle(o)?)).collect()
}

fn cmd_bounds(cfg: &mut RunConfig) -> CliResult<Output> {
    let spec = build_spec(cfg)?;
    match *cfg.bounds_kind.get_or_insert(BoundsKind::Prop31) {
        BoundsKind::Prop31 => bounds_prop31(cfg, &spec),
        BoundsKind::FracMoment => bounds_frac(cfg, &spec),
    }
}

fn bounds_prop31(cfg: &mut RunConfig, spec: &OperatorSpec) -> CliResult<Output> {
    let delta = default_delta(cfg, spec);
    let e0 = *cfg.energy.get_or_insert(0.0);
    let t = *cfg.threshold_frac.get_or_insert(0.8) * spec.lambda.ln();
    let xi = *cfg.xi.get_or_insert(0.5);
    let g = match cfg.g {
        Some(g) => g,
        None => {
            let n = positive(*cfg.size.get_or_insert(1000), "size")?;
            let b = positive(*cfg.ensemble.get_or_insert(16), "ensemble")?;
            let bins = positive(*cfg.bins.get_or_insert(2000), "bins")?;
            let seed = *cfg.seed.get_or_insert(0);
            let h = dos_histogram(spec, n, b, &hull_edges(spec, bins)?, seed)?;
            empirical_g(&h, e0, delta)?
        }
    };
    cfg.g = Some(g);
    let r = prop31_bound(Prop31Inputs { ln_lambda: spec.lambda.ln(), t, xi, delta, g })?;
    let mut out = Output::new(vec![
        "ln_lambda",
        "t",
        "xi",
        "delta",
        "g",
        "log_raw_bound",
        "raw_bound",
        "clamped_bound",
        "vacuous",
    ]);
    let p = r.inputs;
    out.rows.push(vec![
        f(p.ln_lambda),
        f(p.t),
        f(p.xi),
        f(p.delta),
        f(p.g),
        f(r.log_raw_bound),
        f(r.raw_bound),
        f(r.clamped_bound),
        r.vacuous.to_string(),
    ]);
    out.stat("report", r);
    out.stat("model", spec);
    Ok(out)
}

fn bounds_frac(cfg: &mut RunConfig, spec: &OperatorSpec) -> CliResult<Output> {
    let grid = energy_grid(cfg)?;
    let delta = default_delta(cfg, spec);
    let alpha = *cfg.alpha.get_or_insert(0.5);
    let l = *cfg.window_half.get_or_insert(200);
    let b = positive(*cfg.samples.get_or_insert(400), "samples")?;
    let n = positive(*cfg.size.get_or_insert(1000), "size")?;
    let bm = positive(*cfg.ensemble.get_or_insert(64), "ensemble")?;
    let seed = *cfg.seed.get_or_insert(0);
    let mut out = Output::new(vec!["E", "delta", "bound", "bound_stderr", "mass", "mass_stderr", "dominated"]);
    let (mut clamp, mut violations) = (0u64, 0usize);
    for &e in &grid {
        let w = frac_moment_bound(spec, e, delta, alpha, l, b, seed)?;
        let (m, se) = window_mass_mc(spec, e - delta, e + delta, n, bm, seed)?;
        let dominated = w.bound + 2.0 * (w.stderr + se) >= m;
        clamp += w.clamp_violations;
        violations += (!dominated) as usize;
        out.rows.push(vec![f(e), f(delta), f(w.bound), f(w.stderr), f(m), f(se), dominated.to_string()]);
    }
    out.stat("clamp_violations", clamp);
    out.stat("dominance_violations", violations);
    out.stat("model", spec);
    if clamp > 0 {
        out.failure = Some(format!("{clamp} resolvent samples exceeded the 1/δ clamp"));
    }
    Ok(out)
}

fn lambda_list(cfg: &mut RunConfig) -> CliResult<Vec<f64>> {
    match (&cfg.lambdas, cfg.lambda) {
        (Some(l), _) if !l.is_empty() => Ok(l.clone()),
        (_, Some(l)) => Ok(vec![l]),
        _ => usage("--lambda or --lambdas is required"),
    }
}

fn cmd_resonance(cfg: &mut RunConfig) -> CliResult<Output> {
    let kind = *cfg.resonance_kind.get_or_insert(ResonanceKind::K);
    cfg.model = Some(ModelKind::Stdmap);
    let mut out;
    let mut bad = 0usize;
    let mut push_quad = |out: &mut Output, key: Vec<String>, r: crate::quad::QuadResult| {
        bad += (!r.converged) as usize;
        let mut row = key;
        row.extend([
            f(r.value),
            f(r.err_est),
            r.converged.to_string(),
            r.divergent.to_string(),
            r.subdivisions.to_string(),
        ]);
        out.rows.push(row);
    };
    match kind {
        ResonanceKind::K => {
            let lambdas = lambda_list(cfg)?;
            let b = reduce_angle(*cfg.b.get_or_insert(0.0))?;
            let e = *cfg.energy.get_or_insert(0.0);
            let alpha = *cfg.alpha.get_or_insert(0.6);
            let o = quad_opts(cfg)?;
            out = Output::new(vec!["lambda", "value", "err_est", "converged", "divergent", "subdivisions"]);
            for l in lambdas {
                let r = k_integral(l, b, e, alpha, &o)?;
                push_quad(&mut out, vec![f(l)], r);
            }
        }
        ResonanceKind::J => {
            let th = reduce_angle(*cfg.b.get_or_insert(0.0))?;
            let e = *cfg.energy.get_or_insert(0.0);
            let alpha = *cfg.alpha.get_or_insert(0.6);
            let eps = *cfg.eps.get_or_insert(0.0);
            let o = quad_opts(cfg)?;
            out = Output::new(vec!["theta", "value", "err_est", "converged", "divergent", "subdivisions"]);
            let r = j_integral(e, th, alpha, eps, &o)?;
            push_quad(&mut out, vec![f(th.value())], r);
        }
        ResonanceKind::I => {
            let lambdas = lambda_list(cfg)?;
            let z = ComplexEnergy::new(*cfg.energy.get_or_insert(0.0), *cfg.delta.get_or_insert(0.0))?;
            let a = positive(*cfg.a_cut.get_or_insert(10.0), "a-cut")?;
            let alpha = *cfg.alpha.get_or_insert(0.5);
            let o = quad_opts(cfg)?;
            out = Output::new(vec!["lambda", "value", "err_est", "converged", "divergent", "subdivisions"]);
            for l in lambdas {
                let r = i_integral(l, z, a, alpha, &o)?;
                push_quad(&mut out, vec![f(l)], r);
            }
        }
        ResonanceKind::Roots => {
            let lambdas = lambda_list(cfg)?;
            let b = reduce_angle(*cfg.b.get_or_insert(0.0))?;
            out = Output::new(vec!["lambda", "root", "h"]);
            for l in lambdas {
                for r in hbar_roots(l, b)? {
                    let x = r.value();
                    out.rows.push(vec![f(l), f(x), f(l * x.cos() + 2.0 * x)]);
                }
            }
        }
        ResonanceKind::Classify => {
            let lambdas = lambda_list(cfg)?;
            let d = *cfg.delta_exp.get_or_insert(DEFAULT_DELTA_EXP);
            let off = offsets(cfg)?;
            out = Output::new(vec!["lambda", "lambda_bar", "distance", "threshold", "resonant"]);
            for l in lambdas {
                let c = classify_lambda(l, d, &off)?;
                out.rows.push(vec![
                    f(l),
                    f(c.lambda_bar.value()),
                    f(c.distance),
                    f(l.powf(-d)),
                    c.resonant.to_string(),
                ]);
            }
        }
    }
    out.stat("kind", kind);
    out.stat("non_converged", bad);
    if bad > 0 {
        out.failure = Some(format!("{bad} quadratures did not converge"));
    }
    Ok(out)
}

fn cmd_verify(cfg: &mut RunConfig) -> CliResult<Output> {
    let seed = *cfg.seed.get_or_insert(0);
    let checks = run_invariants(seed);
    let mut out = Output::new(vec!["check", "passed", "detail"]);
    for c in &checks {
        out.rows.push(vec![c.name.to_string(), c.passed.to_string(), c.detail.clone()]);
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    out.stat("checks", checks.len());
    out.stat("failed", &failed);
    if !failed.is_empty() {
        out.failure = Some(format!("invariants violated: {}", failed.join(", ")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips() {
        let cfg = RunConfig {
            model: Some(ModelKind::Iid),
            lambda: Some(10.0),
            lambdas: Some(vec![30.0, 50.0]),
            bounds_kind: Some(BoundsKind::FracMoment),
            seed: Some(7),
            ..Default::default()
        };
        let s = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&s).unwrap(), cfg);
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"lambda": 5.0, "seed": 3, "steps": 10}"#).unwrap();
        let flags = RunConfig { lambda: Some(8.0), ..Default::default() };
        let m = merge_config(Some(&p), &flags).unwrap();
        assert_eq!((m.lambda, m.seed, m.steps), (Some(8.0), Some(3), Some(10)));
    }

    #[test]
    fn unknown_config_key_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"lamda": 5.0}"#).unwrap();
        assert!(merge_config(Some(&p), &RunConfig::default()).is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["ergolab", "lyapunov", "--bogus"]), 1);
        assert_eq!(run(["ergolab", "lyapunov", "--steps", "10"]), 1);
        assert_eq!(run(["ergolab", "resonance", "--resonance-kind", "k", "--lambda", "30", "--alpha", "0.4"]), 1);
    }

    #[test]
    fn default_delta_per_model() {
        let mut cfg = RunConfig::default();
        let s = OperatorSpec::stdmap(10.0).unwrap();
        assert!((default_delta(&mut cfg, &s) - 0.01).abs() < 1e-15);
        let mut cfg = RunConfig::default();
        let s = OperatorSpec::skewshift(5, 0.3, 10.0).unwrap();
        assert!((default_delta(&mut cfg, &s) - 0.01).abs() < 1e-15);
        assert_eq!(cfg.ell, Some(2));
    }
}
