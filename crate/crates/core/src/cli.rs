//! Command-line driver: `solve`, `sweep`, `verify` and `reconstruct` runs
//! configured from a JSON file, flags, or both.
//!
//! Exit codes: 0 success, 1 a verification check failed, 2 bad
//! configuration, 3 the solver failed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::asymptotics::{fit_blowup_rate, remainder_profile};
use crate::constants::{derive_params, ConstantsError, SolitonInputs, SolitonParams};
use crate::continuation::{check_range, ContinuationError};
use crate::metric::{a_eqn_residual, profile_samples, reconstruct_a, reconstruct_f, soliton_residual};
use crate::quadrature::QuadratureError;
use crate::report::{emit_local, emit_metric, emit_profile, emit_qtail, emit_remainders, emit_series, write_json, Axes, ReportError};
use crate::verify::{SolveSettings, VerifyError, Workbench, METRIC_SAMPLES};

pub const OUT_ENV: &str = "SOLITON_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Solve,
    Sweep,
    Verify,
    Reconstruct,
}

/// Parameter lists whose Cartesian product is swept.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepRanges {
    pub n: Vec<u32>,
    pub lambda: Vec<f64>,
    pub c0: Vec<f64>,
    pub c1: Vec<f64>,
}

impl Default for SweepRanges {
    fn default() -> Self {
        Self { n: vec![2], lambda: vec![0.0], c0: vec![1.0], c1: vec![0.0] }
    }
}

impl SweepRanges {
    pub fn tuples(&self) -> Vec<SolitonInputs> {
        let mut out = Vec::new();
        for &n in &self.n {
            for &lambda in &self.lambda {
                for &c0 in &self.c0 {
                    for &c1 in &self.c1 {
                        out.push(SolitonInputs::new(n, lambda, c0, c1));
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub k: usize,
    pub r_min_factor: f64,
    pub eps: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        let s = SolveSettings::default();
        Self { k: s.k, r_min_factor: s.r_min_factor, eps: s.eps }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub picard_tol: f64,
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        let s = SolveSettings::default();
        Self { picard_tol: s.picard_tol, rtol: s.rtol, atol: s.atol }
    }
}

/// Everything a run needs. Missing JSON fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    /// The tuple for `solve`, `verify` and `reconstruct`.
    pub inputs: SolitonInputs,
    /// Used by `sweep` only.
    pub sweep: SweepRanges,
    pub grid: GridConfig,
    pub tolerances: Tolerances,
    pub r_max: f64,
    /// Number of `a` samples for `reconstruct`.
    pub metric_samples: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Solve,
            inputs: SolitonInputs::default(),
            sweep: SweepRanges::default(),
            grid: GridConfig::default(),
            tolerances: Tolerances::default(),
            r_max: SolveSettings::default().r_max,
            metric_samples: METRIC_SAMPLES,
            output_dir: PathBuf::from("soliton-out"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("{name} = {value} must be positive and finite")]
    NotPositive { name: &'static str, value: f64 },
    #[error("sweep range {0} is empty")]
    EmptyRange(&'static str),
    #[error("{0} takes a single value outside sweep mode")]
    NotScalar(&'static str),
    #[error("metric_samples = {0}, need at least 5")]
    MetricSamples(usize),
    #[error("eps = {0} must lie in (0, 0.5]")]
    Eps(f64),
    #[error(transparent)]
    Constants(#[from] ConstantsError),
    #[error(transparent)]
    Grid(#[from] QuadratureError),
    #[error(transparent)]
    Range(#[from] ContinuationError),
}

/// Why a run did not exit cleanly.
#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("solver failed: {0}")]
    Solver(#[from] VerifyError),
    #[error(transparent)]
    Output(#[from] ReportError),
    #[error("{failed} verification check(s) failed")]
    Verification { failed: usize },
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Verification { .. } => 1,
            RunError::Config(_) => 2,
            RunError::Solver(_) | RunError::Output(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "soliton", version, about = "Singular Ricci soliton profiles: solve, sweep, verify, reconstruct")]
pub struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// Sphere dimension; a comma list in sweep mode.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<u32>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub c0: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub c1: Vec<f64>,
    /// Outer radius of the fixed-point grid; eps3 when omitted.
    #[arg(long, allow_negative_numbers = true)]
    pub eps: Option<f64>,
    /// Grid intervals.
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub r_min_factor: Option<f64>,
    /// Fixed-point tolerance.
    #[arg(long, allow_negative_numbers = true)]
    pub tol: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub rtol: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub atol: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub rmax: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn scalar<T: Copy>(name: &'static str, values: &[T], mode: Mode) -> Result<Option<T>, ConfigError> {
    match (values, mode) {
        ([], _) => Ok(None),
        ([v], _) => Ok(Some(*v)),
        (_, Mode::Sweep) => Ok(None),
        _ => Err(ConfigError::NotScalar(name)),
    }
}

impl Cli {
    /// File, then `SOLITON_OUT`, then flags.
    pub fn resolve(&self, env_out: Option<PathBuf>) -> Result<RunConfig, ConfigError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.clone(), source })?;
                serde_json::from_str(&text).map_err(|source| ConfigError::Parse { path: path.clone(), source })?
            }
            None => RunConfig::default(),
        };
        if let Some(dir) = env_out {
            cfg.output_dir = dir;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        let mode = cfg.mode;
        if let Some(v) = scalar("n", &self.n, mode)? {
            cfg.inputs.n = v;
        }
        if let Some(v) = scalar("lambda", &self.lambda, mode)? {
            cfg.inputs.lambda = v;
        }
        if let Some(v) = scalar("c0", &self.c0, mode)? {
            cfg.inputs.c0 = v;
        }
        if let Some(v) = scalar("c1", &self.c1, mode)? {
            cfg.inputs.c1 = v;
        }
        let lists = [(&self.lambda, &mut cfg.sweep.lambda), (&self.c0, &mut cfg.sweep.c0), (&self.c1, &mut cfg.sweep.c1)];
        for (flag, range) in lists {
            if !flag.is_empty() {
                range.clone_from(flag);
            }
        }
        if !self.n.is_empty() {
            cfg.sweep.n.clone_from(&self.n);
        }
        cfg.grid.eps = self.eps.or(cfg.grid.eps);
        cfg.grid.k = self.k.unwrap_or(cfg.grid.k);
        cfg.grid.r_min_factor = self.r_min_factor.unwrap_or(cfg.grid.r_min_factor);
        cfg.tolerances.picard_tol = self.tol.unwrap_or(cfg.tolerances.picard_tol);
        cfg.tolerances.rtol = self.rtol.unwrap_or(cfg.tolerances.rtol);
        cfg.tolerances.atol = self.atol.unwrap_or(cfg.tolerances.atol);
        cfg.r_max = self.rmax.unwrap_or(cfg.r_max);
        if let Some(dir) = &self.out {
            cfg.output_dir.clone_from(dir);
        }
        Ok(cfg)
    }
}

impl RunConfig {
    pub fn settings(&self) -> SolveSettings {
        SolveSettings {
            k: self.grid.k,
            r_min_factor: self.grid.r_min_factor,
            eps: self.grid.eps,
            picard_tol: self.tolerances.picard_tol,
            rtol: self.tolerances.rtol,
            atol: self.tolerances.atol,
            r_max: self.r_max,
        }
    }

    fn tuples(&self) -> Vec<SolitonInputs> {
        match self.mode {
            Mode::Sweep => self.sweep.tuples(),
            _ => vec![self.inputs],
        }
    }

    /// Checks everything that can be rejected before solving and returns the
    /// derived parameters of each tuple.
    pub fn validate(&self) -> Result<Vec<SolitonParams>, ConfigError> {
        let t = &self.tolerances;
        for (name, value) in [("picard_tol", t.picard_tol), ("rtol", t.rtol), ("atol", t.atol), ("r_max", self.r_max)] {
            if !(value.is_finite() && value > 0.0) {
                return Err(ConfigError::NotPositive { name, value });
            }
        }
        if let Some(eps) = self.grid.eps {
            if !(eps > 0.0 && eps <= 0.5) {
                return Err(ConfigError::Eps(eps));
            }
        }
        if self.mode == Mode::Reconstruct && self.metric_samples < 5 {
            return Err(ConfigError::MetricSamples(self.metric_samples));
        }
        if self.mode == Mode::Sweep {
            let s = &self.sweep;
            for (name, len) in [("n", s.n.len()), ("lambda", s.lambda.len()), ("c0", s.c0.len()), ("c1", s.c1.len())] {
                if len == 0 {
                    return Err(ConfigError::EmptyRange(name));
                }
            }
        }
        let settings = self.settings();
        self.tuples()
            .into_iter()
            .map(|inputs| {
                let params = derive_params(inputs)?;
                let eps = settings.eps_for(&params);
                if !(eps > 0.0 && eps <= 0.5) {
                    return Err(ConfigError::Eps(eps));
                }
                settings.grid(&params)?;
                check_range(&params, eps, self.r_max)?;
                Ok(params)
            })
            .collect()
    }
}

fn fmt_value(x: f64) -> String {
    let s = format!("{x}");
    s.replace('-', "m")
}

/// Subdirectory name for one sweep tuple, e.g. `n2_lambda0_c01_c10`.
pub fn tuple_dir(inputs: &SolitonInputs) -> String {
    format!(
        "n{}_lambda{}_c0{}_c1{}",
        inputs.n,
        fmt_value(inputs.lambda),
        fmt_value(inputs.c0),
        fmt_value(inputs.c1)
    )
}

/// What a successful or verification-failing run produced.
#[derive(Debug, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub failed_checks: Vec<String>,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.files {
            writeln!(f, "wrote {}", p.display())?;
        }
        for c in &self.failed_checks {
            writeln!(f, "{c}")?;
        }
        Ok(())
    }
}

fn solve_into(dir: &Path, bench: &Workbench, out: &mut RunSummary) -> Result<(), RunError> {
    let (local, global) = bench.base()?;
    out.files.extend(emit_local(dir, local)?);
    out.files.extend(emit_profile(dir, global)?);
    Ok(())
}

fn verify_into(dir: &Path, bench: &Workbench, out: &mut RunSummary) -> Result<(), RunError> {
    let report = bench.report()?;
    let path = dir.join("report.json");
    write_json(&path, &report)?;
    out.files.push(path);
    out.failed_checks.extend(report.checks.iter().filter(|c| !c.pass).map(|c| c.summary()));
    // a failed base solve is a solver failure, reported after the JSON is on disk
    let (_, global) = bench.base()?;
    if let Ok(fit) = fit_blowup_rate(global, (1e-6, 1e-3)) {
        out.files.push(emit_qtail(dir, &fit)?);
    }
    let rem = remainder_profile(global, &bench.params);
    if !rem.is_empty() {
        out.files.extend(emit_remainders(dir, &rem)?);
    }
    Ok(())
}

fn reconstruct_into(dir: &Path, bench: &Workbench, samples: usize, out: &mut RunSummary) -> Result<(), RunError> {
    let (_, global) = bench.base()?;
    let (lambda, n) = (bench.params.lambda(), bench.params.n());
    let mp = reconstruct_a(global, &profile_samples(global, samples)).map_err(VerifyError::from)?;
    let mp = reconstruct_f(&mp, lambda, n).map_err(VerifyError::from)?;
    let res = soliton_residual(&mp, lambda, n).map_err(VerifyError::from)?;
    let a_eqn = a_eqn_residual(&mp, lambda, n).map_err(VerifyError::from)?;
    out.files.extend(emit_metric(dir, &mp)?);
    let series: [(&str, &[f64]); 3] = [("res_tt", &res.res_tt), ("res_sphere", &res.res_sphere), ("a_equation", &a_eqn)];
    out.files.extend(emit_series(dir, "residuals", "t", &mp.t, &series, Axes::Linear)?);
    Ok(())
}

/// Runs a validated configuration. `Ok` carries the written files; failing
/// checks come back as [`RunError::Verification`].
pub fn run(config: &RunConfig) -> Result<RunSummary, RunError> {
    let params = config.validate()?;
    let settings = config.settings();
    let dir = &config.output_dir;
    let mut out = RunSummary::default();
    match config.mode {
        Mode::Solve => solve_into(dir, &Workbench::new(params[0], settings), &mut out)?,
        Mode::Verify => verify_into(dir, &Workbench::new(params[0], settings), &mut out)?,
        Mode::Reconstruct => reconstruct_into(dir, &Workbench::new(params[0], settings), config.metric_samples, &mut out)?,
        Mode::Sweep => {
            let inputs = config.tuples();
            let results: Vec<Result<RunSummary, RunError>> = params
                .par_iter()
                .zip(&inputs)
                .map(|(p, i)| {
                    let sub = dir.join(tuple_dir(i));
                    let bench = Workbench::new(*p, settings);
                    let mut part = RunSummary::default();
                    solve_into(&sub, &bench, &mut part)?;
                    verify_into(&sub, &bench, &mut part)?;
                    Ok(part)
                })
                .collect();
            // the first solver or output error wins; otherwise gather everything
            for r in results {
                let part = r?;
                out.files.extend(part.files);
                out.failed_checks.extend(part.failed_checks);
            }
        }
    }
    if out.failed_checks.is_empty() {
        return Ok(out);
    }
    for p in &out.files {
        println!("wrote {}", p.display());
    }
    for c in &out.failed_checks {
        eprintln!("{c}");
    }
    Err(RunError::Verification { failed: out.failed_checks.len() })
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let result = cli.resolve(env_out).map_err(RunError::from).and_then(|cfg| run(&cfg));
    match result {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("soliton").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        fs::write(&path, r#"{"mode": "verify", "inputs": {"n": 5, "lambda": 1, "c0": 2, "c1": 0}, "r_max": 50, "output_dir": "a"}"#)
            .unwrap();
        let cfg = cli(&["--config", path.to_str().unwrap(), "--n", "3", "--rmax", "20"]).resolve(None).unwrap();
        assert_eq!(cfg.mode, Mode::Verify);
        assert_eq!(cfg.inputs, SolitonInputs::new(3, 1.0, 2.0, 0.0));
        assert_eq!(cfg.r_max, 20.0);
        assert_eq!(cfg.output_dir, PathBuf::from("a"));
    }

    #[test]
    fn output_dir_precedence() {
        let env = Some(PathBuf::from("env"));
        assert_eq!(cli(&[]).resolve(env.clone()).unwrap().output_dir, PathBuf::from("env"));
        assert_eq!(cli(&["--out", "flag"]).resolve(env).unwrap().output_dir, PathBuf::from("flag"));
    }

    #[test]
    fn defaults_match_solver_defaults() {
        let cfg = cli(&[]).resolve(None).unwrap();
        assert_eq!(cfg.settings(), SolveSettings::default());
        assert_eq!(cfg.inputs, SolitonInputs::new(2, 0.0, 1.0, 0.0));
    }

    #[test]
    fn lists_only_in_sweep_mode() {
        assert!(matches!(cli(&["--n", "2,3"]).resolve(None), Err(ConfigError::NotScalar("n"))));
        let cfg = cli(&["--mode", "sweep", "--n", "2,3", "--lambda", "0,1"]).resolve(None).unwrap();
        assert_eq!(cfg.sweep.tuples().len(), 4);
    }

    #[test]
    fn validation_errors() {
        let bad = |f: fn(&mut RunConfig)| {
            let mut cfg = RunConfig::default();
            f(&mut cfg);
            cfg.validate().unwrap_err()
        };
        assert!(matches!(bad(|c| c.inputs.c0 = -1.0), ConfigError::Constants(_)));
        assert!(matches!(
            bad(|c| {
                c.inputs.lambda = -1.0;
                c.r_max = 2.0;
            }),
            ConfigError::Range(ContinuationError::BeyondBarrier { .. })
        ));
        assert!(matches!(bad(|c| c.tolerances.rtol = 0.0), ConfigError::NotPositive { name: "rtol", .. }));
        assert!(matches!(bad(|c| c.grid.eps = Some(0.7)), ConfigError::Eps(_)));
        assert!(matches!(
            bad(|c| {
                c.mode = Mode::Sweep;
                c.sweep.c1.clear();
            }),
            ConfigError::EmptyRange("c1")
        ));
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"rmax": 3}"#).is_err());
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn tuple_dirs_are_distinct() {
        let a = tuple_dir(&SolitonInputs::new(2, -0.5, 1.0, 0.0));
        let b = tuple_dir(&SolitonInputs::new(2, 0.5, 1.0, 0.0));
        assert_eq!(a, "n2_lambdam0.5_c01_c10");
        assert_ne!(a, b);
    }
}
