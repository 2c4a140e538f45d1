//! Experiment drivers behind the command-line tool.
//!
//! Each command reads an [`ExperimentConfig`], runs seeded trials in
//! parallel and writes CSV files plus a `<command>.meta.json` sidecar into
//! the output directory. Every CSV starts with a comment line
//!
//! ```text
//! # finrank-krr <command> config_hash=<sha256> seed=<u64>
//! ```
//!
//! followed by a fixed header row. Trial `t` uses seed `seed + t`, so a
//! rerun with the same configuration reproduces every file byte for byte.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bounds::{self, BoundOptions};
use crate::exact_error::{self, ErrorReport};
use crate::kernel::{Domain, KernelDescriptor, SpectralKernel};
use crate::regressor;
use crate::stats::Summary;
use crate::target::{TargetCoefficients, TargetSpec};
use crate::{Error, Result};

/// Points on the evaluation grid of the `train` command.
pub const TRAIN_GRID_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed(f64),
    /// `λ = σ²/N` at each grid point.
    Sigma2OverN,
    /// `λ = σ²/n_ref`, held fixed across the grid.
    FixedRefN(f64),
}

impl LambdaRule {
    pub fn lambda(&self, n: usize, sigma2: f64) -> f64 {
        match *self {
            LambdaRule::Fixed(v) => v,
            LambdaRule::Sigma2OverN => sigma2 / n as f64,
            LambdaRule::FixedRefN(r) => sigma2 / r,
        }
    }

    fn validate(&self, sigma2: f64) -> Result<()> {
        match *self {
            LambdaRule::Fixed(v) if !(v >= 0.0 && v.is_finite()) => {
                Err(Error::Config(format!("fixed λ must be finite and >= 0, got {v}")))
            }
            LambdaRule::FixedRefN(r) if !(r > 0.0 && r.is_finite()) => {
                Err(Error::Config(format!("reference N must be > 0, got {r}")))
            }
            LambdaRule::Sigma2OverN | LambdaRule::FixedRefN(_) if sigma2 == 0.0 => {
                log::warn!("λ rule tied to σ² with σ² = 0 gives the ridgeless limit");
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetPreset {
    /// `cos θ` on a circle kernel.
    TntkCos,
    /// `x²` on a Legendre kernel.
    LegendreX2,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetDescriptor {
    Preset {
        preset: TargetPreset,
    },
    LegendreRaw {
        legendre_raw: Vec<f64>,
    },
    Coefficients(TargetCoefficients),
}

impl TargetDescriptor {
    pub fn build(&self, kernel: Arc<SpectralKernel>) -> Result<TargetSpec> {
        match self {
            TargetDescriptor::Preset { preset } => match preset {
                TargetPreset::TntkCos => TargetSpec::tntk_cosine(kernel),
                TargetPreset::LegendreX2 => TargetSpec::legendre_x_squared(kernel),
                TargetPreset::Zero => Ok(TargetSpec::zero(kernel)),
            },
            TargetDescriptor::LegendreRaw { legendre_raw } => TargetSpec::legendre_raw(kernel, legendre_raw),
            TargetDescriptor::Coefficients(c) => TargetSpec::from_coefficients(kernel, c),
        }
    }
}

fn default_trials() -> usize {
    10
}

fn default_lambda_grid() -> Vec<f64> {
    (0..=10).map(|i| 10f64.powf(-6.0 + 0.5 * i as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: KernelDescriptor,
    pub target: TargetDescriptor,
    pub noise_var: f64,
    pub n_grid: Vec<usize>,
    pub lambda_rule: LambdaRule,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Not part of the configuration hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Ridge values for the λ panel of `bounds`.
    #[serde(default = "default_lambda_grid")]
    pub lambda_grid: Vec<f64>,
    /// Sample size for the λ panel; defaults to the first grid point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_panel_n: Option<usize>,
    #[serde(default)]
    pub include_residue: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rademacher_c: Option<f64>,
}

/// Command-line overrides applied on top of a loaded configuration.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub include_residue: Option<bool>,
    pub output_dir: Option<PathBuf>,
}

/// Kernel and target built from a validated configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub kernel: Arc<SpectralKernel>,
    pub target: TargetSpec,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.trials {
            self.trials = t;
        }
        if let Some(r) = o.include_residue {
            self.include_residue = r;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = Some(d.clone());
        }
    }

    pub fn build(&self) -> Result<Setup> {
        let kernel = Arc::new(SpectralKernel::from_descriptor(&self.kernel)?);
        let target = self.target.build(kernel.clone())?;
        let m = kernel.rank();
        if self.n_grid.is_empty() {
            return Err(Error::Config("n_grid is empty".into()));
        }
        for &n in self.n_grid.iter().chain(self.lambda_panel_n.iter()) {
            if n < 3 || n <= m {
                return Err(Error::Config(format!(
                    "sample size {n} must be >= 3 and exceed the kernel rank {m}"
                )));
            }
            if n > regressor::MAX_SAMPLES {
                return Err(Error::Capability(format!(
                    "sample size {n} exceeds {}",
                    regressor::MAX_SAMPLES
                )));
            }
        }
        if !(self.noise_var >= 0.0) || !self.noise_var.is_finite() {
            return Err(Error::Config(format!("noise_var must be >= 0, got {}", self.noise_var)));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be >= 1".into()));
        }
        if self.lambda_grid.iter().any(|l| !(*l >= 0.0) || !l.is_finite()) {
            return Err(Error::Config("lambda_grid entries must be finite and >= 0".into()));
        }
        if let Some(c) = self.rademacher_c {
            if !(c > 0.0) {
                return Err(Error::Config(format!("rademacher_c must be > 0, got {c}")));
            }
        }
        self.lambda_rule.validate(self.noise_var)?;
        Ok(Setup { kernel, target })
    }

    /// SHA-256 of the canonical JSON form, with the output directory removed.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let text = serde_json::to_string(&c).expect("configuration serialises");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    fn lambda_panel_n(&self) -> usize {
        self.lambda_panel_n.unwrap_or(self.n_grid[0])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub report: ErrorReport,
}

/// Exact test error on `trials` independent input draws, seeds
/// `seed, seed + 1, …`. Results are in trial order.
pub fn run_trials(
    target: &TargetSpec,
    n: usize,
    lambda: f64,
    sigma2: f64,
    trials: usize,
    seed: u64,
) -> Result<Vec<TrialResult>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = seed.wrapping_add(t as u64);
            let data = target.sample_dataset(n, 0.0, s)?;
            let state = exact_error::fluctuation_state(target.kernel(), &data.inputs, lambda)?;
            Ok(TrialResult { trial: t, seed: s, report: exact_error::error_report(&state, target, sigma2) })
        })
        .collect()
}

pub fn summarize(trials: &[TrialResult]) -> Summary {
    let v: Vec<f64> = trials.iter().map(|t| t.report.test_error).collect();
    Summary::from_values(&v)
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config_hash: &'a str,
    seed: u64,
    trials: usize,
    quantiles: &'static str,
    aggregate: &'static str,
    files: &'a [String],
    config: &'a ExperimentConfig,
}

/// Collects the files written by one command.
struct Artifacts<'a> {
    dir: PathBuf,
    command: &'static str,
    hash: String,
    config: &'a ExperimentConfig,
    files: Vec<String>,
}

impl<'a> Artifacts<'a> {
    fn new(command: &'static str, config: &'a ExperimentConfig) -> Result<Self> {
        let dir = config.output_dir();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Artifacts { dir, command, hash: config.hash(), config, files: Vec::new() })
    }

    fn banner(&self) -> String {
        format!("# finrank-krr {} config_hash={} seed={}\n", self.command, self.hash, self.config.seed)
    }

    fn write(&mut self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn csv(&mut self, name: &str, header: &str, rows: &[String]) -> Result<()> {
        let mut body = self.banner();
        body.push_str(header);
        body.push('\n');
        for r in rows {
            body.push_str(r);
            body.push('\n');
        }
        self.write(name, &body)
    }

    fn finish(mut self) -> Result<Vec<PathBuf>> {
        let name = format!("{}.meta.json", self.command);
        let files = self.files.clone();
        let mut config = self.config.clone();
        config.output_dir = None;
        let meta = Metadata {
            tool: "finrank-krr",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config_hash: &self.hash,
            seed: self.config.seed,
            trials: self.config.trials,
            quantiles: "type 7 (linear interpolation)",
            aggregate: "median",
            files: &files,
            config: &config,
        };
        let mut text = serde_json::to_string_pretty(&meta)?;
        text.push('\n');
        self.write(&name, &text)?;
        Ok(self.files.iter().map(|f| self.dir.join(f)).collect())
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x}"),
        None => "nan".into(),
    }
}

fn grid(domain: Domain, points: usize) -> Vec<f64> {
    let (a, b) = match domain {
        Domain::Circle => (0.0, 2.0 * std::f64::consts::PI),
        Domain::Interval => (-1.0, 1.0),
    };
    let last = match domain {
        Domain::Circle => points,
        Domain::Interval => points - 1,
    };
    (0..points).map(|i| a + (b - a) * i as f64 / last as f64).collect()
}

/// Fit one model at the first grid size and write `train.csv`
/// (`x,target,prediction`) and `train_samples.csv` (`x,y`).
pub fn cmd_train(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let setup = config.build()?;
    let n = config.n_grid[0];
    let lambda = config.lambda_rule.lambda(n, config.noise_var);
    let data = setup.target.sample_dataset(n, config.noise_var, config.seed)?;
    let fitted = regressor::fit(&setup.kernel, &data, lambda)?;
    let xs = grid(setup.kernel.domain(), TRAIN_GRID_POINTS);
    let preds = fitted.predict_many(&xs)?;
    let truth = setup.target.eval_many(&xs)?;
    let rows: Vec<String> = xs
        .iter()
        .zip(&truth)
        .zip(&preds)
        .map(|((x, t), p)| format!("{x},{t},{p}"))
        .collect();
    let samples: Vec<String> = data.inputs.iter().zip(&data.labels).map(|(x, y)| format!("{x},{y}")).collect();
    let mut out = Artifacts::new("train", config)?;
    out.csv("train.csv", "x,target,prediction", &rows)?;
    out.csv("train_samples.csv", "x,y", &samples)?;
    out.finish()
}

/// Exact test error over the sample-size grid: `sweep.csv` with quartiles
/// and `sweep_trials.csv` with every trial.
pub fn cmd_sweep(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let setup = config.build()?;
    let mut rows = Vec::new();
    let mut trial_rows = Vec::new();
    for &n in &config.n_grid {
        let lambda = config.lambda_rule.lambda(n, config.noise_var);
        let trials = run_trials(&setup.target, n, lambda, config.noise_var, config.trials, config.seed)?;
        let s = summarize(&trials);
        rows.push(format!("{n},{lambda},{},{},{},{}", s.trials, s.median, s.q25, s.q75));
        for t in &trials {
            let r = &t.report;
            trial_rows.push(format!(
                "{n},{lambda},{},{},{},{},{},{}",
                t.trial, t.seed, r.bias, r.variance, r.test_error, r.delta_norm
            ));
        }
    }
    let mut out = Artifacts::new("sweep", config)?;
    out.csv("sweep.csv", "n,lambda,trials,median,q25,q75", &rows)?;
    out.csv("sweep_trials.csv", "n,lambda,trial,seed,bias,variance,test_error,delta", &trial_rows)?;
    out.finish()
}

pub const BOUNDS_HEADER: &str =
    "N,lambda,ours_upper,ours_lower,bach_upper,rademacher,empirical_median,empirical_q25,empirical_q75";

fn bounds_row(config: &ExperimentConfig, setup: &Setup, n: usize, lambda: f64) -> Result<String> {
    let opts = BoundOptions {
        include_residue: config.include_residue,
        sharpen_variance: false,
        rademacher_c: config.rademacher_c,
    };
    let r = bounds::bounds_report(&setup.target, n, lambda, config.noise_var, opts)?;
    let bach = match r.bach {
        Some(b) => format!("{}", b.test_upper),
        None if lambda == 0.0 => "inf".into(),
        None => "nan".into(),
    };
    let trials = run_trials(&setup.target, n, lambda, config.noise_var, config.trials, config.seed)?;
    let s = summarize(&trials);
    Ok(format!(
        "{n},{lambda},{},{},{bach},{},{},{},{}",
        r.test_upper,
        r.test_lower,
        fmt_opt(r.rademacher_gap),
        s.median,
        s.q25,
        s.q75
    ))
}

/// Our bounds against the baseline over the sample-size grid
/// (`bounds_n.csv`) and over the ridge grid (`bounds_lambda.csv`).
pub fn cmd_bounds(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let setup = config.build()?;
    let by_n = config
        .n_grid
        .iter()
        .map(|&n| bounds_row(config, &setup, n, config.lambda_rule.lambda(n, config.noise_var)))
        .collect::<Result<Vec<_>>>()?;
    let n = config.lambda_panel_n();
    let by_lambda = config
        .lambda_grid
        .iter()
        .map(|&l| bounds_row(config, &setup, n, l))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Artifacts::new("bounds", config)?;
    out.csv("bounds_n.csv", BOUNDS_HEADER, &by_n)?;
    out.csv("bounds_lambda.csv", BOUNDS_HEADER, &by_lambda)?;
    out.finish()
}

/// Residue-free enclosure against the empirical median: `enclose.csv`.
pub fn cmd_enclose(config: &ExperimentConfig) -> Result<Vec<PathBuf>> {
    let setup = config.build()?;
    let mut rows = Vec::new();
    for &n in &config.n_grid {
        let lambda = config.lambda_rule.lambda(n, config.noise_var);
        let e = bounds::enclosure_bounds(&setup.target, n, lambda, config.noise_var)?;
        let s = summarize(&run_trials(&setup.target, n, lambda, config.noise_var, config.trials, config.seed)?);
        rows.push(format!(
            "{n},{lambda},{},{},{},{},{},{}",
            e.lower,
            e.upper,
            s.median,
            s.q25,
            s.q75,
            e.contains(s.median)
        ));
    }
    let mut out = Artifacts::new("enclose", config)?;
    out.csv("enclose.csv", "n,lambda,lower,upper,median,q25,q75,enclosed", &rows)?;
    out.finish()
}

/// Write a validation report as `validate.json` next to its metadata.
pub fn write_validation(config: &ExperimentConfig, report: &crate::validate::ValidationReport) -> Result<Vec<PathBuf>> {
    let mut out = Artifacts::new("validate", config)?;
    let mut text = String::new();
    let _ = writeln!(text, "{}", serde_json::to_string_pretty(report)?);
    out.write("validate.json", &text)?;
    out.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TNTK: &str = r#"{
        "kernel": {"family": "tntk", "rank": 7},
        "target": {"preset": "tntk_cos"},
        "noise_var": 0.05,
        "n_grid": [50],
        "lambda_rule": {"fixed_ref_n": 50}
    }"#;

    #[test]
    fn parses_defaults() {
        let c = ExperimentConfig::from_json(TNTK).unwrap();
        assert_eq!(c.trials, 10);
        assert_eq!(c.seed, 0);
        assert!(!c.include_residue);
        assert_eq!(c.lambda_rule.lambda(200, 0.05), 0.001);
        assert_eq!(c.lambda_grid.len(), 11);
        assert!((c.lambda_grid[10] - 0.1).abs() < 1e-15);
        c.build().unwrap();
    }

    #[test]
    fn lambda_rule_forms() {
        let r: LambdaRule = serde_json::from_str(r#""sigma2_over_n""#).unwrap();
        assert_eq!(r.lambda(100, 0.05), 0.0005);
        let r: LambdaRule = serde_json::from_str(r#"{"fixed": 0.25}"#).unwrap();
        assert_eq!(r.lambda(100, 0.05), 0.25);
    }

    #[test]
    fn target_descriptor_forms() {
        let k = Arc::new(SpectralKernel::legendre(5).unwrap());
        let d: TargetDescriptor = serde_json::from_str(r#"{"gamma": [1, 0, 0, 0, 0], "gamma_plus": 0.5}"#).unwrap();
        assert_eq!(d.build(k.clone()).unwrap().gamma_plus(), 0.5);
        let d: TargetDescriptor = serde_json::from_str(r#"{"legendre_raw": [0, 1]}"#).unwrap();
        assert!((d.build(k.clone()).unwrap().gamma()[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        let d: TargetDescriptor = serde_json::from_str(r#"{"preset": "legendre_x2"}"#).unwrap();
        assert!(d.build(k).unwrap().is_consistent());
    }

    #[test]
    fn rejects_overparameterised_grid() {
        let mut c = ExperimentConfig::from_json(TNTK).unwrap();
        c.n_grid = vec![7];
        assert!(matches!(c.build(), Err(Error::Config(_))));
        c.n_grid = vec![];
        assert!(matches!(c.build(), Err(Error::Config(_))));
        assert!(ExperimentConfig::from_json(&TNTK.replace("\"noise_var\"", "\"noise\"")).is_err());
    }

    #[test]
    fn hash_ignores_output_dir_only() {
        let mut a = ExperimentConfig::from_json(TNTK).unwrap();
        let h = a.hash();
        a.output_dir = Some("elsewhere".into());
        assert_eq!(a.hash(), h);
        a.seed = 1;
        assert_ne!(a.hash(), h);
        assert_eq!(h.len(), 64);
    }

    #[test]
    fn trials_are_order_stable() {
        let k = Arc::new(SpectralKernel::tntk(7).unwrap());
        let t = TargetSpec::tntk_cosine(k).unwrap();
        let a = run_trials(&t, 30, 1e-3, 0.05, 6, 11).unwrap();
        let b = run_trials(&t, 30, 1e-3, 0.05, 6, 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|r| r.seed).collect::<Vec<_>>(), (11..17).collect::<Vec<_>>());
    }

    #[test]
    fn interval_grid_hits_endpoints() {
        let g = grid(Domain::Interval, 5);
        assert_eq!(g, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let c = grid(Domain::Circle, 4);
        assert!(c.iter().all(|x| *x < 2.0 * std::f64::consts::PI));
    }
}
