use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use finrank_krr::experiment::{self, ExperimentConfig, Overrides};
use finrank_krr::validate;

#[derive(Parser)]
#[command(name = "finrank-krr", version, about = "Finite-rank kernel ridge regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit one model and write the prediction grid.
    Train(Args),
    /// Exact test error over the sample-size grid.
    Sweep(Args),
    /// Upper bounds against the baseline over N and λ.
    Bounds(Args),
    /// Residue-free upper and lower bounds against the empirical median.
    Enclose(Args),
    /// Run the self-check suite; exits nonzero if any check fails.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(clap::Args)]
struct Args {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(clap::Args)]
struct ValidateArgs {
    /// Optional; only the output directory and seed are read from it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(clap::Args)]
struct Common {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_enum)]
    residue: Option<Switch>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
            include_residue: self.residue.map(|s| matches!(s, Switch::On)),
            output_dir: self.out.clone(),
        }
    }
}

const VALIDATE_CONFIG: &str = r#"{
    "kernel": {"family": "tntk", "rank": 7},
    "target": {"preset": "tntk_cos"},
    "noise_var": 0.05,
    "n_grid": [50],
    "lambda_rule": "sigma2_over_n",
    "include_residue": true
}"#;

fn load(path: &Path, common: &Common) -> finrank_krr::Result<ExperimentConfig> {
    let mut c = ExperimentConfig::load(path)?;
    c.apply(&common.overrides());
    Ok(c)
}

fn run(cli: Cli) -> finrank_krr::Result<bool> {
    let files = match cli.command {
        Command::Train(a) => experiment::cmd_train(&load(&a.config, &a.common)?)?,
        Command::Sweep(a) => experiment::cmd_sweep(&load(&a.config, &a.common)?)?,
        Command::Bounds(a) => experiment::cmd_bounds(&load(&a.config, &a.common)?)?,
        Command::Enclose(a) => experiment::cmd_enclose(&load(&a.config, &a.common)?)?,
        Command::Validate(a) => {
            let mut c = match &a.config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::from_json(VALIDATE_CONFIG)?,
            };
            c.apply(&a.common.overrides());
            let report = validate::validate_default(c.seed)?;
            for check in &report.checks {
                let status = if check.passed { "ok  " } else { "FAIL" };
                println!("{status} {} (observed {:.3e}, tolerance {:.1e})", check.name, check.observed, check.tolerance);
            }
            for f in experiment::write_validation(&c, &report)? {
                log::info!("wrote {}", f.display());
            }
            if !report.passed {
                for check in report.failures() {
                    eprintln!("validation failed: {}", check.name);
                }
            }
            return Ok(report.passed);
        }
    };
    for f in files {
        println!("{}", f.display());
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
