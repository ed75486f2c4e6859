//! `bankbeta` command-line entry point.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! error.

use std::path::PathBuf;
use std::process::ExitCode;

use bankbeta::pipeline::{run, ConfigMap, PipelineConfig, Stage, OUT_DIR_ENV};
use bankbeta::simulation::{write_fixture, FixtureConfig};
use bankbeta::{Error, ErrorClass};
use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "bankbeta",
    version,
    about = "Constant and time-varying bank interest-rate betas"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse inputs and write the decile panel.
    Ingest(RunArgs),
    /// Constant-coefficient betas and CUSUM stability tests.
    Betas(RunArgs),
    /// Time-varying betas, conditional volatility, ADF tests and figures.
    Tvp(RunArgs),
    /// Granger causality tests and volatility summaries.
    Tests(RunArgs),
    /// Pricing regression of sector returns on beta-volatility changes.
    Pricing(RunArgs),
    /// Every stage.
    All(RunArgs),
    /// Write a synthetic input fixture and its config file.
    Simulate(SimulateArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Plain-text `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (falls back to the BANKBETA_OUT environment variable).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    call_report: Option<String>,
    #[arg(long, value_name = "PATH")]
    rates: Option<String>,
    #[arg(long, value_name = "PATH")]
    market: Option<String>,
    /// `equal` or `asset`.
    #[arg(long)]
    weighting: Option<String>,
    /// `last` or `average`.
    #[arg(long)]
    rate_sampling: Option<String>,
    #[arg(long)]
    burn_in: Option<String>,
    #[arg(long)]
    granger_lags: Option<String>,
    #[arg(long)]
    starts: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    ratio_scale: Option<String>,
    #[arg(long)]
    market_cap_base: Option<String>,
    /// Also write `.full.csv` sidecars at full precision.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    full_precision: Option<String>,
    /// Beta figure y-limits as `low,high`.
    #[arg(long, allow_hyphen_values = true)]
    beta_ylim: Option<String>,
    #[arg(long)]
    adf_max_lags: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> [(&'static str, &Option<String>); 14] {
        [
            ("call-report", &self.call_report),
            ("rates", &self.rates),
            ("market", &self.market),
            ("weighting", &self.weighting),
            ("rate-sampling", &self.rate_sampling),
            ("burn-in", &self.burn_in),
            ("granger-lags", &self.granger_lags),
            ("starts", &self.starts),
            ("seed", &self.seed),
            ("ratio-scale", &self.ratio_scale),
            ("market-cap-base", &self.market_cap_base),
            ("full-precision", &self.full_precision),
            ("beta-ylim", &self.beta_ylim),
            ("adf-max-lags", &self.adf_max_lags),
        ]
    }

    fn config(&self) -> Result<PipelineConfig, Error> {
        let mut map = match &self.config {
            Some(path) => ConfigMap::from_file(path)?,
            None => ConfigMap::default(),
        };
        for (key, value) in self.overrides() {
            if let Some(v) = value {
                map.set(key, v)?;
            }
        }
        PipelineConfig::from_map(&map)
    }
}

fn out_dir(flag: &Option<PathBuf>) -> Result<PathBuf, Error> {
    if let Some(p) = flag {
        return Ok(p.clone());
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => Ok(PathBuf::from(v)),
        _ => Err(Error::Config(format!("--out is required (or set {OUT_DIR_ENV})"))),
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    n_banks: usize,
    #[arg(long, default_value_t = 72)]
    n_quarters: usize,
}

fn exit_code(e: &Error) -> ExitCode {
    ExitCode::from(match e.class() {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numerical => 4,
    })
}

fn run_stage(stage: Stage, args: &RunArgs) -> Result<(), Error> {
    let cfg = args.config()?;
    let out = out_dir(&args.out)?;
    match run(&cfg, stage, &out) {
        Ok(m) => {
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}: wrote {} files to {}", stage.name(), m.outputs.len(), out.display());
            Ok(())
        }
        Err(failure) => {
            if let Some(m) = &failure.manifest {
                for w in &m.warnings {
                    eprintln!("warning: {w}");
                }
                if let Some(s) = &m.failed_stage {
                    eprintln!("stage `{s}` failed; partial outputs kept in {}", out.display());
                }
            }
            Err(failure.error)
        }
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), Error> {
    let out = out_dir(&args.out)?;
    let cfg = FixtureConfig {
        seed: args.seed,
        n_banks: args.n_banks,
        n_quarters: args.n_quarters,
        ..FixtureConfig::default()
    };
    let paths = write_fixture(&out, &cfg)?;
    println!("fixture written; run with --config {}", paths.config.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Ingest(a) => run_stage(Stage::Ingest, a),
        Command::Betas(a) => run_stage(Stage::Betas, a),
        Command::Tvp(a) => run_stage(Stage::Tvp, a),
        Command::Tests(a) => run_stage(Stage::Tests, a),
        Command::Pricing(a) => run_stage(Stage::Pricing, a),
        Command::All(a) => run_stage(Stage::All, a),
        Command::Simulate(a) => simulate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
