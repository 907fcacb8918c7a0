use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use fpp_lab::harness::{self, Experiment, HarnessError, RunOptions};

#[derive(Parser)]
#[command(
    name = "fpp-lab",
    version,
    about = "First passage percolation experiments on Z^2"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, env = "FPP_LAB_WORKERS")]
    workers: Option<usize>,
    /// Overrides `output_dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue the run recorded in the output directory.
    #[arg(long)]
    resume: bool,
    #[arg(long)]
    dump_geodesics: bool,
}

#[derive(Subcommand)]
enum Command {
    SigmaLadder(RunArgs),
    WanderingProfile(RunArgs),
    TransverseIncrement(RunArgs),
    IncrementVariance(RunArgs),
    LongRangeCorrelation(RunArgs),
    NonrandomFluctuation(RunArgs),
    ConditionalDecomposition(RunArgs),
    ExponentReport(RunArgs),
    /// Recompute exponent fits from DIR/summary.json into DIR/fit.json.
    Fit {
        /// Output directory of a finished run.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Read the output directory from this config instead.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Check a config without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(args: &RunArgs, experiment: Experiment) -> Result<serde_json::Value, HarnessError> {
    let cfg = harness::validate(&harness::load_config(&args.config)?, Some(experiment))?;
    let opts = RunOptions {
        workers: args.workers.unwrap_or_else(harness::default_workers),
        resume: args.resume,
        output_dir: args.out.clone(),
        dump_geodesics: args.dump_geodesics.then_some(true),
        halt_after: None,
    };
    let out = harness::run(&cfg, &opts)?;
    Ok(json!({
        "status": "ok",
        "experiment": experiment.name(),
        "output_dir": out.output_dir,
        "config_hash": cfg.config_hash,
        "succeeded": out.manifest.count(fpp_lab::formats::UnitStatus::Succeeded),
        "failed": out.manifest.count(fpp_lab::formats::UnitStatus::Failed),
    }))
}

fn dispatch(cli: Cli) -> Result<serde_json::Value, HarnessError> {
    use Command::*;
    let (args, experiment) = match &cli.command {
        SigmaLadder(a) => (a, Experiment::SigmaLadder),
        WanderingProfile(a) => (a, Experiment::WanderingProfile),
        TransverseIncrement(a) => (a, Experiment::TransverseIncrement),
        IncrementVariance(a) => (a, Experiment::IncrementVariance),
        LongRangeCorrelation(a) => (a, Experiment::LongRangeCorrelation),
        NonrandomFluctuation(a) => (a, Experiment::NonrandomFluctuation),
        ConditionalDecomposition(a) => (a, Experiment::ConditionalDecomposition),
        ExponentReport(a) => (a, Experiment::ExponentReport),
        Fit { out, config } => {
            let dir = match (out, config) {
                (Some(d), _) => d.clone(),
                (None, Some(c)) => harness::load_config(c)?.output_dir,
                (None, None) => {
                    return Err(HarnessError::ConfigInvalid {
                        field: "--out".into(),
                        reason: "give --out or --config".into(),
                    })
                }
            };
            let report = harness::fit_outputs(&dir)?;
            return Ok(
                json!({ "status": "ok", "fit": dir.join(harness::FIT_FILE), "fits": report.fits.len() }),
            );
        }
        Validate { config } => {
            let cfg = harness::validate(&harness::load_config(config)?, None)?;
            return Ok(
                json!({ "status": "ok", "experiment": cfg.experiment.name(), "config_hash": cfg.config_hash }),
            );
        }
    };
    run(args, experiment)
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(v) => {
            println!("{v}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            match e {
                HarnessError::ConfigInvalid { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
