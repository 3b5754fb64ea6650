//! Command-line front end for the link-level simulator.
//!
//! Three subcommands map onto the three experiment modes of the harness:
//!
//! * `run-pupe`   — full uplink simulation, per-user probability of error.
//! * `run-ser`    — known-channel per-slot detector benchmark (message
//!   passing vs. the MMSE baseline on paired realizations).
//! * `run-factor` — factorization/compensation stage benchmark.
//!
//! All subcommands share `--config`, `--seed`, `--sweep`, `--trials`,
//! `--out`, and `--workers`. Results land in a CSV at `--out`; the process
//! exits 0 on success and nonzero on configuration or I/O errors.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use odma_core::config::SystemConfig;
use odma_core::harness::{run_to_csv, ExperimentMode, ExperimentSpec, SweepAxis};
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Parser)]
#[command(
    name = "odma",
    version,
    about = "Link-level simulator for grant-free many-user uplink over MIMO"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the full uplink and receiver; report per-user error rates.
    RunPupe(CommonArgs),
    /// Benchmark the per-slot detectors on a known channel; report SER.
    RunSer(SerArgs),
    /// Benchmark the factorization/compensation stage in isolation.
    RunFactor(FactorArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Path to the JSON system configuration.
    #[arg(long)]
    config: PathBuf,

    /// Master seed; defaults to the config's `seed` field.
    #[arg(long)]
    seed: Option<u64>,

    /// Sweep as `axis=v1,v2,...`; axes: ebn0, antenna_count, active_users,
    /// detector_snr (run-ser only).
    #[arg(long)]
    sweep: String,

    /// Monte-Carlo trials per sweep value.
    #[arg(long, default_value_t = 100)]
    trials: usize,

    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,

    /// Worker threads; 0 uses one per hardware thread.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct SerArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Fixed per-slot SNR in dB (ignored when sweeping detector_snr).
    #[arg(long, default_value_t = 0.0)]
    snr: f64,
}

#[derive(Args)]
struct FactorArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Disable observation noise.
    #[arg(long)]
    noiseless: bool,

    /// Force pairwise-distinct pilots across each scene's users.
    #[arg(long)]
    distinct_pilots: bool,
}

fn parse_sweep(text: &str) -> Result<(SweepAxis, Vec<f64>)> {
    let (axis_text, values_text) = text
        .split_once('=')
        .context("--sweep must look like axis=v1,v2,...")?;
    let axis = SweepAxis::from_str(axis_text.trim())?;
    let values = values_text
        .split(',')
        .filter(|v| !v.trim().is_empty())
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .with_context(|| format!("bad sweep value '{}'", v.trim()))
        })
        .collect::<Result<Vec<f64>>>()?;
    if values.is_empty() {
        bail!("--sweep needs at least one value");
    }
    Ok((axis, values))
}

fn build_spec(common: &CommonArgs, mode: ExperimentMode) -> Result<ExperimentSpec> {
    let base_config = SystemConfig::from_json_file(&common.config)
        .with_context(|| format!("loading config {}", common.config.display()))?;
    let (sweep_axis, sweep_values) = parse_sweep(&common.sweep)?;
    let master_seed = common.seed.unwrap_or(base_config.algo.seed);
    Ok(ExperimentSpec {
        mode,
        sweep_axis,
        sweep_values,
        trials_per_point: common.trials,
        base_config,
        master_seed,
        workers: common.workers,
        detector_snr_db: 0.0,
        noiseless: false,
        distinct_pilots: false,
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let (spec, out) = match &cli.command {
        Command::RunPupe(args) => {
            (build_spec(args, ExperimentMode::EndToEndPupe)?, args.out.clone())
        }
        Command::RunSer(args) => {
            let mut spec = build_spec(&args.common, ExperimentMode::DetectorSer)?;
            spec.detector_snr_db = args.snr;
            (spec, args.common.out.clone())
        }
        Command::RunFactor(args) => {
            let mut spec = build_spec(&args.common, ExperimentMode::FactorBench)?;
            spec.noiseless = args.noiseless;
            spec.distinct_pilots = args.distinct_pilots;
            (spec, args.common.out.clone())
        }
    };
    run_to_csv(&spec, &out).with_context(|| format!("writing {}", out.display()))?;
    Ok(())
}
