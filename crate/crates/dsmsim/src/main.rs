//! Command line front end; all logic lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dsmsim::pipeline::{
    load_generate_spec, load_run_config, run_compare, run_generate, run_simulate, run_sweep,
    CliOverrides,
};

#[derive(Parser)]
#[command(
    name = "dsmsim",
    version,
    about = "Simulator and metrics engine for game-theoretic demand-side management billing"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured mechanisms day by day and write result tables.
    Simulate(CommonArgs),
    /// Run the full comparison set (DP, HP, Baseline, PeakOff) plus the
    /// efficiency/fairness scatter.
    Compare(CommonArgs),
    /// Re-solve the games with scaled appliance caps and track fairness.
    Sweep(CommonArgs),
    /// Generate synthetic scenario, history, and calendar files.
    Generate(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    config: PathBuf,
    /// Output directory; overrides the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides config and generator seeds.
    #[arg(long)]
    seed: Option<u64>,
    /// Write one trace file per day and game mechanism.
    #[arg(long)]
    trace: bool,
}

impl CommonArgs {
    fn overrides(&self) -> CliOverrides {
        CliOverrides { out: self.out.clone(), seed: self.seed, trace: self.trace }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> dsmsim::Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = load_run_config(&args.config, &args.overrides())?;
            let out = run_simulate(&cfg)?;
            print_summary(&out.summary);
            print_written(&out.written);
        }
        Command::Compare(args) => {
            let cfg = load_run_config(&args.config, &args.overrides())?;
            let out = run_compare(&cfg)?;
            print_summary(&out.summary);
            print_written(&out.written);
        }
        Command::Sweep(args) => {
            let cfg = load_run_config(&args.config, &args.overrides())?;
            let out = run_sweep(&cfg)?;
            for e in &out.table.entries {
                println!("factor {:>5}  {:<8}  F = {:.6}  PoA = {:.6}", e.factor, e.mechanism.to_string(), e.fairness_index, e.poa);
            }
            for (factor, reason) in &out.table.skipped {
                println!("factor {factor:>5}  skipped: {reason}");
            }
            print_written(&out.written);
        }
        Command::Generate(args) => {
            let (spec, out_dir) = load_generate_spec(&args.config, &args.overrides())?;
            let out = run_generate(&spec, &out_dir)?;
            println!("generated {} days", out.day_ids.len());
            print_written(&out.written);
        }
    }
    Ok(())
}

fn print_summary(summary: &[dsmsim::metrics::MechanismSummary]) {
    println!(
        "{:<10} {:>4}  {:>14}  {:>12}  {:>10}  {:>10}",
        "mechanism", "days", "mean(PoA-1)%", "std(PoA-1)%", "mean(F)", "std(F)"
    );
    for s in summary {
        println!(
            "{:<10} {:>4}  {:>14.4}  {:>12.4}  {:>10.4}  {:>10.4}",
            s.mechanism.to_string(),
            s.days,
            100.0 * s.mean_poa_minus_1,
            100.0 * s.std_poa_minus_1,
            s.mean_fairness,
            s.std_fairness,
        );
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}
