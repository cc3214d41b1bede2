//! Command-line harness: run experiments, recompute metrics from logs,
//! compare two result directories, and generate trap-state start sets.
//!
//! Worker threads default to the core count; set `MAMPPI_WORKERS` to
//! override.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mamppi::bench::{self, ExperimentConfig, Preset};

#[derive(Parser)]
#[command(name = "mamppi-bench", version, about = "Seeded MPPI / MA-MPPI experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the trials of an experiment config.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Recompute per-trial metrics and the summary from a result directory.
    Metrics {
        log_dir: PathBuf,
        /// Write the recomputed summary here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the summaries of two result directories.
    Compare { dir_a: PathBuf, dir_b: PathBuf },
    /// Run standard MPPI from normal starts and save the trap entry states.
    GenTraps {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed_base: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
}

fn load(path: &Path, o: &Overrides) -> mamppi::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = o.seed_base {
        cfg.seed_base = s;
    }
    if let Some(n) = o.trials {
        cfg.trials = n;
    }
    if let Some(out) = &o.out {
        cfg.output = out.clone();
    }
    if let Some(p) = o.preset {
        cfg.preset = p;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> mamppi::Result<()> {
    match cli.command {
        Command::Run { config, overrides } => {
            let exp = load(&config, &overrides)?.resolve()?;
            eprintln!(
                "{}: {} trials x {} steps, preset {}, {} workers",
                exp.config.name,
                exp.config.trials,
                exp.config.steps,
                exp.config.preset.name(),
                bench::workers()
            );
            let report = bench::run_experiment(&exp)?;
            print!("{}", bench::summary_csv(&report.summary)?);
            eprintln!("wrote {}", report.dir.display());
        }
        Command::Metrics { log_dir, out } => {
            let (summary, _) = bench::recompute(&log_dir)?;
            let text = bench::summary_csv(&summary)?;
            match out {
                Some(path) => std::fs::write(path, &text)?,
                None => print!("{text}"),
            }
            if let Ok(stored) = std::fs::read_to_string(log_dir.join("summary.csv")) {
                let verdict = if stored == text { "matches" } else { "differs from" };
                eprintln!("recomputed summary {verdict} {}", log_dir.join("summary.csv").display());
            }
        }
        Command::Compare { dir_a, dir_b } => print!("{}", bench::compare(&dir_a, &dir_b)?),
        Command::GenTraps { config, overrides } => {
            let exp = load(&config, &overrides)?.resolve()?;
            let set = bench::generate_traps(&exp)?;
            println!(
                "{} trap states from {} trials written to {}",
                set.starts.len(),
                exp.config.trials,
                exp.config.output.join("trap_starts.toml").display()
            );
        }
    }
    Ok(())
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
