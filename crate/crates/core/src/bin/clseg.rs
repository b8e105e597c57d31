use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use clseg::continual::OrderMode;
use clseg::expcli::{
    cmd_generate, cmd_report, cmd_run, parse_regimes, parse_seeds, CellStatus, ExperimentConfig,
    RunOptions, DEFAULT_OUTPUT,
};
use clseg::{Error, Result};

/// Continual-learning segmentation experiments on synthetic multi-site data.
#[derive(Parser)]
#[command(name = "clseg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config file (flat `key = value`); built-in defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding `experiment.output`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Built-in cohort to start from when no config is given: `default` or `desk`.
    #[arg(long, conflicts_with = "config")]
    cohort: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic dataset archive.
    Generate {
        #[command(flatten)]
        common: Common,
        /// Print the resolved configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Train and evaluate every (regime × seed) cell.
    Run {
        #[command(flatten)]
        common: Common,
        /// Seeds, as `0..8` (inclusive) or `0,3,5`.
        #[arg(long)]
        seeds: Option<String>,
        /// Comma-separated regimes: single-domain, multi-domain, fine-tune, replay.
        #[arg(long)]
        regimes: Option<String>,
        /// Domain order: `shuffled` or `fixed-descending`.
        #[arg(long)]
        order: Option<String>,
        /// Stop every cell after this many newly trained stages; rerun to resume.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Aggregate completed cells into plot-data tables.
    Report {
        /// Output directory holding `cells/`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&common.config, &common.cohort) {
        (Some(path), _) => ExperimentConfig::load(path)?,
        (None, Some(name)) => ExperimentConfig::for_cohort(name)?,
        (None, None) => ExperimentConfig::default(),
    };
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            common,
            print_config,
        } => {
            let cfg = load(&common)?;
            if print_config {
                print!("{}", cfg.to_text());
                return Ok(());
            }
            let s = cmd_generate(&cfg)?;
            println!(
                "archive {}: {} written, {} reused",
                cfg.archive_root().display(),
                s.written.len(),
                s.reused.len()
            );
        }
        Command::Run {
            common,
            seeds,
            regimes,
            order,
            stop_after,
        } => {
            let mut cfg = load(&common)?;
            if let Some(s) = seeds {
                cfg.seeds = parse_seeds(&s)?;
            }
            if let Some(r) = regimes {
                cfg.regimes = parse_regimes(&r)?;
            }
            if let Some(o) = order {
                cfg.order = o
                    .parse::<OrderMode>()
                    .map_err(|e| Error::Usage(e.to_string()))?;
            }
            let mut opts = RunOptions::from_env()?;
            opts.stop_after = stop_after;
            for c in cmd_run(&cfg, &opts)? {
                let status = match c.status {
                    CellStatus::Completed => "completed",
                    CellStatus::Skipped => "already complete",
                    CellStatus::Interrupted => "interrupted",
                };
                println!(
                    "{} seed {}: {status} ({} trained, {} restored)",
                    c.regime, c.seed, c.trained_stages, c.restored_stages
                );
            }
        }
        Command::Report { out } => {
            let out = out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT));
            let s = cmd_report(&out)?;
            println!(
                "report over {} cells (config {})",
                s.cells,
                &s.config_hash[..16]
            );
            for f in &s.files {
                println!("  {}", f.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("clseg: {e}");
            ExitCode::from(e.kind().exit_code())
        }
    }
}
