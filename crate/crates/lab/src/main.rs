use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use distill_lab::error::{LabError, Result};
use distill_lab::pipeline::{cmd_distill, cmd_matrix, cmd_sft, thread_count};
use distill_lab::report::cmd_report;
use distill_lab::ExperimentConfig;
use distill_lab_core::distill::Method;

/// Teacher-student distillation experiments on synthetic tasks.
#[derive(Parser)]
#[command(name = "distill-lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the teacher checkpoint store and the student reference.
    Sft(StageArgs),
    /// Run one distillation method.
    Distill {
        #[command(flatten)]
        stage: StageArgs,
        #[arg(long, value_parser = parse_method)]
        method: Method,
    },
    /// Run every method for every seed, training supervised stages as needed.
    Matrix {
        #[command(flatten)]
        stage: StageArgs,
        /// Comma-separated method names; defaults to the config's list.
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        method: Option<Vec<Method>>,
    },
    /// Aggregate finished runs under an output root.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct StageArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated seeds; defaults to the config's list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Replace completed runs.
    #[arg(long)]
    force: bool,
    /// Output root; defaults to the config's `output_root`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl StageArgs {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf, Vec<u64>)> {
        let cfg = ExperimentConfig::load(&self.config)?;
        let root = self.out.clone().unwrap_or_else(|| cfg.output_root.clone());
        let seeds = self.seeds.clone().unwrap_or_else(|| cfg.seeds.clone());
        Ok((cfg, root, seeds))
    }
}

fn parse_method(name: &str) -> std::result::Result<Method, String> {
    Method::parse(name).ok_or_else(|| {
        let known: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method {name:?}; expected one of {}", known.join(", "))
    })
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sft(stage) => {
            let (cfg, root, seeds) = stage.resolve()?;
            for dir in cmd_sft(&cfg, &root, &seeds, stage.force)? {
                println!("{}", dir.display());
            }
        }
        Command::Distill { stage, method } => {
            let (cfg, root, seeds) = stage.resolve()?;
            for dir in cmd_distill(&cfg, &root, method, &seeds, stage.force)? {
                println!("{}", dir.display());
            }
        }
        Command::Matrix { stage, method } => {
            let (cfg, root, seeds) = stage.resolve()?;
            let methods = method.unwrap_or_else(|| cfg.methods.clone());
            let cells = cmd_matrix(&cfg, &root, &methods, &seeds, stage.force, thread_count()?)?;
            let mut first_error = None;
            for cell in cells {
                match cell.result {
                    Ok(dir) if cell.skipped => println!("{} (already complete)", dir.display()),
                    Ok(dir) => println!("{}", dir.display()),
                    Err(e) => {
                        eprintln!("{} seed {}: {e}", cell.method.name(), cell.seed);
                        first_error.get_or_insert(e);
                    }
                }
            }
            if let Some(e) = first_error {
                return Err(e);
            }
        }
        Command::Report { out } => {
            let outcome = cmd_report(&out)?;
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            for v in outcome.ordering_violations() {
                eprintln!(
                    "warning: {}: median {} {:?} < median {} {:?}; logs: {}",
                    v.task, v.better, v.better_median, v.baseline, v.baseline_median, v.logs
                );
            }
            println!("{} summary rows written to {}", outcome.summary.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &LabError) -> u8 {
    u8::try_from(e.exit_code()).unwrap_or(1)
}
