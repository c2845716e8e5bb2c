use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use etlpv::cli::{self, RunOptions, RunReport, StageStatus};

/// Data-driven event-triggered control of LPV systems.
#[derive(Parser)]
#[command(name = "etlpv", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Stabilizing controller and trigger from an excitation experiment.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Integral-action tracking controller and trigger.
    Track {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run a bundled example (1, 2a, 2b, 3a, 3b) with its acceptance checks.
    Reproduce {
        #[arg(long)]
        example: String,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Output directory; falls back to $ETLPV_OUT_DIR, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    solver_tol: Option<f64>,
}

impl Common {
    fn options(self) -> RunOptions {
        RunOptions {
            out_dir: Some(cli::resolve_out_dir(self.out)),
            seed: self.seed,
            solver_tol: self.solver_tol,
            reproduce: false,
        }
    }
}

fn print_report(r: &RunReport) {
    println!("{} ({}, seed {})", r.name, r.command, r.seed);
    for s in &r.stages {
        let tag = match s.status {
            StageStatus::Passed => "ok  ",
            StageStatus::Failed => "FAIL",
            StageStatus::Skipped => "skip",
        };
        println!("  [{tag}] {:<14} {}", s.name, s.detail);
    }
    for c in &r.checks {
        println!("  {} {:<30} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for t in &r.traces {
        println!("  trace: {t}");
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let result = match args.command {
        Command::Synthesize { config, common } => {
            cli::load_config(&config).and_then(|c| cli::cmd_synthesize(&c, &common.options()))
        }
        Command::Track { config, common } => {
            cli::load_config(&config).and_then(|c| cli::cmd_track(&c, &common.options()))
        }
        Command::Reproduce { example, common } => cli::cmd_reproduce(&example, &common.options()),
    };
    match &result {
        Ok(r) => print_report(r),
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(cli::exit_code(&result) as u8)
}
