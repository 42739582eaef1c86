use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use narrowgap_cli::presets::{all_items, items};
use narrowgap_cli::{execute, parse_config, CheckName, RunItem, RunOptions};

#[derive(Parser)]
#[command(name = "narrowgap", version, about = "Leading-term asymptotics in narrow gaps: checks and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML run configuration; without it the reference configurations are used.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for sampled ellipticity directions.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Multiplier on the number of cells per axis.
    #[arg(long, global = true, default_value_t = 1.0)]
    grid_scale: f64,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Check the profile and coefficient hypotheses; no solves.
    Validate,
    /// Sample the corrected leading term and its gradient.
    Ansatz,
    /// Solve one boundary value problem at the first ε.
    Solve,
    /// Corrected vs uncorrected gradient remainder rates.
    Thm11,
    /// Gradient blow-up rates for equal, constant and vanishing trace gaps.
    Remark13,
    /// Exponential decay away from the lateral data.
    Decay,
    /// Remainder under the sharper gauge.
    Cor41,
    /// Everything, in order.
    All,
}

impl Command {
    fn check(self) -> Option<CheckName> {
        Some(match self {
            Command::Validate => CheckName::Validate,
            Command::Ansatz => CheckName::Ansatz,
            Command::Solve => CheckName::Solve,
            Command::Thm11 => CheckName::Thm11,
            Command::Remark13 => CheckName::Remark13,
            Command::Decay => CheckName::Decay,
            Command::Cor41 => CheckName::Cor41,
            Command::All => return None,
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if !(cli.grid_scale > 0.0) {
        eprintln!("error: --grid-scale must be positive");
        return ExitCode::from(2);
    }
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    let config = match &cli.config {
        Some(p) => match parse_config(p) {
            Ok(c) => Some(c),
            Err(e) => {
                eprint!("{e}");
                return ExitCode::from(2);
            }
        },
        None => None,
    };
    let run: Vec<RunItem> = match (&config, cli.command.check()) {
        (Some(c), Some(check)) => vec![RunItem::new(check, c.clone())],
        (Some(c), None) => c.experiment.checks.iter().map(|&k| RunItem::new(k, c.clone())).collect(),
        (None, Some(check)) => items(check),
        (None, None) => all_items(),
    };
    let out = cli
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.output.clone()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("narrowgap-out"));
    let opts = RunOptions {
        out,
        seed: cli.seed,
        grid_scale: cli.grid_scale,
    };
    match execute(&run, &opts) {
        Ok(report) => {
            for i in &report.items {
                println!("{:<28} {}", i.label, i.verdict);
            }
            println!("report: {}", opts.out.join("report.txt").display());
            if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
