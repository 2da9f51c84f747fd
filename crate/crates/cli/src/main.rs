//! `thermo-mdp`: run solves and audits described by a JSON scenario.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod error;
mod output;
mod scenario;

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::error::CliError;
use crate::scenario::SolverKind;

#[derive(Debug, Parser)]
#[command(
    name = "thermo-mdp",
    version,
    about = "Scenario-driven solves and audits for finite MDPs"
)]
#[command(allow_negative_numbers = true)]
struct Cli {
    /// Report format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Write the report into this directory instead of stdout.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the scenario's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and check a scenario, then echo it with defaults filled in.
    Validate { scenario: PathBuf },
    #[command(subcommand)]
    Solve(Solve),
    #[command(subcommand)]
    Thermo(Thermo),
    #[command(subcommand)]
    Info(Info),
    /// Find the inverse temperature that reproduces a known value.
    CalibrateBeta {
        scenario: PathBuf,
        #[arg(long)]
        state: usize,
        #[arg(long, allow_negative_numbers = true)]
        value: f64,
    },
    #[command(subcommand)]
    Sweep(Sweep),
}

#[derive(Debug, Subcommand)]
enum Solve {
    /// Classical finite-horizon Bellman recursion on the `mdp` block.
    Bellman { scenario: PathBuf },
    /// KL-control value, desirability and optimal control on the `passive` block.
    Kl { scenario: PathBuf },
    /// Constrained maximum-entropy program at performance level K.
    Maxent {
        scenario: PathBuf,
        #[arg(long = "K", allow_negative_numbers = true)]
        k: f64,
    },
    /// Information-regularized policy optimization on the `info` block.
    Info {
        scenario: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        beta: Option<f64>,
        #[arg(long)]
        include_final_term: bool,
        #[arg(long, value_enum)]
        solver: Option<SolverKind>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Reversal,
    DetailedBalance,
}

#[derive(Debug, Subcommand)]
enum Thermo {
    /// Entropy production, fluctuation theorem and work balance of the `thermo` block.
    Audit {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Reversal)]
        mode: Mode,
    },
}

#[derive(Debug, Subcommand)]
enum Info {
    /// Information exchange and generalized second law of the `coupled` block.
    Audit {
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Reversal)]
        mode: Mode,
    },
}

#[derive(Debug, Subcommand)]
enum Sweep {
    /// Solve the `info` block on a geometric grid of inverse temperatures.
    Beta {
        scenario: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        from: f64,
        #[arg(long, allow_negative_numbers = true)]
        to: f64,
        #[arg(long)]
        points: usize,
    },
}

fn load(path: &PathBuf, seed: Option<u64>) -> Result<scenario::Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Scenario(format!("{}: {e}", path.display())))?;
    let mut sc = scenario::parse(&text)?;
    if let Some(s) = seed {
        sc.seed = s;
    }
    Ok(sc)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    let report = match &cli.command {
        Command::Validate { scenario } => commands::validate(&load(scenario, seed)?)?,
        Command::Solve(Solve::Bellman { scenario }) => commands::bellman(&load(scenario, seed)?)?,
        Command::Solve(Solve::Kl { scenario }) => commands::kl(&load(scenario, seed)?)?,
        Command::Solve(Solve::Maxent { scenario, k }) => commands::maxent(&load(scenario, seed)?, *k)?,
        Command::Solve(Solve::Info {
            scenario,
            beta,
            include_final_term,
            solver,
        }) => commands::solve_info(&load(scenario, seed)?, *beta, *include_final_term, *solver)?,
        Command::Thermo(Thermo::Audit { scenario, mode }) => commands::thermo_audit(&load(scenario, seed)?, *mode)?,
        Command::Info(Info::Audit { scenario, mode }) => commands::info_audit(&load(scenario, seed)?, *mode)?,
        Command::CalibrateBeta { scenario, state, value } => {
            commands::calibrate(&load(scenario, seed)?, *state, *value)?
        }
        Command::Sweep(Sweep::Beta {
            scenario,
            from,
            to,
            points,
        }) => commands::sweep(&load(scenario, seed)?, *from, *to, *points)?,
    };
    let (bytes, ext) = match cli.format {
        Format::Json => (output::to_json(&report.json)?, "json"),
        Format::Csv => (report.table.to_csv()?, "csv"),
    };
    match &cli.out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            fs::write(dir.join(format!("{}.{ext}", report.name)), bytes)?;
        }
        None => std::io::stdout().lock().write_all(&bytes)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Usage(e.to_string().trim_end().to_string());
            eprintln!("{}", err.to_json());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
