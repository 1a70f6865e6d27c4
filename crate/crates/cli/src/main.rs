use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pmc_cli::run::{cmd_norms, cmd_solve, cmd_sweep, exit_code, print_json, RunOptions};
use pmc_cli::verify::{format_table, run_suite, SUITES};

#[derive(Parser)]
#[command(name = "pmc", version, about = "Dirichlet prescribed-mean-curvature solver")]
struct Cli {
    /// Suppress per-iteration logs.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one problem described by a config file.
    Solve { config: PathBuf },
    /// Continuation sweep over `sweep.s_values`.
    Sweep { config: PathBuf },
    /// Run a property suite: geometry, norms, linear, trace, fixedpoint or all.
    Verify {
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Base grid size (nodes per axis).
        #[arg(long, default_value_t = 17)]
        grid: usize,
    },
    /// Discrete norms of a field CSV.
    Norms {
        field: PathBuf,
        #[arg(long)]
        p: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn fail(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let opts = RunOptions { quiet: cli.quiet, output_dir: None };
    match cli.command {
        Command::Solve { config } => match cmd_solve(&config, &opts) {
            Ok(out) => {
                if let Some(e) = out.max_error {
                    eprintln!("max error against the cap: {e:.3e}");
                }
                eprintln!("wrote {}", out.out_dir.display());
                ExitCode::from(exit_code(out.status) as u8)
            }
            Err(e) => fail(e),
        },
        Command::Sweep { config } => match cmd_sweep(&config, &opts) {
            Ok(out) => {
                match out.max_converged_s {
                    Some(s) => eprintln!("largest converged s: {s}"),
                    None => eprintln!("no run converged"),
                }
                eprintln!("wrote {}", out.out_dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e),
        },
        Command::Verify { suite, seed, grid } => {
            if grid < 5 {
                return fail("--grid must be at least 5");
            }
            let Some(checks) = run_suite(&suite, grid, seed) else {
                return fail(format!("unknown suite `{suite}`; expected one of {}, all", SUITES.join(", ")));
            };
            print!("{}", format_table(&checks));
            if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Command::Norms { field, p, n, seed } => match cmd_norms(&field, p, n, seed) {
            Ok(rep) => match print_json(&rep) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e),
            },
            Err(e) => fail(e),
        },
    }
}
