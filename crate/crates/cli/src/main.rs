//! `cantorlab`: exact desk-scale computations on Cantor space.
//!
//! Exit codes: 0 when every check the command ran holds (or the command
//! only emits an object or trace), 1 when a mathematical check ran and
//! failed (a JSON reproduction bundle goes to stderr), 2 for usage and
//! configuration errors: missing or malformed files, out-of-range
//! parameters, or requests beyond the enumeration budget.

mod commands;
mod output;
mod source;

use std::process::ExitCode;

use clap::Parser;

#[derive(Parser)]
#[command(
    name = "cantorlab",
    version,
    about = "Exact computations on Cantor space: martingales, staged set families, \
             slopes of monotone functions, integral approximations, ergodic averages"
)]
struct Cli {
    #[command(flatten)]
    config: source::RunConfig,
    #[command(subcommand)]
    command: commands::Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = cli.config.validate() {
        eprintln!("error: {e:#}");
        return ExitCode::from(2);
    }
    match commands::dispatch(cli.command, &cli.config) {
        Ok(commands::Verdict::Clean) => ExitCode::SUCCESS,
        Ok(commands::Verdict::Violation) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
