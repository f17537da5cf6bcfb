use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;

use clap::Parser;
use fedshap_cli::{run, Cli, Outcome};

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // usage errors are validation errors; exit 2 is reserved for partial results
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let code = match catch_unwind(AssertUnwindSafe(|| run(&cli))) {
        Ok(Ok(outcome)) => {
            if outcome == Outcome::Partial {
                eprintln!("fedshap: cutoff reached; partial results written");
            }
            outcome.exit_code()
        }
        Ok(Err(e)) => {
            eprintln!("fedshap: {e}");
            e.exit_code()
        }
        Err(_) => 3,
    };
    ExitCode::from(code as u8)
}
