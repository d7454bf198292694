use std::io::Write;
use std::process::ExitCode;

use aif_cli::{run, write_outcome, Args};
use clap::Parser;

fn main() -> ExitCode {
    let args = Args::parse();
    let result = run(&args).and_then(|outcome| {
        write_outcome(&outcome, &args.out)?;
        Ok(outcome)
    });
    match result {
        Ok(outcome) => {
            let text = serde_json::to_string_pretty(&outcome.report).expect("report serializes");
            // A closed pipe (e.g. `| head`) is not an error.
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
