use std::process::ExitCode;

use clap::Parser;
use rankflow_cli::{init_threads, run, Cli, CliError};
use serde_json::json;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let v = json!({
                "error": "usage",
                "exit_code": 2,
                "message": e.to_string().trim_end(),
                "pointer": null,
            });
            eprintln!("{v}");
            return ExitCode::from(2);
        }
    };
    let result = init_threads().and_then(|()| run(cli, &mut std::io::stdout().lock()));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

fn report(e: &CliError) -> ExitCode {
    eprintln!("{}", e.to_json());
    ExitCode::from(e.exit_code() as u8)
}
