use std::process::ExitCode;

use clap::Parser;
use nftrack::cli::{main_with, Cli, EXIT_CONFIG};

fn main() -> ExitCode {
    match Cli::try_parse() {
        Ok(cli) => main_with(cli),
        Err(e) => {
            let _ = e.print();
            // Help and version requests are not errors.
            if e.use_stderr() {
                ExitCode::from(EXIT_CONFIG)
            } else {
                ExitCode::SUCCESS
            }
        }
    }
}
