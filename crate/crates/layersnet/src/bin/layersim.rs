use std::process::ExitCode;

use clap::Parser;
use layersnet::cli::{run, Cli};
use layersnet::error::EXIT_USAGE;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("layersim: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
