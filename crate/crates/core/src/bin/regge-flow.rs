use std::process::ExitCode;

use clap::Parser;
use regge_flow::cli::{init_threads, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = init_threads().and_then(|()| run(cli));
    match outcome {
        Ok(o) => {
            print!("{}", o.text);
            ExitCode::from(o.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
