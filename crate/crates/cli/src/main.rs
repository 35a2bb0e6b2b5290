use std::process::ExitCode;

use clap::Parser;
use synth_cli::{run, Cli};

fn main() -> ExitCode {
    if let Ok(n) = std::env::var("SYNTH_THREADS") {
        let threads = match n.parse::<usize>() {
            Ok(t) if t > 0 => t,
            _ => {
                eprintln!("error: SYNTH_THREADS must be a positive integer, got {n:?}");
                return ExitCode::from(2);
            }
        };
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .expect("global pool is configured once");
    }
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
