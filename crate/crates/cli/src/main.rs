use std::process::ExitCode;

use clap::Parser;
use purify_cli::args::Args;
use purify_cli::pipeline::{run_experiment, ERROR_EXIT_CODE};

fn main() -> ExitCode {
    let manifest = match Args::parse().into_manifest() {
        Ok(m) => m,
        Err(e) => {
            eprintln!("purify: manifest stage failed: {e}");
            return ExitCode::from(ERROR_EXIT_CODE as u8);
        }
    };
    match run_experiment(&manifest) {
        Ok(summary) => {
            for run in &summary.runs {
                match run.lyapunov_lambda {
                    Some(lambda) => println!("k={} lambda={lambda:.6}", run.target),
                    None => println!(
                        "k={} converged={} iterations={} final_sigma_bar={:e}",
                        run.target, run.converged, run.iterations, run.final_sigma_bar
                    ),
                }
            }
            println!("artifacts in {}", manifest.out.display());
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("purify: {e}");
            ExitCode::from(ERROR_EXIT_CODE as u8)
        }
    }
}
