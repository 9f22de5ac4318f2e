use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qsdlab::{list_experiments, run, Overrides};

#[derive(Parser)]
#[command(name = "qsdlab", version, about = "Quantum state diffusion experiments")]
struct Cli {
    /// Worker threads for trajectory ensembles (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config.
    Run {
        config: PathBuf,
        /// Directory for series.csv, report.json and field files.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Replaces integration.base_seed from the config.
        #[arg(long)]
        seed_override: Option<u64>,
    },
    /// List the available experiments.
    List,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("qsdlab: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match cli.command {
        Command::List => {
            print!("{}", list_experiments());
            ExitCode::SUCCESS
        }
        Command::Run { config, output_dir, seed_override } => {
            let overrides = Overrides { output_dir, seed: seed_override };
            match run(&config, &overrides) {
                Ok(report) => {
                    for a in &report.assertions {
                        let mark = if a.passed { "PASS" } else { "FAIL" };
                        println!(
                            "{mark} {}: measured {:.6e} (expected {:.6e}, tolerance {:.1e})",
                            a.name, a.measured, a.expected, a.tolerance
                        );
                    }
                    if report.passed {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("qsdlab: {e}");
                    ExitCode::from(e.exit_code() as u8)
                }
            }
        }
    }
}
