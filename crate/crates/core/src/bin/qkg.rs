use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qkg::experiment::{cmd_run, cmd_speedup, CommandError, RunOptions, SpeedupOptions};
use qkg::selftest::run_selftest;

#[derive(Parser)]
#[command(name = "qkg", version, about = "Batch Bayesian optimization with the parallel knowledge gradient")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (policy, q, seed) combination of an experiment file.
    Run {
        config: PathBuf,
        /// Half-open seed range `a..b`, replacing the file's seed list.
        #[arg(long)]
        seed_range: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overwrite existing output files.
        #[arg(long)]
        force: bool,
        /// Worker threads (QKG_WORKERS takes precedence).
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the built-in invariant checks.
    Selftest,
    /// Compare q-KG across batch sizes.
    Speedup {
        config: PathBuf,
        /// Comma-separated batch sizes, e.g. `1,2,4`.
        #[arg(long = "q", value_name = "LIST")]
        q_list: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        force: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result: Result<(), CommandError> = match cli.command {
        Command::Run { config, seed_range, out, force, workers } => {
            cmd_run(&config, &RunOptions { seed_range, out, force, workers }).map(|report| {
                println!(
                    "wrote {} traces and {}",
                    report.trace_files.len(),
                    report.summary_file.display()
                );
            })
        }
        Command::Selftest => {
            let report = run_selftest();
            println!("{report}");
            if report.passed() {
                Ok(())
            } else {
                let names: Vec<&str> = report.failures().map(|c| c.name).collect();
                Err(CommandError::Runtime(format!("failed checks: {}", names.join(", "))))
            }
        }
        Command::Speedup { config, q_list, out, force, workers } => {
            cmd_speedup(&config, &SpeedupOptions { q_list, out, force, workers }).map(|(path, table)| {
                for row in &table.rows {
                    println!("q={} iteration={} median_regret={:.4e}", row.q, row.iteration, row.median_regret);
                }
                println!("wrote {}", path.display());
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qkg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
