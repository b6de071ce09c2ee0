use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vrp_cli::commands::{self, parse_interval, parse_mode, PLAN_GRID};
use vrp_cli::{CliError, Input, Report};
use vrp_core::simulate::{with_thread_cap, SearchConfig, SearchMode};

/// Variance reduction checks for OLS designs augmented by one observation.
///
/// Internal parallelism is capped by the VRP_OLS_THREADS environment
/// variable (0 or unset: all cores).
#[derive(Parser)]
#[command(name = "vrp-ols", version)]
struct Cli {
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[command(subcommand)]
    verb: Verb,
}

#[derive(Subcommand)]
enum Verb {
    /// Covariances before and after the new observation and their decomposition.
    Decompose {
        problem: PathBuf,
        /// Allow a full base covariance or cross covariances.
        #[arg(long)]
        correlated: bool,
        /// Read the design rows from this CSV file.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate the variance-reduction criteria for the new observation.
    Check {
        problem: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Admissible next points for a straight-line design.
    Plan {
        problem: PathBuf,
        /// Interval to scan, as lo:hi.
        #[arg(long, value_parser = parse_interval)]
        search: Option<(f64, f64)>,
        #[arg(long, default_value_t = PLAN_GRID)]
        grid: usize,
        /// Report membership of this next point.
        #[arg(long, allow_hyphen_values = true)]
        query: Option<f64>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Monte Carlo comparison of empirical and analytic covariances.
    Simulate {
        problem: PathBuf,
        /// True coefficients, comma separated (defaults to zeros).
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        beta: Option<Vec<f64>>,
        #[arg(long, default_value_t = 100_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Randomized search for designs whose variance grows.
    Search {
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "unrestricted", value_parser = parse_mode)]
        mode: SearchMode,
        /// Also evaluate the built-in probe instances.
        #[arg(long)]
        probe: bool,
    },
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn input(problem: &Path, csv: Option<&Path>) -> Result<Input, CliError> {
    Ok(Input {
        problem: read(problem)?,
        csv: csv.map(read).transpose()?,
    })
}

fn run(verb: Verb) -> Result<Report, CliError> {
    match verb {
        Verb::Decompose { problem, correlated, csv } => commands::decompose(&input(&problem, csv.as_deref())?, correlated),
        Verb::Check { problem, csv } => commands::check(&input(&problem, csv.as_deref())?),
        Verb::Plan { problem, search, grid, query, csv } => {
            commands::plan(&input(&problem, csv.as_deref())?, search, grid, query)
        }
        Verb::Simulate { problem, beta, reps, seed, csv } => {
            commands::simulate(&input(&problem, csv.as_deref())?, beta, reps, seed)
        }
        Verb::Search { n, k, trials, seed, mode, probe } => commands::search(&SearchConfig {
            n,
            k,
            trials,
            seed,
            mode,
            include_probes: probe,
        }),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = std::panic::catch_unwind(|| with_thread_cap(|| run(cli.verb)));
    let result = match outcome {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => Err(CliError::Numeric(e)),
        Err(_) => Err(CliError::Internal("unexpected panic".into())),
    };
    match result {
        Ok(report) => {
            let text = report.to_json() + "\n";
            match &cli.output {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, text) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(4);
                    }
                }
                None => print!("{text}"),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
