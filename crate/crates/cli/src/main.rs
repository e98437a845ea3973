//! `accent-id`: batch front end for feature extraction, experiments and
//! selection sweeps. Exit codes: 0 success, 2 configuration error, 3 data
//! error, 4 numerical failure.

mod artifacts;
mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use accent_id_core::error::ErrorKind;
use accent_id_core::select::SelectionMethod;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "accent-id", version, about = "Native-language accent identification experiments")]
struct Cli {
    /// Worker threads for file- and fold-level parallelism (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Repeat for more log output on stderr.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Compute and cache features for the manifest named in the config.
    Extract {
        #[command(flatten)]
        run: RunArgs,
        /// Re-extract even if the cache stamp matches.
        #[arg(long)]
        force: bool,
    },
    /// Run the configured protocol and write report.json and report.txt.
    Experiment {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Grid over selection methods and N; writes sweep.csv.
    SweepSelect {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated N values (overrides selection.sweep_n).
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
        /// Comma-separated methods (overrides selection.sweep_methods).
        #[arg(long, value_delimiter = ',')]
        methods: Vec<SelectionMethod>,
    },
    /// Print a saved report as a table.
    Report {
        path: PathBuf,
        /// Print the JSON instead.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ProtocolArg {
    Cv,
    CrossPrompt,
}

/// Config file plus flag overrides. Overrides are applied before hashing.
#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    protocol: Option<ProtocolArg>,
    #[arg(long)]
    folds: Option<usize>,
    /// Oversample the full dataset before folding (compatibility mode; leaks).
    #[arg(long)]
    smote_before_cv: bool,
    /// Score features once on all rows instead of per fold (compatibility mode; leaks).
    #[arg(long)]
    select_once: bool,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<accent_id_core::Error>() {
            return match e.kind() {
                ErrorKind::Config => 2,
                ErrorKind::Data => 3,
                ErrorKind::Numerical => 4,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Extract { run, force } => commands::extract(&run, force),
        Command::Experiment { run } => commands::experiment(&run),
        Command::SweepSelect { run, n, methods } => commands::sweep(&run, &n, &methods),
        Command::Report { path, json } => commands::report(&path, json),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
