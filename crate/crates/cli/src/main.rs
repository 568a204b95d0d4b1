//! `demethod` — solve limiting ODE systems, build deviation envelopes and
//! failure-probability bounds, and verify them against Monte Carlo
//! simulations of discrete stochastic processes.
//!
//! Every command reads one JSON config (`--config`); `--seed`, `--trials`,
//! `--out`, `--threads`, and `--format` override the config, and the
//! `DEMETHOD_*` environment variables sit between the two (flags > env >
//! config). Exit codes: 0 success/pass, 1 verification or comparison
//! verdict failed, 2 invalid configuration or parameters (with a
//! machine-readable error JSON on stdout).

mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;
use error::CliError;
use run::{Format, Outcome, Settings};

#[derive(Parser)]
#[command(name = "demethod", version, about = "Differential equation method toolkit")]
struct Cli {
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed; trial k uses seed + k.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    /// Directory for file artifacts (CSV/JSON).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for trials (default: available parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Stdout format for commands that support both.
    #[arg(long, global = true, value_enum)]
    format: Option<CliFormat>,
    /// With --out, also dump one CSV per trial on verify commands.
    #[arg(long, global = true)]
    dump_traces: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate the limiting ODE system and emit the trajectory.
    Solve,
    /// Build the deviation envelope and failure-probability bound.
    Envelope,
    /// Run seeded process traces and dump them as CSV.
    Simulate,
    /// Monte Carlo check of the one-sided (upper-envelope) method.
    VerifyOneSided,
    /// Monte Carlo check of the two-sided method.
    VerifyTwoSided,
    /// Numerically check the deterministic comparison theorem.
    Compare,
    /// Evaluate the Freedman deviation bound.
    Freedman,
    /// Bisect for the smallest λ meeting a target failure probability.
    LambdaMin,
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFormat {
    Csv,
    Json,
}

fn env_parsed<T: FromStr>(name: &str) -> Result<Option<T>, CliError> {
    match std::env::var(name) {
        Err(_) => Ok(None),
        Ok(raw) => raw
            .parse::<T>()
            .map(Some)
            .map_err(|_| CliError::config(format!("cannot parse {name}={raw}"))),
    }
}

fn settings(cli: &Cli) -> Result<Settings, CliError> {
    let config_path = match (&cli.config, env_parsed::<PathBuf>("DEMETHOD_CONFIG")?) {
        (Some(p), _) => p.clone(),
        (None, Some(p)) => p,
        (None, None) => return Err(CliError::config("--config is required")),
    };
    let config = ExperimentConfig::load(&config_path)?;

    let trials = cli
        .trials
        .or(env_parsed("DEMETHOD_TRIALS")?)
        .or(config.trials)
        .unwrap_or(100);
    let seed = cli
        .seed
        .or(env_parsed("DEMETHOD_SEED")?)
        .or(config.seed)
        .unwrap_or(0);
    let out = cli
        .out
        .clone()
        .or(env_parsed("DEMETHOD_OUT")?)
        .or_else(|| config.out.clone());
    let threads = cli.threads.or(env_parsed("DEMETHOD_THREADS")?).or(config.threads);
    if let Some(t) = threads {
        if t == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        // Ignore the error if a global pool already exists (tests).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let format_flag = match cli.format {
        Some(CliFormat::Csv) => Some("csv".to_string()),
        Some(CliFormat::Json) => Some("json".to_string()),
        None => None,
    };
    let format_name = format_flag
        .or(env_parsed("DEMETHOD_FORMAT")?)
        .or_else(|| config.format.clone());
    let format = match format_name.as_deref() {
        None => None,
        Some("csv") => Some(Format::Csv),
        Some("json") => Some(Format::Json),
        Some(other) => {
            return Err(CliError::config(format!(
                "unknown format '{other}'; known: csv, json"
            )))
        }
    };
    // Natural default per command; only solve/envelope honor csv.
    let format = format.unwrap_or(match cli.command {
        Command::Solve | Command::Envelope => Format::Csv,
        _ => Format::Json,
    });

    Ok(Settings {
        config,
        trials,
        seed,
        out,
        format,
        dump_traces: cli.dump_traces,
    })
}

fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    let s = settings(cli)?;
    match cli.command {
        Command::Solve => run::solve(&s),
        Command::Envelope => run::envelope(&s),
        Command::Simulate => run::simulate(&s),
        Command::VerifyOneSided => run::verify(&s, demethod::envelope::Side::Upper),
        Command::VerifyTwoSided => run::verify(&s, demethod::envelope::Side::TwoSided),
        Command::Compare => run::compare(&s),
        Command::Freedman => run::freedman(&s),
        Command::LambdaMin => run::lambda_min(&s),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(outcome) => {
            println!("{}", outcome.stdout);
            ExitCode::from(outcome.exit)
        }
        Err(e) => {
            println!("{}", e.to_json());
            ExitCode::from(2)
        }
    }
}
