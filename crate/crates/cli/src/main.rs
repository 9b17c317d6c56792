//! `wavesim` command-line front end.
//!
//! Exit codes: 0 success, 2 data or usage error, 3 fit failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "wavesim",
    version,
    about = "Fit and simulate hourly wave height, period and direction regime"
)]
struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Only log warnings and errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to an hourly observation CSV.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// TOML run configuration; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output_model: PathBuf,
    },
    /// Simulate hourly series from a fitted model.
    Simulate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        years: usize,
        /// Defaults to the seed in the model's configuration.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: PathBuf,
        /// Independent replicates; outputs get a `_r<k>` suffix when > 1.
        #[arg(long, default_value_t = 1)]
        replicates: u64,
    },
    /// Compare an observed and a simulated series.
    Validate {
        #[arg(long)]
        observed: PathBuf,
        #[arg(long)]
        simulated: PathBuf,
        /// Comma-separated threshold quantiles.
        #[arg(long, value_delimiter = ',', default_values_t = wavesim::validate::DEFAULT_QUANTILES)]
        quantiles: Vec<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output_report: PathBuf,
    },
    /// Fit only the limiting-steepness curve.
    SteepnessFit {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print a readable summary of a model file.
    Report {
        #[arg(long)]
        model: PathBuf,
    },
    /// Write a synthetic observation series from the built-in reference model.
    Synth {
        #[arg(long)]
        years: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
        {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::Fit {
            input,
            config,
            output_model,
        } => commands::fit(&input, config.as_deref(), &output_model),
        Command::Simulate {
            model,
            years,
            seed,
            output,
            replicates,
        } => commands::simulate(&model, years, seed, &output, replicates),
        Command::Validate {
            observed,
            simulated,
            quantiles,
            config,
            output_report,
        } => commands::validate(
            &observed,
            &simulated,
            &quantiles,
            config.as_deref(),
            &output_report,
        ),
        Command::SteepnessFit {
            input,
            config,
            output,
        } => commands::steepness_fit(&input, config.as_deref(), &output),
        Command::Report { model } => commands::report(&model),
        Command::Synth {
            years,
            seed,
            output,
        } => commands::synth(years, seed, &output),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", commands::describe(&e));
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
