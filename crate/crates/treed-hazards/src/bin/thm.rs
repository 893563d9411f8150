//! `thm`: treed hazards model CLI. Simulate benchmark datasets, fit the
//! tree sampler, summarize posteriors, predict survival curves for new
//! subjects, and compute Kaplan-Meier baselines.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use treed_hazards::cli::{
    cmd_fit, cmd_km, cmd_predict, cmd_simulate, cmd_summarize, CliError,
};
use treed_hazards::config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "thm")]
#[command(about = "Bayesian treed hazards: survival trees with GP hazards per leaf")]
#[command(arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a benchmark dataset plus its truth sidecar.
    Simulate(SimulateArgs),
    /// Run the reversible-jump sampler and write the sample stream.
    Fit(FitArgs),
    /// Summarize a sample stream: MAP tree, leaf curves, assignments.
    Summarize(SummarizeArgs),
    /// Predict survival curves for new covariate rows via the MAP tree.
    Predict(PredictArgs),
    /// Kaplan-Meier curves with Greenwood bands, optionally per group.
    Km(KmArgs),
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Scenario tag: tree-nonph, cox-ph, or biomarker.
    #[arg(long)]
    scenario: String,
    /// Number of subjects.
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for data.csv and truth.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// TOML config with flat dotted keys; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Column-kind sidecar (name = "continuous" | "categorical").
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    chains: Option<usize>,
    #[arg(long)]
    min_node_size: Option<usize>,
}

#[derive(Args, Debug)]
struct SummarizeArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Defaults to config_echo.toml beside the samples file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long)]
    samples: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV of covariate rows (same columns as the training data).
    #[arg(long)]
    newrows: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct KmArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Row-to-group assignment CSV (row,leaf_id), e.g. leaf_assignments.csv.
    #[arg(long)]
    groupby: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long)]
    out: PathBuf,
}

fn resolve_fit_config(args: &FitArgs) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => RunConfig::from_file(path).map_err(CliError::from)?,
        None => RunConfig::default(),
    };
    if let Some(p) = &args.data {
        config.data_path = Some(p.clone());
    }
    if let Some(p) = &args.schema {
        config.schema_path = Some(p.clone());
    }
    if let Some(p) = &args.out {
        config.out_dir = p.clone();
    }
    if let Some(v) = args.seed {
        config.sampler.seed = v;
    }
    if let Some(v) = args.threads {
        config.sampler.threads = v;
    }
    if let Some(v) = args.iterations {
        config.sampler.iterations = v;
        // Keep the default 10% burn-in when only iterations is given.
        if args.burn_in.is_none() && args.config.is_none() {
            config.sampler.burn_in = v / 10;
        }
    }
    if let Some(v) = args.burn_in {
        config.sampler.burn_in = v;
    }
    if let Some(v) = args.bins {
        config.sampler.k_bins = v;
    }
    if let Some(v) = args.chains {
        config.sampler.chains = v;
    }
    if let Some(v) = args.min_node_size {
        config.sampler.prior.min_node_size = v;
    }
    Ok(config)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(&a.scenario, a.n, a.seed, &a.out),
        Command::Fit(a) => {
            let config = resolve_fit_config(&a)?;
            cmd_fit(&config).map(|_| ())
        }
        Command::Summarize(a) => cmd_summarize(
            &a.samples,
            &a.data,
            a.schema.as_deref(),
            a.config.as_deref(),
            &a.out,
        ),
        Command::Predict(a) => cmd_predict(
            &a.samples,
            &a.data,
            a.schema.as_deref(),
            a.config.as_deref(),
            &a.newrows,
            &a.out,
        ),
        Command::Km(a) => cmd_km(
            &a.data,
            a.schema.as_deref(),
            a.groupby.as_deref(),
            a.level,
            &a.out,
        ),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
