//! `panelime` — reproducible pipeline for explaining year-over-year changes
//! in entity-by-year panels with local linear surrogates.

mod config;
mod runner;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::PipelineConfig;
use runner::Runner;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or flags (exit 2).
    Config(String),
    /// A required upstream artifact is missing (exit 3).
    MissingArtifact(String),
    /// Any other failure while running (exit 1).
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) | CliError::MissingArtifact(msg) | CliError::Runtime(msg) => {
                write!(f, "{msg}")
            }
        }
    }
}

impl From<panelime::Error> for CliError {
    fn from(err: panelime::Error) -> Self {
        CliError::Runtime(err.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "panelime",
    version,
    about = "Impute, difference, train, and explain entity-by-year panel data"
)]
struct Cli {
    /// TOML configuration file; flags override individual keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed for every random stage.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory holding the content-addressed run directories.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[arg(long, global = true)]
    verbose: bool,

    #[command(flatten)]
    schema: SchemaArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct SchemaArgs {
    /// Dataset CSV path (config key data.path; part of the run identity).
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    /// Entity (e.g. country) column name.
    #[arg(long, global = true)]
    entity: Option<String>,

    /// Time (e.g. year) column name.
    #[arg(long, global = true)]
    time: Option<String>,

    /// Regression target column name.
    #[arg(long, global = true)]
    target: Option<String>,

    /// Categorical column names (repeatable).
    #[arg(long, global = true)]
    categorical: Vec<String>,

    /// Two-column CSV of entity renames (old_name,new_name).
    #[arg(long, global = true)]
    rename_map: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fill missing cells, gated per row by the missing-rate threshold.
    Impute {
        /// Dataset CSV (overrides the config's data.path).
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        method: Option<String>,
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        max_iterations: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        residual_noise: bool,
    },
    /// Turn level series into year-over-year changes.
    Reformat {
        /// Panel CSV to reformat directly (skips the imputed artifact).
        #[arg(long)]
        input: Option<PathBuf>,
        /// diff_all or diff_target_lag.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Encode entities, split train/test, and search for the best model.
    Train {
        /// Candidate model family (repeatable).
        #[arg(long)]
        family: Vec<String>,
        /// Trial-count budget.
        #[arg(long)]
        budget: Option<usize>,
        /// Wall-clock budget in seconds (overrides --budget).
        #[arg(long)]
        budget_seconds: Option<f64>,
        #[arg(long)]
        metric: Option<String>,
    },
    /// Explain instances with a local linear surrogate.
    Explain {
        /// auto, test, or all.
        #[arg(long)]
        scope: Option<String>,
        #[arg(long)]
        max_instances: Option<usize>,
        #[arg(long)]
        kernel_width: Option<f64>,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        k_features: Option<usize>,
        #[arg(long)]
        ridge_lambda: Option<f64>,
        /// Compute distances on raw (unstandardized) features.
        #[arg(long)]
        no_standardize: bool,
        /// Also write one bar-chart SVG per explanation.
        #[arg(long)]
        svg: bool,
    },
    /// Choose maximally covering, minimally redundant explanations.
    Pick {
        /// Number of instances to select.
        #[arg(long)]
        budget: Option<usize>,
        /// Features counted per explanation in the frequency table.
        #[arg(long)]
        top_k: Option<usize>,
        /// abs or strict_positive.
        #[arg(long)]
        coverage_mode: Option<String>,
    },
    /// Individual conditional expectation curves and slope ranking.
    Ice {
        /// Feature to sweep (repeatable; default: all features).
        #[arg(long)]
        feature: Vec<String>,
        #[arg(long)]
        grid_points: Option<usize>,
        #[arg(long)]
        max_instances: Option<usize>,
        #[arg(long)]
        svg: bool,
    },
    /// Masked-column R^2 experiment: guided vs random column selection.
    Eval {
        /// Columns kept per instance.
        #[arg(long)]
        k: Option<usize>,
        /// Experiment repetitions.
        #[arg(long)]
        runs: Option<usize>,
        /// Cap on evaluated test instances per run.
        #[arg(long)]
        max_instances: Option<usize>,
        #[arg(long)]
        svg: bool,
    },
    /// Run impute, reformat, train, explain, and eval in sequence.
    Pipeline {
        #[arg(long)]
        svg: bool,
    },
    /// Print the resolved configuration as TOML and exit.
    ShowConfig,
}

fn resolve_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(data) = &cli.schema.data {
        config.data.path = data.to_string_lossy().into_owned();
    }
    if let Some(entity) = &cli.schema.entity {
        config.data.entity = entity.clone();
    }
    if let Some(time) = &cli.schema.time {
        config.data.time = time.clone();
    }
    if let Some(target) = &cli.schema.target {
        config.data.target = target.clone();
    }
    if !cli.schema.categorical.is_empty() {
        config.data.categorical = cli.schema.categorical.clone();
    }
    if let Some(renames) = &cli.schema.rename_map {
        config.data.rename_map = Some(renames.clone());
    }

    match &cli.command {
        Command::Impute {
            input,
            method,
            theta,
            k,
            max_iterations,
            tolerance,
            residual_noise,
        } => {
            if let Some(path) = input {
                config.data.path = path.to_string_lossy().into_owned();
            }
            if let Some(v) = method {
                config.impute.method = v.clone();
            }
            if let Some(v) = theta {
                config.impute.theta = *v;
            }
            if let Some(v) = k {
                config.impute.k = *v;
            }
            if let Some(v) = max_iterations {
                config.impute.max_iterations = *v;
            }
            if let Some(v) = tolerance {
                config.impute.tolerance = *v;
            }
            if *residual_noise {
                config.impute.residual_noise = true;
            }
        }
        Command::Reformat { input, strategy } => {
            if let Some(path) = input {
                config.data.path = path.to_string_lossy().into_owned();
            }
            if let Some(v) = strategy {
                config.reformat.strategy = v.clone();
            }
        }
        Command::Train {
            family,
            budget,
            budget_seconds,
            metric,
        } => {
            if !family.is_empty() {
                config.train.families = family.clone();
            }
            if let Some(v) = budget {
                config.train.budget_trials = *v;
            }
            if let Some(v) = budget_seconds {
                config.train.budget_seconds = Some(*v);
            }
            if let Some(v) = metric {
                config.train.metric = v.clone();
            }
        }
        Command::Explain {
            scope,
            max_instances,
            kernel_width,
            n_samples,
            k_features,
            ridge_lambda,
            no_standardize,
            ..
        } => {
            if let Some(v) = scope {
                config.explain.scope = v.clone();
            }
            if let Some(v) = max_instances {
                config.explain.max_instances = *v;
            }
            if let Some(v) = kernel_width {
                config.lime.kernel_width = *v;
            }
            if let Some(v) = n_samples {
                config.lime.n_samples = *v;
            }
            if let Some(v) = k_features {
                config.lime.k_features = *v;
            }
            if let Some(v) = ridge_lambda {
                config.lime.ridge_lambda = *v;
            }
            if *no_standardize {
                config.lime.standardize = false;
            }
        }
        Command::Pick {
            budget,
            top_k,
            coverage_mode,
        } => {
            if let Some(v) = budget {
                config.pick.budget = *v;
            }
            if let Some(v) = top_k {
                config.pick.top_k = *v;
            }
            if let Some(v) = coverage_mode {
                config.pick.coverage_mode = v.clone();
            }
        }
        Command::Ice {
            grid_points,
            max_instances,
            ..
        } => {
            if let Some(v) = grid_points {
                config.ice.grid_points = *v;
            }
            if let Some(v) = max_instances {
                config.ice.max_instances = *v;
            }
        }
        Command::Eval {
            k,
            runs,
            max_instances,
            ..
        } => {
            if let Some(v) = k {
                config.eval.k = *v;
            }
            if let Some(v) = runs {
                config.eval.runs = *v;
            }
            if let Some(v) = max_instances {
                config.eval.max_instances = Some(*v);
            }
        }
        Command::Pipeline { .. } | Command::ShowConfig => {}
    }
    Ok(config)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config = resolve_config(cli)?;
    if matches!(cli.command, Command::ShowConfig) {
        print!("{}", config.to_toml()?);
        return Ok(());
    }
    let runner = Runner::new(config, cli.verbose)?;
    if cli.verbose {
        eprintln!("run directory: {}", runner.run_dir().display());
    }
    match &cli.command {
        Command::Impute { .. } => runner.stage_impute(),
        Command::Reformat { input, .. } => runner.stage_reformat(input.is_some()),
        Command::Train { .. } => runner.stage_train(),
        Command::Explain { svg, .. } => runner.stage_explain(*svg),
        Command::Pick { .. } => runner.stage_pick(),
        Command::Ice { feature, svg, .. } => runner.stage_ice(feature, *svg),
        Command::Eval { svg, .. } => runner.stage_eval(*svg),
        Command::Pipeline { svg } => runner.stage_pipeline(*svg),
        Command::ShowConfig => unreachable!("handled above"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("panelime: {err}");
            match err {
                CliError::Config(_) => ExitCode::from(2),
                CliError::MissingArtifact(_) => ExitCode::from(3),
                CliError::Runtime(_) => ExitCode::from(1),
            }
        }
    }
}
