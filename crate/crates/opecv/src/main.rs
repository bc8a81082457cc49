//! Command-line front end for the off-policy evaluation workbench.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use opecv::banditgen::{
    build_problem, load_classification_csv, standin_dataset, write_classification_csv,
    ClassificationDataset, LoaderOptions,
};
use opecv::error::{Error, Result};
use opecv::estimators::{estimate, EstimatorKind, EstimatorSpec};
use opecv::harness::{
    run_bench_to_dir, run_regret_sweep, write_regret_sweep, ExperimentConfig,
};
use opecv::rng::Seed;
use opecv::selection::{ocv_select, OcvOptions};

#[derive(Parser)]
#[command(
    name = "opecv",
    about = "Off-policy evaluation workbench: estimators, cross-validated selection, benchmarks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DatasetArgs {
    /// Classification dataset: a CSV/JSON file path or a known dataset name
    /// (a deterministic synthetic stand-in is generated for names).
    #[arg(long)]
    dataset: String,
    /// Label column index (default: last column).
    #[arg(long)]
    label_column: Option<usize>,
    /// Scale features to [0, 1] while loading.
    #[arg(long, default_value_t = false)]
    min_max_scale: bool,
}

#[derive(Args)]
struct ProblemArgs {
    #[command(flatten)]
    dataset: DatasetArgs,
    /// Logging-policy inverse temperature.
    #[arg(long, default_value_t = 1.0)]
    b0: f64,
    /// Target-policy inverse temperature.
    #[arg(long, default_value_t = 10.0)]
    b1: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a classification CSV and write it as normalized JSON.
    Convert {
        /// Input CSV path.
        csv: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        label_column: Option<usize>,
        #[arg(long, default_value_t = false)]
        min_max_scale: bool,
    },
    /// Build one bandit problem and evaluate a single estimator on it.
    Evaluate {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Estimator spec: a kind name (`IPS`, `DM`, `DR`) or JSON like
        /// `{"kind":"TruncatedIPS","hyper":5.0}`.
        #[arg(long)]
        estimator: String,
    },
    /// Build one bandit problem and run cross-validated selection on it.
    Select {
        #[command(flatten)]
        problem: ProblemArgs,
        /// Candidate bundle (`ips-dm-dr`, `everything`, or a per-estimator
        /// grid such as `truncated-ips`).
        #[arg(long, default_value = "ips-dm-dr")]
        bundle: String,
        /// Validator kind: `ips` or `dr`.
        #[arg(long, default_value = "ips")]
        validator: String,
        /// Number of Monte Carlo splits.
        #[arg(short = 'K', long = "K", default_value_t = 10)]
        k: usize,
    },
    /// Run the full benchmark grid from a JSON config.
    Bench {
        #[arg(long)]
        config: PathBuf,
        /// Output directory (default: the config's output_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample-size regret sweep: subsample each problem to the given sizes.
    Regret {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated logged-dataset sizes.
        #[arg(long, value_delimiter = ',', default_value = "250,1000,4000")]
        sizes: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the deterministic synthetic stand-in for a known dataset name.
    Synth {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_dataset_arg(args: &DatasetArgs) -> Result<ClassificationDataset> {
    let path = Path::new(&args.dataset);
    if path.exists() {
        if path.extension().is_some_and(|e| e == "json") {
            let text = std::fs::read_to_string(path)?;
            return Ok(serde_json::from_str(&text)?);
        }
        let options = LoaderOptions {
            label_column: args.label_column,
            min_max_scale: args.min_max_scale,
        };
        return load_classification_csv(path, &options);
    }
    standin_dataset(&args.dataset)
}

fn parse_estimator_spec(text: &str) -> Result<EstimatorSpec> {
    if text.trim_start().starts_with('{') {
        let spec: EstimatorSpec = serde_json::from_str(text)?;
        spec.validate()?;
        return Ok(spec);
    }
    let kind: EstimatorKind = text.parse()?;
    EstimatorSpec::new(kind, None)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Convert { csv, out, label_column, min_max_scale } => {
            let options = LoaderOptions { label_column, min_max_scale };
            let dataset = load_classification_csv(&csv, &options)?;
            std::fs::write(&out, serde_json::to_string_pretty(&dataset)?)?;
            println!(
                "{}",
                serde_json::json!({
                    "n": dataset.n(),
                    "d": dataset.d(),
                    "m": dataset.m(),
                    "out": out,
                })
            );
        }
        Command::Evaluate { problem, estimator } => {
            let spec = parse_estimator_spec(&estimator)?;
            let dataset = load_dataset_arg(&problem.dataset)?;
            let bandit =
                build_problem(&dataset, problem.b0, problem.b1, Seed::new(problem.seed))?;
            let est =
                estimate(&spec, &bandit.logged, &bandit.target, Some(&bandit.logging))?;
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "dataset": problem.dataset.dataset,
                    "estimator": spec,
                    "beta0": problem.b0,
                    "beta1": problem.b1,
                    "seed": problem.seed,
                    "n": bandit.logged.n(),
                    "estimate": est.value,
                    "variance_of_mean": est.variance_of_mean,
                    "true_value": bandit.true_value,
                }))?
            );
        }
        Command::Select { problem, bundle, validator, k } => {
            let validator_kind: EstimatorKind = validator.parse()?;
            if !validator_kind.is_unbiased() {
                return Err(Error::InvalidInput(format!(
                    "validator must be IPS or DR, got {validator_kind}"
                )));
            }
            let dataset = load_dataset_arg(&problem.dataset)?;
            let bandit =
                build_problem(&dataset, problem.b0, problem.b1, Seed::new(problem.seed))?;
            let candidates = opecv::harness::resolve_bundle(
                &bundle,
                &Default::default(),
                &bandit,
            )?;
            let options = OcvOptions { splits: k, allow_biased_validator: false };
            let result = ocv_select(
                &bandit.logged,
                &bandit.target,
                Some(&bandit.logging),
                &candidates,
                &EstimatorSpec::new(validator_kind, None)?,
                &options,
                Seed::new(problem.seed).child(1),
            )?;
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "dataset": problem.dataset.dataset,
                    "bundle": bundle,
                    "beta0": problem.b0,
                    "beta1": problem.b1,
                    "true_value": bandit.true_value,
                    "result": result,
                }))?
            );
        }
        Command::Bench { config, out } => {
            let config = ExperimentConfig::from_json_file(&config)?;
            let out_dir = out.unwrap_or_else(|| config.output_dir.clone());
            let rows = run_bench_to_dir(&config, &out_dir)?;
            println!(
                "{}",
                serde_json::json!({"rows": rows.len(), "out": out_dir})
            );
        }
        Command::Regret { config, sizes, out } => {
            let config = ExperimentConfig::from_json_file(&config)?;
            let out_dir = out.unwrap_or_else(|| config.output_dir.clone());
            let rows = run_regret_sweep(&config, &sizes)?;
            write_regret_sweep(&rows, &out_dir)?;
            println!(
                "{}",
                serde_json::json!({"rows": rows.len(), "sizes": sizes, "out": out_dir})
            );
        }
        Command::Synth { name, out } => {
            let dataset = standin_dataset(&name)?;
            write_classification_csv(&dataset, &out)?;
            println!(
                "{}",
                serde_json::json!({
                    "name": name,
                    "n": dataset.n(),
                    "d": dataset.d(),
                    "m": dataset.m(),
                    "out": out,
                })
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
