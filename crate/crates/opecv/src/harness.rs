//! Benchmark orchestration: configuration, condition grids, metrics, and
//! CSV persistence.
//!
//! A benchmark run evaluates a set of methods (cross-validated selection,
//! interval-overlap selection, fixed estimators, theory tuners) over a grid
//! of datasets and policy temperatures, with a fixed number of independent
//! runs per condition. Every task derives its own seed from
//! (master, dataset, beta0, beta1, run), so results are reproducible and
//! independent of worker scheduling. Rows are canonically sorted before
//! writing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::banditgen::{
    build_problem, load_classification_csv, load_manifest, standin_dataset, subsample_problem,
    BanditProblem, ClassificationDataset, LoaderOptions,
};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorKind, EstimatorSpec, ShrinkMode};
use crate::reward_model::{RewardModel, DEFAULT_RIDGE_REGULARIZATION};
use crate::rng::Seed;
use crate::selection::{ocv_select, selection_regret, slope_select, OcvOptions, SelectionResult};
use crate::tuning::{
    candidates_from_grid, default_grid, slope_ordered_candidates, theory_truncation,
    tune_dr_shrink, tune_ips_lambda, tune_switch_dr,
};

/// Environment variable overriding the worker-pool size.
pub const THREADS_ENV_VAR: &str = "OPECV_THREADS";

/// One dataset in the experiment grid. Without a path (and absent from the
/// manifest) a deterministic synthetic stand-in with the dataset's
/// characteristic shape is generated from the name.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRef {
    pub name: String,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub label_column: Option<usize>,
    #[serde(default)]
    pub min_max_scale: bool,
}

/// One evaluation method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum MethodSpec {
    /// Cross-validated selection over a candidate bundle.
    Ocv { validator: EstimatorKind, bundle: String },
    /// Interval-overlap selection over a bundle walked in
    /// decreasing-variance order.
    Slope { bundle: String },
    /// A single estimator evaluated as-is.
    Fixed { spec: EstimatorSpec },
    /// The estimator's own theory-based tuning rule.
    Theory { kind: EstimatorKind },
}

impl MethodSpec {
    /// Stable row label, e.g. `ocv-dr`, `slope`, `fixed:IPS`,
    /// `theory:TruncatedIPS`.
    pub fn label(&self) -> String {
        match self {
            MethodSpec::Ocv { validator, .. } => {
                format!("ocv-{}", validator.name().to_ascii_lowercase())
            }
            MethodSpec::Slope { .. } => "slope".to_string(),
            MethodSpec::Fixed { spec } => format!("fixed:{}", spec.label()),
            MethodSpec::Theory { kind } => format!("theory:{kind}"),
        }
    }
}

fn default_runs() -> usize {
    50
}
fn default_splits() -> usize {
    10
}
fn default_delta() -> f64 {
    0.05
}
fn default_resamples() -> usize {
    10_000
}
fn default_true() -> bool {
    true
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Benchmark configuration; the JSON config mirrors this field-for-field.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetRef>,
    pub beta0: Vec<f64>,
    pub beta1: Vec<f64>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Monte Carlo splits per selection (K).
    #[serde(default = "default_splits")]
    pub k: usize,
    #[serde(default)]
    pub seed: u64,
    pub methods: Vec<MethodSpec>,
    /// Extra named candidate bundles; built-ins: `ips-dm-dr`, `everything`,
    /// and one per tunable estimator kind (`truncated-ips`, `switch-dr`,
    /// `cab`, `dr-os`, `dr-ps`, `ips-lambda`, `group-ips`).
    #[serde(default)]
    pub bundles: BTreeMap<String, Vec<EstimatorSpec>>,
    #[serde(default)]
    pub allow_biased_validator: bool,
    #[serde(default = "default_delta")]
    pub ips_lambda_delta: f64,
    /// Wall-clock seconds per row; disable for byte-identical reruns.
    #[serde(default = "default_true")]
    pub record_timing: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_resamples")]
    pub bootstrap_resamples: usize,
    /// Optional dataset manifest consulted for datasets without a path.
    #[serde(default)]
    pub manifest: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.datasets.is_empty() {
            return Err(Error::invalid("config needs at least one dataset"));
        }
        if self.beta0.is_empty() || self.beta1.is_empty() {
            return Err(Error::invalid("config needs beta0 and beta1 lists"));
        }
        if self.runs < 1 {
            return Err(Error::invalid("config needs runs >= 1"));
        }
        if self.k < 2 {
            return Err(Error::invalid("config needs k >= 2"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("config needs at least one method"));
        }
        for (name, specs) in &self.bundles {
            if specs.is_empty() {
                return Err(Error::invalid(format!("bundle {name:?} is empty")));
            }
            for spec in specs {
                spec.validate()?;
            }
        }
        if !(self.ips_lambda_delta > 0.0 && self.ips_lambda_delta <= 1.0) {
            return Err(Error::invalid("ips_lambda_delta must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }
}

/// One benchmark measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub beta0: f64,
    pub beta1: f64,
    pub run: usize,
    pub method: String,
    pub chosen: String,
    pub estimate: f64,
    pub true_value: f64,
    pub squared_error: f64,
    pub regret: f64,
    pub seconds: f64,
}

/// Fixed `results.csv` header, in `ResultRow` field order.
pub const RESULT_HEADER: [&str; 11] = [
    "dataset",
    "beta0",
    "beta1",
    "run",
    "method",
    "chosen",
    "estimate",
    "true_value",
    "squared_error",
    "regret",
    "seconds",
];

/// Loads a dataset reference: explicit path, then manifest, then stand-in.
pub fn load_dataset(
    reference: &DatasetRef,
    manifest: Option<&Path>,
) -> Result<ClassificationDataset> {
    let options = LoaderOptions {
        label_column: reference.label_column,
        min_max_scale: reference.min_max_scale,
    };
    if let Some(path) = &reference.path {
        return load_classification_csv(path, &options);
    }
    if let Some(manifest_path) = manifest {
        let manifest = load_manifest(manifest_path)?;
        if let Some(entry) = manifest.datasets.get(&reference.name) {
            let options = LoaderOptions {
                label_column: entry.label_column.or(reference.label_column),
                min_max_scale: reference.min_max_scale,
            };
            return load_classification_csv(&entry.path, &options);
        }
    }
    standin_dataset(&reference.name)
}

/// Resolves a bundle name to candidate specs for one problem. Grids depend
/// on the problem (weight quantiles), so resolution happens per run.
pub fn resolve_bundle(
    name: &str,
    custom: &BTreeMap<String, Vec<EstimatorSpec>>,
    problem: &BanditProblem,
) -> Result<Vec<EstimatorSpec>> {
    if let Some(specs) = custom.get(name) {
        return Ok(specs.clone());
    }
    match name {
        "ips-dm-dr" => Ok(vec![EstimatorSpec::ips(), EstimatorSpec::dm(), EstimatorSpec::dr()]),
        "everything" => {
            let mut specs =
                vec![EstimatorSpec::ips(), EstimatorSpec::dm(), EstimatorSpec::dr()];
            for kind in EstimatorKind::ALL {
                if kind.is_tunable() {
                    let grid = default_grid(kind, &problem.logged, &problem.target)?;
                    specs.extend(candidates_from_grid(&grid)?);
                }
            }
            Ok(specs)
        }
        other => {
            let kind = bundle_kind(other)?;
            let grid = default_grid(kind, &problem.logged, &problem.target)?;
            candidates_from_grid(&grid)
        }
    }
}

/// Bundle resolution in decreasing-variance order for the interval walk.
/// The plain bundle orders IPS, DR, DM; grid bundles use each grid's
/// variance direction. The joint `everything` bundle has no defensible
/// variance order, so it is rejected.
pub fn resolve_slope_bundle(
    name: &str,
    custom: &BTreeMap<String, Vec<EstimatorSpec>>,
    problem: &BanditProblem,
) -> Result<Vec<EstimatorSpec>> {
    if let Some(specs) = custom.get(name) {
        return Ok(specs.clone());
    }
    match name {
        "ips-dm-dr" => Ok(vec![EstimatorSpec::ips(), EstimatorSpec::dr(), EstimatorSpec::dm()]),
        "everything" => Err(Error::invalid(
            "the everything bundle has no defensible variance order for interval selection",
        )),
        other => {
            let kind = bundle_kind(other)?;
            let grid = default_grid(kind, &problem.logged, &problem.target)?;
            slope_ordered_candidates(&grid)
        }
    }
}

fn bundle_kind(name: &str) -> Result<EstimatorKind> {
    match name {
        "truncated-ips" => Ok(EstimatorKind::TruncatedIps),
        "switch-dr" => Ok(EstimatorKind::SwitchDr),
        "cab" => Ok(EstimatorKind::Cab),
        "dr-os" => Ok(EstimatorKind::DrOs),
        "dr-ps" => Ok(EstimatorKind::DrPs),
        "ips-lambda" => Ok(EstimatorKind::IpsLambda),
        "group-ips" => Ok(EstimatorKind::GroupIps),
        other => Err(Error::invalid(format!("unknown bundle: {other}"))),
    }
}

/// Theory-based tuning for one estimator kind, returning the tuned spec.
pub fn theory_tuned_spec(
    kind: EstimatorKind,
    problem: &BanditProblem,
    ips_lambda_delta: f64,
) -> Result<EstimatorSpec> {
    let dataset = &problem.logged;
    let target = &problem.target;
    match kind {
        EstimatorKind::TruncatedIps => {
            EstimatorSpec::new(kind, Some(theory_truncation(dataset.n())))
        }
        EstimatorKind::SwitchDr => {
            let model = RewardModel::fit_ridge(dataset, DEFAULT_RIDGE_REGULARIZATION)?;
            let grid = default_grid(kind, dataset, target)?;
            let tau =
                tune_switch_dr(dataset, target, &problem.logging, &model, &grid.values)?;
            EstimatorSpec::new(kind, Some(tau))
        }
        EstimatorKind::DrOs | EstimatorKind::DrPs => {
            let model = RewardModel::fit_ridge(dataset, DEFAULT_RIDGE_REGULARIZATION)?;
            let grid = default_grid(kind, dataset, target)?;
            let mode = if kind == EstimatorKind::DrOs {
                ShrinkMode::Optimistic
            } else {
                ShrinkMode::Pessimistic
            };
            let lambda = tune_dr_shrink(dataset, target, &model, &grid.values, mode)?;
            EstimatorSpec::new(kind, Some(lambda))
        }
        EstimatorKind::IpsLambda => {
            let lambda = tune_ips_lambda(dataset, target, ips_lambda_delta)?;
            EstimatorSpec::new(kind, Some(lambda))
        }
        other => Err(Error::invalid(format!("{other} has no theory-based tuning rule"))),
    }
}

/// Regret of a selection against its own candidate set, judged by true
/// squared error of each candidate's full-data estimate.
fn selection_true_regret(result: &SelectionResult, true_value: f64) -> Result<f64> {
    let losses: Vec<f64> = result
        .candidates
        .iter()
        .map(|c| (c.full_estimate - true_value) * (c.full_estimate - true_value))
        .collect();
    let chosen = losses[result.chosen_index];
    selection_regret(chosen, &losses)
}

/// Executes every configured method on one freshly built problem.
pub fn run_condition(
    config: &ExperimentConfig,
    dataset: &ClassificationDataset,
    dataset_name: &str,
    beta0: f64,
    beta1: f64,
    run: usize,
    seed: Seed,
) -> Result<Vec<ResultRow>> {
    let problem = build_problem(dataset, beta0, beta1, seed.child(0))?;
    let mut rows = Vec::with_capacity(config.methods.len());
    for (method_index, method) in config.methods.iter().enumerate() {
        let started = Instant::now();
        let method_seed = seed.child(1).child(method_index as u64);
        let outcome = run_method(config, method, &problem, method_seed);
        let seconds =
            if config.record_timing { started.elapsed().as_secs_f64() } else { 0.0 };
        match outcome {
            Ok((chosen, estimate_value, regret)) => {
                let squared_error = (estimate_value - problem.true_value)
                    * (estimate_value - problem.true_value);
                rows.push(ResultRow {
                    dataset: dataset_name.to_string(),
                    beta0,
                    beta1,
                    run,
                    method: method.label(),
                    chosen,
                    estimate: estimate_value,
                    true_value: problem.true_value,
                    squared_error,
                    regret,
                    seconds,
                });
            }
            Err(err) => {
                // One failing method leaves the rest of the run intact.
                log::error!(
                    "{dataset_name} beta0={beta0} beta1={beta1} run={run} {}: {err}",
                    method.label()
                );
            }
        }
    }
    Ok(rows)
}

fn run_method(
    config: &ExperimentConfig,
    method: &MethodSpec,
    problem: &BanditProblem,
    seed: Seed,
) -> Result<(String, f64, f64)> {
    match method {
        MethodSpec::Ocv { validator, bundle } => {
            let candidates = resolve_bundle(bundle, &config.bundles, problem)?;
            let validator_spec = EstimatorSpec::new(*validator, None)?;
            let options = OcvOptions {
                splits: config.k,
                allow_biased_validator: config.allow_biased_validator,
            };
            let result = ocv_select(
                &problem.logged,
                &problem.target,
                Some(&problem.logging),
                &candidates,
                &validator_spec,
                &options,
                seed,
            )?;
            let regret = selection_true_regret(&result, problem.true_value)?;
            Ok((result.chosen.label(), result.final_estimate, regret))
        }
        MethodSpec::Slope { bundle } => {
            let ordered = resolve_slope_bundle(bundle, &config.bundles, problem)?;
            let result = slope_select(
                &problem.logged,
                &problem.target,
                Some(&problem.logging),
                &ordered,
            )?;
            let regret = selection_true_regret(&result, problem.true_value)?;
            Ok((result.chosen.label(), result.final_estimate, regret))
        }
        MethodSpec::Fixed { spec } => {
            let est = estimate(spec, &problem.logged, &problem.target, Some(&problem.logging))?;
            Ok((spec.label(), est.value, 0.0))
        }
        MethodSpec::Theory { kind } => {
            let spec = theory_tuned_spec(*kind, problem, config.ips_lambda_delta)?;
            let est = estimate(&spec, &problem.logged, &problem.target, Some(&problem.logging))?;
            Ok((spec.label(), est.value, 0.0))
        }
    }
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(value) = std::env::var(THREADS_ENV_VAR) {
        let threads: usize = value
            .parse()
            .map_err(|_| Error::invalid(format!("{THREADS_ENV_VAR}={value} is not a number")))?;
        builder = builder.num_threads(threads);
    }
    builder.build().map_err(|e| Error::invalid(format!("worker pool: {e}")))
}

/// Runs the full condition grid. Tasks fan out to a worker pool
/// ([`THREADS_ENV_VAR`] overrides its size); rows come back sorted by
/// (dataset, beta0, beta1, run, method) in config order, so the output does
/// not depend on scheduling.
pub fn run_bench(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let manifest = config.manifest.as_deref();

    let mut datasets = Vec::new();
    for (ds_index, reference) in config.datasets.iter().enumerate() {
        match load_dataset(reference, manifest) {
            Ok(ds) => datasets.push((ds_index, reference.name.clone(), ds)),
            Err(err) => {
                // Abandon every condition of this dataset, keep the rest.
                log::error!("dataset {}: {err}", reference.name);
            }
        }
    }

    let master = Seed::new(config.seed);
    let mut tasks = Vec::new();
    for (ds_index, name, dataset) in &datasets {
        for (b0_index, &beta0) in config.beta0.iter().enumerate() {
            for (b1_index, &beta1) in config.beta1.iter().enumerate() {
                for run in 0..config.runs {
                    let seed = master
                        .child(*ds_index as u64)
                        .child(b0_index as u64)
                        .child(b1_index as u64)
                        .child(run as u64);
                    tasks.push((
                        *ds_index, b0_index, b1_index, run, name.clone(), dataset, seed, beta0,
                        beta1,
                    ));
                }
            }
        }
    }

    let pool = worker_pool()?;
    let mut keyed: Vec<((usize, usize, usize, usize), Vec<ResultRow>)> = pool.install(|| {
        use rayon::prelude::*;
        tasks
            .par_iter()
            .map(|(ds_index, b0_index, b1_index, run, name, dataset, seed, beta0, beta1)| {
                let rows =
                    run_condition(config, dataset, name, *beta0, *beta1, *run, *seed)
                        .unwrap_or_else(|err| {
                            log::error!("{name} run {run}: {err}");
                            Vec::new()
                        });
                ((*ds_index, *b0_index, *b1_index, *run), rows)
            })
            .collect()
    });
    keyed.sort_by_key(|(key, _)| *key);
    Ok(keyed.into_iter().flat_map(|(_, rows)| rows).collect())
}

/// Percentile bootstrap interval for the mean: resample with replacement,
/// take empirical quantiles of the resampled means at
/// `(1 - level) / 2` and `1 - (1 - level) / 2`.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    values: &[f64],
    level: f64,
    resamples: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::invalid("bootstrap_ci of an empty sample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid("confidence level must lie in (0, 1)"));
    }
    if resamples == 0 {
        return Err(Error::invalid("bootstrap_ci needs at least one resample"));
    }
    let n = values.len();
    let mut means = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut total = 0.0;
        for _ in 0..n {
            total += values[rng.gen_range(0..n)];
        }
        means.push(total / n as f64);
    }
    means.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let rank = ((q * resamples as f64).ceil() as usize).clamp(1, resamples);
        means[rank - 1]
    };
    let tail = (1.0 - level) / 2.0;
    Ok((quantile(tail), quantile(1.0 - tail)))
}

/// Aggregate metrics for one (dataset, method) group.
#[derive(Debug, Clone, Serialize)]
pub struct AggregateRow {
    pub dataset: String,
    pub method: String,
    pub runs: usize,
    pub mse: f64,
    pub mse_lo: f64,
    pub mse_hi: f64,
    pub regret: f64,
    pub regret_lo: f64,
    pub regret_hi: f64,
}

/// Pools rows over conditions and runs into per-(dataset, method) MSE and
/// mean regret, each with a bootstrap interval. Empty groups cannot occur
/// (groups are induced by the rows themselves).
pub fn aggregate(rows: &[ResultRow], resamples: usize, seed: Seed) -> Result<Vec<AggregateRow>> {
    let mut groups: BTreeMap<(String, String), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for row in rows {
        let entry = groups
            .entry((row.dataset.clone(), row.method.clone()))
            .or_default();
        entry.0.push(row.squared_error);
        entry.1.push(row.regret);
    }
    let mut out = Vec::with_capacity(groups.len());
    for (index, ((dataset, method), (errors, regrets))) in groups.into_iter().enumerate() {
        let mut rng = seed.child(index as u64).rng();
        let mse = errors.iter().sum::<f64>() / errors.len() as f64;
        let (mse_lo, mse_hi) = bootstrap_ci(&errors, 0.95, resamples, &mut rng)?;
        let regret = regrets.iter().sum::<f64>() / regrets.len() as f64;
        let (regret_lo, regret_hi) = bootstrap_ci(&regrets, 0.95, resamples, &mut rng)?;
        out.push(AggregateRow {
            dataset,
            method,
            runs: errors.len(),
            mse,
            mse_lo,
            mse_hi,
            regret,
            regret_lo,
            regret_hi,
        });
    }
    Ok(out)
}

fn format_f64(value: f64) -> String {
    // Rust's float Display is shortest-round-trip with a '.' separator.
    value.to_string()
}

/// Writes `results.csv` with the fixed header and row order.
pub fn write_results_csv(rows: &[ResultRow], path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    writer.write_record(RESULT_HEADER)?;
    for row in rows {
        writer.write_record(&[
            row.dataset.clone(),
            format_f64(row.beta0),
            format_f64(row.beta1),
            row.run.to_string(),
            row.method.clone(),
            row.chosen.clone(),
            format_f64(row.estimate),
            format_f64(row.true_value),
            format_f64(row.squared_error),
            format_f64(row.regret),
            format_f64(row.seconds),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes `summary.csv` with per-(dataset, method) aggregates.
pub fn write_summary_csv(aggregates: &[AggregateRow], path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    writer.write_record([
        "dataset", "method", "runs", "mse", "mse_lo", "mse_hi", "regret", "regret_lo",
        "regret_hi",
    ])?;
    for row in aggregates {
        writer.write_record(&[
            row.dataset.clone(),
            row.method.clone(),
            row.runs.to_string(),
            format_f64(row.mse),
            format_f64(row.mse_lo),
            format_f64(row.mse_hi),
            format_f64(row.regret),
            format_f64(row.regret_lo),
            format_f64(row.regret_hi),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes `plotdata/mse_by_condition.csv` and
/// `plotdata/regret_by_condition.csv`: one value per
/// (dataset, beta0, beta1, method) with bootstrap intervals.
pub fn write_plotdata(
    rows: &[ResultRow],
    resamples: usize,
    seed: Seed,
    directory: &Path,
) -> Result<()> {
    std::fs::create_dir_all(directory)?;
    let mut groups: BTreeMap<(String, String, String, String), (Vec<f64>, Vec<f64>)> =
        BTreeMap::new();
    for row in rows {
        let key = (
            row.dataset.clone(),
            format_f64(row.beta0),
            format_f64(row.beta1),
            row.method.clone(),
        );
        let entry = groups.entry(key).or_default();
        entry.0.push(row.squared_error);
        entry.1.push(row.regret);
    }

    let mut mse_writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(directory.join("mse_by_condition.csv"))?;
    let mut regret_writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(directory.join("regret_by_condition.csv"))?;
    let header = ["dataset", "beta0", "beta1", "method", "value", "lo", "hi"];
    mse_writer.write_record(header)?;
    regret_writer.write_record(header)?;

    for (index, ((dataset, beta0, beta1, method), (errors, regrets))) in
        groups.into_iter().enumerate()
    {
        let mut rng = seed.child(index as u64).rng();
        let mse = errors.iter().sum::<f64>() / errors.len() as f64;
        let (lo, hi) = bootstrap_ci(&errors, 0.95, resamples, &mut rng)?;
        mse_writer.write_record(&[
            dataset.clone(),
            beta0.clone(),
            beta1.clone(),
            method.clone(),
            format_f64(mse),
            format_f64(lo),
            format_f64(hi),
        ])?;
        let mean_regret = regrets.iter().sum::<f64>() / regrets.len() as f64;
        let (lo, hi) = bootstrap_ci(&regrets, 0.95, resamples, &mut rng)?;
        regret_writer.write_record(&[
            dataset,
            beta0,
            beta1,
            method,
            format_f64(mean_regret),
            format_f64(lo),
            format_f64(hi),
        ])?;
    }
    mse_writer.flush()?;
    regret_writer.flush()?;
    Ok(())
}

/// Runs the grid and writes `results.csv`, `summary.csv`, and `plotdata/*`
/// under `out_dir`.
pub fn run_bench_to_dir(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<ResultRow>> {
    std::fs::create_dir_all(out_dir)?;
    let rows = run_bench(config)?;
    write_results_csv(&rows, &out_dir.join("results.csv"))?;
    let summary_seed = Seed::new(config.seed).child(u64::from_le_bytes(*b"summary\0"));
    let aggregates = aggregate(&rows, config.bootstrap_resamples, summary_seed)?;
    write_summary_csv(&aggregates, &out_dir.join("summary.csv"))?;
    write_plotdata(&rows, config.bootstrap_resamples, summary_seed.child(1), &out_dir.join("plotdata"))?;
    Ok(rows)
}

/// One regret-sweep measurement.
#[derive(Debug, Clone, Serialize)]
pub struct RegretRow {
    pub dataset: String,
    pub size: usize,
    pub run: usize,
    pub method: String,
    pub regret: f64,
}

/// The sample-size sweep: every run builds one problem per dataset, then
/// subsamples the bandit half to each size (without replacement) and
/// re-runs every selection method on the shrunken problem. Non-selection
/// methods contribute no regret and are skipped.
pub fn run_regret_sweep(config: &ExperimentConfig, sizes: &[usize]) -> Result<Vec<RegretRow>> {
    config.validate()?;
    if sizes.is_empty() {
        return Err(Error::invalid("regret sweep needs at least one size"));
    }
    let beta0 = config.beta0[0];
    let beta1 = config.beta1[0];
    let manifest = config.manifest.as_deref();
    let master = Seed::new(config.seed);

    let mut datasets = Vec::new();
    for (ds_index, reference) in config.datasets.iter().enumerate() {
        datasets.push((ds_index, reference.name.clone(), load_dataset(reference, manifest)?));
    }

    let pool = worker_pool()?;
    let mut keyed: Vec<((usize, usize, usize, usize), Vec<RegretRow>)> = pool.install(|| {
        use rayon::prelude::*;
        let tasks: Vec<(usize, &str, &ClassificationDataset, usize)> = datasets
            .iter()
            .flat_map(|(ds_index, name, ds)| {
                (0..config.runs).map(move |run| (*ds_index, name.as_str(), ds, run))
            })
            .collect();
        tasks
            .par_iter()
            .map(|(ds_index, name, dataset, run)| {
                let seed = master.child(*ds_index as u64).child(*run as u64);
                let mut rows = Vec::new();
                match build_problem(dataset, beta0, beta1, seed.child(0)) {
                    Ok(problem) => {
                        for (size_index, &size) in sizes.iter().enumerate() {
                            let sub_seed = seed.child(1).child(size_index as u64);
                            match subsample_problem(&problem, size, sub_seed) {
                                Ok(sub) => {
                                    for (method_index, method) in
                                        config.methods.iter().enumerate()
                                    {
                                        if matches!(
                                            method,
                                            MethodSpec::Fixed { .. } | MethodSpec::Theory { .. }
                                        ) {
                                            continue;
                                        }
                                        let method_seed =
                                            sub_seed.child(2).child(method_index as u64);
                                        match run_method(config, method, &sub, method_seed) {
                                            Ok((_, _, regret)) => rows.push(RegretRow {
                                                dataset: name.to_string(),
                                                size: sub.logged.n(),
                                                run: *run,
                                                method: method.label(),
                                                regret,
                                            }),
                                            Err(err) => log::error!(
                                                "{name} size {size} run {run} {}: {err}",
                                                method.label()
                                            ),
                                        }
                                    }
                                }
                                Err(err) => {
                                    log::error!("{name} size {size} run {run}: {err}")
                                }
                            }
                        }
                    }
                    Err(err) => log::error!("{name} run {run}: {err}"),
                }
                ((*ds_index, *run, 0usize, 0usize), rows)
            })
            .collect()
    });
    keyed.sort_by_key(|(key, _)| *key);
    Ok(keyed.into_iter().flat_map(|(_, rows)| rows).collect())
}

/// Median of a non-empty slice (lower median for even lengths).
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("median of an empty slice"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[(sorted.len() - 1) / 2])
}

/// Writes regret-sweep rows plus a per-(dataset, method, size) median
/// summary.
pub fn write_regret_sweep(rows: &[RegretRow], out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(out_dir.join("regret_by_size.csv"))?;
    writer.write_record(["dataset", "size", "run", "method", "regret"])?;
    for row in rows {
        writer.write_record(&[
            row.dataset.clone(),
            row.size.to_string(),
            row.run.to_string(),
            row.method.clone(),
            format_f64(row.regret),
        ])?;
    }
    writer.flush()?;

    let mut groups: BTreeMap<(String, String, usize), Vec<f64>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.dataset.clone(), row.method.clone(), row.size))
            .or_default()
            .push(row.regret);
    }
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(out_dir.join("regret_summary.csv"))?;
    writer.write_record(["dataset", "method", "size", "median_regret", "runs"])?;
    for ((dataset, method, size), regrets) in groups {
        writer.write_record(&[
            dataset,
            method,
            size.to_string(),
            format_f64(median(&regrets)?),
            regrets.len().to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
