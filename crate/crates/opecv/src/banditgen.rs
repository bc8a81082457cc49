//! Classification datasets as contextual-bandit problems.
//!
//! The conversion pipeline: split a labeled dataset into two halves, learn
//! one-vs-rest logistic models on bootstrap samples of the policy half (two
//! independent bootstraps so the two policies are not simple transformations
//! of each other), wrap them as softmax policies with chosen inverse
//! temperatures, compute the exact target-policy value on the bandit half,
//! and log one sample per bandit-half example by drawing an action from the
//! logging policy. The reward is 1 when the action matches the label.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{LoggedDataset, LoggedSample};
use crate::error::{Error, Result};
use crate::policy::{sample_action, SoftmaxLinearPolicy};
use crate::rng::{fnv1a, Seed};

/// A labeled classification dataset with dense labels in `[0, m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationDataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    m: usize,
    /// Original label tokens in first-appearance order.
    class_labels: Vec<String>,
}

impl ClassificationDataset {
    pub fn new(
        features: Vec<Vec<f64>>,
        labels: Vec<usize>,
        m: usize,
        class_labels: Vec<String>,
    ) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::invalid("features and labels disagree in length"));
        }
        if features.is_empty() {
            return Err(Error::invalid("classification dataset is empty"));
        }
        let d = features[0].len();
        if d == 0 {
            return Err(Error::invalid("classification dataset needs features"));
        }
        if features.iter().any(|row| row.len() != d) {
            return Err(Error::invalid("ragged feature rows"));
        }
        if m < 2 {
            return Err(Error::invalid("classification dataset needs at least two classes"));
        }
        if labels.iter().any(|&l| l >= m) {
            return Err(Error::invalid("label out of range"));
        }
        if features.len() < 2 * m {
            return Err(Error::invalid(format!(
                "need n >= 2m to split and fit (n = {}, m = {m})",
                features.len()
            )));
        }
        if class_labels.len() != m {
            return Err(Error::invalid("class label list must have one entry per class"));
        }
        Ok(ClassificationDataset { features, labels, m, class_labels })
    }

    pub fn n(&self) -> usize {
        self.features.len()
    }

    pub fn d(&self) -> usize {
        self.features[0].len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    fn take(&self, indices: &[usize]) -> ClassificationDataset {
        ClassificationDataset {
            features: indices.iter().map(|&i| self.features[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            m: self.m,
            class_labels: self.class_labels.clone(),
        }
    }
}

/// CSV loading options.
#[derive(Debug, Clone, Default)]
pub struct LoaderOptions {
    /// Column holding the class label; defaults to the last column.
    pub label_column: Option<usize>,
    /// Scale every feature column to [0, 1]. Off by default: policies and
    /// reward models are fit on raw features.
    pub min_max_scale: bool,
}

/// Loads a classification CSV: numeric feature columns plus one label column
/// (integer or string). Labels are re-indexed densely by first appearance.
/// A leading row whose feature cells do not parse as numbers is treated as a
/// header and skipped.
pub fn load_classification_csv(path: &Path, options: &LoaderOptions) -> Result<ClassificationDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;

    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut label_tokens: Vec<String> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(format!("{}: {e}", path.display())))?;
        let width = record.len();
        if width < 2 {
            return Err(Error::parse(format!(
                "{}: row {row_idx} has {width} columns; need features plus a label",
                path.display()
            )));
        }
        let label_col = options.label_column.unwrap_or(width - 1);
        if label_col >= width {
            return Err(Error::parse(format!(
                "{}: label column {label_col} out of range for {width} columns",
                path.display()
            )));
        }
        let mut row = Vec::with_capacity(width - 1);
        let mut bad_cell: Option<(usize, String)> = None;
        for (col, cell) in record.iter().enumerate() {
            if col == label_col {
                continue;
            }
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => row.push(v),
                _ => {
                    bad_cell = Some((col, cell.to_string()));
                    break;
                }
            }
        }
        match bad_cell {
            None => {
                features.push(row);
                label_tokens.push(record[label_col].to_string());
            }
            Some((col, cell)) if row_idx == 0 && features.is_empty() => {
                // Header sniffing: tolerate exactly one leading non-numeric row.
                log::debug!(
                    "{}: treating first row as a header (column {col} = {cell:?})",
                    path.display()
                );
            }
            Some((col, cell)) => {
                return Err(Error::parse(format!(
                    "{}: row {row_idx}, column {col}: non-numeric feature {cell:?}",
                    path.display()
                )));
            }
        }
    }
    if features.is_empty() {
        return Err(Error::parse(format!("{}: no data rows", path.display())));
    }
    let d = features[0].len();
    if features.iter().any(|r| r.len() != d) {
        return Err(Error::parse(format!("{}: ragged rows", path.display())));
    }

    // dense re-indexing by first appearance
    let mut class_labels: Vec<String> = Vec::new();
    let mut index: BTreeMap<String, usize> = BTreeMap::new();
    let labels: Vec<usize> = label_tokens
        .into_iter()
        .map(|token| {
            *index.entry(token.clone()).or_insert_with(|| {
                class_labels.push(token);
                class_labels.len() - 1
            })
        })
        .collect();
    if class_labels.len() < 2 {
        return Err(Error::parse(format!(
            "{}: only one class present; cannot build a bandit problem",
            path.display()
        )));
    }

    let mut features = features;
    if options.min_max_scale {
        min_max_scale(&mut features);
    }
    ClassificationDataset::new(features, labels, class_labels.len(), class_labels)
}

fn min_max_scale(features: &mut [Vec<f64>]) {
    let d = features[0].len();
    for col in 0..d {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in features.iter() {
            lo = lo.min(row[col]);
            hi = hi.max(row[col]);
        }
        let span = hi - lo;
        for row in features.iter_mut() {
            row[col] = if span > 0.0 { (row[col] - lo) / span } else { 0.0 };
        }
    }
}

/// An optional manifest mapping dataset names to files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub datasets: BTreeMap<String, ManifestEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    #[serde(default)]
    pub label_column: Option<usize>,
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Uniformly random split into two halves; the bandit half takes the
/// ceiling when n is odd.
pub fn split_halves<R: Rng + ?Sized>(
    dataset: &ClassificationDataset,
    rng: &mut R,
) -> (ClassificationDataset, ClassificationDataset) {
    let n = dataset.n();
    let n_bandit = n.div_ceil(2);
    let (bandit_idx, policy_idx) = crate::dataset::split_indices(n, n_bandit, rng);
    (dataset.take(&bandit_idx), dataset.take(&policy_idx))
}

const LOGISTIC_ITERATIONS: usize = 500;
const LOGISTIC_STEP: f64 = 0.1;
const LOGISTIC_L2: f64 = 1e-6;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z
    } else if z < -30.0 {
        z.exp()
    } else {
        z.exp().ln_1p()
    }
}

/// Mean regularized negative log-likelihood of a binary logistic model
/// without intercept.
fn logistic_objective(theta: &[f64], rows: &[&[f64]], targets: &[f64], l2: f64) -> f64 {
    let n = rows.len() as f64;
    let mut nll = 0.0;
    for (row, &y) in rows.iter().zip(targets) {
        let z: f64 = row.iter().zip(theta).map(|(x, t)| x * t).sum();
        nll += softplus(z) - y * z;
    }
    nll / n + 0.5 * l2 * theta.iter().map(|t| t * t).sum::<f64>()
}

fn logistic_gradient(theta: &[f64], rows: &[&[f64]], targets: &[f64], l2: f64) -> Vec<f64> {
    let n = rows.len() as f64;
    let d = theta.len();
    let mut grad = vec![0.0; d];
    for (row, &y) in rows.iter().zip(targets) {
        let z: f64 = row.iter().zip(theta).map(|(x, t)| x * t).sum();
        let err = sigmoid(z) - y;
        for (g, x) in grad.iter_mut().zip(row.iter()) {
            *g += err * x;
        }
    }
    for (g, t) in grad.iter_mut().zip(theta) {
        *g = *g / n + l2 * t;
    }
    grad
}

/// Full-batch gradient descent from zero: fixed iteration budget, fixed
/// initial step, step halved whenever an update would increase the
/// objective. Always ends at an objective no worse than the start.
fn logistic_fit(rows: &[&[f64]], targets: &[f64]) -> Vec<f64> {
    let d = rows[0].len();
    let mut theta = vec![0.0; d];
    let mut objective = logistic_objective(&theta, rows, targets, LOGISTIC_L2);
    let mut step = LOGISTIC_STEP;
    for _ in 0..LOGISTIC_ITERATIONS {
        let grad = logistic_gradient(&theta, rows, targets, LOGISTIC_L2);
        let proposal: Vec<f64> =
            theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
        let new_objective = logistic_objective(&proposal, rows, targets, LOGISTIC_L2);
        if new_objective.is_finite() && new_objective <= objective {
            theta = proposal;
            objective = new_objective;
        } else {
            step *= 0.5;
        }
    }
    theta
}

/// One-vs-rest logistic weights per class, fit on one bootstrap sample of
/// the policy half (drawn with replacement, same size). Classes absent from
/// the bootstrap keep zero weights. No intercept: policy scores are plain
/// inner products.
pub fn fit_logistic_models<R: Rng + ?Sized>(
    policy_half: &ClassificationDataset,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    let n = policy_half.n();
    let bootstrap: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let rows: Vec<&[f64]> =
        bootstrap.iter().map(|&i| policy_half.features()[i].as_slice()).collect();

    let mut weights = Vec::with_capacity(policy_half.m());
    for class in 0..policy_half.m() {
        let targets: Vec<f64> = bootstrap
            .iter()
            .map(|&i| (policy_half.labels()[i] == class) as u8 as f64)
            .collect();
        if targets.iter().all(|&y| y == 0.0) {
            weights.push(vec![0.0; policy_half.d()]);
            continue;
        }
        weights.push(logistic_fit(&rows, &targets));
    }
    weights
}

/// Wraps two weight sets as (logging, target) softmax policies.
pub fn make_policies(
    theta0: Vec<Vec<f64>>,
    theta1: Vec<Vec<f64>>,
    beta0: f64,
    beta1: f64,
) -> Result<(SoftmaxLinearPolicy, SoftmaxLinearPolicy)> {
    Ok((
        SoftmaxLinearPolicy::new(theta0, beta0)?,
        SoftmaxLinearPolicy::new(theta1, beta1)?,
    ))
}

/// Exact policy value on the bandit half: the indicator reward collapses the
/// action sum to the probability of the labeled action,
/// `(1/n) sum_i pi(y_i | x_i)`.
pub fn true_value(policy: &SoftmaxLinearPolicy, bandit_half: &ClassificationDataset) -> Result<f64> {
    let mut total = 0.0;
    for (x, &y) in bandit_half.features().iter().zip(bandit_half.labels()) {
        total += policy.action_prob(x, y)?;
    }
    Ok(total / bandit_half.n() as f64)
}

/// Logs one sample per bandit-half example: draw an action from the logging
/// policy by inverse CDF, record reward `1{action = label}` and the exact
/// propensity of the drawn action.
pub fn generate_logged<R: Rng + ?Sized>(
    bandit_half: &ClassificationDataset,
    logging: &SoftmaxLinearPolicy,
    rng: &mut R,
) -> Result<LoggedDataset> {
    let mut samples = Vec::with_capacity(bandit_half.n());
    for (x, &y) in bandit_half.features().iter().zip(bandit_half.labels()) {
        let probs = logging.action_probs(x)?;
        let action = sample_action(&probs, rng);
        samples.push(LoggedSample {
            context: x.clone(),
            action,
            reward: (action == y) as u8 as f64,
            logging_propensity: probs[action],
        });
    }
    LoggedDataset::new(samples, bandit_half.d(), bandit_half.m())
}

/// A fully materialized bandit problem.
#[derive(Debug, Clone)]
pub struct BanditProblem {
    pub bandit_half: ClassificationDataset,
    pub policy_half: ClassificationDataset,
    pub logging: SoftmaxLinearPolicy,
    pub target: SoftmaxLinearPolicy,
    pub true_value: f64,
    pub logged: LoggedDataset,
}

/// Runs the whole conversion pipeline deterministically from one seed.
pub fn build_problem(
    dataset: &ClassificationDataset,
    beta0: f64,
    beta1: f64,
    seed: Seed,
) -> Result<BanditProblem> {
    let (bandit_half, policy_half) = split_halves(dataset, &mut seed.child(0).rng());
    let theta0 = fit_logistic_models(&policy_half, &mut seed.child(1).rng());
    let theta1 = fit_logistic_models(&policy_half, &mut seed.child(2).rng());
    let (logging, target) = make_policies(theta0, theta1, beta0, beta1)?;
    let value = true_value(&target, &bandit_half)?;
    let logged = generate_logged(&bandit_half, &logging, &mut seed.child(3).rng())?;
    Ok(BanditProblem { bandit_half, policy_half, logging, target, true_value: value, logged })
}

/// Shrinks a problem by subsampling the bandit half without replacement
/// (clamped to its size), recomputing the true value and regenerating the
/// log on the subsample. Policies are reused.
pub fn subsample_problem(problem: &BanditProblem, size: usize, seed: Seed) -> Result<BanditProblem> {
    let n = problem.bandit_half.n();
    let keep = size.clamp(2, n);
    let (indices, _) = crate::dataset::split_indices(n, keep, &mut seed.child(0).rng());
    let bandit_half = problem.bandit_half.take(&indices);
    let value = true_value(&problem.target, &bandit_half)?;
    let logged = generate_logged(&bandit_half, &problem.logging, &mut seed.child(1).rng())?;
    Ok(BanditProblem {
        bandit_half,
        policy_half: problem.policy_half.clone(),
        logging: problem.logging.clone(),
        target: problem.target.clone(),
        true_value: value,
        logged,
    })
}

/// Characteristic (n, d, m) shapes of the named benchmark datasets, for
/// generating stand-ins when the real files are not on disk.
pub const DATASET_SHAPES: &[(&str, usize, usize, usize)] = &[
    ("ecoli", 336, 7, 8),
    ("glass", 214, 9, 6),
    ("letter", 20_000, 16, 26),
    ("optdigits", 5_620, 64, 10),
    ("page-blocks", 5_473, 10, 5),
    ("pendigits", 10_992, 16, 10),
    ("satimage", 6_435, 36, 6),
    ("vehicle", 846, 18, 4),
    ("yeast", 1_484, 8, 10),
];

pub fn standin_shape(name: &str) -> Option<(usize, usize, usize)> {
    DATASET_SHAPES
        .iter()
        .find(|(n, ..)| *n == name)
        .map(|&(_, n, d, m)| (n, d, m))
}

/// Class-center spread of the synthetic stand-ins, relative to unit sample
/// noise. Class structure is learnable but far from separable at the small
/// sample sizes these stand-ins imitate.
const SYNTHETIC_CENTER_SPREAD: f64 = 2.5;

/// A deterministic synthetic classification dataset imitating small tabular
/// benchmarks: Gaussian class clusters with unit noise and imbalanced
/// (harmonic) class sizes, so some actions are common and others rare.
/// Every class appears; rows are shuffled so splits stay class-mixed.
pub fn synthetic_classification(
    n: usize,
    d: usize,
    m: usize,
    seed: Seed,
) -> Result<ClassificationDataset> {
    if n < 2 * m {
        return Err(Error::invalid("synthetic dataset needs n >= 2m"));
    }
    let mut rng = seed.rng();
    let centers: Vec<Vec<f64>> = (0..m)
        .map(|_| {
            (0..d)
                .map(|_| SYNTHETIC_CENTER_SPREAD * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();

    // Harmonic class sizes, largest remainder, at least two rows per class.
    let total: f64 = (1..=m).map(|c| 1.0 / c as f64).sum();
    let mut counts: Vec<usize> = (1..=m)
        .map(|c| (((1.0 / c as f64) / total) * n as f64).floor().max(2.0) as usize)
        .collect();
    while counts.iter().sum::<usize>() > n {
        let i = counts.iter().enumerate().max_by_key(|(_, c)| **c).unwrap().0;
        counts[i] -= 1;
    }
    while counts.iter().sum::<usize>() < n {
        counts[0] += 1;
    }
    let mut labels: Vec<usize> =
        counts.iter().enumerate().flat_map(|(c, &k)| std::iter::repeat(c).take(k)).collect();
    use rand::seq::SliceRandom;
    labels.shuffle(&mut rng);

    let features: Vec<Vec<f64>> = labels
        .iter()
        .map(|&label| {
            centers[label]
                .iter()
                .map(|c| c + rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let class_labels = (0..m).map(|c| c.to_string()).collect();
    ClassificationDataset::new(features, labels, m, class_labels)
}

/// The stand-in for a named benchmark dataset, seeded stably from the name
/// so every run sees the same data.
pub fn standin_dataset(name: &str) -> Result<ClassificationDataset> {
    let (n, d, m) = standin_shape(name)
        .ok_or_else(|| Error::invalid(format!("unknown dataset name: {name}")))?;
    synthetic_classification(n, d, m, Seed::new(fnv1a(name.as_bytes())))
}

/// Writes a dataset as a label-last CSV, the loader's default layout.
pub fn write_classification_csv(dataset: &ClassificationDataset, path: &Path) -> Result<()> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for (row, &label) in dataset.features().iter().zip(dataset.labels()) {
        let mut record: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        record.push(dataset.class_labels()[label].clone());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}
