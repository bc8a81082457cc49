//! Estimator selection.
//!
//! [`ocv_select`] runs cross-validated selection: it estimates the variance
//! of the validator and of each candidate on the full dataset, repeatedly
//! splits the data with a train fraction proportional to those variances,
//! scores each candidate by the mean of its squared losses against the
//! validator plus one standard deviation of those losses (a pessimistic
//! one-standard-error upper bound), and returns the winner's full-data
//! estimate.
//!
//! [`slope_select`] is the interval-overlap baseline: candidates are walked
//! in decreasing-variance order; at each step the candidate's confidence
//! interval must intersect every earlier interval, otherwise the walk stops
//! and the previous candidate wins.

use serde::{Deserialize, Serialize};

use crate::dataset::{mc_split, train_size, LoggedDataset};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimatorSpec};
use crate::policy::SoftmaxLinearPolicy;
use crate::rng::Seed;

/// Train-fraction clamp. Extreme variance ratios (a near-deterministic
/// candidate against a noisy validator, or vice versa) would otherwise
/// starve one side of the split.
pub const SPLIT_FRACTION_MIN: f64 = 0.1;
pub const SPLIT_FRACTION_MAX: f64 = 0.9;

/// Squared loss of an evaluated estimate against a validator estimate.
pub fn squared_loss(evaluated: f64, validator: f64) -> f64 {
    (validator - evaluated) * (validator - evaluated)
}

/// Mean split loss plus one standard deviation of the split losses.
/// Needs at least two losses for the standard deviation to exist.
pub fn one_se_score(losses: &[f64]) -> Result<(f64, f64)> {
    if losses.len() < 2 {
        return Err(Error::invalid("one_se_score needs at least two losses"));
    }
    let k = losses.len() as f64;
    let mean = losses.iter().sum::<f64>() / k;
    let spread: f64 = losses.iter().map(|l| (l - mean) * (l - mean)).sum();
    Ok((mean, mean + (spread / (k - 1.0)).sqrt()))
}

/// Train fraction `sigma_hat^2 / (sigma_hat^2 + sigma_tilde^2)`, clamped to
/// [[`SPLIT_FRACTION_MIN`], [`SPLIT_FRACTION_MAX`]]. Returns the fallback
/// fraction 0.5 with a degeneracy flag when both variances vanish.
pub fn train_fraction(sigma_hat_sq: f64, sigma_tilde_sq: f64) -> (f64, bool) {
    let total = sigma_hat_sq + sigma_tilde_sq;
    if total <= 0.0 {
        return (0.5, true);
    }
    ((sigma_hat_sq / total).clamp(SPLIT_FRACTION_MIN, SPLIT_FRACTION_MAX), false)
}

/// Options for [`ocv_select`].
#[derive(Debug, Clone)]
pub struct OcvOptions {
    /// Number of Monte Carlo splits (K).
    pub splits: usize,
    /// Permits a biased validator (DM); off by default since a biased
    /// validator drags selection toward estimators biased the same way.
    pub allow_biased_validator: bool,
}

impl Default for OcvOptions {
    fn default() -> Self {
        OcvOptions { splits: 10, allow_biased_validator: false }
    }
}

/// Per-candidate diagnostics of one selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateReport {
    pub spec: EstimatorSpec,
    /// Estimate on the full dataset.
    pub full_estimate: f64,
    /// Variance of that estimate (sigma_hat^2 for the split ratio).
    pub full_variance: f64,
    /// Squared losses against the validator, one per split (empty for the
    /// interval-overlap selector).
    pub split_losses: Vec<f64>,
    pub mean_loss: Option<f64>,
    pub one_se_score: Option<f64>,
    pub split_fraction: Option<f64>,
    pub train_size: Option<usize>,
    pub validation_size: Option<usize>,
    /// `[estimate - 2 sigma, estimate + 2 sigma]` for the interval walk.
    pub confidence_interval: Option<[f64; 2]>,
}

/// Result of a selection run: the chosen spec, its full-data estimate, and
/// everything needed to audit the decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen_index: usize,
    pub chosen: EstimatorSpec,
    pub final_estimate: f64,
    pub candidates: Vec<CandidateReport>,
    /// Validator variance on the full dataset (cross-validation only).
    pub validator_variance: Option<f64>,
    pub splits: Option<usize>,
    pub seed: Option<u64>,
    /// Set when any candidate fell back to the 0.5 split fraction because
    /// both variances were zero.
    pub degenerate_variance: bool,
}

/// Squared losses of one candidate against the validator over `splits`
/// Monte Carlo splits at a fixed train fraction. Split `k` always draws its
/// indices from `seed.child(k)`, so losses do not depend on evaluation
/// order. Both sides are evaluated end-to-end (each refits its own reward
/// model on its own side of the split).
pub fn candidate_split_losses(
    dataset: &LoggedDataset,
    target: &SoftmaxLinearPolicy,
    logging: Option<&SoftmaxLinearPolicy>,
    candidate: &EstimatorSpec,
    validator: &EstimatorSpec,
    fraction: f64,
    splits: usize,
    seed: Seed,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(splits);
    for k in 0..splits {
        let mut rng = seed.child(k as u64).rng();
        let pair = mc_split(dataset, fraction, &mut rng)?;
        let evaluated = estimate(candidate, &pair.train, target, logging)?.value;
        let validated = estimate(validator, &pair.validation, target, logging)?.value;
        losses.push(squared_loss(evaluated, validated));
    }
    Ok(losses)
}

/// Cross-validated estimator selection. See the module docs for the
/// procedure; diagnostics for every candidate are retained in the result.
pub fn ocv_select(
    dataset: &LoggedDataset,
    target: &SoftmaxLinearPolicy,
    logging: Option<&SoftmaxLinearPolicy>,
    candidates: &[EstimatorSpec],
    validator: &EstimatorSpec,
    options: &OcvOptions,
    seed: Seed,
) -> Result<SelectionResult> {
    if candidates.is_empty() {
        return Err(Error::invalid("ocv_select needs at least one candidate"));
    }
    if options.splits < 2 {
        return Err(Error::invalid("ocv_select needs K >= 2 splits"));
    }
    validator.validate()?;
    if !validator.kind.is_unbiased() && !options.allow_biased_validator {
        return Err(Error::invalid(format!(
            "validator {} is biased; pass allow_biased_validator to permit it",
            validator.kind
        )));
    }

    let n = dataset.n();
    let validator_variance = estimate(validator, dataset, target, logging)?.variance_of_mean;

    let mut reports = Vec::with_capacity(candidates.len());
    let mut degenerate = false;
    for (index, candidate) in candidates.iter().enumerate() {
        let full = estimate(candidate, dataset, target, logging)?;
        let (fraction, fell_back) = train_fraction(full.variance_of_mean, validator_variance);
        degenerate |= fell_back;

        let losses = candidate_split_losses(
            dataset,
            target,
            logging,
            candidate,
            validator,
            fraction,
            options.splits,
            seed.child(index as u64),
        )?;
        let (mean_loss, score) = one_se_score(&losses)?;
        let n_hat = train_size(n, fraction);
        reports.push(CandidateReport {
            spec: candidate.clone(),
            full_estimate: full.value,
            full_variance: full.variance_of_mean,
            split_losses: losses,
            mean_loss: Some(mean_loss),
            one_se_score: Some(score),
            split_fraction: Some(fraction),
            train_size: Some(n_hat),
            validation_size: Some(n - n_hat),
            confidence_interval: None,
        });
    }

    // argmin of the one-SE score; ties keep the earliest candidate
    let chosen_index = reports
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.one_se_score.unwrap().total_cmp(&b.1.one_se_score.unwrap()))
        .map(|(i, _)| i)
        .unwrap();

    Ok(SelectionResult {
        chosen_index,
        chosen: candidates[chosen_index].clone(),
        final_estimate: reports[chosen_index].full_estimate,
        candidates: reports,
        validator_variance: Some(validator_variance),
        splits: Some(options.splits),
        seed: Some(seed.value()),
        degenerate_variance: degenerate,
    })
}

/// Outcome of the interval-overlap walk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeState {
    /// `[estimate - 2 sigma, estimate + 2 sigma]` per candidate, in walk
    /// order.
    pub intervals: Vec<[f64; 2]>,
    pub chosen_index: usize,
}

/// Walks `(estimate, variance_of_mean)` pairs in the given order. Candidate
/// `j` must intersect every earlier interval (touching endpoints count);
/// the first violation stops the walk and selects candidate `j - 1`. With
/// no violation the last candidate wins.
pub fn slope_scan(points: &[(f64, f64)]) -> Result<SlopeState> {
    if points.is_empty() {
        return Err(Error::invalid("slope_scan needs at least one candidate"));
    }
    let intervals: Vec<[f64; 2]> = points
        .iter()
        .map(|&(value, variance)| {
            let sigma = variance.max(0.0).sqrt();
            [value - 2.0 * sigma, value + 2.0 * sigma]
        })
        .collect();

    let mut chosen_index = intervals.len() - 1;
    'walk: for j in 1..intervals.len() {
        for i in 0..j {
            let disjoint = intervals[j][0] > intervals[i][1] || intervals[j][1] < intervals[i][0];
            if disjoint {
                chosen_index = j - 1;
                break 'walk;
            }
        }
    }
    Ok(SlopeState { intervals, chosen_index })
}

/// Interval-overlap selection over candidates ordered by decreasing
/// variance. Each candidate is evaluated end-to-end on the full dataset and
/// given the confidence interval `[v - 2 sigma, v + 2 sigma]`.
pub fn slope_select(
    dataset: &LoggedDataset,
    target: &SoftmaxLinearPolicy,
    logging: Option<&SoftmaxLinearPolicy>,
    ordered_candidates: &[EstimatorSpec],
) -> Result<SelectionResult> {
    if ordered_candidates.is_empty() {
        return Err(Error::invalid("slope_select needs at least one candidate"));
    }
    let mut points = Vec::with_capacity(ordered_candidates.len());
    for candidate in ordered_candidates {
        let est = estimate(candidate, dataset, target, logging)?;
        points.push((est.value, est.variance_of_mean));
    }
    let state = slope_scan(&points)?;

    let candidates: Vec<CandidateReport> = ordered_candidates
        .iter()
        .zip(&points)
        .zip(&state.intervals)
        .map(|((spec, &(value, variance)), interval)| CandidateReport {
            spec: spec.clone(),
            full_estimate: value,
            full_variance: variance,
            split_losses: Vec::new(),
            mean_loss: None,
            one_se_score: None,
            split_fraction: None,
            train_size: None,
            validation_size: None,
            confidence_interval: Some(*interval),
        })
        .collect();

    Ok(SelectionResult {
        chosen_index: state.chosen_index,
        chosen: ordered_candidates[state.chosen_index].clone(),
        final_estimate: points[state.chosen_index].0,
        candidates,
        validator_variance: None,
        splits: None,
        seed: None,
        degenerate_variance: false,
    })
}

/// Selection regret: the chosen candidate's true loss minus the best
/// candidate's true loss in the same run.
pub fn selection_regret(chosen_loss: f64, candidate_losses: &[f64]) -> Result<f64> {
    if candidate_losses.is_empty() {
        return Err(Error::invalid("selection_regret needs candidate losses"));
    }
    let best = candidate_losses.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(chosen_loss - best)
}
