//! Per-action ridge regression for the direct-method reward estimate.
//!
//! One affine model per action, fit on the logged samples that took that
//! action, with contexts augmented by a constant intercept column. The
//! intercept coefficient carries the same penalty as the other weights.
//! Actions with no training samples fall back to predicting the global mean
//! reward of the training set.

use nalgebra::{DMatrix, DVector};

use crate::dataset::LoggedDataset;
use crate::error::{Error, Result};
use crate::policy::SoftmaxLinearPolicy;

/// Ridge coefficient used throughout the benchmark experiments.
pub const DEFAULT_RIDGE_REGULARIZATION: f64 = 1e-3;

/// A fitted reward model: `m` weight vectors of length `d + 1` whose last
/// entry is the intercept. Predictions are clamped to [0, 1] since rewards
/// are indicator-valued.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    per_action_weights: Vec<Vec<f64>>,
    regularization: f64,
    d: usize,
}

impl RewardModel {
    /// Builds a model directly from `m` weight vectors of length `d + 1`.
    pub fn from_weights(per_action_weights: Vec<Vec<f64>>) -> Result<Self> {
        if per_action_weights.is_empty() {
            return Err(Error::invalid("reward model needs at least one action"));
        }
        let len = per_action_weights[0].len();
        if len == 0 {
            return Err(Error::invalid("weight vectors need at least an intercept"));
        }
        if per_action_weights.iter().any(|w| w.len() != len) {
            return Err(Error::invalid("weight vectors must share one length"));
        }
        Ok(RewardModel { per_action_weights, regularization: 0.0, d: len - 1 })
    }

    pub fn fit_ridge(dataset: &LoggedDataset, regularization: f64) -> Result<Self> {
        if !(regularization > 0.0) {
            return Err(Error::invalid("ridge regularization must be positive"));
        }
        let d = dataset.d();
        let m = dataset.m();
        let n = dataset.n();
        let global_mean = if n == 0 {
            0.0
        } else {
            dataset.samples().iter().map(|s| s.reward).sum::<f64>() / n as f64
        };

        let mut per_action_weights = Vec::with_capacity(m);
        for action in 0..m {
            let rows: Vec<(&[f64], f64)> = dataset
                .samples()
                .iter()
                .filter(|s| s.action == action)
                .map(|s| (s.context.as_slice(), s.reward))
                .collect();
            if rows.is_empty() {
                // Zero weights plus a global-mean intercept reproduce the
                // fallback as an ordinary affine prediction.
                let mut w = vec![0.0; d + 1];
                w[d] = global_mean;
                per_action_weights.push(w);
                continue;
            }
            let xs: Vec<Vec<f64>> = rows
                .iter()
                .map(|(x, _)| {
                    let mut row = x.to_vec();
                    row.push(1.0);
                    row
                })
                .collect();
            let ys: Vec<f64> = rows.iter().map(|(_, y)| *y).collect();
            per_action_weights.push(ridge_solve(&xs, &ys, regularization)?);
        }
        Ok(RewardModel { per_action_weights, regularization, d })
    }

    pub fn action_count(&self) -> usize {
        self.per_action_weights.len()
    }

    pub fn context_dim(&self) -> usize {
        self.d
    }

    pub fn regularization(&self) -> f64 {
        self.regularization
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.per_action_weights
    }

    /// Affine prediction for `(context, action)`, clamped to [0, 1].
    pub fn predict(&self, context: &[f64], action: usize) -> Result<f64> {
        let w = self
            .per_action_weights
            .get(action)
            .ok_or_else(|| Error::invalid(format!("action {action} out of range")))?;
        if context.len() != self.d {
            return Err(Error::invalid(format!(
                "context length {} != model dimension {}",
                context.len(),
                self.d
            )));
        }
        let raw: f64 =
            w[..self.d].iter().zip(context).map(|(wi, xi)| wi * xi).sum::<f64>() + w[self.d];
        Ok(raw.clamp(0.0, 1.0))
    }

    /// `sum_a pi(a | x) * predict(x, a)` under `policy`.
    pub fn expected_reward(&self, policy: &SoftmaxLinearPolicy, context: &[f64]) -> Result<f64> {
        if policy.action_count() != self.action_count() {
            return Err(Error::invalid(format!(
                "policy has {} actions, model has {}",
                policy.action_count(),
                self.action_count()
            )));
        }
        let probs = policy.action_probs(context)?;
        let mut total = 0.0;
        for (action, p) in probs.iter().enumerate() {
            total += p * self.predict(context, action)?;
        }
        Ok(total)
    }
}

/// Solves `(X^T X + lambda I) w = X^T y` for one action group via Cholesky.
/// Rows are used exactly as given; callers append the intercept column.
pub fn ridge_solve(rows: &[Vec<f64>], targets: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if rows.is_empty() {
        return Err(Error::invalid("ridge_solve needs at least one row"));
    }
    if rows.len() != targets.len() {
        return Err(Error::invalid("ridge_solve: rows and targets disagree"));
    }
    let p = rows[0].len();
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::invalid("ridge_solve: ragged rows"));
    }
    if !(lambda > 0.0) {
        return Err(Error::invalid("ridge_solve: lambda must be positive"));
    }

    let mut gram = DMatrix::<f64>::zeros(p, p);
    let mut moment = DVector::<f64>::zeros(p);
    for (row, &y) in rows.iter().zip(targets) {
        for i in 0..p {
            moment[i] += row[i] * y;
            for j in i..p {
                gram[(i, j)] += row[i] * row[j];
            }
        }
    }
    for i in 0..p {
        for j in 0..i {
            gram[(i, j)] = gram[(j, i)];
        }
        gram[(i, i)] += lambda;
    }

    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::degenerate("ridge normal equations are not positive definite"))?;
    let solution = chol.solve(&moment);
    Ok(solution.iter().copied().collect())
}
