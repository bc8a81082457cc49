//! Softmax-linear policies over a discrete action set.
//!
//! A policy holds one weight vector per action and an inverse temperature.
//! Action scores are `beta * x . theta_a`; action probabilities are the
//! softmax of the scores. Inverse temperature 0 is the uniform policy,
//! large positive values concentrate on high-score actions and negative
//! values on low-score actions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LoggedDataset, LoggedSample};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxLinearPolicy {
    /// One weight vector of length `d` per action.
    weights: Vec<Vec<f64>>,
    inverse_temperature: f64,
}

impl SoftmaxLinearPolicy {
    pub fn new(weights: Vec<Vec<f64>>, inverse_temperature: f64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::invalid("policy needs at least one action"));
        }
        let d = weights[0].len();
        for (a, w) in weights.iter().enumerate() {
            if w.len() != d {
                return Err(Error::invalid(format!(
                    "action {a}: weight length {} != {d}",
                    w.len()
                )));
            }
            if w.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("action {a}: non-finite weight")));
            }
        }
        if !inverse_temperature.is_finite() {
            return Err(Error::invalid("inverse temperature must be finite"));
        }
        Ok(SoftmaxLinearPolicy { weights, inverse_temperature })
    }

    /// The uniform policy over `m` actions (zero weights, zero temperature).
    pub fn uniform(m: usize, d: usize) -> Result<Self> {
        SoftmaxLinearPolicy::new(vec![vec![0.0; d]; m], 0.0)
    }

    pub fn action_count(&self) -> usize {
        self.weights.len()
    }

    pub fn context_dim(&self) -> usize {
        self.weights[0].len()
    }

    pub fn inverse_temperature(&self) -> f64 {
        self.inverse_temperature
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    fn scores(&self, context: &[f64]) -> Result<Vec<f64>> {
        if context.len() != self.context_dim() {
            return Err(Error::invalid(format!(
                "context length {} != policy dimension {}",
                context.len(),
                self.context_dim()
            )));
        }
        Ok(self
            .weights
            .iter()
            .map(|w| {
                self.inverse_temperature
                    * w.iter().zip(context).map(|(wi, xi)| wi * xi).sum::<f64>()
            })
            .collect())
    }

    /// Action distribution at `context`: softmax over `beta * x . theta_a`.
    pub fn action_probs(&self, context: &[f64]) -> Result<Vec<f64>> {
        Ok(softmax_stable(&self.scores(context)?))
    }

    /// Probability of one action at `context`.
    pub fn action_prob(&self, context: &[f64], action: usize) -> Result<f64> {
        let probs = self.action_probs(context)?;
        probs
            .get(action)
            .copied()
            .ok_or_else(|| Error::invalid(format!("action {action} out of range")))
    }
}

/// Numerically stable softmax: subtracts the max score before
/// exponentiation, so adding a constant to every score leaves the output
/// unchanged.
pub fn softmax_stable(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Propensity weight `w(x, a) = pi(a | x) / pi0(a | x)` of one logged sample
/// under `target`, using the recorded logging propensity in the denominator.
pub fn propensity_weight(target: &SoftmaxLinearPolicy, sample: &LoggedSample) -> Result<f64> {
    if sample.logging_propensity <= 0.0 {
        return Err(Error::invalid("logging propensity must be positive"));
    }
    Ok(target.action_prob(&sample.context, sample.action)? / sample.logging_propensity)
}

/// Propensity weights of every logged sample under `target`.
pub fn propensity_weights(target: &SoftmaxLinearPolicy, dataset: &LoggedDataset) -> Result<Vec<f64>> {
    dataset.samples().iter().map(|s| propensity_weight(target, s)).collect()
}

/// Inverse-CDF draw from a categorical distribution.
pub fn sample_action<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    for (i, p) in probs.iter().enumerate() {
        cumulative += p;
        if u < cumulative {
            return i;
        }
    }
    probs.len() - 1
}
