//! Shared test fixtures: a small synthetic bandit with an analytically
//! known policy value, plus helpers for Monte Carlo statistics.

#![allow(dead_code)]

use rand::Rng;

use opecv::banditgen::{build_problem, standin_dataset, BanditProblem};
use opecv::dataset::{LoggedDataset, LoggedSample};
use opecv::policy::SoftmaxLinearPolicy;
use opecv::reward_model::RewardModel;
use opecv::rng::Seed;

/// A 3-action bandit over two one-hot contexts. Policies are exact softmax
/// representations of chosen categorical distributions (log-probability
/// weights with inverse temperature 1), so the true policy value is
/// computable from first principles.
pub struct SyntheticBandit {
    pub contexts: Vec<Vec<f64>>,
    /// Mean rewards per (context, action).
    pub mean_rewards: Vec<Vec<f64>>,
    pub logging: SoftmaxLinearPolicy,
    pub target: SoftmaxLinearPolicy,
}

fn log_prob_policy(probs_per_context: &[[f64; 3]; 2]) -> SoftmaxLinearPolicy {
    // weight vector per action: [ln p(a | e1), ln p(a | e2)]
    let weights = (0..3)
        .map(|a| vec![probs_per_context[0][a].ln(), probs_per_context[1][a].ln()])
        .collect();
    SoftmaxLinearPolicy::new(weights, 1.0).unwrap()
}

impl SyntheticBandit {
    /// Logging policy rarely plays the actions the target loves; the max
    /// propensity weight is 0.9 / 0.05 = 18 and high-weight samples carry
    /// high mean rewards, so clipping bites hard.
    pub fn skewed() -> Self {
        let logging = log_prob_policy(&[[0.05, 0.475, 0.475], [0.475, 0.05, 0.475]]);
        let target = log_prob_policy(&[[0.9, 0.05, 0.05], [0.05, 0.9, 0.05]]);
        SyntheticBandit {
            contexts: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            mean_rewards: vec![vec![0.9, 0.1, 0.5], vec![0.2, 0.8, 0.4]],
            logging,
            target,
        }
    }

    /// Bounded weights (max 3): loss distributions stay light-tailed.
    pub fn mild() -> Self {
        let logging = log_prob_policy(&[[0.2, 0.4, 0.4], [0.4, 0.2, 0.4]]);
        let target = log_prob_policy(&[[0.6, 0.2, 0.2], [0.2, 0.6, 0.2]]);
        SyntheticBandit {
            contexts: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            mean_rewards: vec![vec![0.9, 0.1, 0.5], vec![0.2, 0.8, 0.4]],
            logging,
            target,
        }
    }

    /// Exact value of `policy`: contexts are equiprobable, so
    /// `V = (1/2) sum_x sum_a pi(a|x) r(x, a)`.
    pub fn true_value_of(&self, policy: &SoftmaxLinearPolicy) -> f64 {
        let mut value = 0.0;
        for (x, rewards) in self.contexts.iter().zip(&self.mean_rewards) {
            let probs = policy.action_probs(x).unwrap();
            for (p, r) in probs.iter().zip(rewards) {
                value += p * r;
            }
        }
        value / self.contexts.len() as f64
    }

    pub fn true_value(&self) -> f64 {
        self.true_value_of(&self.target)
    }

    /// The exact mean-reward model: per-action weights reproduce
    /// `r(x, a)` on the one-hot contexts with a zero intercept.
    pub fn true_reward_model(&self) -> RewardModel {
        let weights = (0..3)
            .map(|a| vec![self.mean_rewards[0][a], self.mean_rewards[1][a], 0.0])
            .collect();
        RewardModel::from_weights(weights).unwrap()
    }

    /// Draws a fresh logged dataset: uniform context, action from the
    /// logging policy, Bernoulli reward at the pair's mean.
    pub fn generate<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> LoggedDataset {
        let mut samples = Vec::with_capacity(n);
        for _ in 0..n {
            let cx = rng.gen_range(0..self.contexts.len());
            let context = self.contexts[cx].clone();
            let probs = self.logging.action_probs(&context).unwrap();
            let action = opecv::policy::sample_action(&probs, rng);
            let reward = (rng.gen::<f64>() < self.mean_rewards[cx][action]) as u8 as f64;
            samples.push(LoggedSample {
                context,
                action,
                reward,
                logging_propensity: probs[action],
            });
        }
        LoggedDataset::new(samples, 2, 3).unwrap()
    }
}

/// Builds a bandit problem from a named stand-in dataset.
pub fn standin_problem(name: &str, beta0: f64, beta1: f64, seed: Seed) -> BanditProblem {
    let dataset = standin_dataset(name).unwrap();
    build_problem(&dataset, beta0, beta1, seed).unwrap()
}

/// Mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Population variance of a sample.
pub fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}
