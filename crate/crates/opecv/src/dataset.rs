//! Logged bandit datasets, per-sample value vectors, and random splits.
//!
//! A [`LoggedDataset`] holds the (context, action, reward, logging propensity)
//! tuples every estimator consumes. [`PerSampleValues`] carries the per-sample
//! contributions whose mean is a value estimate and whose spread yields the
//! variance of that estimate. [`mc_split`] produces the repeated random
//! train/validation partitions used by Monte Carlo cross-validation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One logged interaction: context features, the action the logging policy
/// took, the observed reward, and the propensity the logging policy recorded
/// for that action at logging time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedSample {
    pub context: Vec<f64>,
    pub action: usize,
    /// Reward in [0, 1].
    pub reward: f64,
    /// pi0(action | context) as recorded at logging time; must be positive
    /// so propensity ratios stay finite.
    pub logging_propensity: f64,
}

/// An immutable logged dataset with fixed context dimension `d` and action
/// count `m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetWire", into = "DatasetWire")]
pub struct LoggedDataset {
    samples: Vec<LoggedSample>,
    d: usize,
    m: usize,
}

impl LoggedDataset {
    /// Validates every sample against the dataset dimensions.
    pub fn new(samples: Vec<LoggedSample>, d: usize, m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::invalid("action count m must be positive"));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.context.len() != d {
                return Err(Error::invalid(format!(
                    "sample {i}: context length {} != d = {d}",
                    s.context.len()
                )));
            }
            if s.action >= m {
                return Err(Error::invalid(format!(
                    "sample {i}: action {} out of range [0, {m})",
                    s.action
                )));
            }
            if !(0.0..=1.0).contains(&s.reward) || !s.reward.is_finite() {
                return Err(Error::invalid(format!(
                    "sample {i}: reward {} outside [0, 1]",
                    s.reward
                )));
            }
            if !(s.logging_propensity > 0.0 && s.logging_propensity <= 1.0) {
                return Err(Error::invalid(format!(
                    "sample {i}: logging propensity {} outside (0, 1]",
                    s.logging_propensity
                )));
            }
            if s.context.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid(format!("sample {i}: non-finite context")));
            }
        }
        Ok(LoggedDataset { samples, d, m })
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Context dimension.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Action count.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn samples(&self) -> &[LoggedSample] {
        &self.samples
    }

    /// A new dataset holding clones of the samples at `indices`.
    pub fn subset(&self, indices: &[usize]) -> Result<LoggedDataset> {
        let mut samples = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = self
                .samples
                .get(i)
                .ok_or_else(|| Error::invalid(format!("subset index {i} out of range")))?;
            samples.push(s.clone());
        }
        // Samples were already validated.
        Ok(LoggedDataset { samples, d: self.d, m: self.m })
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Columnar JSON wire format:
/// `{"n", "d", "m", "contexts", "actions", "rewards", "logging_propensities"}`.
#[derive(Serialize, Deserialize)]
struct DatasetWire {
    n: usize,
    d: usize,
    m: usize,
    contexts: Vec<Vec<f64>>,
    actions: Vec<usize>,
    rewards: Vec<f64>,
    logging_propensities: Vec<f64>,
}

impl From<LoggedDataset> for DatasetWire {
    fn from(ds: LoggedDataset) -> Self {
        let n = ds.n();
        let mut contexts = Vec::with_capacity(n);
        let mut actions = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        let mut logging_propensities = Vec::with_capacity(n);
        for s in ds.samples {
            contexts.push(s.context);
            actions.push(s.action);
            rewards.push(s.reward);
            logging_propensities.push(s.logging_propensity);
        }
        DatasetWire { n, d: ds.d, m: ds.m, contexts, actions, rewards, logging_propensities }
    }
}

impl TryFrom<DatasetWire> for LoggedDataset {
    type Error = Error;

    fn try_from(w: DatasetWire) -> Result<Self> {
        if w.contexts.len() != w.n
            || w.actions.len() != w.n
            || w.rewards.len() != w.n
            || w.logging_propensities.len() != w.n
        {
            return Err(Error::parse("dataset JSON: column lengths disagree with n"));
        }
        let samples = w
            .contexts
            .into_iter()
            .zip(w.actions)
            .zip(w.rewards)
            .zip(w.logging_propensities)
            .map(|(((context, action), reward), logging_propensity)| LoggedSample {
                context,
                action,
                reward,
                logging_propensity,
            })
            .collect();
        LoggedDataset::new(samples, w.d, w.m)
    }
}

/// A disjoint train/validation partition of a parent dataset.
#[derive(Debug, Clone)]
pub struct SplitPair {
    pub train: LoggedDataset,
    pub validation: LoggedDataset,
}

/// Per-sample contributions of a value estimator. The mean over entries is
/// the value estimate; their spread yields the variance of that mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PerSampleValues {
    values: Vec<f64>,
}

impl PerSampleValues {
    pub fn new(values: Vec<f64>) -> Self {
        PerSampleValues { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(mean, variance_of_mean)` where the variance of the mean of n i.i.d.
    /// contributions is estimated as `(1/n^2) * sum((v_i - mean)^2)`.
    pub fn mean_and_variance(&self) -> Result<(f64, f64)> {
        mean_and_variance(self)
    }
}

/// See [`PerSampleValues::mean_and_variance`].
pub fn mean_and_variance(values: &PerSampleValues) -> Result<(f64, f64)> {
    let v = values.values();
    if v.is_empty() {
        return Err(Error::invalid("mean_and_variance of an empty vector"));
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let spread: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((mean, spread / (n * n)))
}

/// Training-set size for a fraction: round half up, then clamp so both sides
/// stay non-empty.
pub fn train_size(n: usize, train_fraction: f64) -> usize {
    let raw = (train_fraction * n as f64 + 0.5).floor() as i64;
    raw.clamp(1, n as i64 - 1) as usize
}

/// Uniformly random disjoint index partition with `n_hat` training indices.
/// Both halves are returned in ascending order.
pub fn split_indices<R: Rng + ?Sized>(n: usize, n_hat: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..n).collect();
    let (head, _) = indices.partial_shuffle(rng, n_hat);
    let mut train: Vec<usize> = head.to_vec();
    train.sort_unstable();
    let in_train: std::collections::HashSet<usize> = train.iter().copied().collect();
    let validation: Vec<usize> = (0..n).filter(|i| !in_train.contains(i)).collect();
    (train, validation)
}

/// One Monte Carlo cross-validation split: a uniformly random partition into
/// a training set of size `train_size(n, train_fraction)` and the remainder.
/// The same RNG state reproduces the same split bit-exactly.
pub fn mc_split<R: Rng + ?Sized>(
    dataset: &LoggedDataset,
    train_fraction: f64,
    rng: &mut R,
) -> Result<SplitPair> {
    let n = dataset.n();
    if n < 2 {
        return Err(Error::invalid(format!("mc_split needs n >= 2, got n = {n}")));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n_hat = train_size(n, train_fraction);
    let (train_idx, val_idx) = split_indices(n, n_hat, rng);
    Ok(SplitPair {
        train: dataset.subset(&train_idx)?,
        validation: dataset.subset(&val_idx)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Seed;
    use proptest::prelude::*;

    fn tiny_dataset(n: usize) -> LoggedDataset {
        let samples = (0..n)
            .map(|i| LoggedSample {
                context: vec![i as f64],
                action: i % 2,
                reward: if i % 3 == 0 { 1.0 } else { 0.0 },
                logging_propensity: 0.5,
            })
            .collect();
        LoggedDataset::new(samples, 1, 2).unwrap()
    }

    #[test]
    fn mean_and_variance_hand_checked() {
        let (mean, var) = PerSampleValues::new(vec![0.0, 1.0]).mean_and_variance().unwrap();
        assert_eq!(mean, 0.5);
        assert_eq!(var, 0.125);
    }

    #[test]
    fn constant_vector_has_zero_spread() {
        let (mean, var) = PerSampleValues::new(vec![0.3; 7]).mean_and_variance().unwrap();
        assert!((mean - 0.3).abs() < 1e-15);
        assert_eq!(var, 0.0);
    }

    #[test]
    fn empty_vector_rejected() {
        assert!(PerSampleValues::new(vec![]).mean_and_variance().is_err());
    }

    // Brute-force oracle: the variance of the mean of n i.i.d. draws from the
    // empirical distribution of v equals the population variance of v over n.
    // Enumerating all n^n resamples of a 3-element vector computes that
    // population variance of resampled means from first principles.
    #[test]
    fn variance_matches_resampling_oracle_for_n3() {
        let v = [0.2, 0.9, 0.4];
        let n = v.len();
        let mut means = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    means.push((v[i] + v[j] + v[k]) / 3.0);
                }
            }
        }
        let grand = means.iter().sum::<f64>() / means.len() as f64;
        let oracle =
            means.iter().map(|m| (m - grand) * (m - grand)).sum::<f64>() / means.len() as f64;

        let (_, var) = PerSampleValues::new(v.to_vec()).mean_and_variance().unwrap();
        assert!((var - oracle).abs() < 1e-15, "var {var} vs oracle {oracle}");
    }

    proptest! {
        // mean_and_variance(c * values) = (c * mean, c^2 * variance)
        #[test]
        fn scaling_property(
            values in proptest::collection::vec(-1.0e3..1.0e3f64, 1..40),
            c in -50.0..50.0f64,
        ) {
            let (mean, var) = PerSampleValues::new(values.clone()).mean_and_variance().unwrap();
            let scaled: Vec<f64> = values.iter().map(|v| c * v).collect();
            let (mean_s, var_s) = PerSampleValues::new(scaled).mean_and_variance().unwrap();
            let tol = 1e-9 * (1.0 + mean.abs() * c.abs());
            prop_assert!((mean_s - c * mean).abs() < tol);
            let tol_v = 1e-9 * (1.0 + var * c * c);
            prop_assert!((var_s - c * c * var).abs() < tol_v);
        }
    }

    #[test]
    fn split_sizes_round_half_up() {
        let ds = tiny_dataset(10);
        let pair = mc_split(&ds, 0.75, &mut Seed::new(1).rng()).unwrap();
        assert_eq!(pair.train.n(), 8);
        assert_eq!(pair.validation.n(), 2);

        let ds = tiny_dataset(100);
        let pair = mc_split(&ds, 0.75, &mut Seed::new(1).rng()).unwrap();
        assert_eq!((pair.train.n(), pair.validation.n()), (75, 25));
    }

    #[test]
    fn split_clamps_to_nondegenerate() {
        let ds = tiny_dataset(5);
        let pair = mc_split(&ds, 0.999, &mut Seed::new(2).rng()).unwrap();
        assert_eq!((pair.train.n(), pair.validation.n()), (4, 1));
        let pair = mc_split(&ds, 1e-9, &mut Seed::new(2).rng()).unwrap();
        assert_eq!((pair.train.n(), pair.validation.n()), (1, 4));
    }

    #[test]
    fn split_rejects_tiny_datasets() {
        assert!(mc_split(&tiny_dataset(1), 0.5, &mut Seed::new(0).rng()).is_err());
    }

    #[test]
    fn same_seed_same_split() {
        let ds = tiny_dataset(30);
        let a = mc_split(&ds, 0.6, &mut Seed::new(9).rng()).unwrap();
        let b = mc_split(&ds, 0.6, &mut Seed::new(9).rng()).unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.validation, b.validation);
    }

    #[test]
    fn splits_partition_for_many_seeds() {
        for seed in 0..1000u64 {
            let (train, val) = split_indices(17, 11, &mut Seed::new(seed).rng());
            assert_eq!(train.len(), 11);
            assert_eq!(val.len(), 6);
            let mut all: Vec<usize> = train.iter().chain(val.iter()).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..17).collect::<Vec<_>>());
        }
    }

    #[test]
    fn json_round_trip_and_schema() {
        let ds = tiny_dataset(4);
        let text = ds.to_json_string().unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let obj = value.as_object().unwrap();
        let mut keys: Vec<&String> = obj.keys().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["actions", "contexts", "d", "logging_propensities", "m", "n", "rewards"]
        );
        let back = LoggedDataset::from_json_str(&text).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn constructor_rejects_bad_samples() {
        let bad_propensity = vec![LoggedSample {
            context: vec![0.0],
            action: 0,
            reward: 1.0,
            logging_propensity: 0.0,
        }];
        assert!(LoggedDataset::new(bad_propensity, 1, 2).is_err());

        let bad_reward = vec![LoggedSample {
            context: vec![0.0],
            action: 0,
            reward: 1.5,
            logging_propensity: 0.5,
        }];
        assert!(LoggedDataset::new(bad_reward, 1, 2).is_err());

        let bad_dim = vec![LoggedSample {
            context: vec![0.0, 1.0],
            action: 0,
            reward: 1.0,
            logging_propensity: 0.5,
        }];
        assert!(LoggedDataset::new(bad_dim, 1, 2).is_err());

        let bad_action = vec![LoggedSample {
            context: vec![0.0],
            action: 2,
            reward: 1.0,
            logging_propensity: 0.5,
        }];
        assert!(LoggedDataset::new(bad_action, 1, 2).is_err());
    }
}
