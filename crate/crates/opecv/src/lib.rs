//! Off-policy evaluation workbench for contextual bandits.
//!
//! The crate has three layers:
//!
//! - Core types and estimators: [`dataset`], [`policy`], [`reward_model`],
//!   and [`estimators`] implement logged datasets, softmax-linear policies,
//!   the ridge reward model, and ten value estimators (IPS, DM, DR, and
//!   seven tunable variants), all producing per-sample contribution vectors
//!   with a matching variance estimate.
//! - Selection and tuning: [`selection`] implements cross-validated
//!   estimator selection with variance-proportional Monte Carlo splits and a
//!   one-standard-error rule, plus the interval-overlap (Lepski-style)
//!   baseline; [`tuning`] provides the default hyper-parameter grids and the
//!   estimator-specific theory tuners.
//! - Benchmarking: [`banditgen`] converts classification datasets into
//!   bandit problems with known ground-truth policy values, and [`harness`]
//!   orchestrates condition grids, metrics (MSE, selection regret), bootstrap
//!   confidence intervals, and CSV output.

pub mod banditgen;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod policy;
pub mod reward_model;
pub mod rng;
pub mod selection;
pub mod tuning;

pub use dataset::{mc_split, mean_and_variance, LoggedDataset, LoggedSample, PerSampleValues, SplitPair};
pub use error::{Error, Result};
pub use estimators::{estimate, Estimate, EstimatorKind, EstimatorSpec};
pub use policy::SoftmaxLinearPolicy;
pub use reward_model::RewardModel;
pub use rng::Seed;
pub use selection::{ocv_select, slope_select, OcvOptions, SelectionResult};
