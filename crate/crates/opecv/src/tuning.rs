//! Hyper-parameter grids and estimator-specific theory-based tuners.
//!
//! Default grids follow the conventions used throughout the benchmark:
//! 30 geometrically spaced values between the 0.05 and 0.95 propensity-weight
//! quantiles for TruncatedIPS / SwitchDR / CAB / DRps (TruncatedIPS also
//! inserts the theory value `sqrt(n)`), `[0.01*w05^2, 100*w95^2]` for DRos,
//! `sigmoid(h)` over 30 linear `h` in [-10, 10] for IPS-lambda, and
//! `{2, 4, 8, 16, 32}` clusters for GroupIPS.
//!
//! The theory tuners minimize `Var + Bias^2` surrogates on a grid (SwitchDR,
//! DRos/DRps), take `sqrt(n)` directly (TruncatedIPS), or solve the
//! subgaussian calibration equation by bisection (IPS-lambda).

use crate::dataset::LoggedDataset;
use crate::error::{Error, Result};
use crate::estimators::{
    dr_shrink_contributions, switch_dr_contributions, EstimatorKind, EstimatorSpec, ShrinkMode,
};
use crate::policy::{propensity_weights, SoftmaxLinearPolicy};
use crate::reward_model::RewardModel;

/// Direction in which estimator variance moves along a grid's value list.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarianceOrder {
    /// Larger hyper-parameter values give higher variance (clipping and
    /// shrinkage families: looser caps admit more raw weight).
    IncreasesWithValue,
    /// Larger hyper-parameter values give lower variance (IPS-lambda: the
    /// correction pulls weights toward 1).
    DecreasesWithValue,
}

/// An ordered hyper-parameter grid for one estimator kind.
#[derive(Debug, Clone)]
pub struct HyperGrid {
    pub kind: EstimatorKind,
    /// Strictly increasing values.
    pub values: Vec<f64>,
    pub variance_order: VarianceOrder,
}

/// Grid resolution shared by the default grids.
pub const DEFAULT_GRID_SIZE: usize = 30;

/// `count` geometrically spaced values from `lo` to `hi`, endpoints exact.
pub fn geometric_grid(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0) || !lo.is_finite() {
        return Err(Error::invalid("geometric grid needs lo > 0"));
    }
    if !(hi > lo) || !hi.is_finite() {
        return Err(Error::invalid("geometric grid needs hi > lo"));
    }
    if count < 2 {
        return Err(Error::invalid("geometric grid needs at least 2 values"));
    }
    let ratio = hi / lo;
    let mut values: Vec<f64> = (0..count)
        .map(|j| lo * ratio.powf(j as f64 / (count - 1) as f64))
        .collect();
    values[0] = lo;
    values[count - 1] = hi;
    Ok(values)
}

/// Empirical quantile of the taken-action propensity weights under `target`,
/// nearest-rank method: the element at rank `ceil(q * n)` (1-based) of the
/// sorted weights.
pub fn weight_quantile(
    dataset: &LoggedDataset,
    target: &SoftmaxLinearPolicy,
    q: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid("quantile level must lie in [0, 1]"));
    }
    let mut weights = propensity_weights(target, dataset)?;
    if weights.is_empty() {
        return Err(Error::invalid("weight_quantile of an empty dataset"));
    }
    weights.sort_by(f64::total_cmp);
    let n = weights.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    Ok(weights[rank - 1])
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn quantile_bounds(dataset: &LoggedDataset, target: &SoftmaxLinearPolicy) -> Result<(f64, f64)> {
    let w05 = weight_quantile(dataset, target, 0.05)?;
    let w95 = weight_quantile(dataset, target, 0.95)?;
    if !(w05 > 0.0) {
        return Err(Error::degenerate(
            "0.05 weight quantile is zero; cannot build a geometric grid",
        ));
    }
    Ok((w05, w95))
}

fn quantile_grid(dataset: &LoggedDataset, target: &SoftmaxLinearPolicy) -> Result<Vec<f64>> {
    let (w05, w95) = quantile_bounds(dataset, target)?;
    if w95 <= w05 {
        // Degenerate weight spread (e.g. target equals logging); a
        // single-point grid keeps tuners well-defined.
        return Ok(vec![w05]);
    }
    geometric_grid(w05, w95, DEFAULT_GRID_SIZE)
}

/// The default hyper-parameter grid for a tunable estimator kind.
pub fn default_grid(
    kind: EstimatorKind,
    dataset: &LoggedDataset,
    target: &SoftmaxLinearPolicy,
) -> Result<HyperGrid> {
    let (values, variance_order) = match kind {
        EstimatorKind::TruncatedIps => {
            let mut values = quantile_grid(dataset, target)?;
            let theory = theory_truncation(dataset.n());
            // Theory-suggested clip joins the grid at its sorted position.
            match values.binary_search_by(|v| v.total_cmp(&theory)) {
                Ok(_) => {}
                Err(pos) => values.insert(pos, theory),
            }
            (values, VarianceOrder::IncreasesWithValue)
        }
        EstimatorKind::SwitchDr | EstimatorKind::Cab | EstimatorKind::DrPs => {
            (quantile_grid(dataset, target)?, VarianceOrder::IncreasesWithValue)
        }
        EstimatorKind::DrOs => {
            let (w05, w95) = quantile_bounds(dataset, target)?;
            let lo = 0.01 * w05 * w05;
            let hi = 100.0 * w95 * w95;
            (geometric_grid(lo, hi, DEFAULT_GRID_SIZE)?, VarianceOrder::IncreasesWithValue)
        }
        EstimatorKind::IpsLambda => {
            let values = (0..DEFAULT_GRID_SIZE)
                .map(|j| {
                    let h = -10.0 + 20.0 * j as f64 / (DEFAULT_GRID_SIZE - 1) as f64;
                    sigmoid(h)
                })
                .collect();
            (values, VarianceOrder::DecreasesWithValue)
        }
        EstimatorKind::GroupIps => {
            (vec![2.0, 4.0, 8.0, 16.0, 32.0], VarianceOrder::IncreasesWithValue)
        }
        other => return Err(Error::invalid(format!("{other} has no hyper-parameter grid"))),
    };
    Ok(HyperGrid { kind, values, variance_order })
}

/// Wraps every grid value as a selection candidate, in grid order.
pub fn candidates_from_grid(grid: &HyperGrid) -> Result<Vec<EstimatorSpec>> {
    if grid.values.is_empty() {
        return Err(Error::invalid("empty hyper-parameter grid"));
    }
    grid.values.iter().map(|&v| EstimatorSpec::new(grid.kind, Some(v))).collect()
}

/// Grid candidates ordered by decreasing estimator variance, the order the
/// interval-overlap selector walks.
pub fn slope_ordered_candidates(grid: &HyperGrid) -> Result<Vec<EstimatorSpec>> {
    let mut specs = candidates_from_grid(grid)?;
    if grid.variance_order == VarianceOrder::IncreasesWithValue {
        specs.reverse();
    }
    Ok(specs)
}

/// Theory-suggested truncation constant `sqrt(n)`.
pub fn theory_truncation(n: usize) -> f64 {
    (n as f64).sqrt()
}

/// SwitchDR tuning: minimizes `Var + Bias^2` over the grid, where the bias
/// conservatively charges the maximal reward to every action whose weight
/// exceeds the threshold: `Bias = (1/n) sum_i sum_a pi(a|x_i) 1{w(x_i,a) > tau}`
/// (maximal reward 1). Evaluating the indicator for every action requires
/// the full logging policy. Ties break toward the smaller threshold.
pub fn tune_switch_dr(
    dataset: &LoggedDataset,
    target: &SoftmaxLinearPolicy,
    logging: &SoftmaxLinearPolicy,
    model: &RewardModel,
    grid: &[f64],
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::invalid("tune_switch_dr needs a non-empty grid"));
    }
    let n = dataset.n();
    if n == 0 {
        return Err(Error::invalid("tune_switch_dr needs a non-empty dataset"));
    }

    // All-action weights per sample, reused across thresholds.
    let mut all_weights: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(n);
    for s in dataset.samples() {
        let pi = target.action_probs(&s.context)?;
        let pi0 = logging.action_probs(&s.context)?;
        let w: Vec<f64> = pi
            .iter()
            .zip(&pi0)
            .map(|(&p, &p0)| if p0 > 0.0 { p / p0 } else { f64::INFINITY })
            .collect();
        all_weights.push((pi, w));
    }

    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (f64::INFINITY, sorted[0]);
    for &tau in &sorted {
        let (_, variance) =
            switch_dr_contributions(dataset, target, model, tau)?.mean_and_variance()?;
        let mut bias = 0.0;
        for (pi, w) in &all_weights {
            for (p, wa) in pi.iter().zip(w) {
                if *wa > tau {
                    bias += p;
                }
            }
        }
        bias /= n as f64;
        let objective = variance + bias * bias;
        if objective < best.0 {
            best = (objective, tau);
        }
    }
    Ok(best.1)
}

/// DRos/DRps tuning: minimizes `Var + Bias^2` over the grid with
/// `Bias = (1/n) sum_i (w_shrunk_i - w_i)(r_i - f_hat(x_i, a_i))`.
/// Ties break toward the smaller lambda.
pub fn tune_dr_shrink(
    dataset: &LoggedDataset,
    target: &SoftmaxLinearPolicy,
    model: &RewardModel,
    grid: &[f64],
    mode: ShrinkMode,
) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::invalid("tune_dr_shrink needs a non-empty grid"));
    }
    let n = dataset.n();
    if n == 0 {
        return Err(Error::invalid("tune_dr_shrink needs a non-empty dataset"));
    }
    let weights = propensity_weights(target, dataset)?;
    let residuals: Vec<f64> = dataset
        .samples()
        .iter()
        .map(|s| Ok(s.reward - model.predict(&s.context, s.action)?))
        .collect::<Result<Vec<f64>>>()?;

    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (f64::INFINITY, sorted[0]);
    for &lambda in &sorted {
        let (_, variance) =
            dr_shrink_contributions(dataset, target, model, lambda, mode)?.mean_and_variance()?;
        let bias: f64 = weights
            .iter()
            .zip(&residuals)
            .map(|(&w, &res)| (crate::estimators::shrink_weight(w, lambda, mode) - w) * res)
            .sum::<f64>()
            / n as f64;
        let objective = variance + bias * bias;
        if objective < best.0 {
            best = (objective, lambda);
        }
    }
    Ok(best.1)
}

/// `((1 - lambda) w^s + lambda)^(1/s)` evaluated in log space so large
/// `w^s` cannot overflow.
fn power_corrected_weight(weight: f64, lambda: f64, s: f64) -> f64 {
    if lambda >= 1.0 {
        return 1.0;
    }
    if weight == 0.0 {
        return lambda.powf(1.0 / s);
    }
    let a = s * weight.ln() + (1.0 - lambda).ln();
    if lambda == 0.0 {
        return (a / s).exp();
    }
    let b = lambda.ln();
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    let log_sum = hi + (lo - hi).exp().ln_1p();
    (log_sum / s).exp()
}

/// IPS-lambda tuning: the root in [0, 1] of
/// `lambda^2 * (1/n) sum_i w_{lambda,s}(x_i, a_i)^2 = 2 log(1/delta) / (3n)`
/// with `s = n^(1/4)`, found by bisection to absolute tolerance 1e-10.
///
/// The objective is sampled at 100 points and must be non-decreasing up to
/// the first non-negative sample (the bracket the bisection searches); a
/// decrease inside that bracket means the sign change is not unique and the
/// tuner aborts with a diagnostic. Past the root the objective may dip
/// (heavy weight tails make `lambda^2 * mean(w_{lambda,s}^2)` hump-shaped
/// near 1), which cannot affect the returned value.
pub fn tune_ips_lambda(
    dataset: &LoggedDataset,
    target: &SoftmaxLinearPolicy,
    delta: f64,
) -> Result<f64> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1]"));
    }
    let n = dataset.n();
    if n == 0 {
        return Err(Error::invalid("tune_ips_lambda needs a non-empty dataset"));
    }
    let weights = propensity_weights(target, dataset)?;
    let s = (n as f64).powf(0.25);
    let rhs = 2.0 * (1.0 / delta).ln() / (3.0 * n as f64);

    let g = |lambda: f64| -> f64 {
        let mean_sq = weights
            .iter()
            .map(|&w| {
                let cw = power_corrected_weight(w, lambda, s);
                cw * cw
            })
            .sum::<f64>()
            / n as f64;
        lambda * lambda * mean_sq - rhs
    };

    if g(0.0) >= 0.0 {
        return Ok(0.0);
    }

    // Sample the objective; the bracket ends at the first non-negative point.
    const SAMPLES: usize = 100;
    let mut bracket_hi = None;
    let mut prev = f64::NEG_INFINITY;
    for j in 0..SAMPLES {
        let lambda = j as f64 / (SAMPLES - 1) as f64;
        let value = g(lambda);
        let slack = 1e-12 * (1.0 + value.abs());
        if value < prev - slack {
            return Err(Error::degenerate(format!(
                "IPS-lambda tuning objective decreases inside the root bracket near \
                 lambda = {lambda:.4} (g fell from {prev:.6e} to {value:.6e})"
            )));
        }
        prev = prev.max(value);
        if value >= 0.0 {
            bracket_hi = Some(lambda);
            break;
        }
    }
    let Some(hi) = bracket_hi else {
        // g stays negative across [0, 1]
        return Ok(1.0);
    };

    let (mut lo, mut hi) = (hi - 1.0 / (SAMPLES - 1) as f64, hi);
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
