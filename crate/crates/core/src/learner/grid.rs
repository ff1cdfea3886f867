//! Brute-force learner over a discretized weight simplex, and the sample-size planner.

use rayon::prelude::*;

use super::{Grouped, TrainingInstance, check_dataset, mean_abs_error};
use crate::error::{Result, RsmError};
use crate::tolerances::DEFAULT_GRID_BUDGET;
use crate::topology::{check_lambda, WeightVector};

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearchResult {
    /// Sums-to-one form.
    pub weights: WeightVector,
    pub err_s: f64,
    pub candidates: u128,
}

/// Number of points with coordinates in `{0, 1/steps, ..., 1}` on the `(k-1)`-simplex:
/// `C(steps + k - 1, k - 1)`, saturating at `u128::MAX`.
pub fn simplex_grid_size(steps: u64, k: usize) -> u128 {
    let mut acc: u128 = 1;
    for j in 1..k as u128 {
        // C(steps + j, j) = C(steps + j - 1, j - 1) * (steps + j) / j
        acc = match acc.checked_mul(steps as u128 + j) {
            Some(v) => v / j,
            None => return u128::MAX,
        };
    }
    acc
}

fn steps_for(grid_step: f64) -> Result<u64> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(RsmError::InvalidConfig(format!("grid step must lie in (0, 1], got {grid_step}")));
    }
    let steps = (1.0 / grid_step).round();
    if (steps * grid_step - 1.0).abs() > 1e-9 {
        return Err(RsmError::InvalidConfig(format!("grid step {grid_step} does not divide 1")));
    }
    Ok(steps as u64)
}

/// Grid learner with the default candidate budget.
pub fn grid_search(dataset: &[TrainingInstance], grid_step: f64, lambda: f64) -> Result<GridSearchResult> {
    grid_search_with_budget(dataset, grid_step, lambda, DEFAULT_GRID_BUDGET)
}

/// Evaluates `err_S` at every simplex point with spacing `grid_step` and returns the
/// minimizer; among equal errors the lexicographically smallest weight vector wins.
pub fn grid_search_with_budget(
    dataset: &[TrainingInstance],
    grid_step: f64,
    lambda: f64,
    budget: u128,
) -> Result<GridSearchResult> {
    check_lambda(lambda)?;
    let k = check_dataset(dataset)?;
    let steps = steps_for(grid_step)?;
    let required = simplex_grid_size(steps, k);
    if required > budget {
        return Err(RsmError::GridBudgetExceeded { required, cap: budget });
    }

    let points = compositions(steps, k);
    let grouped = Grouped::new(dataset);
    let scale = (1.0 - lambda) / steps as f64;
    let errors: Vec<f64> = points
        .par_iter()
        .map(|counts| {
            let native: Vec<f64> = counts.iter().map(|&c| c as f64 * scale).collect();
            grouped.stationaries(&native, lambda).map(|s| mean_abs_error(dataset, &grouped.owner, &s))
        })
        .collect::<Result<_>>()?;

    // points are in lexicographic order, so the first strict minimum wins ties
    let mut best = 0;
    for (i, e) in errors.iter().enumerate() {
        if *e < errors[best] {
            best = i;
        }
    }
    let weights = WeightVector::reporting(points[best].iter().map(|&c| c as f64 / steps as f64).collect())?;
    Ok(GridSearchResult { weights, err_s: errors[best], candidates: required })
}

/// All `k`-tuples of nonnegative integers summing to `total`, in lexicographic order.
fn compositions(total: u64, k: usize) -> Vec<Vec<u64>> {
    fn rec(remaining: u64, slots: usize, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
        if slots == 1 {
            prefix.push(remaining);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for c in 0..=remaining {
            prefix.push(c);
            rec(remaining - c, slots - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, k, &mut Vec::with_capacity(k), &mut out);
    out
}

/// Order-of-magnitude sample size `ceil(k / eps^2 * ln(k / (lambda eps delta)))`.
///
/// The hidden constant of the uniform-convergence bound is taken as 1, so this
/// is a planning figure rather than a guarantee.
///
/// # Panics
/// If any argument is non-positive, or `eps` or `delta` is at least 1.
pub fn sample_bound(k: usize, eps: f64, delta: f64, lambda: f64) -> u64 {
    assert!(k > 0 && eps > 0.0 && eps < 1.0 && delta > 0.0 && delta < 1.0 && lambda > 0.0, "sample_bound arguments out of range");
    let k = k as f64;
    let m = k / (eps * eps) * (k / (lambda * eps * delta)).ln();
    m.max(0.0).ceil() as u64
}
