//! Weight learning.
//!
//! [`fit`] is the iterative perturbation learner: at the current weights it
//! linearizes every labelled stationary probability through the fundamental
//! matrix, solves a small box-and-sum constrained least-squares problem for a
//! step, and repeats until the step vanishes. [`grid_search`] enumerates a
//! discretized simplex and serves as its brute-force oracle.

mod grid;
mod qp;

use std::collections::HashMap;
use std::sync::Arc;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RsmError};
use crate::markov::{fundamental_matrix_with, stationary, Distribution, StochasticMatrix};
use crate::topology::{check_lambda, combine_native, Topology, WeightVector};

pub use grid::{grid_search, grid_search_with_budget, simplex_grid_size, sample_bound, GridSearchResult};
pub use qp::{kkt_residual, solve_box_sum_lsq, QpSolution};

/// How the first iterate is chosen.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    /// `(1 - lambda) / k` on every feature.
    #[default]
    Uniform,
    Given(WeightVector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    /// Restart probability.
    pub lambda: f64,
    /// Per-coordinate bound on a single step.
    pub eta: f64,
    /// Halt once the step's infinity norm drops to this.
    pub halt_eps: f64,
    pub max_iters: usize,
    /// KKT tolerance for the per-step subproblem.
    pub qp_tol: f64,
    pub init: Init,
    /// Pairwise-difference objective. Not implemented; must stay `false`.
    pub pairwise_difference: bool,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            lambda: 0.15,
            eta: 0.05,
            halt_eps: 1e-6,
            max_iters: 500,
            qp_tol: 1e-10,
            init: Init::Uniform,
            pairwise_difference: false,
        }
    }
}

impl LearnerConfig {
    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if !(self.eta > 0.0 && self.eta <= 1.0 - self.lambda) {
            return Err(RsmError::InvalidConfig(format!("eta must lie in (0, 1 - lambda], got {}", self.eta)));
        }
        if !(self.halt_eps > 0.0) {
            return Err(RsmError::InvalidConfig(format!("halt_eps must be positive, got {}", self.halt_eps)));
        }
        if !(self.qp_tol > 0.0) {
            return Err(RsmError::InvalidConfig(format!("qp_tol must be positive, got {}", self.qp_tol)));
        }
        if self.pairwise_difference {
            return Err(RsmError::InvalidConfig("the pairwise-difference objective is not implemented".into()));
        }
        Ok(())
    }
}

/// A displayed set of items for one query with its `k` feature topologies.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub query_id: String,
    pub context_id: String,
    item_ids: Vec<String>,
    topologies: Vec<Topology>,
}

impl Context {
    pub fn new(query_id: impl Into<String>, context_id: impl Into<String>, topologies: Vec<Topology>) -> Result<Self> {
        let first = topologies.first().ok_or_else(|| RsmError::shape("a context needs at least one topology"))?;
        let item_ids = first.item_ids().to_vec();
        if item_ids.len() < 2 {
            return Err(RsmError::ContextTooSmall(item_ids.len()));
        }
        if topologies.iter().any(|t| t.item_ids() != item_ids.as_slice()) {
            return Err(RsmError::shape("topologies of one context must share the item list"));
        }
        Ok(Self { query_id: query_id.into(), context_id: context_id.into(), item_ids, topologies })
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn topologies(&self) -> &[Topology] {
        &self.topologies
    }

    pub fn n(&self) -> usize {
        self.item_ids.len()
    }

    pub fn k(&self) -> usize {
        self.topologies.len()
    }

    fn matrices(&self) -> Vec<&StochasticMatrix> {
        self.topologies.iter().map(|t| t.matrix()).collect()
    }

    /// `lambda U + sum_i w_i T_i` for learner-form weights.
    pub fn combined_native(&self, native: &[f64], lambda: f64) -> Result<StochasticMatrix> {
        if native.len() != self.k() {
            return Err(RsmError::shape(format!("{} weights for {} topologies", native.len(), self.k())));
        }
        combine_native(&self.matrices(), native, lambda)
    }

    /// Stationary distribution of the combined chain under learner-form weights.
    pub fn stationary_native(&self, native: &[f64], lambda: f64) -> Result<Distribution> {
        stationary(&self.combined_native(native, lambda)?)
    }
}

/// One labelled item: the target stationary probability of item `target_u` in `context`.
#[derive(Debug, Clone)]
pub struct TrainingInstance {
    pub context: Arc<Context>,
    pub target_u: usize,
    pub target_prob: f64,
}

impl TrainingInstance {
    pub fn new(context: Arc<Context>, target_u: usize, target_prob: f64) -> Result<Self> {
        if target_u >= context.n() {
            return Err(RsmError::shape(format!("target item {target_u} outside a context of {}", context.n())));
        }
        if !(0.0..=1.0).contains(&target_prob) {
            return Err(RsmError::InvalidConfig(format!("target probability {target_prob} outside [0, 1]")));
        }
        Ok(Self { context, target_u, target_prob })
    }
}

/// Residual and first-order sensitivity of one labelled probability.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedRow {
    /// `p*_u - p^s_u`.
    pub residual: f64,
    /// `g_i = (p^s)^T T(i) Z e_u`.
    pub gradient: Vec<f64>,
}

/// Per-context quantities at the current weights.
#[derive(Debug, Clone)]
pub struct ContextLinearization {
    pub stationary: Distribution,
    /// Row `i` is `(p^s)^T T(i) Z`; column `u` of it is the sensitivity of `p_u` to `w(i)`.
    pub sensitivities: DMatrix<f64>,
}

/// Stationary distribution and fundamental-matrix sensitivities of one context.
pub fn linearize_context(context: &Context, native: &[f64], lambda: f64) -> Result<ContextLinearization> {
    let g = context.combined_native(native, lambda)?;
    let p = stationary(&g)?;
    let fundamental = fundamental_matrix_with(&g, p)?;
    let (z, p) = fundamental.into_parts();
    let row = p.to_row();
    let k = context.k();
    let n = context.n();
    let mut sens = DMatrix::zeros(k, n);
    for (i, t) in context.topologies().iter().enumerate() {
        let s = &row * t.matrix().matrix() * &z;
        sens.row_mut(i).copy_from(&s);
    }
    Ok(ContextLinearization { stationary: p, sensitivities: sens })
}

/// Residual and gradient of one instance at learner-form weights `w`.
pub fn linearized_row(instance: &TrainingInstance, w: &WeightVector, lambda: f64) -> Result<LinearizedRow> {
    let native = native_weights(w, lambda)?;
    let lin = linearize_context(&instance.context, &native, lambda)?;
    Ok(row_from(&lin, instance))
}

fn row_from(lin: &ContextLinearization, instance: &TrainingInstance) -> LinearizedRow {
    let u = instance.target_u;
    LinearizedRow {
        residual: instance.target_prob - lin.stationary.get(u),
        gradient: lin.sensitivities.column(u).iter().copied().collect(),
    }
}

fn native_weights(w: &WeightVector, lambda: f64) -> Result<Vec<f64>> {
    Ok(w.to_native(lambda)?.as_slice().to_vec())
}

/// Box bounds of a step from `w`: `-min(eta, w_i) <= x_i <= min(eta, 1 - lambda - w_i)`.
pub fn step_bounds(native: &[f64], eta: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let lo = native.iter().map(|&w| -eta.min(w)).collect();
    let hi = native.iter().map(|&w| eta.min(1.0 - lambda - w).max(0.0)).collect();
    (lo, hi)
}

/// Step minimizing `sum_q (residual_q - x . g_q)^2` within the step box with `sum x = 0`.
pub fn solve_step(rows: &[LinearizedRow], w: &WeightVector, config: &LearnerConfig) -> Result<Vec<f64>> {
    let native = native_weights(w, config.lambda)?;
    Ok(solve_step_native(rows, &native, config)?.x)
}

fn solve_step_native(rows: &[LinearizedRow], native: &[f64], config: &LearnerConfig) -> Result<QpSolution> {
    let k = native.len();
    if rows.is_empty() {
        return Err(RsmError::EmptyDataset);
    }
    if rows.iter().any(|r| r.gradient.len() != k) {
        return Err(RsmError::shape(format!("rows must carry {k} gradient entries")));
    }
    let a = DMatrix::from_fn(rows.len(), k, |q, i| rows[q].gradient[i]);
    let r = DVector::from_iterator(rows.len(), rows.iter().map(|row| row.residual));
    let (lo, hi) = step_bounds(native, config.eta, config.lambda);
    solve_box_sum_lsq(&a, &r, &lo, &hi, config.qp_tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Sums-to-one form.
    pub weights: WeightVector,
    /// Number of weight updates applied.
    pub iterations: usize,
    /// Infinity norm of the last computed step (`inf` when none was computed).
    pub final_step_norm: f64,
    /// Mean squared residual at each evaluated iterate.
    pub per_iteration_loss: Vec<f64>,
    pub converged: bool,
    /// Mean absolute residual of the returned weights.
    pub err_s: f64,
    /// Every evaluated iterate in learner form (sums to `1 - lambda`), starting with `w^0`.
    #[serde(default)]
    pub trajectory: Vec<Vec<f64>>,
}

/// Instances grouped by shared context so each chain is solved once per iteration.
struct Grouped<'a> {
    contexts: Vec<&'a Context>,
    /// For every instance, the index of its context.
    owner: Vec<usize>,
}

impl<'a> Grouped<'a> {
    fn new(dataset: &'a [TrainingInstance]) -> Self {
        let mut index: HashMap<*const Context, usize> = HashMap::new();
        let mut contexts = Vec::new();
        let owner = dataset
            .iter()
            .map(|inst| {
                let key = Arc::as_ptr(&inst.context);
                *index.entry(key).or_insert_with(|| {
                    contexts.push(inst.context.as_ref());
                    contexts.len() - 1
                })
            })
            .collect();
        Self { contexts, owner }
    }

    fn linearize(&self, native: &[f64], lambda: f64) -> Result<Vec<ContextLinearization>> {
        self.contexts.par_iter().map(|c| linearize_context(c, native, lambda)).collect()
    }

    fn stationaries(&self, native: &[f64], lambda: f64) -> Result<Vec<Distribution>> {
        self.contexts.par_iter().map(|c| c.stationary_native(native, lambda)).collect()
    }
}

fn check_dataset(dataset: &[TrainingInstance]) -> Result<usize> {
    let k = dataset.first().ok_or(RsmError::EmptyDataset)?.context.k();
    if dataset.iter().any(|inst| inst.context.k() != k) {
        return Err(RsmError::shape("instances disagree on the number of features"));
    }
    Ok(k)
}

/// Mean `|p_u - p*_u|` over the dataset for sums-to-one weights.
pub fn err_s(dataset: &[TrainingInstance], weights: &WeightVector, lambda: f64) -> Result<f64> {
    let k = check_dataset(dataset)?;
    if weights.len() != k {
        return Err(RsmError::shape(format!("{} weights for {k} features", weights.len())));
    }
    let native = native_weights(weights, lambda)?;
    let grouped = Grouped::new(dataset);
    let stats = grouped.stationaries(&native, lambda)?;
    Ok(mean_abs_error(dataset, &grouped.owner, &stats))
}

fn mean_abs_error(dataset: &[TrainingInstance], owner: &[usize], stats: &[Distribution]) -> f64 {
    let total: f64 = dataset
        .iter()
        .zip(owner)
        .map(|(inst, &g)| (stats[g].get(inst.target_u) - inst.target_prob).abs())
        .sum();
    total / dataset.len() as f64
}

/// Iterative perturbation learner.
pub fn fit(dataset: &[TrainingInstance], config: &LearnerConfig) -> Result<FitResult> {
    config.validate()?;
    let k = check_dataset(dataset)?;
    let lambda = config.lambda;
    let mut w: Vec<f64> = match &config.init {
        Init::Uniform => vec![(1.0 - lambda) / k as f64; k],
        Init::Given(given) => {
            if given.len() != k {
                return Err(RsmError::shape(format!("initial weights have {} entries, expected {k}", given.len())));
            }
            native_weights(given, lambda)?
        }
    };

    let grouped = Grouped::new(dataset);
    let mut losses = Vec::new();
    let mut trajectory = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut final_step_norm = f64::INFINITY;
    let mut converged = false;
    let mut last_err;

    loop {
        let lins = grouped.linearize(&w, lambda)?;
        let rows: Vec<LinearizedRow> =
            dataset.iter().zip(&grouped.owner).map(|(inst, &g)| row_from(&lins[g], inst)).collect();
        let m = rows.len() as f64;
        let loss = rows.iter().map(|r| r.residual * r.residual).sum::<f64>() / m;
        last_err = rows.iter().map(|r| r.residual.abs()).sum::<f64>() / m;
        losses.push(loss);
        trajectory.push(w.clone());
        if best.as_ref().is_none_or(|(e, _)| last_err < *e) {
            best = Some((last_err, w.clone()));
        }
        debug!("iter {iterations}: loss {loss:.3e}, err_s {last_err:.3e}");

        if iterations >= config.max_iters {
            break;
        }
        let step = solve_step_native(&rows, &w, config)?;
        final_step_norm = step.x.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()));
        if final_step_norm <= config.halt_eps {
            converged = true;
            break;
        }
        for (wi, xi) in w.iter_mut().zip(&step.x) {
            *wi = (*wi + xi).clamp(0.0, 1.0 - lambda);
        }
        iterations += 1;
    }

    let (err, chosen) = if converged {
        (last_err, w)
    } else {
        best.expect("at least one iterate is evaluated")
    };
    let weights = to_reporting_vector(&chosen, lambda)?;
    Ok(FitResult { weights, iterations, final_step_norm, per_iteration_loss: losses, converged, err_s: err, trajectory })
}

/// Rescales learner-form weights to sum to one, absorbing rounding drift.
fn to_reporting_vector(native: &[f64], lambda: f64) -> Result<WeightVector> {
    let s: f64 = native.iter().sum();
    debug_assert!((s - (1.0 - lambda)).abs() < 1e-9);
    WeightVector::reporting(native.iter().map(|w| w / s).collect())
}
