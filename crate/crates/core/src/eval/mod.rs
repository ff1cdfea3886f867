//! Flip-prediction evaluation: the accuracy metric, scorers for each model, and
//! the multi-split experiment runner with paired t-tests.

mod report;
mod stats;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{constant_scorer, feature_rows, fit_least_squares, ConstantScorer, LinearModel};
use crate::data::{mine_flip_pairs, paired_split, training_instances, FlipPair, FlipThresholds, LogRow, Schema};
use crate::error::{Result, RsmError};
use crate::learner::{fit, LearnerConfig};
use crate::markov::stationary;
use crate::seeds;
use crate::topology::{combine, WeightVector};

pub use report::{write_reports, ExperimentReport, ModelSummary, PairedComparison};
pub use stats::{mean, paired_t_test, sample_std, TTest};

/// Scores every item of a context, in the row's item order.
pub trait Scorer: Send + Sync {
    fn score_row(&self, row: &LogRow) -> Result<Vec<f64>>;
}

impl<F> Scorer for F
where
    F: Fn(&LogRow) -> Result<Vec<f64>> + Send + Sync,
{
    fn score_row(&self, row: &LogRow) -> Result<Vec<f64>> {
        self(row)
    }
}

/// Ranks items by the stationary distribution of the weighted chain built from the row's features.
#[derive(Debug, Clone, PartialEq)]
pub struct RsmScorer {
    pub weights: WeightVector,
    pub lambda: f64,
    pub schema: Schema,
}

impl Scorer for RsmScorer {
    fn score_row(&self, row: &LogRow) -> Result<Vec<f64>> {
        let tops = row.topologies(&self.schema)?;
        Ok(stationary(&combine(&tops, &self.weights, self.lambda)?)?.into_vec())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearScorer {
    pub model: LinearModel,
    pub schema: Schema,
}

impl Scorer for LinearScorer {
    fn score_row(&self, row: &LogRow) -> Result<Vec<f64>> {
        (0..row.items.len()).map(|i| self.model.predict(&row.feature_vector(i, &self.schema))).collect()
    }
}

impl Scorer for ConstantScorer {
    fn score_row(&self, row: &LogRow) -> Result<Vec<f64>> {
        Ok(row.items.iter().map(|i| self.score(&row.query_id, &i.item_id)).collect())
    }
}

/// Reads the row's own observed CTRs. An upper bound, not a model.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OracleScorer;

impl Scorer for OracleScorer {
    fn score_row(&self, row: &LogRow) -> Result<Vec<f64>> {
        Ok(row.ctrs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipAccuracy {
    pub accuracy: f64,
    /// Comparisons where the scorer failed; each was credited 0.5.
    pub failures: usize,
}

/// Fraction of the `2 |pairs|` within-context A-vs-B comparisons the scorer orders correctly.
///
/// Exact ties and scorer failures earn half credit.
pub fn flip_accuracy(scorer: &dyn Scorer, pairs: &[FlipPair]) -> Result<FlipAccuracy> {
    if pairs.is_empty() {
        return Err(RsmError::EmptyDataset);
    }
    let mut credit = 0.0;
    let mut failures = 0;
    for pair in pairs {
        for (row, winner, loser) in [(&pair.row_1, &pair.item_a, &pair.item_b), (&pair.row_2, &pair.item_b, &pair.item_a)] {
            let (Some(w), Some(l)) = (row.index_of(winner), row.index_of(loser)) else {
                return Err(RsmError::UnknownItem(format!("{winner}/{loser} in {}/{}", row.query_id, row.context_id)));
            };
            match scorer.score_row(row) {
                Ok(s) if s.len() == row.items.len() && s[w].is_finite() && s[l].is_finite() => {
                    credit += if s[w] > s[l] {
                        1.0
                    } else if s[w] == s[l] {
                        0.5
                    } else {
                        0.0
                    };
                }
                outcome => {
                    warn!("scorer failed on {}/{}: {:?}", row.query_id, row.context_id, outcome.err());
                    failures += 1;
                    credit += 0.5;
                }
            }
        }
    }
    Ok(FlipAccuracy { accuracy: credit / (2 * pairs.len()) as f64, failures })
}

/// Mean absolute gap between predicted scores and observed CTRs. Diagnostic only.
pub fn ctr_mae(scorer: &dyn Scorer, rows: &[Arc<LogRow>]) -> Option<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for row in rows {
        if let Ok(s) = scorer.score_row(row) {
            for (p, c) in s.iter().zip(row.ctrs()) {
                total += (p - c).abs();
                count += 1;
            }
        }
    }
    (count > 0).then(|| total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Rsm,
    Ls,
    Constant,
    Oracle,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Rsm => "rsm",
            ModelKind::Ls => "ls",
            ModelKind::Constant => "constant",
            ModelKind::Oracle => "oracle",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = RsmError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rsm" => Ok(ModelKind::Rsm),
            "ls" => Ok(ModelKind::Ls),
            "constant" => Ok(ModelKind::Constant),
            "oracle" => Ok(ModelKind::Oracle),
            other => Err(RsmError::InvalidConfig(format!("unknown model {other:?}; expected rsm, ls, constant or oracle"))),
        }
    }
}

/// Trains one model on the given rows.
pub fn train_model(kind: ModelKind, rows: &[Arc<LogRow>], schema: &Schema, learner: &LearnerConfig) -> Result<Box<dyn Scorer>> {
    Ok(match kind {
        ModelKind::Rsm => {
            let result = fit(&training_instances(rows, schema)?, learner)?;
            Box::new(RsmScorer { weights: result.weights, lambda: learner.lambda, schema: schema.clone() })
        }
        ModelKind::Ls => {
            let fit = fit_least_squares(&feature_rows(rows, schema)?)?;
            Box::new(LinearScorer { model: fit.model, schema: schema.clone() })
        }
        ModelKind::Constant => Box::new(constant_scorer(rows)),
        ModelKind::Oracle => Box::new(OracleScorer),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub models: Vec<ModelKind>,
    pub num_splits: usize,
    pub train_fraction: f64,
    pub seed: u64,
    pub thresholds: FlipThresholds,
    pub learner: LearnerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            models: vec![ModelKind::Rsm, ModelKind::Ls, ModelKind::Constant],
            num_splits: 100,
            train_fraction: 0.8,
            seed: 0,
            thresholds: FlipThresholds::default(),
            learner: LearnerConfig::default(),
        }
    }
}

struct SplitOutcome {
    accuracy: Vec<f64>,
    failures: Vec<usize>,
    mae: Vec<Option<f64>>,
}

/// Mines flip pairs once, then for each split trains every model on the same
/// training rows and scores them on the same test pairs.
///
/// Splits run in parallel; results are assembled in split order, so the
/// report depends only on the inputs and the seed.
pub fn run_experiment(rows: &[LogRow], schema: &Schema, config: &ExperimentConfig) -> Result<ExperimentReport> {
    if config.models.is_empty() || config.num_splits == 0 {
        return Err(RsmError::InvalidConfig("need at least one model and one split".into()));
    }
    config.learner.validate()?;
    let pairs = mine_flip_pairs(rows, config.thresholds);
    if pairs.len() < 2 {
        return Err(RsmError::SplitTooSmall(pairs.len()));
    }
    info!("{} flip pairs from {} rows", pairs.len(), rows.len());

    let started = Instant::now();
    let outcomes: Vec<SplitOutcome> = (0..config.num_splits)
        .into_par_iter()
        .map(|i| {
            let split = paired_split(&pairs, config.train_fraction, seeds::sub_seed(config.seed, seeds::SPLIT, i as u64))?;
            let test_rows = split.test_rows();
            let mut out = SplitOutcome { accuracy: Vec::new(), failures: Vec::new(), mae: Vec::new() };
            for &kind in &config.models {
                let scorer = train_model(kind, &split.train_rows, schema, &config.learner)?;
                let acc = flip_accuracy(scorer.as_ref(), &split.test_pairs)?;
                out.accuracy.push(acc.accuracy);
                out.failures.push(acc.failures);
                out.mae.push(ctr_mae(scorer.as_ref(), &test_rows));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    info!("{} splits in {:.2?}", config.num_splits, started.elapsed());

    report::assemble(config, pairs.len(), &outcomes.iter().map(|o| (&o.accuracy[..], &o.failures[..], &o.mae[..])).collect::<Vec<_>>())
}

/// Runs the same experiment at each restart probability.
pub fn lambda_sweep(rows: &[LogRow], schema: &Schema, config: &ExperimentConfig, lambdas: &[f64]) -> Result<Vec<ExperimentReport>> {
    lambdas
        .iter()
        .map(|&lambda| {
            let mut c = config.clone();
            c.learner.lambda = lambda;
            run_experiment(rows, schema, &c)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, LogItem, Noise, SyntheticSpec};

    fn flip_rows() -> Vec<LogRow> {
        let mut rows = Vec::new();
        for q in 0..6 {
            for (c, a) in [("c1", 7.0), ("c2", 3.0)] {
                rows.push(LogRow {
                    query_id: format!("q{q}"),
                    context_id: c.into(),
                    items: vec![
                        LogItem { item_id: "A".into(), position: 1, clicks: a, features: vec![] },
                        LogItem { item_id: "B".into(), position: 2, clicks: 10.0 - a, features: vec![] },
                    ],
                    topologies: None,
                });
            }
        }
        rows
    }

    #[test]
    fn oracle_constant_and_inverse() {
        let pairs = mine_flip_pairs(&flip_rows(), FlipThresholds::default());
        assert_eq!(pairs.len(), 6);
        assert_eq!(flip_accuracy(&OracleScorer, &pairs).unwrap().accuracy, 1.0);
        let inverse = |r: &LogRow| Ok(r.ctrs().iter().map(|c| -c).collect());
        assert_eq!(flip_accuracy(&inverse, &pairs).unwrap().accuracy, 0.0);
        assert_eq!(flip_accuracy(&constant_scorer(&flip_rows()), &pairs).unwrap().accuracy, 0.5);
        let flat = |r: &LogRow| Ok(vec![1.0; r.items.len()]);
        assert_eq!(flip_accuracy(&flat, &pairs).unwrap().accuracy, 0.5);
    }

    #[test]
    fn failures_get_half_credit() {
        let pairs = mine_flip_pairs(&flip_rows(), FlipThresholds::default());
        let broken = |_: &LogRow| Err(RsmError::EmptyDataset);
        let acc = flip_accuracy(&broken, &pairs).unwrap();
        assert_eq!((acc.accuracy, acc.failures), (0.5, 12));
        assert!(flip_accuracy(&OracleScorer, &[]).is_err());
    }

    #[test]
    fn model_names_parse() {
        for k in [ModelKind::Rsm, ModelKind::Ls, ModelKind::Constant, ModelKind::Oracle] {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
        assert!("svm".parse::<ModelKind>().is_err());
    }

    #[test]
    fn identical_models_and_reproducibility() {
        let mut spec = SyntheticSpec::simple(2, 4, 6, vec![0.7, 0.3], 2);
        spec.catalog_size = 6;
        spec.contexts_per_query = 6;
        spec.noise = Noise::Multinomial { clicks_per_context: 1000 };
        let ds = generate_synthetic(&spec).unwrap();
        let config = ExperimentConfig {
            models: vec![ModelKind::Oracle, ModelKind::Constant, ModelKind::Oracle],
            num_splits: 5,
            seed: 11,
            ..Default::default()
        };
        let r = run_experiment(&ds.rows, &ds.schema, &config).unwrap();
        assert_eq!(r.models[0].mean, 1.0);
        assert_eq!(r.models[1].mean, 0.5);
        let same = r.comparisons.iter().find(|c| c.model_a == "oracle" && c.model_b == "oracle#2").unwrap();
        assert_eq!((same.t, same.p_value), (Some(0.0), Some(1.0)));
        assert_eq!(r, run_experiment(&ds.rows, &ds.schema, &config).unwrap());
    }
}
