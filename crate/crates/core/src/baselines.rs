//! Context-oblivious baselines: least-squares CTR regression and a per-(query, item) constant.

use std::collections::HashMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{LogRow, Schema};
use crate::error::{Result, RsmError};
use crate::tolerances::{LS_RCOND, LS_RIDGE};

/// One item in one context as a regression example.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub query_id: String,
    pub item_id: String,
    /// Schema features, position last when enabled.
    pub features: Vec<f64>,
    pub ctr: f64,
}

impl FeatureRow {
    pub fn new(query_id: impl Into<String>, item_id: impl Into<String>, features: Vec<f64>, ctr: f64) -> Result<Self> {
        if features.iter().any(|v| !v.is_finite()) {
            return Err(RsmError::Schema("feature values must be finite".into()));
        }
        if !(0.0..=1.0).contains(&ctr) {
            return Err(RsmError::Schema(format!("CTR {ctr} outside [0, 1]")));
        }
        Ok(Self { query_id: query_id.into(), item_id: item_id.into(), features, ctr })
    }
}

/// Flattens log rows into regression examples. Rows without clicks are skipped.
pub fn feature_rows<R: AsRef<LogRow>>(rows: &[R], schema: &Schema) -> Result<Vec<FeatureRow>> {
    let mut out = Vec::new();
    for row in rows {
        let row = row.as_ref();
        if row.total_clicks() <= 0.0 {
            continue;
        }
        for (i, ctr) in row.ctrs().into_iter().enumerate() {
            out.push(FeatureRow::new(&row.query_id, &row.items[i].item_id, row.feature_vector(i, schema), ctr.min(1.0))?);
        }
    }
    Ok(out)
}

/// Affine CTR predictor in raw feature units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
}

impl LinearModel {
    pub fn zero(k: usize) -> Self {
        Self { coefficients: vec![0.0; k], intercept: 0.0 }
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.coefficients.len() {
            return Err(RsmError::shape(format!("{} features for a model of arity {}", features.len(), self.coefficients.len())));
        }
        Ok(self.intercept + self.coefficients.iter().zip(features).map(|(c, x)| c * x).sum::<f64>())
    }
}

pub fn predict(model: &LinearModel, row: &FeatureRow) -> Result<f64> {
    model.predict(&row.features)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquaresFit {
    pub model: LinearModel,
    /// Set when the standardized design was rank-deficient and a small ridge was added.
    pub ridge_fallback: bool,
}

/// Ordinary least squares on standardized features, reported in raw units.
pub fn fit_least_squares(rows: &[FeatureRow]) -> Result<LeastSquaresFit> {
    let Some(first) = rows.first() else {
        return Err(RsmError::EmptyDataset);
    };
    let k = first.features.len();
    if rows.iter().any(|r| r.features.len() != k) {
        return Err(RsmError::shape("feature rows have different arities"));
    }
    if rows.len() < k + 1 {
        return Err(RsmError::TooFewSamples(rows.len()));
    }
    let m = rows.len() as f64;
    let mean_y = rows.iter().map(|r| r.ctr).sum::<f64>() / m;
    let mu: Vec<f64> = (0..k).map(|j| rows.iter().map(|r| r.features[j]).sum::<f64>() / m).collect();
    let sd: Vec<f64> = (0..k)
        .map(|j| (rows.iter().map(|r| (r.features[j] - mu[j]).powi(2)).sum::<f64>() / m).sqrt())
        .collect();

    let x = DMatrix::from_fn(rows.len(), k, |i, j| if sd[j] > 0.0 { (rows[i].features[j] - mu[j]) / sd[j] } else { 0.0 });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.ctr - mean_y));

    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let full_rank = k == 0 || (smax > 0.0 && svd.singular_values.min() > LS_RCOND * smax);
    let beta = if full_rank {
        svd.solve(&y, 0.0).map_err(|e| RsmError::Subproblem(e.to_string()))?
    } else {
        warn!("least-squares design is rank-deficient; adding ridge {LS_RIDGE}");
        let xtx = x.transpose() * &x + DMatrix::identity(k, k) * LS_RIDGE;
        xtx.cholesky().ok_or_else(|| RsmError::Subproblem("ridge system not positive definite".into()))?.solve(&(x.transpose() * &y))
    };

    let coefficients: Vec<f64> = (0..k).map(|j| if sd[j] > 0.0 { beta[j] / sd[j] } else { 0.0 }).collect();
    let intercept = mean_y - coefficients.iter().zip(&mu).map(|(c, m)| c * m).sum::<f64>();
    Ok(LeastSquaresFit { model: LinearModel { coefficients, intercept }, ridge_fallback: !full_rank })
}

/// Mean observed CTR per `(query, item)`; unseen pairs score 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConstantScorer {
    table: HashMap<(String, String), f64>,
}

impl ConstantScorer {
    pub fn score(&self, query_id: &str, item_id: &str) -> f64 {
        self.table.get(&(query_id.to_string(), item_id.to_string())).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

pub fn constant_scorer<R: AsRef<LogRow>>(rows: &[R]) -> ConstantScorer {
    let mut acc: HashMap<(String, String), (f64, usize)> = HashMap::new();
    for row in rows {
        let row = row.as_ref();
        for (item, ctr) in row.items.iter().zip(row.ctrs()) {
            let e = acc.entry((row.query_id.clone(), item.item_id.clone())).or_default();
            e.0 += ctr;
            e.1 += 1;
        }
    }
    ConstantScorer { table: acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect() }
}
