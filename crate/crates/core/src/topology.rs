//! Feature topologies: rank encoding, restriction to a context, and the
//! weighted combination with a uniform restart that the shopper walks on.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RsmError};
use crate::markov::{stationary, StochasticMatrix};
use crate::tolerances::ROW_SUM_TOL;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    HigherIsBetter,
    LowerIsBetter,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    #[default]
    Numeric,
    /// Values restricted to {-1, 0, +1}, e.g. a hand-labelled brand reputation.
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub direction: Direction,
    #[serde(default)]
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn numeric(name: impl Into<String>, direction: Direction) -> Self {
        Self { name: name.into(), direction, kind: FeatureKind::Numeric }
    }

    pub fn categorical(name: impl Into<String>, direction: Direction) -> Self {
        Self { name: name.into(), direction, kind: FeatureKind::Categorical }
    }

    pub fn check_value(&self, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(RsmError::Schema(format!("feature {} has non-finite value {v}", self.name)));
        }
        if self.kind == FeatureKind::Categorical && v != -1.0 && v != 0.0 && v != 1.0 {
            return Err(RsmError::Schema(format!("categorical feature {} must be -1, 0 or 1, got {v}", self.name)));
        }
        Ok(())
    }
}

/// One feature's preference chain over an ordered list of items.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    feature: String,
    item_ids: Vec<String>,
    matrix: StochasticMatrix,
}

impl Topology {
    pub fn new(feature: impl Into<String>, item_ids: Vec<String>, matrix: StochasticMatrix) -> Result<Self> {
        if item_ids.len() != matrix.n() {
            return Err(RsmError::shape(format!("{} item ids for a {}-state matrix", item_ids.len(), matrix.n())));
        }
        if !matrix.is_stochastic() {
            return Err(RsmError::NotStochastic("topology must be row-stochastic".into()));
        }
        Ok(Self { feature: feature.into(), item_ids, matrix })
    }

    /// Rank-encodes `values` (one per item) into a topology.
    pub fn encode(feature: impl Into<String>, item_ids: Vec<String>, values: &[f64], direction: Direction) -> Result<Self> {
        if item_ids.len() != values.len() {
            return Err(RsmError::shape(format!("{} item ids for {} values", item_ids.len(), values.len())));
        }
        let matrix = encode_rank_topology(values, direction)?;
        Self::new(feature, item_ids, matrix)
    }

    pub fn feature(&self) -> &str {
        &self.feature
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn matrix(&self) -> &StochasticMatrix {
        &self.matrix
    }

    pub fn n(&self) -> usize {
        self.item_ids.len()
    }
}

/// Desirability ranks in `1..=n` (n = most desired). Tied values share the
/// average of the positions they occupy.
pub fn desirability_ranks(values: &[f64], direction: Direction) -> Vec<f64> {
    let key = |v: f64| match direction {
        Direction::HigherIsBetter => v,
        Direction::LowerIsBetter => -v,
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| key(values[a]).partial_cmp(&key(values[b])).unwrap_or(Ordering::Equal));

    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && key(values[order[end]]) == key(values[order[start]]) {
            end += 1;
        }
        // positions start+1 ..= end, averaged
        let avg = (start + 1 + end) as f64 / 2.0;
        for &idx in &order[start..end] {
            ranks[idx] = avg;
        }
        start = end;
    }
    ranks
}

/// Rank topology: edge `i -> j` gets weight `n + rank(j) - rank(i)` before each
/// row is normalized. The self-loop always carries weight `n`.
pub fn encode_rank_topology(values: &[f64], direction: Direction) -> Result<StochasticMatrix> {
    let n = values.len();
    if n < 2 {
        return Err(RsmError::ContextTooSmall(n));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(RsmError::Schema(format!("non-finite feature value {v}")));
    }
    let ranks = desirability_ranks(values, direction);
    let nf = n as f64;
    let mut m = DMatrix::from_fn(n, n, |i, j| nf + ranks[j] - ranks[i]);
    for mut row in m.row_iter_mut() {
        let s = row.sum();
        row /= s;
    }
    StochasticMatrix::new(m)
}

/// Restricts a topology to `subset` (in the given order) and renormalizes each row.
pub fn restrict(topology: &Topology, subset: &[String]) -> Result<Topology> {
    if subset.len() < 2 {
        return Err(RsmError::ContextTooSmall(subset.len()));
    }
    let idx: Vec<usize> = subset
        .iter()
        .map(|id| {
            topology
                .item_ids
                .iter()
                .position(|x| x == id)
                .ok_or_else(|| RsmError::UnknownItem(id.clone()))
        })
        .collect::<Result<_>>()?;
    let k = idx.len();
    let src = topology.matrix.matrix();
    let mut m = DMatrix::from_fn(k, k, |a, b| src[(idx[a], idx[b])]);
    for (a, mut row) in m.row_iter_mut().enumerate() {
        let s = row.sum();
        if s <= 0.0 {
            return Err(RsmError::DanglingItem(subset[a].clone()));
        }
        row /= s;
    }
    Topology::new(topology.feature.clone(), subset.to_vec(), StochasticMatrix::new(m)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Normalization {
    /// Public form: weights sum to 1 and the restart is applied on top.
    SumsToOne,
    /// Learner form: weights sum to `1 - lambda`, so `lambda U + sum w_i T_i` is stochastic.
    SumsToOneMinusLambda { lambda: f64 },
}

/// Nonnegative feature weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    weights: Vec<f64>,
    normalization: Normalization,
}

impl WeightVector {
    /// Weights summing to 1.
    pub fn reporting(weights: Vec<f64>) -> Result<Self> {
        Self::validated(weights, Normalization::SumsToOne)
    }

    /// Weights summing to `1 - lambda`.
    pub fn native(weights: Vec<f64>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        Self::validated(weights, Normalization::SumsToOneMinusLambda { lambda })
    }

    /// `1/k` everywhere.
    pub fn uniform(k: usize) -> Self {
        Self { weights: vec![1.0 / k as f64; k], normalization: Normalization::SumsToOne }
    }

    fn validated(mut weights: Vec<f64>, normalization: Normalization) -> Result<Self> {
        if weights.is_empty() {
            return Err(RsmError::InvalidWeights("no weights".into()));
        }
        for w in weights.iter_mut() {
            if !w.is_finite() || *w < -ROW_SUM_TOL {
                return Err(RsmError::InvalidWeights(format!("weight {w} is negative or non-finite")));
            }
            *w = w.max(0.0);
        }
        let target = match normalization {
            Normalization::SumsToOne => 1.0,
            Normalization::SumsToOneMinusLambda { lambda } => 1.0 - lambda,
        };
        let s: f64 = weights.iter().sum();
        if (s - target).abs() > ROW_SUM_TOL {
            return Err(RsmError::InvalidWeights(format!("weights sum to {s}, expected {target}")));
        }
        Ok(Self { weights, normalization })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    /// Rescales into the sums-to-one form.
    pub fn to_reporting(&self) -> WeightVector {
        match self.normalization {
            Normalization::SumsToOne => self.clone(),
            Normalization::SumsToOneMinusLambda { lambda } => WeightVector {
                weights: self.weights.iter().map(|w| w / (1.0 - lambda)).collect(),
                normalization: Normalization::SumsToOne,
            },
        }
    }

    /// Rescales into the sums-to-`1 - lambda` form.
    pub fn to_native(&self, lambda: f64) -> Result<WeightVector> {
        check_lambda(lambda)?;
        let rep = self.to_reporting();
        Ok(WeightVector {
            weights: rep.weights.iter().map(|w| w * (1.0 - lambda)).collect(),
            normalization: Normalization::SumsToOneMinusLambda { lambda },
        })
    }
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 1.0 {
        Ok(())
    } else {
        Err(RsmError::InvalidConfig(format!("lambda must lie in (0, 1), got {lambda}")))
    }
}

/// `lambda U + (1 - lambda) sum_i w_i T_i`.
///
/// Every entry of the result is at least `lambda / n`, which makes the chain
/// irreducible and aperiodic.
pub fn combine(topologies: &[Topology], weights: &WeightVector, lambda: f64) -> Result<StochasticMatrix> {
    check_lambda(lambda)?;
    if let Normalization::SumsToOneMinusLambda { lambda: l } = weights.normalization() {
        if l != lambda {
            return Err(RsmError::InvalidWeights(format!("weights were normalized for lambda {l}, combining with {lambda}")));
        }
    }
    if topologies.len() != weights.len() {
        return Err(RsmError::shape(format!("{} topologies for {} weights", topologies.len(), weights.len())));
    }
    let first = topologies.first().ok_or_else(|| RsmError::shape("no topologies"))?;
    if topologies.iter().any(|t| t.item_ids != first.item_ids) {
        return Err(RsmError::shape("topologies are over different item lists"));
    }
    let native = weights.to_native(lambda)?;
    let matrices: Vec<&StochasticMatrix> = topologies.iter().map(|t| t.matrix()).collect();
    combine_native(&matrices, native.as_slice(), lambda)
}

/// `lambda U + sum_i w_i T_i` with `sum w = 1 - lambda`; no validation of item lists.
pub(crate) fn combine_native(matrices: &[&StochasticMatrix], native: &[f64], lambda: f64) -> Result<StochasticMatrix> {
    let n = matrices[0].n();
    if matrices.iter().any(|m| m.n() != n) {
        return Err(RsmError::shape("topologies have different sizes"));
    }
    let mut g = DMatrix::from_element(n, n, lambda / n as f64);
    for (m, &w) in matrices.iter().zip(native) {
        if w != 0.0 {
            g += m.matrix() * w;
        }
    }
    StochasticMatrix::new(g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub item_id: String,
    pub score: f64,
}

/// Orders items by stationary probability, highest first; ties (scores within
/// `1e-12`) go to the smaller id.
pub fn rank_items(combined: &StochasticMatrix, item_ids: &[String]) -> Result<Vec<RankedItem>> {
    if item_ids.len() != combined.n() {
        return Err(RsmError::shape(format!("{} item ids for a {}-state chain", item_ids.len(), combined.n())));
    }
    let p = stationary(combined)?;
    let mut ranked: Vec<RankedItem> = item_ids
        .iter()
        .zip(p.as_slice())
        .map(|(id, &score)| RankedItem { item_id: id.clone(), score })
        .collect();
    ranked.sort_by(|a, b| {
        score_key(b.score)
            .cmp(&score_key(a.score))
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    Ok(ranked)
}

/// Scores closer than the stationary solver's accuracy compare equal.
fn score_key(score: f64) -> i64 {
    (score / SCORE_RESOLUTION).round() as i64
}

const SCORE_RESOLUTION: f64 = 1e-12;

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("i{i}")).collect()
    }

    #[test]
    fn two_prices_lower_is_better() {
        let t = encode_rank_topology(&[20.0, 50.0], Direction::LowerIsBetter).unwrap();
        assert_abs_diff_eq!(t.get(0, 0), 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.get(0, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.get(1, 0), 3.0 / 5.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.get(1, 1), 2.0 / 5.0, epsilon = 1e-15);
    }

    #[test]
    fn three_capacities_higher_is_better() {
        let t = encode_rank_topology(&[7.0, 11.0, 12.0], Direction::HigherIsBetter).unwrap();
        assert_abs_diff_eq!(t.get(0, 0), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(t.get(0, 1), 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(t.get(0, 2), 5.0 / 12.0, epsilon = 1e-15);
    }

    #[test]
    fn ties_give_uniform_rows() {
        let t = encode_rank_topology(&[3.0; 4], Direction::HigherIsBetter).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_abs_diff_eq!(t.get(i, j), 0.25, epsilon = 1e-15);
            }
        }
        assert_eq!(desirability_ranks(&[1.0, 5.0, 5.0, 2.0], Direction::HigherIsBetter), vec![1.0, 3.5, 3.5, 2.0]);
    }

    #[test]
    fn single_item_is_too_small() {
        assert_eq!(encode_rank_topology(&[1.0], Direction::HigherIsBetter), Err(RsmError::ContextTooSmall(1)));
    }

    #[test]
    fn restrict_to_all_is_identity() {
        let t = Topology::encode("cap", ids(3), &[7.0, 11.0, 12.0], Direction::HigherIsBetter).unwrap();
        assert_eq!(restrict(&t, &ids(3)).unwrap(), t);
    }

    #[test]
    fn restrict_drops_and_renormalizes() {
        let t = Topology::encode("cap", ids(3), &[7.0, 11.0, 12.0], Direction::HigherIsBetter).unwrap();
        let r = restrict(&t, &ids(2)).unwrap();
        // row 0 was (3, 4, 5)/12 -> (3, 4)/7; row 1 was (2, 3, 4)/9 -> (2, 3)/5
        assert_abs_diff_eq!(r.matrix().get(0, 0), 3.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.matrix().get(0, 1), 4.0 / 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.matrix().get(1, 0), 2.0 / 5.0, epsilon = 1e-15);
        assert_eq!(restrict(&t, &ids(1)), Err(RsmError::ContextTooSmall(1)));
        assert!(matches!(restrict(&t, &["zz".to_string(), "i0".to_string()]), Err(RsmError::UnknownItem(_))));
    }

    #[test]
    fn restrict_dangling() {
        let m = StochasticMatrix::from_rows(&[vec![0.0, 0.0, 1.0], vec![0.5, 0.5, 0.0], vec![0.2, 0.3, 0.5]]).unwrap();
        let t = Topology::new("f", ids(3), m).unwrap();
        assert_eq!(restrict(&t, &ids(2)), Err(RsmError::DanglingItem("i0".into())));
    }

    #[test]
    fn combine_single_feature() {
        let t = Topology::encode("p", ids(3), &[1.0, 2.0, 3.0], Direction::LowerIsBetter).unwrap();
        let c = combine(std::slice::from_ref(&t), &WeightVector::reporting(vec![1.0]).unwrap(), 0.15).unwrap();
        let expected = StochasticMatrix::uniform(3).into_matrix() * 0.15 + t.matrix().matrix() * 0.85;
        assert_abs_diff_eq!(c.into_matrix(), expected, epsilon = 1e-15);
    }

    #[test]
    fn combine_uniform_topologies_is_uniform() {
        let t = Topology::new("u", ids(4), StochasticMatrix::uniform(4)).unwrap();
        let w = WeightVector::reporting(vec![0.3, 0.7]).unwrap();
        let c = combine(&[t.clone(), t], &w, 0.2).unwrap();
        assert_abs_diff_eq!(c.into_matrix(), StochasticMatrix::uniform(4).into_matrix(), epsilon = 1e-15);
    }

    #[test]
    fn combine_rejects_mismatch() {
        let a = Topology::new("a", ids(3), StochasticMatrix::uniform(3)).unwrap();
        let b = Topology::new("b", vec!["x".into(), "y".into(), "z".into()], StochasticMatrix::uniform(3)).unwrap();
        let w = WeightVector::uniform(2);
        assert!(matches!(combine(&[a.clone(), b], &w, 0.15), Err(RsmError::Shape(_))));
        assert!(combine(&[a], &w, 0.15).is_err());
    }

    #[test]
    fn weight_forms_round_trip() {
        let w = WeightVector::reporting(vec![0.6, 0.4]).unwrap();
        let n = w.to_native(0.15).unwrap();
        assert_abs_diff_eq!(n.as_slice()[0], 0.51, epsilon = 1e-15);
        assert_abs_diff_eq!(n.to_reporting().as_slice()[1], 0.4, epsilon = 1e-15);
        assert!(WeightVector::reporting(vec![0.6, 0.6]).is_err());
        assert!(WeightVector::reporting(vec![1.1, -0.1]).is_err());
        assert!(WeightVector::native(vec![0.5, 0.5], 0.15).is_err());
    }

    #[test]
    fn ranking_ties_by_id() {
        let r = rank_items(&StochasticMatrix::uniform(3), &["b".into(), "c".into(), "a".into()]).unwrap();
        let order: Vec<_> = r.iter().map(|x| x.item_id.as_str()).collect();
        assert_eq!(order, vec!["a", "b", "c"]);

        let p = StochasticMatrix::from_rows(&[vec![0.5, 0.5], vec![0.9, 0.1]]).unwrap();
        let r = rank_items(&p, &["x".into(), "y".into()]).unwrap();
        assert_eq!(r[0].item_id, "x");
        assert_abs_diff_eq!(r[0].score, 9.0 / 14.0, epsilon = 1e-14);
    }
}
