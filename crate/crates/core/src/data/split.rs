use std::collections::HashSet;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FlipPair, LogRow};
use crate::error::{Result, RsmError};

/// A train/test partition made at flip-pair granularity.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    /// Distinct rows of the training pairs that no test pair uses.
    pub train_rows: Vec<Arc<LogRow>>,
    pub train_pairs: Vec<FlipPair>,
    pub test_pairs: Vec<FlipPair>,
}

impl Split {
    pub fn test_rows(&self) -> Vec<Arc<LogRow>> {
        distinct_rows(&self.test_pairs, &HashSet::new())
    }
}

fn distinct_rows(pairs: &[FlipPair], exclude: &HashSet<(String, String)>) -> Vec<Arc<LogRow>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for p in pairs {
        for r in p.rows() {
            let key = (r.query_id.clone(), r.context_id.clone());
            if !exclude.contains(&key) && seen.insert(key) {
                out.push(r.clone());
            }
        }
    }
    out
}

/// Shuffles pairs under `seed` and puts `round(train_fraction * len)` of them in training.
///
/// Input order does not matter: pairs are sorted by key first. A context row
/// that belongs to both a training and a test pair is kept out of training.
pub fn paired_split(pairs: &[FlipPair], train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(RsmError::InvalidConfig(format!("train fraction {train_fraction} outside (0, 1)")));
    }
    if pairs.len() < 2 {
        return Err(RsmError::SplitTooSmall(pairs.len()));
    }
    let mut order: Vec<&FlipPair> = pairs.iter().collect();
    order.sort_by(|a, b| a.key().cmp(&b.key()));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let n_train = ((train_fraction * pairs.len() as f64).round() as usize).clamp(1, pairs.len() - 1);
    let train_pairs: Vec<FlipPair> = order[..n_train].iter().map(|&p| p.clone()).collect();
    let test_pairs: Vec<FlipPair> = order[n_train..].iter().map(|&p| p.clone()).collect();

    let held_out: HashSet<(String, String)> = distinct_rows(&test_pairs, &HashSet::new())
        .iter()
        .map(|r| (r.query_id.clone(), r.context_id.clone()))
        .collect();
    let train_rows = distinct_rows(&train_pairs, &held_out);
    Ok(Split { train_rows, train_pairs, test_pairs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LogItem;

    fn pair(q: usize) -> FlipPair {
        let row = |c: &str, a: f64| {
            Arc::new(LogRow {
                query_id: format!("q{q}"),
                context_id: c.into(),
                items: vec![
                    LogItem { item_id: "A".into(), position: 1, clicks: a, features: vec![] },
                    LogItem { item_id: "B".into(), position: 2, clicks: 10.0 - a, features: vec![] },
                ],
                topologies: None,
            })
        };
        FlipPair { row_1: row("c1", 7.0), row_2: row("c2", 3.0), item_a: "A".into(), item_b: "B".into(), strength: 0.8 }
    }

    #[test]
    fn eighty_twenty() {
        let pairs: Vec<_> = (0..10).map(pair).collect();
        let s = paired_split(&pairs, 0.8, 7).unwrap();
        assert_eq!(s.train_pairs.len(), 8);
        assert_eq!(s.train_rows.len(), 16);
        assert_eq!(s.test_pairs.len(), 2);
        assert_eq!(s.test_rows().len(), 4);
    }

    #[test]
    fn deterministic_and_order_insensitive() {
        let pairs: Vec<_> = (0..10).map(pair).collect();
        let mut rev = pairs.clone();
        rev.reverse();
        let a = paired_split(&pairs, 0.8, 42).unwrap();
        assert_eq!(a, paired_split(&pairs, 0.8, 42).unwrap());
        assert_eq!(a, paired_split(&rev, 0.8, 42).unwrap());
        assert_ne!(a.test_pairs, paired_split(&pairs, 0.8, 43).unwrap().test_pairs);
    }

    #[test]
    fn too_small() {
        assert_eq!(paired_split(&[pair(0)], 0.8, 0), Err(RsmError::SplitTooSmall(1)));
        assert!(paired_split(&[pair(0), pair(1)], 1.0, 0).is_err());
    }

    #[test]
    fn shared_row_stays_out_of_training() {
        let mut p1 = pair(0);
        p1.item_b = "C".into();
        let pairs = vec![pair(0), p1];
        let s = paired_split(&pairs, 0.5, 1).unwrap();
        assert!(s.train_rows.is_empty());
    }
}
