//! Shared generators and brute-force oracles for the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rsm_core::data::{generate_synthetic, Noise, SyntheticDataset, SyntheticSpec};
use rsm_core::learner::{Context, TrainingInstance};
use rsm_core::markov::StochasticMatrix;
use rsm_core::topology::{Direction, Topology};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Uniform point on the simplex.
pub fn simplex(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let e: Vec<f64> = (0..k).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

/// Random direction with zero sum and unit infinity norm.
pub fn sum_zero_direction(rng: &mut impl Rng, k: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..k).map(|_| rng.random::<f64>() - 0.5).collect();
    let m = x.iter().sum::<f64>() / k as f64;
    x.iter_mut().for_each(|v| *v -= m);
    let norm = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    x.into_iter().map(|v| v / norm).collect()
}

pub fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("i{i}")).collect()
}

/// Dense random row-stochastic matrix, or a rank encoding of random values (half each).
pub fn random_topology(rng: &mut impl Rng, n: usize, name: &str) -> Topology {
    if rng.random_bool(0.5) {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| simplex(rng, n)).collect();
        Topology::new(name, ids(n), StochasticMatrix::from_rows(&rows).unwrap()).unwrap()
    } else {
        let values: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let dir = if rng.random_bool(0.5) { Direction::HigherIsBetter } else { Direction::LowerIsBetter };
        Topology::encode(name, ids(n), &values, dir).unwrap()
    }
}

pub fn random_context(rng: &mut impl Rng, n: usize, k: usize) -> Context {
    let tops = (0..k).map(|i| random_topology(rng, n, &format!("t{i}"))).collect();
    Context::new("q", "c", tops).unwrap()
}

/// `lambda/n + (1 - lambda) sum_i w_i T_i` assembled entry by entry.
pub fn combine_by_hand(tops: &[&DMatrix<f64>], reporting: &[f64], lambda: f64) -> DMatrix<f64> {
    let n = tops[0].nrows();
    DMatrix::from_fn(n, n, |i, j| {
        lambda / n as f64 + (1.0 - lambda) * tops.iter().zip(reporting).map(|(t, w)| w * t[(i, j)]).sum::<f64>()
    })
}

/// Same with weights that already sum to `1 - lambda`.
pub fn combine_native_by_hand(tops: &[&DMatrix<f64>], native: &[f64], lambda: f64) -> DMatrix<f64> {
    let scaled: Vec<f64> = native.iter().map(|w| w / (1.0 - lambda)).collect();
    combine_by_hand(tops, &scaled, lambda)
}

/// Power iteration from uniform until successive iterates agree to 1e-15.
pub fn power_stationary(p: &DMatrix<f64>) -> Vec<f64> {
    let n = p.nrows();
    let mut x = DMatrix::from_element(1, n, 1.0 / n as f64);
    for _ in 0..1_000_000 {
        let next = &x * p;
        let delta = (&next - &x).abs().max();
        x = next;
        if delta < 1e-15 {
            break;
        }
    }
    let s = x.sum();
    x.iter().map(|v| v / s).collect()
}

pub fn matrices(ctx: &Context) -> Vec<&DMatrix<f64>> {
    ctx.topologies().iter().map(|t| t.matrix().matrix()).collect()
}

pub fn instance(ctx: Context, u: usize, p: f64) -> TrainingInstance {
    TrainingInstance::new(Arc::new(ctx), u, p).unwrap()
}

/// Rank-encoding edge weight `n + rank(j) - rank(i)` for distinct values, rows normalized.
pub fn rank_matrix_by_hand(values: &[f64], higher_is_better: bool) -> DMatrix<f64> {
    let n = values.len();
    let rank = |i: usize| {
        1 + (0..n)
            .filter(|&j| if higher_is_better { values[j] < values[i] } else { values[j] > values[i] })
            .count()
    };
    let raw = DMatrix::from_fn(n, n, |i, j| (n + rank(j) - rank(i)) as f64);
    let mut m = raw.clone();
    for (i, mut row) in m.row_iter_mut().enumerate() {
        row /= raw.row(i).sum();
    }
    m
}

/// k = 3, n = 5, 40 queries, noise-free, on-grid weights.
pub fn oracle_dataset() -> SyntheticDataset {
    generate_synthetic(&SyntheticSpec::simple(3, 5, 40, vec![0.5, 0.3, 0.2], 2012)).unwrap()
}

pub const ORACLE_WEIGHTS: [f64; 3] = [0.5, 0.3, 0.2];

/// Flip-rich click log: 60 queries, 7-item catalogs, 6 contexts of 5 items each,
/// position as a third topology, 10^4 multinomial clicks per context.
pub fn flip_rich_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        k: 3,
        n: 5,
        num_queries: 60,
        catalog_size: 7,
        contexts_per_query: 6,
        true_weights: vec![0.5, 0.3, 0.2],
        lambda: 0.15,
        seed,
        noise: Noise::Multinomial { clicks_per_context: 10_000 },
        position_feature: true,
    }
}
