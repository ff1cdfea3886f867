use std::sync::Arc;

use rand::distr::Distribution as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};

use super::{LogItem, LogRow, Schema};
use crate::error::{Result, RsmError};
use crate::learner::{Context, TrainingInstance};
use crate::markov::stationary;
use crate::topology::{check_lambda, combine, Direction, FeatureSpec, WeightVector};

/// Noise-free clicks are `p* x NOISE_FREE_CLICK_SCALE`, so CTRs equal `p*` up to rounding.
pub const NOISE_FREE_CLICK_SCALE: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Noise {
    None,
    /// Clicks per context drawn from `Multinomial(clicks_per_context, p*)`.
    Multinomial { clicks_per_context: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    /// Number of topologies, including position when `position_feature` is set.
    pub k: usize,
    /// Items per context.
    pub n: usize,
    pub num_queries: usize,
    /// Items per query; each context shows a random `n`-subset in random order.
    pub catalog_size: usize,
    pub contexts_per_query: usize,
    /// Reporting-form weights, one per topology.
    pub true_weights: Vec<f64>,
    pub lambda: f64,
    pub seed: u64,
    pub noise: Noise,
    /// Use display position as the last topology.
    pub position_feature: bool,
}

impl SyntheticSpec {
    /// One context of `n` fresh items per query, no position topology, no noise.
    pub fn simple(k: usize, n: usize, num_queries: usize, true_weights: Vec<f64>, seed: u64) -> Self {
        Self {
            k,
            n,
            num_queries,
            catalog_size: n,
            contexts_per_query: 1,
            true_weights,
            lambda: 0.15,
            seed,
            noise: Noise::None,
            position_feature: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if self.k == 0 || self.n < 2 || self.num_queries == 0 || self.contexts_per_query == 0 {
            return Err(RsmError::InvalidConfig("synthetic spec needs k >= 1, n >= 2 and at least one context".into()));
        }
        if self.catalog_size < self.n {
            return Err(RsmError::InvalidConfig(format!("catalog of {} cannot fill contexts of {}", self.catalog_size, self.n)));
        }
        if self.true_weights.len() != self.k {
            return Err(RsmError::InvalidWeights(format!("{} weights for k = {}", self.true_weights.len(), self.k)));
        }
        WeightVector::reporting(self.true_weights.clone())?;
        Ok(())
    }

    pub fn schema(&self) -> Schema {
        let plain = self.k - usize::from(self.position_feature);
        let features = (1..=plain).map(|i| FeatureSpec::numeric(format!("f{i}"), Direction::HigherIsBetter)).collect();
        Schema { features, use_position: self.position_feature }
    }
}

/// Sidecar written next to a generated CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// CSV file name, relative to the manifest.
    pub data_file: String,
    pub schema: Schema,
    /// Seed given on the command line; `spec.seed` is derived from it.
    pub seed: u64,
    pub spec: SyntheticSpec,
}

#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub schema: Schema,
    /// Click view of every context.
    pub rows: Vec<LogRow>,
    /// One instance per item, labelled with the exact `p*`.
    pub instances: Vec<TrainingInstance>,
    /// `p*` per row, aligned with `rows`.
    pub labels: Vec<Vec<f64>>,
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let schema = spec.schema();
    let weights = WeightVector::reporting(spec.true_weights.clone())?;
    let plain = schema.features.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut rows = Vec::with_capacity(spec.num_queries * spec.contexts_per_query);
    let mut instances = Vec::new();
    let mut labels = Vec::new();

    for q in 0..spec.num_queries {
        let catalog: Vec<Vec<f64>> = (0..spec.catalog_size).map(|_| (0..plain).map(|_| rng.random::<f64>()).collect()).collect();
        for c in 0..spec.contexts_per_query {
            let shown = rand::seq::index::sample(&mut rng, spec.catalog_size, spec.n).into_vec();
            let mut row = LogRow {
                query_id: format!("q{q}"),
                context_id: format!("c{c}"),
                items: shown
                    .iter()
                    .enumerate()
                    .map(|(slot, &i)| LogItem {
                        item_id: format!("q{q}-i{i}"),
                        position: slot as u32 + 1,
                        clicks: 0.0,
                        features: catalog[i].clone(),
                    })
                    .collect(),
                topologies: None,
            };
            let topologies = row.topologies(&schema)?;
            let p = stationary(&combine(&topologies, &weights, spec.lambda)?)?.into_vec();

            let clicks = match spec.noise {
                Noise::None => p.iter().map(|x| x * NOISE_FREE_CLICK_SCALE).collect(),
                Noise::Multinomial { clicks_per_context } => multinomial(&mut rng, clicks_per_context, &p)?,
            };
            row.items.iter_mut().zip(clicks).for_each(|(item, c)| item.clicks = c);

            let ctx = Arc::new(Context::new(row.query_id.clone(), row.context_id.clone(), topologies)?);
            for (u, &pu) in p.iter().enumerate() {
                instances.push(TrainingInstance::new(ctx.clone(), u, pu)?);
            }
            rows.push(row);
            labels.push(p);
        }
    }
    Ok(SyntheticDataset { schema, rows, instances, labels })
}

/// Multinomial draw as a chain of conditional binomials.
fn multinomial(rng: &mut ChaCha8Rng, trials: u64, p: &[f64]) -> Result<Vec<f64>> {
    let mut left = trials;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(p.len());
    for (i, &pi) in p.iter().enumerate() {
        let x = if i + 1 == p.len() || left == 0 {
            left
        } else {
            let prob = if mass > 0.0 { (pi / mass).clamp(0.0, 1.0) } else { 1.0 };
            Binomial::new(left, prob).map_err(|e| RsmError::InvalidConfig(e.to_string()))?.sample(rng)
        };
        left -= x;
        mass -= pi;
        out.push(x as f64);
    }
    Ok(out)
}
