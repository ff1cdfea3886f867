//! Click-log rows, their on-disk formats, flip-pair mining, paired splitting
//! and the synthetic generator.

mod csv_io;
mod flips;
mod json_io;
mod split;
mod synth;

use std::collections::HashSet;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RsmError};
use crate::learner::{Context, TrainingInstance};
use crate::markov::StochasticMatrix;
use crate::topology::{Direction, FeatureSpec, Topology};

pub use csv_io::{load_csv, read_csv, save_csv, write_csv, CsvLoad};
pub use flips::{mine_flip_pairs, FlipPair, FlipThresholds};
pub use json_io::{load_json, save_json, JsonDataset};
pub use split::{paired_split, Split};
pub use synth::{generate_synthetic, Manifest, Noise, SyntheticDataset, SyntheticSpec, NOISE_FREE_CLICK_SCALE};

/// Name of the implicit display-position feature.
pub const POSITION_FEATURE: &str = "position";

/// Fixed leading CSV columns.
pub const BASE_COLUMNS: [&str; 5] = ["query_id", "context_id", "item_id", "position", "clicks"];

/// Feature columns of a dataset and whether display position is used as an extra feature.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
    #[serde(default = "default_true")]
    pub use_position: bool,
}

fn default_true() -> bool {
    true
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>, use_position: bool) -> Result<Self> {
        let s = Self { features, use_position };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for f in &self.features {
            if BASE_COLUMNS.contains(&f.name.as_str()) {
                return Err(RsmError::Schema(format!("feature name {} collides with a fixed column", f.name)));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(RsmError::Schema(format!("duplicate feature name {}", f.name)));
            }
        }
        if self.k() == 0 {
            return Err(RsmError::Schema("schema has no features".into()));
        }
        Ok(())
    }

    /// Features that become topologies, position last when enabled.
    pub fn topology_specs(&self) -> Vec<FeatureSpec> {
        let mut specs = self.features.clone();
        if self.use_position {
            specs.push(FeatureSpec::numeric(POSITION_FEATURE, Direction::LowerIsBetter));
        }
        specs
    }

    /// Number of topologies (and of regression features).
    pub fn k(&self) -> usize {
        self.features.len() + usize::from(self.use_position)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogItem {
    pub item_id: String,
    /// 1-based display slot.
    pub position: u32,
    /// Aggregated clicks; real-valued so noise-free synthetic data can carry exact shares.
    pub clicks: f64,
    pub features: Vec<f64>,
}

/// One query shown with one context, with per-item clicks and features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub query_id: String,
    pub context_id: String,
    /// Items in display order.
    pub items: Vec<LogItem>,
    /// Pre-encoded topologies (row-major `n x n`, one per schema feature); JSON datasets only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topologies: Option<Vec<Vec<f64>>>,
}

impl LogRow {
    pub fn key(&self) -> (&str, &str) {
        (&self.query_id, &self.context_id)
    }

    pub fn item_ids(&self) -> Vec<String> {
        self.items.iter().map(|i| i.item_id.clone()).collect()
    }

    pub fn index_of(&self, item_id: &str) -> Option<usize> {
        self.items.iter().position(|i| i.item_id == item_id)
    }

    pub fn total_clicks(&self) -> f64 {
        self.items.iter().map(|i| i.clicks).sum()
    }

    /// Within-context click shares; all zero when nothing was clicked.
    pub fn ctrs(&self) -> Vec<f64> {
        let total = self.total_clicks();
        self.items
            .iter()
            .map(|i| if total > 0.0 { i.clicks / total } else { 0.0 })
            .collect()
    }

    /// Feature values of item `idx` in schema order, position last when enabled.
    pub fn feature_vector(&self, idx: usize, schema: &Schema) -> Vec<f64> {
        let item = &self.items[idx];
        let mut v = item.features.clone();
        if schema.use_position {
            v.push(item.position as f64);
        }
        v
    }

    /// Checks shape against the schema.
    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.items.len() < 2 {
            return Err(RsmError::ContextTooSmall(self.items.len()));
        }
        let mut seen = HashSet::new();
        for item in &self.items {
            if !seen.insert(item.item_id.as_str()) {
                return Err(RsmError::Schema(format!(
                    "item {} appears twice in context {}/{}",
                    item.item_id, self.query_id, self.context_id
                )));
            }
            if item.features.len() != schema.features.len() {
                return Err(RsmError::Schema(format!(
                    "item {} has {} feature values, schema has {}",
                    item.item_id,
                    item.features.len(),
                    schema.features.len()
                )));
            }
            if !(item.clicks >= 0.0 && item.clicks.is_finite()) {
                return Err(RsmError::Schema(format!("item {} has invalid clicks {}", item.item_id, item.clicks)));
            }
            for (spec, &v) in schema.features.iter().zip(&item.features) {
                spec.check_value(v)?;
            }
        }
        if let Some(tops) = &self.topologies {
            let n = self.items.len();
            if tops.len() != schema.k() || tops.iter().any(|t| t.len() != n * n) {
                return Err(RsmError::Schema(format!(
                    "context {}/{} needs {} explicit {n}x{n} topologies",
                    self.query_id,
                    self.context_id,
                    schema.k()
                )));
            }
        }
        Ok(())
    }

    /// The row's topologies: explicit ones when present, otherwise rank-encoded features.
    pub fn topologies(&self, schema: &Schema) -> Result<Vec<Topology>> {
        let ids = self.item_ids();
        let specs = schema.topology_specs();
        if let Some(explicit) = &self.topologies {
            if explicit.len() != specs.len() {
                return Err(RsmError::Schema(format!("{} explicit topologies for {} features", explicit.len(), specs.len())));
            }
            return specs
                .iter()
                .zip(explicit)
                .map(|(spec, m)| Topology::new(spec.name.clone(), ids.clone(), StochasticMatrix::from_row_slice(ids.len(), m)?))
                .collect();
        }
        specs
            .iter()
            .enumerate()
            .map(|(f, spec)| {
                let values: Vec<f64> = (0..self.items.len()).map(|i| self.feature_vector(i, schema)[f]).collect();
                Topology::encode(spec.name.clone(), ids.clone(), &values, spec.direction)
            })
            .collect()
    }

    pub fn context(&self, schema: &Schema) -> Result<Context> {
        Context::new(self.query_id.clone(), self.context_id.clone(), self.topologies(schema)?)
    }
}

/// One instance per item, labelled with its within-context CTR. Rows without clicks are skipped.
pub fn training_instances<R: AsRef<LogRow>>(rows: &[R], schema: &Schema) -> Result<Vec<TrainingInstance>> {
    let mut out = Vec::new();
    for row in rows {
        let row = row.as_ref();
        if row.total_clicks() <= 0.0 {
            warn!("skipping context {}/{} with no clicks", row.query_id, row.context_id);
            continue;
        }
        let ctx = Arc::new(row.context(schema)?);
        for (u, ctr) in row.ctrs().into_iter().enumerate() {
            out.push(TrainingInstance::new(ctx.clone(), u, ctr.clamp(0.0, 1.0))?);
        }
    }
    Ok(out)
}

impl AsRef<LogRow> for LogRow {
    fn as_ref(&self) -> &LogRow {
        self
    }
}
