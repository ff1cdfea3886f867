use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LogRow, Schema};
use crate::error::{Result, RsmError};

/// JSON form of a dataset: the schema plus rows, which may carry pre-encoded topologies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JsonDataset {
    pub schema: Schema,
    pub rows: Vec<LogRow>,
}

impl JsonDataset {
    pub fn validate(&self) -> Result<()> {
        self.schema.validate()?;
        self.rows.iter().try_for_each(|r| r.validate(&self.schema))
    }
}

pub fn load_json(path: impl AsRef<Path>) -> Result<JsonDataset> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| RsmError::Io(format!("{}: {e}", path.as_ref().display())))?;
    let ds: JsonDataset = serde_json::from_str(&text).map_err(|e| RsmError::Parse { line: e.line() as u64, message: e.to_string() })?;
    ds.validate()?;
    Ok(ds)
}

pub fn save_json(path: impl AsRef<Path>, dataset: &JsonDataset) -> Result<()> {
    let text = serde_json::to_string_pretty(dataset).map_err(|e| RsmError::Io(e.to_string()))?;
    fs::write(path.as_ref(), text + "\n").map_err(|e| RsmError::Io(format!("{}: {e}", path.as_ref().display())))
}
