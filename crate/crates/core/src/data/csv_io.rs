//! Flat CSV: one line per (query, context, item).
//!
//! Columns are `query_id, context_id, item_id, position, clicks` followed by one
//! column per schema feature. Contexts are rebuilt by grouping on
//! `(query_id, context_id)` in order of first appearance.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{LogItem, LogRow, Schema, BASE_COLUMNS};
use crate::error::{Result, RsmError};

/// Parsed rows plus one error per rejected line or context.
///
/// A context with any malformed line is dropped entirely so that no partial
/// context reaches the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvLoad {
    pub rows: Vec<LogRow>,
    pub errors: Vec<RsmError>,
}

pub fn load_csv(path: impl AsRef<Path>, schema: &Schema) -> Result<CsvLoad> {
    let file = File::open(path.as_ref()).map_err(|e| RsmError::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_csv(file, schema)
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<CsvLoad> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| RsmError::Schema(format!("unreadable header: {e}")))?.clone();
    let column = |name: &str| headers.iter().position(|h| h == name);

    let mut missing: Vec<&str> = BASE_COLUMNS.iter().copied().filter(|c| column(c).is_none()).collect();
    missing.extend(schema.features.iter().map(|f| f.name.as_str()).filter(|c| column(c).is_none()));
    if !missing.is_empty() {
        return Err(RsmError::Schema(format!("missing columns: {}", missing.join(", "))));
    }
    let base: Vec<usize> = BASE_COLUMNS.iter().map(|c| column(c).unwrap()).collect();
    let feats: Vec<usize> = schema.features.iter().map(|f| column(&f.name).unwrap()).collect();

    let mut groups: Vec<LogRow> = Vec::new();
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut broken: HashSet<usize> = HashSet::new();
    let mut errors = Vec::new();

    for record in rdr.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                errors.push(RsmError::Parse { line, message: e.to_string() });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let key = (field(base[0]).to_string(), field(base[1]).to_string());
        let slot = *index.entry(key.clone()).or_insert_with(|| {
            groups.push(LogRow { query_id: key.0.clone(), context_id: key.1.clone(), items: Vec::new(), topologies: None });
            groups.len() - 1
        });

        match parse_item(&record, &base, &feats, schema) {
            Ok(item) => groups[slot].items.push(item),
            Err(message) => {
                errors.push(RsmError::Parse { line, message });
                broken.insert(slot);
            }
        }
    }

    let mut rows = Vec::with_capacity(groups.len());
    for (slot, mut row) in groups.into_iter().enumerate() {
        if broken.contains(&slot) {
            continue;
        }
        row.items.sort_by_key(|i| i.position);
        match row.validate(schema) {
            Ok(()) => rows.push(row),
            Err(e) => errors.push(e),
        }
    }
    Ok(CsvLoad { rows, errors })
}

fn parse_item(record: &csv::StringRecord, base: &[usize], feats: &[usize], schema: &Schema) -> std::result::Result<LogItem, String> {
    let get = |i: usize| record.get(i).ok_or_else(|| format!("missing field {}", i + 1));
    let item_id = get(base[2])?.to_string();
    if item_id.is_empty() {
        return Err("empty item_id".into());
    }
    let position: u32 = get(base[3])?.parse().map_err(|_| format!("position {:?} is not a positive integer", get(base[3]).unwrap_or("")))?;
    let clicks: f64 = get(base[4])?.parse().map_err(|_| format!("clicks {:?} is not numeric", get(base[4]).unwrap_or("")))?;
    if !(clicks >= 0.0 && clicks.is_finite()) {
        return Err(format!("clicks must be nonnegative, got {clicks}"));
    }
    let mut features = Vec::with_capacity(feats.len());
    for (spec, &col) in schema.features.iter().zip(feats) {
        let raw = get(col)?;
        let v: f64 = raw.parse().map_err(|_| format!("feature {} value {raw:?} is not numeric", spec.name))?;
        spec.check_value(v).map_err(|e| e.to_string())?;
        features.push(v);
    }
    Ok(LogItem { item_id, position, clicks, features })
}

pub fn save_csv(path: impl AsRef<Path>, rows: &[LogRow], schema: &Schema) -> Result<()> {
    let file = File::create(path.as_ref()).map_err(|e| RsmError::Io(format!("{}: {e}", path.as_ref().display())))?;
    write_csv(file, rows, schema)
}

pub fn write_csv<W: Write>(writer: W, rows: &[LogRow], schema: &Schema) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| RsmError::Io(e.to_string());
    let mut header: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(schema.features.iter().map(|f| f.name.clone()));
    wtr.write_record(&header).map_err(io)?;
    for row in rows {
        for item in &row.items {
            let mut rec = vec![
                row.query_id.clone(),
                row.context_id.clone(),
                item.item_id.clone(),
                item.position.to_string(),
                item.clicks.to_string(),
            ];
            rec.extend(item.features.iter().map(|v| v.to_string()));
            wtr.write_record(&rec).map_err(io)?;
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{Direction, FeatureSpec};

    fn schema() -> Schema {
        Schema::new(vec![FeatureSpec::numeric("price", Direction::LowerIsBetter)], true).unwrap()
    }

    const GOOD: &str = "query_id,context_id,item_id,position,clicks,price\n\
        q,c1,a,1,5,20\n\
        q,c1,b,2,3,50\n\
        q,c2,a,2,1,20\n\
        q,c2,b,1,4,50\n\
        q,c2,c,3,2,95\n";

    #[test]
    fn groups_contexts() {
        let load = read_csv(GOOD.as_bytes(), &schema()).unwrap();
        assert!(load.errors.is_empty());
        assert_eq!(load.rows.len(), 2);
        // sorted by position
        assert_eq!(load.rows[1].item_ids(), vec!["b", "a", "c"]);
    }

    #[test]
    fn bad_line_drops_its_context() {
        let bad = GOOD.replace("q,c2,c,3,2,95", "q,c2,c,3,2,cheap");
        let load = read_csv(bad.as_bytes(), &schema()).unwrap();
        assert_eq!(load.rows.len(), 1);
        assert_eq!(load.errors.len(), 1);
        assert!(matches!(load.errors[0], RsmError::Parse { line: 6, .. }));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let src = "query_id,context_id,item_id,position,clicks\nq,c,a,1,1\n";
        assert!(matches!(read_csv(src.as_bytes(), &schema()), Err(RsmError::Schema(_))));
    }

    #[test]
    fn round_trip() {
        let load = read_csv(GOOD.as_bytes(), &schema()).unwrap();
        let mut buf = Vec::new();
        write_csv(&mut buf, &load.rows, &schema()).unwrap();
        let again = read_csv(buf.as_slice(), &schema()).unwrap();
        assert_eq!(again.rows, load.rows);
    }
}
