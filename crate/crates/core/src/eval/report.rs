use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stats::{mean, paired_t_test, sample_std};
use super::ExperimentConfig;
use crate::error::{Result, RsmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub per_split: Vec<f64>,
    /// Comparisons the scorer failed on, summed over splits.
    pub failures: usize,
    /// Mean per-item |score - CTR| on test rows. Diagnostic, not a ranking metric.
    pub ctr_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub model_a: String,
    pub model_b: String,
    /// Mean of `acc_a - acc_b` over splits.
    pub mean_diff: f64,
    pub t: Option<f64>,
    pub p_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub lambda: f64,
    pub seed: u64,
    pub num_splits: usize,
    pub train_fraction: f64,
    pub num_pairs: usize,
    pub models: Vec<ModelSummary>,
    pub comparisons: Vec<PairedComparison>,
}

type SplitView<'a> = (&'a [f64], &'a [usize], &'a [Option<f64>]);

pub(super) fn assemble(config: &ExperimentConfig, num_pairs: usize, splits: &[SplitView<'_>]) -> Result<ExperimentReport> {
    let mut names: Vec<String> = Vec::new();
    for kind in &config.models {
        let base = kind.name().to_string();
        let dupes = names.iter().filter(|n| n.split('#').next() == Some(&base)).count();
        names.push(if dupes == 0 { base } else { format!("{base}#{}", dupes + 1) });
    }

    let models: Vec<ModelSummary> = names
        .iter()
        .enumerate()
        .map(|(m, name)| {
            let per_split: Vec<f64> = splits.iter().map(|s| s.0[m]).collect();
            let maes: Vec<f64> = splits.iter().filter_map(|s| s.2[m]).collect();
            ModelSummary {
                name: name.clone(),
                mean: mean(&per_split),
                std: sample_std(&per_split),
                failures: splits.iter().map(|s| s.1[m]).sum(),
                ctr_mae: (!maes.is_empty()).then(|| mean(&maes)),
                per_split,
            }
        })
        .collect();

    let mut comparisons = Vec::new();
    for a in 0..models.len() {
        for b in a + 1..models.len() {
            let diffs: Vec<f64> = models[a].per_split.iter().zip(&models[b].per_split).map(|(x, y)| x - y).collect();
            let (t, p_value, note) = match paired_t_test(&diffs) {
                Ok(r) => (Some(r.t), Some(r.p_value), None),
                Err(e @ (RsmError::DegenerateVariance | RsmError::TooFewSamples(_))) => (None, None, Some(e.to_string())),
                Err(e) => return Err(e),
            };
            comparisons.push(PairedComparison {
                model_a: models[a].name.clone(),
                model_b: models[b].name.clone(),
                mean_diff: mean(&diffs),
                t,
                p_value,
                note,
            });
        }
    }

    Ok(ExperimentReport {
        lambda: config.learner.lambda,
        seed: config.seed,
        num_splits: config.num_splits,
        train_fraction: config.train_fraction,
        num_pairs,
        models,
        comparisons,
    })
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.prec$}"))
}

fn fmt_p(p: Option<f64>) -> String {
    match p {
        Some(p) if p < 1e-4 => format!("{p:.2e}"),
        other => opt(other, 4),
    }
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| RsmError::Io(e.to_string()))
    }

    /// Aligned plain-text summary.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "lambda={} seed={} splits={} train_fraction={} flip_pairs={}",
            self.lambda, self.seed, self.num_splits, self.train_fraction, self.num_pairs
        );
        let _ = writeln!(s, "{:<12} {:>9} {:>9} {:>9} {:>8}", "model", "accuracy", "std", "ctr_mae", "failures");
        for m in &self.models {
            let _ = writeln!(s, "{:<12} {:>9.4} {:>9.4} {:>9} {:>8}", m.name, m.mean, m.std, opt(m.ctr_mae, 4), m.failures);
        }
        if !self.comparisons.is_empty() {
            let _ = writeln!(s);
            let _ = writeln!(s, "{:<22} {:>10} {:>10} {:>10}", "comparison", "mean_diff", "t", "p");
            for c in &self.comparisons {
                let label = format!("{} - {}", c.model_a, c.model_b);
                let _ = writeln!(s, "{:<22} {:>10.4} {:>10} {:>10}", label, c.mean_diff, opt(c.t, 3), fmt_p(c.p_value));
            }
        }
        s
    }

    /// Long-format CSV: `lambda,split,model,accuracy`.
    pub fn per_split_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| RsmError::Io(e.to_string());
        w.write_record(["lambda", "split", "model", "accuracy"]).map_err(io)?;
        for m in &self.models {
            for (i, a) in m.per_split.iter().enumerate() {
                w.write_record([self.lambda.to_string(), i.to_string(), m.name.clone(), a.to_string()]).map_err(io)?;
            }
        }
        String::from_utf8(w.into_inner().map_err(|e| RsmError::Io(e.to_string()))?).map_err(|e| RsmError::Io(e.to_string()))
    }
}

/// Writes `report.json`, `report.txt` and `report_splits.csv` for one report or a lambda sweep.
///
/// A single report is written as a JSON object, a sweep as an array; the text
/// file has one section per report and the CSV one header.
pub fn write_reports(dir: &Path, reports: &[ExperimentReport]) -> Result<Vec<PathBuf>> {
    let [first, ..] = reports else {
        return Err(RsmError::EmptyDataset);
    };
    fs::create_dir_all(dir)?;
    let json = match reports {
        [one] => serde_json::to_string_pretty(one),
        many => serde_json::to_string_pretty(many),
    }
    .map_err(|e| RsmError::Io(e.to_string()))?;
    let text = reports.iter().map(ExperimentReport::to_table).collect::<Vec<_>>().join("\n");
    let mut csv = first.per_split_csv()?;
    for r in &reports[1..] {
        csv.extend(r.per_split_csv()?.lines().skip(1).flat_map(|l| [l, "\n"]));
    }
    let files = [
        (dir.join("report.json"), json + "\n"),
        (dir.join("report.txt"), text),
        (dir.join("report_splits.csv"), csv),
    ];
    for (path, body) in &files {
        fs::write(path, body)?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::ModelKind;

    #[test]
    fn degenerate_comparison_is_noted_not_fatal() {
        let config = ExperimentConfig { models: vec![ModelKind::Oracle, ModelKind::Constant], num_splits: 3, ..Default::default() };
        let s = [(&[1.0, 0.5][..], &[0, 0][..], &[None, None][..]); 3];
        let r = assemble(&config, 10, &s).unwrap();
        assert_eq!(r.comparisons.len(), 1);
        assert!(r.comparisons[0].t.is_none() && r.comparisons[0].note.is_some());
        assert!(r.to_table().contains("oracle - constant"));
        let csv = r.per_split_csv().unwrap();
        assert_eq!(csv.lines().count(), 7);
        let back: ExperimentReport = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
