use std::collections::BTreeMap;
use std::sync::Arc;

use super::LogRow;

/// Qualification thresholds for a context to express a preference between two items.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlipThresholds {
    /// Context total clicks must be strictly greater than this.
    pub min_total_clicks: f64,
    /// `|clicks_A - clicks_B|` must be at least this.
    pub min_click_diff: f64,
}

impl Default for FlipThresholds {
    fn default() -> Self {
        Self { min_total_clicks: 5.0, min_click_diff: 2.0 }
    }
}

/// Two contexts of one query in which items A and B swap preference.
///
/// `row_1` prefers A, `row_2` prefers B. `item_a < item_b` lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct FlipPair {
    pub row_1: Arc<LogRow>,
    pub row_2: Arc<LogRow>,
    pub item_a: String,
    pub item_b: String,
    /// Sum of `|CTR_A - CTR_B|` over both rows.
    pub strength: f64,
}

impl FlipPair {
    pub fn query_id(&self) -> &str {
        &self.row_1.query_id
    }

    /// Stable identity used to order pairs before shuffling.
    pub fn key(&self) -> (&str, &str, &str, &str, &str) {
        (&self.row_1.query_id, &self.item_a, &self.item_b, &self.row_1.context_id, &self.row_2.context_id)
    }

    pub fn rows(&self) -> [&Arc<LogRow>; 2] {
        [&self.row_1, &self.row_2]
    }
}

#[derive(Default)]
struct Strongest {
    for_a: Option<(f64, usize)>,
    for_b: Option<(f64, usize)>,
}

/// Mines flip pairs, keeping per `(query, A, B)` the strongest A-preferring and B-preferring contexts.
///
/// Output is ordered by query, then by item pair. Ties between equally strong
/// contexts go to the row that comes first in `rows`.
pub fn mine_flip_pairs(rows: &[LogRow], thresholds: FlipThresholds) -> Vec<FlipPair> {
    let mut by_query: BTreeMap<&str, BTreeMap<(&str, &str), Strongest>> = BTreeMap::new();

    for (r, row) in rows.iter().enumerate() {
        let total = row.total_clicks();
        if total <= thresholds.min_total_clicks {
            continue;
        }
        let pairs = by_query.entry(row.query_id.as_str()).or_default();
        for (i, x) in row.items.iter().enumerate() {
            for y in &row.items[i + 1..] {
                let (a, b) = if x.item_id < y.item_id { (x, y) } else { (y, x) };
                let diff = a.clicks - b.clicks;
                if diff.abs() < thresholds.min_click_diff || diff == 0.0 {
                    continue;
                }
                let gap = diff / total;
                let slot = pairs.entry((a.item_id.as_str(), b.item_id.as_str())).or_default();
                let best = if gap > 0.0 { &mut slot.for_a } else { &mut slot.for_b };
                if best.is_none_or(|(g, _)| gap.abs() > g) {
                    *best = Some((gap.abs(), r));
                }
            }
        }
    }

    let mut shared: Vec<Option<Arc<LogRow>>> = vec![None; rows.len()];
    let mut arc = |r: usize| shared[r].get_or_insert_with(|| Arc::new(rows[r].clone())).clone();
    let mut out = Vec::new();
    for pairs in by_query.into_values() {
        for ((a, b), s) in pairs {
            if let (Some((ga, ra)), Some((gb, rb))) = (s.for_a, s.for_b) {
                out.push(FlipPair {
                    row_1: arc(ra),
                    row_2: arc(rb),
                    item_a: a.to_string(),
                    item_b: b.to_string(),
                    strength: ga + gb,
                });
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::LogItem;

    fn row(ctx: &str, clicks: &[(&str, f64)]) -> LogRow {
        LogRow {
            query_id: "q".into(),
            context_id: ctx.into(),
            items: clicks
                .iter()
                .enumerate()
                .map(|(p, (id, c))| LogItem { item_id: id.to_string(), position: p as u32 + 1, clicks: *c, features: vec![] })
                .collect(),
            topologies: None,
        }
    }

    #[test]
    fn canonical_flip() {
        let rows = vec![row("c1", &[("A", 6.5), ("B", 3.5)]), row("c2", &[("A", 3.5), ("B", 6.5)])];
        let pairs = mine_flip_pairs(&rows, FlipThresholds::default());
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].row_1.context_id, "c1");
        assert_eq!(pairs[0].row_2.context_id, "c2");
        assert!((pairs[0].strength - 0.6).abs() < 1e-15);
    }

    #[test]
    fn low_total_excluded() {
        let rows = vec![row("c1", &[("A", 6.5), ("B", 3.5)]), row("c2", &[("A", 1.0), ("B", 3.0)])];
        assert!(mine_flip_pairs(&rows, FlipThresholds::default()).is_empty());
        // exactly five is not more than five
        let rows = vec![row("c1", &[("A", 6.5), ("B", 3.5)]), row("c2", &[("A", 1.5), ("B", 3.5)])];
        assert!(mine_flip_pairs(&rows, FlipThresholds::default()).is_empty());
    }

    #[test]
    fn small_difference_excluded() {
        let rows = vec![row("c1", &[("A", 6.0), ("B", 4.0)]), row("c2", &[("A", 4.5), ("B", 5.5)])];
        assert!(mine_flip_pairs(&rows, FlipThresholds::default()).is_empty());
    }

    #[test]
    fn picks_strongest_contexts() {
        let rows = vec![
            row("c1", &[("A", 6.0), ("B", 4.0), ("C", 0.0)]),
            row("c2", &[("A", 9.0), ("B", 1.0)]),
            row("c3", &[("A", 2.0), ("B", 8.0)]),
        ];
        let pairs = mine_flip_pairs(&rows, FlipThresholds::default());
        let ab: Vec<_> = pairs.iter().filter(|p| p.item_a == "A" && p.item_b == "B").collect();
        assert_eq!(ab.len(), 1);

        // exhaustive: best-strength opposite-sign pair
        let gap = |r: &LogRow| (r.items[0].clicks - r.items[1].clicks) / r.total_clicks();
        let mut best = (0.0, "", "");
        for x in &rows {
            for y in &rows {
                if gap(x) > 0.0 && gap(y) < 0.0 && gap(x) - gap(y) > best.0 {
                    best = (gap(x) - gap(y), &x.context_id, &y.context_id);
                }
            }
        }
        assert_eq!((ab[0].row_1.context_id.as_str(), ab[0].row_2.context_id.as_str()), (best.1, best.2));
        assert!((ab[0].strength - best.0).abs() < 1e-15);
    }

    #[test]
    fn queries_are_separate() {
        let mut other = row("c2", &[("A", 3.5), ("B", 6.5)]);
        other.query_id = "r".into();
        let rows = vec![row("c1", &[("A", 6.5), ("B", 3.5)]), other];
        assert!(mine_flip_pairs(&rows, FlipThresholds::default()).is_empty());
    }
}
