//! The paper-shredder example: does a third product flip the preference between A and B?
//!
//! Products A, B, C cost 20, 50 and 95 and shred 7, 11 and 12 sheets. Price is
//! lower-is-better, capacity higher-is-better. The demo ranks the contexts
//! {A, B} and {A, B, C} under rank-encoded topologies and reports whether A
//! and B swap places. If the published weights do not flip them, every weight
//! pair on a 0.01 grid over [0, 1]^2 is tried.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::{read_csv, LogRow, Schema};
use crate::error::{Result, RsmError};
use crate::topology::{combine, rank_items, restrict, Direction, FeatureSpec, RankedItem, Topology, WeightVector};

pub const SHREDDER_CSV: &str = include_str!("../data/shredder.csv");

/// Published weights: price 0.6, sheet capacity 0.4.
pub const PAPER_WEIGHTS: (f64, f64) = (0.6, 0.4);

pub const SEARCH_STEP: f64 = 0.01;

pub fn shredder_schema() -> Schema {
    Schema {
        features: vec![
            FeatureSpec::numeric("price", Direction::LowerIsBetter),
            FeatureSpec::numeric("capacity", Direction::HigherIsBetter),
        ],
        use_position: false,
    }
}

/// The bundled two-context dataset.
pub fn shredder_rows() -> Result<Vec<LogRow>> {
    let load = read_csv(SHREDDER_CSV.as_bytes(), &shredder_schema())?;
    if let Some(e) = load.errors.into_iter().next() {
        return Err(e);
    }
    Ok(load.rows)
}

/// How the two-item topologies are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Rank-encode each context over exactly its own items.
    PerContext,
    /// Rank-encode {A, B, C} once and restrict to {A, B}.
    Restricted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShredderOutcome {
    pub route: Route,
    /// `(price, capacity)` as given; normalized to sum to one before use.
    pub weights: (f64, f64),
    pub lambda: f64,
    pub pair: Vec<RankedItem>,
    pub triple: Vec<RankedItem>,
    pub a_over_b_in_pair: bool,
    pub b_over_a_in_triple: bool,
}

impl ShredderOutcome {
    pub fn flip(&self) -> bool {
        self.a_over_b_in_pair && self.b_over_a_in_triple
    }

    pub fn score(ranking: &[RankedItem], id: &str) -> f64 {
        ranking.iter().find(|r| r.item_id == id).map_or(f64::NAN, |r| r.score)
    }
}

fn context_topologies(rows: &[LogRow], schema: &Schema) -> Result<(Vec<Topology>, Vec<Topology>)> {
    let find = |n: usize| {
        rows.iter()
            .find(|r| r.items.len() == n)
            .ok_or_else(|| RsmError::Schema(format!("shredder data lacks a {n}-item context")))
    };
    Ok((find(2)?.topologies(schema)?, find(3)?.topologies(schema)?))
}

fn ranked(tops: &[Topology], w: &WeightVector, lambda: f64) -> Result<Vec<RankedItem>> {
    rank_items(&combine(tops, w, lambda)?, tops[0].item_ids())
}

pub fn evaluate(route: Route, weights: (f64, f64), lambda: f64) -> Result<ShredderOutcome> {
    let rows = shredder_rows()?;
    let (pair_tops, triple_tops) = context_topologies(&rows, &shredder_schema())?;
    evaluate_with(route, &pair_tops, &triple_tops, weights, lambda)
}

fn evaluate_with(route: Route, pair_tops: &[Topology], triple_tops: &[Topology], weights: (f64, f64), lambda: f64) -> Result<ShredderOutcome> {
    let total = weights.0 + weights.1;
    if !(weights.0 >= 0.0 && weights.1 >= 0.0 && total > 0.0) {
        return Err(RsmError::InvalidWeights(format!("{weights:?}")));
    }
    let w = WeightVector::reporting(vec![weights.0 / total, weights.1 / total])?;
    let pair_tops = match route {
        Route::PerContext => pair_tops.to_vec(),
        Route::Restricted => {
            let ids = pair_tops[0].item_ids().to_vec();
            triple_tops.iter().map(|t| restrict(t, &ids)).collect::<Result<_>>()?
        }
    };
    let pair = ranked(&pair_tops, &w, lambda)?;
    let triple = ranked(triple_tops, &w, lambda)?;
    let s = ShredderOutcome::score;
    Ok(ShredderOutcome {
        route,
        weights,
        lambda,
        a_over_b_in_pair: s(&pair, "A") > s(&pair, "B"),
        b_over_a_in_triple: s(&triple, "B") > s(&triple, "A"),
        pair,
        triple,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteSearch {
    pub route: Route,
    pub candidates: usize,
    /// Weight pairs that produce the flip, in grid order.
    pub flipping: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShredderReport {
    pub lambda: f64,
    /// The published weights under each route.
    pub paper: Vec<ShredderOutcome>,
    /// Grid searches, run only when the published weights do not flip.
    pub searches: Vec<RouteSearch>,
    /// Per-context result at the documented weights: the first flipping grid
    /// point when one exists, otherwise the published weights.
    pub documented: ShredderOutcome,
}

impl ShredderReport {
    pub fn flip(&self) -> bool {
        self.documented.flip()
    }
}

/// Runs the demo at restart probability `lambda`.
pub fn run_shredder_demo(lambda: f64) -> Result<ShredderReport> {
    let rows = shredder_rows()?;
    let (pair_tops, triple_tops) = context_topologies(&rows, &shredder_schema())?;
    let eval = |route, w| evaluate_with(route, &pair_tops, &triple_tops, w, lambda);

    let paper = vec![eval(Route::PerContext, PAPER_WEIGHTS)?, eval(Route::Restricted, PAPER_WEIGHTS)?];
    let mut searches = Vec::new();
    let mut documented = paper[0].clone();
    if !documented.flip() {
        let steps = (1.0 / SEARCH_STEP).round() as usize;
        for route in [Route::PerContext, Route::Restricted] {
            let mut search = RouteSearch { route, candidates: 0, flipping: Vec::new() };
            for i in 0..=steps {
                for j in 0..=steps {
                    if i == 0 && j == 0 {
                        continue;
                    }
                    let w = (i as f64 * SEARCH_STEP, j as f64 * SEARCH_STEP);
                    search.candidates += 1;
                    if eval(route, w)?.flip() {
                        search.flipping.push(w);
                    }
                }
            }
            searches.push(search);
        }
        if let Some(&w) = searches[0].flipping.first() {
            documented = eval(Route::PerContext, w)?;
        }
    }
    Ok(ShredderReport { lambda, paper, searches, documented })
}

fn fmt_ranking(r: &[RankedItem]) -> String {
    r.iter().map(|x| format!("{} {:.5}", x.item_id, x.score)).collect::<Vec<_>>().join(" > ")
}

impl fmt::Display for ShredderOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "  route {:?}, weights price={} capacity={}, lambda={}", self.route, self.weights.0, self.weights.1, self.lambda)?;
        writeln!(f, "    {{A,B}}:   {}", fmt_ranking(&self.pair))?;
        writeln!(f, "    {{A,B,C}}: {}", fmt_ranking(&self.triple))?;
        writeln!(f, "    A over B without C: {}; B over A with C: {}; flip: {}", self.a_over_b_in_pair, self.b_over_a_in_triple, self.flip())
    }
}

impl fmt::Display for ShredderReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "paper shredders (A: $20/7 sheets, B: $50/11, C: $95/12)")?;
        writeln!(f, "published weights:")?;
        for o in &self.paper {
            write!(f, "{o}")?;
        }
        for s in &self.searches {
            writeln!(
                f,
                "grid search ({:?}, step {SEARCH_STEP}): {} of {} weight pairs flip A and B",
                s.route,
                s.flipping.len(),
                s.candidates
            )?;
        }
        writeln!(f, "documented configuration:")?;
        write!(f, "{}", self.documented)?;
        writeln!(f, "flip: {}", if self.flip() { "yes" } else { "no" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_csv_has_two_contexts() {
        let rows = shredder_rows().unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].item_ids(), vec!["A", "B"]);
        assert_eq!(rows[1].item_ids(), vec!["A", "B", "C"]);
    }

    #[test]
    fn middle_item_is_pinned_at_one_third() {
        // B is the middle rank on both features, so its column is 1/3 in every row
        for w in [(1.0, 0.0), (0.6, 0.4), (0.2, 0.8)] {
            let o = evaluate(Route::PerContext, w, 0.15).unwrap();
            assert!((ShredderOutcome::score(&o.triple, "B") - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_preference_follows_price_weight() {
        assert!(evaluate(Route::PerContext, (0.6, 0.4), 0.15).unwrap().a_over_b_in_pair);
        assert!(!evaluate(Route::PerContext, (0.4, 0.6), 0.15).unwrap().a_over_b_in_pair);
    }

    #[test]
    fn report_renders() {
        let r = run_shredder_demo(0.15).unwrap();
        let text = r.to_string();
        assert!(text.contains("{A,B,C}"));
        assert_eq!(r.paper.len(), 2);
    }
}
