//! Framing × narrative-function cross-tabulation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tinker_core::ScaffoldType;

use crate::coding::{CodedTurn, FunctionSet};
use crate::AnalysisError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossTabRow {
    pub total: usize,
    /// Counts per label combination, e.g. `AddEvent+AddCausality`.
    pub counts: BTreeMap<FunctionSet, usize>,
}

impl CrossTabRow {
    pub fn proportion(&self, set: &FunctionSet) -> f64 {
        match self.total {
            0 => 0.0,
            n => *self.counts.get(set).unwrap_or(&0) as f64 / n as f64,
        }
    }

    pub fn proportions(&self) -> BTreeMap<FunctionSet, f64> {
        self.counts.keys().map(|k| (k.clone(), self.proportion(k))).collect()
    }

    /// Share of answers that contributed anything.
    pub fn contribution_rate(&self) -> f64 {
        let contributed: usize = self.counts.iter().filter(|(k, _)| k.is_contribution()).map(|(_, n)| n).sum();
        contributed as f64 / self.total.max(1) as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossTab {
    pub rows: BTreeMap<ScaffoldType, CrossTabRow>,
}

impl CrossTab {
    pub fn row(&self, framing: ScaffoldType) -> Option<&CrossTabRow> {
        self.rows.get(&framing)
    }

    pub fn proportion(&self, framing: ScaffoldType, set: &FunctionSet) -> f64 {
        self.row(framing).map_or(0.0, |r| r.proportion(set))
    }

    pub fn total(&self) -> usize {
        self.rows.values().map(|r| r.total).sum()
    }

    /// Every label combination that occurs in any row.
    pub fn columns(&self) -> Vec<FunctionSet> {
        let mut cols: Vec<FunctionSet> = self.rows.values().flat_map(|r| r.counts.keys().cloned()).collect();
        cols.sort();
        cols.dedup();
        cols
    }
}

pub fn contribution_distribution(coded: &[CodedTurn]) -> Result<CrossTab, AnalysisError> {
    if coded.is_empty() {
        return Err(AnalysisError::EmptyCorpus);
    }
    let mut rows: BTreeMap<ScaffoldType, CrossTabRow> = BTreeMap::new();
    for turn in coded {
        let row = rows.entry(turn.framing).or_insert_with(|| CrossTabRow {
            total: 0,
            counts: BTreeMap::new(),
        });
        row.total += 1;
        *row.counts.entry(turn.functions.clone()).or_default() += 1;
    }
    Ok(CrossTab { rows })
}
