//! Per-session interaction metrics and corpus summaries.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use tinker_core::session::{Speaker, TurnKind};
use tinker_core::{Condition, SessionLog};

use crate::AnalysisError;

/// Mean, sample standard deviation and range of a set of values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    /// Sample SD (n - 1 denominator); 0 for a single value.
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some(Summary { n, mean, sd, min, max })
    }

    /// `32.3 min (± 6.2; 21.7–39.3)` style, one decimal.
    pub fn display(&self, unit: &str) -> String {
        let unit = if unit.is_empty() { String::new() } else { format!(" {unit}") };
        format!(
            "{:.1}{unit} (± {:.1}; {:.1}–{:.1})",
            self.mean, self.sd, self.min, self.max
        )
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display(""))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    pub session_id: String,
    pub condition: Condition,
    /// Last record time minus first record time.
    pub minutes: f64,
    pub total_turns: usize,
    pub child_turns: usize,
    pub agent_turns: usize,
    pub child_words_per_turn: f64,
    pub agent_words_per_turn: f64,
}

fn words(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Metrics for one log. Scan turns count towards the turn total but not
/// towards words per turn.
pub fn session_metrics(log: &SessionLog) -> SessionMetrics {
    let (first, last) = (log.first_at().unwrap_or(0), log.last_at().unwrap_or(0));
    let mut total = 0;
    let mut child = (0usize, 0usize);
    let mut agent = (0usize, 0usize);
    for turn in log.turns() {
        total += 1;
        if turn.kind != TurnKind::Speech {
            continue;
        }
        let slot = match turn.speaker {
            Speaker::Child => &mut child,
            Speaker::Agent => &mut agent,
        };
        slot.0 += 1;
        slot.1 += words(&turn.text);
    }
    let per = |(turns, words): (usize, usize)| if turns == 0 { 0.0 } else { words as f64 / turns as f64 };
    SessionMetrics {
        session_id: log.session_id().to_string(),
        condition: log.condition(),
        minutes: (last - first) as f64 / 60_000.0,
        total_turns: total,
        child_turns: child.0,
        agent_turns: agent.0,
        child_words_per_turn: per(child),
        agent_words_per_turn: per(agent),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DescriptiveStats {
    pub sessions: Vec<SessionMetrics>,
    pub length_minutes: Summary,
    pub total_turns: Summary,
    pub child_words_per_turn: Summary,
    pub agent_words_per_turn: Summary,
}

impl DescriptiveStats {
    /// Rows in the order of the published table.
    pub fn rows(&self) -> [(&'static str, String); 4] {
        [
            ("Session length", self.length_minutes.display("min")),
            ("Total turns", self.total_turns.display("")),
            ("Child turn length", self.child_words_per_turn.display("words")),
            ("AI turn length", self.agent_words_per_turn.display("words")),
        ]
    }
}

/// Summaries across completed sessions; unfinished logs are skipped.
pub fn descriptive_stats(logs: &[SessionLog]) -> Result<DescriptiveStats, AnalysisError> {
    let sessions: Vec<SessionMetrics> = logs.iter().filter(|l| l.is_finished()).map(session_metrics).collect();
    let col = |f: fn(&SessionMetrics) -> f64| Summary::of(&sessions.iter().map(f).collect::<Vec<_>>());
    let (Some(length_minutes), Some(total_turns), Some(child_words_per_turn), Some(agent_words_per_turn)) = (
        col(|m| m.minutes),
        col(|m| m.total_turns as f64),
        col(|m| m.child_words_per_turn),
        col(|m| m.agent_words_per_turn),
    ) else {
        return Err(AnalysisError::EmptyCorpus);
    };
    Ok(DescriptiveStats {
        sessions,
        length_minutes,
        total_turns,
        child_words_per_turn,
        agent_words_per_turn,
    })
}

pub fn stats_by_condition(logs: &[SessionLog]) -> BTreeMap<Condition, DescriptiveStats> {
    Condition::ALL
        .into_iter()
        .filter_map(|c| {
            let subset: Vec<SessionLog> = logs.iter().filter(|l| l.condition() == c).cloned().collect();
            descriptive_stats(&subset).ok().map(|s| (c, s))
        })
        .collect()
}
