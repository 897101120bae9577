//! The caregiver-facing summary of one finished session.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tinker_core::graph::PhaseId;
use tinker_core::scaffold::{question_frame_label, Framework};
use tinker_core::session::{Repair, Speaker, Turn};
use tinker_core::{Condition, ScaffoldType, SessionLog};

use crate::coding::{code_turns, ManualAnnotations, NarrativeFunction};
use crate::uptake::{UptakeDetector, UptakeLabel};
use crate::AnalysisError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairExcerpt {
    pub turn_index: usize,
    pub phase: PhaseId,
    pub repair: Repair,
    /// What the child said or scanned just before.
    pub child: Option<String>,
    pub agent: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParentSummary {
    pub session_id: String,
    pub profile_id: String,
    pub condition: Condition,
    /// Scaffold questions asked, by type.
    pub questions: BTreeMap<ScaffoldType, usize>,
    /// Questions asked per framework: narrative development, social and
    /// emotional learning, general.
    pub frameworks: BTreeMap<String, usize>,
    /// Child answers per narrative function (an answer may count twice).
    pub contributions: BTreeMap<NarrativeFunction, usize>,
    pub uptake: BTreeMap<UptakeLabel, usize>,
    pub repairs: Vec<RepairExcerpt>,
    pub child_turns: usize,
    pub agent_turns: usize,
    pub story_opening: Option<String>,
}

fn framework_name(f: Framework) -> &'static str {
    match f {
        Framework::NarrativeDevelopment(_) => "narrative development",
        Framework::SocialEmotional(_) => "social-emotional learning",
        Framework::General => "general",
    }
}

impl ParentSummary {
    /// Human-readable question counts, e.g. `Primitive narratives: 2`.
    pub fn question_lines(&self) -> Vec<String> {
        self.questions
            .iter()
            .map(|(k, n)| format!("{}: {n}", question_frame_label(*k)))
            .collect()
    }
}

/// Builds the summary. Only finished sessions have one.
pub fn parent_summary(
    log: &SessionLog,
    uptake: &UptakeDetector,
    manual: Option<&ManualAnnotations>,
) -> Result<ParentSummary, AnalysisError> {
    if !log.is_finished() {
        return Err(AnalysisError::SummaryUnavailable(log.session_id().to_string()));
    }
    let turns: Vec<&Turn> = log.turns().collect();
    let mut questions = BTreeMap::new();
    let mut frameworks = BTreeMap::new();
    for t in turns.iter().filter(|t| t.speaker == Speaker::Agent) {
        if let Some(s) = t.scaffold {
            *questions.entry(s).or_default() += 1;
            *frameworks.entry(framework_name(s.framework()).to_string()).or_default() += 1;
        }
    }
    let mut contributions = BTreeMap::new();
    for coded in code_turns(log, manual)? {
        for f in coded.functions.iter() {
            *contributions.entry(f).or_default() += 1;
        }
    }
    let mut uptake_counts = BTreeMap::new();
    for r in uptake.session_uptake(log) {
        *uptake_counts.entry(r.label).or_default() += 1;
    }
    let repairs = turns
        .iter()
        .enumerate()
        .filter_map(|(i, t)| {
            let repair = t.repair?;
            let child = turns[..i].iter().rev().find(|p| p.speaker == Speaker::Child).map(|p| p.text.clone());
            Some(RepairExcerpt {
                turn_index: t.index,
                phase: t.phase,
                repair,
                child,
                agent: t.text.clone(),
            })
        })
        .collect();
    let story_opening = log
        .story_record()
        .and_then(|s| s.stages.first())
        .and_then(|s| s.text.split_inclusive(['.', '!', '?']).next())
        .map(|s| s.trim().to_string());
    Ok(ParentSummary {
        session_id: log.session_id().to_string(),
        profile_id: log.profile_id().to_string(),
        condition: log.condition(),
        questions,
        frameworks,
        contributions,
        uptake: uptake_counts,
        repairs,
        child_turns: turns.iter().filter(|t| t.speaker == Speaker::Child).count(),
        agent_turns: turns.iter().filter(|t| t.speaker == Speaker::Agent).count(),
        story_opening,
    })
}
