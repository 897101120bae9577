//! Whether the agent's updated stage story reflects what the child added.
//!
//! A contribution's novel terms are its content stems that the draft does
//! not contain. A contribution is taken up when at least `threshold` of its
//! novel terms appear in the update. The stage label is Full when every
//! contribution is reflected completely, None when none is taken up, and
//! Partial otherwise. Contributions with no novel terms are not counted.

use serde::{Deserialize, Serialize};
use tinker_core::graph::PhaseId;
use tinker_core::{NarrativeStage, SessionLog};

use crate::coding::scaffold_answers;
use crate::text::{Stopwords, TermExtractor};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UptakeLabel {
    Full,
    Partial,
    None,
    /// No contribution introduced anything new.
    NotApplicable,
}

impl UptakeLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            UptakeLabel::Full => "Full",
            UptakeLabel::Partial => "Partial",
            UptakeLabel::None => "None",
            UptakeLabel::NotApplicable => "NotApplicable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContributionUptake {
    pub text: String,
    pub novel: Vec<String>,
    pub matched: Vec<String>,
    pub ratio: f64,
    pub taken_up: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UptakeResult {
    pub stage: Option<NarrativeStage>,
    pub label: UptakeLabel,
    /// Share of counted contributions that were taken up.
    pub coverage: f64,
    pub matched: Vec<String>,
    pub unmatched: Vec<String>,
    pub contributions: Vec<ContributionUptake>,
}

#[derive(Debug)]
pub struct UptakeDetector {
    pub threshold: f64,
    terms: TermExtractor,
}

impl Default for UptakeDetector {
    fn default() -> Self {
        UptakeDetector::new(DEFAULT_THRESHOLD, Stopwords::bundled())
    }
}

impl UptakeDetector {
    pub fn new(threshold: f64, stopwords: Stopwords) -> Self {
        UptakeDetector {
            threshold: threshold.clamp(0.0, 1.0),
            terms: TermExtractor::new(stopwords),
        }
    }

    pub fn detect(&self, draft: &str, update: &str, contributions: &[&str]) -> UptakeResult {
        let draft_stems = self.terms.stems(draft);
        let update_stems = self.terms.stems(update);
        let mut result = UptakeResult {
            stage: None,
            label: UptakeLabel::NotApplicable,
            coverage: 0.0,
            matched: Vec::new(),
            unmatched: Vec::new(),
            contributions: Vec::new(),
        };
        for text in contributions {
            let mut c = ContributionUptake {
                text: text.to_string(),
                novel: Vec::new(),
                matched: Vec::new(),
                ratio: 0.0,
                taken_up: false,
            };
            for (word, stem) in self.terms.content_terms(text) {
                if draft_stems.contains(&stem) {
                    continue;
                }
                if update_stems.contains(&stem) {
                    c.matched.push(word.clone());
                    result.matched.push(word.clone());
                } else {
                    result.unmatched.push(word.clone());
                }
                c.novel.push(word);
            }
            if !c.novel.is_empty() {
                c.ratio = c.matched.len() as f64 / c.novel.len() as f64;
                c.taken_up = c.ratio >= self.threshold;
            }
            result.contributions.push(c);
        }
        let counted: Vec<&ContributionUptake> = result.contributions.iter().filter(|c| !c.novel.is_empty()).collect();
        if counted.is_empty() {
            return result;
        }
        let taken = counted.iter().filter(|c| c.taken_up).count();
        result.coverage = taken as f64 / counted.len() as f64;
        result.label = if counted.iter().all(|c| c.ratio == 1.0) {
            UptakeLabel::Full
        } else if taken == 0 {
            UptakeLabel::None
        } else {
            UptakeLabel::Partial
        };
        result
    }

    /// Uptake for every updated stage of a finished log.
    pub fn session_uptake(&self, log: &SessionLog) -> Vec<UptakeResult> {
        let Some(story) = log.latest_story() else {
            return Vec::new();
        };
        let answers = scaffold_answers(log);
        story
            .stages
            .values()
            .map(|record| {
                let texts: Vec<&str> = answers
                    .iter()
                    .filter(|a| a.phase == PhaseId::Stage(record.stage))
                    .map(|a| a.text.as_str())
                    .collect();
                let mut r = match &record.update {
                    Some(update) => self.detect(&record.draft, update, &texts),
                    // Without an update the draft stands in for it.
                    None => self.detect(&record.draft, &record.draft, &texts),
                };
                r.stage = Some(record.stage);
                r
            })
            .collect()
    }
}

/// [`UptakeDetector::detect`] with the default threshold and stopwords.
pub fn detect_uptake(draft: &str, update: &str, contributions: &[&str]) -> UptakeResult {
    UptakeDetector::default().detect(draft, update, contributions)
}
