//! Question scaffolding: which elaboration questions each condition asks in
//! each phase, their framing labels, and schedule audits over session logs.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::NarrativeStage;
use crate::graph::PhaseId;
use crate::log::SessionLog;
use crate::session::Speaker;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    Structured,
    Generic,
}

impl Condition {
    pub const ALL: [Condition; 2] = [Condition::Structured, Condition::Generic];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Structured => "structured",
            Condition::Generic => "generic",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Condition::ALL
            .into_iter()
            .find(|c| c.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown condition {s:?}"))
    }
}

/// Developmental narrative stages a question can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApplebeeStage {
    Heap,
    Sequence,
    Primitive,
    Chain,
    True,
}

/// Social-emotional competencies a question can target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CaselCompetency {
    SelfAwareness,
    SelfManagement,
    SocialAwareness,
    RelationshipSkills,
    ResponsibleDecisionMaking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Framework {
    NarrativeDevelopment(ApplebeeStage),
    SocialEmotional(CaselCompetency),
    /// Untargeted invitation to add anything.
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaffoldType {
    PrimitiveNarrative,
    ChainNarrative,
    TrueNarrative,
    SocialAwareness,
    RelationshipSkills,
    ResponsibleDecisionMaking,
    OpenInvitation,
    SelfAwareness,
    SelfManagement,
}

impl ScaffoldType {
    pub const ALL: [ScaffoldType; 9] = [
        ScaffoldType::PrimitiveNarrative,
        ScaffoldType::ChainNarrative,
        ScaffoldType::TrueNarrative,
        ScaffoldType::SocialAwareness,
        ScaffoldType::RelationshipSkills,
        ScaffoldType::ResponsibleDecisionMaking,
        ScaffoldType::OpenInvitation,
        ScaffoldType::SelfAwareness,
        ScaffoldType::SelfManagement,
    ];

    pub fn framework(self) -> Framework {
        use ScaffoldType::*;
        match self {
            PrimitiveNarrative => Framework::NarrativeDevelopment(ApplebeeStage::Primitive),
            ChainNarrative => Framework::NarrativeDevelopment(ApplebeeStage::Chain),
            TrueNarrative => Framework::NarrativeDevelopment(ApplebeeStage::True),
            SocialAwareness => Framework::SocialEmotional(CaselCompetency::SocialAwareness),
            RelationshipSkills => Framework::SocialEmotional(CaselCompetency::RelationshipSkills),
            ResponsibleDecisionMaking => Framework::SocialEmotional(CaselCompetency::ResponsibleDecisionMaking),
            SelfAwareness => Framework::SocialEmotional(CaselCompetency::SelfAwareness),
            SelfManagement => Framework::SocialEmotional(CaselCompetency::SelfManagement),
            OpenInvitation => Framework::General,
        }
    }

    /// Prompt-side instruction handed to the narrator for this framing.
    pub fn guidance(self) -> &'static str {
        use ScaffoldType::*;
        match self {
            PrimitiveNarrative => "Ask the child one question so the child can elaborate and refine the story's narrative. Base your question on the story you created and phrase it in a way that sparks the child's imagination. Make sure to **strictly scaffold** this question for the Primitive narrative stage from Applebee’s narrative development Model: a central character or theme is present without causality. For example, you could ask: 'What else do you think they might do here?' or 'Can you add one more thing that happens here?'",
            ChainNarrative => "Ask a question that encourages the child to elaborate and refine the story’s narrative. Ground the question in the story created so far, and phrase it in a way that sparks the child’s imagination. Make sure to scaffold this question for the Chain narratives stage from Applebee’s narrative development model, which emphasizes the emergence of causal connections. For example, the question may be framed along the lines of: \"Why did [a character] do [an action]?\" or \"How did [an event] happen?\"",
            TrueNarrative => "Ask the child one question about the narrative. Make sure to **strictly scaffold** this question for the True narrative stage from Applebee’s Narrative Development Model: Coherent story with beginning–middle–end and a clear resolution.",
            SocialAwareness => "Ask the child one question so the child can elaborate and refine how the characters feel in the story. Base your question on the story you created and phrase it in a way that sparks the child’s imagination. However, it must be a direct question about emotions. Make sure to **strictly scaffold** this question for the Social Awareness competency from the Social and Emotional Learning Framework: being able to infer or explain others' perspectives and emotions. For example, you could ask: 'How might one of them feel different from the others here?' and 'How do you think they feel about each other right now?'",
            RelationshipSkills => "Based on the story, ask the child one question. Base your question on the story you created and phrase it in a way that sparks the child’s imagination. Make sure to **strictly scaffold** this question for the Relationship Skills competency from the Social and Emotional Learning Framework: Can judge social behaviors and choices (sharing, helping).",
            ResponsibleDecisionMaking => "Based on the story, ask the child one question. Base your question on the story you created and phrase it in a way that sparks the child’s imagination. Make sure to **strictly scaffold** this question for the Responsible Decision-Making competency from the Social and Emotional Learning Framework: Can generate alternative, ethical solutions and imagine consequences.",
            OpenInvitation => "Tell the child that you’re going to ask a question to look back at the story. Ask the child one question so the child can elaborate and refine the story's narrative. Ask exactly: 'Would you like to add something to the story?'",
            SelfAwareness => "Ask the child one question about how they themselves would feel in the story.",
            SelfManagement => "Ask the child one question about how they would handle a strong feeling from the story.",
        }
    }

    /// Canonical question with `{place}`, `{item}`, `{emotion}`, `{c1}`..`{c3}`
    /// placeholders. `occurrence` distinguishes repeated framings in one phase.
    pub fn exemplar(self, occurrence: usize) -> &'static str {
        use ScaffoldType::*;
        match (self, occurrence) {
            (PrimitiveNarrative, _) => "What else do you think they might do at the {place}?",
            (ChainNarrative, _) => "Why do you think they decided to use the {item}?",
            (SocialAwareness, _) => "How do they feel about each other right now?",
            (OpenInvitation, _) => "Would you like to add something to the story?",
            (TrueNarrative, 0) => "How did our story begin, what happened during the journey and the climax, and how did it end?",
            (TrueNarrative, _) => "What if our story had a different ending, how would it end?",
            (RelationshipSkills, _) => "When {c1} felt {emotion}, should the others wait for them or keep going?",
            (ResponsibleDecisionMaking, _) => "When {c2} felt {emotion}, what could you do to be a good friend?",
            (SelfAwareness, _) => "How would you feel if you were at the {place} with them?",
            (SelfManagement, _) => "What could you do to feel better if you felt {emotion} like them?",
        }
    }
}

impl fmt::Display for ScaffoldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(question_frame_label(*self))
    }
}

/// Coding label used when analysing which kind of question was asked.
pub fn question_frame_label(scaffold: ScaffoldType) -> &'static str {
    use ScaffoldType::*;
    match scaffold {
        PrimitiveNarrative => "Primitive narratives",
        ChainNarrative => "Chain narratives",
        TrueNarrative => "True narratives",
        SocialAwareness => "Social awareness",
        RelationshipSkills => "Relationship skills",
        ResponsibleDecisionMaking => "Responsible decision-making",
        OpenInvitation => "Open invitation",
        SelfAwareness => "Self-awareness",
        SelfManagement => "Self-management",
    }
}

/// Where in the activity a scheduled question is asked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ScheduleSlot {
    Stage(NarrativeStage),
    PostStory,
}

impl ScheduleSlot {
    pub const ALL: [ScheduleSlot; 5] = [
        ScheduleSlot::Stage(NarrativeStage::Start),
        ScheduleSlot::Stage(NarrativeStage::Journey),
        ScheduleSlot::Stage(NarrativeStage::Climax),
        ScheduleSlot::Stage(NarrativeStage::End),
        ScheduleSlot::PostStory,
    ];

    pub fn for_phase(phase: PhaseId) -> Option<ScheduleSlot> {
        match phase {
            PhaseId::Stage(s) => Some(ScheduleSlot::Stage(s)),
            PhaseId::PostStory => Some(ScheduleSlot::PostStory),
            _ => None,
        }
    }

    pub fn phase(self) -> PhaseId {
        match self {
            ScheduleSlot::Stage(s) => PhaseId::Stage(s),
            ScheduleSlot::PostStory => PhaseId::PostStory,
        }
    }
}

impl fmt::Display for ScheduleSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.phase().as_str())
    }
}

impl From<ScheduleSlot> for String {
    fn from(s: ScheduleSlot) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for ScheduleSlot {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        let phase: PhaseId = s.parse()?;
        ScheduleSlot::for_phase(phase).ok_or_else(|| format!("phase {s:?} has no question schedule"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaffoldQuestionSpec {
    pub scaffold: ScaffoldType,
    pub slot: ScheduleSlot,
    pub guidance: String,
    pub exemplar: String,
}

#[derive(Debug, Error)]
pub enum ConditionFileError {
    #[error("condition file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("condition file: {0}")]
    Io(#[from] std::io::Error),
    #[error("condition {0} is missing a schedule for {1}")]
    MissingSlot(Condition, ScheduleSlot),
    #[error("condition {0} is defined twice")]
    Duplicate(Condition),
}

#[derive(Debug, Deserialize)]
struct ConditionFile {
    name: Condition,
    schedule: BTreeMap<ScheduleSlot, Vec<ScaffoldType>>,
}

/// Per-condition question schedules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleBook {
    schedules: BTreeMap<Condition, BTreeMap<ScheduleSlot, Vec<ScaffoldType>>>,
}

const STRUCTURED_CFG: &str = include_str!("../data/conditions/structured.cfg");
const GENERIC_CFG: &str = include_str!("../data/conditions/generic.cfg");

impl ScheduleBook {
    pub fn from_sources<'a>(sources: impl IntoIterator<Item = &'a str>) -> Result<Self, ConditionFileError> {
        let mut schedules = BTreeMap::new();
        for src in sources {
            let file: ConditionFile = toml::from_str(src)?;
            for slot in ScheduleSlot::ALL {
                if !file.schedule.contains_key(&slot) {
                    return Err(ConditionFileError::MissingSlot(file.name, slot));
                }
            }
            if schedules.insert(file.name, file.schedule).is_some() {
                return Err(ConditionFileError::Duplicate(file.name));
            }
        }
        Ok(ScheduleBook { schedules })
    }

    /// Loads every `*.cfg` file in a directory.
    pub fn load_dir(dir: &Path) -> Result<Self, ConditionFileError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
            .collect();
        paths.sort();
        let sources = paths
            .iter()
            .map(std::fs::read_to_string)
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_sources(sources.iter().map(String::as_str))
    }

    pub fn bundled() -> &'static ScheduleBook {
        static BOOK: OnceLock<ScheduleBook> = OnceLock::new();
        BOOK.get_or_init(|| {
            ScheduleBook::from_sources([STRUCTURED_CFG, GENERIC_CFG]).expect("bundled condition files parse")
        })
    }

    pub fn conditions(&self) -> impl Iterator<Item = Condition> + '_ {
        self.schedules.keys().copied()
    }

    pub fn scaffolds(&self, condition: Condition, slot: ScheduleSlot) -> &[ScaffoldType] {
        self.schedules
            .get(&condition)
            .and_then(|s| s.get(&slot))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn schedule_for(&self, condition: Condition, slot: ScheduleSlot) -> Vec<ScaffoldQuestionSpec> {
        let scaffolds = self.scaffolds(condition, slot);
        scaffolds
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let occurrence = scaffolds[..i].iter().filter(|p| *p == s).count();
                ScaffoldQuestionSpec {
                    scaffold: *s,
                    slot,
                    guidance: s.guidance().to_string(),
                    exemplar: s.exemplar(occurrence).to_string(),
                }
            })
            .collect()
    }

    /// Total count per scaffold type over a whole session.
    pub fn session_totals(&self, condition: Condition) -> BTreeMap<ScaffoldType, usize> {
        let mut totals = BTreeMap::new();
        for slot in ScheduleSlot::ALL {
            for s in self.scaffolds(condition, slot) {
                *totals.entry(*s).or_default() += 1;
            }
        }
        totals
    }
}

/// Schedule from the bundled condition files.
pub fn schedule_for(condition: Condition, slot: ScheduleSlot) -> Vec<ScaffoldQuestionSpec> {
    ScheduleBook::bundled().schedule_for(condition, slot)
}

// ---------------------------------------------------------------------------
// Audit

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AuditError {
    #[error("session {0} did not run to completion")]
    IncompleteLog(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotAudit {
    pub slot: ScheduleSlot,
    pub expected: Vec<ScaffoldType>,
    pub observed: Vec<ScaffoldType>,
}

impl SlotAudit {
    pub fn passed(&self) -> bool {
        self.expected == self.observed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplianceReport {
    pub session_id: String,
    pub condition: Condition,
    pub counts: BTreeMap<ScaffoldType, usize>,
    pub slots: Vec<SlotAudit>,
    pub first_violation: Option<ScheduleSlot>,
}

impl ComplianceReport {
    pub fn passed(&self) -> bool {
        self.first_violation.is_none()
    }
}

/// Compares the questions the agent asked (first asking only, not re-asks)
/// against the condition's schedule, slot by slot.
pub fn audit_session(log: &SessionLog, book: &ScheduleBook) -> Result<ComplianceReport, AuditError> {
    if !log.is_finished() {
        return Err(AuditError::IncompleteLog(log.session_id().to_string()));
    }
    let condition = log.condition();
    let mut observed: BTreeMap<ScheduleSlot, Vec<ScaffoldType>> = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for turn in log.turns().filter(|t| t.speaker == Speaker::Agent) {
        if let Some(s) = turn.scaffold {
            *counts.entry(s).or_default() += 1;
            if let Some(slot) = ScheduleSlot::for_phase(turn.phase) {
                observed.entry(slot).or_default().push(s);
            }
        }
    }
    let slots: Vec<SlotAudit> = ScheduleSlot::ALL
        .into_iter()
        .map(|slot| SlotAudit {
            slot,
            expected: book.scaffolds(condition, slot).to_vec(),
            observed: observed.remove(&slot).unwrap_or_default(),
        })
        .collect();
    let first_violation = slots.iter().find(|s| !s.passed()).map(|s| s.slot);
    Ok(ComplianceReport {
        session_id: log.session_id().to_string(),
        condition,
        counts,
        slots,
        first_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ScaffoldType::*;

    fn kinds(c: Condition, slot: ScheduleSlot) -> Vec<ScaffoldType> {
        schedule_for(c, slot).into_iter().map(|s| s.scaffold).collect()
    }

    #[test]
    fn structured_schedule_matches_table() {
        use NarrativeStage::*;
        assert_eq!(kinds(Condition::Structured, ScheduleSlot::Stage(Start)), [PrimitiveNarrative, SocialAwareness]);
        assert_eq!(kinds(Condition::Structured, ScheduleSlot::Stage(Journey)), [ChainNarrative, SocialAwareness]);
        assert_eq!(kinds(Condition::Structured, ScheduleSlot::Stage(Climax)), [PrimitiveNarrative, SocialAwareness]);
        assert_eq!(kinds(Condition::Structured, ScheduleSlot::Stage(End)), [ChainNarrative, SocialAwareness]);
    }

    #[test]
    fn generic_schedule_matches_table() {
        for s in NarrativeStage::ALL {
            assert_eq!(kinds(Condition::Generic, ScheduleSlot::Stage(s)), [OpenInvitation]);
        }
        for c in Condition::ALL {
            assert_eq!(
                kinds(c, ScheduleSlot::PostStory),
                [TrueNarrative, TrueNarrative, RelationshipSkills, ResponsibleDecisionMaking]
            );
        }
    }

    #[test]
    fn two_session_totals_over_stages() {
        let mut totals: BTreeMap<ScaffoldType, usize> = BTreeMap::new();
        for c in Condition::ALL {
            for s in NarrativeStage::ALL {
                for k in kinds(c, ScheduleSlot::Stage(s)) {
                    *totals.entry(k).or_default() += 1;
                }
            }
        }
        assert_eq!(
            totals,
            BTreeMap::from([(PrimitiveNarrative, 2), (ChainNarrative, 2), (SocialAwareness, 4), (OpenInvitation, 4)])
        );
    }

    #[test]
    fn frame_labels() {
        assert_eq!(question_frame_label(PrimitiveNarrative), "Primitive narratives");
        assert_eq!(question_frame_label(OpenInvitation), "Open invitation");
        assert_eq!(question_frame_label(SocialAwareness), "Social awareness");
        assert_eq!(question_frame_label(ChainNarrative), "Chain narratives");
        let narrative = [PrimitiveNarrative, ChainNarrative, SocialAwareness, OpenInvitation];
        let labels: std::collections::BTreeSet<_> = narrative.iter().map(|s| question_frame_label(*s)).collect();
        assert_eq!(labels.len(), narrative.len());
    }

    #[test]
    fn self_focused_competencies_have_no_default_entries() {
        for c in Condition::ALL {
            let totals = ScheduleBook::bundled().session_totals(c);
            assert!(!totals.contains_key(&SelfAwareness));
            assert!(!totals.contains_key(&SelfManagement));
        }
        assert_eq!(
            SelfAwareness.framework(),
            Framework::SocialEmotional(CaselCompetency::SelfAwareness)
        );
    }

    #[test]
    fn specs_carry_guidance_and_exemplars() {
        let post = schedule_for(Condition::Structured, ScheduleSlot::PostStory);
        assert_ne!(post[0].exemplar, post[1].exemplar);
        assert!(post.iter().all(|s| !s.guidance.is_empty()));
        let start = schedule_for(Condition::Structured, ScheduleSlot::Stage(NarrativeStage::Start));
        assert!(start[0].guidance.contains("Primitive narrative"));
        assert!(start[1].guidance.contains("Social Awareness"));
    }

    #[test]
    fn condition_file_errors() {
        let missing = "name = \"structured\"\n[schedule]\nstart = [\"open-invitation\"]\n";
        assert!(matches!(
            ScheduleBook::from_sources([missing]),
            Err(ConditionFileError::MissingSlot(Condition::Structured, _))
        ));
        assert!(matches!(
            ScheduleBook::from_sources([STRUCTURED_CFG, STRUCTURED_CFG]),
            Err(ConditionFileError::Duplicate(Condition::Structured))
        ));
        assert!(ScheduleBook::from_sources(["name = \"structured\"\n[schedule]\nstart = [\"bogus\"]\n"]).is_err());
    }
}
