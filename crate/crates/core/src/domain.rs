//! Story elements, narrative stages and the story document lifecycle.
//!
//! A [`StoryDocument`] is built in a fixed order: three characters are bound,
//! then each [`NarrativeStage`] receives a draft (with its place, item and
//! emotion), optionally followed by a single update. All operations are pure:
//! they take the document by reference and return a new value.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::token::Vocabulary;

/// The four kinds of tangible token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    Character,
    Place,
    Item,
    Emotion,
}

impl ElementKind {
    pub const ALL: [ElementKind; 4] = [
        ElementKind::Character,
        ElementKind::Place,
        ElementKind::Item,
        ElementKind::Emotion,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ElementKind::Character => "Character",
            ElementKind::Place => "Place",
            ElementKind::Item => "Item",
            ElementKind::Emotion => "Emotion",
        }
    }

    /// Board colour used when prompting for a token of this kind.
    pub fn token_colour(self) -> &'static str {
        match self {
            ElementKind::Character => "white",
            ElementKind::Place => "yellow",
            ElementKind::Item => "green",
            ElementKind::Emotion => "red",
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ElementKind {
    type Err = ();

    /// Case-sensitive: only the capitalised names are accepted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ElementKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or(())
    }
}

/// A typed story element whose value belongs to its kind's vocabulary.
///
/// Construct through [`Vocabulary::element`] or [`crate::token::parse_token`];
/// both enforce the closed vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StoryElement {
    kind: ElementKind,
    value: String,
}

impl StoryElement {
    /// Builds an element checked against the default vocabulary.
    pub fn new(kind: ElementKind, value: &str) -> Result<Self, DomainError> {
        Vocabulary::default_ref()
            .element(kind, value)
            .ok_or_else(|| DomainError::NotInVocabulary {
                kind,
                value: value.to_string(),
            })
    }

    pub(crate) fn unchecked(kind: ElementKind, value: &str) -> Self {
        StoryElement {
            kind,
            value: value.to_string(),
        }
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    pub fn value(&self) -> &str {
        &self.value
    }
}

impl fmt::Display for StoryElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind, self.value)
    }
}

/// The four pages of the board, totally ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NarrativeStage {
    Start,
    Journey,
    Climax,
    End,
}

impl NarrativeStage {
    pub const ALL: [NarrativeStage; 4] = [
        NarrativeStage::Start,
        NarrativeStage::Journey,
        NarrativeStage::Climax,
        NarrativeStage::End,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NarrativeStage::Start => "Start",
            NarrativeStage::Journey => "Journey",
            NarrativeStage::Climax => "Climax",
            NarrativeStage::End => "End",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn previous(self) -> Option<NarrativeStage> {
        self.index().checked_sub(1).map(|i| NarrativeStage::ALL[i])
    }
}

impl fmt::Display for NarrativeStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NarrativeStage {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NarrativeStage::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
            .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: NarrativeStage,
    pub place: StoryElement,
    pub item: StoryElement,
    pub emotion: StoryElement,
    pub draft: String,
    pub update: Option<String>,
}

impl StageRecord {
    /// The text shown for this stage: the update when present, else the draft.
    pub fn final_text(&self) -> &str {
        self.update.as_deref().unwrap_or(&self.draft)
    }

    pub fn elements(&self) -> [&StoryElement; 3] {
        [&self.place, &self.item, &self.emotion]
    }
}

/// A correction applied to already-told text after the phase moved on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Amendment {
    pub stage: Option<NarrativeStage>,
    pub request: String,
    pub text: String,
}

/// Whether the same character pawn may be bound more than once.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DuplicatePolicy {
    #[default]
    Reject,
    Allow,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryDocument {
    pub characters: Vec<StoryElement>,
    /// Verbatim child descriptions, keyed by character index (0..3).
    #[serde(with = "index_pairs")]
    pub character_notes: BTreeMap<usize, String>,
    pub stages: BTreeMap<NarrativeStage, StageRecord>,
    pub premise: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub amendments: Vec<Amendment>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DomainError {
    #[error("expected a {expected} token, got {got}")]
    WrongKind { expected: ElementKind, got: StoryElement },
    #[error("character {0} was chosen twice")]
    DuplicateCharacter(StoryElement),
    #[error("characters are already bound")]
    AlreadyBound,
    #[error("exactly three characters are required, got {0}")]
    CharacterCount(usize),
    #[error("characters must be bound before any stage is recorded")]
    CharactersMissing,
    #[error("stage {stage} cannot be recorded before {missing}")]
    OutOfOrderStage {
        stage: NarrativeStage,
        missing: NarrativeStage,
    },
    #[error("stage {0} already has a draft")]
    StageAlreadyDrafted(NarrativeStage),
    #[error("draft text for stage {0} is empty")]
    EmptyDraft(NarrativeStage),
    #[error("stage {0} has no draft yet")]
    NotDrafted(NarrativeStage),
    #[error("stage {0} has already been updated")]
    AlreadyUpdated(NarrativeStage),
    #[error("update text for stage {0} is empty")]
    EmptyUpdate(NarrativeStage),
    #[error("story is incomplete: stage {0} has no draft")]
    IncompleteStory(NarrativeStage),
    #[error("{value:?} is not a known {kind} token")]
    NotInVocabulary { kind: ElementKind, value: String },
    #[error("character index {0} is out of range")]
    NoSuchCharacter(usize),
}

/// Separator between stage segments in a compiled story.
pub const SEGMENT_SEPARATOR: &str = "\n\n";

// Integer map keys do not survive JSON inside tagged enums, so the notes
// are stored as [index, text] pairs.
mod index_pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<usize, String>, s: S) -> Result<S::Ok, S::Error> {
        map.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<usize, String>, D::Error> {
        Ok(Vec::<(usize, String)>::deserialize(d)?.into_iter().collect())
    }
}

fn check_kind(element: &StoryElement, expected: ElementKind) -> Result<(), DomainError> {
    if element.kind() == expected {
        Ok(())
    } else {
        Err(DomainError::WrongKind {
            expected,
            got: element.clone(),
        })
    }
}

impl StoryDocument {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bind_characters(
        &self,
        chars: &[StoryElement; 3],
        policy: DuplicatePolicy,
    ) -> Result<StoryDocument, DomainError> {
        if !self.characters.is_empty() {
            return Err(DomainError::AlreadyBound);
        }
        for c in chars {
            check_kind(c, ElementKind::Character)?;
        }
        if policy == DuplicatePolicy::Reject {
            for (i, c) in chars.iter().enumerate() {
                if chars[..i].contains(c) {
                    return Err(DomainError::DuplicateCharacter(c.clone()));
                }
            }
        }
        let mut doc = self.clone();
        doc.characters = chars.to_vec();
        Ok(doc)
    }

    /// Stores the child's description of the character at `index`.
    pub fn with_character_note(&self, index: usize, note: &str) -> Result<StoryDocument, DomainError> {
        if index >= self.characters.len() {
            return Err(DomainError::NoSuchCharacter(index));
        }
        let mut doc = self.clone();
        doc.character_notes.insert(index, note.to_string());
        Ok(doc)
    }

    pub fn with_premise(&self, premise: &str) -> StoryDocument {
        let mut doc = self.clone();
        doc.premise = Some(match &self.premise {
            Some(p) => format!("{p} {premise}"),
            None => premise.to_string(),
        });
        doc
    }

    pub fn with_amendment(&self, amendment: Amendment) -> StoryDocument {
        let mut doc = self.clone();
        doc.amendments.push(amendment);
        doc
    }

    pub fn record_stage(
        &self,
        stage: NarrativeStage,
        place: &StoryElement,
        item: &StoryElement,
        emotion: &StoryElement,
        draft: &str,
    ) -> Result<StoryDocument, DomainError> {
        if self.characters.is_empty() {
            return Err(DomainError::CharactersMissing);
        }
        if self.stages.contains_key(&stage) {
            return Err(DomainError::StageAlreadyDrafted(stage));
        }
        if let Some(missing) = NarrativeStage::ALL[..stage.index()]
            .iter()
            .find(|s| !self.stages.contains_key(s))
        {
            return Err(DomainError::OutOfOrderStage {
                stage,
                missing: *missing,
            });
        }
        check_kind(place, ElementKind::Place)?;
        check_kind(item, ElementKind::Item)?;
        check_kind(emotion, ElementKind::Emotion)?;
        if draft.trim().is_empty() {
            return Err(DomainError::EmptyDraft(stage));
        }
        let mut doc = self.clone();
        doc.stages.insert(
            stage,
            StageRecord {
                stage,
                place: place.clone(),
                item: item.clone(),
                emotion: emotion.clone(),
                draft: draft.to_string(),
                update: None,
            },
        );
        Ok(doc)
    }

    pub fn apply_update(&self, stage: NarrativeStage, update: &str) -> Result<StoryDocument, DomainError> {
        let record = self.stages.get(&stage).ok_or(DomainError::NotDrafted(stage))?;
        if record.update.is_some() {
            return Err(DomainError::AlreadyUpdated(stage));
        }
        if update.trim().is_empty() {
            return Err(DomainError::EmptyUpdate(stage));
        }
        let mut doc = self.clone();
        if let Some(r) = doc.stages.get_mut(&stage) {
            r.update = Some(update.to_string());
        }
        Ok(doc)
    }

    /// Joins each stage's final text, in stage order, with blank lines.
    pub fn compile_story(&self) -> Result<String, DomainError> {
        let segments = NarrativeStage::ALL
            .iter()
            .map(|s| {
                self.stages
                    .get(s)
                    .map(|r| r.final_text().to_string())
                    .ok_or(DomainError::IncompleteStory(*s))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(segments.join(SEGMENT_SEPARATOR))
    }

    pub fn stage(&self, stage: NarrativeStage) -> Option<&StageRecord> {
        self.stages.get(&stage)
    }

    /// The next stage that needs a draft, if any.
    pub fn next_stage(&self) -> Option<NarrativeStage> {
        NarrativeStage::ALL
            .into_iter()
            .find(|s| !self.stages.contains_key(s))
    }

    pub fn character_names(&self) -> Vec<&str> {
        self.characters.iter().map(|c| c.value()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(kind: ElementKind, v: &str) -> StoryElement {
        StoryElement::new(kind, v).unwrap()
    }

    fn chars(a: &str, b: &str, c: &str) -> [StoryElement; 3] {
        [
            el(ElementKind::Character, a),
            el(ElementKind::Character, b),
            el(ElementKind::Character, c),
        ]
    }

    fn with_chars() -> StoryDocument {
        StoryDocument::new()
            .bind_characters(&chars("Rabbit", "Bear", "Lion"), DuplicatePolicy::Reject)
            .unwrap()
    }

    fn record(doc: &StoryDocument, stage: NarrativeStage, draft: &str) -> Result<StoryDocument, DomainError> {
        doc.record_stage(
            stage,
            &el(ElementKind::Place, "Cave"),
            &el(ElementKind::Item, "Bag"),
            &el(ElementKind::Emotion, "Scared"),
            draft,
        )
    }

    #[test]
    fn binds_characters_in_scan_order() {
        let doc = StoryDocument::new()
            .bind_characters(&chars("Frog", "Bird", "Bear"), DuplicatePolicy::Reject)
            .unwrap();
        assert_eq!(doc.character_names(), ["Frog", "Bird", "Bear"]);
        let doc = with_chars();
        assert_eq!(doc.character_names(), ["Rabbit", "Bear", "Lion"]);
    }

    #[test]
    fn duplicate_characters_rejected_by_default() {
        let err = StoryDocument::new()
            .bind_characters(&chars("Bear", "Bear", "Lion"), DuplicatePolicy::Reject)
            .unwrap_err();
        assert_eq!(err, DomainError::DuplicateCharacter(el(ElementKind::Character, "Bear")));
        assert!(StoryDocument::new()
            .bind_characters(&chars("Bear", "Bear", "Lion"), DuplicatePolicy::Allow)
            .is_ok());
    }

    #[test]
    fn bind_rejects_wrong_kind_and_rebinding() {
        let bad = [
            el(ElementKind::Character, "Bear"),
            el(ElementKind::Place, "Cave"),
            el(ElementKind::Character, "Lion"),
        ];
        assert!(matches!(
            StoryDocument::new().bind_characters(&bad, DuplicatePolicy::Reject),
            Err(DomainError::WrongKind { expected: ElementKind::Character, .. })
        ));
        assert_eq!(
            with_chars().bind_characters(&chars("Frog", "Bird", "Bear"), DuplicatePolicy::Reject),
            Err(DomainError::AlreadyBound)
        );
    }

    #[test]
    fn record_stage_creates_draft_without_update() {
        let doc = record(&with_chars(), NarrativeStage::Start, "Once upon a time.").unwrap();
        let r = doc.stage(NarrativeStage::Start).unwrap();
        assert_eq!(r.place.value(), "Cave");
        assert_eq!(r.item.value(), "Bag");
        assert_eq!(r.emotion.value(), "Scared");
        assert!(r.update.is_none());
    }

    #[test]
    fn record_stage_enforces_order_and_slots() {
        let doc = with_chars();
        assert_eq!(
            record(&doc, NarrativeStage::Climax, "x."),
            Err(DomainError::OutOfOrderStage {
                stage: NarrativeStage::Climax,
                missing: NarrativeStage::Start
            })
        );
        let err = doc
            .record_stage(
                NarrativeStage::Start,
                &el(ElementKind::Item, "Boat"),
                &el(ElementKind::Item, "Bag"),
                &el(ElementKind::Emotion, "Scared"),
                "x.",
            )
            .unwrap_err();
        assert!(matches!(err, DomainError::WrongKind { expected: ElementKind::Place, .. }));
        let doc = record(&doc, NarrativeStage::Start, "x.").unwrap();
        assert_eq!(
            record(&doc, NarrativeStage::Start, "y."),
            Err(DomainError::StageAlreadyDrafted(NarrativeStage::Start))
        );
        assert_eq!(
            record(&doc, NarrativeStage::Journey, "  "),
            Err(DomainError::EmptyDraft(NarrativeStage::Journey))
        );
        assert_eq!(
            record(&StoryDocument::new(), NarrativeStage::Start, "x."),
            Err(DomainError::CharactersMissing)
        );
    }

    #[test]
    fn update_is_at_most_once_and_needs_draft() {
        let doc = record(&with_chars(), NarrativeStage::Start, "Draft.").unwrap();
        let doc = doc
            .apply_update(NarrativeStage::Start, "Rabbit was curious and wanted to explore.")
            .unwrap();
        assert_eq!(
            doc.stage(NarrativeStage::Start).unwrap().final_text(),
            "Rabbit was curious and wanted to explore."
        );
        assert_eq!(
            doc.apply_update(NarrativeStage::Start, "again"),
            Err(DomainError::AlreadyUpdated(NarrativeStage::Start))
        );
        assert_eq!(
            doc.apply_update(NarrativeStage::Journey, "x"),
            Err(DomainError::NotDrafted(NarrativeStage::Journey))
        );
    }

    #[test]
    fn compile_story_uses_updates_where_present() {
        let mut doc = with_chars();
        for s in NarrativeStage::ALL {
            doc = record(&doc, s, &format!("<{s} draft>")).unwrap();
        }
        assert_eq!(
            doc.compile_story().unwrap(),
            "<Start draft>\n\n<Journey draft>\n\n<Climax draft>\n\n<End draft>"
        );
        let doc = doc.apply_update(NarrativeStage::Start, "<Start update>").unwrap();
        let manual = ["<Start update>", "<Journey draft>", "<Climax draft>", "<End draft>"].join("\n\n");
        assert_eq!(doc.compile_story().unwrap(), manual);
    }

    #[test]
    fn compile_story_requires_all_stages() {
        let mut doc = with_chars();
        for s in &NarrativeStage::ALL[..3] {
            doc = record(&doc, *s, "d.").unwrap();
        }
        assert_eq!(
            doc.compile_story(),
            Err(DomainError::IncompleteStory(NarrativeStage::End))
        );
    }

    #[test]
    fn operations_are_pure() {
        let base = with_chars();
        let a = record(&base, NarrativeStage::Start, "Draft.").unwrap();
        let b = record(&base, NarrativeStage::Start, "Draft.").unwrap();
        assert_eq!(a, b);
        assert!(base.stages.is_empty());
    }

    #[test]
    fn stage_order_is_total() {
        assert!(NarrativeStage::Start < NarrativeStage::Journey);
        assert!(NarrativeStage::Journey < NarrativeStage::Climax);
        assert!(NarrativeStage::Climax < NarrativeStage::End);
        assert_eq!(NarrativeStage::Journey.previous(), Some(NarrativeStage::Start));
    }

    #[test]
    fn document_json_uses_stable_field_names() {
        let doc = record(&with_chars(), NarrativeStage::Start, "Draft.").unwrap();
        let v = serde_json::to_value(&doc).unwrap();
        assert_eq!(v["characters"][0]["kind"], "Character");
        assert_eq!(v["characters"][0]["value"], "Rabbit");
        assert_eq!(v["stages"]["Start"]["draft"], "Draft.");
        assert!(v["stages"]["Start"]["update"].is_null());
    }
}
