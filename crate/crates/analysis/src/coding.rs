//! Narrative-function coding of child answers to scaffold questions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use tinker_core::graph::{NodeId, PhaseId};
use tinker_core::session::{Repair, Speaker, Turn, TurnKind};
use tinker_core::{ScaffoldType, SessionLog};

use crate::text::words;
use crate::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum NarrativeFunction {
    AddEvent,
    AddCausality,
    ElaborateEmotion,
    None,
}

impl NarrativeFunction {
    pub const ALL: [NarrativeFunction; 4] = [
        NarrativeFunction::AddEvent,
        NarrativeFunction::AddCausality,
        NarrativeFunction::ElaborateEmotion,
        NarrativeFunction::None,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            NarrativeFunction::AddEvent => "AddEvent",
            NarrativeFunction::AddCausality => "AddCausality",
            NarrativeFunction::ElaborateEmotion => "ElaborateEmotion",
            NarrativeFunction::None => "None",
        }
    }
}

impl FromStr for NarrativeFunction {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        NarrativeFunction::ALL
            .into_iter()
            .find(|f| f.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| AnalysisError::InvalidFunctions(s.to_string()))
    }
}

/// A non-empty set of function labels in which `None` stands alone.
/// Written as `AddEvent+AddCausality`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FunctionSet(BTreeSet<NarrativeFunction>);

impl FunctionSet {
    pub fn new(functions: impl IntoIterator<Item = NarrativeFunction>) -> Result<FunctionSet, AnalysisError> {
        let set: BTreeSet<_> = functions.into_iter().collect();
        if set.is_empty() || (set.contains(&NarrativeFunction::None) && set.len() > 1) {
            let text = set.iter().map(|f| f.as_str()).collect::<Vec<_>>().join("+");
            return Err(AnalysisError::InvalidFunctions(text));
        }
        Ok(FunctionSet(set))
    }

    pub fn none() -> FunctionSet {
        FunctionSet(BTreeSet::from([NarrativeFunction::None]))
    }

    pub fn contains(&self, f: NarrativeFunction) -> bool {
        self.0.contains(&f)
    }

    pub fn is_contribution(&self) -> bool {
        !self.contains(NarrativeFunction::None)
    }

    pub fn iter(&self) -> impl Iterator<Item = NarrativeFunction> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for FunctionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = self.0.iter().map(|x| x.as_str()).collect();
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for FunctionSet {
    type Err = AnalysisError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts = s
            .split(['+', ';', '|'])
            .filter(|p| !p.trim().is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()?;
        FunctionSet::new(parts)
    }
}

impl Serialize for FunctionSet {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for FunctionSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeSource {
    Manual,
    Heuristic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodedTurn {
    pub session_id: String,
    /// Transcript index of the child turn that completed the answer.
    pub turn_index: usize,
    pub phase: PhaseId,
    pub node: NodeId,
    pub framing: ScaffoldType,
    pub text: String,
    pub functions: FunctionSet,
    pub source: CodeSource,
}

const REFUSALS: &[&str] = &[
    "no",
    "nope",
    "nothing",
    "i don't know",
    "i dont know",
    "same",
    "i'm good",
    "im good",
    "no thanks",
    "no thank you",
    "the story is perfect",
    "it's perfect",
    "nothing else",
];

const CAUSAL: &[&str] = &["because", "so", "since", "cause", "therefore", "why"];
const CAUSAL_PHRASES: &[&str] = &["so that", "in order to", "that's why", "thats why"];

const EMOTIONS: &[&str] = &[
    "afraid", "angry", "brave", "calm", "cheerful", "curious", "excited", "feel", "feeling", "feels", "felt",
    "frightened", "glad", "grumpy", "happy", "jealous", "lazy", "lonely", "love", "loves", "mad", "nervous", "proud",
    "sad", "scared", "shy", "sleepy", "surprised", "upset", "worried",
];

const ACTION_VERBS: &[&str] = &[
    "become", "becomes", "befriend", "build", "builds", "built", "came", "catch", "climb", "climbed", "come",
    "comes", "dance", "disappear", "eat", "eats", "escape", "explore", "fall", "fight", "find", "finds", "fly",
    "flies", "found", "gave", "give", "go", "goes", "help", "helps", "hide", "jump", "jumps", "make", "meet",
    "meets", "play", "plays", "ran", "run", "runs", "saw", "scream", "screams", "see", "sees", "swim", "swims",
    "take", "takes", "took", "walk", "wake", "want", "wants", "went", "will",
];

fn normalized(text: &str) -> String {
    text.to_lowercase()
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace() || *c == '\'')
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Keyword coding: refusals, causal connectives, the emotion lexicon and
/// action verbs. Answers that match nothing but carry at least two words
/// count as events.
pub fn heuristic_functions(text: &str) -> FunctionSet {
    let norm = normalized(text);
    if norm.is_empty() || REFUSALS.contains(&norm.as_str()) {
        return FunctionSet::none();
    }
    let ws = words(text);
    let mut set = BTreeSet::new();
    let purpose = ws.first().is_some_and(|w| w == "to");
    if purpose || ws.iter().any(|w| CAUSAL.contains(&w.as_str())) || CAUSAL_PHRASES.iter().any(|p| norm.contains(p)) {
        set.insert(NarrativeFunction::AddCausality);
    }
    if ws.iter().any(|w| EMOTIONS.contains(&w.as_str())) {
        set.insert(NarrativeFunction::ElaborateEmotion);
    }
    // A purpose clause ("To find treasure.") explains rather than adds.
    let event_words = if purpose { &ws[..0] } else { &ws[..] };
    if event_words.iter().any(|w| ACTION_VERBS.contains(&w.as_str())) {
        set.insert(NarrativeFunction::AddEvent);
    }
    if set.is_empty() && ws.len() >= 2 {
        set.insert(NarrativeFunction::AddEvent);
    }
    if set.is_empty() {
        return FunctionSet::none();
    }
    FunctionSet(set)
}

/// Manual function labels keyed by (session id, transcript index).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ManualAnnotations(BTreeMap<(String, usize), FunctionSet>);

#[derive(Debug, Deserialize)]
struct AnnotationRow {
    session_id: String,
    turn_index: usize,
    functions: FunctionSet,
}

impl ManualAnnotations {
    pub fn insert(&mut self, session_id: &str, turn_index: usize, functions: FunctionSet) {
        self.0.insert((session_id.to_string(), turn_index), functions);
    }

    pub fn get(&self, session_id: &str, turn_index: usize) -> Option<&FunctionSet> {
        self.0.get(&(session_id.to_string(), turn_index))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// CSV with a `session_id,turn_index,functions` header.
    pub fn from_csv(reader: impl std::io::Read) -> Result<ManualAnnotations, AnalysisError> {
        let mut out = ManualAnnotations::default();
        for row in csv::Reader::from_reader(reader).deserialize::<AnnotationRow>() {
            let row = row.map_err(|e| AnalysisError::Csv(e.to_string()))?;
            out.insert(&row.session_id, row.turn_index, row.functions);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<ManualAnnotations, AnalysisError> {
        let file = std::fs::File::open(path).map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
        ManualAnnotations::from_csv(file)
    }
}

/// A child's answer to one scaffold question, reassembled from the turns
/// that made it up.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Answer {
    pub turn_index: usize,
    pub phase: PhaseId,
    pub node: NodeId,
    pub framing: ScaffoldType,
    pub text: String,
}

/// Answers to scaffold questions. Turns the agent met with a clarification,
/// an off-script reply or an amendment are left out; a turn it followed up
/// is joined to the next one.
pub fn scaffold_answers(log: &SessionLog) -> Vec<Answer> {
    let turns: Vec<&Turn> = log.turns().collect();
    let mut out = Vec::new();
    let mut partial: Option<String> = None;
    for (i, turn) in turns.iter().enumerate() {
        let (Speaker::Child, TurnKind::Speech, Some(framing)) = (turn.speaker, turn.kind, turn.scaffold) else {
            continue;
        };
        let reply = turns[i + 1..].iter().find(|t| t.speaker == Speaker::Agent);
        match reply.and_then(|t| t.repair) {
            Some(Repair::Clarification | Repair::OffScript | Repair::Amendment) => continue,
            Some(Repair::FollowUp) => {
                partial = Some(match partial.take() {
                    Some(p) => format!("{p} {}", turn.text),
                    None => turn.text.clone(),
                });
                continue;
            }
            _ => {}
        }
        let text = match partial.take() {
            Some(p) => format!("{p} {}", turn.text),
            None => turn.text.clone(),
        };
        out.push(Answer {
            turn_index: turn.index,
            phase: turn.phase,
            node: turn.node,
            framing,
            text,
        });
    }
    out
}

/// Codes every scaffold answer in a log. Framing comes from the session's
/// scaffold metadata; functions from `manual` when it has the turn.
pub fn code_turns(log: &SessionLog, manual: Option<&ManualAnnotations>) -> Result<Vec<CodedTurn>, AnalysisError> {
    let has_metadata = log.turns().any(|t| t.speaker == Speaker::Agent && t.scaffold.is_some());
    let reached_questions = log
        .turns()
        .any(|t| t.phase.stage().is_some() || t.phase == PhaseId::PostStory);
    if !has_metadata && reached_questions {
        return Err(AnalysisError::MissingMetadata(log.session_id().to_string()));
    }
    Ok(scaffold_answers(log)
        .into_iter()
        .map(|a| {
            let (functions, source) = match manual.and_then(|m| m.get(log.session_id(), a.turn_index)) {
                Some(f) => (f.clone(), CodeSource::Manual),
                None => (heuristic_functions(&a.text), CodeSource::Heuristic),
            };
            CodedTurn {
                session_id: log.session_id().to_string(),
                turn_index: a.turn_index,
                phase: a.phase,
                node: a.node,
                framing: a.framing,
                text: a.text,
                functions,
                source,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use NarrativeFunction::*;

    fn set(fs: &[NarrativeFunction]) -> FunctionSet {
        FunctionSet::new(fs.iter().copied()).unwrap()
    }

    #[test]
    fn heuristic_matches_published_examples() {
        assert_eq!(heuristic_functions("To find treasure."), set(&[AddCausality]));
        assert_eq!(heuristic_functions("Nothing."), set(&[None]));
        assert_eq!(heuristic_functions("I don't know."), set(&[None]));
        assert_eq!(heuristic_functions("I'm good"), set(&[None]));
        assert_eq!(
            heuristic_functions("They see a turtle, and the turtle becomes a pet for them."),
            set(&[AddEvent])
        );
        assert_eq!(
            heuristic_functions("Because they want to see another land to see what it looks like"),
            set(&[AddEvent, AddCausality])
        );
        assert_eq!(heuristic_functions("The rabbit is curious."), set(&[ElaborateEmotion]));
    }

    #[test]
    fn none_stands_alone() {
        assert!(FunctionSet::new([None, AddEvent]).is_err());
        assert!(FunctionSet::new([]).is_err());
        let parsed: FunctionSet = "AddEvent+AddCausality".parse().unwrap();
        assert_eq!(parsed.to_string(), "AddEvent+AddCausality");
        assert!("AddEvent+Bogus".parse::<FunctionSet>().is_err());
    }

    #[test]
    fn manual_annotations_parse() {
        let csv = "session_id,turn_index,functions\ns1,12,AddEvent+ElaborateEmotion\ns1,15,None\n";
        let m = ManualAnnotations::from_csv(csv.as_bytes()).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.get("s1", 12), Some(&set(&[AddEvent, ElaborateEmotion])));
        assert!(ManualAnnotations::from_csv("session_id,turn_index,functions\ns1,x,None\n".as_bytes()).is_err());
    }
}
