//! Persona files: behaviour probabilities, timing and answer banks.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Deserialize;
use tinker_core::ScaffoldType;

use crate::SimError;

const DEFAULT_ANSWERS: &str = include_str!("../data/answers.toml");

const BUNDLED: &[(&str, &str)] = &[
    ("cooperative", include_str!("../data/personas/cooperative.toml")),
    ("wrong-scanner", include_str!("../data/personas/wrong-scanner.toml")),
    ("refuser", include_str!("../data/personas/refuser.toml")),
    ("garbler", include_str!("../data/personas/garbler.toml")),
    ("interrupter", include_str!("../data/personas/interrupter.toml")),
    ("side-talker", include_str!("../data/personas/side-talker.toml")),
];

/// Millisecond ranges, inclusive.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timing {
    /// Gap between fragments of one utterance; must stay under the pause.
    pub fragment_gap_ms: [u64; 2],
    /// Silence that closes a turn.
    pub pause_ms: [u64; 2],
    /// Delay before the child starts answering.
    pub think_ms: [u64; 2],
}

impl Default for Timing {
    fn default() -> Self {
        Timing {
            fragment_gap_ms: [300, 3_800],
            pause_ms: [4_000, 6_500],
            think_ms: [800, 3_000],
        }
    }
}

/// Utterances by situation. Keys are `premise`, `note`, `plain`,
/// `refusal`, `side_talk`, `noise`, `continuation` and the kebab-case
/// scaffold names.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(transparent)]
pub struct AnswerBank(pub BTreeMap<String, Vec<String>>);

impl AnswerBank {
    pub fn bundled() -> AnswerBank {
        toml::from_str(DEFAULT_ANSWERS).expect("bundled answer bank parses")
    }

    pub fn get(&self, key: &str) -> &[String] {
        self.0.get(key).map_or(&[], Vec::as_slice)
    }

    /// Entries in `other` replace whole lists.
    pub fn merged(mut self, other: &AnswerBank) -> AnswerBank {
        for (k, v) in &other.0 {
            self.0.insert(k.clone(), v.clone());
        }
        self
    }
}

pub fn scaffold_key(s: ScaffoldType) -> &'static str {
    match s {
        ScaffoldType::PrimitiveNarrative => "primitive-narrative",
        ScaffoldType::ChainNarrative => "chain-narrative",
        ScaffoldType::TrueNarrative => "true-narrative",
        ScaffoldType::SocialAwareness => "social-awareness",
        ScaffoldType::RelationshipSkills => "relationship-skills",
        ScaffoldType::ResponsibleDecisionMaking => "responsible-decision-making",
        ScaffoldType::OpenInvitation => "open-invitation",
        ScaffoldType::SelfAwareness => "self-awareness",
        ScaffoldType::SelfManagement => "self-management",
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Persona {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    /// Chance of declining a scaffold question.
    #[serde(default)]
    pub refusal: f64,
    /// Chance of a bad scan at a scan node.
    #[serde(default)]
    pub scan_error: f64,
    #[serde(default)]
    pub garble: f64,
    #[serde(default)]
    pub interrupt: f64,
    #[serde(default)]
    pub side_talk: f64,
    /// Chance of talking over the agent.
    #[serde(default)]
    pub barge_in: f64,
    /// 1-based phase number at which the child walks away.
    #[serde(default)]
    pub abandon_at_phase: Option<usize>,
    #[serde(default)]
    pub timing: Timing,
    #[serde(default)]
    pub answers: AnswerBank,
}

impl Persona {
    pub fn parse(src: &str) -> Result<Persona, SimError> {
        let mut p: Persona = toml::from_str(src).map_err(|e| SimError::Persona(e.to_string()))?;
        p.answers = AnswerBank::bundled().merged(&p.answers);
        p.check()?;
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Persona, SimError> {
        let src = fs::read_to_string(path).map_err(|e| SimError::Persona(format!("{}: {e}", path.display())))?;
        Persona::parse(&src)
    }

    pub fn bundled(name: &str) -> Result<Persona, SimError> {
        let (_, src) = BUNDLED
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| SimError::UnknownPersona(name.to_string()))?;
        Persona::parse(src)
    }

    pub fn bundled_names() -> impl Iterator<Item = &'static str> {
        BUNDLED.iter().map(|(n, _)| *n)
    }

    /// A cooperative child with the default bank.
    pub fn cooperative() -> Persona {
        Persona::bundled("cooperative").expect("bundled persona")
    }

    fn check(&self) -> Result<(), SimError> {
        let probs = [
            ("refusal", self.refusal),
            ("scan_error", self.scan_error),
            ("garble", self.garble),
            ("interrupt", self.interrupt),
            ("side_talk", self.side_talk),
            ("barge_in", self.barge_in),
        ];
        for (name, p) in probs {
            if !(0.0..=1.0).contains(&p) {
                return Err(SimError::Persona(format!("{name} = {p} is not a probability")));
            }
        }
        if self.garble + self.interrupt + self.side_talk > 1.0 {
            return Err(SimError::Persona("breakdown probabilities sum past 1".into()));
        }
        let t = &self.timing;
        for (name, [lo, hi]) in [("fragment_gap_ms", t.fragment_gap_ms), ("pause_ms", t.pause_ms), ("think_ms", t.think_ms)] {
            if lo > hi {
                return Err(SimError::Persona(format!("{name} range is reversed")));
            }
        }
        if t.fragment_gap_ms[1] >= t.pause_ms[0] {
            return Err(SimError::Persona("fragment gaps must be shorter than the pause".into()));
        }
        for key in ["premise", "note", "plain", "refusal", "side_talk", "noise", "continuation"] {
            if self.answers.get(key).is_empty() {
                return Err(SimError::Persona(format!("answer bank has no {key:?} entries")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_personas_parse() {
        for name in Persona::bundled_names() {
            let p = Persona::bundled(name).unwrap();
            assert_eq!(p.name, name);
        }
        assert!(matches!(Persona::bundled("pirate"), Err(SimError::UnknownPersona(_))));
    }

    #[test]
    fn rejects_bad_knobs() {
        assert!(Persona::parse("name = \"x\"\nrefusal = 1.5").is_err());
        assert!(Persona::parse("name = \"x\"\n[timing]\nfragment_gap_ms = [300, 4500]").is_err());
        assert!(Persona::parse("name = \"x\"\ncolour = \"red\"").is_err());
    }

    #[test]
    fn persona_answers_override_lists() {
        let p = Persona::parse("name = \"x\"\n[answers]\nplain = [\"Sure.\"]").unwrap();
        assert_eq!(p.answers.get("plain"), ["Sure."]);
        assert!(!p.answers.get("note").is_empty());
    }
}
