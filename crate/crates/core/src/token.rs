//! Tangible-token payloads: `"<Kind>:<Value>"` text as read from a toy's tag.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use thiserror::Error;

use crate::domain::{ElementKind, StoryElement};

/// Spoken when a scanned toy is not the kind the current step asks for.
pub const REDIRECT_TEXT: &str = "You need to scan the correct NFC toy to choose.";

const DEFAULT_VOCABULARY: &str = include_str!("../data/vocabulary.txt");

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TokenError {
    #[error("malformed payload {0:?}: expected <Kind>:<Value>")]
    Malformed(String),
    #[error("unknown token kind {0:?}")]
    UnknownKind(String),
    #[error("{value:?} is not a known {kind} token")]
    UnknownValue { kind: ElementKind, value: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("vocabulary line {line}: {message}")]
pub struct VocabularyError {
    pub line: usize,
    pub message: String,
}

/// Closed per-kind token vocabulary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    values: BTreeMap<ElementKind, Vec<String>>,
}

impl Vocabulary {
    /// Parses the sectioned vocabulary format (`[Kind]` headers, one value
    /// per line, `#` comments).
    pub fn parse(src: &str) -> Result<Self, VocabularyError> {
        let mut values: BTreeMap<ElementKind, Vec<String>> = BTreeMap::new();
        let mut current = None;
        for (i, raw) in src.lines().enumerate() {
            let line = raw.trim();
            let err = |message: String| VocabularyError { line: i + 1, message };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                let kind: ElementKind = name
                    .parse()
                    .map_err(|_| err(format!("unknown kind {name:?}")))?;
                values.entry(kind).or_default();
                current = Some(kind);
                continue;
            }
            let kind = current.ok_or_else(|| err("value before any [Kind] header".into()))?;
            if line.contains(':') || line.contains(char::is_whitespace) {
                return Err(err(format!("invalid value {line:?}")));
            }
            let list = values.entry(kind).or_default();
            if list.iter().any(|v| v == line) {
                return Err(err(format!("duplicate value {line:?}")));
            }
            list.push(line.to_string());
        }
        Ok(Vocabulary { values })
    }

    /// The committed default toy set.
    pub fn default_ref() -> &'static Vocabulary {
        static DEFAULT: OnceLock<Vocabulary> = OnceLock::new();
        DEFAULT.get_or_init(|| Vocabulary::parse(DEFAULT_VOCABULARY).expect("bundled vocabulary parses"))
    }

    pub fn values(&self, kind: ElementKind) -> &[String] {
        self.values.get(&kind).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn contains(&self, kind: ElementKind, value: &str) -> bool {
        self.values(kind).iter().any(|v| v == value)
    }

    pub fn element(&self, kind: ElementKind, value: &str) -> Option<StoryElement> {
        self.contains(kind, value)
            .then(|| StoryElement::unchecked(kind, value))
    }

    /// Every element in the vocabulary, kind by kind.
    pub fn elements(&self) -> impl Iterator<Item = StoryElement> + '_ {
        self.values
            .iter()
            .flat_map(|(k, vs)| vs.iter().map(move |v| StoryElement::unchecked(*k, v)))
    }

    pub fn len(&self) -> usize {
        self.values.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn parse_token(&self, raw: &str) -> Result<StoryElement, TokenError> {
        let mut parts = raw.split(':');
        let (kind, value) = match (parts.next(), parts.next(), parts.next()) {
            (Some(k), Some(v), None) => (k, v),
            _ => return Err(TokenError::Malformed(raw.to_string())),
        };
        let kind: ElementKind = kind
            .parse()
            .map_err(|_| TokenError::UnknownKind(kind.to_string()))?;
        self.element(kind, value).ok_or_else(|| TokenError::UnknownValue {
            kind,
            value: value.to_string(),
        })
    }
}

/// Parses a payload against the default vocabulary. Only exact
/// `Kind:Value` strings are accepted, whitespace included.
pub fn parse_token(raw: &str) -> Result<StoryElement, TokenError> {
    Vocabulary::default_ref().parse_token(raw)
}

pub fn encode_token(element: &StoryElement) -> String {
    format!("{}:{}", element.kind(), element.value())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KindCheck {
    Ok,
    Mismatch { redirect: String },
}

pub fn expect_kind(element: &StoryElement, want: ElementKind) -> KindCheck {
    if element.kind() == want {
        KindCheck::Ok
    } else {
        KindCheck::Mismatch {
            redirect: REDIRECT_TEXT.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_documented_payloads() {
        let bear = parse_token("Character:Bear").unwrap();
        assert_eq!((bear.kind(), bear.value()), (ElementKind::Character, "Bear"));
        let happy = parse_token("Emotion:Happy").unwrap();
        assert_eq!((happy.kind(), happy.value()), (ElementKind::Emotion, "Happy"));
    }

    #[test]
    fn rejects_bad_payloads() {
        assert_eq!(parse_token("Bear"), Err(TokenError::Malformed("Bear".into())));
        assert_eq!(
            parse_token("Place:Desert"),
            Err(TokenError::UnknownValue {
                kind: ElementKind::Place,
                value: "Desert".into()
            })
        );
        assert!(matches!(parse_token("Place:Cave:Extra"), Err(TokenError::Malformed(_))));
        assert!(matches!(parse_token("character:Bear"), Err(TokenError::UnknownKind(_))));
        assert!(matches!(parse_token("Character:bear"), Err(TokenError::UnknownValue { .. })));
        assert!(matches!(parse_token("Character: Bear"), Err(TokenError::UnknownValue { .. })));
    }

    #[test]
    fn surrounding_whitespace_is_not_accepted() {
        assert!(parse_token("  Place:Forest").is_err());
        assert!(parse_token("Place:Forest\n").is_err());
    }

    #[test]
    fn encodes_kind_and_value() {
        assert_eq!(
            encode_token(&StoryElement::new(ElementKind::Place, "Forest").unwrap()),
            "Place:Forest"
        );
        assert_eq!(
            encode_token(&StoryElement::new(ElementKind::Item, "Lantern").unwrap()),
            "Item:Lantern"
        );
    }

    #[test]
    fn default_vocabulary_has_26_tokens() {
        let v = Vocabulary::default_ref();
        assert_eq!(v.len(), 26);
        assert_eq!(v.values(ElementKind::Character), ["Rabbit", "Bear", "Bird", "Frog", "Lion"]);
        for e in v.elements() {
            assert_eq!(parse_token(&encode_token(&e)).unwrap(), e);
        }
    }

    #[test]
    fn kind_check_carries_exact_redirect() {
        let boat = StoryElement::new(ElementKind::Item, "Boat").unwrap();
        assert_eq!(
            expect_kind(&boat, ElementKind::Place),
            KindCheck::Mismatch {
                redirect: "You need to scan the correct NFC toy to choose.".into()
            }
        );
        let river = StoryElement::new(ElementKind::Place, "River").unwrap();
        assert_eq!(expect_kind(&river, ElementKind::Place), KindCheck::Ok);
        let curious = StoryElement::new(ElementKind::Emotion, "Curious").unwrap();
        assert_eq!(expect_kind(&curious, ElementKind::Emotion), KindCheck::Ok);
    }

    #[test]
    fn custom_vocabulary_extends_toys() {
        let v = Vocabulary::parse("[Character]\nFox\n[Place]\nDesert\n").unwrap();
        assert_eq!(v.parse_token("Place:Desert").unwrap().value(), "Desert");
        assert!(v.parse_token("Place:Cave").is_err());
        assert!(Vocabulary::parse("Fox\n").is_err());
        assert!(Vocabulary::parse("[Animal]\nFox\n").is_err());
        assert!(Vocabulary::parse("[Item]\nKey\nKey\n").is_err());
    }

    proptest! {
        #[test]
        fn kind_check_ok_iff_kinds_equal(idx in 0usize..26, want in 0usize..4) {
            let e = Vocabulary::default_ref().elements().nth(idx).unwrap();
            let want = ElementKind::ALL[want];
            prop_assert_eq!(expect_kind(&e, want) == KindCheck::Ok, e.kind() == want);
        }

        #[test]
        fn only_exact_payloads_parse(s in "[A-Za-z: ]{0,20}") {
            let valid: Vec<String> = Vocabulary::default_ref().elements().map(|e| encode_token(&e)).collect();
            match parse_token(&s) {
                Ok(e) => {
                    prop_assert!(valid.contains(&s));
                    prop_assert_eq!(encode_token(&e), s);
                }
                Err(_) => prop_assert!(!valid.contains(&s)),
            }
        }
    }
}
