//! Word handling shared by coding and uptake detection.

use std::collections::BTreeSet;
use std::path::Path;

use rust_stemmers::{Algorithm, Stemmer};

use crate::AnalysisError;

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Past-tense forms the stemmer leaves alone.
const IRREGULAR: &[(&str, &str)] = &[
    ("ate", "eat"),
    ("began", "begin"),
    ("broke", "break"),
    ("brought", "bring"),
    ("built", "build"),
    ("came", "come"),
    ("caught", "catch"),
    ("drew", "draw"),
    ("fell", "fall"),
    ("felt", "feel"),
    ("flew", "fly"),
    ("found", "find"),
    ("gave", "give"),
    ("got", "get"),
    ("held", "hold"),
    ("hid", "hide"),
    ("knew", "know"),
    ("left", "leave"),
    ("lost", "lose"),
    ("made", "make"),
    ("met", "meet"),
    ("ran", "run"),
    ("said", "say"),
    ("sang", "sing"),
    ("sat", "sit"),
    ("saw", "see"),
    ("stood", "stand"),
    ("swam", "swim"),
    ("took", "take"),
    ("thought", "think"),
    ("told", "tell"),
    ("went", "go"),
    ("woke", "wake"),
    ("won", "win"),
    ("wrote", "write"),
];

/// Lowercased alphabetic words. Apostrophe suffixes are split off, so
/// "bear's" gives "bear" and "s".
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphabetic())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords(BTreeSet<String>);

impl Stopwords {
    pub fn parse(text: &str) -> Stopwords {
        Stopwords(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn bundled() -> Stopwords {
        Stopwords::parse(BUNDLED_STOPWORDS)
    }

    pub fn load(path: &Path) -> Result<Stopwords, AnalysisError> {
        let text = std::fs::read_to_string(path).map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
        Ok(Stopwords::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::bundled()
    }
}

pub struct TermExtractor {
    stemmer: Stemmer,
    stopwords: Stopwords,
}

impl std::fmt::Debug for TermExtractor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TermExtractor").field("stopwords", &self.stopwords.len()).finish()
    }
}

impl TermExtractor {
    pub fn new(stopwords: Stopwords) -> Self {
        TermExtractor {
            stemmer: Stemmer::create(Algorithm::English),
            stopwords,
        }
    }

    pub fn stem(&self, word: &str) -> String {
        let base = IRREGULAR
            .iter()
            .find(|(past, _)| *past == word)
            .map_or(word, |(_, base)| base);
        self.stemmer.stem(base).into_owned()
    }

    /// Content terms of `text`: (surface word, stem) pairs with stopwords
    /// removed, first occurrence of each stem only.
    pub fn content_terms(&self, text: &str) -> Vec<(String, String)> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for w in words(text) {
            if self.stopwords.contains(&w) {
                continue;
            }
            let stem = self.stem(&w);
            if self.stopwords.contains(&stem) {
                continue;
            }
            if seen.insert(stem.clone()) {
                out.push((w, stem));
            }
        }
        out
    }

    /// Stems of every word in `text`, stopwords included.
    pub fn stems(&self, text: &str) -> BTreeSet<String> {
        words(text).iter().map(|w| self.stem(w)).collect()
    }
}

impl Default for TermExtractor {
    fn default() -> Self {
        TermExtractor::new(Stopwords::bundled())
    }
}
