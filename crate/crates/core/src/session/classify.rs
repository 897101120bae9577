//! Rough reading of a child's reply before it is routed through the graph.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReplyClass {
    Answer,
    /// Mostly unpronounceable words, as left by a speech-to-text failure.
    Unclear,
    /// Trails off on a connective or article.
    Incomplete,
    /// A question aimed at the agent.
    SideTalk,
    /// Disputes something already told.
    Correction,
}

const TRAILING: &[&str] = &["and", "but", "because", "so", "or", "then", "with", "the", "a", "an", "to"];
const CORRECTION_OPENERS: &[&str] = &[
    "it was not",
    "it wasn't",
    "it wasnt",
    "that's not",
    "thats not",
    "that is not",
    "i didn't say",
    "i didnt say",
    "i did not say",
    "no it was",
];

fn words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric() || *c == '\'')
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

fn is_garbled(word: &str) -> bool {
    word.chars().all(char::is_alphabetic) && !word.chars().any(|c| "aeiouy".contains(c))
}

pub fn classify(text: &str) -> ReplyClass {
    let ws = words(text);
    if ws.is_empty() {
        return ReplyClass::Unclear;
    }
    let garbled = ws.iter().filter(|w| is_garbled(w)).count();
    if garbled * 2 > ws.len() {
        return ReplyClass::Unclear;
    }
    let normalized = ws.join(" ");
    let unpunctuated: String = normalized.replace(',', "");
    if CORRECTION_OPENERS.iter().any(|o| unpunctuated.starts_with(o)) {
        return ReplyClass::Correction;
    }
    let trimmed = text.trim_end();
    if trimmed.ends_with('?') && ws.iter().any(|w| w == "you" || w == "your") {
        return ReplyClass::SideTalk;
    }
    let ends_sentence = trimmed.ends_with(['.', '!', '?']);
    if !ends_sentence && ws.last().is_some_and(|w| TRAILING.contains(&w.as_str())) {
        return ReplyClass::Incomplete;
    }
    ReplyClass::Answer
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifies_breakdowns() {
        assert_eq!(classify("scared and"), ReplyClass::Incomplete);
        assert_eq!(classify("Scared and happy."), ReplyClass::Answer);
        assert_eq!(classify("brr zzt krrg"), ReplyClass::Unclear);
        assert_eq!(classify("Do you like turtles?"), ReplyClass::SideTalk);
        assert_eq!(classify("What happens next?"), ReplyClass::Answer);
        assert_eq!(classify("It was not a kid turtle"), ReplyClass::Correction);
        assert_eq!(classify("No, it was a big turtle"), ReplyClass::Correction);
        assert_eq!(classify("To find treasure."), ReplyClass::Answer);
        assert_eq!(classify("No"), ReplyClass::Answer);
        assert_eq!(classify("   "), ReplyClass::Unclear);
    }
}
