//! Narrator providers turn the current script step, story state and
//! transcript into the agent's next line.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{StoryDocument, StoryElement};
use crate::graph::{Marker, NodeId, PhaseScript};
use crate::scaffold::ScaffoldQuestionSpec;
use crate::session::{StageProgress, Turn};

mod remote;
mod replay;
mod stub;

pub use remote::{render_script, RemoteConfig, RemoteNarrator};
pub use replay::ReplayNarrator;
pub use stub::StubNarrator;

/// What the orchestrator needs the narrator to say.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Request<'a> {
    /// Carry out the node's action.
    Node,
    /// The phase's last input arrived; close the phase.
    Wrap,
    /// The child's reply could not be understood; ask again.
    Clarify,
    /// The child stopped mid-sentence.
    FollowUp { partial: &'a str },
    /// The child asked something outside the script.
    SideTalk { question: &'a str },
    /// The child corrected something already told.
    Amend { request: &'a str },
}

impl Request<'_> {
    pub fn label(&self) -> &'static str {
        match self {
            Request::Node => "node",
            Request::Wrap => "wrap",
            Request::Clarify => "clarify",
            Request::FollowUp { .. } => "follow-up",
            Request::SideTalk { .. } => "side-talk",
            Request::Amend { .. } => "amend",
        }
    }
}

/// Why a generation is being retried.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Retry {
    /// The previous reply carried a marker before the phase was done.
    EarlyMarker,
    /// The phase is done but the previous reply carried no marker.
    MissingMarker,
}

#[derive(Debug, Clone, Copy)]
pub struct NarratorContext<'a> {
    pub preamble: &'a str,
    pub script: &'a PhaseScript,
    pub node: NodeId,
    pub request: Request<'a>,
    /// Most recent turns, oldest first.
    pub transcript: &'a [Turn],
    pub story: &'a StoryDocument,
    pub stage: &'a StageProgress,
    pub question: Option<&'a ScaffoldQuestionSpec>,
    /// The last accepted scan, for scripts that talk about it.
    pub scanned: Option<&'a StoryElement>,
    pub expect_marker: bool,
    pub retry: Option<Retry>,
}

/// Unparsed provider output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawReply {
    pub text: String,
    /// The story segment alone, when the provider can separate it from the
    /// surrounding talk. Otherwise the whole utterance is the segment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub story_text: Option<String>,
}

impl RawReply {
    pub fn text(text: impl Into<String>) -> Self {
        RawReply {
            text: text.into(),
            story_text: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentOutput {
    pub utterance: String,
    pub markers: Vec<Marker>,
    pub off_script: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub story_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ProviderCause {
    Timeout,
    AuthFailure,
    RateLimited,
    Http(u16),
    Transport(String),
    BadBody(String),
    /// A replay ran out of recorded replies.
    Exhausted,
}

impl fmt::Display for ProviderCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProviderCause::Timeout => f.write_str("timed out"),
            ProviderCause::AuthFailure => f.write_str("authentication failed"),
            ProviderCause::RateLimited => f.write_str("rate limited"),
            ProviderCause::Http(s) => write!(f, "HTTP status {s}"),
            ProviderCause::Transport(m) => write!(f, "transport error: {m}"),
            ProviderCause::BadBody(m) => write!(f, "unreadable response: {m}"),
            ProviderCause::Exhausted => f.write_str("no recorded reply left"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NarratorError {
    #[error("narrator unavailable: {cause}")]
    ProviderUnavailable { cause: ProviderCause },
    #[error("narrator returned an empty response")]
    EmptyResponse,
    #[error("narrator emitted a completion marker at node {0} before the phase was complete")]
    MarkerBeforeCompletion(NodeId),
    #[error("narrator did not emit {0:?} after repeated prompting")]
    MarkerStuck(Marker),
}

impl NarratorError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, NarratorError::ProviderUnavailable { .. })
    }
}

pub trait Narrator: Send + Sync {
    fn name(&self) -> &str;
    fn generate_raw(&self, ctx: &NarratorContext<'_>) -> Result<RawReply, NarratorError>;
}

/// Removes every exact completion marker from `raw`, collapsing the
/// whitespace on either side of each removal.
pub fn strip_markers(raw: &str) -> AgentOutput {
    let mut markers = Vec::new();
    let mut pieces = Vec::new();
    let mut rest = raw;
    loop {
        let next = Marker::ALL
            .iter()
            .filter_map(|m| rest.find(m.text()).map(|i| (i, *m)))
            .min_by_key(|(i, _)| *i);
        match next {
            Some((i, m)) => {
                pieces.push(&rest[..i]);
                markers.push(m);
                rest = &rest[i + m.text().len()..];
            }
            None => {
                pieces.push(rest);
                break;
            }
        }
    }
    let utterance = if markers.is_empty() {
        raw.trim().to_string()
    } else {
        pieces
            .iter()
            .map(|p| p.trim())
            .filter(|p| !p.is_empty())
            .collect::<Vec<_>>()
            .join(" ")
    };
    AgentOutput {
        utterance,
        markers,
        off_script: false,
        story_text: None,
    }
}

/// Calls the provider and strips markers from its reply.
pub fn generate(narrator: &dyn Narrator, ctx: &NarratorContext<'_>) -> Result<(RawReply, AgentOutput), NarratorError> {
    let raw = narrator.generate_raw(ctx)?;
    let output = interpret(&raw, ctx);
    if raw.text.trim().is_empty() {
        return Err(NarratorError::EmptyResponse);
    }
    Ok((raw, output))
}

/// Turns a raw reply into an [`AgentOutput`] for the given request.
pub fn interpret(raw: &RawReply, ctx: &NarratorContext<'_>) -> AgentOutput {
    let mut out = strip_markers(&raw.text);
    out.off_script = matches!(ctx.request, Request::SideTalk { .. });
    out.story_text = raw.story_text.as_deref().map(|s| strip_markers(s).utterance);
    out
}

/// Number of sentences, counting runs of `.`, `!` and `?` as terminators.
pub fn sentence_count(text: &str) -> usize {
    text.split(['.', '!', '?'])
        .filter(|s| s.chars().any(char::is_alphanumeric))
        .count()
}

/// Target sentence counts for drafts and updates.
pub const DRAFT_SENTENCES: usize = 7;
pub const UPDATE_SENTENCES: usize = 10;
/// Slack allowed around the targets for providers that are not the stub.
pub const SENTENCE_TOLERANCE: usize = 3;

pub fn within_target(text: &str, target: usize) -> bool {
    sentence_count(text).abs_diff(target) <= SENTENCE_TOLERANCE
}

/// Wraps a provider and appends the phase marker to its first `faults`
/// replies that were not supposed to carry one. For exercising marker
/// recovery.
pub struct EarlyMarkerFault<N> {
    inner: N,
    remaining: std::sync::atomic::AtomicUsize,
}

impl<N: Narrator> EarlyMarkerFault<N> {
    pub fn new(inner: N, faults: usize) -> Self {
        EarlyMarkerFault {
            inner,
            remaining: faults.into(),
        }
    }

    pub fn remaining(&self) -> usize {
        self.remaining.load(std::sync::atomic::Ordering::SeqCst)
    }
}

impl<N: Narrator> Narrator for EarlyMarkerFault<N> {
    fn name(&self) -> &str {
        "early-marker-fault"
    }

    fn generate_raw(&self, ctx: &NarratorContext<'_>) -> Result<RawReply, NarratorError> {
        use std::sync::atomic::Ordering;
        let mut reply = self.inner.generate_raw(ctx)?;
        if !ctx.expect_marker
            && self
                .remaining
                .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
                .is_ok()
        {
            reply.text = format!("{} {}", reply.text, ctx.script.marker.text());
        }
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn strips_trailing_marker() {
        let out = strip_markers("Great job! ##NEXT##");
        assert_eq!(out.utterance, "Great job!");
        assert_eq!(out.markers, vec![Marker::Next]);
    }

    #[test]
    fn bare_marker_leaves_empty_utterance() {
        let out = strip_markers("##Done##");
        assert_eq!(out.utterance, "");
        assert_eq!(out.markers, vec![Marker::Done]);
    }

    #[test]
    fn plain_text_is_untouched() {
        let out = strip_markers("Hello there");
        assert_eq!(out.utterance, "Hello there");
        assert!(out.markers.is_empty());
    }

    #[test]
    fn mid_text_marker_joins_with_one_space() {
        let out = strip_markers("One.  ##NEXT##   Two. ##Done##");
        assert_eq!(out.utterance, "One. Two.");
        assert_eq!(out.markers, vec![Marker::Next, Marker::Done]);
    }

    #[test]
    fn near_misses_are_text() {
        let out = strip_markers("## NEXT ## and ##next##");
        assert!(out.markers.is_empty());
        assert_eq!(out.utterance, "## NEXT ## and ##next##");
    }

    #[test]
    fn counts_sentences() {
        assert_eq!(sentence_count("One. Two! Three?"), 3);
        assert_eq!(sentence_count("Wait... what?! Yes"), 3);
        assert_eq!(sentence_count(""), 0);
        assert!(within_target("A. B. C. D.", 7));
        assert!(!within_target("A. B. C.", 7));
    }

    proptest! {
        #[test]
        fn stripping_is_idempotent(parts in proptest::collection::vec(
            prop_oneof![Just("##NEXT##".to_string()), Just("##Done##".to_string()), "[a-z #!.]{0,8}"], 0..8)) {
            let raw = parts.concat();
            let once = strip_markers(&raw);
            let twice = strip_markers(&once.utterance);
            prop_assert!(twice.markers.is_empty());
            prop_assert_eq!(&twice.utterance, &once.utterance);
            prop_assert!(!once.utterance.contains("##NEXT##") && !once.utterance.contains("##Done##"));
        }
    }
}
