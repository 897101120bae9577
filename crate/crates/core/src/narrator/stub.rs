//! Deterministic template narrator.

use crate::domain::{NarrativeStage, StoryElement};
use crate::graph::{is_decline, DialogueNode, NodeRole, PhaseId};

use super::{Narrator, NarratorContext, NarratorError, RawReply, Request};

/// Fills templates from the context. Identical contexts give identical
/// replies; drafts have exactly seven sentences and updates exactly ten.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubNarrator;

impl Narrator for StubNarrator {
    fn name(&self) -> &str {
        "stub"
    }

    fn generate_raw(&self, ctx: &NarratorContext<'_>) -> Result<RawReply, NarratorError> {
        let node = ctx
            .script
            .node(ctx.node)
            .ok_or(NarratorError::ProviderUnavailable {
                cause: super::ProviderCause::BadBody(format!("unknown node {}", ctx.node)),
            })?;
        let mut story_text = None;
        let text = match ctx.request {
            Request::Node => match node.role {
                NodeRole::Draft => {
                    let draft = draft(ctx);
                    let text = format!("I will make a story with the tokens you chose. {draft}");
                    story_text = Some(draft);
                    text
                }
                NodeRole::Update => {
                    let update = update(ctx);
                    let stage = stage_of(ctx).map(|s| s.as_str()).unwrap_or("story");
                    let text = format!("Here is our new story. {update} The {stage} page is complete!");
                    story_text = Some(update);
                    text
                }
                _ => prompt(ctx, node),
            },
            Request::Wrap => wrap(ctx),
            Request::Clarify => format!("I'm not sure what you mean. Let me ask again: {}", prompt(ctx, node)),
            Request::FollowUp { partial } => format!("{}.. what? Tell me more.", capitalize(partial.trim())),
            Request::SideTalk { .. } => format!(
                "That's a fun question! I'm an AI, so I love hearing your ideas. Let's get back to our story. {}",
                prompt(ctx, node)
            ),
            Request::Amend { request } => format!(
                "Oh, I see! Thank you for telling me. I will fix our story: {}",
                clean_clause(request)
            ),
        };
        let text = if ctx.expect_marker {
            format!("{text} {}", ctx.script.marker.text())
        } else {
            text
        };
        Ok(RawReply { text, story_text })
    }
}

fn stage_of(ctx: &NarratorContext<'_>) -> Option<NarrativeStage> {
    ctx.script.phase.stage()
}

fn character(ctx: &NarratorContext<'_>, i: usize) -> String {
    ctx.story
        .characters
        .get(i)
        .map(|c| c.value().to_string())
        .unwrap_or_else(|| ["the first friend", "the second friend", "the third friend"][i].to_string())
}

/// The element of a kind bound in this stage, else the latest one in the story.
fn element(ctx: &NarratorContext<'_>, pick: fn(&crate::domain::StageRecord) -> &StoryElement, current: Option<&StoryElement>) -> String {
    current
        .or_else(|| ctx.story.stages.values().next_back().map(pick))
        .map(|e| e.value().to_string())
        .unwrap_or_default()
}

fn fill(template: &str, ctx: &NarratorContext<'_>) -> String {
    let mut out = template.to_string();
    let subs = [
        ("{c1}", character(ctx, 0)),
        ("{c2}", character(ctx, 1)),
        ("{c3}", character(ctx, 2)),
        ("{place}", element(ctx, |r| &r.place, ctx.stage.place.as_ref())),
        ("{item}", element(ctx, |r| &r.item, ctx.stage.item.as_ref())),
        ("{emotion}", element(ctx, |r| &r.emotion, ctx.stage.emotion.as_ref())),
        ("{scanned}", ctx.scanned.map(|e| e.value().to_string()).unwrap_or_default()),
        (
            "{stage}",
            stage_of(ctx).map(|s| s.as_str().to_string()).unwrap_or_default(),
        ),
    ];
    for (key, value) in subs {
        if out.contains(key) {
            out = out.replace(key, &value);
        }
    }
    out
}

/// The node's question or instruction, without any story text.
fn prompt(ctx: &NarratorContext<'_>, node: &DialogueNode) -> String {
    if node.role == NodeRole::Question {
        if let Some(spec) = ctx.question {
            return fill(&spec.exemplar, ctx);
        }
    }
    match &node.stub {
        Some(s) => fill(s, ctx),
        None => "Let's keep going with our story!".to_string(),
    }
}

fn wrap(ctx: &NarratorContext<'_>) -> String {
    match ctx.script.phase {
        PhaseId::Opening => "What a great idea! Let's make our story together.".to_string(),
        PhaseId::PostStory => "Thank you for answering all my questions!".to_string(),
        PhaseId::Stage(s) => format!("Okay! The {s} page is complete."),
        _ => "Great job!".to_string(),
    }
}

fn draft_sentences(ctx: &NarratorContext<'_>) -> Vec<String> {
    let stage = stage_of(ctx).unwrap_or(NarrativeStage::Start);
    let opener = match stage {
        NarrativeStage::Start => "Once upon a time, {c1}, {c2}, and {c3} lived near the {place}.",
        NarrativeStage::Journey => "One day, {c1}, {c2}, and {c3} set off on a journey to the {place}.",
        NarrativeStage::Climax => "Suddenly, {c1}, {c2}, and {c3} found a big surprise at the {place}.",
        NarrativeStage::End => "At last, {c1}, {c2}, and {c3} came to the {place}.",
    };
    let closer = match stage {
        NarrativeStage::Start => "It was the beginning of a wonderful adventure.",
        NarrativeStage::Journey => "Their journey was only getting started.",
        NarrativeStage::Climax => "This was the most exciting moment of all.",
        NarrativeStage::End => "And that was how their adventure came to an end.",
    };
    [
        opener,
        "The {place} was full of sounds and colors.",
        "{c1} found the {item} and showed it to the others.",
        "{c2} had an idea about how to use the {item}.",
        "Everyone felt {emotion} as they looked around.",
        "{c3} stayed close to the group and smiled.",
        closer,
    ]
    .iter()
    .map(|t| fill(t, ctx))
    .collect()
}

fn draft(ctx: &NarratorContext<'_>) -> String {
    draft_sentences(ctx).join(" ")
}

const FILLERS: [&str; 3] = [
    "Everyone laughed and cheered together.",
    "It was a day they would always remember.",
    "The friends could not wait to see what came next.",
];

fn update(ctx: &NarratorContext<'_>) -> String {
    let base = match stage_of(ctx).and_then(|s| ctx.story.stage(s)) {
        Some(record) => record.draft.clone(),
        None => draft(ctx),
    };
    let answers: Vec<String> = ctx
        .stage
        .contributions
        .iter()
        .map(|c| c.text.as_str())
        .filter(|t| !is_decline(t))
        .map(clean_clause)
        .filter(|t| !t.is_empty())
        .collect();
    let room = super::UPDATE_SENTENCES - super::sentence_count(&base).min(super::UPDATE_SENTENCES);
    let mut added: Vec<String> = Vec::new();
    if !answers.is_empty() && room > 0 {
        // More answers than room: the last sentence carries the rest.
        let (head, tail) = answers.split_at(answers.len().min(room - 1));
        added.extend(head.iter().map(|a| format!("You imagined that {a}.")));
        if !tail.is_empty() {
            added.push(format!("You imagined that {}.", tail.join(" and ")));
        }
    }
    let mut fillers = FILLERS.iter().cycle();
    while added.len() < room {
        added.push(fillers.next().copied().unwrap_or_default().to_string());
    }
    let mut text = base;
    for s in added {
        text.push(' ');
        text.push_str(&s);
    }
    text
}

/// A child's words as one clause: sentence punctuation becomes commas and the
/// first letter is lowered unless it starts a name or "I".
fn clean_clause(text: &str) -> String {
    let replaced: String = text
        .chars()
        .map(|c| if matches!(c, '.' | '!' | '?') { ',' } else { c })
        .collect();
    let trimmed = replaced.trim().trim_end_matches([',', ' ']).trim_start_matches([',', ' ']);
    let first = trimmed.split_whitespace().next().unwrap_or("");
    let keep = first == "I"
        || first.starts_with("I'")
        || crate::token::Vocabulary::default_ref()
            .elements()
            .any(|e| e.value() == first.trim_end_matches(','));
    if keep {
        trimmed.to_string()
    } else {
        let mut chars = trimmed.chars();
        match chars.next() {
            Some(c) => c.to_lowercase().chain(chars).collect(),
            None => String::new(),
        }
    }
}

fn capitalize(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clause_cleanup() {
        assert_eq!(clean_clause("They see a turtle. It is big!"), "they see a turtle, It is big");
        assert_eq!(clean_clause("Bear is hungry."), "Bear is hungry");
        assert_eq!(clean_clause("I think so"), "I think so");
        assert_eq!(clean_clause("  ...  "), "");
    }

    #[test]
    fn capitalizes_partial() {
        assert_eq!(capitalize("scared and"), "Scared and");
    }
}
