//! Chat-completion client. One request per generation: the system message
//! carries the preamble, the active script and the current step; the
//! transcript follows as alternating user/assistant messages.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::graph::{Expects, Guard, PhaseScript, Target};
use crate::session::Speaker;

use super::{Narrator, NarratorContext, NarratorError, ProviderCause, RawReply, Request, Retry};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub timeout_ms: u64,
    pub max_tokens: u32,
}

impl RemoteConfig {
    /// Reads `TINKER_NARRATOR_URL`, `TINKER_NARRATOR_MODEL`,
    /// `TINKER_NARRATOR_KEY` and `TINKER_NARRATOR_TIMEOUT_MS`.
    pub fn from_env() -> Option<RemoteConfig> {
        let endpoint = std::env::var("TINKER_NARRATOR_URL").ok()?;
        Some(RemoteConfig {
            endpoint,
            model: std::env::var("TINKER_NARRATOR_MODEL").unwrap_or_else(|_| "default".into()),
            api_key: std::env::var("TINKER_NARRATOR_KEY").ok(),
            timeout_ms: std::env::var("TINKER_NARRATOR_TIMEOUT_MS")
                .ok()
                .and_then(|v| v.parse().ok())
                .unwrap_or(30_000),
            max_tokens: 1024,
        })
    }
}

pub struct RemoteNarrator {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
}

impl RemoteNarrator {
    pub fn new(config: RemoteConfig) -> Result<Self, NarratorError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| NarratorError::ProviderUnavailable {
                cause: ProviderCause::Transport(e.to_string()),
            })?;
        Ok(RemoteNarrator { config, client })
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    /// The JSON body sent for a context.
    pub fn request_body(&self, ctx: &NarratorContext<'_>) -> Value {
        let mut messages = vec![json!({"role": "system", "content": system_message(ctx)})];
        let mut last_role = "";
        for turn in ctx.transcript {
            let role = match turn.speaker {
                Speaker::Child => "user",
                Speaker::Agent => "assistant",
            };
            if role == last_role {
                if let Some(Value::Object(m)) = messages.last_mut() {
                    if let Some(Value::String(c)) = m.get_mut("content") {
                        c.push('\n');
                        c.push_str(&turn.text);
                    }
                }
            } else {
                messages.push(json!({"role": role, "content": turn.text}));
                last_role = role;
            }
        }
        json!({
            "model": self.config.model,
            "max_tokens": self.config.max_tokens,
            "messages": messages,
        })
    }
}

fn unavailable(cause: ProviderCause) -> NarratorError {
    NarratorError::ProviderUnavailable { cause }
}

impl Narrator for RemoteNarrator {
    fn name(&self) -> &str {
        "remote"
    }

    fn generate_raw(&self, ctx: &NarratorContext<'_>) -> Result<RawReply, NarratorError> {
        let body = self.request_body(ctx);
        tracing::debug!(target: "tinker::narrator", request = %body, "remote request");
        let mut req = self.client.post(&self.config.endpoint).json(&body);
        if let Some(key) = &self.config.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                unavailable(ProviderCause::Timeout)
            } else {
                unavailable(ProviderCause::Transport(e.to_string()))
            }
        })?;
        let status = resp.status().as_u16();
        match status {
            401 | 403 => return Err(unavailable(ProviderCause::AuthFailure)),
            429 => return Err(unavailable(ProviderCause::RateLimited)),
            s if !(200..300).contains(&s) => return Err(unavailable(ProviderCause::Http(s))),
            _ => {}
        }
        let value: Value = resp.json().map_err(|e| {
            if e.is_timeout() {
                unavailable(ProviderCause::Timeout)
            } else {
                unavailable(ProviderCause::BadBody(e.to_string()))
            }
        })?;
        tracing::debug!(target: "tinker::narrator", response = %value, "remote response");
        let text = response_text(&value).ok_or_else(|| unavailable(ProviderCause::BadBody("no message text".into())))?;
        if text.trim().is_empty() {
            return Err(NarratorError::EmptyResponse);
        }
        Ok(RawReply::text(text))
    }
}

/// Message text from either a `choices[0].message.content` or a
/// `content[0].text` shaped response.
fn response_text(v: &Value) -> Option<String> {
    v.pointer("/choices/0/message/content")
        .or_else(|| v.pointer("/content/0/text"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

/// The script in the prompt layout: intro, dialogue graph, possible paths.
pub fn render_script(script: &PhaseScript) -> String {
    let mut out = String::new();
    if let Some(t) = &script.title {
        out.push_str(&format!("## {t}\n\n"));
    }
    if !script.intro.is_empty() {
        out.push_str(&script.intro);
        out.push_str("\n\n");
    }
    out.push_str("Dialogue Graph:\n");
    for node in &script.nodes {
        out.push_str(&format!("({}) {}\n", node.id, node.action));
        for t in &node.transitions {
            let target = match t.target {
                Target::Node(n) => format!("go to ({n})"),
                Target::Complete => format!("say \"{}\"", script.marker.text()),
            };
            let line = match t.guard {
                Guard::Yes => format!("  > If the child says \"yes\", {target}.\n"),
                Guard::No => format!("  > If the child says \"no\", {target}.\n"),
                Guard::Any => format!("  > Then {target}.\n"),
            };
            out.push_str(&line);
        }
    }
    if !script.declared_paths.is_empty() {
        out.push_str("\nPossible Dialogue Paths:\n");
        for p in &script.declared_paths {
            out.push_str(&p.raw);
            out.push('\n');
        }
    }
    out
}

fn system_message(ctx: &NarratorContext<'_>) -> String {
    let mut msg = format!("{}\n\n{}", ctx.preamble.trim_end(), render_script(ctx.script));
    msg.push_str(&format!("\nYou are now at step ({}).", ctx.node));
    if let Some(node) = ctx.script.node(ctx.node) {
        if let Expects::Scan(kind) = node.expects {
            msg.push_str(&format!(" The child will scan a {kind} token next."));
        }
    }
    if let Some(q) = ctx.question {
        msg.push_str(&format!("\nQuestion guidance for this step: {}", q.guidance));
    }
    match ctx.request {
        Request::Node => {}
        Request::Wrap => msg.push_str("\nThe child has answered the last step of this phase. Respond briefly."),
        Request::Clarify => msg.push_str("\nThe child's last reply was unclear. Ask your question again."),
        Request::FollowUp { partial } => msg.push_str(&format!(
            "\nThe child stopped mid-sentence after saying \"{partial}\". Invite them to finish."
        )),
        Request::SideTalk { .. } => msg.push_str(
            "\nThe child asked a question outside the script. Answer briefly, then return to the current step.",
        ),
        Request::Amend { request } => msg.push_str(&format!(
            "\nThe child is correcting the story: \"{request}\". Acknowledge and restate the corrected detail."
        )),
    }
    if ctx.expect_marker {
        msg.push_str(&format!(
            "\nAll required steps are completed. End your reply with \"{}\".",
            ctx.script.marker.text()
        ));
    } else {
        msg.push_str("\nThe phase is not complete yet. Do not say the completion phrase.");
    }
    match ctx.retry {
        Some(Retry::EarlyMarker) => msg.push_str("\nYour previous reply ended the phase too early. Try again."),
        Some(Retry::MissingMarker) => msg.push_str("\nYour previous reply was missing the completion phrase."),
        None => {}
    }
    msg
}
