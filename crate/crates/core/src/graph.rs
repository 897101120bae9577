//! Phase dialogue graphs: a line-oriented script format, static checks, path
//! enumeration and a cursor that walks a script as inputs arrive.
//!
//! # Script format
//!
//! ```text
//! // comment
//! phase start                 // practice | opening | characters | start | journey
//!                             // | climax | end | post-story | closing
//! condition structured        // optional: structured | generic
//! marker ##NEXT##
//! title Topic Script: Start   // optional
//! intro: In this topic, ...   // optional, repeatable
//! entry A                     // optional, defaults to the first node
//!
//! node A
//! say: Ask the child to ...   // repeatable, joined with a space
//! expects: utterance          // utterance | scan:<Kind> | none
//! mismatch: You need to ...   // redirect text for scan nodes
//! role: question              // draft | update | question | premise | character-note <n>
//! stub: Hello!                // canned line for the template narrator
//! goto: yes -> C              // guard is yes | no | omitted (any)
//! goto: -> complete           // `complete` ends the phase
//!
//! paths:
//! 1. (A) → (C) → ##NEXT##
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{ElementKind, NarrativeStage, StoryElement};
use crate::scaffold::Condition;

/// A phase of the activity. Sessions run the eight phases of
/// [`SESSION_PHASES`]; `Practice` is a standalone warm-up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PhaseId {
    Practice,
    Opening,
    Characters,
    Stage(NarrativeStage),
    PostStory,
    Closing,
}

pub const SESSION_PHASES: [PhaseId; 8] = [
    PhaseId::Opening,
    PhaseId::Characters,
    PhaseId::Stage(NarrativeStage::Start),
    PhaseId::Stage(NarrativeStage::Journey),
    PhaseId::Stage(NarrativeStage::Climax),
    PhaseId::Stage(NarrativeStage::End),
    PhaseId::PostStory,
    PhaseId::Closing,
];

impl PhaseId {
    pub fn as_str(self) -> &'static str {
        match self {
            PhaseId::Practice => "practice",
            PhaseId::Opening => "opening",
            PhaseId::Characters => "characters",
            PhaseId::Stage(NarrativeStage::Start) => "start",
            PhaseId::Stage(NarrativeStage::Journey) => "journey",
            PhaseId::Stage(NarrativeStage::Climax) => "climax",
            PhaseId::Stage(NarrativeStage::End) => "end",
            PhaseId::PostStory => "post-story",
            PhaseId::Closing => "closing",
        }
    }

    pub fn stage(self) -> Option<NarrativeStage> {
        match self {
            PhaseId::Stage(s) => Some(s),
            _ => None,
        }
    }

    /// 1-based position in a session, `None` for practice.
    pub fn session_index(self) -> Option<usize> {
        SESSION_PHASES.iter().position(|p| *p == self).map(|i| i + 1)
    }
}

impl fmt::Display for PhaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhaseId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        std::iter::once(PhaseId::Practice)
            .chain(SESSION_PHASES)
            .find(|p| p.as_str() == s)
            .ok_or_else(|| format!("unknown phase {s:?}"))
    }
}

impl From<PhaseId> for String {
    fn from(p: PhaseId) -> String {
        p.as_str().to_string()
    }
}

impl TryFrom<String> for PhaseId {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

/// Phase completion markers the narrator emits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Marker {
    Next,
    Done,
}

impl Marker {
    pub const ALL: [Marker; 2] = [Marker::Next, Marker::Done];

    pub fn text(self) -> &'static str {
        match self {
            Marker::Next => "##NEXT##",
            Marker::Done => "##Done##",
        }
    }

    pub fn from_text(s: &str) -> Option<Marker> {
        Marker::ALL.into_iter().find(|m| m.text() == s)
    }
}

pub type NodeId = char;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expects {
    Utterance,
    Scan(ElementKind),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Guard {
    Any,
    Yes,
    No,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    Node(NodeId),
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub guard: Guard,
    pub target: Target,
}

/// What a node contributes to the story besides conversation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeRole {
    Chat,
    Premise,
    /// Child's description of the character at this 0-based index.
    CharacterNote(usize),
    Draft,
    Question,
    Update,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueNode {
    pub id: NodeId,
    pub action: String,
    pub expects: Expects,
    pub on_mismatch: Option<String>,
    pub transitions: Vec<Transition>,
    pub role: NodeRole,
    pub stub: Option<String>,
}

impl DialogueNode {
    pub fn completes_phase(&self) -> bool {
        self.transitions.iter().any(|t| t.target == Target::Complete)
    }

    /// A node that ends the phase as soon as its action has been spoken.
    pub fn is_terminal(&self) -> bool {
        self.expects == Expects::None && self.completes_phase()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeclaredPath {
    pub raw: String,
    pub nodes: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseScript {
    pub phase: PhaseId,
    pub condition: Option<Condition>,
    pub title: Option<String>,
    pub intro: String,
    pub marker: Marker,
    pub nodes: Vec<DialogueNode>,
    pub entry: NodeId,
    pub declared_paths: Vec<DeclaredPath>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScriptError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("node {node} has a transition to missing node {target}")]
    DanglingTransition { node: NodeId, target: NodeId },
    #[error("line {line}: node {id} is defined twice")]
    DuplicateNodeId { id: NodeId, line: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("the graph has a cycle through {0} and no declared path unrolls it")]
    UnboundedLoop(NodeId),
}

/// Findings from [`validate_script`]; an empty list means the script is sound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Diagnostic {
    Unreachable(NodeId),
    ScanWithoutRedirect(NodeId),
    NoCompletion,
    UnboundedLoop(NodeId),
    /// A declared path that is not a walk through the graph.
    InvalidDeclaredPath(String),
    PathMismatch {
        undeclared: Vec<Vec<NodeId>>,
        unrealized: Vec<Vec<NodeId>>,
    },
}

impl PhaseScript {
    pub fn node(&self, id: NodeId) -> Option<&DialogueNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn question_nodes(&self) -> impl Iterator<Item = &DialogueNode> {
        self.nodes.iter().filter(|n| n.role == NodeRole::Question)
    }

    /// Maximum visits of any node along a declared path (at least one).
    pub fn loop_bound(&self) -> usize {
        self.declared_paths
            .iter()
            .flat_map(|p| {
                let mut counts: BTreeMap<NodeId, usize> = BTreeMap::new();
                for n in &p.nodes {
                    *counts.entry(*n).or_default() += 1;
                }
                counts.into_values()
            })
            .max()
            .unwrap_or(1)
            .max(1)
    }

    fn successors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.node(id)
            .into_iter()
            .flat_map(|n| n.transitions.iter())
            .filter_map(|t| match t.target {
                Target::Node(n) => Some(n),
                Target::Complete => None,
            })
    }

    fn reachable(&self) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.entry];
        while let Some(id) = stack.pop() {
            if seen.insert(id) {
                stack.extend(self.successors(id));
            }
        }
        seen
    }

    fn find_cycle(&self) -> Option<NodeId> {
        fn visit(
            s: &PhaseScript,
            id: NodeId,
            on_stack: &mut Vec<NodeId>,
            done: &mut BTreeSet<NodeId>,
        ) -> Option<NodeId> {
            if on_stack.contains(&id) {
                return Some(id);
            }
            if done.contains(&id) {
                return None;
            }
            on_stack.push(id);
            for next in s.successors(id).collect::<Vec<_>>() {
                if let Some(c) = visit(s, next, on_stack, done) {
                    return Some(c);
                }
            }
            on_stack.pop();
            done.insert(id);
            None
        }
        visit(self, self.entry, &mut Vec::new(), &mut BTreeSet::new())
    }

    fn is_walk(&self, path: &[NodeId]) -> bool {
        let Some(first) = path.first() else { return false };
        if *first != self.entry {
            return false;
        }
        let steps_ok = path
            .windows(2)
            .all(|w| self.successors(w[0]).any(|n| n == w[1]));
        steps_ok
            && path
                .last()
                .and_then(|l| self.node(*l))
                .is_some_and(DialogueNode::completes_phase)
    }
}

/// Lists every path from the entry to phase completion, visiting no node more
/// often than the script's [`loop_bound`](PhaseScript::loop_bound).
pub fn enumerate_paths(script: &PhaseScript) -> Result<Vec<Vec<NodeId>>, PathError> {
    let bound = script.loop_bound();
    if bound == 1 {
        if let Some(node) = script.find_cycle() {
            return Err(PathError::UnboundedLoop(node));
        }
    }
    let mut out = BTreeSet::new();
    let mut path = vec![script.entry];
    let mut counts = BTreeMap::from([(script.entry, 1usize)]);
    walk(script, bound, &mut path, &mut counts, &mut out);
    Ok(out.into_iter().collect())
}

fn walk(
    script: &PhaseScript,
    bound: usize,
    path: &mut Vec<NodeId>,
    counts: &mut BTreeMap<NodeId, usize>,
    out: &mut BTreeSet<Vec<NodeId>>,
) {
    let Some(node) = path.last().and_then(|id| script.node(*id)) else {
        return;
    };
    for t in &node.transitions {
        match t.target {
            Target::Complete => {
                out.insert(path.clone());
            }
            Target::Node(next) => {
                let c = counts.entry(next).or_default();
                if *c >= bound {
                    continue;
                }
                *c += 1;
                path.push(next);
                walk(script, bound, path, counts, out);
                path.pop();
                *counts.get_mut(&next).expect("counted above") -= 1;
            }
        }
    }
}

pub fn validate_script(script: &PhaseScript) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let reachable = script.reachable();
    for n in &script.nodes {
        if !reachable.contains(&n.id) {
            diags.push(Diagnostic::Unreachable(n.id));
        }
        if matches!(n.expects, Expects::Scan(_)) && n.on_mismatch.as_deref().map_or(true, str::is_empty) {
            diags.push(Diagnostic::ScanWithoutRedirect(n.id));
        }
    }
    for p in &script.declared_paths {
        if !script.is_walk(&p.nodes) {
            diags.push(Diagnostic::InvalidDeclaredPath(p.raw.clone()));
        }
    }
    match enumerate_paths(script) {
        Err(PathError::UnboundedLoop(n)) => diags.push(Diagnostic::UnboundedLoop(n)),
        Ok(paths) => {
            if paths.is_empty() {
                diags.push(Diagnostic::NoCompletion);
            }
            let enumerated: BTreeSet<_> = paths.into_iter().collect();
            let declared: BTreeSet<_> = script.declared_paths.iter().map(|p| p.nodes.clone()).collect();
            if enumerated != declared {
                diags.push(Diagnostic::PathMismatch {
                    undeclared: enumerated.difference(&declared).cloned().collect(),
                    unrealized: declared.difference(&enumerated).cloned().collect(),
                });
            }
        }
    }
    diags
}

// ---------------------------------------------------------------------------
// Parsing

fn syntax(line: usize, message: impl Into<String>) -> ScriptError {
    ScriptError::Syntax {
        line,
        message: message.into(),
    }
}

fn parse_node_id(s: &str, line: usize) -> Result<NodeId, ScriptError> {
    let mut chars = s.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_uppercase() => Ok(c),
        _ => Err(syntax(line, format!("node ids are single capital letters, got {s:?}"))),
    }
}

fn parse_expects(s: &str, line: usize) -> Result<Expects, ScriptError> {
    match s {
        "utterance" => Ok(Expects::Utterance),
        "none" => Ok(Expects::None),
        _ => {
            let kind = s
                .strip_prefix("scan:")
                .and_then(|k| k.trim().parse::<ElementKind>().ok())
                .ok_or_else(|| syntax(line, format!("bad expects value {s:?}")))?;
            Ok(Expects::Scan(kind))
        }
    }
}

fn parse_role(s: &str, line: usize) -> Result<NodeRole, ScriptError> {
    let mut words = s.split_whitespace();
    let role = match (words.next(), words.next()) {
        (Some("chat"), None) => NodeRole::Chat,
        (Some("premise"), None) => NodeRole::Premise,
        (Some("draft"), None) => NodeRole::Draft,
        (Some("question"), None) => NodeRole::Question,
        (Some("update"), None) => NodeRole::Update,
        (Some("character-note"), Some(n)) => match n.parse::<usize>() {
            Ok(i @ 1..=3) => NodeRole::CharacterNote(i - 1),
            _ => return Err(syntax(line, format!("character-note index must be 1-3, got {n:?}"))),
        },
        _ => return Err(syntax(line, format!("unknown role {s:?}"))),
    };
    if words.next().is_some() {
        return Err(syntax(line, format!("unknown role {s:?}")));
    }
    Ok(role)
}

fn parse_goto(s: &str, line: usize) -> Result<Transition, ScriptError> {
    let (guard, target) = s
        .split_once("->")
        .ok_or_else(|| syntax(line, "goto needs `->`"))?;
    let guard = match guard.trim() {
        "" => Guard::Any,
        "yes" => Guard::Yes,
        "no" => Guard::No,
        g => return Err(syntax(line, format!("unknown guard {g:?}"))),
    };
    let target = match target.trim() {
        "complete" => Target::Complete,
        t => Target::Node(parse_node_id(t, line)?),
    };
    Ok(Transition { guard, target })
}

fn parse_path(s: &str, marker: Marker, line: usize) -> Result<DeclaredPath, ScriptError> {
    let body = s
        .split_once(". ")
        .filter(|(n, _)| n.chars().all(|c| c.is_ascii_digit()))
        .map_or(s, |(_, rest)| rest);
    let parts: Vec<&str> = body
        .split(['→'])
        .flat_map(|p| p.split("->"))
        .map(str::trim)
        .collect();
    let (last, nodes) = parts.split_last().ok_or_else(|| syntax(line, "empty path"))?;
    if *last != marker.text() {
        return Err(syntax(line, format!("path must end with {}", marker.text())));
    }
    let nodes = nodes
        .iter()
        .map(|p| {
            p.strip_prefix('(')
                .and_then(|p| p.strip_suffix(')'))
                .ok_or_else(|| syntax(line, format!("bad path step {p:?}")))
                .and_then(|id| parse_node_id(id, line))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if nodes.is_empty() {
        return Err(syntax(line, "path has no nodes"));
    }
    Ok(DeclaredPath {
        raw: s.to_string(),
        nodes,
    })
}

#[derive(Default)]
struct NodeBuilder {
    id: NodeId,
    line: usize,
    action: Vec<String>,
    expects: Option<Expects>,
    on_mismatch: Option<String>,
    transitions: Vec<Transition>,
    role: Option<NodeRole>,
    stub: Option<String>,
}

impl NodeBuilder {
    fn finish(self) -> Result<DialogueNode, ScriptError> {
        let expects = self
            .expects
            .ok_or_else(|| syntax(self.line, format!("node {} has no `expects:`", self.id)))?;
        if self.transitions.is_empty() {
            return Err(syntax(self.line, format!("node {} has no `goto:`", self.id)));
        }
        Ok(DialogueNode {
            id: self.id,
            action: self.action.join(" "),
            expects,
            on_mismatch: self.on_mismatch,
            transitions: self.transitions,
            role: self.role.unwrap_or(NodeRole::Chat),
            stub: self.stub,
        })
    }
}

pub fn parse_script(src: &str) -> Result<PhaseScript, ScriptError> {
    let mut phase = None;
    let mut condition = None;
    let mut marker = None;
    let mut title = None;
    let mut intro: Vec<String> = Vec::new();
    let mut entry = None;
    let mut nodes: Vec<DialogueNode> = Vec::new();
    let mut node_lines: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut current: Option<NodeBuilder> = None;
    let mut path_lines: Vec<(usize, String)> = Vec::new();
    let mut in_paths = false;

    for (i, raw) in src.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        if in_paths {
            path_lines.push((line_no, line.to_string()));
            continue;
        }
        let (key, rest) = match line.split_once(':') {
            Some((k, r)) if !k.contains(' ') => (k, Some(r.trim())),
            _ => (line, None),
        };
        if let Some(value) = rest {
            match key {
                "paths" => {
                    if !value.is_empty() {
                        return Err(syntax(line_no, "paths go on the lines after `paths:`"));
                    }
                    if let Some(b) = current.take() {
                        nodes.push(b.finish()?);
                    }
                    in_paths = true;
                }
                "intro" if current.is_none() => intro.push(value.to_string()),
                "say" | "expects" | "mismatch" | "role" | "stub" | "goto" => {
                    let b = current
                        .as_mut()
                        .ok_or_else(|| syntax(line_no, format!("`{key}:` outside a node block")))?;
                    match key {
                        "say" => b.action.push(value.to_string()),
                        "expects" => b.expects = Some(parse_expects(value, line_no)?),
                        "mismatch" => b.on_mismatch = Some(value.to_string()),
                        "role" => b.role = Some(parse_role(value, line_no)?),
                        "stub" => b.stub = Some(value.to_string()),
                        _ => b.transitions.push(parse_goto(value, line_no)?),
                    }
                }
                _ => return Err(syntax(line_no, format!("unknown key {key:?}"))),
            }
            continue;
        }
        let (word, arg) = line.split_once(' ').map_or((line, ""), |(w, a)| (w, a.trim()));
        if current.is_some() && word != "node" {
            return Err(syntax(line_no, format!("header line {word:?} inside a node block")));
        }
        match word {
            "phase" => phase = Some(arg.parse::<PhaseId>().map_err(|e| syntax(line_no, e))?),
            "condition" => {
                condition = Some(
                    arg.parse::<Condition>()
                        .map_err(|_| syntax(line_no, format!("unknown condition {arg:?}")))?,
                )
            }
            "marker" => {
                marker = Some(
                    Marker::from_text(arg)
                        .ok_or_else(|| syntax(line_no, format!("unknown marker {arg:?}")))?,
                )
            }
            "title" => title = Some(arg.to_string()),
            "entry" => entry = Some(parse_node_id(arg, line_no)?),
            "node" => {
                let id = parse_node_id(arg, line_no)?;
                if let Some(b) = current.take() {
                    nodes.push(b.finish()?);
                }
                if node_lines.insert(id, line_no).is_some() {
                    return Err(ScriptError::DuplicateNodeId { id, line: line_no });
                }
                current = Some(NodeBuilder {
                    id,
                    line: line_no,
                    ..NodeBuilder::default()
                });
            }
            _ => return Err(syntax(line_no, format!("unexpected line {line:?}"))),
        }
    }
    if let Some(b) = current.take() {
        nodes.push(b.finish()?);
    }

    let phase = phase.ok_or_else(|| syntax(1, "missing `phase` header"))?;
    let marker = marker.ok_or_else(|| syntax(1, "missing `marker` header"))?;
    let first = nodes.first().ok_or_else(|| syntax(1, "script has no nodes"))?.id;
    let entry = entry.unwrap_or(first);
    if !node_lines.contains_key(&entry) {
        return Err(syntax(1, format!("entry node {entry} does not exist")));
    }
    for n in &nodes {
        for t in &n.transitions {
            if let Target::Node(target) = t.target {
                if !node_lines.contains_key(&target) {
                    return Err(ScriptError::DanglingTransition { node: n.id, target });
                }
            }
        }
    }
    let declared_paths = path_lines
        .iter()
        .map(|(l, p)| parse_path(p, marker, *l))
        .collect::<Result<Vec<_>, _>>()?;

    Ok(PhaseScript {
        phase,
        condition,
        title,
        intro: intro.join(" "),
        marker,
        nodes,
        entry,
        declared_paths,
    })
}

// ---------------------------------------------------------------------------
// Cursor

const DECLINE_OPENERS: &[&[&str]] = &[
    &["no"],
    &["nope"],
    &["nah"],
    &["not"],
    &["nothing"],
    &["same"],
    &["i", "dont"],
    &["i", "do", "not"],
    &["im", "good"],
    &["i", "am", "good"],
    &["im", "done"],
    &["the", "story", "is", "perfect"],
];

/// Whether a reply reads as "no" / "nothing to add".
pub fn is_decline(text: &str) -> bool {
    let words: Vec<String> = text
        .split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect();
    !words.is_empty()
        && DECLINE_OPENERS
            .iter()
            .any(|opener| words.len() >= opener.len() && words.iter().zip(opener.iter()).all(|(w, o)| w == o))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GraphInput<'a> {
    Utterance(&'a str),
    Scan(&'a StoryElement),
    /// The narrator finished speaking a node that expects no input.
    Continue,
    Marker(Marker),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Step {
    Moved(NodeId),
    /// The chosen transition ends the phase; the narrator must now emit the marker.
    AwaitingMarker,
    Completed,
    /// Wrong input at a scan node; carries the node's redirect text.
    Redirect(String),
    /// No transition matched the reply; the node is asked again.
    Stayed,
    /// A scan arrived at a node that does not take scans.
    ScanIgnored,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("completion marker emitted at node {0} before the phase's required steps")]
    MarkerBeforeCompletion(NodeId),
    #[error("the phase is already complete")]
    InputAfterComplete,
    #[error("expected marker {expected:?}, got {got:?}")]
    WrongMarker { expected: Marker, got: Marker },
    #[error("node {node} does not accept {input}")]
    UnexpectedInput { node: NodeId, input: &'static str },
    #[error("node {0} is not part of the script")]
    UnknownNode(NodeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphCursor {
    pub phase: PhaseId,
    pub current: NodeId,
    pub visited: Vec<NodeId>,
    pub awaiting_marker: bool,
    pub complete: bool,
}

impl GraphCursor {
    pub fn new(script: &PhaseScript) -> Self {
        GraphCursor {
            phase: script.phase,
            current: script.entry,
            visited: vec![script.entry],
            awaiting_marker: false,
            complete: false,
        }
    }

    fn visits(&self, id: NodeId) -> usize {
        self.visited.iter().filter(|v| **v == id).count()
    }

    /// Whether a marker would be accepted right now.
    pub fn marker_due(&self, script: &PhaseScript) -> bool {
        !self.complete
            && (self.awaiting_marker || script.node(self.current).is_some_and(DialogueNode::is_terminal))
    }

    fn take(&self, target: Target) -> (GraphCursor, Step) {
        let mut next = self.clone();
        match target {
            Target::Node(id) => {
                next.current = id;
                next.visited.push(id);
                (next, Step::Moved(id))
            }
            Target::Complete => {
                next.awaiting_marker = true;
                (next, Step::AwaitingMarker)
            }
        }
    }

    fn select(&self, script: &PhaseScript, node: &DialogueNode, decline: Option<bool>) -> Option<Target> {
        let bound = script.loop_bound();
        let open = |t: &Transition| match t.target {
            Target::Node(id) => self.visits(id) < bound,
            Target::Complete => true,
        };
        let matches = |t: &Transition| match (t.guard, decline) {
            (Guard::Any, _) => true,
            (Guard::Yes, Some(d)) => !d,
            (Guard::No, Some(d)) => d,
            (_, None) => false,
        };
        let candidates: Vec<&Transition> = node.transitions.iter().filter(|t| matches(t)).collect();
        if candidates.is_empty() {
            return None;
        }
        // A matching edge whose loop budget is spent falls through to the
        // first edge that is still open.
        candidates
            .iter()
            .copied()
            .find(|t| open(t))
            .or_else(|| node.transitions.iter().find(|t| open(t)))
            .map(|t| t.target)
    }

    pub fn advance(&self, script: &PhaseScript, input: GraphInput<'_>) -> Result<(GraphCursor, Step), GraphError> {
        if self.complete {
            return Err(GraphError::InputAfterComplete);
        }
        let node = script.node(self.current).ok_or(GraphError::UnknownNode(self.current))?;
        if let GraphInput::Marker(m) = input {
            if !self.marker_due(script) {
                return Err(GraphError::MarkerBeforeCompletion(self.current));
            }
            if m != script.marker {
                return Err(GraphError::WrongMarker {
                    expected: script.marker,
                    got: m,
                });
            }
            let mut next = self.clone();
            next.awaiting_marker = false;
            next.complete = true;
            return Ok((next, Step::Completed));
        }
        if self.awaiting_marker {
            return Err(GraphError::UnexpectedInput {
                node: self.current,
                input: "input while the phase awaits its marker",
            });
        }
        let redirect = || Step::Redirect(node.on_mismatch.clone().unwrap_or_default());
        match (node.expects, input) {
            (Expects::Utterance, GraphInput::Utterance(text)) => {
                match self.select(script, node, Some(is_decline(text))) {
                    Some(target) => Ok(self.take(target)),
                    None => Ok((self.clone(), Step::Stayed)),
                }
            }
            (Expects::Scan(kind), GraphInput::Scan(el)) => {
                if el.kind() != kind {
                    return Ok((self.clone(), redirect()));
                }
                match self.select(script, node, Some(false)) {
                    Some(target) => Ok(self.take(target)),
                    None => Ok((self.clone(), Step::Stayed)),
                }
            }
            (Expects::Scan(_), GraphInput::Utterance(_)) => Ok((self.clone(), redirect())),
            (Expects::Utterance | Expects::None, GraphInput::Scan(_)) => Ok((self.clone(), Step::ScanIgnored)),
            (Expects::None, GraphInput::Continue) => match self.select(script, node, None) {
                Some(target) => Ok(self.take(target)),
                None => Err(GraphError::UnexpectedInput {
                    node: self.current,
                    input: "continue without an unguarded transition",
                }),
            },
            (Expects::None, GraphInput::Utterance(_)) => Err(GraphError::UnexpectedInput {
                node: self.current,
                input: "an utterance",
            }),
            (_, GraphInput::Continue) => Err(GraphError::UnexpectedInput {
                node: self.current,
                input: "continue",
            }),
            (_, GraphInput::Marker(_)) => unreachable!("handled above"),
        }
    }
}
