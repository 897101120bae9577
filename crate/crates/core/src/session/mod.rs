//! The interaction loop: event ingestion, turn assembly, speak-lock, phase
//! sequencing and the per-stage story loop.
//!
//! A [`Session`] is a pure function of its inputs (config, events, finalize
//! calls and narrator replies), all of which it writes to its [`SessionLog`];
//! [`Session::replay`] rebuilds an identical session from a log.

use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{DomainError, DuplicatePolicy, ElementKind, NarrativeStage, StoryDocument, StoryElement};
use crate::graph::{GraphCursor, GraphError, NodeId, PhaseId, SESSION_PHASES};
use crate::log::{LogError, Record, SessionLog};
use crate::narrator::{Narrator, NarratorError, RawReply, ReplayNarrator};
use crate::scaffold::{Condition, ScaffoldType, ScheduleBook};
use crate::scripts::ScriptSet;

mod classify;
pub mod driver;
mod engine;

pub use classify::{classify, ReplyClass};

pub const PAUSE_MS: u64 = 4_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SessionKind {
    /// The eight-phase storytelling session.
    #[default]
    Play,
    /// The standalone warm-up script.
    Practice,
}

impl SessionKind {
    pub fn phases(self) -> Vec<PhaseId> {
        match self {
            SessionKind::Play => SESSION_PHASES.to_vec(),
            SessionKind::Practice => vec![PhaseId::Practice],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session_id: String,
    pub profile_id: String,
    pub condition: Condition,
    #[serde(default)]
    pub kind: SessionKind,
    pub started_at: u64,
    pub pause_ms: u64,
    pub max_duration_ms: u64,
    pub idle_timeout_ms: u64,
    pub duplicate_policy: DuplicatePolicy,
    pub max_reprompts: u32,
    /// Number of most recent turns handed to the narrator.
    pub transcript_window: usize,
}

impl SessionConfig {
    pub fn new(session_id: &str, profile_id: &str, condition: Condition, started_at: u64) -> Self {
        SessionConfig {
            session_id: session_id.to_string(),
            profile_id: profile_id.to_string(),
            condition,
            kind: SessionKind::Play,
            started_at,
            pause_ms: PAUSE_MS,
            max_duration_ms: 60 * 60_000,
            idle_timeout_ms: 5 * 60_000,
            duplicate_policy: DuplicatePolicy::Reject,
            max_reprompts: 2,
            transcript_window: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventPayload {
    /// A piece of recognized child speech.
    Utterance { text: String },
    /// Raw text read from a toy's tag.
    Scan { payload: String },
    /// The client observed the end of the child's speech.
    EndOfSpeech,
    /// The agent finished speaking; input is accepted again.
    AgentSpeechEnded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub at: u64,
    #[serde(flatten)]
    pub payload: EventPayload,
}

impl SessionEvent {
    pub fn utterance(at: u64, text: &str) -> Self {
        SessionEvent {
            at,
            payload: EventPayload::Utterance { text: text.to_string() },
        }
    }

    pub fn scan(at: u64, payload: &str) -> Self {
        SessionEvent {
            at,
            payload: EventPayload::Scan {
                payload: payload.to_string(),
            },
        }
    }

    pub fn end_of_speech(at: u64) -> Self {
        SessionEvent {
            at,
            payload: EventPayload::EndOfSpeech,
        }
    }

    pub fn speech_ended(at: u64) -> Self {
        SessionEvent {
            at,
            payload: EventPayload::AgentSpeechEnded,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Child,
    Agent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnKind {
    #[default]
    Speech,
    Scan,
}

/// Why an agent turn departs from the script's next step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Repair {
    /// Wrong token kind, or speech where a scan was expected.
    Redirect,
    MalformedScan,
    DuplicateCharacter,
    /// A stage token was swapped before the draft.
    Rebind,
    ScanIgnored,
    Clarification,
    FollowUp,
    OffScript,
    Amendment,
    /// The reply did not match any branch; the step is asked again.
    Reask,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub speaker: Speaker,
    pub text: String,
    pub at: u64,
    pub phase: PhaseId,
    pub node: NodeId,
    #[serde(default)]
    pub kind: TurnKind,
    /// Agent: the framing of a question asked for the first time.
    /// Child: the framing of the question being answered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaffold: Option<ScaffoldType>,
    #[serde(default)]
    pub off_script: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repair: Option<Repair>,
}

impl Turn {
    pub fn word_count(&self) -> usize {
        self.text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Contribution {
    pub node: NodeId,
    pub scaffold: Option<ScaffoldType>,
    pub text: String,
}

/// Tokens and answers gathered in the current phase.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageProgress {
    pub place: Option<StoryElement>,
    pub item: Option<StoryElement>,
    pub emotion: Option<StoryElement>,
    pub contributions: Vec<Contribution>,
}

impl StageProgress {
    pub fn binding(&self, kind: ElementKind) -> Option<&StoryElement> {
        match kind {
            ElementKind::Place => self.place.as_ref(),
            ElementKind::Item => self.item.as_ref(),
            ElementKind::Emotion => self.emotion.as_ref(),
            ElementKind::Character => None,
        }
    }

    fn bind(&mut self, element: StoryElement) {
        match element.kind() {
            ElementKind::Place => self.place = Some(element),
            ElementKind::Item => self.item = Some(element),
            ElementKind::Emotion => self.emotion = Some(element),
            ElementKind::Character => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub at: u64,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Active,
    /// Every phase is complete; the story can be saved.
    Finished,
    Closed,
    Abandoned,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionState {
    pub session_id: String,
    pub profile_id: String,
    pub condition: Condition,
    pub kind: SessionKind,
    pub status: SessionStatus,
    pub phases: Vec<PhaseId>,
    pub phase_index: usize,
    pub cursor: GraphCursor,
    pub story: StoryDocument,
    pub transcript: Vec<Turn>,
    pub speak_lock: bool,
    pub pending: Vec<Fragment>,
    pub stage: StageProgress,
    /// Character pawns scanned before all three are bound.
    pub chosen: Vec<StoryElement>,
    /// Start of a reply the child has not finished.
    pub partial: Option<String>,
    pub scanned: Option<StoryElement>,
    /// The current step's question, for re-asks.
    pub prompt: Option<String>,
    pub suppressed: u64,
    pub reprompts: u64,
    pub last_event_at: u64,
    pub last_activity_at: u64,
    pub started_at: u64,
}

impl SessionState {
    pub fn phase(&self) -> PhaseId {
        self.phases[self.phase_index.min(self.phases.len() - 1)]
    }

    /// One-based phase number.
    pub fn phase_number(&self) -> usize {
        self.phase_index + 1
    }

    pub fn last_agent_turn(&self) -> Option<&Turn> {
        self.transcript.iter().rev().find(|t| t.speaker == Speaker::Agent)
    }

    pub fn is_active(&self) -> bool {
        self.status == SessionStatus::Active
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryStage {
    pub stage: NarrativeStage,
    pub text: String,
    pub place: StoryElement,
    pub item: StoryElement,
    pub emotion: StoryElement,
    pub updated: bool,
}

/// A completed story as kept in the library.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoryRecord {
    pub story_id: String,
    pub session_id: String,
    pub profile_id: String,
    pub condition: Condition,
    pub created_at: u64,
    pub characters: Vec<StoryElement>,
    pub stages: Vec<StoryStage>,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("script set is missing phases {missing:?}")]
    ScriptSetIncomplete { missing: Vec<PhaseId> },
    #[error("phase {phase} has {questions} question steps but its schedule lists {scheduled}")]
    ScheduleMismatch {
        phase: PhaseId,
        questions: usize,
        scheduled: usize,
    },
    #[error(transparent)]
    Narrator(#[from] NarratorError),
    #[error("session is {0:?}")]
    SessionClosed(SessionStatus),
    #[error("event at {at} ms precedes the previous input at {last} ms")]
    OutOfOrderEvent { at: u64, last: u64 },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("the draft needs a {0} token that was never scanned")]
    MissingToken(ElementKind),
    #[error("session is still in phase {phase_number}")]
    IncompleteSession { phase_number: usize },
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log does not start with a session-started record")]
    MissingStart,
    #[error("replay failed at record {seq}: {source}")]
    Session { seq: u64, source: SessionError },
    #[error("replayed log diverges at record {seq}")]
    Diverged { seq: u64 },
    #[error("replayed log has {replayed} records, original has {original}")]
    LengthMismatch { replayed: usize, original: usize },
}

/// Scripts and schedules shared by sessions.
#[derive(Clone)]
pub struct Resources {
    pub scripts: Arc<ScriptSet>,
    pub schedules: Arc<ScheduleBook>,
}

impl Resources {
    pub fn new(scripts: ScriptSet, schedules: ScheduleBook) -> Self {
        Resources {
            scripts: Arc::new(scripts),
            schedules: Arc::new(schedules),
        }
    }

    pub fn bundled() -> Resources {
        static RES: OnceLock<Resources> = OnceLock::new();
        RES.get_or_init(|| Resources::new(ScriptSet::bundled().clone(), ScheduleBook::bundled().clone()))
            .clone()
    }
}

pub struct Session {
    config: SessionConfig,
    resources: Resources,
    narrator: Arc<dyn Narrator>,
    state: SessionState,
    log: SessionLog,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("config", &self.config)
            .field("narrator", &self.narrator.name())
            .field("state", &self.state)
            .finish()
    }
}

impl Session {
    /// Opens a session and speaks the first phase's opening line.
    pub fn start(
        config: SessionConfig,
        resources: Resources,
        narrator: Arc<dyn Narrator>,
    ) -> Result<(Session, Vec<Record>), SessionError> {
        let phases = config.kind.phases();
        let missing: Vec<PhaseId> = phases
            .iter()
            .copied()
            .filter(|p| resources.scripts.get(*p, config.condition).is_none())
            .collect();
        if !missing.is_empty() {
            return Err(SessionError::ScriptSetIncomplete { missing });
        }
        for phase in &phases {
            let script = resources.scripts.get(*phase, config.condition).expect("checked above");
            if let Some(slot) = crate::scaffold::ScheduleSlot::for_phase(*phase) {
                let questions = script.question_nodes().count();
                let scheduled = resources.schedules.scaffolds(config.condition, slot).len();
                if questions != scheduled {
                    return Err(SessionError::ScheduleMismatch {
                        phase: *phase,
                        questions,
                        scheduled,
                    });
                }
            }
        }
        let first = resources.scripts.get(phases[0], config.condition).expect("checked above");
        let state = SessionState {
            session_id: config.session_id.clone(),
            profile_id: config.profile_id.clone(),
            condition: config.condition,
            kind: config.kind,
            status: SessionStatus::Active,
            phases,
            phase_index: 0,
            cursor: GraphCursor::new(first),
            story: StoryDocument::new(),
            transcript: Vec::new(),
            speak_lock: false,
            pending: Vec::new(),
            stage: StageProgress::default(),
            chosen: Vec::new(),
            partial: None,
            scanned: None,
            prompt: None,
            suppressed: 0,
            reprompts: 0,
            last_event_at: config.started_at,
            last_activity_at: config.started_at,
            started_at: config.started_at,
        };
        let log = SessionLog::new(&config.session_id, &config.profile_id, config.condition);
        let mut session = Session {
            config,
            resources,
            narrator,
            state,
            log,
        };
        let at = session.config.started_at;
        let records = session.transact(at, |e| {
            e.record(Record::SessionStarted {
                config: e.config.clone(),
            });
            e.enter_phase()
        })?;
        Ok((session, records))
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn resources(&self) -> &Resources {
        &self.resources
    }

    pub fn narrator(&self) -> &Arc<dyn Narrator> {
        &self.narrator
    }

    /// Applies one input event. Returns the records it produced, excluding
    /// the logged inputs themselves.
    pub fn ingest(&mut self, event: SessionEvent) -> Result<Vec<Record>, SessionError> {
        let at = event.at;
        if at < self.state.last_event_at {
            return Err(SessionError::OutOfOrderEvent {
                at,
                last: self.state.last_event_at,
            });
        }
        match self.state.status {
            SessionStatus::Active => {}
            SessionStatus::Finished if event.payload == EventPayload::AgentSpeechEnded => {}
            s => return Err(SessionError::SessionClosed(s)),
        }
        self.transact(at, |e| e.ingest(event))
    }

    /// Closes the pending child turn if the pause since its last fragment is
    /// long enough. Does nothing (and logs nothing) otherwise.
    pub fn finalize(&mut self, now: u64) -> Result<Vec<Record>, SessionError> {
        if self.state.status != SessionStatus::Active {
            return Ok(Vec::new());
        }
        if now < self.state.last_event_at {
            return Err(SessionError::OutOfOrderEvent {
                at: now,
                last: self.state.last_event_at,
            });
        }
        let due = self
            .state
            .pending
            .last()
            .is_some_and(|f| now.saturating_sub(f.at) >= self.config.pause_ms);
        if !due && !engine::timed_out(&self.config, &self.state, now) {
            return Ok(Vec::new());
        }
        self.transact(now, |e| e.finalize(now))
    }

    /// Saves the story of a finished session and closes it.
    pub fn complete(&mut self, at: u64) -> Result<Option<StoryRecord>, SessionError> {
        if self.state.status != SessionStatus::Finished {
            return Err(SessionError::IncompleteSession {
                phase_number: self.state.phase_number(),
            });
        }
        let at = at.max(self.state.last_event_at);
        let records = self.transact(at, |e| e.complete())?;
        Ok(records.into_iter().find_map(|r| match r {
            Record::SessionClosed { story } => story,
            _ => None,
        }))
    }

    /// Rebuilds a session by re-running a log's inputs against recorded
    /// narrator replies.
    pub fn replay(log: &SessionLog, resources: Resources) -> Result<Session, ReplayError> {
        let mut entries = log.entries().iter();
        let config = match entries.next().map(|e| &e.record) {
            Some(Record::SessionStarted { config }) => config.clone(),
            _ => return Err(ReplayError::MissingStart),
        };
        let replies: Vec<RawReply> = log
            .records()
            .filter_map(|r| match r {
                Record::NarratorReply { reply, .. } => Some(reply.clone()),
                _ => None,
            })
            .collect();
        let narrator: Arc<dyn Narrator> = Arc::new(ReplayNarrator::new(replies));
        let (mut session, _) =
            Session::start(config, resources, narrator).map_err(|source| ReplayError::Session { seq: 0, source })?;
        for entry in entries {
            let result = match &entry.record {
                Record::Event { event } => session.ingest(event.clone()).map(drop),
                Record::Finalize { now } => session.finalize(*now).map(drop),
                Record::SessionClosed { .. } => session.complete(entry.at).map(drop),
                _ => Ok(()),
            };
            result.map_err(|source| ReplayError::Session { seq: entry.seq, source })?;
        }
        Ok(session)
    }

    /// Replays a log and checks that every record comes out identical.
    pub fn verify_replay(log: &SessionLog, resources: Resources) -> Result<Session, ReplayError> {
        let session = Session::replay(log, resources)?;
        let (a, b) = (log.entries(), session.log().entries());
        if let Some(seq) = a.iter().zip(b).find(|(x, y)| x != y).map(|(x, _)| x.seq) {
            return Err(ReplayError::Diverged { seq });
        }
        if a.len() != b.len() {
            return Err(ReplayError::LengthMismatch {
                replayed: b.len(),
                original: a.len(),
            });
        }
        Ok(session)
    }

    /// Runs `f` on a scratch copy; state and log change only if it succeeds.
    fn transact(
        &mut self,
        at: u64,
        f: impl FnOnce(&mut engine::Engine<'_>) -> Result<(), SessionError>,
    ) -> Result<Vec<Record>, SessionError> {
        if let Some(last) = self.log.last_at() {
            if at < last {
                return Err(LogError::OutOfOrderRecord { at, last }.into());
            }
        }
        let mut state = self.state.clone();
        let mut records = Vec::new();
        {
            let mut engine = engine::Engine {
                config: &self.config,
                resources: &self.resources,
                narrator: self.narrator.as_ref(),
                state: &mut state,
                out: &mut records,
                now: at,
            };
            f(&mut engine)?;
        }
        if state.story != self.state.story {
            records.push(Record::StorySnapshot {
                story: state.story.clone(),
            });
        }
        let mut derived = Vec::new();
        for record in records {
            if !record.is_input() {
                derived.push(record.clone());
            }
            self.log.append(at, record).expect("ordering checked above");
        }
        self.state = state;
        Ok(derived)
    }
}
