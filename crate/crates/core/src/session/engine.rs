//! The session transition function. Runs on a scratch copy of the state;
//! [`super::Session`] commits the result only when every step succeeds.

use crate::domain::{Amendment, ElementKind, StoryElement};
use crate::graph::{DialogueNode, Expects, GraphError, GraphInput, NodeRole, PhaseId, PhaseScript, Step};
use crate::log::Record;
use crate::narrator::{self, AgentOutput, Narrator, NarratorContext, NarratorError, Request, Retry};
use crate::scaffold::{ScaffoldQuestionSpec, ScaffoldType, ScheduleSlot};
use crate::scripts::PREAMBLE;
use crate::token::{parse_token, REDIRECT_TEXT};

use super::classify::{classify, ReplyClass};
use super::{
    EventPayload, Fragment, Repair, Resources, SessionConfig, SessionError, SessionEvent, SessionKind, SessionState,
    SessionStatus, Speaker, StoryRecord, StoryStage, Turn, TurnKind,
};

pub const DUPLICATE_TEXT: &str = "That character is already in our story. Please scan a different character pawn.";
pub const SCAN_IGNORED_TEXT: &str = "We don't need a token right now.";

pub(super) fn timed_out(config: &SessionConfig, state: &SessionState, now: u64) -> bool {
    now.saturating_sub(state.started_at) > config.max_duration_ms
        || now.saturating_sub(state.last_activity_at) > config.idle_timeout_ms
}

pub(super) struct Engine<'a> {
    pub config: &'a SessionConfig,
    pub resources: &'a Resources,
    pub narrator: &'a dyn Narrator,
    pub state: &'a mut SessionState,
    pub out: &'a mut Vec<Record>,
    pub now: u64,
}

impl<'a> Engine<'a> {
    pub fn record(&mut self, record: Record) {
        self.out.push(record);
    }

    fn script(&self) -> &'a PhaseScript {
        let resources: &'a Resources = self.resources;
        resources
            .scripts
            .get(self.state.phase(), self.config.condition)
            .expect("phase scripts are checked at start")
    }

    fn node(&self) -> Result<&'a DialogueNode, SessionError> {
        let id = self.state.cursor.current;
        self.script().node(id).ok_or(SessionError::Graph(GraphError::UnknownNode(id)))
    }

    fn touch(&mut self) {
        self.state.last_activity_at = self.now;
    }

    fn check_timeout(&mut self) -> bool {
        if !timed_out(self.config, self.state, self.now) {
            return false;
        }
        let reason = if self.now.saturating_sub(self.state.started_at) > self.config.max_duration_ms {
            "maximum session duration reached"
        } else {
            "idle timeout"
        };
        self.state.status = SessionStatus::Abandoned;
        self.state.pending.clear();
        self.record(Record::SessionAbandoned { reason: reason.into() });
        true
    }

    // -- inputs ------------------------------------------------------------

    pub fn ingest(&mut self, event: SessionEvent) -> Result<(), SessionError> {
        self.record(Record::Event { event: event.clone() });
        self.state.last_event_at = event.at;
        if self.check_timeout() {
            return Ok(());
        }
        match event.payload {
            EventPayload::AgentSpeechEnded => {
                self.state.speak_lock = false;
                self.touch();
            }
            EventPayload::Utterance { text } => {
                let due = self
                    .state
                    .pending
                    .last()
                    .is_some_and(|f| event.at.saturating_sub(f.at) >= self.config.pause_ms);
                if due && !self.state.speak_lock {
                    self.finalize_pending()?;
                }
                if self.state.speak_lock {
                    self.suppress(text);
                } else {
                    self.state.pending.push(Fragment { at: event.at, text });
                    self.touch();
                }
            }
            EventPayload::Scan { payload } => {
                if self.state.speak_lock {
                    self.suppress(payload);
                } else {
                    self.flush_pending();
                    self.touch();
                    self.handle_scan(&payload)?;
                }
            }
            EventPayload::EndOfSpeech => {
                if !self.state.pending.is_empty() && !self.state.speak_lock {
                    self.finalize_pending()?;
                }
            }
        }
        Ok(())
    }

    pub fn finalize(&mut self, now: u64) -> Result<(), SessionError> {
        self.record(Record::Finalize { now });
        self.state.last_event_at = now;
        if self.check_timeout() {
            return Ok(());
        }
        let due = self
            .state
            .pending
            .last()
            .is_some_and(|f| now.saturating_sub(f.at) >= self.config.pause_ms);
        if due && !self.state.speak_lock {
            self.finalize_pending()?;
        }
        Ok(())
    }

    fn suppress(&mut self, input: String) {
        self.state.suppressed += 1;
        self.record(Record::Suppressed { input });
    }

    fn take_pending(&mut self) -> Option<(u64, String)> {
        let first = self.state.pending.first()?.at;
        let text = self
            .state
            .pending
            .drain(..)
            .map(|f| f.text)
            .collect::<Vec<_>>()
            .join(" ");
        Some((first, text))
    }

    /// Closes the open child turn and lets the agent respond.
    fn finalize_pending(&mut self) -> Result<(), SessionError> {
        let Some((at, text)) = self.take_pending() else {
            return Ok(());
        };
        let node = self.node()?;
        let scaffold = if node.role == NodeRole::Question {
            self.question_spec(node.id).map(|s| s.scaffold)
        } else {
            None
        };
        self.push_turn(Turn {
            at,
            scaffold,
            ..self.turn_template(Speaker::Child, text.clone())
        });
        self.route_utterance(&text)
    }

    /// Closes the open child turn without a response, when a scan cuts in.
    fn flush_pending(&mut self) {
        if let Some((at, text)) = self.take_pending() {
            self.push_turn(Turn {
                at,
                ..self.turn_template(Speaker::Child, text)
            });
        }
    }

    fn turn_template(&self, speaker: Speaker, text: String) -> Turn {
        Turn {
            index: self.state.transcript.len(),
            speaker,
            text,
            at: self.now,
            phase: self.state.phase(),
            node: self.state.cursor.current,
            kind: TurnKind::Speech,
            scaffold: None,
            off_script: false,
            repair: None,
        }
    }

    fn push_turn(&mut self, turn: Turn) {
        if turn.speaker == Speaker::Agent {
            self.state.speak_lock = true;
            self.touch();
        }
        self.record(Record::Turn { turn: turn.clone() });
        self.state.transcript.push(turn);
    }

    // -- routing -----------------------------------------------------------

    fn route_utterance(&mut self, text: &str) -> Result<(), SessionError> {
        let node = self.node()?;
        match node.expects {
            Expects::Scan(_) => {
                let redirect = node.on_mismatch.clone().unwrap_or_else(|| REDIRECT_TEXT.to_string());
                self.agent_fixed(redirect, Repair::Redirect);
                Ok(())
            }
            Expects::None => Err(GraphError::UnexpectedInput {
                node: node.id,
                input: "an utterance",
            }
            .into()),
            Expects::Utterance => match classify(text) {
                ReplyClass::Unclear => {
                    self.state.partial = None;
                    self.agent_say(Request::Clarify, Repair::Clarification)
                }
                ReplyClass::Incomplete => {
                    let full = join_partial(self.state.partial.take(), text);
                    self.state.partial = Some(full);
                    self.agent_say(Request::FollowUp { partial: text }, Repair::FollowUp)
                }
                ReplyClass::SideTalk => self.agent_say(Request::SideTalk { question: text }, Repair::OffScript),
                ReplyClass::Correction if !self.state.story.characters.is_empty() => self.amend(text),
                _ => {
                    let full = join_partial(self.state.partial.take(), text);
                    self.answer(node, &full)
                }
            },
        }
    }

    fn answer(&mut self, node: &DialogueNode, text: &str) -> Result<(), SessionError> {
        match node.role {
            NodeRole::Premise => self.state.story = self.state.story.with_premise(text),
            NodeRole::CharacterNote(i) if i < self.state.story.characters.len() => {
                self.state.story = self.state.story.with_character_note(i, text)?;
            }
            NodeRole::Question => {
                let scaffold = self.question_spec(node.id).map(|s| s.scaffold);
                self.state.stage.contributions.push(super::Contribution {
                    node: node.id,
                    scaffold,
                    text: text.to_string(),
                });
            }
            _ => {}
        }
        self.advance(GraphInput::Utterance(text))
    }

    fn amend(&mut self, request: &str) -> Result<(), SessionError> {
        let out = self.generate(Request::Amend { request }, false, None)?;
        let stage = self.state.story.stages.keys().next_back().copied();
        self.state.story = self.state.story.with_amendment(Amendment {
            stage,
            request: request.to_string(),
            text: out.utterance.clone(),
        });
        self.emit(out.utterance, None, false, Some(Repair::Amendment));
        Ok(())
    }

    fn advance(&mut self, input: GraphInput<'_>) -> Result<(), SessionError> {
        let script = self.script();
        let (next, step) = self.state.cursor.advance(script, input)?;
        match step {
            Step::Moved(_) => {
                self.state.cursor = next;
                self.speak_from_node()
            }
            Step::AwaitingMarker => {
                self.state.cursor = next;
                self.wrap()
            }
            Step::Stayed => self.agent_say(Request::Node, Repair::Reask),
            Step::Redirect(text) => {
                let text = if text.is_empty() { REDIRECT_TEXT.to_string() } else { text };
                self.agent_fixed(text, Repair::Redirect);
                Ok(())
            }
            Step::ScanIgnored => {
                let text = match &self.state.prompt {
                    Some(p) => format!("{SCAN_IGNORED_TEXT} {p}"),
                    None => SCAN_IGNORED_TEXT.to_string(),
                };
                self.agent_fixed(text, Repair::ScanIgnored);
                Ok(())
            }
            Step::Completed => Ok(()),
        }
    }

    // -- scans -------------------------------------------------------------

    fn handle_scan(&mut self, payload: &str) -> Result<(), SessionError> {
        let node = self.node()?;
        let phase = self.state.phase();
        self.push_turn(Turn {
            kind: TurnKind::Scan,
            ..self.turn_template(Speaker::Child, payload.to_string())
        });
        let element = match parse_token(payload) {
            Ok(e) => e,
            Err(e) => {
                self.record(Record::ScanRejected {
                    phase,
                    node: node.id,
                    payload: payload.to_string(),
                    reason: e.to_string(),
                });
                let redirect = node.on_mismatch.clone().unwrap_or_else(|| REDIRECT_TEXT.to_string());
                self.agent_fixed(redirect, Repair::MalformedScan);
                return Ok(());
            }
        };
        let rebind = match phase {
            PhaseId::Stage(stage) => {
                self.state.story.stage(stage).is_none() && self.state.stage.binding(element.kind()).is_some()
            }
            _ => false,
        };
        match node.expects {
            Expects::Scan(kind) if kind == element.kind() => {
                if phase == PhaseId::Characters
                    && self.config.duplicate_policy == crate::domain::DuplicatePolicy::Reject
                    && self.state.chosen.contains(&element)
                {
                    self.record(Record::ScanRejected {
                        phase,
                        node: node.id,
                        payload: payload.to_string(),
                        reason: "character already chosen".into(),
                    });
                    self.agent_fixed(DUPLICATE_TEXT.to_string(), Repair::DuplicateCharacter);
                    return Ok(());
                }
                self.accept_scan(node, element)
            }
            _ if rebind => {
                self.state.stage.bind(element.clone());
                self.state.scanned = Some(element.clone());
                self.record(Record::ScanRebound {
                    phase,
                    node: node.id,
                    element: element.clone(),
                });
                let text = match &self.state.prompt {
                    Some(p) => format!("Okay, we will use the {} instead. {p}", element.value()),
                    None => format!("Okay, we will use the {} instead.", element.value()),
                };
                self.agent_fixed(text, Repair::Rebind);
                Ok(())
            }
            Expects::Scan(_) => {
                self.record(Record::ScanRejected {
                    phase,
                    node: node.id,
                    payload: payload.to_string(),
                    reason: format!("{} token not expected here", element.kind()),
                });
                self.advance(GraphInput::Scan(&element))
            }
            _ => {
                self.record(Record::ScanRejected {
                    phase,
                    node: node.id,
                    payload: payload.to_string(),
                    reason: "no token expected here".into(),
                });
                self.advance(GraphInput::Scan(&element))
            }
        }
    }

    fn accept_scan(&mut self, node: &DialogueNode, element: StoryElement) -> Result<(), SessionError> {
        let phase = self.state.phase();
        if phase == PhaseId::Characters && element.kind() == ElementKind::Character {
            self.state.chosen.push(element.clone());
            if self.state.chosen.len() == 3 {
                let chars: [StoryElement; 3] = [
                    self.state.chosen[0].clone(),
                    self.state.chosen[1].clone(),
                    self.state.chosen[2].clone(),
                ];
                self.state.story = self.state.story.bind_characters(&chars, self.config.duplicate_policy)?;
            }
        } else {
            self.state.stage.bind(element.clone());
        }
        self.state.scanned = Some(element.clone());
        self.record(Record::ScanAccepted {
            phase,
            node: node.id,
            element: element.clone(),
        });
        self.advance(GraphInput::Scan(&element))
    }

    // -- agent output ------------------------------------------------------

    fn question_spec(&self, node: crate::graph::NodeId) -> Option<ScaffoldQuestionSpec> {
        let slot = ScheduleSlot::for_phase(self.state.phase())?;
        let pos = self.script().question_nodes().position(|n| n.id == node)?;
        self.resources
            .schedules
            .schedule_for(self.config.condition, slot)
            .into_iter()
            .nth(pos)
    }

    fn emit(&mut self, text: String, scaffold: Option<ScaffoldType>, off_script: bool, repair: Option<Repair>) {
        if text.is_empty() {
            return;
        }
        let turn = Turn {
            scaffold,
            off_script,
            repair,
            ..self.turn_template(Speaker::Agent, text)
        };
        self.push_turn(turn);
    }

    fn agent_fixed(&mut self, text: String, repair: Repair) {
        self.emit(text, None, false, Some(repair));
    }

    /// A repair or re-ask at the current node.
    fn agent_say(&mut self, request: Request<'_>, repair: Repair) -> Result<(), SessionError> {
        let node = self.node()?;
        let question = if node.role == NodeRole::Question {
            self.question_spec(node.id)
        } else {
            None
        };
        let out = self.generate(request, false, question.as_ref())?;
        self.emit(out.utterance, None, out.off_script, Some(repair));
        Ok(())
    }

    /// Speaks the current node and any following nodes that take no input,
    /// as one turn. Ends the phase when a terminal node is reached.
    fn speak_from_node(&mut self) -> Result<(), SessionError> {
        let mut texts: Vec<String> = Vec::new();
        let mut scaffold = None;
        loop {
            let script = self.script();
            let node = self.node()?;
            let expect_marker = self.state.cursor.marker_due(script);
            let question = if node.role == NodeRole::Question {
                self.question_spec(node.id)
            } else {
                None
            };
            let out = self.generate(Request::Node, expect_marker, question.as_ref())?;
            if scaffold.is_none() {
                scaffold = question.as_ref().map(|q| q.scaffold);
            }
            self.apply_story_role(node, &out)?;
            if node.expects != Expects::None {
                self.state.prompt = Some(out.utterance.clone());
            }
            if !out.utterance.is_empty() {
                texts.push(out.utterance);
            }
            if expect_marker {
                self.emit(texts.join(" "), scaffold, false, None);
                return self.complete_phase();
            }
            if node.expects != Expects::None {
                self.emit(texts.join(" "), scaffold, false, None);
                return Ok(());
            }
            let (next, step) = self.state.cursor.advance(script, GraphInput::Continue)?;
            self.state.cursor = next;
            if step == Step::AwaitingMarker {
                self.emit(texts.join(" "), scaffold, false, None);
                return self.wrap();
            }
        }
    }

    fn apply_story_role(&mut self, node: &DialogueNode, out: &AgentOutput) -> Result<(), SessionError> {
        let Some(stage) = self.state.phase().stage() else {
            return Ok(());
        };
        let text = out.story_text.clone().unwrap_or_else(|| out.utterance.clone());
        match node.role {
            NodeRole::Draft => {
                let p = &self.state.stage;
                let place = p.place.clone().ok_or(SessionError::MissingToken(ElementKind::Place))?;
                let item = p.item.clone().ok_or(SessionError::MissingToken(ElementKind::Item))?;
                let emotion = p.emotion.clone().ok_or(SessionError::MissingToken(ElementKind::Emotion))?;
                self.state.story = self.state.story.record_stage(stage, &place, &item, &emotion, &text)?;
            }
            NodeRole::Update => {
                self.state.story = self.state.story.apply_update(stage, &text)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// The phase's last input has arrived; the narrator closes it.
    fn wrap(&mut self) -> Result<(), SessionError> {
        let out = self.generate(Request::Wrap, true, None)?;
        self.emit(out.utterance, None, false, None);
        self.complete_phase()
    }

    fn complete_phase(&mut self) -> Result<(), SessionError> {
        let script = self.script();
        let (next, _) = self.state.cursor.advance(script, GraphInput::Marker(script.marker))?;
        self.record(Record::PhaseCompleted {
            phase: script.phase,
            path: next.visited.clone(),
            marker: script.marker,
        });
        self.state.cursor = next;
        if self.state.phase_index + 1 == self.state.phases.len() {
            self.state.status = SessionStatus::Finished;
            self.record(Record::SessionFinished);
            return Ok(());
        }
        self.state.phase_index += 1;
        self.enter_phase()
    }

    pub fn enter_phase(&mut self) -> Result<(), SessionError> {
        let script = self.script();
        self.state.cursor = crate::graph::GraphCursor::new(script);
        self.state.stage = Default::default();
        self.state.partial = None;
        self.state.prompt = None;
        self.record(Record::PhaseEntered {
            phase: script.phase,
            number: self.state.phase_number(),
        });
        self.speak_from_node()
    }

    /// Asks the narrator for a line, re-prompting when the completion
    /// marker shows up too early or fails to show up.
    fn generate(
        &mut self,
        request: Request<'_>,
        expect_marker: bool,
        question: Option<&ScaffoldQuestionSpec>,
    ) -> Result<AgentOutput, SessionError> {
        let script = self.script();
        let node = self.state.cursor.current;
        let phase = self.state.phase();
        let mut retry = None;
        let mut kept: Option<String> = None;
        let max = self.config.max_reprompts;
        for attempt in 0..=max {
            let (raw, mut out) = {
                let t = &self.state.transcript;
                let window = &t[t.len().saturating_sub(self.config.transcript_window)..];
                let ctx = NarratorContext {
                    preamble: PREAMBLE,
                    script,
                    node,
                    request,
                    transcript: window,
                    story: &self.state.story,
                    stage: &self.state.stage,
                    question,
                    scanned: self.state.scanned.as_ref(),
                    expect_marker,
                    retry,
                };
                narrator::generate(self.narrator, &ctx)?
            };
            self.record(Record::NarratorReply {
                phase,
                node,
                request: request.label().to_string(),
                reply: raw,
            });
            if !expect_marker {
                let Some(marker) = out.markers.first().copied() else {
                    return Ok(out);
                };
                let error = match self.state.cursor.advance(script, GraphInput::Marker(marker)) {
                    Err(e) => format!("{e:?}"),
                    Ok(_) => "marker outside a completing step".to_string(),
                };
                self.record(Record::MarkerRejected {
                    phase,
                    node,
                    retry: Retry::EarlyMarker,
                    error,
                    attempt,
                });
                if attempt == max {
                    out.markers.clear();
                    return Ok(out);
                }
                self.state.reprompts += 1;
                retry = Some(Retry::EarlyMarker);
                continue;
            }
            if out.markers.contains(&script.marker) {
                if out.utterance.is_empty() {
                    if let Some(k) = kept {
                        out.utterance = k;
                    }
                }
                return Ok(out);
            }
            self.record(Record::MarkerRejected {
                phase,
                node,
                retry: Retry::MissingMarker,
                error: "no completion marker".into(),
                attempt,
            });
            if kept.is_none() && !out.utterance.is_empty() {
                kept = Some(out.utterance.clone());
            }
            if attempt == max {
                return Err(NarratorError::MarkerStuck(script.marker).into());
            }
            self.state.reprompts += 1;
            retry = Some(Retry::MissingMarker);
        }
        unreachable!("the loop returns on its last attempt")
    }

    // -- closing -----------------------------------------------------------

    pub fn complete(&mut self) -> Result<(), SessionError> {
        let story = match self.state.kind {
            SessionKind::Practice => None,
            SessionKind::Play => {
                let doc = &self.state.story;
                let text = doc.compile_story()?;
                let stages = doc
                    .stages
                    .values()
                    .map(|r| StoryStage {
                        stage: r.stage,
                        text: r.final_text().to_string(),
                        place: r.place.clone(),
                        item: r.item.clone(),
                        emotion: r.emotion.clone(),
                        updated: r.update.is_some(),
                    })
                    .collect();
                Some(StoryRecord {
                    story_id: format!("{}-story", self.state.session_id),
                    session_id: self.state.session_id.clone(),
                    profile_id: self.state.profile_id.clone(),
                    condition: self.state.condition,
                    created_at: self.now,
                    characters: doc.characters.clone(),
                    stages,
                    text,
                })
            }
        };
        self.state.status = SessionStatus::Closed;
        self.state.last_event_at = self.now;
        self.record(Record::SessionClosed { story });
        Ok(())
    }
}

fn join_partial(partial: Option<String>, text: &str) -> String {
    match partial {
        Some(p) => format!("{p} {text}"),
        None => text.to_string(),
    }
}
