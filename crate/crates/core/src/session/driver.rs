//! Runs a session against a simulated child on a synthetic clock.

use thiserror::Error;

use crate::domain::{ElementKind, NarrativeStage};
use crate::graph::{DialogueNode, Expects, NodeRole, PhaseId, PhaseScript};
use crate::token::Vocabulary;

use super::{Session, SessionError, SessionEvent, SessionState, SessionStatus, Speaker, StoryRecord, Turn};

/// What the simulated child does next. Delays are relative to the previous
/// action (or to the end of the agent's speech).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChildAction {
    Say { text: String, delay_ms: u64 },
    Scan { payload: String, delay_ms: u64 },
    /// Stay quiet for `ms`, then let the session close the open turn.
    Pause { ms: u64 },
    EndOfSpeech { delay_ms: u64 },
}

/// Everything a policy may look at when choosing its next actions.
pub struct PromptView<'a> {
    pub state: &'a SessionState,
    pub script: &'a PhaseScript,
    pub node: &'a DialogueNode,
    pub last_agent: Option<&'a Turn>,
}

impl PromptView<'_> {
    pub fn phase(&self) -> PhaseId {
        self.state.phase()
    }
}

pub trait ChildPolicy {
    fn respond(&mut self, view: &PromptView<'_>) -> Vec<ChildAction>;

    /// Speech the child starts while the agent is still talking.
    fn barge_in(&mut self, _view: &PromptView<'_>) -> Option<String> {
        None
    }
}

#[derive(Debug, Error)]
pub enum DriveError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("no progress after {0} child turns")]
    Stalled(usize),
    #[error("session is not at the {0} stage")]
    NotAtStage(NarrativeStage),
}

#[derive(Debug, Clone)]
pub struct Driver {
    pub clock: u64,
    /// Simulated agent speaking rate.
    pub ms_per_word: u64,
    pub max_cycles: usize,
}

impl Driver {
    pub fn new(clock: u64) -> Self {
        Driver {
            clock,
            ms_per_word: 300,
            max_cycles: 2_000,
        }
    }

    fn view<'s>(session: &'s Session) -> Option<PromptView<'s>> {
        let state = session.state();
        let script = session.resources().scripts.get(state.phase(), state.condition)?;
        let node = script.node(state.cursor.current)?;
        Some(PromptView {
            state,
            script,
            node,
            last_agent: state.last_agent_turn(),
        })
    }

    /// Lets the agent finish speaking, delivering any barge-in meanwhile.
    fn await_speech(&mut self, session: &mut Session, policy: &mut dyn ChildPolicy, spoken_from: usize) -> Result<(), DriveError> {
        if !session.state().speak_lock {
            return Ok(());
        }
        let words: usize = session.state().transcript[spoken_from..]
            .iter()
            .filter(|t| t.speaker == Speaker::Agent)
            .map(Turn::word_count)
            .sum();
        let duration = (words as u64 * self.ms_per_word).max(500);
        let barge = match session.state().status {
            SessionStatus::Active => Self::view(session).and_then(|v| policy.barge_in(&v)),
            _ => None,
        };
        if let Some(text) = barge {
            session.ingest(SessionEvent::utterance(self.clock + duration / 2, &text))?;
        }
        self.clock += duration;
        session.ingest(SessionEvent::speech_ended(self.clock))?;
        Ok(())
    }

    fn apply(&mut self, session: &mut Session, action: ChildAction) -> Result<(), DriveError> {
        match action {
            ChildAction::Say { text, delay_ms } => {
                self.clock += delay_ms;
                session.ingest(SessionEvent::utterance(self.clock, &text))?;
            }
            ChildAction::Scan { payload, delay_ms } => {
                self.clock += delay_ms;
                session.ingest(SessionEvent::scan(self.clock, &payload))?;
            }
            ChildAction::Pause { ms } => {
                self.clock += ms;
                session.finalize(self.clock)?;
            }
            ChildAction::EndOfSpeech { delay_ms } => {
                self.clock += delay_ms;
                session.ingest(SessionEvent::end_of_speech(self.clock))?;
            }
        }
        Ok(())
    }

    /// Plays until `stop` holds or the session stops being active.
    pub fn run_until(
        &mut self,
        session: &mut Session,
        policy: &mut dyn ChildPolicy,
        stop: impl Fn(&SessionState) -> bool,
    ) -> Result<(), DriveError> {
        let mut spoken_from = session
            .state()
            .transcript
            .iter()
            .rposition(|t| t.speaker == Speaker::Child)
            .map_or(0, |i| i + 1);
        for _ in 0..self.max_cycles {
            self.await_speech(session, policy, spoken_from)?;
            spoken_from = session.state().transcript.len();
            if session.state().status != SessionStatus::Active || stop(session.state()) {
                return Ok(());
            }
            let actions = match Self::view(session) {
                Some(v) => policy.respond(&v),
                None => Vec::new(),
            };
            if actions.is_empty() {
                return Err(DriveError::Stalled(self.max_cycles));
            }
            for a in actions {
                if session.state().status != SessionStatus::Active {
                    break;
                }
                self.apply(session, a)?;
            }
        }
        Err(DriveError::Stalled(self.max_cycles))
    }

    /// Plays to the end and saves the story.
    pub fn play(&mut self, session: &mut Session, policy: &mut dyn ChildPolicy) -> Result<Option<StoryRecord>, DriveError> {
        self.run_until(session, policy, |_| false)?;
        match session.state().status {
            SessionStatus::Finished => {
                self.clock += 1;
                Ok(session.complete(self.clock)?)
            }
            _ => Ok(None),
        }
    }

    /// Runs one narrative stage: three scans, draft, scheduled questions and
    /// (where the script calls for it) the update.
    pub fn run_stage_loop(
        &mut self,
        session: &mut Session,
        policy: &mut dyn ChildPolicy,
        stage: NarrativeStage,
    ) -> Result<(), DriveError> {
        if session.state().phase() != PhaseId::Stage(stage) {
            return Err(DriveError::NotAtStage(stage));
        }
        self.run_until(session, policy, |s| s.phase() != PhaseId::Stage(stage))
    }
}

/// A plain cooperative child: scans the expected kind, answers every step.
#[derive(Debug, Clone)]
pub struct SimpleChild {
    /// Answer scaffold questions with "No" instead of content.
    pub decline_questions: bool,
    pub answers: Vec<String>,
    asked: usize,
}

impl Default for SimpleChild {
    fn default() -> Self {
        SimpleChild {
            decline_questions: false,
            answers: [
                "They see a turtle, and the turtle becomes a pet for them.",
                "They feel happy because they are together.",
                "To find treasure.",
                "The bear wants to befriend the dragon.",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            asked: 0,
        }
    }
}

impl SimpleChild {
    pub fn refuser() -> Self {
        SimpleChild {
            decline_questions: true,
            ..Default::default()
        }
    }
}

/// A token of `kind` for the current phase: characters not yet chosen,
/// stage tokens rotated by stage.
pub fn pick_token(state: &SessionState, kind: ElementKind, offset: usize) -> String {
    let vocab = Vocabulary::default_ref();
    let values = vocab.values(kind);
    let value = match kind {
        ElementKind::Character => values
            .iter()
            .find(|v| !state.chosen.iter().any(|c| c.value() == v.as_str()))
            .unwrap_or(&values[0]),
        _ => {
            let stage = state.phase().stage().map_or(0, |s| s.index());
            &values[(stage * 2 + offset) % values.len()]
        }
    };
    format!("{kind}:{value}")
}

impl ChildPolicy for SimpleChild {
    fn respond(&mut self, view: &PromptView<'_>) -> Vec<ChildAction> {
        match view.node.expects {
            Expects::Scan(kind) => vec![ChildAction::Scan {
                payload: pick_token(view.state, kind, 0),
                delay_ms: 1_500,
            }],
            Expects::Utterance => {
                let text = match view.node.role {
                    NodeRole::Question if self.decline_questions => "No.".to_string(),
                    NodeRole::Question => {
                        let a = self.answers[self.asked % self.answers.len()].clone();
                        self.asked += 1;
                        a
                    }
                    NodeRole::CharacterNote(_) => "Brave and kind.".to_string(),
                    NodeRole::Premise => "A story about friends on an adventure.".to_string(),
                    _ => "Yes!".to_string(),
                };
                vec![
                    ChildAction::Say { text, delay_ms: 1_000 },
                    ChildAction::Pause { ms: super::PAUSE_MS },
                ]
            }
            Expects::None => Vec::new(),
        }
    }
}
