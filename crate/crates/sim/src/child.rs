//! A seeded child policy that plays a persona, breakdowns included.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tinker_core::graph::{Expects, NodeId, NodeRole};
use tinker_core::session::driver::{pick_token, ChildAction, ChildPolicy, PromptView};
use tinker_core::session::Repair;
use tinker_core::token::Vocabulary;
use tinker_core::{ElementKind, PhaseId, SessionState};

use crate::persona::{scaffold_key, Persona};

/// Longest run of scan errors or speech breakdowns at one node.
pub const MAX_FAULTS_PER_NODE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Breakdown {
    /// Speech recognition returns noise.
    Garble,
    /// The child trails off on "and" and goes quiet.
    Interrupt,
    /// An off-topic question for the agent.
    SideTalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScanFault {
    WrongKind,
    Malformed,
    Duplicate,
}

/// Actions for one breakdown in place of `answer`. For an interrupt the
/// second value is what the child says after the agent's follow-up.
pub fn inject_breakdown(
    kind: Breakdown,
    answer: &str,
    persona: &Persona,
    rng: &mut ChaCha8Rng,
) -> (Vec<ChildAction>, Option<String>) {
    let think = between(rng, persona.timing.think_ms);
    let pause = between(rng, persona.timing.pause_ms);
    let (text, rest) = match kind {
        Breakdown::Garble => (pick(rng, persona.answers.get("noise")), None),
        Breakdown::SideTalk => (pick(rng, persona.answers.get("side_talk")), None),
        Breakdown::Interrupt => {
            let head = answer.trim_end_matches(['.', '!', '?', ' ']);
            let rest = pick(rng, persona.answers.get("continuation"));
            (format!("{head} and"), Some(rest))
        }
    };
    (
        vec![
            ChildAction::Say { text, delay_ms: think },
            ChildAction::Pause { ms: pause },
        ],
        rest,
    )
}

fn between(rng: &mut ChaCha8Rng, [lo, hi]: [u64; 2]) -> u64 {
    rng.gen_range(lo..=hi)
}

fn pick(rng: &mut ChaCha8Rng, options: &[String]) -> String {
    options.choose(rng).cloned().unwrap_or_default()
}

pub struct SimChild {
    persona: Persona,
    rng: ChaCha8Rng,
    /// Node the fault counter belongs to.
    node: Option<(PhaseId, NodeId)>,
    faults_here: usize,
    /// Rest of an interrupted answer.
    pending_rest: Option<String>,
    forced: Vec<(Option<PhaseId>, Breakdown)>,
    walked_away: bool,
}

impl SimChild {
    pub fn new(persona: Persona, seed: u64) -> Self {
        let mixed = persona.seed ^ seed.rotate_left(32) ^ 0x7469_6e6b;
        SimChild {
            persona,
            rng: ChaCha8Rng::seed_from_u64(mixed),
            node: None,
            faults_here: 0,
            pending_rest: None,
            forced: Vec::new(),
            walked_away: false,
        }
    }

    pub fn persona(&self) -> &Persona {
        &self.persona
    }

    /// Queues a breakdown for the next answer, ahead of any rolls.
    pub fn force_breakdown(&mut self, kind: Breakdown) {
        self.forced.insert(0, (None, kind));
    }

    /// Queues a breakdown for the next answer given in `phase`.
    pub fn force_breakdown_in(&mut self, phase: PhaseId, kind: Breakdown) {
        self.forced.insert(0, (Some(phase), kind));
    }

    fn track_node(&mut self, view: &PromptView<'_>) {
        let here = (view.phase(), view.node.id);
        if self.node != Some(here) {
            self.node = Some(here);
            self.faults_here = 0;
            self.pending_rest = None;
        }
    }

    fn think(&mut self) -> u64 {
        between(&mut self.rng, self.persona.timing.think_ms)
    }

    fn pause(&mut self) -> u64 {
        between(&mut self.rng, self.persona.timing.pause_ms)
    }

    /// Speech split into fragments separated by short gaps, then silence.
    fn speak(&mut self, text: &str) -> Vec<ChildAction> {
        let words: Vec<&str> = text.split_whitespace().collect();
        let mut actions = Vec::new();
        let mut delay = self.think();
        if words.len() >= 6 && self.rng.gen_bool(0.5) {
            let cut = self.rng.gen_range(2..words.len() - 1);
            actions.push(ChildAction::Say {
                text: words[..cut].join(" "),
                delay_ms: delay,
            });
            delay = between(&mut self.rng, self.persona.timing.fragment_gap_ms);
            actions.push(ChildAction::Say {
                text: words[cut..].join(" "),
                delay_ms: delay,
            });
        } else {
            actions.push(ChildAction::Say {
                text: text.to_string(),
                delay_ms: delay,
            });
        }
        actions.push(ChildAction::Pause { ms: self.pause() });
        actions
    }

    fn scan(&mut self, state: &SessionState, kind: ElementKind) -> Vec<ChildAction> {
        let mut payload = pick_token(state, kind, 0);
        if self.faults_here < MAX_FAULTS_PER_NODE && self.rng.gen_bool(self.persona.scan_error) {
            let mut faults = vec![ScanFault::WrongKind, ScanFault::Malformed];
            if kind == ElementKind::Character && !state.chosen.is_empty() {
                faults.push(ScanFault::Duplicate);
            }
            let fault = *faults.choose(&mut self.rng).expect("non-empty");
            payload = self.bad_payload(state, kind, fault);
            self.faults_here += 1;
        }
        vec![ChildAction::Scan {
            payload,
            delay_ms: self.think(),
        }]
    }

    fn bad_payload(&mut self, state: &SessionState, kind: ElementKind, fault: ScanFault) -> String {
        let vocab = Vocabulary::default_ref();
        match fault {
            ScanFault::WrongKind => {
                let others: Vec<ElementKind> = ElementKind::ALL.into_iter().filter(|k| *k != kind).collect();
                let other = *others.choose(&mut self.rng).expect("several kinds");
                let value = vocab.values(other).choose(&mut self.rng).expect("values");
                format!("{other}:{value}")
            }
            // A bare value without its kind prefix never parses.
            ScanFault::Malformed => vocab.values(kind).choose(&mut self.rng).expect("values").clone(),
            ScanFault::Duplicate => state.chosen[0].to_string(),
        }
    }

    fn answer_for(&mut self, view: &PromptView<'_>) -> String {
        let bank = &self.persona.answers;
        let key = match view.node.role {
            NodeRole::Premise => "premise",
            NodeRole::CharacterNote(_) => "note",
            NodeRole::Question => view
                .last_agent
                .and_then(|t| t.scaffold)
                .map_or("open-invitation", scaffold_key),
            _ => "plain",
        };
        let options = if bank.get(key).is_empty() { bank.get("plain") } else { bank.get(key) };
        pick(&mut self.rng, options)
    }

    fn roll_breakdown(&mut self, phase: PhaseId) -> Option<Breakdown> {
        if self.faults_here >= MAX_FAULTS_PER_NODE {
            return None;
        }
        if let Some(&(want, b)) = self.forced.last() {
            if want.is_none_or(|p| p == phase) {
                self.forced.pop();
                return Some(b);
            }
        }
        let p = &self.persona;
        let (g, i, s) = (p.garble, p.interrupt, p.side_talk);
        let roll: f64 = self.rng.gen();
        if roll < g {
            Some(Breakdown::Garble)
        } else if roll < g + i {
            Some(Breakdown::Interrupt)
        } else if roll < g + i + s {
            Some(Breakdown::SideTalk)
        } else {
            None
        }
    }

    fn utter(&mut self, view: &PromptView<'_>) -> Vec<ChildAction> {
        let follow_up = view.last_agent.is_some_and(|t| t.repair == Some(Repair::FollowUp));
        if follow_up {
            if let Some(rest) = self.pending_rest.take() {
                return self.speak(&rest);
            }
        }
        let question = view.node.role == NodeRole::Question;
        if question && self.rng.gen_bool(self.persona.refusal) {
            let text = pick(&mut self.rng, self.persona.answers.get("refusal"));
            return self.speak(&text);
        }
        let answer = self.answer_for(view);
        if matches!(view.node.role, NodeRole::Question | NodeRole::CharacterNote(_) | NodeRole::Premise) {
            if let Some(kind) = self.roll_breakdown(view.phase()) {
                self.faults_here += 1;
                let (actions, rest) = inject_breakdown(kind, &answer, &self.persona, &mut self.rng);
                self.pending_rest = rest;
                return actions;
            }
        }
        self.speak(&answer)
    }
}

impl ChildPolicy for SimChild {
    fn respond(&mut self, view: &PromptView<'_>) -> Vec<ChildAction> {
        if let Some(n) = self.persona.abandon_at_phase {
            if view.state.phase_number() >= n && !self.walked_away {
                self.walked_away = true;
                return vec![ChildAction::Pause { ms: 10 * 60_000 }];
            }
        }
        self.track_node(view);
        match view.node.expects {
            Expects::Scan(kind) => self.scan(view.state, kind),
            Expects::Utterance => self.utter(view),
            Expects::None => Vec::new(),
        }
    }

    fn barge_in(&mut self, _view: &PromptView<'_>) -> Option<String> {
        if self.persona.barge_in > 0.0 && self.rng.gen_bool(self.persona.barge_in) {
            Some("Wait, wait!".to_string())
        } else {
            None
        }
    }
}
