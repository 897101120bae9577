//! Simulated children for exercising sessions end to end: persona files,
//! a seeded policy with scan errors and conversational breakdowns, and a
//! runner that plays whole sessions against the stub narrator.

pub mod child;
pub mod persona;

use std::sync::Arc;

use thiserror::Error;
use tinker_core::narrator::{Narrator, StubNarrator};
use tinker_core::session::driver::{DriveError, Driver};
use tinker_core::session::SessionError;
use tinker_core::{Condition, Resources, Session, SessionConfig, SessionLog};

pub use child::{inject_breakdown, Breakdown, ScanFault, SimChild, MAX_FAULTS_PER_NODE};
pub use persona::{AnswerBank, Persona, Timing};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("persona: {0}")]
    Persona(String),
    #[error("no bundled persona named {0:?}")]
    UnknownPersona(String),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Drive(#[from] DriveError),
}

pub fn session_id(persona: &Persona, condition: Condition, seed: u64) -> String {
    format!("{}-{}-{seed}", persona.name, condition.as_str())
}

/// Plays one session with the stub narrator and returns its log.
pub fn run_persona(persona: &Persona, condition: Condition, resources: &Resources, seed: u64) -> Result<SessionLog, SimError> {
    run_with(persona, condition, resources, Arc::new(StubNarrator), seed)
}

pub fn run_with(
    persona: &Persona,
    condition: Condition,
    resources: &Resources,
    narrator: Arc<dyn Narrator>,
    seed: u64,
) -> Result<SessionLog, SimError> {
    let child = SimChild::new(persona.clone(), seed);
    play(child, condition, resources, narrator, seed)
}

/// Plays a prepared child, e.g. one with forced breakdowns.
pub fn play(
    child: SimChild,
    condition: Condition,
    resources: &Resources,
    narrator: Arc<dyn Narrator>,
    seed: u64,
) -> Result<SessionLog, SimError> {
    Ok(play_session(child, condition, resources, narrator, seed)?.log().clone())
}

/// Like [`play`] but hands back the live session.
pub fn play_session(
    mut child: SimChild,
    condition: Condition,
    resources: &Resources,
    narrator: Arc<dyn Narrator>,
    seed: u64,
) -> Result<Session, SimError> {
    let id = session_id(child.persona(), condition, seed);
    let config = SessionConfig::new(&id, child.persona().name.as_str(), condition, 0);
    let (mut session, _) = Session::start(config, resources.clone(), narrator)?;
    let mut driver = Driver::new(0);
    driver.play(&mut session, &mut child)?;
    Ok(session)
}

/// Runs seeds `0..runs` for each condition, spread over threads. Logs come
/// back ordered by condition, then seed.
pub fn run_batch(
    persona: &Persona,
    conditions: &[Condition],
    resources: &Resources,
    runs: u64,
) -> Result<Vec<SessionLog>, SimError> {
    let jobs: Vec<(Condition, u64)> = conditions
        .iter()
        .flat_map(|&c| (0..runs).map(move |s| (c, s)))
        .collect();
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    let chunk = jobs.len().div_ceil(threads).max(1);
    let results: Vec<Result<SessionLog, SimError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = jobs
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|&(c, seed)| run_persona(persona, c, resources, seed))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    results.into_iter().collect()
}
