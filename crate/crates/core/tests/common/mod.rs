#![allow(dead_code)]

use std::sync::Arc;

use tinker_core::graph::PhaseId;
use tinker_core::narrator::{Narrator, StubNarrator};
use tinker_core::session::driver::{Driver, SimpleChild};
use tinker_core::session::{Session, SessionEvent, SessionState};
use tinker_core::{Condition, Resources, SessionConfig};

pub fn start_with(condition: Condition, narrator: Arc<dyn Narrator>) -> Session {
    let config = SessionConfig::new("s1", "kid", condition, 0);
    Session::start(config, Resources::bundled(), narrator).expect("session starts").0
}

pub fn start(condition: Condition) -> Session {
    start_with(condition, Arc::new(StubNarrator))
}

/// Plays with a cooperative child until `stop` holds; returns the driver so
/// callers can keep using its clock.
pub fn drive(session: &mut Session, stop: impl Fn(&SessionState) -> bool) -> Driver {
    let mut driver = Driver::new(0);
    driver.run_until(session, &mut SimpleChild::default(), stop).expect("drive");
    driver
}

pub fn at_node(phase: PhaseId, node: char) -> impl Fn(&SessionState) -> bool {
    move |s| s.phase() == phase && s.cursor.current == node && !s.speak_lock
}

/// Ends the agent's current speech so input is accepted again.
pub fn finish_speech(session: &mut Session, at: u64) {
    if session.state().speak_lock {
        session.ingest(SessionEvent::speech_ended(at)).expect("speech ended");
    }
}
