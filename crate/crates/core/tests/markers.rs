mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use common::start_with;
use tinker_core::narrator::{
    EarlyMarkerFault, Narrator, NarratorContext, NarratorError, RawReply, Retry, StubNarrator,
};
use tinker_core::session::driver::{Driver, SimpleChild};
use tinker_core::session::SessionError;
use tinker_core::{Condition, Record};

fn rejections(log: &tinker_core::SessionLog, retry: Retry) -> Vec<(String, u32)> {
    log.records()
        .filter_map(|r| match r {
            Record::MarkerRejected {
                retry: r, error, attempt, ..
            } if *r == retry => Some((error.clone(), *attempt)),
            _ => None,
        })
        .collect()
}

#[test]
fn early_marker_is_rejected_and_reprompted() {
    let narrator = Arc::new(EarlyMarkerFault::new(StubNarrator, 1));
    let s = start_with(Condition::Structured, narrator.clone());
    assert_eq!(narrator.remaining(), 0);
    let rejected = rejections(s.log(), Retry::EarlyMarker);
    assert_eq!(rejected.len(), 1);
    assert!(rejected[0].0.starts_with("MarkerBeforeCompletion"), "{}", rejected[0].0);
    assert_eq!(s.state().reprompts, 1);
    // The phase did not move and the turn carries no marker.
    assert_eq!(s.state().phase_number(), 1);
    assert_eq!(s.state().cursor.current, 'A');
    let turn = s.state().last_agent_turn().unwrap();
    assert!(!turn.text.contains("##"));
}

#[test]
fn persistent_early_markers_stop_after_two_reprompts() {
    let narrator = Arc::new(EarlyMarkerFault::new(StubNarrator, 3));
    let s = start_with(Condition::Generic, narrator);
    let rejected = rejections(s.log(), Retry::EarlyMarker);
    let attempts: Vec<u32> = rejected.iter().map(|r| r.1).collect();
    assert_eq!(attempts, [0, 1, 2]);
    assert_eq!(s.state().reprompts, 2);
    assert_eq!(s.state().cursor.current, 'A');
    assert!(!s.state().last_agent_turn().unwrap().text.contains("##"));
}

#[test]
fn faults_during_a_full_session_never_skip_steps() {
    let narrator = Arc::new(EarlyMarkerFault::new(StubNarrator, 40));
    let mut s = start_with(Condition::Structured, narrator);
    let story = Driver::new(0).play(&mut s, &mut SimpleChild::default()).unwrap().unwrap();
    assert_eq!(story.stages.len(), 4);
    assert!(s.state().transcript.iter().all(|t| !t.text.contains("##NEXT##") && !t.text.contains("##Done##")));
    let mut per_generation = std::collections::BTreeMap::<usize, u32>::new();
    let mut gen = 0;
    for r in s.log().records() {
        match r {
            Record::MarkerRejected { attempt, .. } => {
                *per_generation.entry(gen).or_default() += 1;
                assert!(*attempt <= 2);
            }
            Record::NarratorReply { .. } => {}
            _ => gen += 1,
        }
    }
    assert!(per_generation.values().all(|n| *n <= 3));
    assert!(s.log().records().any(|r| matches!(r, Record::MarkerRejected { .. })));
}

/// Drops the marker from replies that should carry one, `misses` times.
struct MissingMarker {
    misses: AtomicUsize,
    bare_retry: bool,
}

impl Narrator for MissingMarker {
    fn name(&self) -> &str {
        "missing-marker"
    }

    fn generate_raw(&self, ctx: &NarratorContext<'_>) -> Result<RawReply, NarratorError> {
        let mut reply = StubNarrator.generate_raw(ctx)?;
        if ctx.expect_marker {
            if self.misses.fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1)).is_ok() {
                reply.text = reply.text.replace(ctx.script.marker.text(), "").trim().to_string();
            } else if self.bare_retry && ctx.retry == Some(Retry::MissingMarker) {
                reply.text = ctx.script.marker.text().to_string();
            }
        }
        Ok(reply)
    }
}

#[test]
fn missing_marker_is_reprompted_then_reported() {
    let narrator = Arc::new(MissingMarker {
        misses: AtomicUsize::new(usize::MAX),
        bare_retry: false,
    });
    let mut s = start_with(Condition::Structured, narrator);
    let mut d = Driver::new(0);
    let err = d.play(&mut s, &mut SimpleChild::default()).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(
        err,
        tinker_core::session::driver::DriveError::Session(SessionError::Narrator(NarratorError::MarkerStuck(_)))
    ), "{msg}");
    // Nothing from the failed step was committed.
    assert_eq!(s.state().phase_number(), 1);
    assert!(rejections(s.log(), Retry::MissingMarker).is_empty());
}

#[test]
fn bare_marker_retry_keeps_the_first_utterance() {
    let narrator = Arc::new(MissingMarker {
        misses: AtomicUsize::new(1),
        bare_retry: true,
    });
    let mut s = start_with(Condition::Structured, narrator);
    let mut d = Driver::new(0);
    d.run_until(&mut s, &mut SimpleChild::default(), |st| st.phase_number() == 2).unwrap();
    let rejected = rejections(s.log(), Retry::MissingMarker);
    assert_eq!(rejected.len(), 1);
    let wrap = s
        .state()
        .transcript
        .iter()
        .rev()
        .find(|t| t.phase == tinker_core::PhaseId::Opening && t.speaker == tinker_core::session::Speaker::Agent)
        .unwrap();
    assert!(!wrap.text.is_empty());
    assert!(!wrap.text.contains("##"));
}
