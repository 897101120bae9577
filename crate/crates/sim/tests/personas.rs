use std::sync::Arc;

use tinker_core::graph::{enumerate_paths, PhaseId};
use tinker_core::log::Record;
use tinker_core::narrator::StubNarrator;
use tinker_core::scaffold::{audit_session, ScheduleBook};
use tinker_core::session::{Repair, Speaker};
use tinker_core::token::REDIRECT_TEXT;
use tinker_core::{Condition, Resources, SessionLog};
use tinker_sim::{play, run_batch, run_persona, Breakdown, Persona, SimChild};

fn res() -> Resources {
    Resources::bundled()
}

fn agent_repairs(log: &SessionLog) -> Vec<Repair> {
    log.turns()
        .filter(|t| t.speaker == Speaker::Agent)
        .filter_map(|t| t.repair)
        .collect()
}

fn count(log: &SessionLog, f: impl Fn(&Record) -> bool) -> usize {
    log.records().filter(|r| f(r)).count()
}

#[test]
fn cooperative_run_follows_declared_paths_and_schedule() {
    let r = res();
    for cond in [Condition::Structured, Condition::Generic] {
        let log = run_persona(&Persona::cooperative(), cond, &r, 7).unwrap();
        assert!(log.is_closed());
        assert!(audit_session(&log, ScheduleBook::bundled()).unwrap().passed());
        for rec in log.records() {
            if let Record::PhaseCompleted { phase, path, .. } = rec {
                let script = r.scripts.get(*phase, cond).unwrap();
                assert!(enumerate_paths(script).unwrap().contains(path), "{phase}: {path:?}");
            }
        }
        assert!(agent_repairs(&log).is_empty());
    }
}

#[test]
fn wrong_scanner_is_redirected_and_finishes() {
    let log = run_persona(&Persona::bundled("wrong-scanner").unwrap(), Condition::Structured, &res(), 1).unwrap();
    assert!(log.is_closed());
    let redirects: Vec<_> = log
        .turns()
        .filter(|t| t.speaker == Speaker::Agent && t.repair == Some(Repair::Redirect))
        .collect();
    assert!(!redirects.is_empty());
    assert!(redirects.iter().any(|t| t.text == REDIRECT_TEXT));
    assert!(audit_session(&log, ScheduleBook::bundled()).unwrap().passed());
}

#[test]
fn refuser_generic_gets_drafts_but_no_updates() {
    let log = run_persona(&Persona::bundled("refuser").unwrap(), Condition::Generic, &res(), 3).unwrap();
    let story = log.story_record().expect("story saved");
    assert_eq!(story.stages.len(), 4);
    assert!(story.stages.iter().all(|s| !s.updated));
}

#[test]
fn refuser_structured_still_gets_four_updates() {
    let log = run_persona(&Persona::bundled("refuser").unwrap(), Condition::Structured, &res(), 3).unwrap();
    let story = log.story_record().unwrap();
    assert_eq!(story.stages.iter().filter(|s| s.updated).count(), 4);
}

fn forced(kind: Breakdown) -> SessionLog {
    let mut child = SimChild::new(Persona::cooperative(), 5);
    child.force_breakdown_in(PhaseId::Characters, kind);
    play(child, Condition::Structured, &res(), Arc::new(StubNarrator), 5).unwrap()
}

#[test]
fn interrupted_character_note_gets_a_follow_up() {
    let log = forced(Breakdown::Interrupt);
    let turns: Vec<_> = log.turns().collect();
    let i = turns.iter().position(|t| t.repair == Some(Repair::FollowUp)).expect("follow-up");
    assert_eq!(turns[i].phase, PhaseId::Characters);
    assert!(turns[i - 1].text.ends_with(" and"));
    let rest = turns[i + 1..].iter().find(|t| t.speaker == Speaker::Child).unwrap();
    let joined = format!("{} {}", turns[i - 1].text, rest.text);
    let notes = &log.latest_story().unwrap().character_notes;
    assert!(notes.values().any(|n| *n == joined), "{notes:?} / {joined}");
    assert!(log.is_closed());
}

#[test]
fn garbled_speech_gets_a_clarification() {
    let log = forced(Breakdown::Garble);
    assert_eq!(
        agent_repairs(&log).iter().filter(|r| **r == Repair::Clarification).count(),
        1
    );
    assert!(log.is_closed());
}

#[test]
fn side_talk_is_off_script_and_keeps_the_node() {
    let log = forced(Breakdown::SideTalk);
    let turns: Vec<_> = log.turns().collect();
    let i = turns.iter().position(|t| t.repair == Some(Repair::OffScript)).expect("off-script reply");
    assert!(turns[i].off_script);
    let asked = &turns[i - 1];
    assert!(asked.text.ends_with('?'));
    assert_eq!((turns[i].phase, turns[i].node), (asked.phase, asked.node));
    let prompt = turns[..i - 1].iter().rev().find(|t| t.speaker == Speaker::Agent).unwrap();
    assert!(turns[i].text.ends_with(prompt.text.as_str()));
}

#[test]
fn abandonment_leaves_an_unfinished_log() {
    let mut p = Persona::cooperative();
    p.abandon_at_phase = Some(4);
    let log = run_persona(&p, Condition::Generic, &res(), 2).unwrap();
    assert!(log.is_abandoned());
    assert!(!log.is_finished());
    assert_eq!(count(&log, |r| matches!(r, Record::PhaseEntered { .. })), 4);
}

#[test]
fn every_persona_finishes_both_conditions() {
    let r = res();
    for name in Persona::bundled_names() {
        let p = Persona::bundled(name).unwrap();
        for cond in [Condition::Structured, Condition::Generic] {
            for seed in 0..5 {
                let log = run_persona(&p, cond, &r, seed).unwrap_or_else(|e| panic!("{name} {cond} {seed}: {e}"));
                assert!(log.is_closed(), "{name} {cond} {seed}");
                assert!(audit_session(&log, ScheduleBook::bundled()).unwrap().passed(), "{name} {cond} {seed}");
                for t in log.turns() {
                    assert!(!t.text.contains("##NEXT##") && !t.text.contains("##Done##"));
                }
                for rec in log.records() {
                    if let Record::PhaseCompleted { phase, path, .. } = rec {
                        let declared = enumerate_paths(r.scripts.get(*phase, cond).unwrap()).unwrap();
                        assert!(declared.contains(path), "{name} {cond} {seed} {phase}: {path:?}");
                    }
                }
            }
        }
    }
}

#[test]
fn runs_are_deterministic_per_seed() {
    let r = res();
    let p = Persona::bundled("side-talker").unwrap();
    let a = run_persona(&p, Condition::Structured, &r, 11).unwrap().to_jsonl();
    let b = run_persona(&p, Condition::Structured, &r, 11).unwrap().to_jsonl();
    let c = run_persona(&p, Condition::Structured, &r, 12).unwrap().to_jsonl();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn batch_runs_match_single_runs() {
    let r = res();
    let p = Persona::bundled("garbler").unwrap();
    let logs = run_batch(&p, &[Condition::Generic, Condition::Structured], &r, 3).unwrap();
    assert_eq!(logs.len(), 6);
    assert_eq!(logs[4], run_persona(&p, Condition::Structured, &r, 1).unwrap());
}
