mod common;

use common::{finish_speech, start};
use proptest::prelude::*;
use tinker_core::session::{Speaker, TurnKind, PAUSE_MS};
use tinker_core::{Condition, SessionEvent};

/// Groups fragment timestamps into turns: a new turn starts after every
/// silence of at least the pause threshold.
fn oracle_turns(times: &[u64]) -> Vec<Vec<usize>> {
    let mut turns: Vec<Vec<usize>> = Vec::new();
    for (i, t) in times.iter().enumerate() {
        match turns.last_mut() {
            Some(cur) if t - times[*cur.last().unwrap()] < PAUSE_MS => cur.push(i),
            _ => turns.push(vec![i]),
        }
    }
    turns
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn child_turns_follow_pauses(gaps in prop::collection::vec(0u64..9_000, 1..30)) {
        let mut s = start(Condition::Structured);
        finish_speech(&mut s, 1_000);
        let mut times = vec![2_000u64];
        for g in &gaps[1..] {
            times.push(times.last().unwrap() + g);
        }
        let before = s.state().transcript.len();
        for (i, &t) in times.iter().enumerate() {
            if i > 0 {
                let prev = times[i - 1];
                if t - prev >= PAUSE_MS {
                    // The service's ticker fires when the pause elapses.
                    s.finalize(prev + PAUSE_MS).unwrap();
                    finish_speech(&mut s, prev + PAUSE_MS);
                } else if t > prev {
                    prop_assert!(s.finalize(t - 1).unwrap().is_empty());
                }
            }
            s.ingest(SessionEvent::utterance(t, &format!("part{i}"))).unwrap();
        }
        let last = *times.last().unwrap();
        s.finalize(last + PAUSE_MS).unwrap();

        let got: Vec<String> = s.state().transcript[before..]
            .iter()
            .filter(|t| t.speaker == Speaker::Child && t.kind == TurnKind::Speech)
            .map(|t| t.text.clone())
            .collect();
        let expected: Vec<String> = oracle_turns(&times)
            .iter()
            .map(|g| g.iter().map(|i| format!("part{i}")).collect::<Vec<_>>().join(" "))
            .collect();
        let long_gaps = times.windows(2).filter(|w| w[1] - w[0] >= PAUSE_MS).count();
        prop_assert_eq!(got.len(), long_gaps + 1);
        prop_assert_eq!(got, expected);
        prop_assert_eq!(s.state().suppressed, 0);
    }

    #[test]
    fn nothing_said_during_agent_speech_becomes_a_turn(
        offsets in prop::collection::vec(0u64..10_000, 1..20),
        scans in prop::collection::vec(any::<bool>(), 20),
    ) {
        let mut s = start(Condition::Generic);
        prop_assert!(s.state().speak_lock);
        let turns = s.state().transcript.len();
        let mut t = 0;
        for (i, o) in offsets.iter().enumerate() {
            t += o;
            let e = if scans[i] { SessionEvent::scan(t, "Character:Bird") } else { SessionEvent::utterance(t, "hey") };
            s.ingest(e).unwrap();
            s.finalize(t).unwrap();
        }
        prop_assert_eq!(s.state().transcript.len(), turns);
        prop_assert_eq!(s.state().suppressed, offsets.len() as u64);
    }
}
