mod common;

use common::start;
use tinker_core::log::LogError;
use tinker_core::session::driver::{Driver, SimpleChild};
use tinker_core::session::ReplayError;
use tinker_core::store::{find_story, list_stories, FileStore, MemoryStore, Store, StoreError};
use tinker_core::*;

fn played(id: &str, profile: &str, condition: Condition, started_at: u64) -> Session {
    let config = SessionConfig::new(id, profile, condition, started_at);
    let (mut s, _) = Session::start(config, Resources::bundled(), std::sync::Arc::new(tinker_core::narrator::StubNarrator)).unwrap();
    Driver::new(started_at).play(&mut s, &mut SimpleChild::default()).unwrap();
    s
}

#[test]
fn replay_reproduces_state_and_story() {
    for condition in Condition::ALL {
        let s = played("r1", "kid", condition, 0);
        let replayed = Session::verify_replay(s.log(), Resources::bundled()).unwrap();
        assert_eq!(replayed.state(), s.state());
        let a = serde_json::to_string(s.state()).unwrap();
        let b = serde_json::to_string(replayed.state()).unwrap();
        assert_eq!(a, b);
        assert_eq!(replayed.log().story_record(), s.log().story_record());
    }
}

#[test]
fn replay_survives_the_file_store() {
    let dir = tempfile::tempdir().unwrap();
    let store = FileStore::open(dir.path()).unwrap();
    let s = played("r2", "kid", Condition::Structured, 0);
    store.save(s.log()).unwrap();
    let loaded = store.load("r2").unwrap();
    assert_eq!(&loaded, s.log());
    let replayed = Session::verify_replay(&loaded, Resources::bundled()).unwrap();
    assert_eq!(
        replayed.state().story.compile_story().unwrap(),
        s.state().story.compile_story().unwrap()
    );
}

#[test]
fn replay_detects_tampering() {
    let s = played("r3", "kid", Condition::Generic, 0);
    let text = s.log().to_jsonl().replacen("Brave and kind.", "Shy and quiet.", 1);
    let tampered = SessionLog::from_jsonl(&text).unwrap();
    assert!(matches!(
        Session::verify_replay(&tampered, Resources::bundled()),
        Err(ReplayError::Diverged { .. })
    ));
    let empty = SessionLog::new("x", "kid", Condition::Generic);
    assert!(matches!(Session::replay(&empty, Resources::bundled()), Err(ReplayError::MissingStart)));
}

#[test]
fn partial_sessions_save_incrementally() {
    let store = MemoryStore::new();
    let mut s = start(Condition::Structured);
    store.save(s.log()).unwrap();
    let first = store.load("s1").unwrap().len();
    s.ingest(SessionEvent::speech_ended(3_000)).unwrap();
    s.ingest(SessionEvent::utterance(4_000, "Yes!")).unwrap();
    s.finalize(8_000).unwrap();
    store.save(s.log()).unwrap();
    let loaded = store.load("s1").unwrap();
    assert!(loaded.len() > first);
    assert_eq!(&loaded, s.log());
}

#[test]
fn stores_reject_records_that_go_back_in_time() {
    let dir = tempfile::tempdir().unwrap();
    let file = FileStore::open(dir.path()).unwrap();
    let memory = MemoryStore::new();
    let stores: [&dyn Store; 2] = [&file, &memory];
    for store in stores {
        let mut log = SessionLog::new("t1", "kid", Condition::Generic);
        log.append(100, Record::Finalize { now: 100 }).unwrap();
        store.save(&log).unwrap();
        let bad = tinker_core::log::LogEntry {
            seq: 1,
            at: 50,
            record: Record::SessionFinished,
        };
        let err = store.append(log.header(), &[bad]).unwrap_err();
        assert!(matches!(err, StoreError::Log(LogError::OutOfOrderRecord { at: 50, last: 100 })));
        assert_eq!(store.load("t1").unwrap().len(), 1);
        assert!(matches!(store.load("nope"), Err(StoreError::UnknownSession(_))));
        assert!(matches!(store.load("../etc"), Err(StoreError::InvalidId(_)) | Err(StoreError::UnknownSession(_))));
    }
}

#[test]
fn library_lists_completed_stories_newest_first() {
    let store = MemoryStore::new();
    let old = played("a1", "kid", Condition::Structured, 0);
    let new = played("a2", "kid", Condition::Generic, 10_000_000);
    let other = played("b1", "other", Condition::Generic, 0);
    let mut unfinished = start(Condition::Generic);
    unfinished.ingest(SessionEvent::speech_ended(10)).unwrap();
    for s in [&old, &new, &other] {
        store.save(s.log()).unwrap();
    }
    let mut log = unfinished.log().clone();
    // Reuse the profile under a fresh id.
    let text = log.to_jsonl().replace("\"s1\"", "\"u1\"");
    log = SessionLog::from_jsonl(&text).unwrap();
    store.save(&log).unwrap();

    let stories = list_stories(&store, "kid").unwrap();
    let ids: Vec<&str> = stories.iter().map(|s| s.story_id.as_str()).collect();
    assert_eq!(ids, ["a2-story", "a1-story"]);
    assert!(matches!(list_stories(&store, "ghost"), Err(StoreError::UnknownProfile(_))));
    let found = find_story(&store, "b1-story").unwrap().unwrap();
    assert_eq!(found.profile_id, "other");
    assert!(find_story(&store, "zzz").unwrap().is_none());
}
