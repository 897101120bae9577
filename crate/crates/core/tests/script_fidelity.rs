use std::collections::BTreeSet;
use std::time::Instant;

use tinker_core::graph::{enumerate_paths, validate_script, PhaseId};
use tinker_core::scripts::ScriptSet;
use tinker_core::{Condition, NarrativeStage};

#[test]
fn bundled_scripts_validate_clean() {
    let set = ScriptSet::bundled();
    assert_eq!(set.iter().count(), 13);
    assert!(set.validate().is_empty(), "{:?}", set.validate());
    for c in Condition::ALL {
        assert!(set.missing_phases(c).is_empty());
    }
}

#[test]
fn enumerated_paths_equal_declared_paths() {
    let started = Instant::now();
    for named in ScriptSet::bundled().iter() {
        let script = &named.script;
        let found: BTreeSet<Vec<char>> = enumerate_paths(script).unwrap().into_iter().collect();
        let declared: BTreeSet<Vec<char>> = script.declared_paths.iter().map(|p| p.nodes.clone()).collect();
        assert_eq!(found, declared, "{}", named.file);
        assert!(validate_script(script).is_empty(), "{}", named.file);
    }
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn path_counts_per_phase() {
    let set = ScriptSet::bundled();
    let count = |phase, cond| enumerate_paths(set.get(phase, cond).unwrap()).unwrap().len();
    let start = PhaseId::Stage(NarrativeStage::Start);
    assert_eq!(count(start, Condition::Structured), 1);
    assert_eq!(count(start, Condition::Generic), 2);
    assert_eq!(count(PhaseId::Practice, Condition::Structured), 2);
    assert_eq!(count(PhaseId::Characters, Condition::Generic), 1);
    assert_eq!(count(PhaseId::PostStory, Condition::Structured), 1);
}

#[test]
fn structured_start_path_is_the_linear_walk() {
    let set = ScriptSet::bundled();
    let script = set.get(PhaseId::Stage(NarrativeStage::Start), Condition::Structured).unwrap();
    let paths = enumerate_paths(script).unwrap();
    let ids: String = paths[0].iter().collect();
    assert_eq!(ids, "ABCDEFGHI");
    let generic = set.get(PhaseId::Stage(NarrativeStage::Start), Condition::Generic).unwrap();
    let mut ids: Vec<String> = enumerate_paths(generic).unwrap().iter().map(|p| p.iter().collect()).collect();
    ids.sort();
    assert_eq!(ids, ["ABCDEFG", "ABCDEFGH"]);
}

#[test]
fn question_nodes_match_schedule_lengths() {
    let set = ScriptSet::bundled();
    let book = tinker_core::scaffold::ScheduleBook::bundled();
    for c in Condition::ALL {
        for phase in tinker_core::graph::SESSION_PHASES {
            let Some(slot) = tinker_core::scaffold::ScheduleSlot::for_phase(phase) else {
                continue;
            };
            let script = set.get(phase, c).unwrap();
            assert_eq!(script.question_nodes().count(), book.scaffolds(c, slot).len(), "{c:?} {phase}");
        }
    }
}
