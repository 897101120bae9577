//! The packaged replica corpus: synthetic child answers labelled so that
//! the framing × function proportions mirror the published study.

use std::path::Path;

use serde::Deserialize;
use tinker_core::graph::{NodeId, PhaseId};
use tinker_core::ScaffoldType;

use crate::coding::{CodeSource, CodedTurn, FunctionSet};
use crate::AnalysisError;

const REPLICA_CSV: &str = include_str!("../data/replica_corpus.csv");

#[derive(Debug, Deserialize)]
struct Row {
    session_id: String,
    turn_index: usize,
    phase: PhaseId,
    node: NodeId,
    framing: ScaffoldType,
    text: String,
    functions: FunctionSet,
}

/// Reads coded turns from CSV with columns
/// `session_id,turn_index,phase,node,framing,text,functions`.
pub fn read_coded_csv(reader: impl std::io::Read) -> Result<Vec<CodedTurn>, AnalysisError> {
    csv::Reader::from_reader(reader)
        .deserialize::<Row>()
        .map(|r| {
            let r = r.map_err(|e| AnalysisError::Csv(e.to_string()))?;
            Ok(CodedTurn {
                session_id: r.session_id,
                turn_index: r.turn_index,
                phase: r.phase,
                node: r.node,
                framing: r.framing,
                text: r.text,
                functions: r.functions,
                source: CodeSource::Manual,
            })
        })
        .collect()
}

pub fn load_coded_csv(path: &Path) -> Result<Vec<CodedTurn>, AnalysisError> {
    let file = std::fs::File::open(path).map_err(|e| AnalysisError::Io(format!("{}: {e}", path.display())))?;
    read_coded_csv(file)
}

pub fn replica_corpus() -> Vec<CodedTurn> {
    read_coded_csv(REPLICA_CSV.as_bytes()).expect("bundled replica corpus parses")
}

const UPTAKE_FIXTURES: &str = include_str!("../data/uptake_fixtures.toml");

/// A draft/update pair with the answers given in between and the label a
/// human coder assigned.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct UptakeFixture {
    pub name: String,
    pub expected: crate::uptake::UptakeLabel,
    pub draft: String,
    pub update: String,
    pub contributions: Vec<String>,
}

pub fn uptake_fixtures() -> Vec<UptakeFixture> {
    #[derive(Deserialize)]
    struct File {
        fixture: Vec<UptakeFixture>,
    }
    toml::from_str::<File>(UPTAKE_FIXTURES).expect("bundled fixtures parse").fixture
}
