//! Analysis of storytelling session logs: interaction statistics,
//! narrative-function coding of child answers, uptake of those answers in
//! the agent's revised stories, and the caregiver summary.

use thiserror::Error;

pub mod coding;
pub mod distribution;
pub mod replica;
pub mod report;
pub mod stats;
pub mod summary;
pub mod text;
pub mod uptake;

pub use coding::{code_turns, heuristic_functions, CodeSource, CodedTurn, FunctionSet, ManualAnnotations, NarrativeFunction};
pub use distribution::{contribution_distribution, CrossTab};
pub use replica::{replica_corpus, uptake_fixtures, UptakeFixture};
pub use report::{analyze, AnalysisOptions, AnalysisReport};
pub use stats::{descriptive_stats, session_metrics, DescriptiveStats, SessionMetrics, Summary};
pub use summary::{parent_summary, ParentSummary};
pub use uptake::{detect_uptake, UptakeDetector, UptakeLabel, UptakeResult};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no completed sessions to analyse")]
    EmptyCorpus,
    #[error("session {0} has no scaffold metadata")]
    MissingMetadata(String),
    #[error("summary for session {0} is not available until it finishes")]
    SummaryUnavailable(String),
    #[error("invalid narrative function labels {0:?}")]
    InvalidFunctions(String),
    #[error("csv: {0}")]
    Csv(String),
    #[error("io: {0}")]
    Io(String),
}
