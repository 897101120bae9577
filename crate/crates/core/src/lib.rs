//! Engine for a voice-and-token co-creative storytelling agent for young
//! children: story model, toy payloads, phase dialogue graphs, question
//! scaffolding, narrator providers, the session loop and its record stream.

pub mod domain;
pub mod graph;
pub mod log;
pub mod narrator;
pub mod scaffold;
pub mod scripts;
pub mod session;
pub mod store;
pub mod token;

pub use domain::{ElementKind, NarrativeStage, StoryDocument, StoryElement};
pub use graph::PhaseId;
pub use log::{Record, SessionLog};
pub use scaffold::{Condition, ScaffoldType};
pub use session::{Resources, Session, SessionConfig, SessionEvent, SessionState, Turn};
