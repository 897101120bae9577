//! Service and tooling around the storytelling engine: configuration, the
//! HTTP API used by the play UI, and helpers shared by the CLI.

pub mod config;
pub mod service;

pub use config::{Config, ConfigError};
pub use service::{router, spawn_ticker, AppState, Clock, ManualClock, SessionLimits, SystemClock};
