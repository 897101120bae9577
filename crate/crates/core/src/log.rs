//! Append-only session record stream, stored as JSON Lines behind a
//! versioned header line.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{StoryDocument, StoryElement};
use crate::graph::{Marker, NodeId, PhaseId};
use crate::narrator::{RawReply, Retry};
use crate::scaffold::Condition;
use crate::session::{SessionConfig, SessionEvent, StoryRecord, Turn};

pub const LOG_FORMAT: &str = "tinker-session-log";
pub const LOG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub version: u32,
    pub session_id: String,
    pub profile_id: String,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Record {
    // Inputs: replaying these reproduces everything else.
    SessionStarted {
        config: SessionConfig,
    },
    Event {
        event: SessionEvent,
    },
    Finalize {
        now: u64,
    },
    NarratorReply {
        phase: PhaseId,
        node: NodeId,
        request: String,
        reply: RawReply,
    },
    // Derived.
    Turn {
        turn: Turn,
    },
    PhaseEntered {
        phase: PhaseId,
        number: usize,
    },
    PhaseCompleted {
        phase: PhaseId,
        path: Vec<NodeId>,
        marker: Marker,
    },
    Suppressed {
        input: String,
    },
    ScanAccepted {
        phase: PhaseId,
        node: NodeId,
        element: StoryElement,
    },
    ScanRebound {
        phase: PhaseId,
        node: NodeId,
        element: StoryElement,
    },
    ScanRejected {
        phase: PhaseId,
        node: NodeId,
        payload: String,
        reason: String,
    },
    MarkerRejected {
        phase: PhaseId,
        node: NodeId,
        retry: Retry,
        error: String,
        attempt: u32,
    },
    StorySnapshot {
        story: StoryDocument,
    },
    SessionFinished,
    SessionClosed {
        story: Option<StoryRecord>,
    },
    SessionAbandoned {
        reason: String,
    },
}

impl Record {
    /// Whether the record feeds replay rather than being produced by it.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Record::SessionStarted { .. } | Record::Event { .. } | Record::Finalize { .. } | Record::NarratorReply { .. }
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub at: u64,
    #[serde(flatten)]
    pub record: Record,
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("record at {at} ms is earlier than the last record at {last} ms")]
    OutOfOrderRecord { at: u64, last: u64 },
    #[error("storage failure: {0}")]
    StorageFailure(String),
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("unsupported log version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionLog {
    header: LogHeader,
    entries: Vec<LogEntry>,
}

impl SessionLog {
    pub fn new(session_id: &str, profile_id: &str, condition: Condition) -> Self {
        SessionLog {
            header: LogHeader {
                format: LOG_FORMAT.to_string(),
                version: LOG_VERSION,
                session_id: session_id.to_string(),
                profile_id: profile_id.to_string(),
                condition,
            },
            entries: Vec::new(),
        }
    }

    pub fn header(&self) -> &LogHeader {
        &self.header
    }

    pub fn session_id(&self) -> &str {
        &self.header.session_id
    }

    pub fn profile_id(&self) -> &str {
        &self.header.profile_id
    }

    pub fn condition(&self) -> Condition {
        self.header.condition
    }

    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last_at(&self) -> Option<u64> {
        self.entries.last().map(|e| e.at)
    }

    pub fn first_at(&self) -> Option<u64> {
        self.entries.first().map(|e| e.at)
    }

    /// Validates ordering and appends; returns the stored entry.
    pub fn append(&mut self, at: u64, record: Record) -> Result<&LogEntry, LogError> {
        if let Some(last) = self.last_at() {
            if at < last {
                return Err(LogError::OutOfOrderRecord { at, last });
            }
        }
        let seq = self.entries.len() as u64;
        self.entries.push(LogEntry { seq, at, record });
        Ok(self.entries.last().expect("just pushed"))
    }

    pub fn records(&self) -> impl DoubleEndedIterator<Item = &Record> {
        self.entries.iter().map(|e| &e.record)
    }

    pub fn turns(&self) -> impl Iterator<Item = &Turn> {
        self.records().filter_map(|r| match r {
            Record::Turn { turn } => Some(turn),
            _ => None,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.records()
            .any(|r| matches!(r, Record::SessionFinished | Record::SessionClosed { .. }))
    }

    pub fn is_closed(&self) -> bool {
        self.records().any(|r| matches!(r, Record::SessionClosed { .. }))
    }

    pub fn is_abandoned(&self) -> bool {
        self.records().any(|r| matches!(r, Record::SessionAbandoned { .. }))
    }

    pub fn story_record(&self) -> Option<&StoryRecord> {
        self.records().find_map(|r| match r {
            Record::SessionClosed { story } => story.as_ref(),
            _ => None,
        })
    }

    pub fn latest_story(&self) -> Option<&StoryDocument> {
        self.records().rev().find_map(|r| match r {
            Record::StorySnapshot { story } => Some(story),
            _ => None,
        })
    }

    pub fn config(&self) -> Option<&SessionConfig> {
        self.records().find_map(|r| match r {
            Record::SessionStarted { config } => Some(config),
            _ => None,
        })
    }

    pub fn header_line(&self) -> String {
        serde_json::to_string(&self.header).expect("header serializes")
    }

    pub fn entry_line(entry: &LogEntry) -> String {
        serde_json::to_string(entry).expect("log entries serialize")
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = self.header_line();
        out.push('\n');
        for e in &self.entries {
            out.push_str(&Self::entry_line(e));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().ok_or(LogError::Format {
            line: 1,
            message: "missing header".into(),
        })?;
        let header: LogHeader = serde_json::from_str(first).map_err(|e| LogError::Format {
            line: 1,
            message: e.to_string(),
        })?;
        if header.format != LOG_FORMAT {
            return Err(LogError::Format {
                line: 1,
                message: format!("not a session log: {:?}", header.format),
            });
        }
        if header.version != LOG_VERSION {
            return Err(LogError::Version(header.version));
        }
        let mut log = SessionLog {
            header,
            entries: Vec::new(),
        };
        for (i, line) in lines {
            let entry: LogEntry = serde_json::from_str(line).map_err(|e| LogError::Format {
                line: i + 1,
                message: e.to_string(),
            })?;
            if entry.seq != log.entries.len() as u64 {
                return Err(LogError::Format {
                    line: i + 1,
                    message: format!("expected seq {}, found {}", log.entries.len(), entry.seq),
                });
            }
            log.append(entry.at, entry.record)?;
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn append_rejects_earlier_timestamps() {
        let mut log = SessionLog::new("s", "p", Condition::Generic);
        log.append(10, Record::Finalize { now: 10 }).unwrap();
        log.append(10, Record::SessionFinished).unwrap();
        assert!(matches!(
            log.append(9, Record::SessionFinished),
            Err(LogError::OutOfOrderRecord { at: 9, last: 10 })
        ));
        assert_eq!(log.len(), 2);
    }

    #[test]
    fn jsonl_round_trip() {
        let mut log = SessionLog::new("s1", "kid", Condition::Structured);
        log.append(0, Record::Suppressed { input: "hi".into() }).unwrap();
        log.append(5, Record::SessionAbandoned { reason: "idle".into() }).unwrap();
        let text = log.to_jsonl();
        assert!(text.lines().next().unwrap().contains("\"version\":1"));
        assert_eq!(SessionLog::from_jsonl(&text).unwrap(), log);
    }

    #[test]
    fn rejects_unknown_versions() {
        let log = SessionLog::new("s1", "kid", Condition::Structured);
        let text = log.to_jsonl().replace("\"version\":1", "\"version\":9");
        assert!(matches!(SessionLog::from_jsonl(&text), Err(LogError::Version(9))));
        assert!(SessionLog::from_jsonl("").is_err());
    }
}
