//! Session log storage: an in-memory store for tests and a directory of
//! JSON Lines files, one per session.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use thiserror::Error;

use crate::log::{LogEntry, LogError, LogHeader, SessionLog};
use crate::session::StoryRecord;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown session {0:?}")]
    UnknownSession(String),
    #[error("unknown profile {0:?}")]
    UnknownProfile(String),
    #[error("invalid session id {0:?}")]
    InvalidId(String),
    #[error("header does not match the stored log for {0:?}")]
    HeaderMismatch(String),
    #[error(transparent)]
    Log(#[from] LogError),
}

fn storage(e: impl std::fmt::Display) -> StoreError {
    StoreError::Log(LogError::StorageFailure(e.to_string()))
}

fn check_id(id: &str) -> Result<(), StoreError> {
    let ok = !id.is_empty() && id.len() <= 128 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
    if ok {
        Ok(())
    } else {
        Err(StoreError::InvalidId(id.to_string()))
    }
}

pub trait Store: Send + Sync {
    /// Appends entries to a session's stream, creating it if needed.
    /// Entries must continue the stored sequence and not go back in time.
    fn append(&self, header: &LogHeader, entries: &[LogEntry]) -> Result<(), StoreError>;
    fn load(&self, session_id: &str) -> Result<SessionLog, StoreError>;
    fn session_ids(&self) -> Result<Vec<String>, StoreError>;

    /// Writes whatever part of `log` is not stored yet.
    fn save(&self, log: &SessionLog) -> Result<(), StoreError> {
        let stored = match self.load(log.session_id()) {
            Ok(l) => l.len(),
            Err(StoreError::UnknownSession(_)) => 0,
            Err(e) => return Err(e),
        };
        self.append(log.header(), &log.entries()[stored.min(log.len())..])
    }
}

fn check_continuation(existing: Option<&SessionLog>, header: &LogHeader, entries: &[LogEntry]) -> Result<(), StoreError> {
    let (mut next_seq, mut last_at) = match existing {
        Some(log) => {
            if log.header() != header {
                return Err(StoreError::HeaderMismatch(header.session_id.clone()));
            }
            (log.len() as u64, log.last_at())
        }
        None => (0, None),
    };
    for e in entries {
        if e.seq != next_seq {
            return Err(StoreError::Log(LogError::Format {
                line: next_seq as usize + 2,
                message: format!("expected seq {next_seq}, got {}", e.seq),
            }));
        }
        if let Some(last) = last_at {
            if e.at < last {
                return Err(StoreError::Log(LogError::OutOfOrderRecord { at: e.at, last }));
            }
        }
        next_seq += 1;
        last_at = Some(e.at);
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    logs: Mutex<BTreeMap<String, SessionLog>>,
}

impl MemoryStore {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Store for MemoryStore {
    fn append(&self, header: &LogHeader, entries: &[LogEntry]) -> Result<(), StoreError> {
        check_id(&header.session_id)?;
        let mut logs = self.logs.lock().map_err(storage)?;
        check_continuation(logs.get(&header.session_id), header, entries)?;
        let log = logs
            .entry(header.session_id.clone())
            .or_insert_with(|| SessionLog::new(&header.session_id, &header.profile_id, header.condition));
        for e in entries {
            log.append(e.at, e.record.clone())?;
        }
        Ok(())
    }

    fn load(&self, session_id: &str) -> Result<SessionLog, StoreError> {
        let logs = self.logs.lock().map_err(storage)?;
        logs.get(session_id)
            .cloned()
            .ok_or_else(|| StoreError::UnknownSession(session_id.to_string()))
    }

    fn session_ids(&self) -> Result<Vec<String>, StoreError> {
        Ok(self.logs.lock().map_err(storage)?.keys().cloned().collect())
    }
}

/// One `<session-id>.jsonl` file per session under a directory.
#[derive(Debug)]
pub struct FileStore {
    dir: PathBuf,
    write: Mutex<()>,
}

impl FileStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(storage)?;
        Ok(FileStore {
            dir,
            write: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, session_id: &str) -> PathBuf {
        self.dir.join(format!("{session_id}.jsonl"))
    }
}

impl Store for FileStore {
    fn append(&self, header: &LogHeader, entries: &[LogEntry]) -> Result<(), StoreError> {
        check_id(&header.session_id)?;
        let _guard = self.write.lock().map_err(storage)?;
        let path = self.path_for(&header.session_id);
        let existing = match self.load(&header.session_id) {
            Ok(l) => Some(l),
            Err(StoreError::UnknownSession(_)) => None,
            Err(e) => return Err(e),
        };
        check_continuation(existing.as_ref(), header, entries)?;
        let mut buf = String::new();
        if existing.is_none() {
            buf.push_str(&serde_json::to_string(header).map_err(storage)?);
            buf.push('\n');
        }
        for e in entries {
            buf.push_str(&SessionLog::entry_line(e));
            buf.push('\n');
        }
        let mut file = OpenOptions::new().create(true).append(true).open(&path).map_err(storage)?;
        file.write_all(buf.as_bytes()).map_err(storage)?;
        file.sync_data().map_err(storage)?;
        Ok(())
    }

    fn load(&self, session_id: &str) -> Result<SessionLog, StoreError> {
        check_id(session_id)?;
        let path = self.path_for(session_id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownSession(session_id.to_string()))
            }
            Err(e) => return Err(storage(e)),
        };
        Ok(SessionLog::from_jsonl(&text)?)
    }

    fn session_ids(&self) -> Result<Vec<String>, StoreError> {
        let mut ids: Vec<String> = fs::read_dir(&self.dir)
            .map_err(storage)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().to_string_lossy().into_owned();
                name.strip_suffix(".jsonl").map(str::to_string)
            })
            .collect();
        ids.sort();
        Ok(ids)
    }
}

/// Completed stories for a profile, newest first.
pub fn list_stories(store: &dyn Store, profile_id: &str) -> Result<Vec<StoryRecord>, StoreError> {
    let mut known = false;
    let mut stories = Vec::new();
    for id in store.session_ids()? {
        let log = store.load(&id)?;
        if log.profile_id() != profile_id {
            continue;
        }
        known = true;
        if let Some(story) = log.story_record() {
            stories.push(story.clone());
        }
    }
    if !known {
        return Err(StoreError::UnknownProfile(profile_id.to_string()));
    }
    stories.sort_by(|a, b| b.created_at.cmp(&a.created_at).then_with(|| a.story_id.cmp(&b.story_id)));
    Ok(stories)
}

/// The story with `story_id`, searched across all sessions.
pub fn find_story(store: &dyn Store, story_id: &str) -> Result<Option<StoryRecord>, StoreError> {
    for id in store.session_ids()? {
        if let Some(story) = store.load(&id)?.story_record() {
            if story.story_id == story_id {
                return Ok(Some(story.clone()));
            }
        }
    }
    Ok(None)
}
