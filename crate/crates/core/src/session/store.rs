//! Durable session directories: `events.ndjson`, `code/v{N}.py`,
//! `renders/{id}/view{K}.png` and a `session.json` snapshot.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, TimeZone, Utc};
use thiserror::Error;

use super::event::{Event, Payload};
use super::state::{SessionState, StateError};
use super::types::Actor;

pub const EVENTS_FILE: &str = "events.ndjson";
pub const SNAPSHOT_FILE: &str = "session.json";

#[derive(Debug, Error)]
pub enum SessionError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error("storage error on {path}: {message}")]
    Storage { path: String, message: String },
    #[error("corrupt event log {path} line {line}: {message}")]
    Corrupt { path: String, line: usize, message: String },
    #[error("session directory {0} already holds a session")]
    Exists(String),
}

impl SessionError {
    pub(crate) fn storage(path: &Path, e: impl std::fmt::Display) -> Self {
        SessionError::Storage { path: path.display().to_string(), message: e.to_string() }
    }
}

pub trait Clock: Send {
    fn now(&mut self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&mut self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Advances by a fixed step on every reading; for reproducible logs.
#[derive(Debug, Clone, Copy)]
pub struct StepClock {
    next: DateTime<Utc>,
    step: Duration,
}

impl StepClock {
    pub fn new(start: DateTime<Utc>, step: Duration) -> Self {
        Self { next: start, step }
    }

    /// 2025-01-01T00:00:00Z, one second per reading.
    pub fn fixed() -> Self {
        Self::new(Utc.with_ymd_and_hms(2025, 1, 1, 0, 0, 0).unwrap(), Duration::seconds(1))
    }

    pub fn advance(&mut self, by: Duration) {
        self.next += by;
    }
}

impl Clock for StepClock {
    fn now(&mut self) -> DateTime<Utc> {
        let t = self.next;
        self.next += self.step;
        t
    }
}

pub type Observer = Box<dyn FnMut(&Event) + Send>;

/// Pure in-memory append: the sequence and legality checks without storage.
pub fn append_event(state: &mut SessionState, event: Event) -> Result<(), SessionError> {
    state.apply(event).map_err(SessionError::from)
}

/// Single writer over one session: validates, persists, then folds.
pub struct SessionLog {
    state: SessionState,
    dir: Option<PathBuf>,
    events: Option<File>,
    clock: Box<dyn Clock>,
    observer: Option<Observer>,
}

impl std::fmt::Debug for SessionLog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SessionLog").field("dir", &self.dir).field("last_seq", &self.state.last_seq).finish()
    }
}

impl SessionLog {
    pub fn in_memory(clock: Box<dyn Clock>) -> Self {
        Self { state: SessionState::default(), dir: None, events: None, clock, observer: None }
    }

    /// Starts a new session in `dir`, which must not already hold one.
    pub fn create(dir: &Path, clock: Box<dyn Clock>) -> Result<Self, SessionError> {
        let path = dir.join(EVENTS_FILE);
        if path.exists() {
            return Err(SessionError::Exists(dir.display().to_string()));
        }
        fs::create_dir_all(dir).map_err(|e| SessionError::storage(dir, e))?;
        let file = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| SessionError::storage(&path, e))?;
        Ok(Self { state: SessionState::default(), dir: Some(dir.to_path_buf()), events: Some(file), clock, observer: None })
    }

    /// Reopens an existing session for further appends.
    pub fn reopen(dir: &Path, clock: Box<dyn Clock>) -> Result<Self, SessionError> {
        let state = load_state(dir)?;
        let path = dir.join(EVENTS_FILE);
        let file = OpenOptions::new().append(true).open(&path).map_err(|e| SessionError::storage(&path, e))?;
        Ok(Self { state, dir: Some(dir.to_path_buf()), events: Some(file), clock, observer: None })
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn set_observer(&mut self, observer: Observer) {
        self.observer = Some(observer);
    }

    pub fn now(&mut self) -> DateTime<Utc> {
        self.clock.now()
    }

    /// Stamps and appends a payload with the next sequence number.
    pub fn record(&mut self, actor: Actor, payload: Payload) -> Result<Event, SessionError> {
        let event = Event::new(self.state.next_seq(), self.clock.now(), actor, payload);
        self.append_event(event.clone())?;
        Ok(event)
    }

    /// Appends a fully formed event. On error nothing is written and the
    /// state is unchanged.
    pub fn append_event(&mut self, event: Event) -> Result<(), SessionError> {
        self.state.validate(&event)?;
        if let (Some(dir), Some(file)) = (&self.dir, &mut self.events) {
            if let Payload::CodeSubmitted { version, source, .. } = &event.payload {
                let code_dir = dir.join("code");
                fs::create_dir_all(&code_dir).map_err(|e| SessionError::storage(&code_dir, e))?;
                let path = code_dir.join(format!("v{version}.py"));
                fs::write(&path, source).map_err(|e| SessionError::storage(&path, e))?;
            }
            let path = dir.join(EVENTS_FILE);
            let mut line = event.to_line();
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(|e| SessionError::storage(&path, e))?;
            file.sync_data().map_err(|e| SessionError::storage(&path, e))?;
        }
        self.state.apply(event)?;
        if let Some(dir) = &self.dir {
            write_snapshot(dir, &self.state)?;
        }
        if let Some(observer) = &mut self.observer {
            observer(self.state.event_log.last().expect("just appended"));
        }
        Ok(())
    }
}

fn write_snapshot(dir: &Path, state: &SessionState) -> Result<(), SessionError> {
    let path = dir.join(SNAPSHOT_FILE);
    let tmp = dir.join(format!("{SNAPSHOT_FILE}.tmp"));
    let body = serde_json::to_vec_pretty(state).map_err(|e| SessionError::storage(&path, e))?;
    fs::write(&tmp, body).map_err(|e| SessionError::storage(&tmp, e))?;
    fs::rename(&tmp, &path).map_err(|e| SessionError::storage(&path, e))
}

pub fn read_events(path: &Path) -> Result<Vec<Event>, SessionError> {
    let file = File::open(path).map_err(|e| SessionError::storage(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| SessionError::storage(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| SessionError::Corrupt {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(event);
    }
    Ok(out)
}

/// Rebuilds a session's state by folding its event log.
pub fn load_state(dir: &Path) -> Result<SessionState, SessionError> {
    let events = read_events(&dir.join(EVENTS_FILE))?;
    Ok(SessionState::from_events(&events)?)
}
