//! Live sessions inside the service.
//!
//! Each session's orchestrator lives on its own thread and takes commands
//! from a queue, so mutations of one session are serialized while HTTP
//! handlers stay responsive. Every appended event is folded into a shadow
//! state that handlers and event streams read without touching the
//! orchestrator.

use std::collections::{BTreeMap, VecDeque};
use std::path::PathBuf;
use std::sync::{mpsc, Arc, Mutex, RwLock};

use futures::Stream;
use meshwright_core::orchestrator::Orchestrator;
use meshwright_core::{append_event, load_state, Event, Phase, SessionLog, SessionState, SystemClock};
use thiserror::Error;
use tokio::sync::{oneshot, watch};

use crate::config::override_session;
use crate::runtime_env::{session_dirs, Environment};
use crate::summary::SessionSummary;

#[derive(Debug, Error)]
pub enum HostError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error(transparent)]
    Internal(#[from] anyhow::Error),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Progress {
    pub last_seq: u64,
    /// Commands queued or running.
    pub pending: usize,
}

enum Command {
    Run,
    Refine(String),
    Terminate(oneshot::Sender<Result<Phase, String>>),
}

struct Shared {
    shadow: Mutex<SessionState>,
    progress: watch::Sender<Progress>,
}

impl Shared {
    fn observe(&self, event: &Event) {
        let seq = {
            let mut s = self.shadow.lock().expect("shadow state poisoned");
            if let Err(e) = append_event(&mut s, event.clone()) {
                tracing::error!(seq = event.seq, "shadow state rejected an event: {e}");
            }
            s.last_seq
        };
        self.progress.send_modify(|p| p.last_seq = seq);
    }
}

pub struct SessionHandle {
    pub id: String,
    pub dir: PathBuf,
    shared: Arc<Shared>,
    commands: Mutex<Option<mpsc::Sender<Command>>>,
}

impl SessionHandle {
    fn new(id: String, dir: PathBuf, state: SessionState) -> Self {
        let progress = Progress { last_seq: state.last_seq, pending: 0 };
        let shared = Arc::new(Shared { shadow: Mutex::new(state), progress: watch::Sender::new(progress) });
        Self { id, dir, shared, commands: Mutex::new(None) }
    }

    pub fn state(&self) -> SessionState {
        self.shared.shadow.lock().expect("shadow state poisoned").clone()
    }

    pub fn with_state<T>(&self, f: impl FnOnce(&SessionState) -> T) -> T {
        f(&self.shared.shadow.lock().expect("shadow state poisoned"))
    }

    pub fn summary(&self) -> SessionSummary {
        self.with_state(SessionSummary::of)
    }

    pub fn progress(&self) -> Progress {
        *self.shared.progress.borrow()
    }

    fn observer(&self) -> meshwright_core::Observer {
        let shared = self.shared.clone();
        Box::new(move |e: &Event| shared.observe(e))
    }

    fn attach(&self, orchestrator: Orchestrator) -> mpsc::Sender<Command> {
        let (tx, rx) = mpsc::channel();
        let shared = self.shared.clone();
        let id = self.id.clone();
        std::thread::Builder::new()
            .name(format!("session-{id}"))
            .spawn(move || run_commands(id, orchestrator, rx, shared))
            .expect("spawning a session thread");
        tx
    }

    fn send(&self, env: &Environment, command: Command) -> Result<(), HostError> {
        let mut slot = self.commands.lock().expect("command queue poisoned");
        if slot.is_none() {
            // Sessions loaded from disk get their orchestrator on first use.
            let mut log = SessionLog::reopen(&self.dir, Box::new(SystemClock)).map_err(anyhow::Error::from)?;
            log.set_observer(self.observer());
            *slot = Some(self.attach(env.orchestrator(log)?));
        }
        self.shared.progress.send_modify(|p| p.pending += 1);
        if slot.as_ref().expect("queue attached above").send(command).is_err() {
            self.shared.progress.send_modify(|p| p.pending -= 1);
            return Err(HostError::Internal(anyhow::anyhow!("session {} thread has stopped", self.id)));
        }
        Ok(())
    }

    /// Resolves once no command is queued or running.
    pub async fn idle(&self) -> Progress {
        let mut rx = self.shared.progress.subscribe();
        let p = rx.wait_for(|p| p.pending == 0).await.map(|p| *p);
        p.unwrap_or_else(|_| self.progress())
    }

    /// Events from `from_seq` on, then new ones as they are appended. Ends
    /// once the session is closed and has nothing left to do.
    pub fn stream(&self, from_seq: u64) -> impl Stream<Item = Event> + Send + 'static {
        struct Cursor {
            shared: Arc<Shared>,
            rx: watch::Receiver<Progress>,
            next: u64,
            buffer: VecDeque<Event>,
        }
        let cursor = Cursor {
            shared: self.shared.clone(),
            rx: self.shared.progress.subscribe(),
            next: from_seq.max(1),
            buffer: VecDeque::new(),
        };
        futures::stream::unfold(cursor, |mut c| async move {
            loop {
                if let Some(e) = c.buffer.pop_front() {
                    c.next = e.seq + 1;
                    return Some((e, c));
                }
                let progress = *c.rx.borrow_and_update();
                let closed = {
                    let s = c.shared.shadow.lock().expect("shadow state poisoned");
                    let start = s.event_log.partition_point(|e| e.seq < c.next);
                    c.buffer.extend(s.event_log[start..].iter().cloned());
                    s.phase.is_terminal() && progress.pending == 0
                };
                if !c.buffer.is_empty() {
                    continue;
                }
                if closed || c.rx.changed().await.is_err() {
                    return None;
                }
            }
        })
    }
}

fn run_commands(id: String, mut orch: Orchestrator, rx: mpsc::Receiver<Command>, shared: Arc<Shared>) {
    for command in rx {
        match command {
            Command::Run => {
                if let Err(e) = orch.run_until_input() {
                    tracing::error!(session = %id, "run stopped: {e}");
                }
            }
            Command::Refine(text) => {
                if orch.awaiting_input() {
                    if let Err(e) = orch.run_phase3_step(&text) {
                        tracing::error!(session = %id, "refinement stopped: {e}");
                    }
                } else {
                    tracing::warn!(session = %id, phase = %orch.state().phase, "dropping refinement; session is not waiting");
                }
            }
            Command::Terminate(reply) => {
                let result = orch.terminate().map(|s| s.phase).map_err(|e| e.to_string());
                let _ = reply.send(result);
            }
        }
        shared.progress.send_modify(|p| p.pending -= 1);
    }
}

pub fn new_session_id() -> String {
    format!("s{}", &uuid::Uuid::new_v4().simple().to_string()[..12])
}

pub struct SessionHost {
    pub env: Arc<Environment>,
    sessions: RwLock<BTreeMap<String, Arc<SessionHandle>>>,
}

impl SessionHost {
    /// Picks up every session already under `data_dir`; interrupted ones
    /// resume where their log stops.
    pub fn open(env: Environment) -> anyhow::Result<Self> {
        std::fs::create_dir_all(&env.config.data_dir)?;
        let host = Self { env: Arc::new(env), sessions: RwLock::new(BTreeMap::new()) };
        for dir in session_dirs(&host.env.config.data_dir) {
            let state = match load_state(&dir) {
                Ok(s) if s.is_started() => s,
                Ok(_) => continue,
                Err(e) => {
                    tracing::warn!(dir = %dir.display(), "skipping unreadable session: {e}");
                    continue;
                }
            };
            let id = dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            let resume = host.env.config.resume_interrupted && !state.phase.is_terminal() && !state.awaiting_input;
            let handle = Arc::new(SessionHandle::new(id.clone(), dir, state));
            if resume {
                tracing::info!(session = %id, "resuming interrupted session");
                if let Err(e) = handle.send(&host.env, Command::Run) {
                    tracing::error!(session = %id, "cannot resume: {e}");
                }
            }
            host.sessions.write().expect("session table poisoned").insert(id, handle);
        }
        Ok(host)
    }

    pub fn get(&self, id: &str) -> Result<Arc<SessionHandle>, HostError> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| HostError::NotFound(format!("no session {id:?}")))
    }

    pub fn list(&self) -> Vec<SessionSummary> {
        self.sessions.read().expect("session table poisoned").values().map(|h| h.summary()).collect()
    }

    /// Writes the opening event and starts phases 1–2 in the background.
    /// Blocking: starting the scene runtime may launch Blender.
    pub fn create(&self, goal: &str, overrides: &serde_json::Value) -> Result<Arc<SessionHandle>, HostError> {
        if goal.trim().is_empty() {
            return Err(HostError::Unprocessable("goal is empty".into()));
        }
        let config = override_session(&self.env.config.session, overrides).map_err(|e| HostError::Unprocessable(e.to_string()))?;
        let id = new_session_id();
        let dir = self.env.session_dir(&id);
        let handle = Arc::new(SessionHandle::new(id.clone(), dir.clone(), SessionState::default()));
        let mut log = SessionLog::create(&dir, Box::new(SystemClock)).map_err(anyhow::Error::from)?;
        log.set_observer(handle.observer());
        let mut orch = self.env.orchestrator(log)?;
        orch.start(&id, goal, config).map_err(anyhow::Error::from)?;
        *handle.commands.lock().expect("command queue poisoned") = Some(handle.attach(orch));
        self.sessions.write().expect("session table poisoned").insert(id, handle.clone());
        handle.send(&self.env, Command::Run)?;
        Ok(handle)
    }

    pub fn refine(&self, id: &str, text: &str) -> Result<(), HostError> {
        let handle = self.get(id)?;
        if text.trim().is_empty() {
            return Err(HostError::Unprocessable("text is empty".into()));
        }
        let phase = handle.with_state(|s| s.phase);
        if phase != Phase::UserRefine {
            return Err(HostError::Conflict(format!("session is in {phase}; refinements are accepted in UserRefine")));
        }
        handle.send(&self.env, Command::Refine(text.to_owned()))
    }

    /// Ends the session once queued work is done; a no-op on closed sessions.
    pub async fn terminate(&self, id: &str) -> Result<Phase, HostError> {
        let handle = self.get(id)?;
        let phase = handle.with_state(|s| s.phase);
        if phase.is_terminal() {
            return Ok(phase);
        }
        if phase != Phase::UserRefine {
            return Err(HostError::Conflict(format!("session is in {phase}; it can be terminated once it waits for input")));
        }
        let (tx, rx) = oneshot::channel();
        handle.send(&self.env, Command::Terminate(tx))?;
        match rx.await {
            Ok(Ok(phase)) => Ok(phase),
            Ok(Err(e)) => Err(HostError::Conflict(e)),
            Err(_) => Err(HostError::Internal(anyhow::anyhow!("session {id} thread stopped"))),
        }
    }
}
