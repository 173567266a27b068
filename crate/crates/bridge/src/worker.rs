//! Supervision of the headless Blender worker process.
//!
//! The worker is launched as
//! `<blender> --background --python <shim> -- --handshake-token <t>` and must
//! print its handshake line within the startup timeout. Any fault on a request
//! (timeout, exit, unparseable line, id mismatch) kills the process and starts
//! a fresh one before the fault is reported.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command as Process, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use thiserror::Error;
use tracing::{debug, warn};

use crate::camera::{BBox, CameraPlan};
use crate::outcome::{ErrorKind, ExecutionError, ExecutionOutcome};
use crate::protocol::{decode_response, encode_line, Command, WireRequest, WireResponse, HANDSHAKE_ID};
use crate::runtime::{missing_views, RenderError, RenderOutput, SceneRuntime};

#[derive(Debug, Clone)]
pub struct WorkerConfig {
    /// Blender executable, or the fake worker binary in tests.
    pub executable: PathBuf,
    /// Shim script passed via `--python`.
    pub shim: PathBuf,
    pub handshake_token: String,
    pub startup_timeout: Duration,
    /// Timeout for ping, reset and render requests.
    pub request_timeout: Duration,
    pub env: Vec<(String, String)>,
}

impl WorkerConfig {
    pub fn new(executable: impl Into<PathBuf>, shim: impl Into<PathBuf>) -> Self {
        Self {
            executable: executable.into(),
            shim: shim.into(),
            handshake_token: format!("mw-{}", std::process::id()),
            startup_timeout: Duration::from_secs(60),
            request_timeout: Duration::from_secs(300),
            env: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WorkerState {
    Starting,
    Ready,
    Busy,
    Dead,
}

#[derive(Debug, Error)]
pub enum WorkerStartError {
    #[error("cannot launch {path}: {source}")]
    Launch { path: PathBuf, source: std::io::Error },
    #[error("worker did not complete the handshake within {0:?}")]
    HandshakeTimeout(Duration),
    #[error("worker exited during handshake; stderr: {stderr}")]
    Exited { stderr: String },
    #[error("bad handshake: {0}")]
    BadHandshake(String),
}

enum Fault {
    Timeout,
    Crash(String),
    Protocol(String),
}

impl Fault {
    fn kind(&self) -> ErrorKind {
        match self {
            Fault::Timeout => ErrorKind::Timeout,
            Fault::Crash(_) => ErrorKind::WorkerCrash,
            Fault::Protocol(_) => ErrorKind::ProtocolError,
        }
    }

    fn message(&self, timeout: Duration) -> String {
        match self {
            Fault::Timeout => format!("no response within {} ms", timeout.as_millis()),
            Fault::Crash(stderr) if stderr.is_empty() => "worker exited during request".to_owned(),
            Fault::Crash(stderr) => format!("worker exited during request; stderr: {stderr}"),
            Fault::Protocol(m) => m.clone(),
        }
    }
}

struct LiveProcess {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<String>>,
    stderr_thread: Option<JoinHandle<()>>,
}

impl LiveProcess {
    fn kill(mut self) -> String {
        let _ = self.child.kill();
        let _ = self.child.wait();
        drop(self.stdin);
        if let Some(t) = self.stderr_thread.take() {
            let _ = t.join();
        }
        let text = self.stderr.lock().map(|s| s.clone()).unwrap_or_default();
        text.trim().to_owned()
    }
}

/// A supervised worker. Restarts replace the process; a dead process is never reused.
pub struct Worker {
    config: WorkerConfig,
    process: Option<LiveProcess>,
    state: WorkerState,
    blender_version: String,
    next_id: i64,
    bbox: BBox,
    restarts: usize,
}

pub fn start_worker(config: WorkerConfig) -> Result<Worker, WorkerStartError> {
    let mut worker = Worker {
        config,
        process: None,
        state: WorkerState::Starting,
        blender_version: String::new(),
        next_id: 1,
        bbox: BBox::EMPTY,
        restarts: 0,
    };
    worker.launch()?;
    Ok(worker)
}

fn spawn(config: &WorkerConfig) -> Result<LiveProcess, WorkerStartError> {
    let mut cmd = Process::new(&config.executable);
    cmd.arg("--background")
        .arg("--python")
        .arg(&config.shim)
        .arg("--")
        .arg("--handshake-token")
        .arg(&config.handshake_token)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    for (k, v) in &config.env {
        cmd.env(k, v);
    }
    let mut child = cmd
        .spawn()
        .map_err(|source| WorkerStartError::Launch { path: config.executable.clone(), source })?;
    let stdin = child.stdin.take().expect("piped stdin");
    let stdout = child.stdout.take().expect("piped stdout");
    let mut stderr_pipe = child.stderr.take().expect("piped stderr");

    let (tx, rx) = mpsc::channel();
    std::thread::spawn(move || {
        let mut reader = BufReader::new(stdout);
        loop {
            let mut line = String::new();
            match reader.read_line(&mut line) {
                Ok(0) => break,
                Ok(_) => {
                    if tx.send(Ok(line)).is_err() {
                        break;
                    }
                }
                Err(e) => {
                    let _ = tx.send(Err(e));
                    break;
                }
            }
        }
    });

    let stderr = Arc::new(Mutex::new(String::new()));
    let sink = Arc::clone(&stderr);
    let stderr_thread = std::thread::spawn(move || {
        let mut buf = [0u8; 4096];
        while let Ok(n) = stderr_pipe.read(&mut buf) {
            if n == 0 {
                break;
            }
            if let Ok(mut s) = sink.lock() {
                s.push_str(&String::from_utf8_lossy(&buf[..n]));
                // keep the tail only
                if s.len() > 64 * 1024 {
                    let cut = s.len() - 32 * 1024;
                    let cut = (cut..s.len()).find(|i| s.is_char_boundary(*i)).unwrap_or(s.len());
                    s.drain(..cut);
                }
            }
        }
    });

    Ok(LiveProcess { child, stdin, lines: rx, stderr, stderr_thread: Some(stderr_thread) })
}

impl Worker {
    pub fn state(&self) -> WorkerState {
        self.state
    }

    pub fn restarts(&self) -> usize {
        self.restarts
    }

    pub fn config(&self) -> &WorkerConfig {
        &self.config
    }

    fn launch(&mut self) -> Result<(), WorkerStartError> {
        self.state = WorkerState::Starting;
        let proc = spawn(&self.config)?;
        let deadline = Instant::now() + self.config.startup_timeout;
        let handshake = match recv_line(&proc.lines, deadline) {
            Ok(line) => line,
            Err(Fault::Timeout) => {
                proc.kill();
                self.state = WorkerState::Dead;
                return Err(WorkerStartError::HandshakeTimeout(self.config.startup_timeout));
            }
            Err(_) => {
                let stderr = proc.kill();
                self.state = WorkerState::Dead;
                return Err(WorkerStartError::Exited { stderr });
            }
        };
        let resp = match decode_response(&handshake) {
            Ok(r) => r,
            Err(e) => {
                proc.kill();
                self.state = WorkerState::Dead;
                return Err(WorkerStartError::BadHandshake(format!("{e}: {}", handshake.trim())));
            }
        };
        let data = resp.data.unwrap_or_default();
        if resp.id != HANDSHAKE_ID || data.handshake.as_deref() != Some(self.config.handshake_token.as_str()) {
            proc.kill();
            self.state = WorkerState::Dead;
            return Err(WorkerStartError::BadHandshake("token mismatch".into()));
        }
        self.blender_version = data.blender_version.unwrap_or_default();
        self.process = Some(proc);
        self.state = WorkerState::Ready;

        // Confirm the request loop is live.
        let timeout = self.config.startup_timeout;
        match self.request(Command::Ping, timeout) {
            Ok(resp) if resp.ok => {
                debug!(version = %self.blender_version, "worker ready");
                Ok(())
            }
            Ok(resp) => {
                self.state = WorkerState::Dead;
                let stderr = self.process.take().map(LiveProcess::kill).unwrap_or_default();
                Err(WorkerStartError::BadHandshake(format!("ping rejected: {:?}; stderr: {stderr}", resp.error)))
            }
            Err(Fault::Timeout) => {
                self.kill();
                Err(WorkerStartError::HandshakeTimeout(timeout))
            }
            Err(_) => {
                let stderr = self.process.take().map(LiveProcess::kill).unwrap_or_default();
                self.state = WorkerState::Dead;
                Err(WorkerStartError::Exited { stderr })
            }
        }
    }

    fn kill(&mut self) -> String {
        self.state = WorkerState::Dead;
        self.process.take().map(LiveProcess::kill).unwrap_or_default()
    }

    /// Kills the current process (if any) and starts a fresh one.
    pub fn restart(&mut self) -> Result<(), WorkerStartError> {
        let stderr = self.kill();
        if !stderr.is_empty() {
            debug!(%stderr, "stderr of replaced worker");
        }
        self.restarts += 1;
        self.bbox = BBox::EMPTY;
        self.launch()
    }

    fn request(&mut self, command: Command, timeout: Duration) -> Result<WireResponse, Fault> {
        let id = self.next_id;
        self.next_id += 1;
        let Some(proc) = self.process.as_mut() else {
            return Err(Fault::Crash("worker is not running".into()));
        };
        self.state = WorkerState::Busy;
        let line = encode_line(&WireRequest { id, command });
        if proc.stdin.write_all(line.as_bytes()).and_then(|_| proc.stdin.flush()).is_err() {
            return Err(Fault::Crash(String::new()));
        }
        let raw = recv_line(&proc.lines, Instant::now() + timeout)?;
        let resp = decode_response(&raw).map_err(|e| Fault::Protocol(format!("malformed response line: {e}")))?;
        if resp.id != id {
            return Err(Fault::Protocol(format!("response id {} does not match request id {id}", resp.id)));
        }
        self.state = WorkerState::Ready;
        if let Some(b) = resp.data.as_ref().and_then(|d| d.bbox) {
            self.bbox = b;
        }
        Ok(resp)
    }

    /// Sends one request; on any fault the worker is restarted before returning.
    fn checked_request(&mut self, command: Command, timeout: Duration) -> Result<WireResponse, (ErrorKind, String)> {
        if self.state == WorkerState::Dead {
            if let Err(e) = self.restart() {
                return Err((ErrorKind::WorkerCrash, format!("worker restart failed: {e}")));
            }
        }
        match self.request(command, timeout) {
            Ok(resp) => Ok(resp),
            Err(fault) => {
                let mut message = fault.message(timeout);
                let stderr = self.kill();
                if let Fault::Crash(_) = fault {
                    if !stderr.is_empty() {
                        message = format!("worker exited during request; stderr: {stderr}");
                    }
                }
                warn!(kind = fault.kind().as_str(), %message, "worker fault, restarting");
                self.restarts += 1;
                self.bbox = BBox::EMPTY;
                if let Err(e) = self.launch() {
                    message.push_str(&format!("; restart failed: {e}"));
                }
                Err((fault.kind(), message))
            }
        }
    }

    pub fn execute(&mut self, source: &str, timeout: Duration) -> ExecutionOutcome {
        let started = Instant::now();
        let result = self.checked_request(Command::Exec { code: source.to_owned() }, timeout);
        let elapsed = started.elapsed().as_millis() as u64;
        match result {
            Ok(resp) => match resp.error {
                None if resp.ok => ExecutionOutcome::success(resp.stdout, resp.stderr, elapsed),
                None => ExecutionOutcome::failure(
                    ExecutionError::new(ErrorKind::ProtocolError, "response has ok=false without an error record"),
                    resp.stdout,
                    resp.stderr,
                    elapsed,
                ),
                Some(e) => {
                    let kind = ErrorKind::parse(&e.kind).unwrap_or(ErrorKind::ScriptException);
                    let traceback = match (kind, e.traceback) {
                        (ErrorKind::ScriptException, None) => Some(e.message.clone()),
                        (_, tb) => tb,
                    };
                    ExecutionOutcome::failure(
                        ExecutionError { kind, message: e.message, traceback },
                        resp.stdout,
                        resp.stderr,
                        elapsed,
                    )
                }
            },
            Err((kind, message)) => {
                ExecutionOutcome::failure(ExecutionError::new(kind, message), String::new(), String::new(), elapsed)
            }
        }
    }

    pub fn render_views(&mut self, plan: &CameraPlan, out_dir: &Path, resolution: u32) -> Result<RenderOutput, RenderError> {
        std::fs::create_dir_all(out_dir).map_err(|e| RenderError::Io(e.to_string()))?;
        let command = Command::Render { plan: plan.clone(), resolution, out_dir: out_dir.to_path_buf() };
        let timeout = self.config.request_timeout;
        let resp = self.checked_request(command, timeout).map_err(|(kind, message)| RenderError::Fault { kind, message })?;
        if let Some(e) = resp.error {
            return Err(RenderError::Worker(e.message));
        }
        let missing = missing_views(out_dir, plan.views.len());
        if !missing.is_empty() {
            return Err(RenderError::MissingViews(missing));
        }
        let data = resp.data.unwrap_or_default();
        Ok(RenderOutput { views: data.views.unwrap_or_default(), bbox: data.bbox.unwrap_or(self.bbox) })
    }

    pub fn reset_scene(&mut self) -> Result<(), RenderError> {
        let timeout = self.config.request_timeout;
        let resp = self
            .checked_request(Command::Reset, timeout)
            .map_err(|(kind, message)| RenderError::Fault { kind, message })?;
        match resp.error {
            None => Ok(()),
            Some(e) => Err(RenderError::Worker(e.message)),
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.kill();
    }
}

fn recv_line(lines: &Receiver<std::io::Result<String>>, deadline: Instant) -> Result<String, Fault> {
    loop {
        let remaining = deadline.saturating_duration_since(Instant::now());
        match lines.recv_timeout(remaining) {
            Ok(Ok(line)) if line.trim().is_empty() => continue,
            Ok(Ok(line)) => return Ok(line),
            Ok(Err(e)) => return Err(Fault::Protocol(format!("unreadable protocol stream: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(Fault::Timeout),
            Err(RecvTimeoutError::Disconnected) => return Err(Fault::Crash(String::new())),
        }
    }
}

impl SceneRuntime for Worker {
    fn execute(&mut self, source: &str, timeout: Duration) -> ExecutionOutcome {
        Worker::execute(self, source, timeout)
    }

    fn scene_bbox(&self) -> BBox {
        self.bbox
    }

    fn render(&mut self, plan: &CameraPlan, out_dir: &Path, resolution: u32) -> Result<RenderOutput, RenderError> {
        self.render_views(plan, out_dir, resolution)
    }

    fn reset(&mut self) -> Result<(), RenderError> {
        self.reset_scene()
    }

    fn blender_version(&self) -> &str {
        &self.blender_version
    }
}
