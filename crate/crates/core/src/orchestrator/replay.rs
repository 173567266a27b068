//! Re-running a recorded session: model replies come from its `ModelCall`
//! events, script outcomes and renders from its tool events. A faithful
//! replay reproduces the event log byte for byte once wall-clock fields are
//! masked.

use std::collections::{BTreeMap, VecDeque};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use meshwright_bridge::{
    BBox, CameraPlan, ErrorKind, ExecutionError, ExecutionOutcome, RenderError, RenderOutput, RenderedView,
    SceneRuntime,
};
use meshwright_docrag::{DocChunk, DocragError, Hit, Retriever};
use meshwright_gateway::{RecordedCall, ReplayBackend};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::PromptSet;
use crate::session::{
    normalized_log, read_events, ErrorCategory, Event, Payload, RenderSet, SessionError, SessionLog, StepClock,
    EVENTS_FILE,
};

use super::driver::{Orchestrator, OrchestratorError};

const UNAVAILABLE_PREFIX: &str = "retrieval unavailable, continuing without documentation: ";

/// Serves the executions and renders recorded in an event log, in order.
#[derive(Debug)]
pub struct RecordedRuntime {
    executions: VecDeque<(String, ExecutionOutcome)>,
    renders: VecDeque<RenderSet>,
    source_dir: PathBuf,
}

impl RecordedRuntime {
    pub fn from_events(events: &[Event], source_dir: &Path) -> Self {
        let mut sources = BTreeMap::new();
        let mut executions = VecDeque::new();
        let mut renders = VecDeque::new();
        for e in events {
            match &e.payload {
                Payload::CodeSubmitted { version, source, .. } => {
                    sources.insert(*version, source.clone());
                }
                Payload::CodeExecuted { version, outcome } => {
                    executions.push_back((sources.get(version).cloned().unwrap_or_default(), outcome.clone()));
                }
                Payload::Render(rs) => renders.push_back(rs.clone()),
                _ => {}
            }
        }
        Self { executions, renders, source_dir: source_dir.to_path_buf() }
    }
}

impl SceneRuntime for RecordedRuntime {
    fn execute(&mut self, source: &str, _timeout: Duration) -> ExecutionOutcome {
        let diverged = |msg: &str| {
            ExecutionOutcome::failure(ExecutionError::new(ErrorKind::ProtocolError, msg), String::new(), String::new(), 0)
        };
        match self.executions.pop_front() {
            Some((recorded, outcome)) if recorded == source => outcome,
            Some(_) => diverged("replay diverged: script differs from the recording"),
            None => diverged("replay diverged: no recorded execution left"),
        }
    }

    fn scene_bbox(&self) -> BBox {
        self.renders.front().map(|r| r.bbox).unwrap_or(BBox::EMPTY)
    }

    fn render(&mut self, _plan: &CameraPlan, out_dir: &Path, _resolution: u32) -> Result<RenderOutput, RenderError> {
        let set = self.renders.pop_front().ok_or_else(|| RenderError::Worker("no recorded render left".into()))?;
        std::fs::create_dir_all(out_dir).map_err(|e| RenderError::Io(e.to_string()))?;
        let mut views = Vec::with_capacity(set.views.len());
        for v in &set.views {
            let name = v.image_path.file_name().ok_or_else(|| RenderError::Io("view without file name".into()))?;
            let dest = out_dir.join(name);
            std::fs::copy(self.source_dir.join(&v.image_path), &dest).map_err(|e| RenderError::Io(e.to_string()))?;
            views.push(RenderedView {
                path: dest,
                azimuth_deg: v.azimuth_deg,
                elevation_deg: v.elevation_deg,
                camera_distance: v.camera_distance,
            });
        }
        Ok(RenderOutput { views, bbox: set.bbox })
    }

    fn reset(&mut self) -> Result<(), RenderError> {
        Ok(())
    }

    fn blender_version(&self) -> &str {
        "recorded"
    }
}

/// Serves the hits recorded for each retrieval turn.
#[derive(Debug)]
pub struct RecordedRetriever {
    results: Mutex<VecDeque<Result<Vec<Hit>, String>>>,
    chunks: BTreeMap<u32, DocChunk>,
}

impl RecordedRetriever {
    /// Unavailable lookups replay as errors carrying the recorded message,
    /// which also covers sessions recorded without any index.
    pub fn from_events(events: &[Event]) -> Self {
        let mut results = VecDeque::new();
        let mut chunks = BTreeMap::new();
        let mut pending_warning: Option<String> = None;
        for e in events {
            match &e.payload {
                Payload::Error { category: ErrorCategory::RetrievalUnavailable, message, .. } => {
                    pending_warning = Some(message.strip_prefix(UNAVAILABLE_PREFIX).unwrap_or(message).to_owned());
                }
                Payload::Retrieval(r) => {
                    match (pending_warning.take(), &r.summary_text) {
                        (Some(msg), None) => results.push_back(Err(msg)),
                        _ => {
                            let hits = r.top_chunks.iter().map(|c| Hit { chunk_id: c.chunk_id, score: c.score }).collect();
                            results.push_back(Ok(hits));
                        }
                    }
                    for c in &r.top_chunks {
                        chunks.entry(c.chunk_id).or_insert_with(|| DocChunk {
                            chunk_id: c.chunk_id,
                            source_file: String::new(),
                            title: c.title.clone(),
                            body: c.body.clone(),
                            version_tag: "recorded".into(),
                            offset: 0,
                            overlap: 0,
                        });
                    }
                }
                _ => {}
            }
        }
        Self { results: Mutex::new(results), chunks }
    }

    fn next(&self) -> Result<Vec<Hit>, DocragError> {
        let mut q = self.results.lock().expect("recorded retriever poisoned");
        match q.pop_front() {
            Some(Ok(hits)) => Ok(hits),
            Some(Err(msg)) => Err(DocragError::Precondition(msg)),
            None => Err(DocragError::Precondition("no recorded retrieval left".into())),
        }
    }
}

impl Retriever for RecordedRetriever {
    fn query(&self, _text: &str, _k: usize) -> Result<Vec<Hit>, DocragError> {
        self.next()
    }

    fn error_query(&self, _error: &ExecutionError, _k: usize) -> Result<Vec<Hit>, DocragError> {
        self.next()
    }

    fn chunk(&self, chunk_id: u32) -> Option<&DocChunk> {
        self.chunks.get(&chunk_id)
    }

    fn version_tag(&self) -> &str {
        "recorded"
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
    #[error("recording has no session init event")]
    NoInit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogDifference {
    /// 1-based line in the masked logs.
    pub line: usize,
    pub original: Option<String>,
    pub replayed: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub original_events: usize,
    pub replayed_events: usize,
    pub calls_served: usize,
    pub calls_remaining: usize,
    /// First gateway divergence reported during the replay.
    pub divergence: Option<String>,
    pub first_difference: Option<LogDifference>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.first_difference.is_none() && self.divergence.is_none()
    }
}

pub fn first_difference(a: &str, b: &str) -> Option<LogDifference> {
    let (la, lb): (Vec<&str>, Vec<&str>) = (a.lines().collect(), b.lines().collect());
    (0..la.len().max(lb.len())).find(|&i| la.get(i) != lb.get(i)).map(|i| LogDifference {
        line: i + 1,
        original: la.get(i).map(|s| s.to_string()),
        replayed: lb.get(i).map(|s| s.to_string()),
    })
}

/// Replays the session recorded in `session_dir` into the empty directory
/// `out_dir` using `prompts`, and compares the two logs.
pub fn replay_session(session_dir: &Path, out_dir: &Path, prompts: PromptSet) -> Result<ReplayReport, ReplayError> {
    let original = read_events(&session_dir.join(EVENTS_FILE))?;
    let init = match original.first().map(|e| &e.payload) {
        Some(Payload::PhaseChanged { init: Some(init), .. }) => init.clone(),
        _ => return Err(ReplayError::NoInit),
    };
    let calls: Vec<RecordedCall> = original
        .iter()
        .filter_map(|e| match &e.payload {
            Payload::ModelCall { request, response: Some(response), .. } => {
                Some(RecordedCall { request: request.clone(), response: response.clone() })
            }
            _ => None,
        })
        .collect();
    let backend = Arc::new(ReplayBackend::new(calls));
    let runtime = RecordedRuntime::from_events(&original, session_dir);
    let retriever: Arc<dyn Retriever> = Arc::new(RecordedRetriever::from_events(&original));
    let log = SessionLog::create(out_dir, Box::new(StepClock::fixed()))?;
    let mut orch = Orchestrator::new(log, backend.clone(), Box::new(runtime), Some(retriever), prompts);

    orch.start(&init.session_id, &init.goal, init.config.clone())?;
    orch.run_until_input()?;
    for e in &original {
        if let Payload::RefinementRequest(r) = &e.payload {
            if !orch.awaiting_input() {
                break;
            }
            orch.run_phase3_step(&r.text)?;
        }
    }

    let replayed = &orch.state().event_log;
    let divergence = replayed.iter().find_map(|e| match &e.payload {
        Payload::ModelCall { error: Some(msg), .. } if msg.contains("diverged") => Some(msg.clone()),
        _ => None,
    });
    Ok(ReplayReport {
        original_events: original.len(),
        replayed_events: replayed.len(),
        calls_served: backend.served(),
        calls_remaining: backend.remaining(),
        divergence,
        first_difference: first_difference(&normalized_log(&original), &normalized_log(replayed)),
    })
}
