//! Turns a [`ServiceConfig`] into the parts an orchestrator is built from.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context};
use meshwright_bridge::{start_worker, FakeRuntime, SceneRuntime, WorkerConfig};
use meshwright_core::agents::PromptSet;
use meshwright_core::orchestrator::Orchestrator;
use meshwright_core::scenario::Scenario;
use meshwright_core::{Payload, SessionLog, SessionState};
use meshwright_docrag::{RetrievalIndex, Retriever};
use meshwright_gateway::{ChatBackend, GatewayConfig, LiveBackend, ScriptedBackend, ScriptedTranscript};

use crate::config::{BackendKind, RuntimeKind, ServiceConfig};

/// Shared, read-only pieces plus factories for the per-session ones.
pub struct Environment {
    pub config: ServiceConfig,
    pub prompts: PromptSet,
    pub retriever: Option<Arc<dyn Retriever>>,
    live: Option<Arc<LiveBackend>>,
    transcript: Option<ScriptedTranscript>,
}

impl Environment {
    pub fn new(config: ServiceConfig) -> anyhow::Result<Self> {
        let prompts = match &config.prompts {
            Some(dir) => PromptSet::with_overrides(dir).with_context(|| format!("prompt overrides in {}", dir.display()))?,
            None => PromptSet::shipped(),
        };
        let scenario = match &config.scenario {
            Some(name) => Some(Scenario::by_name(name).with_context(|| format!("unknown scenario {name:?}"))?),
            None => None,
        };
        let retriever: Option<Arc<dyn Retriever>> = match (&config.rag_index, &scenario) {
            (Some(dir), _) => Some(Arc::new(
                RetrievalIndex::load(dir).with_context(|| format!("loading index {}", dir.display()))?,
            )),
            (None, Some(s)) => s.retriever(),
            (None, None) => None,
        };
        if retriever.is_none() {
            tracing::warn!("no documentation index configured; retrieval turns will run without documentation");
        }
        let (live, transcript) = match config.backend {
            BackendKind::Live => {
                let gateway = match &config.gateway {
                    Some(p) => GatewayConfig::load(p)?,
                    None => GatewayConfig::defaults(),
                };
                (Some(Arc::new(LiveBackend::new(gateway)?)), None)
            }
            BackendKind::Scripted => {
                let t = match (&config.transcript, scenario) {
                    (Some(p), _) => ScriptedTranscript::load(p)?,
                    (None, Some(s)) => s.transcript,
                    (None, None) => bail!("scripted backend needs `transcript` or `scenario`"),
                };
                (None, Some(t))
            }
        };
        Ok(Self { config, prompts, retriever, live, transcript })
    }

    /// A backend for one session. Scripted backends skip the calls a resumed
    /// session has already consumed.
    pub fn backend(&self, resume: Option<&SessionState>) -> Arc<dyn ChatBackend> {
        if let Some(live) = &self.live {
            return live.clone();
        }
        let backend = ScriptedBackend::new(self.transcript.clone().expect("scripted environment has a transcript"));
        if let Some(state) = resume {
            let mut consumed = BTreeMap::new();
            for e in &state.event_log {
                if let Payload::ModelCall { request, .. } = &e.payload {
                    *consumed.entry(request.agent.clone()).or_insert(0) += 1;
                }
            }
            backend.fast_forward(&consumed);
        }
        Arc::new(backend)
    }

    pub fn runtime(&self) -> anyhow::Result<Box<dyn SceneRuntime>> {
        Ok(match self.config.runtime {
            RuntimeKind::Fake => Box::new(FakeRuntime::new()),
            RuntimeKind::Blender => {
                let mut wc = WorkerConfig::new(&self.config.blender, &self.config.shim);
                wc.startup_timeout = Duration::from_secs(self.config.worker_startup_secs);
                Box::new(start_worker(wc).context("starting the Blender worker")?)
            }
        })
    }

    pub fn orchestrator(&self, log: SessionLog) -> anyhow::Result<Orchestrator> {
        let resume = log.state().is_started().then(|| log.state().clone());
        let backend = self.backend(resume.as_ref());
        Ok(Orchestrator::new(log, backend, self.runtime()?, self.retriever.clone(), self.prompts.clone()))
    }

    pub fn session_dir(&self, id: &str) -> std::path::PathBuf {
        self.config.session_dir(id)
    }
}

/// Session directories under `data_dir`, i.e. those holding an event log.
pub fn session_dirs(data_dir: &Path) -> Vec<std::path::PathBuf> {
    let Ok(entries) = std::fs::read_dir(data_dir) else { return Vec::new() };
    let mut dirs: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(meshwright_core::EVENTS_FILE).is_file())
        .collect();
    dirs.sort();
    dirs
}
