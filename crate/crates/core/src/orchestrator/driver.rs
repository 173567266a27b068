use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use meshwright_bridge::{plan_cameras, ErrorKind, ExecutionError, ExecutionOutcome, SceneRuntime};
use meshwright_docrag::{error_query_text, Retriever};
use meshwright_gateway::ChatBackend;
use serde_json::json;
use thiserror::Error;

use crate::agents::{self, AgentEnv, AgentError, CallRecord, PromptSet, RetrievalQuery, RETRIEVE_INFORMATION_TOOL};
use crate::session::{
    assemble_context, open_critique_items, open_refinement_items, Actor, Critique, CriticTopology, CritiqueRound,
    ErrorCategory, Event, EventKind, ExecutionMode, Payload, Phase, Provocation, Reason, RefinementRequest,
    RenderSet, RetrievalKind, RetrievalRecord, Role, SessionConfig, SessionError, SessionInit, SessionLog,
    SessionState, Step, VerificationRound, VerificationStatus, VerificationTarget, ViewRecord,
};

use super::select::{select_next, Next, PhaseMachine, SelectError, TurnDecision};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error("session has no directory to render into")]
    NoSessionDir,
    #[error("session is not waiting for input (phase {0})")]
    NotAwaitingInput(Phase),
    #[error("session already started")]
    AlreadyStarted,
    #[error("precondition violated: {0}")]
    Precondition(String),
}

/// Drives one session: picks each step with the selector, runs it, and
/// records everything in the session log. Agent and tool failures end the
/// session as `Failed` rather than surfacing as errors.
pub struct Orchestrator {
    log: SessionLog,
    backend: Arc<dyn ChatBackend>,
    runtime: Box<dyn SceneRuntime>,
    retriever: Option<Arc<dyn Retriever>>,
    prompts: PromptSet,
}

fn actor_for_agent(agent: &str) -> Actor {
    match agent.split('_').next().unwrap_or_default() {
        "planner" => Actor::Planner,
        "retrieval" => Actor::Retrieval,
        "coding" => Actor::Coding,
        "critic" => Actor::Critic,
        "verification" => Actor::Verification,
        _ => Actor::System,
    }
}

fn relative_to(path: &Path, root: &Path) -> PathBuf {
    path.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

impl Orchestrator {
    pub fn new(
        log: SessionLog,
        backend: Arc<dyn ChatBackend>,
        runtime: Box<dyn SceneRuntime>,
        retriever: Option<Arc<dyn Retriever>>,
        prompts: PromptSet,
    ) -> Self {
        Self { log, backend, runtime, retriever, prompts }
    }

    pub fn state(&self) -> &SessionState {
        self.log.state()
    }

    pub fn log(&self) -> &SessionLog {
        &self.log
    }

    pub fn log_mut(&mut self) -> &mut SessionLog {
        &mut self.log
    }

    pub fn into_parts(self) -> (SessionLog, Box<dyn SceneRuntime>) {
        (self.log, self.runtime)
    }

    /// Writes the opening event.
    pub fn start(&mut self, session_id: &str, goal: &str, config: SessionConfig) -> Result<(), OrchestratorError> {
        if self.state().is_started() {
            return Err(OrchestratorError::AlreadyStarted);
        }
        if goal.trim().is_empty() {
            return Err(OrchestratorError::Precondition("goal is empty".into()));
        }
        let init = SessionInit { session_id: session_id.to_owned(), goal: goal.to_owned(), config };
        self.log.record(
            Actor::System,
            Payload::PhaseChanged { from: None, to: Phase::InitialCreation, reason: Reason::PhaseEntered, init: Some(Box::new(init)) },
        )?;
        Ok(())
    }

    /// Planning, then retrieval/coding/execution per subtask.
    pub fn run_phase1(&mut self) -> Result<&SessionState, OrchestratorError> {
        self.require_phase(Phase::InitialCreation)?;
        self.run_loop(Some(Phase::InitialCreation))?;
        Ok(self.state())
    }

    /// Render, critique, fix and verify until approval or the round cap.
    pub fn run_phase2(&mut self) -> Result<&SessionState, OrchestratorError> {
        self.require_phase(Phase::AutoRefine)?;
        if self.state().latest_good_code().is_none() {
            return Err(OrchestratorError::Precondition("no successfully executed code".into()));
        }
        self.run_loop(Some(Phase::AutoRefine))?;
        Ok(self.state())
    }

    /// Runs until the session waits for the user or closes.
    pub fn run_until_input(&mut self) -> Result<&SessionState, OrchestratorError> {
        self.run_loop(None)?;
        Ok(self.state())
    }

    pub fn awaiting_input(&self) -> bool {
        self.state().phase == Phase::UserRefine && self.state().awaiting_input
    }

    /// Hands one user request to the loop; the termination keyword ends the
    /// session without any model call.
    pub fn run_phase3_step(&mut self, text: &str) -> Result<&SessionState, OrchestratorError> {
        if !self.awaiting_input() {
            return Err(OrchestratorError::NotAwaitingInput(self.state().phase));
        }
        if text.trim().is_empty() {
            return Err(OrchestratorError::Precondition("empty refinement request".into()));
        }
        let terminator = text.trim() == self.state().config.termination_keyword;
        self.log.record(Actor::UserProxy, Payload::TurnStarted { step: Step::UserProxy, reason: Reason::UserInput, subtask: None })?;
        let submitted_at = self.log.now();
        self.log.record(
            Actor::User,
            Payload::RefinementRequest(RefinementRequest { text: text.to_owned(), submitted_at, terminator }),
        )?;
        self.run_loop(None)?;
        Ok(self.state())
    }

    /// Ends the session; a no-op when it is already closed.
    pub fn terminate(&mut self) -> Result<&SessionState, OrchestratorError> {
        if self.state().phase.is_terminal() {
            return Ok(self.state());
        }
        let keyword = self.state().config.termination_keyword.clone();
        self.run_phase3_step(&keyword)
    }

    fn require_phase(&self, phase: Phase) -> Result<(), OrchestratorError> {
        match self.state().phase {
            p if p == phase && self.state().is_started() => Ok(()),
            p => Err(OrchestratorError::Precondition(format!("session is in {p}, not {phase}"))),
        }
    }

    /// The latest event a selector decision can follow from.
    fn last_outcome(&self) -> Option<Event> {
        self.state()
            .event_log
            .iter()
            .rev()
            .find(|e| {
                matches!(e.kind, EventKind::TurnEnded | EventKind::CodeExecuted | EventKind::RenderProduced | EventKind::PhaseChanged)
            })
            .cloned()
    }

    fn run_loop(&mut self, within: Option<Phase>) -> Result<(), OrchestratorError> {
        loop {
            let state = self.state();
            if !state.is_started() || state.phase.is_terminal() || state.awaiting_input {
                return Ok(());
            }
            if within.is_some_and(|p| p != state.phase) {
                return Ok(());
            }
            let last = self.last_outcome().expect("a started session has an opening event");
            let machine = PhaseMachine::from_state(state);
            let decision = select_next(state, &machine, &last)?;
            tracing::debug!(session = %state.session_id, ?decision, "selected");
            self.execute(decision)?;
        }
    }

    fn execute(&mut self, decision: TurnDecision) -> Result<(), OrchestratorError> {
        let phase = self.state().phase;
        if decision.reason == Reason::CapExhausted && decision.next != Next::Halt {
            let cap = self.state().config.max_verification_rounds;
            self.warn(ErrorCategory::CapExhausted, format!("refinement round cap ({cap}) reached with issues still open"))?;
        }
        match decision.next {
            Next::Advance(to) => {
                self.log.record(Actor::System, Payload::PhaseChanged { from: Some(phase), to, reason: decision.reason, init: None })?;
            }
            Next::Halt if decision.reason == Reason::Terminator => {
                self.log.record(
                    Actor::System,
                    Payload::PhaseChanged { from: Some(phase), to: Phase::Terminated, reason: Reason::Terminator, init: None },
                )?;
                self.log.record(Actor::System, Payload::Terminated { reason: Reason::Terminator })?;
            }
            Next::Halt => {
                let last_error = self.state().latest_code().and_then(|c| c.execution.as_ref()).and_then(|o| o.error.clone());
                let retries = self.state().config.max_exec_retries;
                self.fail(
                    ErrorCategory::CapExhausted,
                    format!("code still fails after {retries} retries"),
                    last_error,
                    Reason::CapExhausted,
                )?;
            }
            Next::Agent(_) | Next::RenderTool => {
                let step = decision.step().expect("agent and render decisions have a step");
                let actor = match decision.next {
                    Next::Agent(role) => Actor::from(role),
                    _ => Actor::System,
                };
                self.log.record(actor, Payload::TurnStarted { step, reason: decision.reason, subtask: decision.subtask })?;
                match step {
                    Step::Planner => self.planner_turn()?,
                    Step::Retrieval => self.retrieval_turn(decision)?,
                    Step::Coding => self.coding_turn(decision)?,
                    Step::Render => self.render_turn()?,
                    Step::Critic => self.critic_turn()?,
                    Step::Verification => self.verification_turn()?,
                    Step::UserProxy => {
                        self.log.record(Actor::UserProxy, Payload::AwaitingInput {})?;
                    }
                }
            }
        }
        Ok(())
    }

    fn warn(&mut self, category: ErrorCategory, message: String) -> Result<(), OrchestratorError> {
        tracing::warn!(session = %self.state().session_id, ?category, "{message}");
        self.log.record(Actor::System, Payload::Error { category, message, fatal: false, execution_error: None })?;
        Ok(())
    }

    fn fail(
        &mut self,
        category: ErrorCategory,
        message: String,
        execution_error: Option<ExecutionError>,
        reason: Reason,
    ) -> Result<(), OrchestratorError> {
        tracing::error!(session = %self.state().session_id, ?category, "{message}");
        let phase = self.state().phase;
        self.log.record(Actor::System, Payload::Error { category, message, fatal: true, execution_error })?;
        self.log.record(Actor::System, Payload::PhaseChanged { from: Some(phase), to: Phase::Failed, reason, init: None })?;
        Ok(())
    }

    fn fail_agent(&mut self, error: AgentError) -> Result<(), OrchestratorError> {
        let category = match &error {
            AgentError::Gateway { .. } => ErrorCategory::Gateway,
            AgentError::Parse { .. } => ErrorCategory::AgentParse,
            _ => ErrorCategory::Internal,
        };
        self.fail(category, error.to_string(), None, Reason::Fault)
    }

    fn record_calls(&mut self, calls: Vec<CallRecord>) -> Result<(), OrchestratorError> {
        for mut call in calls {
            // Not part of the record; dropped so the live log equals a reload.
            call.request.attachment_root = None;
            let actor = actor_for_agent(&call.request.agent);
            let (response, error) = match call.response {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e.to_string())),
            };
            self.log.record(actor, Payload::ModelCall { request: call.request, response, error })?;
        }
        Ok(())
    }

    fn session_dir(&self) -> Result<PathBuf, OrchestratorError> {
        self.log.dir().map(Path::to_path_buf).ok_or(OrchestratorError::NoSessionDir)
    }

    /// Runs an agent operation with a fresh environment, logs its model
    /// calls, and returns its result.
    fn with_agent<T>(
        &mut self,
        op: impl FnOnce(&mut AgentEnv<'_>, Option<&dyn Retriever>) -> Result<T, AgentError>,
    ) -> Result<Result<T, AgentError>, OrchestratorError> {
        let config = self.state().config.clone();
        let root = self.log.dir().map(Path::to_path_buf);
        let backend = Arc::clone(&self.backend);
        let retriever = self.retriever.clone();
        let mut env = AgentEnv::new(&*backend, &self.prompts, &config);
        if let Some(root) = &root {
            env = env.with_attachment_root(root);
        }
        let result = op(&mut env, retriever.as_deref());
        let calls = env.take_calls();
        drop(env);
        self.record_calls(calls)?;
        Ok(result)
    }

    fn planner_turn(&mut self) -> Result<(), OrchestratorError> {
        let goal = self.state().goal.clone();
        match self.with_agent(|env, _| agents::plan(env, &goal))? {
            Ok((output, subtasks)) => {
                self.log.record(Actor::Planner, Payload::Plan { subtasks, complete: output.complete })?;
                Ok(())
            }
            Err(e) => self.fail_agent(e),
        }
    }

    fn retrieval_turn(&mut self, decision: TurnDecision) -> Result<(), OrchestratorError> {
        let state = self.state();
        let goal = state.goal.clone();
        let subtask_text = decision
            .subtask
            .and_then(|i| state.subtask(i))
            .map(|s| s.description.clone())
            .unwrap_or_else(|| goal.clone());
        let failed = if decision.reason == Reason::ExecError {
            state.latest_code().and_then(|c| c.execution.as_ref()).and_then(|o| o.error.clone())
        } else {
            None
        };
        let (kind, query) = match &failed {
            Some(e) => (RetrievalKind::ErrorMessage, error_query_text(e)),
            None => (RetrievalKind::TaskIntent, subtask_text.clone()),
        };
        self.log.record(
            Actor::Retrieval,
            Payload::ToolInvoked { tool: RETRIEVE_INFORMATION_TOOL.into(), arguments: json!({ "query": query }) },
        )?;
        let result = self.with_agent(|env, index| {
            let q = match &failed {
                Some(e) => RetrievalQuery::Error(e),
                None => RetrievalQuery::Intent(&subtask_text),
            };
            agents::retrieve_and_summarize(env, index, q, &goal, &subtask_text, decision.subtask)
        })?;
        let record = match result {
            Ok(record) => record,
            Err(AgentError::RetrievalUnavailable(msg) | AgentError::Precondition(msg)) => {
                self.warn(ErrorCategory::RetrievalUnavailable, format!("retrieval unavailable, continuing without documentation: {msg}"))?;
                RetrievalRecord { kind, subtask: decision.subtask, query, top_chunks: Vec::new(), summary_text: None }
            }
            Err(e) => return self.fail_agent(e),
        };
        self.log.record(Actor::Retrieval, Payload::Retrieval(record))?;
        Ok(())
    }

    fn instruction_for(&self, provocation: Provocation) -> String {
        let state = self.state();
        match provocation {
            Provocation::Subtask(i) => {
                let desc = state.subtask(i).map(|s| s.description.as_str()).unwrap_or_default();
                format!(
                    "Subtask {i} of {}: {desc}\nExtend the current script so that it also builds this part.",
                    state.subtasks.len()
                )
            }
            Provocation::CritiqueRound(r) => {
                let mut s = String::from("Fix these problems found in the renders:\n");
                if let Some(round) = state.critiques.iter().find(|c| c.round == r) {
                    for c in &round.items {
                        s.push_str(&format!("{}. problem: {} | fix: {}\n", c.index, c.problem, c.suggested_fix));
                    }
                }
                s
            }
            Provocation::VerificationRound(_) => {
                let open = if state.phase == Phase::UserRefine { open_refinement_items(state) } else { open_critique_items(state) };
                let mut s = String::from("These problems are still visible in the new renders:\n");
                for o in &open {
                    s.push_str(&format!("{}. problem: {} | still to do: {}\n", o.critique.index, o.critique.problem, o.instruction()));
                }
                s
            }
            Provocation::Refinement(i) => {
                let text = state.refinements.get(i as usize - 1).map(|r| r.text.as_str()).unwrap_or_default();
                format!("User request: {text}\nUpdate the current script accordingly.")
            }
        }
    }

    fn coding_turn(&mut self, decision: TurnDecision) -> Result<(), OrchestratorError> {
        let state = self.state();
        let latest = state.latest_code();
        let failed = latest.filter(|c| c.execution.as_ref().is_some_and(|o| !o.ok));
        let (provocation, retry_of) = match failed {
            Some(c) => (c.provoking_input, Some(c.version)),
            None => {
                let p = match decision.reason {
                    Reason::CritiqueFound => Provocation::CritiqueRound(state.critiques.len() as u32),
                    Reason::VerifyFailed => Provocation::VerificationRound(state.verifications.len() as u32),
                    Reason::UserInput => Provocation::Refinement(state.refinements.len() as u32),
                    _ => Provocation::Subtask(decision.subtask.or_else(|| PhaseMachine::from_state(state).cursor.subtask).unwrap_or(1)),
                };
                (p, None)
            }
        };
        let mut instruction = self.instruction_for(provocation);
        if let Some(err) = failed.and_then(|c| c.execution.as_ref()).and_then(|o| o.error.as_ref()) {
            instruction.push_str(&format!(
                "\nThe previous version (v{}) failed to execute:\n{:?}: {}\n",
                retry_of.unwrap_or_default(),
                err.kind,
                err.message
            ));
            for line in err.traceback_tail(5) {
                instruction.push_str(line);
                instruction.push('\n');
            }
            instruction.push_str("Fix the error and return the whole script.");
        }
        let context = assemble_context(state, Role::Coding);
        let documents = state
            .event_log
            .iter()
            .rev()
            .find(|e| e.kind == EventKind::TurnEnded)
            .and_then(|e| match &e.payload {
                Payload::Retrieval(r) => r.summary_text.clone(),
                _ => None,
            })
            .unwrap_or_default();
        let phase = state.phase;
        let version = state.code_versions.len() as u32 + 1;
        let exec_timeout = Duration::from_millis(state.config.exec_timeout_ms);
        let reset = state.config.execution_mode == ExecutionMode::ResetPerVersion;

        let source = match self.with_agent(|env, _| agents::code_step(env, &context, &instruction, &documents))? {
            Ok(s) => s,
            Err(e) => return self.fail_agent(e),
        };
        self.log.record(
            Actor::Coding,
            Payload::CodeSubmitted { version, source: source.clone(), phase, provoking_input: provocation, retry_of },
        )?;
        let outcome = match reset.then(|| self.runtime.reset()) {
            Some(Err(e)) => ExecutionOutcome::failure(
                ExecutionError::new(ErrorKind::WorkerCrash, format!("scene reset failed: {e}")),
                String::new(),
                String::new(),
                0,
            ),
            _ => self.runtime.execute(&source, exec_timeout),
        };
        self.log.record(Actor::System, Payload::CodeExecuted { version, outcome })?;
        Ok(())
    }

    fn render_turn(&mut self) -> Result<(), OrchestratorError> {
        let dir = self.session_dir()?;
        let config = self.state().config.clone();
        let id = RenderSet::id_for(self.state().render_sets.len() + 1);
        let out_dir = dir.join("renders").join(&id);
        let bbox = self.runtime.scene_bbox();
        let plan = match plan_cameras(&bbox, config.m_views as usize, config.fov_deg, config.camera_margin) {
            Ok(p) => p,
            Err(e) => return self.fail(ErrorCategory::Render, format!("camera placement failed: {e}"), None, Reason::Fault),
        };
        if let Err(e) = std::fs::create_dir_all(&out_dir) {
            return self.fail(ErrorCategory::Render, format!("cannot create {}: {e}", out_dir.display()), None, Reason::Fault);
        }
        let output = match self.runtime.render(&plan, &out_dir, config.render_resolution) {
            Ok(o) => o,
            Err(e) => return self.fail(ErrorCategory::Render, format!("render failed: {e}"), None, Reason::Fault),
        };
        let views: Vec<ViewRecord> = output
            .views
            .iter()
            .map(|v| ViewRecord {
                image_path: relative_to(&v.path, &dir),
                azimuth_deg: v.azimuth_deg,
                elevation_deg: v.elevation_deg,
                camera_distance: v.camera_distance,
            })
            .collect();
        if views.len() != config.m_views as usize {
            return self.fail(
                ErrorCategory::Render,
                format!("render returned {} views, expected {}", views.len(), config.m_views),
                None,
                Reason::Fault,
            );
        }
        let set = RenderSet { render_set_id: id, view_count: views.len() as u32, views, bbox: output.bbox };
        self.log.record(Actor::System, Payload::Render(set))?;
        Ok(())
    }

    fn critic_turn(&mut self) -> Result<(), OrchestratorError> {
        let state = self.state();
        let Some(renders) = state.latest_render().cloned() else {
            return self.fail(ErrorCategory::Internal, "critic turn without renders".into(), None, Reason::Fault);
        };
        let goal = state.goal.clone();
        let subtasks = state.subtasks.clone();
        let topology = state.config.critic_topology;
        let round = state.critiques.len() as u32 + 1;
        let result = self.with_agent(|env, _| match topology {
            CriticTopology::Direct => agents::critique(env, &renders, &goal, &subtasks),
            CriticTopology::Driver => agents::critique_via_driver(env, &renders, &goal, &subtasks),
        })?;
        match result {
            Ok(items) => {
                let approved = items.is_empty();
                let round = CritiqueRound { round, render_set_id: renders.render_set_id, items, approved };
                self.log.record(Actor::Critic, Payload::Critique(round))?;
                Ok(())
            }
            Err(e) => self.fail_agent(e),
        }
    }

    /// Render set that was current when refinement `index` was submitted.
    fn render_before_refinement(&self, index: u32) -> Option<String> {
        let mut seen = 0;
        let mut current = None;
        for e in &self.state().event_log {
            match &e.payload {
                Payload::Render(rs) => current = Some(rs.render_set_id.clone()),
                Payload::RefinementRequest(_) => {
                    seen += 1;
                    if seen == index {
                        return current;
                    }
                }
                _ => {}
            }
        }
        current
    }

    fn verification_turn(&mut self) -> Result<(), OrchestratorError> {
        let state = self.state();
        let machine = PhaseMachine::from_state(state);
        let Some(target) = machine.cursor.verification_target else {
            return self.fail(ErrorCategory::Internal, "nothing to verify".into(), None, Reason::Fault);
        };
        let (critiques, before): (Vec<Critique>, Option<String>) = match target {
            VerificationTarget::CritiqueRound(r) => {
                let before = state.critiques.iter().find(|c| c.round == r).map(|c| c.render_set_id.clone());
                (open_critique_items(state).into_iter().map(|o| o.critique).collect(), before)
            }
            VerificationTarget::Refinement(i) => {
                let already = state.verifications.iter().any(|v| v.target == target);
                let critiques = if already {
                    open_refinement_items(state).into_iter().map(|o| o.critique).collect()
                } else {
                    let text = state.refinements[i as usize - 1].text.clone();
                    vec![Critique {
                        index: 1,
                        problem: format!("The scene does not yet reflect the request: {text}"),
                        suggested_fix: text,
                        related_subtask: None,
                    }]
                };
                (critiques, self.render_before_refinement(i))
            }
        };
        let state = self.state();
        let (Some(before), Some(after)) = (before.and_then(|id| state.render_set(&id).cloned()), state.latest_render().cloned())
        else {
            return self.fail(ErrorCategory::Internal, "verification without before/after renders".into(), None, Reason::Fault);
        };
        let goal = state.goal.clone();
        let round = state.verifications.len() as u32 + 1;
        match self.with_agent(|env, _| agents::verify(env, &before, &after, &critiques, &goal))? {
            Ok(items) => {
                let all_resolved = items.iter().all(|i| i.status == VerificationStatus::Resolved);
                let v = VerificationRound {
                    round,
                    target,
                    render_set_id_before: before.render_set_id,
                    render_set_id_after: after.render_set_id,
                    critiques,
                    items,
                    all_resolved,
                };
                self.log.record(Actor::Verification, Payload::Verification(v))?;
                Ok(())
            }
            Err(e) => self.fail_agent(e),
        }
    }
}
