#![allow(dead_code)]

use std::path::Path;
use std::sync::{Arc, Mutex};

use meshwright_bridge::FakeRuntime;
use meshwright_core::agents::{PromptSet, EXECUTE_CODE_TOOL};
use meshwright_core::orchestrator::Orchestrator;
use meshwright_core::scenario::Scenario;
use meshwright_core::{Event, Payload, Phase, SessionConfig, SessionLog, StepClock};
use meshwright_gateway::{ChatBackend, ChatRequest, ChatResponse, GatewayError};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::json;

/// A model that answers every role with seeded random but well-formed output.
pub struct RandomBackend {
    rng: Mutex<StdRng>,
    pub fail_rate: f64,
    pub max_subtasks: usize,
    pub max_critiques: usize,
}

impl RandomBackend {
    pub fn new(seed: u64) -> Self {
        Self { rng: Mutex::new(StdRng::seed_from_u64(seed)), fail_rate: 0.3, max_subtasks: 3, max_critiques: 3 }
    }
}

fn numbered_problems(text: &str) -> usize {
    text.lines().filter(|l| l.split_once(". problem:").is_some_and(|(n, _)| n.trim().parse::<u32>().is_ok())).count()
}

impl ChatBackend for RandomBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let mut rng = self.rng.lock().unwrap();
        let last = request.messages.last().map(|m| m.text.clone()).unwrap_or_default();
        Ok(match request.agent.as_str() {
            "planner" => {
                let n = rng.random_range(1..=self.max_subtasks);
                let mut s = String::new();
                for i in 1..=n {
                    let who = if rng.random_bool(0.5) { "retrieval_agent" } else { "coding_agent" };
                    s.push_str(&format!("{who}: build part {i}\n"));
                }
                s.push_str("COMPLETE");
                ChatResponse::text(s)
            }
            "retrieval" => ChatResponse::text(format!("notes {}", rng.random::<u16>())),
            "coding" => {
                let mut code = format!("import bpy\nbpy.ops.mesh.primitive_cube_add(size={}.0)\n", rng.random_range(1..4));
                if rng.random_bool(self.fail_rate) {
                    code.push_str("# fake: error RuntimeError: random failure\n");
                }
                ChatResponse::tool_call(EXECUTE_CODE_TOOL, json!({ "code": code }))
            }
            "critic" => {
                let n = rng.random_range(0..=self.max_critiques);
                if n == 0 {
                    ChatResponse::text("NO ISSUES")
                } else {
                    let lines: Vec<String> =
                        (1..=n).map(|i| format!("{i}. problem: flaw {i} | fix: repair {i}")).collect();
                    ChatResponse::text(lines.join("\n"))
                }
            }
            "verification" => {
                let n = numbered_problems(&last);
                let lines: Vec<String> = (1..=n)
                    .map(|i| match rng.random_range(0..3) {
                        0 => format!("{i}. RESOLVED"),
                        1 => format!("{i}. PARTIAL: keep going on {i}"),
                        _ => format!("{i}. UNRESOLVED: redo {i}"),
                    })
                    .collect();
                ChatResponse::text(lines.join("\n"))
            }
            other => return Err(GatewayError::InvalidRequest(format!("unexpected agent {other}"))),
        })
    }
}

/// Runs a whole session against a random model; `refinements` are answered
/// while the session waits, then the termination keyword.
pub fn random_session(dir: &Path, seed: u64, config: SessionConfig, refinements: usize) -> Orchestrator {
    let backend = Arc::new(RandomBackend::new(seed));
    let scenario = Scenario::chair();
    let log = SessionLog::create(dir, Box::new(StepClock::fixed())).unwrap();
    let mut orch =
        Orchestrator::new(log, backend, Box::new(FakeRuntime::new()), scenario.retriever(), PromptSet::shipped());
    orch.start(&format!("random-{seed}"), "a random object", config).unwrap();
    orch.run_until_input().unwrap();
    for i in 0..=refinements {
        if !orch.awaiting_input() {
            break;
        }
        let text = if i == refinements { "COMPLETE".to_owned() } else { format!("make part {i} taller") };
        orch.run_phase3_step(&text).unwrap();
    }
    orch
}

/// Turn-order automaton transcribed by hand from the agent workflow diagram.
/// Input is the `turn_trace` of a session with subtask suffixes stripped.
pub mod automaton {
    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    enum S {
        Start,
        Planned,
        P1Retrieved,
        P1Coded,
        P2Entered,
        P2FirstRender,
        Critiqued,
        P2Coded,
        P2Retrieved,
        P2Render,
        P2Verified,
        P3Entered,
        Parked,
        Waiting,
        Input,
        P3Coded,
        P3Retrieved,
        P3Render,
        P3Verified,
        Terminating,
        End,
    }

    fn step(s: S, token: &str) -> Option<S> {
        use S::*;
        if token == "phase Failed Fault" && s != End {
            return Some(End);
        }
        Some(match (s, token) {
            (Start, "planner PhaseEntered") => Planned,
            (Planned, "retrieval PlanReady") => P1Retrieved,
            (Planned, "coding PlanReady") => P1Coded,
            (P1Retrieved, "coding Retrieved") => P1Coded,
            (P1Coded, "retrieval ExecError") => P1Retrieved,
            (P1Coded, "retrieval SubtaskNext") => P1Retrieved,
            (P1Coded, "coding SubtaskNext") => P1Coded,
            (P1Coded, "phase AutoRefine ExecOk") => P2Entered,
            (P1Coded | P2Coded | P3Coded, "phase Failed CapExhausted") => End,
            (P2Entered, "render PhaseEntered") => P2FirstRender,
            (P2FirstRender, "critic Rendered") => Critiqued,
            (Critiqued, "coding CritiqueFound") => P2Coded,
            (Critiqued, "phase UserRefine CritiqueClean") => P3Entered,
            (P2Coded, "retrieval ExecError") => P2Retrieved,
            (P2Retrieved, "coding Retrieved") => P2Coded,
            (P2Coded, "render ExecOk") => P2Render,
            (P2Render, "verification Rendered") => P2Verified,
            (P2Verified, "coding VerifyFailed") => P2Coded,
            (P2Verified, "phase UserRefine VerifyPassed" | "phase UserRefine CapExhausted") => P3Entered,
            (P3Entered, "user_proxy PhaseEntered") => Parked,
            (Parked, "awaiting") => Waiting,
            (Waiting, "user_proxy UserInput") => Input,
            (Input, "coding UserInput") => P3Coded,
            (Input, "phase Terminated Terminator") => Terminating,
            (Terminating, "terminated Terminator") => End,
            (P3Coded, "retrieval ExecError") => P3Retrieved,
            (P3Retrieved, "coding Retrieved") => P3Coded,
            (P3Coded, "render ExecOk") => P3Render,
            (P3Render, "verification Rendered") => P3Verified,
            (P3Verified, "coding VerifyFailed") => P3Coded,
            (P3Verified, "user_proxy VerifyPassed" | "user_proxy CapExhausted") => Parked,
            _ => return None,
        })
    }

    fn strip_subtask(line: &str) -> &str {
        match line.rsplit_once(" s") {
            Some((head, n)) if n.chars().all(|c| c.is_ascii_digit()) && !n.is_empty() => head,
            _ => line,
        }
    }

    /// Ok when the whole trace is accepted and ends in a resting state.
    pub fn accepts(trace: &[String]) -> Result<(), String> {
        let mut s = S::Start;
        for (i, line) in trace.iter().enumerate() {
            let token = strip_subtask(line);
            s = step(s, token).ok_or_else(|| format!("line {}: {token:?} not allowed after {s:?}", i + 1))?;
        }
        match s {
            S::End | S::Waiting => Ok(()),
            other => Err(format!("trace stops in {other:?}")),
        }
    }
}

/// Counts model-backed turns (retrieval or coding) on each phase-1 subtask.
pub fn phase1_turns_per_subtask(events: &[Event]) -> std::collections::BTreeMap<u32, usize> {
    let mut out = std::collections::BTreeMap::new();
    let mut phase = Phase::InitialCreation;
    for e in events {
        match &e.payload {
            Payload::PhaseChanged { to, .. } => phase = *to,
            Payload::TurnStarted { subtask: Some(i), .. } if phase == Phase::InitialCreation => {
                *out.entry(*i).or_default() += 1;
            }
            _ => {}
        }
    }
    out
}
