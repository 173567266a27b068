use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use meshwright_bridge::{BBox, ExecutionOutcome};
use meshwright_gateway::{GatewayConfig, ModelBinding};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    #[default]
    InitialCreation,
    AutoRefine,
    UserRefine,
    Terminated,
    Failed,
}

impl Phase {
    pub fn is_terminal(self) -> bool {
        matches!(self, Phase::Terminated | Phase::Failed)
    }

    /// Forward-only along the three phases; `Failed` from anywhere open.
    pub fn can_become(self, next: Phase) -> bool {
        match (self, next) {
            (from, Phase::Failed) => !from.is_terminal(),
            (Phase::InitialCreation, Phase::AutoRefine)
            | (Phase::AutoRefine, Phase::UserRefine)
            | (Phase::UserRefine, Phase::Terminated) => true,
            _ => false,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phase::InitialCreation => "InitialCreation",
            Phase::AutoRefine => "AutoRefine",
            Phase::UserRefine => "UserRefine",
            Phase::Terminated => "Terminated",
            Phase::Failed => "Failed",
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The six agent roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Planner,
    Retrieval,
    Coding,
    Critic,
    Verification,
    UserProxy,
}

impl Role {
    pub const ALL: [Role; 6] =
        [Role::Planner, Role::Retrieval, Role::Coding, Role::Critic, Role::Verification, Role::UserProxy];

    /// Key used for gateway bindings and scripted fixtures.
    pub fn key(self) -> &'static str {
        match self {
            Role::Planner => "planner",
            Role::Retrieval => "retrieval",
            Role::Coding => "coding",
            Role::Critic => "critic",
            Role::Verification => "verification",
            Role::UserProxy => "user_proxy",
        }
    }

    /// Team-member name used in planner output, e.g. `coding_agent`.
    pub fn agent_name(self) -> &'static str {
        match self {
            Role::Planner => "planner_agent",
            Role::Retrieval => "retrieval_agent",
            Role::Coding => "coding_agent",
            Role::Critic => "critic_agent",
            Role::Verification => "verification_agent",
            Role::UserProxy => "user_proxy_agent",
        }
    }

    /// Case-insensitive lookup accepting `coding_agent`, `coding`, and the
    /// `code_agent` spelling.
    pub fn from_agent_name(name: &str) -> Option<Role> {
        let lower = name.to_ascii_lowercase();
        let base = lower.strip_suffix("_agent").unwrap_or(&lower);
        match base {
            "planner" | "planning" => Some(Role::Planner),
            "retrieval" => Some(Role::Retrieval),
            "coding" | "code" => Some(Role::Coding),
            "critic" => Some(Role::Critic),
            "verification" | "verifier" => Some(Role::Verification),
            "user_proxy" | "user" => Some(Role::UserProxy),
            _ => None,
        }
    }

    pub fn uses_model(self) -> bool {
        self != Role::UserProxy
    }
}

/// Who produced an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Planner,
    Retrieval,
    Coding,
    Critic,
    Verification,
    UserProxy,
    System,
    User,
}

impl From<Role> for Actor {
    fn from(r: Role) -> Self {
        match r {
            Role::Planner => Actor::Planner,
            Role::Retrieval => Actor::Retrieval,
            Role::Coding => Actor::Coding,
            Role::Critic => Actor::Critic,
            Role::Verification => Actor::Verification,
            Role::UserProxy => Actor::UserProxy,
        }
    }
}

impl Actor {
    pub fn as_str(self) -> &'static str {
        match self {
            Actor::System => "system",
            Actor::User => "user",
            Actor::Planner => "planner",
            Actor::Retrieval => "retrieval",
            Actor::Coding => "coding",
            Actor::Critic => "critic",
            Actor::Verification => "verification",
            Actor::UserProxy => "user_proxy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubtaskStatus {
    Pending,
    InProgress,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subtask {
    pub index: u32,
    pub description: String,
    /// Agent the planner delegated the subtask to; decides whether its first
    /// turn is a retrieval or goes straight to coding.
    pub assignee: Role,
    pub status: SubtaskStatus,
}

/// What caused a code version to be written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provocation {
    Subtask(u32),
    CritiqueRound(u32),
    VerificationRound(u32),
    Refinement(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeArtifact {
    pub version: u32,
    pub source: String,
    pub produced_by_phase: Phase,
    pub provoking_input: Provocation,
    /// Version whose failure this one tries to repair.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retry_of: Option<u32>,
    /// Filled in once the script has run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution: Option<ExecutionOutcome>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Critique {
    pub index: u32,
    pub problem: String,
    pub suggested_fix: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub related_subtask: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CritiqueRound {
    pub round: u32,
    pub render_set_id: String,
    pub items: Vec<Critique>,
    pub approved: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerificationStatus {
    Resolved,
    Partial,
    Unresolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationItem {
    pub critique_index: u32,
    pub status: VerificationStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followup_instruction: Option<String>,
}

/// What a verification round checks: a critic round, or a user refinement
/// (verified against one critique synthesized from its text).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationTarget {
    CritiqueRound(u32),
    Refinement(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationRound {
    pub round: u32,
    pub target: VerificationTarget,
    pub render_set_id_before: String,
    pub render_set_id_after: String,
    /// The critiques that were checked, in order.
    pub critiques: Vec<Critique>,
    pub items: Vec<VerificationItem>,
    pub all_resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRecord {
    /// Relative to the session directory.
    pub image_path: PathBuf,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub camera_distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenderSet {
    pub render_set_id: String,
    pub view_count: u32,
    pub views: Vec<ViewRecord>,
    pub bbox: BBox,
}

impl RenderSet {
    /// Ids are `rs001`, `rs002`, … in creation order.
    pub fn id_for(ordinal: usize) -> String {
        format!("rs{ordinal:03}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementRequest {
    pub text: String,
    pub submitted_at: DateTime<Utc>,
    pub terminator: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    /// Factory-reset the scene before running each complete script version.
    #[default]
    ResetPerVersion,
    /// Keep the scene between executions.
    Persistent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticTopology {
    /// The vision model is the critic/verifier itself.
    #[default]
    Direct,
    /// A text model drives the vision model through a scene tool.
    Driver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub m_views: u32,
    pub max_exec_retries: u32,
    pub max_critique_rounds: u32,
    pub max_verification_rounds: u32,
    pub termination_keyword: String,
    /// Role key (`planner`, `coding`, …, plus `*_driver`) → model.
    pub models: BTreeMap<String, ModelBinding>,
    pub render_resolution: u32,
    pub exec_timeout_ms: u64,
    pub fov_deg: f64,
    pub camera_margin: f64,
    pub rag_top_k: usize,
    /// Recent events included in each assembled context.
    pub context_events: usize,
    /// Rough token budget for an assembled context (4 chars per token).
    pub context_token_budget: usize,
    pub execution_mode: ExecutionMode,
    pub critic_topology: CriticTopology,
}

impl Default for SessionConfig {
    fn default() -> Self {
        let models = GatewayConfig::defaults().roles.iter().map(|(k, p)| (k.clone(), p.binding())).collect();
        Self {
            m_views: 5,
            max_exec_retries: 5,
            max_critique_rounds: 3,
            max_verification_rounds: 3,
            termination_keyword: "COMPLETE".into(),
            models,
            render_resolution: 768,
            exec_timeout_ms: 120_000,
            fov_deg: 50.0,
            camera_margin: 1.2,
            rag_top_k: 5,
            context_events: 12,
            context_token_budget: 24_000,
            execution_mode: ExecutionMode::ResetPerVersion,
            critic_topology: CriticTopology::Direct,
        }
    }
}

impl SessionConfig {
    pub fn binding(&self, key: &str) -> ModelBinding {
        self.models.get(key).cloned().unwrap_or_default()
    }
}
