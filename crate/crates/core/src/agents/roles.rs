use meshwright_gateway::{ModelBinding, ToolSpec};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::session::{Role, SessionConfig};

use super::parse::EXECUTE_CODE_TOOL;
use super::prompts::PromptSet;

pub const RETRIEVE_INFORMATION_TOOL: &str = "retrieve_information_tool";
pub const CRITIQUE_SCENE_TOOL: &str = "critique_scene_tool";
pub const VERIFY_SCENE_TOOL: &str = "verify_scene_tool";

pub fn execute_code_tool() -> ToolSpec {
    ToolSpec {
        name: EXECUTE_CODE_TOOL.into(),
        description: "Execute a complete Blender bpy script in the scene and report stdout, stderr and any error.".into(),
        parameters: json!({
            "type": "object",
            "properties": {"code": {"type": "string", "description": "Full Python source of the script."}},
            "required": ["code"]
        }),
    }
}

pub fn retrieve_information_tool() -> ToolSpec {
    ToolSpec {
        name: RETRIEVE_INFORMATION_TOOL.into(),
        description: "Search the Blender documentation knowledge base.".into(),
        parameters: json!({
            "type": "object",
            "properties": {"query": {"type": "string", "description": "Question or error message."}},
            "required": ["query"]
        }),
    }
}

pub fn critique_scene_tool() -> ToolSpec {
    ToolSpec {
        name: CRITIQUE_SCENE_TOOL.into(),
        description: "Render the scene from several views and list visual problems against the target prompt.".into(),
        parameters: json!({
            "type": "object",
            "properties": {"target_prompt": {"type": "string"}},
            "required": ["target_prompt"]
        }),
    }
}

pub fn verify_scene_tool() -> ToolSpec {
    ToolSpec {
        name: VERIFY_SCENE_TOOL.into(),
        description: "Compare renders before and after the latest edit and report which critiques were fixed.".into(),
        parameters: json!({
            "type": "object",
            "properties": {"target_prompt": {"type": "string"}},
            "required": ["target_prompt"]
        }),
    }
}

/// A role as configured for one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRole {
    pub name: Role,
    /// Empty for the user proxy.
    pub system_prompt: String,
    pub tools: Vec<ToolSpec>,
    /// `None` only for the user proxy, which never calls a model.
    pub model_binding: Option<ModelBinding>,
}

pub fn role_tools(role: Role) -> Vec<ToolSpec> {
    match role {
        Role::Retrieval => vec![retrieve_information_tool()],
        Role::Coding => vec![execute_code_tool()],
        Role::Critic => vec![critique_scene_tool()],
        Role::Verification => vec![verify_scene_tool()],
        Role::Planner | Role::UserProxy => Vec::new(),
    }
}

pub fn agent_role(role: Role, prompts: &PromptSet, config: &SessionConfig) -> AgentRole {
    AgentRole {
        name: role,
        system_prompt: prompts.system_prompt(role).unwrap_or_default(),
        tools: role_tools(role),
        model_binding: role.uses_model().then(|| config.binding(role.key())),
    }
}
