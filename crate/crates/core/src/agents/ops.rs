use meshwright_bridge::ExecutionError;
use meshwright_docrag::{error_query_text, Retriever};
use meshwright_gateway::{ChatMessage, ChatRequest, ChatResponse, ImageRef, ToolSpec};

use crate::session::{
    ContextBundle, Critique, RenderSet, RetrievalKind, RetrievalRecord, RetrievedChunk, Role, Subtask, SubtaskStatus,
    VerificationItem,
};

use super::parse::{extract_code, parse_critique, parse_plan, parse_verification, PlannerOutput};
use super::prompts::Vars;
use super::roles::{critique_scene_tool, execute_code_tool, CRITIQUE_SCENE_TOOL};
use super::{AgentEnv, AgentError, CallRecord};

fn reply_text(r: &ChatResponse) -> String {
    let mut s = r.text.clone().unwrap_or_default();
    for call in &r.tool_calls {
        if !s.is_empty() {
            s.push('\n');
        }
        s.push_str(&format!("[{}] {}", call.name, call.arguments));
    }
    s
}

/// Sends `messages`, parses the reply, and on a parse failure re-prompts once
/// with the reply and a corrective note appended.
fn converse<T>(
    env: &mut AgentEnv<'_>,
    role: Role,
    agent: &str,
    mut messages: Vec<ChatMessage>,
    tools: Vec<ToolSpec>,
    corrective: &str,
    parse: impl Fn(&ChatResponse) -> Result<T, String>,
) -> Result<T, AgentError> {
    let mut last_detail = String::new();
    for attempt in 0..2 {
        if attempt == 1 {
            messages.push(ChatMessage::user(format!("Your previous reply could not be used: {last_detail}. {corrective}")));
        }
        let mut request = ChatRequest::new(agent, messages.clone());
        request.tools = tools.clone();
        request.binding = env.config.binding(agent);
        request.attachment_root = env.attachment_root.map(|p| p.to_path_buf());
        let result = env.backend.complete(&request);
        env.calls.push(CallRecord { request, response: result.clone() });
        let response = result.map_err(|source| AgentError::Gateway { role, source })?;
        match parse(&response) {
            Ok(v) => return Ok(v),
            Err(detail) => {
                last_detail = detail;
                messages.push(ChatMessage::assistant(reply_text(&response)));
            }
        }
    }
    Err(AgentError::Parse { role, detail: last_detail })
}

fn system(env: &AgentEnv<'_>, role: Role) -> ChatMessage {
    ChatMessage::system(env.prompts.system_prompt(role).unwrap_or_default())
}

fn plan_text(subtasks: &[Subtask]) -> String {
    if subtasks.is_empty() {
        return "(no plan)\n".into();
    }
    subtasks.iter().map(|s| format!("{}. {}: {}\n", s.index, s.assignee.agent_name(), s.description)).collect()
}

/// Decomposes the goal into subtasks delegated to retrieval or coding.
pub fn plan(env: &mut AgentEnv<'_>, goal: &str) -> Result<(PlannerOutput, Vec<Subtask>), AgentError> {
    if goal.trim().is_empty() {
        return Err(AgentError::Precondition("goal is empty".into()));
    }
    let keyword = env.config.termination_keyword.clone();
    let vars: Vars = [("goal", goal.to_owned())].into();
    let messages = vec![system(env, Role::Planner), ChatMessage::user(env.prompts.render("planner.user", &vars))];
    let output = converse(
        env,
        Role::Planner,
        Role::Planner.key(),
        messages,
        Vec::new(),
        "List the subtasks one per line as <agent>:<task> using retrieval_agent or coding_agent.",
        |r| {
            let out = parse_plan(r.text.as_deref().unwrap_or_default(), &keyword);
            if out.work_items().next().is_some() {
                Ok(out)
            } else {
                Err("no <agent>:<task> lines for retrieval_agent or coding_agent".into())
            }
        },
    )?;
    let subtasks = output
        .work_items()
        .enumerate()
        .map(|(i, e)| Subtask {
            index: i as u32 + 1,
            description: e.task.clone(),
            assignee: e.assignee,
            status: SubtaskStatus::Pending,
        })
        .collect();
    Ok((output, subtasks))
}

#[derive(Debug, Clone, Copy)]
pub enum RetrievalQuery<'q> {
    Intent(&'q str),
    Error(&'q ExecutionError),
}

/// Looks the query up in the index and has the retrieval model condense the
/// hits. Index problems surface as `RetrievalUnavailable` so callers can go
/// on without documentation.
pub fn retrieve_and_summarize(
    env: &mut AgentEnv<'_>,
    index: Option<&dyn Retriever>,
    query: RetrievalQuery<'_>,
    goal: &str,
    subtask: &str,
    subtask_index: Option<u32>,
) -> Result<RetrievalRecord, AgentError> {
    let (kind, text) = match query {
        RetrievalQuery::Intent(t) => (RetrievalKind::TaskIntent, t.to_owned()),
        RetrievalQuery::Error(e) => (RetrievalKind::ErrorMessage, error_query_text(e)),
    };
    if text.trim().is_empty() {
        return Err(AgentError::Precondition("empty retrieval query".into()));
    }
    let index = index.ok_or_else(|| AgentError::RetrievalUnavailable("no documentation index loaded".into()))?;
    let k = env.config.rag_top_k;
    let hits = match query {
        RetrievalQuery::Intent(t) => index.query(t, k),
        RetrievalQuery::Error(e) => index.error_query(e, k),
    }
    .map_err(|e| AgentError::RetrievalUnavailable(e.to_string()))?;
    let top_chunks: Vec<RetrievedChunk> = hits
        .iter()
        .filter_map(|h| {
            index.chunk(h.chunk_id).map(|c| RetrievedChunk {
                chunk_id: h.chunk_id,
                score: h.score,
                title: c.title.clone(),
                body: c.body.clone(),
            })
        })
        .collect();

    let documents = if top_chunks.is_empty() {
        "(no matching documentation)".to_owned()
    } else {
        top_chunks.iter().map(|c| format!("### {}\n{}\n", c.title, c.body)).collect::<Vec<_>>().join("\n")
    };
    let error = match kind {
        RetrievalKind::ErrorMessage => format!("The last execution failed with:\n{text}\n"),
        RetrievalKind::TaskIntent => String::new(),
    };
    let vars: Vars =
        [("goal", goal.to_owned()), ("subtask", subtask.to_owned()), ("error", error), ("documents", documents)].into();
    let messages = vec![system(env, Role::Retrieval), ChatMessage::user(env.prompts.render("retrieval.user", &vars))];
    let summary = converse(
        env,
        Role::Retrieval,
        Role::Retrieval.key(),
        messages,
        Vec::new(),
        "Reply with the summary as plain text.",
        |r| r.text.clone().filter(|t| !t.trim().is_empty()).ok_or_else(|| "empty summary".to_owned()),
    )?;
    Ok(RetrievalRecord { kind, subtask: subtask_index, query: text, top_chunks, summary_text: Some(summary) })
}

/// Asks the coder for the next full script version.
pub fn code_step(
    env: &mut AgentEnv<'_>,
    context: &ContextBundle,
    instruction: &str,
    documents: &str,
) -> Result<String, AgentError> {
    if instruction.trim().is_empty() {
        return Err(AgentError::Precondition("empty coding instruction".into()));
    }
    let code = match &context.code {
        Some(c) => {
            let mut s = format!("(version {})\n```python\n{}", c.version, c.source);
            if !c.source.ends_with('\n') {
                s.push('\n');
            }
            s + "```\n"
        }
        None => "(none yet)\n".to_owned(),
    };
    let or_none = |s: String| if s.is_empty() { "(none)\n".to_owned() } else { s };
    let vars: Vars = [
        ("goal", context.goal.clone()),
        ("plan", or_none(context.render_subtasks())),
        ("code", code),
        ("critiques", or_none(context.render_open_items())),
        ("history", or_none(context.render_history())),
        ("documents", if documents.trim().is_empty() { "(none)".to_owned() } else { documents.to_owned() }),
        ("subtask", instruction.to_owned()),
    ]
    .into();
    let messages = vec![system(env, Role::Coding), ChatMessage::user(env.prompts.render("coding.user", &vars))];
    converse(
        env,
        Role::Coding,
        Role::Coding.key(),
        messages,
        vec![execute_code_tool()],
        "Call execute_code_tool with the full script as the code argument, or reply with one ```python fenced block.",
        |r| extract_code(r).ok_or_else(|| "no code found".to_owned()),
    )
}

fn view_images(env: &AgentEnv<'_>, renders: &RenderSet) -> Result<Vec<ImageRef>, AgentError> {
    if renders.views.is_empty() {
        return Err(AgentError::Precondition(format!("render set {} has no views", renders.render_set_id)));
    }
    let root = env.attachment_root.unwrap_or(std::path::Path::new("."));
    renders
        .views
        .iter()
        .map(|v| {
            ImageRef::from_file(root, &v.image_path)
                .map_err(|e| AgentError::Precondition(format!("unreadable render {}: {e}", v.image_path.display())))
        })
        .collect()
}

/// Vision critique of one render set against the goal (prompt P).
pub fn critique(
    env: &mut AgentEnv<'_>,
    renders: &RenderSet,
    goal: &str,
    subtasks: &[Subtask],
) -> Result<Vec<Critique>, AgentError> {
    let images = view_images(env, renders)?;
    let vars: Vars =
        [("goal", goal.to_owned()), ("views", renders.views.len().to_string()), ("plan", plan_text(subtasks))].into();
    let messages = vec![
        system(env, Role::Critic),
        ChatMessage::user(env.prompts.render("critic.user", &vars)).with_attachments(images),
    ];
    converse(
        env,
        Role::Critic,
        Role::Critic.key(),
        messages,
        Vec::new(),
        "Reply with numbered lines `N. problem: ... | fix: ...`, or exactly NO ISSUES.",
        |r| parse_critique(r.text.as_deref().unwrap_or_default()).map_err(|e| e.0),
    )
}

/// Driver topology: a text model is asked to call `critique_scene_tool`; the
/// tool runs the vision critique with the target prompt it passed.
pub fn critique_via_driver(
    env: &mut AgentEnv<'_>,
    renders: &RenderSet,
    goal: &str,
    subtasks: &[Subtask],
) -> Result<Vec<Critique>, AgentError> {
    let vars: Vars = [("goal", goal.to_owned())].into();
    let messages =
        vec![system(env, Role::Critic), ChatMessage::user(env.prompts.render("critic_driver.user", &vars))];
    let target = converse(
        env,
        Role::Critic,
        "critic_driver",
        messages,
        vec![critique_scene_tool()],
        "Call critique_scene_tool with the target prompt.",
        |r| {
            r.tool_calls
                .iter()
                .find(|c| c.name == CRITIQUE_SCENE_TOOL)
                .map(|c| c.arguments["target_prompt"].as_str().unwrap_or(goal).to_owned())
                .ok_or_else(|| "critique_scene_tool was not called".to_owned())
        },
    )?;
    critique(env, renders, &target, subtasks)
}

/// Before/after comparison; one item per critique, same order.
pub fn verify(
    env: &mut AgentEnv<'_>,
    before: &RenderSet,
    after: &RenderSet,
    critiques: &[Critique],
    goal: &str,
) -> Result<Vec<VerificationItem>, AgentError> {
    if critiques.is_empty() {
        return Err(AgentError::Precondition("nothing to verify".into()));
    }
    let mut images = view_images(env, before)?;
    images.extend(view_images(env, after)?);
    let listing: String =
        critiques.iter().enumerate().map(|(i, c)| format!("{}. problem: {} | fix: {}\n", i + 1, c.problem, c.suggested_fix)).collect();
    let vars: Vars =
        [("goal", goal.to_owned()), ("views", after.views.len().to_string()), ("critiques", listing)].into();
    let messages = vec![
        system(env, Role::Verification),
        ChatMessage::user(env.prompts.render("verification.user", &vars)).with_attachments(images),
    ];
    converse(
        env,
        Role::Verification,
        Role::Verification.key(),
        messages,
        Vec::new(),
        &format!("Reply with exactly {} numbered lines, each RESOLVED, PARTIAL: <followup> or UNRESOLVED: <followup>.", critiques.len()),
        |r| parse_verification(r.text.as_deref().unwrap_or_default(), critiques).map_err(|e| e.0),
    )
}
