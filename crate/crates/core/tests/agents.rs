use std::path::Path;

use meshwright_bridge::{BBox, ExecutionError};
use meshwright_core::agents::{
    agent_role, code_step, critique, critique_via_driver, extract_code, parse_critique, parse_plan, parse_verification,
    plan, retrieve_and_summarize, verify, AgentEnv, AgentError, PromptSet, RetrievalQuery, CRITIQUE_SCENE_TOOL,
    EXECUTE_CODE_TOOL,
};
use meshwright_core::scenario::Scenario;
use meshwright_core::{
    assemble_context, Critique, RenderSet, Role, SessionConfig, SessionState, VerificationStatus, ViewRecord,
};
use meshwright_gateway::{ChatResponse, ScriptedBackend, ScriptedEntry, ScriptedTranscript};
use serde_json::json;

fn backend(entries: Vec<ScriptedEntry>) -> ScriptedBackend {
    ScriptedBackend::new(ScriptedTranscript::new(entries))
}

fn critiques(n: u32) -> Vec<Critique> {
    (1..=n)
        .map(|i| Critique { index: i, problem: format!("flaw {i}"), suggested_fix: format!("repair {i}"), related_subtask: None })
        .collect()
}

fn render_set(root: &Path, id: &str) -> RenderSet {
    let dir = root.join("renders").join(id);
    std::fs::create_dir_all(&dir).unwrap();
    let views = (1..=5)
        .map(|k| {
            std::fs::write(dir.join(format!("view{k}.png")), format!("{id}-{k}")).unwrap();
            ViewRecord {
                image_path: format!("renders/{id}/view{k}.png").into(),
                azimuth_deg: 72.0 * (k - 1) as f64,
                elevation_deg: 20.0,
                camera_distance: 4.0,
            }
        })
        .collect();
    RenderSet { render_set_id: id.into(), view_count: 5, views, bbox: BBox::new([-1.0; 3], [1.0; 3]) }
}

#[test]
fn plan_lines_map_to_roles_in_order() {
    let out = parse_plan("retrieval_agent: look up bevel modifiers\ncoding_agent: model the seat\nCOMPLETE", "COMPLETE");
    assert!(out.complete);
    let got: Vec<(Role, &str)> = out.entries.iter().map(|e| (e.assignee, e.task.as_str())).collect();
    assert_eq!(got, [(Role::Retrieval, "look up bevel modifiers"), (Role::Coding, "model the seat")]);

    let prose = parse_plan("Here is my plan.\nFirst we think about it.", "COMPLETE");
    assert!(prose.entries.is_empty() && !prose.complete);

    // Unknown agents are not work items.
    let odd = parse_plan("painter_agent: paint it\ncoding_agent: build it", "COMPLETE");
    assert_eq!(odd.work_items().count(), 1);
}

#[test]
fn critique_lines_and_approval() {
    let items = parse_critique("1. problem: legs float | fix: lower them\n2. problem: no backrest | fix: add one | subtask: 2").unwrap();
    assert_eq!(items.len(), 2);
    assert_eq!(items[0].problem, "legs float");
    assert_eq!(items[0].suggested_fix, "lower them");
    assert_eq!(items[1].related_subtask, Some(2));
    assert!(parse_critique("NO ISSUES").unwrap().is_empty());
    assert!(parse_critique("Looks mostly fine to me.").is_err());
    assert!(parse_critique("1. problem: legs float").is_err());
}

#[test]
fn verification_needs_one_marker_per_critique() {
    let cs = critiques(2);
    let items = parse_verification("1. RESOLVED\n2. PARTIAL: move it further", &cs).unwrap();
    assert_eq!(items[0].status, VerificationStatus::Resolved);
    assert_eq!(items[0].followup_instruction, None);
    assert_eq!(items[1].status, VerificationStatus::Partial);
    assert_eq!(items[1].followup_instruction.as_deref(), Some("move it further"));

    // Without a follow-up the critique's own fix is carried forward.
    let items = parse_verification("1. UNRESOLVED\n2. RESOLVED", &cs).unwrap();
    assert_eq!(items[0].followup_instruction.as_deref(), Some("repair 1"));

    assert!(parse_verification("1. RESOLVED", &cs).is_err());
    assert!(parse_verification("1. RESOLVED\n2. maybe", &cs).is_err());
}

#[test]
fn code_comes_from_the_tool_call_before_any_fence() {
    let script = "import bpy\nbpy.ops.mesh.primitive_cube_add(size=2.0)\n";
    let call = ChatResponse::tool_call(EXECUTE_CODE_TOOL, json!({ "code": script }));
    assert_eq!(extract_code(&call).as_deref(), Some(script));

    let fenced = ChatResponse::text("Here you go:\n```python\nimport bpy\nprint(1)\n```\nand more\n```python\nx = 2\n```");
    assert_eq!(extract_code(&fenced).as_deref(), Some("import bpy\nprint(1)\n"));
    assert_eq!(extract_code(&ChatResponse::text("no code here")), None);
}

#[test]
fn planner_is_reprompted_once_then_fails() {
    let prompts = PromptSet::shipped();
    let config = SessionConfig::default();
    let b = backend(vec![
        ScriptedEntry::new("planner", ChatResponse::text("I will think about this.")),
        ScriptedEntry::new("planner", ChatResponse::text("coding_agent: build the frame\nCOMPLETE")),
    ]);
    let mut env = AgentEnv::new(&b, &prompts, &config);
    let (out, subtasks) = plan(&mut env, "a bicycle").unwrap();
    assert!(out.complete);
    assert_eq!(subtasks.len(), 1);
    assert_eq!(subtasks[0].index, 1);
    let calls = env.take_calls();
    assert_eq!(calls.len(), 2);
    assert!(calls[1].request.full_text().contains("Your previous reply could not be used"));

    let b = backend(vec![ScriptedEntry::new("planner", ChatResponse::text("Nothing to list.")).repeating()]);
    let mut env = AgentEnv::new(&b, &prompts, &config);
    let err = plan(&mut env, "a bicycle").unwrap_err();
    assert!(matches!(err, AgentError::Parse { role: Role::Planner, .. }), "{err:?}");
    assert_eq!(env.calls.len(), 2);

    let mut env = AgentEnv::new(&b, &prompts, &config);
    assert!(matches!(plan(&mut env, "  "), Err(AgentError::Precondition(_))));
    assert!(env.calls.is_empty());
}

#[test]
fn coder_without_code_twice_is_a_parse_error() {
    let prompts = PromptSet::shipped();
    let config = SessionConfig::default();
    let state = SessionState::default();
    let context = assemble_context(&state, Role::Coding);
    let b = backend(vec![ScriptedEntry::new("coding", ChatResponse::text("Sure, I can help with that.")).repeating()]);
    let mut env = AgentEnv::new(&b, &prompts, &config);
    let err = code_step(&mut env, &context, "model the seat", "").unwrap_err();
    assert!(matches!(err, AgentError::Parse { role: Role::Coding, .. }), "{err:?}");

    let b = backend(vec![ScriptedEntry::new("coding", ChatResponse::tool_call(EXECUTE_CODE_TOOL, json!({ "code": "import bpy\n" })))]);
    let mut env = AgentEnv::new(&b, &prompts, &config);
    assert_eq!(code_step(&mut env, &context, "model the seat", "").unwrap(), "import bpy\n");
    assert_eq!(env.calls[0].request.tools[0].name, EXECUTE_CODE_TOOL);
    assert!(matches!(code_step(&mut env, &context, " ", ""), Err(AgentError::Precondition(_))));
}

#[test]
fn error_query_ranks_the_principled_inputs_first() {
    let scenario = Scenario::chair();
    let index = scenario.retriever().unwrap();
    let prompts = PromptSet::shipped();
    let config = SessionConfig::default();
    let b = backend(vec![ScriptedEntry::new("retrieval", ChatResponse::text("Use \"Specular IOR Level\".")).requiring("Principled BSDF inputs")]);
    let mut env = AgentEnv::new(&b, &prompts, &config);
    let error = ExecutionError::script(
        "KeyError: bpy_prop_collection[key]: key \"Specular\" not found",
        "Traceback (most recent call last):\nKeyError: bpy_prop_collection[key]: key \"Specular\" not found\n",
    );
    let record =
        retrieve_and_summarize(&mut env, Some(index.as_ref()), RetrievalQuery::Error(&error), "a chair", "backrest", Some(2)).unwrap();
    assert_eq!(record.top_chunks[0].title, "Principled BSDF inputs");
    assert_eq!(record.subtask, Some(2));
    assert_eq!(record.summary_text.as_deref(), Some("Use \"Specular IOR Level\"."));

    let mut env = AgentEnv::new(&b, &prompts, &config);
    let err = retrieve_and_summarize(&mut env, None, RetrievalQuery::Intent("legs"), "a chair", "legs", Some(1)).unwrap_err();
    assert!(matches!(err, AgentError::RetrievalUnavailable(_)));
    let err = retrieve_and_summarize(&mut env, Some(index.as_ref()), RetrievalQuery::Intent(""), "a chair", "legs", Some(1))
        .unwrap_err();
    assert!(matches!(err, AgentError::Precondition(_)));
    assert!(env.calls.is_empty());
}

#[test]
fn critic_sees_every_view_and_verifier_sees_both_sets() {
    let dir = tempfile::tempdir().unwrap();
    let before = render_set(dir.path(), "r1");
    let after = render_set(dir.path(), "r2");
    let prompts = PromptSet::shipped();
    let config = SessionConfig::default();
    let b = backend(vec![
        ScriptedEntry::new("critic", ChatResponse::text("1. problem: legs float | fix: lower them")),
        ScriptedEntry::new("verification", ChatResponse::text("1. RESOLVED")),
    ]);
    let mut env = AgentEnv::new(&b, &prompts, &config).with_attachment_root(dir.path());
    let items = critique(&mut env, &before, "a chair", &[]).unwrap();
    assert_eq!(items.len(), 1);
    let attached: usize = env.calls[0].request.messages.iter().map(|m| m.attachments.len()).sum();
    assert_eq!(attached, 5);

    let verdict = verify(&mut env, &before, &after, &items, "a chair").unwrap();
    assert_eq!(verdict[0].status, VerificationStatus::Resolved);
    let attached: usize = env.calls[1].request.messages.iter().map(|m| m.attachments.len()).sum();
    assert_eq!(attached, 10);
    assert!(matches!(verify(&mut env, &before, &after, &[], "a chair"), Err(AgentError::Precondition(_))));
}

#[test]
fn verifier_miscounting_twice_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let before = render_set(dir.path(), "r1");
    let after = render_set(dir.path(), "r2");
    let prompts = PromptSet::shipped();
    let config = SessionConfig::default();
    let b = backend(vec![ScriptedEntry::new("verification", ChatResponse::text("1. RESOLVED\n2. RESOLVED")).repeating()]);
    let mut env = AgentEnv::new(&b, &prompts, &config).with_attachment_root(dir.path());
    let err = verify(&mut env, &before, &after, &critiques(3), "a chair").unwrap_err();
    assert!(matches!(err, AgentError::Parse { role: Role::Verification, .. }), "{err:?}");
    assert_eq!(env.calls.len(), 2);
}

#[test]
fn driver_passes_the_target_prompt_to_the_vision_critic() {
    let dir = tempfile::tempdir().unwrap();
    let renders = render_set(dir.path(), "r1");
    let prompts = PromptSet::shipped();
    let config = SessionConfig::default();
    let b = backend(vec![
        ScriptedEntry::new("critic_driver", ChatResponse::tool_call(CRITIQUE_SCENE_TOOL, json!({ "target_prompt": "a wooden chair" }))),
        ScriptedEntry::new("critic", ChatResponse::text("NO ISSUES")).requiring("a wooden chair"),
    ]);
    let mut env = AgentEnv::new(&b, &prompts, &config).with_attachment_root(dir.path());
    assert!(critique_via_driver(&mut env, &renders, "a wooden chair", &[]).unwrap().is_empty());
    assert_eq!(env.calls.len(), 2);
}

#[test]
fn only_the_user_proxy_lacks_a_model() {
    let prompts = PromptSet::shipped();
    let config = SessionConfig::default();
    for role in Role::ALL {
        let r = agent_role(role, &prompts, &config);
        assert_eq!(r.model_binding.is_none(), role == Role::UserProxy, "{role:?}");
        assert_eq!(r.system_prompt.is_empty(), role == Role::UserProxy, "{role:?}");
    }
}

#[test]
fn shipped_system_prompts_keep_the_reference_sentences() {
    let prompts = PromptSet::shipped();
    let golden = include_str!("golden/system_sentences.txt");
    let mut checked = 0;
    for line in golden.lines().filter(|l| !l.trim().is_empty()) {
        let (key, sentence) = line.split_once('|').unwrap();
        let role = Role::ALL.into_iter().find(|r| r.key() == key).unwrap();
        let text = prompts.system_prompt(role).unwrap();
        let flat = text.split_whitespace().collect::<Vec<_>>().join(" ");
        assert!(flat.contains(sentence), "{key} prompt lacks: {sentence}");
        checked += 1;
    }
    assert!(checked >= 20);
}
