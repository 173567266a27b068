mod common;

use meshwright_bridge::{BBox, ExecutionOutcome};
use meshwright_core::{
    assemble_context, Actor, Critique, CritiqueRound, Payload, Phase, Provocation, Reason, RenderSet, Role,
    SessionConfig, SessionInit, SessionLog, StepClock, Subtask, SubtaskStatus, VerificationItem, VerificationRound,
    VerificationStatus, VerificationTarget, ViewRecord,
};

fn open(config: SessionConfig) -> SessionLog {
    let mut log = SessionLog::in_memory(Box::new(StepClock::fixed()));
    let init = SessionInit { session_id: "c".into(), goal: "a fire hydrant".into(), config };
    log.record(
        Actor::System,
        Payload::PhaseChanged { from: None, to: Phase::InitialCreation, reason: Reason::PhaseEntered, init: Some(Box::new(init)) },
    )
    .unwrap();
    log
}

fn plan(log: &mut SessionLog, n: u32) {
    let subtasks = (1..=n)
        .map(|i| Subtask { index: i, description: format!("part {i}"), assignee: Role::Coding, status: SubtaskStatus::Pending })
        .collect();
    log.record(Actor::Planner, Payload::Plan { subtasks, complete: true }).unwrap();
}

fn submit(log: &mut SessionLog, source: &str, provoking_input: Provocation) {
    let version = log.state().code_versions.len() as u32 + 1;
    let phase = log.state().phase;
    log.record(Actor::Coding, Payload::CodeSubmitted { version, source: source.into(), phase, provoking_input, retry_of: None })
        .unwrap();
    let outcome = ExecutionOutcome::success(String::new(), String::new(), 0);
    log.record(Actor::System, Payload::CodeExecuted { version, outcome }).unwrap();
}

fn render(log: &mut SessionLog) -> String {
    let id = RenderSet::id_for(log.state().render_sets.len() + 1);
    let views = (1..=5)
        .map(|k| ViewRecord {
            image_path: format!("renders/{id}/view{k}.png").into(),
            azimuth_deg: 72.0 * (k - 1) as f64,
            elevation_deg: 20.0,
            camera_distance: 4.0,
        })
        .collect();
    let set = RenderSet { render_set_id: id.clone(), view_count: 5, views, bbox: BBox::new([-1.0; 3], [1.0; 3]) };
    log.record(Actor::System, Payload::Render(set)).unwrap();
    id
}

fn critique(index: u32, problem: &str, fix: &str) -> Critique {
    Critique { index, problem: problem.into(), suggested_fix: fix.into(), related_subtask: None }
}

#[test]
fn latest_of_three_versions_fills_the_code_slot() {
    let mut log = open(SessionConfig::default());
    plan(&mut log, 3);
    let sources = ["# version one\nimport bpy\n", "# version two\nimport bpy\n", "# version three\nimport bpy\nx = 3\n"];
    for (i, s) in sources.iter().enumerate() {
        submit(&mut log, s, Provocation::Subtask(i as u32 + 1));
    }
    let bundle = assemble_context(log.state(), Role::Coding);
    assert_eq!(bundle.code_source(), Some(sources[2]));
    let text = bundle.render();
    assert_eq!(text.matches(sources[2]).count(), 1);
    assert!(!text.contains("version one") && !text.contains("version two"));
}

#[test]
fn fresh_session_has_goal_and_no_code() {
    let log = open(SessionConfig::default());
    let bundle = assemble_context(log.state(), Role::Coding);
    assert_eq!(bundle.goal, "a fire hydrant");
    assert!(bundle.code.is_none());
    assert!(bundle.subtasks.is_empty() && bundle.open_items.is_empty());
    assert!(bundle.render().starts_with("## Goal\na fire hydrant\n"));
}

#[test]
fn unresolved_critique_is_listed_with_its_fix() {
    let mut log = open(SessionConfig::default());
    plan(&mut log, 1);
    submit(&mut log, "import bpy\n", Provocation::Subtask(1));
    log.record(Actor::System, Payload::PhaseChanged { from: Some(Phase::InitialCreation), to: Phase::AutoRefine, reason: Reason::ExecOk, init: None })
        .unwrap();
    let before = render(&mut log);
    let items = vec![
        critique(1, "The cap is floating", "Move the cap down"),
        critique(2, "The chains are missing", "Add two chains on the sides"),
    ];
    log.record(Actor::Critic, Payload::Critique(CritiqueRound { round: 1, render_set_id: before.clone(), items: items.clone(), approved: false }))
        .unwrap();
    submit(&mut log, "import bpy\n# fixed\n", Provocation::CritiqueRound(1));
    let after = render(&mut log);
    let v = VerificationRound {
        round: 1,
        target: VerificationTarget::CritiqueRound(1),
        render_set_id_before: before,
        render_set_id_after: after,
        critiques: items,
        items: vec![
            VerificationItem { critique_index: 1, status: VerificationStatus::Resolved, followup_instruction: None },
            VerificationItem {
                critique_index: 2,
                status: VerificationStatus::Partial,
                followup_instruction: Some("Only one chain was added".into()),
            },
        ],
        all_resolved: false,
    };
    log.record(Actor::Verification, Payload::Verification(v)).unwrap();

    let bundle = assemble_context(log.state(), Role::Coding);
    assert_eq!(bundle.open_items.len(), 1);
    let text = bundle.render();
    assert!(text.contains("The chains are missing"));
    assert!(text.contains("Add two chains on the sides"));
    assert!(text.contains("Only one chain was added"));
    assert!(!bundle.render_open_items().contains("The cap is floating"), "resolved items leave the open list");
}

#[test]
fn tight_budget_drops_history_but_keeps_goal_and_code() {
    let config = SessionConfig { context_token_budget: 40, context_events: 50, ..SessionConfig::default() };
    let mut log = open(config);
    plan(&mut log, 6);
    let big = format!("import bpy\n{}\n", "# filler line\n".repeat(20));
    for i in 1..=6 {
        submit(&mut log, &big, Provocation::Subtask(i));
    }
    let bundle = assemble_context(log.state(), Role::Coding);
    assert!(bundle.dropped_events > 0);
    assert!(bundle.recent.is_empty());
    let text = bundle.render();
    assert!(text.contains("a fire hydrant"));
    assert_eq!(text.matches(big.as_str()).count(), 1);
}

#[test]
fn only_last_k_events_are_kept() {
    let config = SessionConfig { context_events: 3, ..SessionConfig::default() };
    let mut log = open(config);
    plan(&mut log, 4);
    for i in 1..=4 {
        submit(&mut log, &format!("import bpy\n# v{i}\n"), Provocation::Subtask(i));
    }
    let bundle = assemble_context(log.state(), Role::Coding);
    assert_eq!(bundle.recent.len(), 3);
    assert_eq!(bundle.recent.last().unwrap().text, "code v4 executed successfully");
}

#[test]
fn planner_history_leaves_out_execution_results() {
    let mut log = open(SessionConfig::default());
    plan(&mut log, 1);
    submit(&mut log, "import bpy\n", Provocation::Subtask(1));
    let bundle = assemble_context(log.state(), Role::Planner);
    assert!(bundle.recent.iter().all(|m| !m.text.contains("executed") && !m.text.contains("submitted")));
}

#[test]
fn every_role_sees_latest_code_in_random_sessions() {
    for seed in 0..12 {
        let dir = tempfile::tempdir().unwrap();
        let orch = common::random_session(&dir.path().join("s"), seed, SessionConfig::default(), 1);
        let state = orch.state();
        let Some(latest) = state.latest_code() else { continue };
        for role in Role::ALL {
            let text = assemble_context(state, role).render();
            assert_eq!(text.matches(latest.source.as_str()).count(), 1, "seed {seed} role {role:?}");
        }
    }
}
