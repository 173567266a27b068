use std::sync::{Arc, Mutex};

use chrono::{TimeZone, Utc};
use meshwright_bridge::{ExecutionError, ExecutionOutcome};
use meshwright_core::{
    append_event, load_state, read_events, Actor, Event, Payload, Phase, Provocation, Reason, SessionConfig,
    SessionError, SessionInit, SessionLog, SessionState, StateError, Step, StepClock, Subtask, SubtaskStatus,
    EVENTS_FILE, SNAPSHOT_FILE,
};
use meshwright_core::Role;

fn ts(secs: i64) -> chrono::DateTime<Utc> {
    Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap()
}

fn opening(seq: u64) -> Event {
    let init = SessionInit { session_id: "s1".into(), goal: "a chair".into(), config: SessionConfig::default() };
    Event::new(
        seq,
        ts(0),
        Actor::System,
        Payload::PhaseChanged { from: None, to: Phase::InitialCreation, reason: Reason::PhaseEntered, init: Some(Box::new(init)) },
    )
}

fn turn(seq: u64) -> Event {
    Event::new(seq, ts(seq as i64), Actor::Planner, Payload::TurnStarted { step: Step::Planner, reason: Reason::PhaseEntered, subtask: None })
}

fn state_with(n: u64) -> SessionState {
    let mut s = SessionState::default();
    append_event(&mut s, opening(1)).unwrap();
    for seq in 2..=n {
        append_event(&mut s, turn(seq)).unwrap();
    }
    s
}

#[test]
fn first_append_gives_one_event() {
    let mut s = SessionState::default();
    append_event(&mut s, opening(1)).unwrap();
    assert_eq!(s.event_log.len(), 1);
    assert_eq!(s.phase, Phase::InitialCreation);
    assert_eq!(s.goal, "a chair");
}

#[test]
fn successor_append_grows_log() {
    let mut s = state_with(7);
    append_event(&mut s, turn(8)).unwrap();
    assert_eq!(s.event_log.len(), 8);
    assert_eq!(s.last_seq, 8);
}

#[test]
fn gap_is_rejected_and_state_kept() {
    let mut s = state_with(7);
    let before = s.clone();
    let err = append_event(&mut s, turn(9)).unwrap_err();
    assert!(matches!(err, SessionError::State(StateError::SequenceGap { expected: 8, got: 9 })), "{err:?}");
    assert_eq!(s, before);
}

#[test]
fn first_event_must_open_the_session() {
    let mut s = SessionState::default();
    assert!(append_event(&mut s, turn(1)).is_err());
}

#[test]
fn kind_must_match_payload() {
    let mut s = state_with(1);
    let mut e = turn(2);
    e.kind = meshwright_core::EventKind::Error;
    assert!(matches!(append_event(&mut s, e), Err(SessionError::State(StateError::KindMismatch { .. }))));
}

#[test]
fn illegal_phase_jump_is_rejected() {
    let mut s = state_with(1);
    let e = Event::new(
        2,
        ts(2),
        Actor::System,
        Payload::PhaseChanged { from: Some(Phase::InitialCreation), to: Phase::UserRefine, reason: Reason::ExecOk, init: None },
    );
    assert!(matches!(append_event(&mut s, e), Err(SessionError::State(StateError::Illegal { seq: 2, .. }))));
}

#[test]
fn code_versions_must_increase_from_one() {
    let mut s = state_with(1);
    let plan = Payload::Plan {
        subtasks: vec![Subtask { index: 1, description: "legs".into(), assignee: Role::Coding, status: SubtaskStatus::Pending }],
        complete: true,
    };
    append_event(&mut s, Event::new(2, ts(2), Actor::Planner, plan)).unwrap();
    let submit = |seq, version| {
        Event::new(
            seq,
            ts(seq as i64),
            Actor::Coding,
            Payload::CodeSubmitted {
                version,
                source: "import bpy\n".into(),
                phase: Phase::InitialCreation,
                provoking_input: Provocation::Subtask(1),
                retry_of: None,
            },
        )
    };
    assert!(append_event(&mut s, submit(3, 2)).is_err());
    append_event(&mut s, submit(3, 1)).unwrap();
    let ok = ExecutionOutcome::success(String::new(), String::new(), 3);
    append_event(&mut s, Event::new(4, ts(4), Actor::System, Payload::CodeExecuted { version: 1, outcome: ok.clone() })).unwrap();
    // One execution per version.
    assert!(append_event(&mut s, Event::new(5, ts(5), Actor::System, Payload::CodeExecuted { version: 1, outcome: ok })).is_err());
    assert_eq!(s.subtasks[0].status, SubtaskStatus::Done);
}

#[test]
fn persisted_layout_and_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sess");
    let seen = Arc::new(Mutex::new(Vec::new()));
    {
        let mut log = SessionLog::create(&path, Box::new(StepClock::fixed())).unwrap();
        let sink = seen.clone();
        log.set_observer(Box::new(move |e: &Event| sink.lock().unwrap().push(e.seq)));
        log.append_event(opening(1)).unwrap();
        log.record(
            Actor::Planner,
            Payload::Plan {
                subtasks: vec![Subtask { index: 1, description: "legs".into(), assignee: Role::Coding, status: SubtaskStatus::Pending }],
                complete: true,
            },
        )
        .unwrap();
        log.record(
            Actor::Coding,
            Payload::CodeSubmitted {
                version: 1,
                source: "import bpy\nprint('hi')\n".into(),
                phase: Phase::InitialCreation,
                provoking_input: Provocation::Subtask(1),
                retry_of: None,
            },
        )
        .unwrap();
        let failed = ExecutionOutcome::failure(ExecutionError::script("NameError: x", "Traceback\nNameError: x\n"), String::new(), String::new(), 1);
        log.record(Actor::System, Payload::CodeExecuted { version: 1, outcome: failed }).unwrap();
    }
    assert_eq!(*seen.lock().unwrap(), [1, 2, 3, 4]);
    assert_eq!(std::fs::read_to_string(path.join("code/v1.py")).unwrap(), "import bpy\nprint('hi')\n");
    let text = std::fs::read_to_string(path.join(EVENTS_FILE)).unwrap();
    assert_eq!(text.lines().count(), 4);
    let snapshot: serde_json::Value = serde_json::from_slice(&std::fs::read(path.join(SNAPSHOT_FILE)).unwrap()).unwrap();
    assert_eq!(snapshot["last_seq"], 4);
    assert_eq!(snapshot["code_versions"][0]["version"], 1);

    // A second writer cannot create over it; reopening continues the sequence.
    assert!(matches!(SessionLog::create(&path, Box::new(StepClock::fixed())), Err(SessionError::Exists(_))));
    let mut log = SessionLog::reopen(&path, Box::new(StepClock::fixed())).unwrap();
    assert_eq!(log.state().next_seq(), 5);
    log.record(Actor::System, Payload::TurnStarted { step: Step::Retrieval, reason: Reason::ExecError, subtask: Some(1) }).unwrap();
    let after = std::fs::read_to_string(path.join(EVENTS_FILE)).unwrap();
    assert!(after.starts_with(&text), "earlier lines are never rewritten");
    assert_eq!(read_events(&path.join(EVENTS_FILE)).unwrap().len(), 5);
    assert_eq!(load_state(&path).unwrap(), *log.state());
}

#[test]
fn corrupt_line_is_reported_with_its_number() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(EVENTS_FILE);
    std::fs::write(&path, format!("{}\nnot json\n", opening(1).to_line())).unwrap();
    assert!(matches!(read_events(&path), Err(SessionError::Corrupt { line: 2, .. })));
}

#[test]
fn event_lines_use_the_documented_field_names() {
    let line = opening(1).to_line();
    let v: serde_json::Value = serde_json::from_str(&line).unwrap();
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["actor", "kind", "payload", "seq", "timestamp"]);
    assert!(line.starts_with("{\"seq\":1,\"timestamp\":"));
    assert_eq!(v["kind"], "PhaseChanged");
    assert_eq!(v["actor"], "system");
}
