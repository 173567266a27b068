use meshwright_gateway::{
    ChatBackend, ChatMessage, ChatRequest, ChatResponse, GatewayError, ImageRef, RecordedCall, ReplayBackend,
    ScriptedBackend, ScriptedEntry, ScriptedTranscript,
};

fn session(template: &str, backend: &dyn ChatBackend) -> Result<Vec<RecordedCall>, GatewayError> {
    let mut calls = Vec::new();
    for turn in 0..10 {
        let agent = if turn % 2 == 0 { "coding" } else { "retrieval" };
        let request = ChatRequest::new(
            agent,
            vec![ChatMessage::system(template), ChatMessage::user(format!("turn {turn}\n  details"))],
        );
        let response = backend.complete(&request)?;
        calls.push(RecordedCall { request, response });
    }
    Ok(calls)
}

fn scripted() -> ScriptedBackend {
    let mut entries = Vec::new();
    for turn in 0..10 {
        let agent = if turn % 2 == 0 { "coding" } else { "retrieval" };
        entries.push(ScriptedEntry::new(agent, ChatResponse::text(format!("reply {turn}"))));
    }
    ScriptedBackend::new(ScriptedTranscript::new(entries))
}

#[test]
fn self_replay_is_identical() {
    let recorded = session("You are a coding agent.", &scripted()).unwrap();
    let replay = ReplayBackend::new(recorded.clone());
    let again = session("You are a coding agent.", &replay).unwrap();
    assert_eq!(again, recorded);
    assert_eq!(replay.remaining(), 0);
}

#[test]
fn whitespace_only_changes_do_not_diverge() {
    let recorded = session("You are a coding agent.", &scripted()).unwrap();
    let replay = ReplayBackend::new(recorded);
    assert!(session("You  are a\ncoding agent. ", &replay).is_ok());
}

#[test]
fn mutated_template_diverges_at_first_turn_using_it() {
    let recorded = session("You are a coding agent.", &scripted()).unwrap();
    let replay = ReplayBackend::new(recorded);
    let err = session("You are a careful coding agent.", &replay).unwrap_err();
    match err {
        GatewayError::Divergence { turn, detail } => {
            assert_eq!(turn, 1);
            assert!(detail.contains("message 1"), "{detail}");
        }
        other => panic!("{other}"),
    }
}

#[test]
fn empty_recording_diverges_at_turn_one() {
    let replay = ReplayBackend::new(Vec::new());
    let err = replay.complete(&ChatRequest::new("planner", vec![ChatMessage::system("s")])).unwrap_err();
    assert!(matches!(err, GatewayError::Divergence { turn: 1, .. }));
}

#[test]
fn attachments_compare_by_hash_not_path() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    std::fs::write(a.path().join("view1.png"), b"same").unwrap();
    std::fs::write(b.path().join("other.png"), b"same").unwrap();
    std::fs::write(b.path().join("diff.png"), b"changed").unwrap();
    let with = |root: &std::path::Path, name: &str| {
        ChatRequest::new(
            "critic",
            vec![
                ChatMessage::system("s"),
                ChatMessage::user("look").with_attachments(vec![ImageRef::from_file(root, name).unwrap()]),
            ],
        )
    };
    let recorded = vec![RecordedCall { request: with(a.path(), "view1.png"), response: ChatResponse::text("NO ISSUES") }];
    assert!(ReplayBackend::new(recorded.clone()).complete(&with(b.path(), "other.png")).is_ok());
    let err = ReplayBackend::new(recorded).complete(&with(b.path(), "diff.png")).unwrap_err();
    assert!(matches!(err, GatewayError::Divergence { turn: 1, ref detail } if detail.contains("attachments")));
}
