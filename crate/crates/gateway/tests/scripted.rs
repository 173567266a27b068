use std::collections::BTreeMap;

use meshwright_gateway::{
    ChatBackend, ChatMessage, ChatRequest, ChatResponse, GatewayError, ScriptedBackend, ScriptedEntry, ScriptedTranscript,
};

fn req(agent: &str, text: &str) -> ChatRequest {
    ChatRequest::new(agent, vec![ChatMessage::system("system"), ChatMessage::user(text)])
}

#[test]
fn required_substring_present_matches() {
    let b = ScriptedBackend::new(ScriptedTranscript::new(vec![
        ScriptedEntry::new("retrieval", ChatResponse::text("use bmesh.new()")).requiring("bmesh"),
    ]));
    let r = b.complete(&req("retrieval", "how do I use bmesh here")).unwrap();
    assert_eq!(r.text.as_deref(), Some("use bmesh.new()"));
}

#[test]
fn required_substring_absent_is_mismatch() {
    let b = ScriptedBackend::new(ScriptedTranscript::new(vec![
        ScriptedEntry::new("retrieval", ChatResponse::text("x")).requiring("bmesh"),
    ]));
    let err = b.complete(&req("retrieval", "modifiers please")).unwrap_err();
    assert!(matches!(err, GatewayError::FixtureMismatch { ref agent, call: 1, .. } if agent == "retrieval"), "{err}");
    // not consumed by the failed call
    assert_eq!(b.calls().get("retrieval"), None);
}

#[test]
fn entries_consumed_in_order_per_role() {
    let b = ScriptedBackend::new(ScriptedTranscript::new(vec![
        ScriptedEntry::new("coding", ChatResponse::text("one")),
        ScriptedEntry::new("planner", ChatResponse::text("plan")),
        ScriptedEntry::new("coding", ChatResponse::text("two")),
    ]));
    assert_eq!(b.complete(&req("coding", "a")).unwrap().text.as_deref(), Some("one"));
    assert_eq!(b.complete(&req("coding", "b")).unwrap().text.as_deref(), Some("two"));
    assert_eq!(b.complete(&req("planner", "c")).unwrap().text.as_deref(), Some("plan"));
    assert!(matches!(b.complete(&req("coding", "d")), Err(GatewayError::FixtureMismatch { call: 3, .. })));
    assert!(matches!(b.complete(&req("critic", "e")), Err(GatewayError::FixtureMismatch { call: 1, .. })));
}

#[test]
fn turn_index_is_checked() {
    let b = ScriptedBackend::new(ScriptedTranscript::new(vec![
        ScriptedEntry::new("critic", ChatResponse::text("NO ISSUES")).at_turn(2),
    ]));
    assert!(matches!(b.complete(&req("critic", "x")), Err(GatewayError::FixtureMismatch { .. })));
}

#[test]
fn repeating_entry_and_fast_forward() {
    let b = ScriptedBackend::new(ScriptedTranscript::new(vec![
        ScriptedEntry::new("coding", ChatResponse::text("first")),
        ScriptedEntry::new("coding", ChatResponse::text("again")).repeating(),
    ]));
    assert_eq!(b.remaining(), 2);
    for expected in ["first", "again", "again", "again"] {
        assert_eq!(b.complete(&req("coding", "x")).unwrap().text.as_deref(), Some(expected));
    }
    assert_eq!(b.remaining(), 0);

    let b = ScriptedBackend::new(ScriptedTranscript::new(vec![
        ScriptedEntry::new("coding", ChatResponse::text("first")),
        ScriptedEntry::new("coding", ChatResponse::text("second")),
    ]));
    b.fast_forward(&BTreeMap::from([("coding".to_owned(), 1)]));
    assert_eq!(b.complete(&req("coding", "x")).unwrap().text.as_deref(), Some("second"));
}

#[test]
fn transcript_file_formats() {
    let object = r#"{"entries":[{"agent":"planner","response":{"text":"coding_agent: seat\nCOMPLETE"}}]}"#;
    let lines = "{\"agent\":\"planner\",\"response\":{\"text\":\"a\"}}\n\n{\"agent\":\"coding\",\"required_substrings\":[\"seat\"],\"response\":{\"tool_calls\":[{\"name\":\"execute_code_tool\",\"arguments\":{\"code\":\"import bpy\"}}]}}\n";
    assert_eq!(ScriptedTranscript::parse(object).unwrap().entries.len(), 1);
    let t = ScriptedTranscript::parse(lines).unwrap();
    assert_eq!(t.entries.len(), 2);
    assert_eq!(t.entries[1].response.tool_calls[0].arguments["code"], "import bpy");
    assert!(ScriptedTranscript::parse("{not json").is_err());
}
