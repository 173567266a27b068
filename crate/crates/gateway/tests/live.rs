//! Live backend against a local mock HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use meshwright_gateway::{
    ChatBackend, ChatMessage, ChatRequest, GatewayConfig, GatewayError, LiveBackend, ProviderConfig, RetryPolicy,
};

struct Captured {
    path: String,
    auth: Option<String>,
    body: serde_json::Value,
}

/// Serves one canned (status, body) per connection, recording each request.
fn mock(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Captured>>>, JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let sink = Arc::clone(&seen);
    let handle = std::thread::spawn(move || {
        for (status, body) in replies {
            let (mut stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut len = 0;
            let mut auth = None;
            loop {
                let mut h = String::new();
                reader.read_line(&mut h).unwrap();
                if h.trim().is_empty() {
                    break;
                }
                let (k, v) = h.split_once(':').unwrap();
                match k.to_ascii_lowercase().as_str() {
                    "content-length" => len = v.trim().parse().unwrap(),
                    "authorization" => auth = Some(v.trim().to_owned()),
                    _ => {}
                }
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            sink.lock().unwrap().push(Captured {
                path: request_line.split_whitespace().nth(1).unwrap().to_owned(),
                auth,
                body: serde_json::from_slice(&buf).unwrap(),
            });
            write!(
                stream,
                "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                body.len()
            )
            .unwrap();
        }
    });
    (addr, seen, handle)
}

fn backend(endpoint: &str, key_env: Option<&str>) -> LiveBackend {
    let mut cfg = GatewayConfig::default();
    cfg.roles.insert(
        "coding".into(),
        ProviderConfig {
            provider: "mock".into(),
            model: "mock-model".into(),
            endpoint: endpoint.into(),
            api_key_env: key_env.map(Into::into),
            timeout_secs: 5,
        },
    );
    LiveBackend::with_retry(cfg, RetryPolicy { max_retries: 2, base_delay: Duration::from_millis(5) }).unwrap()
}

fn request() -> ChatRequest {
    ChatRequest::new("coding", vec![ChatMessage::system("You are a coding agent."), ChatMessage::user("make a cube")])
}

const OK: &str = r#"{"choices":[{"message":{"content":"done"}}],"usage":{"prompt_tokens":7,"completion_tokens":1}}"#;

#[test]
fn successful_call_sends_model_and_key() {
    std::env::set_var("MESHWRIGHT_TEST_KEY_A", "sk-test");
    let (url, seen, h) = mock(vec![(200, OK.into())]);
    let r = backend(&url, Some("MESHWRIGHT_TEST_KEY_A")).complete(&request()).unwrap();
    h.join().unwrap();
    assert_eq!(r.text.as_deref(), Some("done"));
    assert_eq!(r.usage.prompt_tokens, 7);
    let seen = seen.lock().unwrap();
    assert_eq!(seen[0].path, "/v1/chat/completions");
    assert_eq!(seen[0].auth.as_deref(), Some("Bearer sk-test"));
    assert_eq!(seen[0].body["model"], "mock-model");
    assert_eq!(seen[0].body["messages"][0]["role"], "system");
}

#[test]
fn transient_failures_are_retried_twice() {
    let (url, seen, h) = mock(vec![(503, "{}".into()), (429, "{}".into()), (200, OK.into())]);
    let r = backend(&url, None).complete(&request()).unwrap();
    h.join().unwrap();
    assert_eq!(r.text.as_deref(), Some("done"));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn exhausted_retries_report_provider_status() {
    let (url, seen, h) = mock(vec![(500, "a".into()), (500, "b".into()), (502, "upstream down".into())]);
    let err = backend(&url, None).complete(&request()).unwrap_err();
    h.join().unwrap();
    assert_eq!(err, GatewayError::Provider { status: 502, message: "upstream down".into() });
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let (url, seen, h) = mock(vec![(400, "bad request".into())]);
    let err = backend(&url, None).complete(&request()).unwrap_err();
    h.join().unwrap();
    assert!(matches!(err, GatewayError::Provider { status: 400, .. }));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn missing_credentials_and_roles_are_config_errors() {
    let b = backend("http://127.0.0.1:9", Some("MESHWRIGHT_TEST_KEY_UNSET"));
    assert!(matches!(b.complete(&request()), Err(GatewayError::Config(_))));
    let other = ChatRequest::new("critic", vec![ChatMessage::system("s")]);
    assert!(matches!(b.complete(&other), Err(GatewayError::Config(_))));
    let bad = ChatRequest::new("coding", vec![ChatMessage::user("no system")]);
    assert!(matches!(b.complete(&bad), Err(GatewayError::InvalidRequest(_))));
}
