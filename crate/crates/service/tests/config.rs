use std::io::Write;

use meshwright::config::{layered, override_session, BackendKind};
use meshwright_core::ExecutionMode;
use serde_json::json;

fn vars(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

#[test]
fn defaults_mirror_the_session_defaults() {
    let c = layered(None, Vec::new(), &[]).unwrap();
    assert_eq!(c.session, meshwright_core::SessionConfig::default());
    assert_eq!(c.backend, BackendKind::Live);
    assert_eq!(c.session.m_views, 5);
    assert_eq!(c.session.max_exec_retries, 5);
}

#[test]
fn file_then_environment_then_flags() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    writeln!(
        f,
        "bind = \"0.0.0.0:9000\"\nlog_level = \"debug\"\n[session]\nmax_exec_retries = 2\nrag_top_k = 7\nm_views = 4\n[session.models.coding]\nprovider = \"local\"\nmodel = \"qwen\""
    )
    .unwrap();
    let env = vars(&[
        ("MESHWRIGHT_SESSION__MAX_EXEC_RETRIES", "3"),
        ("MESHWRIGHT_SESSION__M_VIEWS", "6"),
        ("MESHWRIGHT_LOG", "warn"),
        ("UNRELATED", "x"),
    ]);
    let sets = ["session.m_views=8".to_owned(), "session.execution_mode=persistent".to_owned()];
    let c = layered(Some(f.path()), env, &sets).unwrap();
    assert_eq!(c.bind, "0.0.0.0:9000");
    assert_eq!(c.session.rag_top_k, 7, "file only");
    assert_eq!(c.session.max_exec_retries, 3, "env beats file");
    assert_eq!(c.session.m_views, 8, "flag beats env and file");
    assert_eq!(c.log_level, "warn");
    assert_eq!(c.session.execution_mode, ExecutionMode::Persistent);
    assert_eq!(c.session.models["coding"].model, "qwen");
    // Untouched roles keep their defaults.
    assert_eq!(c.session.models["planner"].model, "gpt-4o");
}

#[test]
fn mistakes_are_reported() {
    assert!(layered(None, Vec::new(), &["no_equals_sign".into()]).is_err());
    assert!(layered(None, Vec::new(), &["bnd=1".into()]).is_err(), "unknown key");
    assert!(layered(None, Vec::new(), &["session.max_exec_retries=lots".into()]).is_err());
    assert!(layered(None, Vec::new(), &["backend=scripted".into()]).is_err(), "scripted without transcript");
    assert!(layered(None, Vec::new(), &["backend=scripted".into(), "scenario=chair".into()]).is_ok());
    assert!(layered(Some(std::path::Path::new("/nonexistent/mw.toml")), Vec::new(), &[]).is_err());
}

#[test]
fn request_overrides_touch_only_named_keys() {
    let base = meshwright_core::SessionConfig::default();
    let c = override_session(&base, &json!({ "max_verification_rounds": 1, "models": { "critic": { "provider": "x", "model": "y" } } }))
        .unwrap();
    assert_eq!(c.max_verification_rounds, 1);
    assert_eq!(c.models["critic"].model, "y");
    assert_eq!(c.models["coding"], base.models["coding"]);
    assert_eq!(c.max_exec_retries, base.max_exec_retries);
    assert!(override_session(&base, &json!({ "max_retries": 1 })).is_err());
    assert!(override_session(&base, &json!([1])).is_err());
    assert_eq!(override_session(&base, &serde_json::Value::Null).unwrap(), base);
}
