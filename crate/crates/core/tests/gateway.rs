use std::sync::Arc;
use std::time::Duration;

use alexandria_core::llm_gateway::{
    Gateway, GatewayError, GenerationRequest, ProviderConfig, ProviderError, RetryPolicy,
    ScriptedProvider, ScriptedReply,
};
use alexandria_core::prompts;

fn fast_config(env_var: &str, max_concurrent: usize) -> ProviderConfig {
    ProviderConfig {
        endpoint_uri: "http://unused.invalid".into(),
        api_key_env_var_name: env_var.into(),
        max_concurrent_requests: max_concurrent,
        retry_policy: RetryPolicy {
            max_retries: 3,
            base_backoff_ms: 1,
        },
        timeout_ms: 1000,
    }
}

fn text(s: &str) -> ScriptedReply {
    ScriptedReply::Text(s.into())
}

#[test]
fn rate_limit_is_retried_then_succeeds() {
    let p = Arc::new(ScriptedProvider::new([
        ScriptedReply::Fail(ProviderError::RateLimited),
        ScriptedReply::Fail(ProviderError::Server(503)),
        text("ok"),
    ]));
    let gw = Gateway::new(p.clone(), fast_config("UNUSED", 2));
    let out = gw.generate(&GenerationRequest::new("m", "s", "u")).unwrap();
    assert_eq!(out, "ok");
    assert_eq!(p.calls(), 3);
    let st = gw.stats();
    assert_eq!((st.attempts, st.retries, st.successes), (3, 2, 1));
}

#[test]
fn retries_are_bounded() {
    let p = Arc::new(
        ScriptedProvider::new([]).with_fallback(ScriptedReply::Fail(ProviderError::RateLimited)),
    );
    let gw = Gateway::new(p.clone(), fast_config("UNUSED", 1));
    let err = gw
        .generate(&GenerationRequest::new("m", "s", "u"))
        .unwrap_err();
    assert_eq!(err, GatewayError::RateLimited { attempts: 4 });
    assert_eq!(p.calls(), 4);
}

#[test]
fn permanent_errors_are_not_retried() {
    let p = Arc::new(ScriptedProvider::new([
        ScriptedReply::Fail(ProviderError::Auth("bad key".into())),
        text("x"),
    ]));
    let gw = Gateway::new(p.clone(), fast_config("UNUSED", 1));
    assert!(matches!(
        gw.generate(&GenerationRequest::new("m", "s", "u")),
        Err(GatewayError::AuthRejected(_))
    ));
    assert_eq!(p.calls(), 1);
}

#[test]
fn concurrency_never_exceeds_the_limit() {
    let p = Arc::new(
        ScriptedProvider::new([])
            .with_fallback(text("ok"))
            .with_latency(Duration::from_millis(5)),
    );
    let gw = Gateway::new(p.clone(), fast_config("UNUSED", 3));
    std::thread::scope(|s| {
        for _ in 0..12 {
            s.spawn(|| {
                for _ in 0..4 {
                    gw.generate(&GenerationRequest::new("m", "s", "u")).unwrap();
                }
            });
        }
    });
    assert_eq!(p.calls(), 48);
    assert!(p.max_in_flight() <= 3, "provider saw {}", p.max_in_flight());
    assert!(gw.stats().max_in_flight <= 3);
    // With 12 threads and 5 ms calls the limit is actually reached.
    assert_eq!(p.max_in_flight(), 3);
}

#[test]
fn missing_key_fails_before_any_call() {
    let p = Arc::new(ScriptedProvider::new([text("never")]).requiring_credentials());
    let gw = Gateway::new(
        p.clone(),
        fast_config("ALEXANDRIA_TEST_DEFINITELY_UNSET_KEY", 1),
    );
    let err = gw
        .generate(&GenerationRequest::new("m", "s", "u"))
        .unwrap_err();
    assert_eq!(
        err,
        GatewayError::AuthError {
            env_var: "ALEXANDRIA_TEST_DEFINITELY_UNSET_KEY".into()
        }
    );
    assert!(gw.embed("text", "e").is_err());
    assert_eq!(p.calls(), 0);
}

#[test]
fn audit_log_redacts_the_key() {
    let key = "sk-test-0123456789abcdef";
    std::env::set_var("ALEXANDRIA_AUDIT_TEST_API_KEY", key);
    // A reply that echoes the key must not leak it into the audit log.
    let p = Arc::new(ScriptedProvider::new([text(&format!("echo {key}"))]).requiring_credentials());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("audit.jsonl");
    let gw = Gateway::new(p, fast_config("ALEXANDRIA_AUDIT_TEST_API_KEY", 1))
        .with_audit_file(&path)
        .unwrap();
    let req = GenerationRequest::new("m", "system", format!("prompt containing {key}"));
    let out = gw.generate(&req).unwrap();
    assert!(out.contains(key));
    gw.flush_audit().unwrap();
    let log = std::fs::read_to_string(&path).unwrap();
    assert!(!log.contains(key), "{log}");
    assert!(log.contains("[REDACTED]"));
    let entry: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(entry["user_prompt"], "prompt containing [REDACTED]");
    assert_eq!(entry["response"], "echo [REDACTED]");
}

#[test]
fn audit_records_every_call_in_order() {
    let p = Arc::new(ScriptedProvider::new([text("a"), text("b")]));
    let gw = Gateway::new(p, fast_config("UNUSED", 1)).with_memory_audit();
    gw.generate(&GenerationRequest::new("m1", "s", "first"))
        .unwrap();
    gw.generate(&GenerationRequest::new("m2", "s", "second"))
        .unwrap();
    let entries = gw.audit_entries();
    assert_eq!(entries.len(), 2);
    assert_eq!(
        (entries[0].seq, entries[0].user_prompt.as_str()),
        (0, "first")
    );
    assert_eq!((entries[1].seq, entries[1].model_id.as_str()), (1, "m2"));
    assert_eq!(entries[1].response.as_deref(), Some("b"));
}

#[test]
fn mock_gateway_is_deterministic() {
    let a = Gateway::mock();
    let b = Gateway::mock();
    let prompt = prompts::HEADER.render(&[
        ("domain", "Physics"),
        (
            "text",
            "The Cassini probe measured 1200 km rings around Saturn in 2004.",
        ),
    ]);
    let req = GenerationRequest::new("mock", prompts::SYSTEM_PROMPT, prompt).with_seed(9);
    assert_eq!(a.generate(&req).unwrap(), b.generate(&req).unwrap());
    assert_eq!(
        a.embed("alpha beta", "mock-bow").unwrap(),
        b.embed("alpha beta", "mock-bow").unwrap()
    );
}
