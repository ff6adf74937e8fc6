mod common;

use std::time::Duration;

use common::{completion, StubServer};
use pag_core::backend::HttpSettings;
use pag_core::{Backend, BackendDescriptor, BackendError, GenerationRequest, HttpBackend};

fn backend(server: &StubServer, max_retries: u32, backoff_ms: u64) -> HttpBackend {
    HttpBackend::new(HttpSettings {
        base_url: server.base_url.clone(),
        model: "pag-7b".into(),
        auth_token: Some("secret".into()),
        timeout: Duration::from_secs(5),
        max_retries,
        backoff_base: Duration::from_millis(backoff_ms),
        max_in_flight: 2,
    })
    .unwrap()
}

#[test]
fn request_body_and_auth() {
    let server = StubServer::start(vec![(200, completion(&[("balance", Some(&[-0.01, -0.02]))]))]);
    let b = backend(&server, 0, 1);
    let result = b.generate(&GenerationRequest::greedy("Classify", 32, true)).unwrap();
    assert_eq!(result.samples[0].text, "balance");
    assert_eq!(result.samples[0].token_logprobs, [-0.01, -0.02]);
    assert_eq!(result.retries, 0);

    let reqs = server.requests();
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].request_line, "POST /v1/completions HTTP/1.1");
    assert_eq!(reqs[0].header("authorization"), Some("Bearer secret"));
    let body = reqs[0].json();
    assert_eq!(body["model"], "pag-7b");
    assert_eq!(body["prompt"], "Classify");
    assert_eq!(body["max_tokens"], 32);
    assert_eq!(body["temperature"], 0.0);
    assert_eq!(body["n"], 1);
    assert_eq!(body["logprobs"], 1);
    assert!(body.get("top_k").is_none());
}

#[test]
fn sampling_fields() {
    let server = StubServer::start(vec![(200, completion(&[("a", None), ("b", None), ("c", None)]))]);
    let b = backend(&server, 0, 1);
    let req = GenerationRequest {
        prompt: "p".into(),
        max_tokens: 8,
        temperature: 0.9,
        top_k: Some(40),
        n_samples: 3,
        want_logprobs: false,
    };
    let result = b.generate(&req).unwrap();
    assert_eq!(
        result.samples.iter().map(|s| s.text.as_str()).collect::<Vec<_>>(),
        ["a", "b", "c"]
    );
    let body = server.requests()[0].json();
    assert_eq!(body["top_k"], 40);
    assert_eq!(body["n"], 3);
    assert_eq!(body["temperature"], 0.9);
    assert!(body.get("logprobs").is_none());
}

#[test]
fn retries_5xx_then_succeeds() {
    let ok = completion(&[("balance", Some(&[-0.1]))]);
    let server = StubServer::start(vec![(500, "{}".into()), (500, "{}".into()), (200, ok)]);
    let b = backend(&server, 3, 20);
    let result = b.generate(&GenerationRequest::greedy("p", 4, true)).unwrap();
    assert_eq!(result.retries, 2);

    let reqs = server.requests();
    assert_eq!(reqs.len(), 3);
    // identical bytes on every attempt
    assert!(reqs.iter().all(|r| r.body == reqs[0].body));
    // 20 ms then 40 ms
    assert!(reqs[1].at - reqs[0].at >= Duration::from_millis(20));
    assert!(reqs[2].at - reqs[1].at >= Duration::from_millis(40));
}

#[test]
fn retries_429_until_exhausted() {
    let server = StubServer::start(vec![(429, "{}".into())]);
    let b = backend(&server, 2, 5);
    let err = b.generate(&GenerationRequest::greedy("p", 4, true)).unwrap_err();
    assert!(matches!(err, BackendError::Unreachable { attempts: 3, .. }), "{err}");
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = StubServer::start(vec![(400, r#"{"error": "bad"}"#.into())]);
    let b = backend(&server, 3, 5);
    let err = b.generate(&GenerationRequest::greedy("p", 4, true)).unwrap_err();
    assert!(matches!(err, BackendError::Rejected { status: 400, .. }), "{err}");
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn missing_logprobs_surface() {
    let server = StubServer::start(vec![(200, completion(&[("balance", None)]))]);
    let b = backend(&server, 0, 1);
    let err = b.generate(&GenerationRequest::greedy("p", 4, true)).unwrap_err();
    assert_eq!(err, BackendError::LogprobsUnavailable);
    assert_eq!(err.to_string(), "logprobs unavailable");
}

#[test]
fn unreachable_server() {
    // Bind then drop to get a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let b = HttpBackend::new(HttpSettings {
        base_url: format!("http://127.0.0.1:{port}"),
        model: "m".into(),
        auth_token: None,
        timeout: Duration::from_secs(2),
        max_retries: 1,
        backoff_base: Duration::from_millis(1),
        max_in_flight: 1,
    })
    .unwrap();
    let err = b.generate(&GenerationRequest::greedy("p", 4, true)).unwrap_err();
    assert!(matches!(err, BackendError::Unreachable { attempts: 2, .. }), "{err}");
}

#[test]
fn descriptor_reads_token_from_env() {
    let server = StubServer::start(vec![(200, completion(&[("x", Some(&[-0.5]))]))]);
    std::env::set_var("PAG_TEST_TOKEN", "from-env");
    let d = BackendDescriptor::Http {
        base_url: server.base_url.clone(),
        model: "m".into(),
        auth_token_env: Some("PAG_TEST_TOKEN".into()),
        timeout_secs: 5.0,
        max_retries: 0,
        backoff_ms: 1,
    };
    let b = d.build(1).unwrap();
    b.generate(&GenerationRequest::greedy("p", 4, true)).unwrap();
    assert_eq!(server.requests()[0].header("authorization"), Some("Bearer from-env"));

    let missing = BackendDescriptor::Http {
        base_url: server.base_url.clone(),
        model: "m".into(),
        auth_token_env: Some("PAG_TEST_TOKEN_UNSET".into()),
        timeout_secs: 5.0,
        max_retries: 0,
        backoff_ms: 1,
    };
    assert!(matches!(missing.build(1), Err(BackendError::Config(_))));
}
