#![cfg(feature = "test-server")]

use std::sync::Arc;
use std::time::Duration;

use distractor_align::backend::server::{ScoringServer, ServerOptions};
use distractor_align::backend::{
    BackendError, Fallback, HttpBackend, RetryPolicy, ScoreCache, ScoreRequest, Scorer, ScoringBackend,
    TableBackend, TableEntry, TokenLogprob,
};

fn table() -> Arc<dyn ScoringBackend> {
    let entries = vec![
        TableEntry {
            context: "Question: q\nAnswer:".into(),
            continuation: " yes please".into(),
            tokens: vec![TokenLogprob::new(" yes", -0.5), TokenLogprob::new(" please", -1.5)],
        },
        TableEntry {
            context: "Question: q\nAnswer:".into(),
            continuation: " no".into(),
            tokens: vec![TokenLogprob::new(" no", f64::NEG_INFINITY)],
        },
    ];
    Arc::new(TableBackend::from_entries(entries, Fallback::Error).unwrap())
}

fn fast_retry(attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts: attempts,
        base_delay: Duration::from_millis(5),
        max_delay: Duration::from_millis(20),
    }
}

fn client(server: &ScoringServer, token: Option<&str>, attempts: u32) -> HttpBackend {
    HttpBackend::new(
        &server.endpoint(),
        token.map(String::from),
        fast_retry(attempts),
        Duration::from_secs(5),
    )
}

fn request(cont: &str) -> ScoreRequest {
    ScoreRequest {
        model: "m".into(),
        context: "Question: q\nAnswer:".into(),
        continuation: cont.into(),
    }
}

#[test]
fn round_trip_preserves_tokens() {
    let server = ScoringServer::start(table()).unwrap();
    let r = client(&server, None, 1).score(&request(" yes please")).unwrap();
    assert_eq!(r.tokens.len(), 2);
    assert_eq!(r.total_logprob(), -2.0);
    let inf = client(&server, None, 1).score(&request(" no")).unwrap();
    assert_eq!(inf.tokens[0].logprob, f64::NEG_INFINITY);
}

#[test]
fn transient_failures_are_retried_with_the_same_request() {
    let opts = ServerOptions {
        fail_first: 2,
        ..Default::default()
    };
    let server = ScoringServer::start_with(table(), opts).unwrap();
    let r = client(&server, None, 3).score(&request(" yes please")).unwrap();
    assert_eq!(r.tokens[1].text, " please");
    assert_eq!(server.request_count(), 3);
}

#[test]
fn retries_are_bounded() {
    let opts = ServerOptions {
        fail_first: 10,
        ..Default::default()
    };
    let server = ScoringServer::start_with(table(), opts).unwrap();
    match client(&server, None, 2).score(&request(" yes please")) {
        Err(BackendError::Transport { attempts: 2, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(server.request_count(), 2);
}

#[test]
fn bearer_token_is_sent() {
    let opts = ServerOptions {
        require_token: Some("s3cret".into()),
        ..Default::default()
    };
    let server = ScoringServer::start_with(table(), opts).unwrap();
    match client(&server, None, 3).score(&request(" yes please")) {
        Err(BackendError::Status { status: 401, .. }) => {}
        other => panic!("unexpected {other:?}"),
    }
    // 4xx is not retried
    assert_eq!(server.request_count(), 1);
    assert!(client(&server, Some("s3cret"), 1).score(&request(" yes please")).is_ok());
}

#[test]
fn unknown_request_is_a_client_error() {
    let server = ScoringServer::start(table()).unwrap();
    match client(&server, None, 3).score(&request(" maybe")) {
        Err(BackendError::Status { status: 422, body }) => assert!(body.contains("no table entry")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn scorer_rejects_tokens_that_do_not_reconstruct() {
    let opts = ServerOptions {
        tamper_tokens: true,
        ..Default::default()
    };
    let server = ScoringServer::start_with(table(), opts).unwrap();
    let cache = Arc::new(ScoreCache::in_memory());
    let scorer = Scorer::new(Arc::new(client(&server, None, 1)), Arc::clone(&cache));
    match scorer.score("m", "v1-text", "Question: q\nAnswer:", " yes please") {
        Err(BackendError::Protocol(_)) => {}
        other => panic!("unexpected {other:?}"),
    }
    assert!(cache.is_empty(), "invalid responses are never cached");
}

#[test]
fn cache_is_consulted_before_the_network() {
    let server = ScoringServer::start(table()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    {
        let cache = Arc::new(ScoreCache::open(&path).unwrap());
        let scorer = Scorer::new(Arc::new(client(&server, None, 1)), cache);
        scorer.score("m", "v1-text", "Question: q\nAnswer:", " yes please").unwrap();
        scorer.score("m", "v1-text", "Question: q\nAnswer:", " yes please").unwrap();
        assert_eq!(scorer.backend_calls(), 1);
    }
    let cache = Arc::new(ScoreCache::open(&path).unwrap());
    let scorer = Scorer::new(Arc::new(client(&server, None, 1)), cache);
    scorer.score("m", "v1-text", "Question: q\nAnswer:", " yes please").unwrap();
    assert_eq!(scorer.backend_calls(), 0);
    assert_eq!(server.request_count(), 1);
    // a different template id is a different key
    scorer.score("m", "v2-text", "Question: q\nAnswer:", " yes please").unwrap();
    assert_eq!(server.request_count(), 2);
}
