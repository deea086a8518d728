mod common;

use misinfo_core::encode::{Embedder, RemoteEmbedder};
use misinfo_core::llm::{prediction_confidence, ChatRequest, Gateway, HttpProvider, HttpProviderConfig, LlmError, PromptClass, RetryPolicy};
use misinfo_core::proxy::{HttpKnowledge, KnowledgeSource};
use serde_json::{json, Value};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

fn fast_retry() -> RetryPolicy {
    RetryPolicy { max_retries: 4, base_delay: Duration::from_millis(5), max_delay: Duration::from_millis(20) }
}

fn provider(base: &str) -> HttpProvider {
    HttpProvider::new(HttpProviderConfig {
        base_url: format!("{base}/v1"),
        model: "test-model".into(),
        api_key: None,
        timeout_secs: 5,
    })
    .unwrap()
}

const COMPLETION: &str = r#"{"choices":[{"message":{"role":"assistant","content":"[fake]"},
"logprobs":{"content":[{"token":"[","logprob":0.0},{"token":"fake","logprob":-0.2231435513142097}]}}]}"#;

#[test]
fn chat_retries_rate_limits_then_succeeds() {
    let hits = Arc::new(AtomicUsize::new(0));
    let seen = Arc::new(Mutex::new(Vec::new()));
    let (h, s) = (hits.clone(), seen.clone());
    let base = common::serve(move |r| {
        s.lock().unwrap().push(r.clone());
        if h.fetch_add(1, Ordering::SeqCst) < 3 {
            (429, r#"{"error":"slow down"}"#.into())
        } else {
            (200, COMPLETION.into())
        }
    });
    let gateway = Gateway::new(provider(&base)).with_retry(fast_retry());
    let req = ChatRequest::new(PromptClass::EnsembleMerge, "News: x\nLabel:").unwrap().with_logprob(true);
    let resp = gateway.complete(&req).unwrap();
    assert_eq!(resp.text, "[fake]");
    assert!((prediction_confidence(&resp).unwrap() - 0.8).abs() < 1e-12);
    assert_eq!(hits.load(Ordering::SeqCst), 4);

    let seen = seen.lock().unwrap();
    assert!(seen.iter().all(|r| r.method == "POST" && r.path == "/v1/chat/completions"));
    let body: Value = serde_json::from_str(&seen[3].body).unwrap();
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["messages"][0], json!({"role": "user", "content": "News: x\nLabel:"}));
}

#[test]
fn chat_gives_up_after_the_retry_budget() {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let base = common::serve(move |_| {
        h.fetch_add(1, Ordering::SeqCst);
        (503, "{}".into())
    });
    let gateway = Gateway::new(provider(&base)).with_retry(fast_retry());
    let err = gateway.complete(&ChatRequest::new(PromptClass::Generic, "hi").unwrap()).unwrap_err();
    assert!(matches!(err, LlmError::Exhausted { attempts: 5, .. }), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 5);
}

#[test]
fn chat_client_errors_are_not_retried() {
    let hits = Arc::new(AtomicUsize::new(0));
    let h = hits.clone();
    let base = common::serve(move |_| {
        h.fetch_add(1, Ordering::SeqCst);
        (400, r#"{"error":"bad"}"#.into())
    });
    let gateway = Gateway::new(provider(&base)).with_retry(fast_retry());
    let err = gateway.complete(&ChatRequest::new(PromptClass::Generic, "hi").unwrap()).unwrap_err();
    assert!(matches!(err, LlmError::Rejected { status: 400, .. }), "{err}");
    assert_eq!(hits.load(Ordering::SeqCst), 1);
}

/// A fake embed service: each vector is a function of its text only.
fn embed_service(dim: usize) -> String {
    common::serve(move |r| {
        if r.path != "/embed" {
            return (404, "{}".into());
        }
        let req: Value = serde_json::from_str(&r.body).unwrap();
        let vectors: Vec<Vec<f64>> = req["texts"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| {
                let s = t.as_str().unwrap();
                (0..dim).map(|i| ((s.len() + i) % 7) as f64 / 7.0).collect()
            })
            .collect();
        (200, json!({"dim": dim, "vectors": vectors}).to_string())
    })
}

#[test]
fn remote_embedder_round_trip() {
    let base = embed_service(6);
    let e = RemoteEmbedder::new(&base, 6, Duration::from_secs(5)).unwrap().with_batch(2);
    let texts = ["a", "bb", "a", "cccc", "bb"];
    let v = e.embed_batch(&texts).unwrap();
    assert_eq!(v.len(), 5);
    assert!(v.iter().all(|x| x.len() == 6));
    assert_eq!(v[0], v[2]);
    assert_eq!(v[1], v[4]);
    assert_ne!(v[0], v[1]);
}

#[test]
fn remote_embedder_rejects_dim_mismatch_and_errors() {
    let base = embed_service(4);
    let e = RemoteEmbedder::new(&base, 6, Duration::from_secs(5)).unwrap();
    assert!(e.embed_batch(&["x"]).is_err());
    let broken = common::serve(|_| (500, r#"{"error":"down"}"#.into()));
    let e = RemoteEmbedder::new(&broken, 4, Duration::from_secs(5)).unwrap();
    let err = e.embed_batch(&["x"]).unwrap_err().to_string();
    assert!(err.contains("500"), "{err}");
}

#[test]
fn knowledge_lookup_over_http() {
    let base = common::serve(|r| match r.path.as_str() {
        "/page/summary/Lake_Harlow" => (200, json!({"extract": "A fictional lake town."}).to_string()),
        "/page/summary/Empty" => (200, json!({"extract": "  "}).to_string()),
        _ => (404, "{}".into()),
    });
    let k = HttpKnowledge::new(base, Duration::from_secs(5)).unwrap();
    assert_eq!(k.summary("Lake Harlow").as_deref(), Some("A fictional lake town."));
    assert_eq!(k.summary("Empty"), None);
    assert_eq!(k.summary("Nowhere"), None);
}
