//! The OpenAI-compatible client against a local mock endpoint.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use toxi_preannotate::{
    with_retry, ChatClient, ChatRequest, ClientConfig, ClientError, OpenAiChatClient, RetryPolicy,
};

#[derive(Default)]
struct Seen {
    calls: AtomicUsize,
    fail_first: usize,
    headers: Mutex<Vec<(Option<String>, Option<String>)>>,
    bodies: Mutex<Vec<Value>>,
}

async fn completions(
    State(seen): State<Arc<Seen>>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let n = seen.calls.fetch_add(1, Ordering::SeqCst);
    let h = |k: &str| headers.get(k).map(|v| v.to_str().unwrap().to_string());
    seen.headers.lock().unwrap().push((h("authorization"), h("idempotency-key")));
    seen.bodies.lock().unwrap().push(body.clone());
    if n < seen.fail_first {
        return (StatusCode::SERVICE_UNAVAILABLE, Json(json!({"error": "busy"})));
    }
    if body["model"] == "bad-model" {
        return (StatusCode::BAD_REQUEST, Json(json!({"error": "unknown model"})));
    }
    let prompt = body["messages"][0]["content"].as_str().unwrap_or_default();
    (
        StatusCode::OK,
        Json(json!({"choices": [{"message": {"role": "assistant", "content": format!("écho: {prompt}")}}]})),
    )
}

fn spawn_server(fail_first: usize) -> (SocketAddr, Arc<Seen>) {
    let seen = Arc::new(Seen { fail_first, ..Default::default() });
    let state = seen.clone();
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(state);
            axum::serve(listener, app).await.unwrap();
        });
    });
    (rx.recv().unwrap(), seen)
}

fn client(addr: SocketAddr, model: &str) -> OpenAiChatClient {
    OpenAiChatClient::new(&ClientConfig {
        base_url: format!("http://{addr}/v1/"),
        api_key: Some("sk-test".into()),
        model: model.into(),
    })
    .unwrap()
}

#[test]
fn sends_prompt_and_reads_completion() {
    let (addr, seen) = spawn_server(0);
    let c = client(addr, "gpt-test");
    let out = c.complete(&ChatRequest::new("anon_msg_1:1", "Bonjour « toi »")).unwrap();
    assert_eq!(out, "écho: Bonjour « toi »");
    let headers = seen.headers.lock().unwrap();
    assert_eq!(headers[0], (Some("Bearer sk-test".into()), Some("anon_msg_1:1".into())));
    let body = &seen.bodies.lock().unwrap()[0];
    assert_eq!(body["model"], "gpt-test");
    assert_eq!(body["temperature"], 0);
    assert_eq!(c.model_id(), "gpt-test");
}

#[test]
fn retries_keep_the_request_id() {
    let (addr, seen) = spawn_server(2);
    let c = client(addr, "gpt-test");
    let out = with_retry(&c, &ChatRequest::new("req-7", "x"), &RetryPolicy::immediate(4)).unwrap();
    assert_eq!(out, "écho: x");
    assert_eq!(seen.calls.load(Ordering::SeqCst), 3);
    let ids: Vec<_> = seen.headers.lock().unwrap().iter().map(|h| h.1.clone().unwrap()).collect();
    assert_eq!(ids, vec!["req-7"; 3]);
}

#[test]
fn client_errors_are_not_retried() {
    let (addr, seen) = spawn_server(0);
    let c = client(addr, "bad-model");
    let err = with_retry(&c, &ChatRequest::new("r", "x"), &RetryPolicy::immediate(4)).unwrap_err();
    assert!(matches!(err, ClientError::Http { status: 400, .. }));
    assert_eq!(seen.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let c = OpenAiChatClient::new(&ClientConfig { base_url: "http://127.0.0.1:9".into(), api_key: None, model: "m".into() }).unwrap();
    let err = c.complete(&ChatRequest::new("r", "x")).unwrap_err();
    assert!(matches!(err, ClientError::Transport(_)), "{err:?}");
    assert!(err.is_retryable());
}
