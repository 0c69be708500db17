use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;

use evex::embed::{EmbedError, Embedder, EmbeddingProviderConfig, RemoteEmbedder};
use evex::llm::{
    complete_batch, ChatBackend, ChatMessage, CompletionRequest, FnBackend, LlmConfig, LlmError,
    RemoteChatBackend,
};
use evex::retry::RetryPolicy;
use serde_json::{json, Value};

struct Seen {
    headers: Vec<String>,
    body: Value,
}

/// Serves the scripted `(status, body)` replies in order, one connection
/// each, and records what it received.
fn stub(replies: Vec<(u16, String)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1/endpoint", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body) in replies {
            let (stream, _) = listener.accept().unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut headers = Vec::new();
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end().to_string();
                if line.is_empty() {
                    break;
                }
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                headers.push(line);
            }
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                headers,
                body: serde_json::from_slice(&buf).unwrap_or(Value::Null),
            });
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (url, seen)
}

fn fast_retry(max_attempts: u32) -> RetryPolicy {
    RetryPolicy {
        max_attempts,
        base_delay_ms: 1,
        max_delay_ms: 2,
        multiplier: 2.0,
    }
}

fn chat(url: &str, max_attempts: u32) -> RemoteChatBackend {
    RemoteChatBackend::new(LlmConfig {
        endpoint: url.to_string(),
        model_name: "gpt-4".into(),
        timeout_secs: 10,
        retry: fast_retry(max_attempts),
        ..LlmConfig::default()
    })
    .unwrap()
}

fn reply(text: &str) -> String {
    json!({"choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}]})
        .to_string()
}

#[test]
fn server_error_is_retried_then_succeeds() {
    let (url, seen) = stub(vec![(500, "{}".into()), (200, reply("[]"))]);
    let resp = chat(&url, 3)
        .complete(&CompletionRequest::new("", "List the events.", "x.ed"))
        .unwrap();
    assert_eq!(resp.text, "[]");
    assert_eq!(resp.finish_reason.as_deref(), Some("stop"));
    assert_eq!(resp.attempt_count, 2);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(
        seen[1].body,
        json!({
            "model": "gpt-4",
            "messages": [{"role": "user", "content": "List the events."}],
            "temperature": 0.0,
            "max_tokens": 1024
        })
    );
}

#[test]
fn auth_failure_is_not_retried() {
    let (url, seen) = stub(vec![(401, "{}".into()), (200, reply("unused"))]);
    let err = chat(&url, 5)
        .complete(&CompletionRequest::new("m", "hi", "r"))
        .unwrap_err();
    assert!(matches!(err, LlmError::Auth(401)));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn rate_limit_exhausts_the_policy() {
    let (url, seen) = stub(vec![(429, "{}".into()); 3]);
    let err = chat(&url, 3)
        .complete(&CompletionRequest::new("m", "hi", "r"))
        .unwrap_err();
    assert!(matches!(err, LlmError::Http(429)));
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn malformed_body_is_a_response_error() {
    let (url, seen) = stub(vec![(200, "not json".into())]);
    let err = chat(&url, 3)
        .complete(&CompletionRequest::new("m", "hi", "r"))
        .unwrap_err();
    assert!(matches!(err, LlmError::Response(_)));
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn history_precedes_the_prompt_on_the_wire() {
    let (url, seen) = stub(vec![(200, reply("ok"))]);
    let mut req = CompletionRequest::new("other-model", "query", "r");
    req.history = vec![ChatMessage::user("example input"), ChatMessage::assistant("example answer")];
    req.temperature = 1.6;
    req.max_tokens = 4000;
    chat(&url, 1).complete(&req).unwrap();
    let body = &seen.lock().unwrap()[0].body;
    assert_eq!(body["model"], "other-model");
    assert_eq!(body["max_tokens"], 4000);
    assert!((body["temperature"].as_f64().unwrap() - 1.6).abs() < 1e-6);
    let roles: Vec<_> = body["messages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["role"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(roles, ["user", "assistant", "user"]);
    assert_eq!(body["messages"][2]["content"], "query");
}

#[test]
fn invalid_request_never_reaches_the_network() {
    let b = chat("http://127.0.0.1:9/unused", 1);
    let err = b.complete(&CompletionRequest::new("m", "   ", "r")).unwrap_err();
    assert!(matches!(err, LlmError::InvalidRequest(_)));
}

#[test]
fn batch_is_positional_and_matches_sequential() {
    let backend = FnBackend::new(|r: &CompletionRequest| {
        if r.request_id == "bad" {
            Err(LlmError::Backend("boom".into()))
        } else {
            Ok(r.prompt_text.to_uppercase())
        }
    });
    let reqs: Vec<_> = ["a", "b", "bad", "d", "e", "f"]
        .iter()
        .map(|id| CompletionRequest::new("m", format!("prompt {id}"), *id))
        .collect();
    let batch = complete_batch(&backend, &reqs, 4);
    let seq: Vec<_> = reqs.iter().map(|r| backend.complete(r)).collect();
    assert_eq!(batch.len(), reqs.len());
    for (b, s) in batch.iter().zip(&seq) {
        match (b, s) {
            (Ok(x), Ok(y)) => assert_eq!(x.text, y.text),
            (Err(_), Err(_)) => {}
            _ => panic!("batch and sequential disagree"),
        }
    }
    assert!(batch[2].is_err());
    assert_eq!(batch[3].as_ref().unwrap().text, "PROMPT D");
}

fn embedder(url: &str, dim: usize) -> RemoteEmbedder {
    let mut config = EmbeddingProviderConfig::remote(url, "text-embedding-ada-002", dim);
    config.retry = fast_retry(2);
    RemoteEmbedder::new(config).unwrap()
}

#[test]
fn embeddings_are_reordered_and_normalized() {
    let body = json!({"data": [
        {"index": 1, "embedding": [0.0, 2.0]},
        {"index": 0, "embedding": [3.0, 4.0]}
    ]})
    .to_string();
    let (url, seen) = stub(vec![(503, "{}".into()), (200, body)]);
    let out = embedder(&url, 2).embed_batch(&["first", "second"]).unwrap();
    assert_eq!(out[0].as_slice(), [0.6, 0.8]);
    assert_eq!(out[1].as_slice(), [0.0, 1.0]);
    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 2);
    assert_eq!(
        seen[1].body,
        json!({"model": "text-embedding-ada-002", "input": ["first", "second"]})
    );
}

#[test]
fn embedding_dimension_is_checked() {
    let body = json!({"data": [{"index": 0, "embedding": [1.0, 0.0, 0.0]}]}).to_string();
    let (url, _) = stub(vec![(200, body)]);
    let err = embedder(&url, 2).embed_text("text").unwrap_err();
    assert!(matches!(err, EmbedError::DimensionMismatch { expected: 2, actual: 3 }));
}

#[test]
fn empty_text_is_rejected_locally() {
    let err = embedder("http://127.0.0.1:9/unused", 2)
        .embed_batch(&["fine", " "])
        .unwrap_err();
    assert!(matches!(err, EmbedError::AtIndex { index: 1, .. }));
}

#[test]
fn api_key_is_sent_as_bearer_token() {
    std::env::set_var(evex::llm::LLM_API_KEY_ENV, "sk-test");
    let (url, seen) = stub(vec![(200, reply("ok"))]);
    let backend = chat(&url, 1);
    std::env::remove_var(evex::llm::LLM_API_KEY_ENV);
    backend.complete(&CompletionRequest::new("m", "hi", "r")).unwrap();
    let seen = seen.lock().unwrap();
    assert!(seen[0]
        .headers
        .iter()
        .any(|h| h.eq_ignore_ascii_case("authorization: Bearer sk-test")));
}
