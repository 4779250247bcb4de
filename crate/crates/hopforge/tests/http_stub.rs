mod common;

use common::StubServer;
use hopforge::http::{HttpSettings, JsonClient, RemotePolicy, RemoteRetriever};
use hopforge_core::corpus::{generate_synthetic_corpus, ChainSpec};
use hopforge_core::policy::{PromptSpec, QueryPolicy};
use hopforge_core::retrieval::{Context, Retriever};
use hopforge_core::Error;
use serde_json::json;

fn settings(max_retries: u32) -> HttpSettings {
    HttpSettings { timeout_ms: 2000, max_retries, max_in_flight: 4, retry_backoff_ms: 1 }
}

fn hit(id: &str, score: f64) -> serde_json::Value {
    json!({"id": id, "title": id, "text": "", "score": score})
}

#[test]
fn server_errors_are_retried_then_reported() {
    let server = StubServer::start(|_, _| (500, "{}".into()));
    let retriever = RemoteRetriever::new(JsonClient::new(&server.url, settings(2)));
    let err = retriever.retrieve("anything", 3).unwrap_err();
    assert!(matches!(err, Error::Transport { status: Some(500), .. }), "{err:?}");
    assert_eq!(server.hits(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = StubServer::start(|_, _| (404, "{}".into()));
    let retriever = RemoteRetriever::new(JsonClient::new(&server.url, settings(3)));
    let err = retriever.retrieve("anything", 3).unwrap_err();
    assert!(matches!(err, Error::Transport { status: Some(404), .. }), "{err:?}");
    assert_eq!(server.hits(), 1);
}

#[test]
fn rate_limits_are_retried_until_success() {
    let server = StubServer::start({
        let calls = std::sync::atomic::AtomicUsize::new(0);
        move |_, _| {
            if calls.fetch_add(1, std::sync::atomic::Ordering::SeqCst) == 0 {
                (429, "{}".into())
            } else {
                (200, json!({"documents": [hit("d1", 1.0)]}).to_string())
            }
        }
    });
    let retriever = RemoteRetriever::new(JsonClient::new(&server.url, settings(2)));
    let docs = retriever.retrieve("anything", 3).unwrap();
    assert_eq!(docs.doc_ids().collect::<Vec<_>>(), ["d1"]);
    assert_eq!(server.hits(), 2);
}

#[test]
fn duplicate_documents_are_dropped_and_results_truncated() {
    let server = StubServer::start(|path, body| {
        assert_eq!(path, "/search");
        assert_eq!(body["query"], "who");
        let docs = vec![hit("a", 3.0), hit("a", 2.5), hit("b", 2.0), hit("c", 1.0), hit("d", 0.5)];
        (200, json!({ "documents": docs }).to_string())
    });
    let retriever = RemoteRetriever::new(JsonClient::new(&server.url, settings(0)));
    let docs = retriever.retrieve("who", 2).unwrap();
    assert_eq!(docs.doc_ids().collect::<Vec<_>>(), ["a", "b"]);
    assert_eq!(docs.k, 2);
}

#[test]
fn malformed_bodies_are_protocol_errors() {
    let server = StubServer::start(|_, _| (200, json!({"results": []}).to_string()));
    let retriever = RemoteRetriever::new(JsonClient::new(&server.url, settings(2)));
    assert!(matches!(retriever.retrieve("q", 2), Err(Error::Protocol(_))));
    assert_eq!(server.hits(), 1);

    let server = StubServer::start(|_, _| (200, json!({"documents": [hit("a", 1.0), hit("b", 2.0)]}).to_string()));
    let retriever = RemoteRetriever::new(JsonClient::new(&server.url, settings(0)));
    assert!(matches!(retriever.retrieve("q", 2), Err(Error::Protocol(_))));
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    drop(listener);
    let retriever = RemoteRetriever::new(JsonClient::new(&url, settings(1)));
    assert!(matches!(retriever.retrieve("q", 2), Err(Error::Transport { status: None, .. })));
}

#[test]
fn generated_queries_keep_the_first_line() {
    let corpus = generate_synthetic_corpus(&ChainSpec { num_chains: 10, ..Default::default() }).unwrap();
    let server = StubServer::start(|path, body| {
        assert_eq!(path, "/generate");
        let prompt = body["prompt"].as_str().unwrap();
        assert!(prompt.contains("Question: "));
        assert!(prompt.trim_end().ends_with("Query:"));
        assert!(body["seed"].is_u64());
        (200, json!({"text": "  foo\nbar"}).to_string())
    });
    let policy = RemotePolicy::new(JsonClient::new(&server.url, settings(0)), &corpus, 32);
    let q = &corpus.questions()[0];
    let s = policy.sample_query(q, &Context::new(), &PromptSpec::unprompted(), 0.7, 11).unwrap();
    assert_eq!(s.query, "foo");
    assert_eq!(s.logprob, None);
    assert_eq!(s.temperature, 0.7);
}

#[test]
fn empty_completions_are_protocol_errors() {
    let corpus = generate_synthetic_corpus(&ChainSpec { num_chains: 10, ..Default::default() }).unwrap();
    let server = StubServer::start(|_, _| (200, json!({"text": "\n  \n"}).to_string()));
    let policy = RemotePolicy::new(JsonClient::new(&server.url, settings(0)), &corpus, 32);
    let q = &corpus.questions()[0];
    let err = policy.sample_query(q, &Context::new(), &PromptSpec::unprompted(), 0.7, 1).unwrap_err();
    assert!(matches!(err, Error::Protocol(_)), "{err:?}");
}
