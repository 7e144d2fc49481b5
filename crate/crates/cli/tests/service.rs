mod common;

use std::sync::Arc;

use chainrag_cli::app::load_stores;
use chainrag_cli::config::LoadedConfig;
use chainrag_cli::service::{serve, AppState};
use common::Toy;
use serde_json::{json, Value};

const QUESTION: &str = "What was the population at the 2001 census of the town where Kirton End is located?";

struct Running {
    _toy: Toy,
    base: String,
    _runtime: tokio::runtime::Runtime,
    agent: ureq::Agent,
}

impl Running {
    fn start() -> Self {
        let toy = Toy::indexed();
        let cfg = LoadedConfig::load(&toy.path("config.toml")).unwrap();
        let state = Arc::new(AppState {
            stores: load_stores(&cfg).unwrap(),
            pipeline: cfg.config.pipeline.clone(),
        });
        let runtime = tokio::runtime::Runtime::new().unwrap();
        let listener = runtime.block_on(tokio::net::TcpListener::bind("127.0.0.1:0")).unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        runtime.spawn(async move { serve(state, listener).await });
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Self {
            _toy: toy,
            base,
            _runtime: runtime,
            agent,
        }
    }

    fn post(&self, path: &str, body: &str) -> (u16, Value) {
        let mut resp = self
            .agent
            .post(&format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .send(body)
            .unwrap();
        let status = resp.status().as_u16();
        (status, serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap())
    }
}

#[test]
fn healthz_is_ok() {
    let s = Running::start();
    let mut resp = s.agent.get(&format!("{}/healthz", s.base)).call().unwrap();
    assert_eq!(resp.status().as_u16(), 200);
    let body: Value = serde_json::from_str(&resp.body_mut().read_to_string().unwrap()).unwrap();
    assert_eq!(body["status"], "ok");
}

#[test]
fn retrieve_returns_k_documents_in_score_order() {
    let s = Running::start();
    let (status, body) = s.post("/retrieve", &json!({ "question": QUESTION, "k": 2 }).to_string());
    assert_eq!(status, 200);
    let docs = body["documents"].as_array().unwrap();
    assert_eq!(docs.len(), 2);
    assert!(docs[0]["score"].as_f64().unwrap() >= docs[1]["score"].as_f64().unwrap());
    assert!(docs.iter().all(|d| d["best_triple"].is_string()));

    // Without k the configured final_docs (3) applies.
    let (_, body) = s.post("/retrieve", &json!({ "question": QUESTION }).to_string());
    assert_eq!(body["documents"].as_array().unwrap().len(), 3);
}

#[test]
fn answer_endpoint_answers() {
    let s = Running::start();
    let (status, body) = s.post("/answer", &json!({ "question": QUESTION }).to_string());
    assert_eq!(status, 200);
    assert_eq!(body["answer"], "35,124");
}

#[test]
fn bad_requests_are_rejected() {
    let s = Running::start();
    for body in [
        "not json",
        "{}",
        r#"{"question": "   "}"#,
        r#"{"question": "q", "k": 0}"#,
        r#"{"question": "q", "extra": 1}"#,
    ] {
        let (status, reply) = s.post("/retrieve", body);
        assert_eq!(status, 400, "{body}");
        assert!(reply["error"].is_string());
    }
}
