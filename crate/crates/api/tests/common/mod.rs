#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{Duration, TimeZone, Utc};
use http_body_util::BodyExt;
use innerpond_api::{router, AppState};
use innerpond_core::clock::SteppingClock;
use innerpond_core::gateway::Provider;
use innerpond_core::testkit::{self, RuleProvider};
use innerpond_core::SessionConfig;
use serde_json::{json, Value};
use tower::ServiceExt;

pub struct TestApp {
    pub state: AppState,
    pub router: Router,
}

pub fn clock() -> Arc<SteppingClock> {
    Arc::new(SteppingClock::new(
        Utc.with_ymd_and_hms(2025, 3, 14, 9, 0, 0).unwrap(),
        Duration::seconds(1),
    ))
}

pub fn app_with(provider: Arc<dyn Provider>, data_dir: Option<PathBuf>) -> TestApp {
    let state = AppState::with_clock(provider, clock(), SessionConfig::default(), data_dir);
    TestApp {
        router: router(state.clone()),
        state,
    }
}

pub fn app(data_dir: Option<PathBuf>) -> TestApp {
    app_with(Arc::new(RuleProvider::default()), data_dir)
}

pub fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../demo")
}

pub fn demo_script() -> Value {
    let text = std::fs::read_to_string(demo_dir().join("script.json")).expect("demo script");
    serde_json::from_str(&text).expect("demo script is JSON")
}

impl TestApp {
    pub async fn raw(&self, method: Method, uri: &str, body: Option<&str>) -> (StatusCode, Vec<u8>) {
        let mut req = Request::builder().method(method).uri(uri);
        if body.is_some() {
            req = req.header("content-type", "application/json");
        }
        let req = req
            .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
            .unwrap();
        let res = self.router.clone().oneshot(req).await.unwrap();
        let status = res.status();
        let bytes = res.into_body().collect().await.unwrap().to_bytes().to_vec();
        (status, bytes)
    }

    pub async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let text = body.map(|b| b.to_string());
        let (status, bytes) = self.raw(method, uri, text.as_deref()).await;
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, value)
    }

    /// Like `call`, but panics unless the response is a success.
    pub async fn ok(&self, method: Method, uri: &str, body: Option<Value>) -> Value {
        let (status, value) = self.call(method.clone(), uri, body).await;
        assert!(status.is_success(), "{method} {uri} -> {status}: {value}");
        value
    }

    pub async fn create_p6(&self) -> String {
        let created = self.ok(Method::POST, "/sessions", Some(testkit::p6_presurvey())).await;
        created["session_id"].as_str().unwrap().to_string()
    }

    async fn resolve(&self, sid: &str, key: &str) -> String {
        let positions = self.ok(Method::GET, &format!("/sessions/{sid}/positions"), None).await;
        positions
            .as_array()
            .unwrap()
            .iter()
            .find(|p| p["id"] == key || p["name"] == key)
            .unwrap_or_else(|| panic!("no position {key}"))["id"]
            .as_str()
            .unwrap()
            .to_string()
    }

    /// Plays a headless-runner script through the HTTP endpoints only.
    pub async fn drive_script(&self, sid: &str, script: &Value) {
        let base = format!("/sessions/{sid}");
        let mut topics: Vec<(Vec<String>, Vec<String>)> = Vec::new();
        let mut group: Option<String> = None;
        for step in script["steps"].as_array().unwrap() {
            let pos = |k: &str| step[k].as_str().unwrap().to_string();
            match step["action"].as_str().unwrap() {
                "edit_position" => {
                    let id = self.resolve(sid, &pos("position")).await;
                    self.ok(Method::PATCH, &format!("{base}/positions/{id}"), Some(step["patch"].clone()))
                        .await;
                }
                "add_position" => {
                    self.ok(Method::POST, &format!("{base}/positions"), Some(step["position"].clone()))
                        .await;
                }
                "delete_position" => {
                    let id = self.resolve(sid, &pos("position")).await;
                    self.ok(Method::DELETE, &format!("{base}/positions/{id}"), None).await;
                }
                "enrich" => {
                    let id = self.resolve(sid, &pos("position")).await;
                    let round = self
                        .ok(Method::POST, &format!("{base}/positions/{id}/enrichment"), None)
                        .await;
                    let mut answers = step["answers"].as_array().cloned().unwrap_or_default();
                    answers.resize(round["questions"].as_array().unwrap().len(), Value::Null);
                    let rid = round["id"].as_str().unwrap();
                    self.ok(
                        Method::POST,
                        &format!("{base}/enrichment/{rid}/apply"),
                        Some(json!({ "answers": answers })),
                    )
                    .await;
                }
                "open_dialogue" => {
                    let id = self.resolve(sid, &pos("position")).await;
                    let dialogue = self.ok(Method::POST, &format!("{base}/positions/{id}/dialogue"), None).await;
                    let did = dialogue["id"].as_str().unwrap();
                    for text in step["messages"].as_array().cloned().unwrap_or_default() {
                        self.ok(
                            Method::POST,
                            &format!("{base}/dialogues/{did}/messages"),
                            Some(json!({ "text": text })),
                        )
                        .await;
                    }
                    if step["close"] == true {
                        self.ok(Method::POST, &format!("{base}/dialogues/{did}/close"), None).await;
                    }
                }
                action @ ("move_leaf" | "resize_leaf" | "recolor_leaf") => {
                    let id = self.resolve(sid, &pos("position")).await;
                    let mut update = json!({ "position_id": id });
                    let fields: &[&str] = match action {
                        "move_leaf" => &["x", "y"],
                        "resize_leaf" => &["size"],
                        _ => &["color"],
                    };
                    for f in fields {
                        update[*f] = step[*f].clone();
                    }
                    self.ok(Method::PUT, &format!("{base}/pond/layouts"), Some(json!([update]))).await;
                }
                "generate_topics" => {
                    let mut pair = Vec::new();
                    for k in step["pair"].as_array().unwrap() {
                        pair.push(self.resolve(sid, k.as_str().unwrap()).await);
                    }
                    let set = self
                        .ok(Method::POST, &format!("{base}/groups/topics"), Some(json!({ "pair": pair })))
                        .await;
                    let questions = set["questions"]
                        .as_array()
                        .unwrap()
                        .iter()
                        .map(|q| q.as_str().unwrap().to_string())
                        .collect();
                    topics.push((pair, questions));
                }
                "start_group" => {
                    let mut pair = Vec::new();
                    for k in step["pair"].as_array().unwrap() {
                        pair.push(self.resolve(sid, k.as_str().unwrap()).await);
                    }
                    let topic = match &step["topic"] {
                        Value::Number(n) => {
                            let mut sorted = pair.clone();
                            sorted.sort();
                            let (_, questions) = topics
                                .iter()
                                .rev()
                                .find(|(p, _)| {
                                    let mut p = p.clone();
                                    p.sort();
                                    p == sorted
                                })
                                .expect("topics generated for pair");
                            questions[n.as_u64().unwrap() as usize].clone()
                        }
                        other => other.as_str().unwrap().to_string(),
                    };
                    let started = self
                        .ok(
                            Method::POST,
                            &format!("{base}/groups"),
                            Some(json!({ "pair": pair, "topic": topic })),
                        )
                        .await;
                    group = Some(started["group"]["id"].as_str().unwrap().to_string());
                }
                "skip" => {
                    let gid = step["group"].as_str().map(String::from).or(group.clone()).unwrap();
                    self.ok(Method::POST, &format!("{base}/groups/{gid}/skip"), None).await;
                }
                "mediate" => {
                    let gid = step["group"].as_str().map(String::from).or(group.clone()).unwrap();
                    self.ok(
                        Method::POST,
                        &format!("{base}/groups/{gid}/messages"),
                        Some(json!({ "text": step["text"] })),
                    )
                    .await;
                }
                "save_snapshot" => {
                    let body = match step.get("user") {
                        Some(user) => json!({ "user": user }),
                        None => json!({}),
                    };
                    self.ok(Method::POST, &format!("{base}/pond/snapshots"), Some(body)).await;
                }
                other => panic!("unknown action {other}"),
            }
        }
    }
}

/// Event log lines with every timestamp masked, for comparing runs made at
/// different times.
pub fn normalized_log(path: &Path) -> Vec<String> {
    let stamp = regex::Regex::new(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})").unwrap();
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| stamp.replace_all(l, "<ts>").into_owned())
        .collect()
}
