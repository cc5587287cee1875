#![cfg(feature = "service")]

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use bnsens::formats::{dyspnea_document, serialize_document};
use bnsens::service::{router, ServiceConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Client {
    app: Router,
}

struct Reply {
    status: StatusCode,
    revision: Option<String>,
    text: String,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("{e}: {}", self.text))
    }
}

impl Client {
    fn new() -> Self {
        Client {
            app: router(ServiceConfig::default()),
        }
    }

    async fn send(&self, method: Method, uri: &str, body: Option<String>) -> Reply {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body.map(Body::from).unwrap_or_else(Body::empty))
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let revision = resp
            .headers()
            .get("x-revision")
            .map(|v| v.to_str().unwrap().to_string());
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        Reply {
            status,
            revision,
            text: String::from_utf8(bytes.to_vec()).unwrap(),
        }
    }

    async fn post(&self, uri: &str, body: Value) -> Reply {
        self.send(Method::POST, uri, Some(body.to_string())).await
    }

    async fn session(&self) -> String {
        let r = self
            .send(Method::POST, "/sessions", Some(serialize_document(&dyspnea_document())))
            .await;
        assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
        let v = r.json();
        assert_eq!(v["revision"], 0);
        v["id"].as_str().unwrap().to_string()
    }
}

fn scenario() -> Value {
    json!({"evidence": {"A": "t_A", "H": "t_H"}, "target": "B"})
}

fn cli_json(args: &[&str]) -> String {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = bnsens::cli::run(std::iter::once("bnsens").chain(args.iter().copied()), &mut out, &mut err);
    assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
    String::from_utf8(out).unwrap()
}

#[tokio::test]
async fn summary_matches_cli_output() {
    let c = Client::new();
    let id = c.session().await;
    let mut body = scenario();
    body["summary"] = json!(true);
    let r = c.post(&format!("/sessions/{id}/sensitivities"), body).await;
    assert_eq!(r.status, StatusCode::OK);
    let cli = cli_json(&["sens", "dyspnea", "--evidence", "A=t_A,H=t_H", "--target", "B", "--summary", "--format", "json"]);
    assert_eq!(r.text, cli);
    let v = r.json();
    assert!((v["node_max"]["B"]["value"].as_f64().unwrap() - 1.601014662549758).abs() < 1e-9);

    let q = c.post(&format!("/sessions/{id}/query"), scenario()).await;
    let cli = cli_json(&["query", "dyspnea", "--evidence", "A=t_A,H=t_H", "--target", "B", "--format", "json"]);
    assert_eq!(q.text, cli);
}

#[tokio::test]
async fn frozen_edit_is_rejected() {
    let c = Client::new();
    let id = c.session().await;
    let edit = json!([{"param": {"node": "C", "kind": "table", "state": "t_C", "given": ["t_B", "t_E"]}, "value": 0.5}]);
    let r = c.send(Method::PATCH, &format!("/sessions/{id}/params"), Some(edit.to_string())).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["reason"], "frozen parameter");
    let net = c.send(Method::GET, &format!("/sessions/{id}/network"), None).await;
    assert_eq!(net.revision.as_deref(), Some("0"));
}

#[tokio::test]
async fn edit_then_undo() {
    let c = Client::new();
    let id = c.session().await;
    let before = c.send(Method::GET, &format!("/sessions/{id}/network"), None).await;

    let edit = json!([{"param": {"node": "B", "kind": "table", "state": "t_B", "given": ["t_A"]}, "value": 0.10}]);
    let r = c.send(Method::PATCH, &format!("/sessions/{id}/params"), Some(edit.to_string())).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    assert_eq!(r.json()["revision"], 1);

    let q = c.post(&format!("/sessions/{id}/query"), scenario()).await.json();
    let p = q["distribution"][0].as_f64().unwrap();
    assert!((p - 0.16134385131857754).abs() < 1e-12);
    assert!(p > 0.0878);

    let u = c.post(&format!("/sessions/{id}/undo"), json!(null)).await;
    assert_eq!(u.json()["revision"], 2);
    let after = c.send(Method::GET, &format!("/sessions/{id}/network"), None).await;
    assert_eq!(after.text, before.text);
    assert_eq!(after.revision.as_deref(), Some("2"));

    let again = c.post(&format!("/sessions/{id}/undo"), json!(null)).await;
    assert_eq!(again.status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn error_statuses() {
    let c = Client::new();
    let missing = c.post("/sessions/00000000-0000-0000-0000-000000000000/query", scenario()).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
    assert_eq!(missing.json()["reason"], "unknown session");

    let bad = c.send(Method::POST, "/sessions", Some("{ not json".into())).await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);

    let id = c.session().await;
    let r = c.post(&format!("/sessions/{id}/query"), json!({"evidence": {}, "target": "Q"})).await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["reason"], "unknown variable");

    let r = c
        .post(&format!("/sessions/{id}/query"), json!({"evidence": {"B": "t_B", "C": "f_C"}, "target": "A"}))
        .await;
    assert_eq!(r.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(r.json()["reason"], "zero-probability evidence");

    let r = c.post(&format!("/sessions/{id}/query"), json!({"target": 3})).await;
    assert_eq!(r.status, StatusCode::BAD_REQUEST);

    let d = c.send(Method::DELETE, &format!("/sessions/{id}"), None).await;
    assert_eq!(d.status, StatusCode::NO_CONTENT);
    let gone = c.send(Method::GET, &format!("/sessions/{id}/network"), None).await;
    assert_eq!(gone.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn mc_is_seeded() {
    let c = Client::new();
    let id = c.session().await;
    let mut body = scenario();
    body["method"] = json!("likelihood-weighting");
    body["sample_count"] = json!(4000);
    body["seed"] = json!(11);
    let a = c.post(&format!("/sessions/{id}/mc-sensitivities"), body.clone()).await;
    assert_eq!(a.status, StatusCode::OK, "{}", a.text);
    let b = c.post(&format!("/sessions/{id}/mc-sensitivities"), body).await;
    assert_eq!(a.text, b.text);
}

#[tokio::test]
async fn assessments_and_fitting() {
    let c = Client::new();
    let id = c.session().await;
    let base = format!("/sessions/{id}/assessments");
    let list = c.send(Method::GET, &base, None).await.json();
    let initial = list.as_array().unwrap().len();

    let a = json!({"scenario": scenario(), "assessed": {"t_B": 0.3, "f_B": 0.7}});
    let r = c.post(&base, a.clone()).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.text);
    let index = r.json()["index"].as_u64().unwrap();
    assert_eq!(index as usize, initial);

    let bad = json!({"scenario": scenario(), "assessed": {"t_B": 0.3, "f_B": 0.3}});
    assert_eq!(c.post(&base, bad).await.status, StatusCode::UNPROCESSABLE_ENTITY);

    let step = c
        .post(&format!("/sessions/{id}/gradient-step"), json!({"assessment": index, "step": 0.01}))
        .await;
    assert_eq!(step.status, StatusCode::OK, "{}", step.text);
    let s = step.json();
    let before = s["distance"].as_f64().unwrap();
    let again = c
        .post(&format!("/sessions/{id}/gradient-step"), json!({"assessment": a, "step": 0.01}))
        .await
        .json();
    assert!(again["distance"].as_f64().unwrap() < before);

    let fit = c
        .post(
            &format!("/sessions/{id}/fit"),
            json!({"rule": "log", "config": {"max_epochs": 40}, "wait": true}),
        )
        .await;
    assert_eq!(fit.status, StatusCode::OK, "{}", fit.text);
    let v = fit.json();
    assert_eq!(v["status"], "done");
    let trace = v["result"]["objective_trace"].as_array().unwrap();
    assert!(trace.windows(2).all(|w| w[1].as_f64() <= w[0].as_f64()));

    let job = c
        .post(&format!("/sessions/{id}/fit"), json!({"rule": "quad", "config": {"max_epochs": 5}}))
        .await;
    assert_eq!(job.status, StatusCode::ACCEPTED);
    let url = job.json()["status_url"].as_str().unwrap().to_string();
    let mut status = String::new();
    for _ in 0..200 {
        status = c.send(Method::GET, &url, None).await.json()["status"].as_str().unwrap().to_string();
        if status != "running" {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    }
    assert_eq!(status, "done");

    let del = c.send(Method::DELETE, &format!("{base}/{index}"), None).await;
    assert_eq!(del.status, StatusCode::OK);
    let missing = c.send(Method::DELETE, &format!("{base}/{}", index + 5), None).await;
    assert_eq!(missing.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn snapshot_writes_document() {
    let dir = tempfile::tempdir().unwrap();
    let c = Client {
        app: router(ServiceConfig {
            snapshot_dir: Some(dir.path().to_path_buf()),
            ..ServiceConfig::default()
        }),
    };
    let id = c.session().await;
    let r = c.post(&format!("/sessions/{id}/snapshot"), json!(null)).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.text);
    let path = r.json()["path"].as_str().unwrap().to_string();
    let text = std::fs::read_to_string(path).unwrap();
    let net = c.send(Method::GET, &format!("/sessions/{id}/network"), None).await;
    assert_eq!(text, net.text);
}
