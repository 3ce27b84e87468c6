mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use boars::engine::run_boars;
use boars::grid::{generate_synthetic_grid, SimulatedInstrument, SyntheticConfig};
use boars::session::{router, SessionManager, ThresholdVoter};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

fn app() -> Router {
    router(Arc::new(SessionManager::new()))
}

fn create_body(voter: Value) -> Value {
    json!({
        "dataset": {"synthetic": {"seed": 2, "config": {"height": 16, "width": 16}}},
        "config": {"initial": 4, "iterations": 8, "train": {"steps": 40, "refit_steps": 10, "hidden": [16, 8]}},
        "voter": voter,
    })
}

/// Polls the session until it stops running.
async fn settle(app: &Router, id: &str) -> Value {
    for _ in 0..600 {
        let (status, snap) = call(app, Method::GET, &format!("/api/v1/sessions/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        if snap["status"] != "running" {
            return snap;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    panic!("session {id} never settled");
}

async fn create(app: &Router, voter: Value) -> String {
    let (status, snap) = call(app, Method::POST, "/api/v1/sessions", Some(create_body(voter))).await;
    assert_eq!(status, StatusCode::CREATED, "{snap}");
    snap["id"].as_str().unwrap().to_string()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn interactive_session_round_trip() {
    let app = app();
    let id = create(&app, json!("interactive")).await;
    let base = format!("/api/v1/sessions/{id}");

    let snap = settle(&app, &id).await;
    assert_eq!(snap["status"], "awaiting_human");
    assert_eq!(snap["pending"]["kind"], "await_vote");
    let (status, err) = call(&app, Method::GET, &format!("{base}/maps"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND, "{err}");

    let (status, pending) = call(&app, Method::GET, &format!("{base}/spectrum"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(pending["spectrum"].as_array().unwrap().len(), 64);
    assert_eq!(pending["bias"].as_array().unwrap().len(), 64);
    let pending_id = pending["id"].as_u64().unwrap();

    let (status, err) = call(&app, Method::POST, &format!("{base}/vote"), Some(json!({"vote": 3, "preference": 0.5}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"], "invalid_argument");
    let (status, _) = call(&app, Method::POST, &format!("{base}/vote"), Some(json!({"vote": 1, "preference": -0.1}))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, Method::POST, &format!("{base}/vote"), Some(json!({"vote": "x"}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, Method::POST, &format!("{base}/satisfaction"), Some(json!({"satisfied": true}))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let vote = json!({"vote": 2, "preference": 0.5, "pending_id": pending_id});
    let (status, _) = call(&app, Method::POST, &format!("{base}/vote"), Some(vote.clone())).await;
    assert_eq!(status, StatusCode::OK);
    // the same answer twice is not applied twice
    let (status, err) = call(&app, Method::POST, &format!("{base}/vote"), Some(vote)).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "conflict");

    let (status, target) = call(&app, Method::GET, &format!("{base}/target"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(target["target"].as_array().unwrap().len(), 64);
    assert_eq!(target["phase"], "human_augmented");

    // answer everything until the loop asks for satisfaction, then freeze
    let mut satisfied = false;
    loop {
        let snap = settle(&app, &id).await;
        if snap["status"] != "awaiting_human" {
            assert_eq!(snap["status"], "finished");
            break;
        }
        let pid = snap["pending"]["id"].as_u64().unwrap();
        if snap["pending"]["kind"] == "await_satisfaction" {
            let explored = snap["explored_count"].as_u64().unwrap();
            satisfied = explored >= 7;
            let body = json!({"satisfied": satisfied, "pending_id": pid});
            let (status, _) = call(&app, Method::POST, &format!("{base}/satisfaction"), Some(body)).await;
            assert_eq!(status, StatusCode::OK);
        } else {
            let body = json!({"vote": 1, "preference": 0.5, "pending_id": pid});
            let (status, _) = call(&app, Method::POST, &format!("{base}/vote"), Some(body)).await;
            assert_eq!(status, StatusCode::OK);
        }
    }
    assert!(satisfied);
    let snap = settle(&app, &id).await;
    assert_eq!(snap["explored_count"], 12);
    assert_eq!(snap["phase"], "automated");

    for kind in ["mean", "variance", "truth", "error"] {
        let (status, map) = call(&app, Method::GET, &format!("{base}/maps?kind={kind}"), None).await;
        assert_eq!(status, StatusCode::OK, "{kind}");
        let n = map["rows"].as_u64().unwrap() * map["cols"].as_u64().unwrap();
        assert_eq!(map["values"].as_array().unwrap().len() as u64, n);
    }
    let (status, _) = call(&app, Method::GET, &format!("{base}/maps?kind=bogus"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, Method::GET, &format!("{base}/spectrum"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let dir = tempfile::tempdir().unwrap();
    let (status, out) = call(&app, Method::POST, &format!("{base}/export"), Some(json!({"path": dir.path()}))).await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert_eq!(out["aborted"], false);
    assert!(dir.path().join("run.json").exists());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn abort_then_export_marks_the_record() {
    let app = app();
    let id = create(&app, json!("interactive")).await;
    let base = format!("/api/v1/sessions/{id}");
    settle(&app, &id).await;
    let dir = tempfile::tempdir().unwrap();
    let (status, _) = call(&app, Method::POST, &format!("{base}/export"), Some(json!({"path": dir.path()}))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let (status, snap) = call(&app, Method::POST, &format!("{base}/abort"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(snap["status"], "aborted");
    let (status, _) = call(&app, Method::POST, &format!("{base}/vote"), Some(json!({"vote": 1, "preference": 0.5}))).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, out) = call(&app, Method::POST, &format!("{base}/export"), Some(json!({"path": dir.path()}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(out["aborted"], true);
    let run: Value = serde_json::from_slice(&std::fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run["aborted"], true);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn unknown_sessions_and_bad_requests() {
    let app = app();
    let (status, err) = call(&app, Method::GET, "/api/v1/sessions/nope", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(err["error"], "not_found");
    let missing = uuid_like();
    for path in ["", "/spectrum", "/target", "/maps"] {
        let (status, _) = call(&app, Method::GET, &format!("/api/v1/sessions/{missing}{path}"), None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{path}");
    }
    let (status, _) = call(&app, Method::POST, &format!("/api/v1/sessions/{missing}/abort"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = call(&app, Method::POST, "/api/v1/sessions", Some(json!({"dataset": {"bogus": 1}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let mut body = create_body(json!("interactive"));
    body["config"]["iterations"] = json!(0);
    let (status, _) = call(&app, Method::POST, "/api/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let body = json!({"dataset": {"path": "/nonexistent/grid.bgrd"}});
    let (status, _) = call(&app, Method::POST, "/api/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

fn uuid_like() -> &'static str {
    "00000000-0000-4000-8000-000000000000"
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scripted_session_matches_a_direct_run() {
    let app = app();
    let voter = ThresholdVoter { satisfy_after: 6, ..ThresholdVoter::default() };
    let id = create(&app, json!({"threshold": voter})).await;
    let base = format!("/api/v1/sessions/{id}");
    // a scripted session is never reported as waiting for a person
    let mut snap;
    loop {
        let (_, s) = call(&app, Method::GET, &base, None).await;
        assert_ne!(s["status"], "awaiting_human");
        snap = s;
        if snap["status"] != "running" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(snap["status"], "finished", "{snap}");
    let dir = tempfile::tempdir().unwrap();
    let (status, _) = call(&app, Method::POST, &format!("{base}/export"), Some(json!({"path": dir.path()}))).await;
    assert_eq!(status, StatusCode::OK);

    let body = create_body(Value::Null);
    let config: boars::engine::BoConfig = serde_json::from_value(body["config"].clone()).unwrap();
    let grid_config = SyntheticConfig { height: 16, width: 16, ..SyntheticConfig::default() };
    let grid = Arc::new(generate_synthetic_grid(&grid_config, 2).unwrap());
    let mut voter = voter;
    let direct = tokio::task::spawn_blocking(move || {
        run_boars(config, Box::new(SimulatedInstrument::new(grid)), &mut voter).unwrap()
    })
    .await
    .unwrap();
    assert_eq!(boars::record::read_summary(dir.path()).unwrap(), direct.summary());
}
