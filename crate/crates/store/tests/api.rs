mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use common::*;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use serow_store::api::router;

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>, token: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(t) = token {
        req = req.header(header::AUTHORIZATION, format!("Bearer {t}"));
    }
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = tower::ServiceExt::oneshot(app.clone(), req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() })
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, None, None).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, Some(body), None).await
}

fn setup() -> (tempfile::TempDir, Router, String) {
    let dir = tempfile::tempdir().unwrap();
    let (store, run, _) = seeded_week(dir.path());
    (dir, router(Arc::new(store), None), run.run_id)
}

#[tokio::test]
async fn review_round_trip() {
    let (_dir, app, run_id) = setup();
    let (s, runs) = get(&app, "/runs").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(runs["runs"][0]["run_id"], run_id.as_str());
    assert_eq!(runs["runs"][0]["positive_count"], POSITIVES);

    let (s, queue) = get(&app, &format!("/runs/{run_id}/predictions?label=relevant")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(queue["total"], POSITIVES);
    let first = &queue["items"][0];
    assert!(first["summary_used"].as_str().unwrap().contains("Chitwan"));
    assert!(first["classification_justification"].as_str().is_some());
    assert_eq!(first["reflection_confirmed"], true);
    assert_eq!(first["feedback"], Value::Null);
    let a = queue["items"][0]["prediction_id"].as_i64().unwrap();
    let b = queue["items"][1]["prediction_id"].as_i64().unwrap();

    let (s, fb) = post(&app, &format!("/predictions/{a}/feedback"), json!({"label": "relevant", "annotator": "ana"})).await;
    assert_eq!(s, StatusCode::CREATED, "{fb}");
    assert_eq!(fb["expert_label"], "relevant");
    let (s, _) = post(&app, &format!("/predictions/{b}/feedback"), json!({"label": "not_relevant", "annotator": "ana"})).await;
    assert_eq!(s, StatusCode::CREATED);

    let (s, report) = get(&app, "/reports/deployment?language=en").await;
    assert_eq!(s, StatusCode::OK);
    let counts = &report["report"]["aggregate"]["metrics"]["counts"];
    assert_eq!((counts["tp"].as_u64(), counts["fp"].as_u64()), (Some(1), Some(1)));
    assert!(report["table"].as_str().unwrap().contains("2023-W06 | 2 | 0.50 | 1.00 | 0.67"));

    let (_, queue) = get(&app, &format!("/runs/{run_id}/predictions?label=relevant")).await;
    assert_eq!(queue["items"][0]["feedback"]["expert_label"], "relevant");

    let article = queue["items"][0]["article_id"].clone();
    let (s, info) = post(&app, "/pool/promote", json!({"article_ref": article, "explanation": "Park patrol story."})).await;
    assert_eq!(s, StatusCode::CREATED, "{info}");
    assert_eq!((info["version"].as_u64(), info["size"].as_u64()), (Some(2), Some(7)));
    let (s, err) = post(&app, "/pool/promote", json!({"article_ref": article, "explanation": "Again."})).await;
    assert_eq!((s, err["code"].as_str()), (StatusCode::CONFLICT, Some("conflict")));
    let (_, pools) = get(&app, "/pool/en").await;
    assert_eq!(pools["versions"].as_array().unwrap().len(), 2);

    let (s, hist) = get(&app, &format!("/predictions/{a}/feedback")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(hist["history"][0]["promoted_to_pool"], true);
}

#[tokio::test]
async fn errors_use_one_shape() {
    let (_dir, app, run_id) = setup();
    let cases = [
        (Method::GET, "/runs/nope/predictions".to_string(), None, StatusCode::NOT_FOUND, "not_found"),
        (Method::GET, format!("/runs/{run_id}/predictions?label=maybe"), None, StatusCode::BAD_REQUEST, "invalid_argument"),
        (Method::GET, format!("/runs/{run_id}/predictions?page=0"), None, StatusCode::BAD_REQUEST, "invalid_argument"),
        (
            Method::POST,
            "/predictions/abc/feedback".to_string(),
            Some(json!({"label": "relevant", "annotator": "a"})),
            StatusCode::BAD_REQUEST,
            "invalid_argument",
        ),
        (
            Method::POST,
            "/predictions/424242/feedback".to_string(),
            Some(json!({"label": "relevant", "annotator": "a"})),
            StatusCode::BAD_REQUEST,
            "invalid_argument",
        ),
        (
            Method::POST,
            "/predictions/1/feedback".to_string(),
            Some(json!({"label": "perhaps", "annotator": "a"})),
            StatusCode::UNPROCESSABLE_ENTITY,
            "invalid_argument",
        ),
        (
            Method::POST,
            "/pool/promote".to_string(),
            Some(json!({"article_ref": "unlabeled", "explanation": "x"})),
            StatusCode::CONFLICT,
            "precondition_failed",
        ),
        (Method::GET, "/nothing/here".to_string(), None, StatusCode::NOT_FOUND, "not_found"),
    ];
    for (method, uri, body, status, code) in cases {
        let (s, v) = call(&app, method, &uri, body, None).await;
        assert_eq!(s, status, "{uri}: {v}");
        assert_eq!(v["code"], code, "{uri}");
        assert!(v["message"].as_str().is_some_and(|m| !m.is_empty()), "{uri}");
        assert!(v.get("details").is_some(), "{uri}");
    }
}

#[tokio::test]
async fn bearer_token_is_enforced() {
    let dir = tempfile::tempdir().unwrap();
    let (store, _, _) = seeded_week(dir.path());
    let app = router(Arc::new(store), Some("s3cret".into()));
    let (s, v) = call(&app, Method::GET, "/runs", None, None).await;
    assert_eq!((s, v["code"].as_str()), (StatusCode::UNAUTHORIZED, Some("unauthorized")));
    let (s, _) = call(&app, Method::GET, "/runs", None, Some("wrong")).await;
    assert_eq!(s, StatusCode::UNAUTHORIZED);
    let (s, _) = call(&app, Method::GET, "/runs", None, Some("s3cret")).await;
    assert_eq!(s, StatusCode::OK);
}

#[tokio::test]
async fn report_without_runs_is_empty() {
    let app = router(Arc::new(serow_store::Store::open_in_memory().unwrap()), None);
    let (s, v) = get(&app, "/reports/deployment").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["report"], Value::Null);
    let (_, v) = get(&app, "/runs").await;
    assert_eq!(v["runs"], json!([]));
}
