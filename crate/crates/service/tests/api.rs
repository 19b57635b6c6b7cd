mod common;

use std::sync::atomic::Ordering;

use axum::http::StatusCode;
use common::{ids, Harness, StubModel, HIGH, LOW, MID};
use radscan_service::{replay_audit, Status, OPENAPI_YAML};

#[tokio::test]
async fn health_is_ok() {
    let h = Harness::new();
    assert_eq!(h.json("/health").await["status"], "ok");
}

#[tokio::test]
async fn worklist_orders_by_probability_then_id() {
    let h = Harness::new();
    let page = h.json("/worklist").await;
    assert_eq!(ids(&page), [HIGH, MID, LOW]);
    assert_eq!(page["total"], 3);
    let probs: Vec<f64> = page["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["study_probability"].as_f64().unwrap())
        .collect();
    for (got, want) in probs.iter().zip([0.9, 0.5, 0.2]) {
        assert!((got - want).abs() < 1e-6, "{got} vs {want}");
    }
    let asc = h.json("/worklist?sort=prob_asc").await;
    assert_eq!(ids(&asc), [LOW, MID, HIGH]);
}

#[tokio::test]
async fn ties_break_on_study_id() {
    let h = Harness::with_model(StubModel::new(&[("patient", 0.7)]));
    let page = h.json("/worklist").await;
    let mut sorted = ids(&page);
    sorted.sort();
    assert_eq!(ids(&page), sorted);
}

#[tokio::test]
async fn model_call_uses_inclusive_threshold() {
    let h = Harness::new();
    let detail = h.json(&format!("/studies/{MID}")).await;
    assert_eq!(detail["model_call"], "ABNORMAL");
    let low = h.json(&format!("/studies/{LOW}")).await;
    assert_eq!(low["model_call"], "NORMAL");
}

#[tokio::test]
async fn worklist_filters() {
    let h = Harness::new();
    let wrist = h.json("/worklist?body_part=WRIST").await;
    assert_eq!(ids(&wrist), [HIGH, LOW]);
    let lower = h.json("/worklist?body_part=elbow").await;
    assert_eq!(ids(&lower), [MID]);

    h.post(&format!("/studies/{HIGH}/decision"), r#"{"verdict":"ABNORMAL"}"#).await;
    let pending = h.json("/worklist?status=PENDING").await;
    assert_eq!(ids(&pending), [MID, LOW]);
    let done = h.json("/worklist?status=CONFIRMED_ABNORMAL").await;
    assert_eq!(ids(&done), [HIGH]);
}

#[tokio::test]
async fn worklist_pages() {
    let h = Harness::new();
    let first = h.json("/worklist?page=1&page_size=2").await;
    assert_eq!(ids(&first), [HIGH, MID]);
    assert_eq!(first["total"], 3);
    let second = h.json("/worklist?page=2&page_size=2").await;
    assert_eq!(ids(&second), [LOW]);
    let beyond = h.json("/worklist?page=3&page_size=2").await;
    assert!(ids(&beyond).is_empty());
}

#[tokio::test]
async fn worklist_rejects_bad_parameters() {
    let h = Harness::new();
    for query in [
        "status=DONE",
        "body_part=KNEE",
        "sort=alpha",
        "page=0",
        "page=x",
        "page_size=0",
        "page_size=501",
        "colour=red",
    ] {
        let (status, body) = h.get(&format!("/worklist?{query}")).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{query}");
        let err: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert!(err["error"].is_string(), "{query}");
    }
}

#[tokio::test]
async fn study_detail_lists_images() {
    let h = Harness::new();
    let detail = h.json(&format!("/studies/{HIGH}")).await;
    assert_eq!(detail["image_count"], 2);
    assert_eq!(detail["status"], "PENDING");
    assert_eq!(detail["version"], 0);
    assert!(detail["decision"].is_null());
    let images = detail["images"].as_array().unwrap();
    assert_eq!(images.len(), 2);
    assert_eq!(images[1]["index"], 1);
    assert_eq!(images[1]["file_name"], "image2.png");
    assert_eq!(images[0]["overlay_url"], format!("/studies/{HIGH}/images/0/overlay"));
    assert!(detail["scored_at"].as_str().unwrap().ends_with('Z'));
}

#[tokio::test]
async fn unknown_ids_are_404() {
    let h = Harness::new();
    for uri in [
        "/studies/XR_HAND-patient99999-study1_negative".to_string(),
        format!("/studies/{HIGH}/images/2"),
        format!("/studies/{HIGH}/images/2/overlay"),
        "/studies/nope/images/0".to_string(),
        "/audit?study_id=nope".to_string(),
    ] {
        let (status, _) = h.get(&uri).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{uri}");
    }
    let (status, _) = h.post("/studies/nope/decision", r#"{"verdict":"NORMAL"}"#).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = h.post("/studies/nope/reopen", "").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn original_image_is_served_verbatim() {
    let h = Harness::new();
    let detail = h.json(&format!("/studies/{LOW}")).await;
    let (status, bytes) = h.get(&format!("/studies/{LOW}/images/0")).await;
    assert_eq!(status, StatusCode::OK);
    let path = h.state.store().image(LOW, 0).unwrap().path;
    assert_eq!(bytes.as_ref(), std::fs::read(path).unwrap().as_slice());
    assert_eq!(detail["images"][0]["file_name"], "image1.png");
}

#[tokio::test]
async fn decision_transitions() {
    let cases = [
        (HIGH, "ABNORMAL", "CONFIRMED_ABNORMAL"),
        (HIGH, "NORMAL", "OVERRIDDEN_NORMAL"),
        (LOW, "NORMAL", "CONFIRMED_NORMAL"),
        (LOW, "ABNORMAL", "OVERRIDDEN_ABNORMAL"),
    ];
    for (id, verdict, want) in cases {
        let h = Harness::new();
        let (status, body) = h
            .post(&format!("/studies/{id}/decision"), &format!(r#"{{"verdict":"{verdict}","note":"n"}}"#))
            .await;
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
        let item: serde_json::Value = serde_json::from_slice(&body).unwrap();
        assert_eq!(item["status"], want);
        assert_eq!(item["version"], 1);
        let detail = h.json(&format!("/studies/{id}")).await;
        assert_eq!(detail["decision"]["verdict"], verdict);
        assert_eq!(detail["decision"]["reviewer"], "dr-test");
        assert_eq!(detail["decision"]["note"], "n");
    }
}

#[tokio::test]
async fn second_decision_conflicts() {
    let h = Harness::new();
    let uri = format!("/studies/{HIGH}/decision");
    assert_eq!(h.post(&uri, r#"{"verdict":"ABNORMAL"}"#).await.0, StatusCode::OK);
    let (status, body) = h.post(&uri, r#"{"verdict":"NORMAL"}"#).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let err: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert!(err["error"].as_str().unwrap().contains(HIGH));
    let detail = h.json(&format!("/studies/{HIGH}")).await;
    assert_eq!(detail["status"], "CONFIRMED_ABNORMAL");
}

#[tokio::test]
async fn stale_version_conflicts() {
    let h = Harness::new();
    let uri = format!("/studies/{MID}/decision");
    let (status, _) = h.post(&uri, r#"{"verdict":"NORMAL","version":3}"#).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(h.json(&format!("/studies/{MID}")).await["status"], "PENDING");
    let (status, _) = h.post(&uri, r#"{"verdict":"NORMAL","version":0}"#).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn malformed_decisions_are_400() {
    let h = Harness::new();
    let uri = format!("/studies/{MID}/decision");
    for body in ["", "{", r#"{"verdict":"MAYBE"}"#, r#"{"note":"x"}"#, r#"{"verdict":"NORMAL","extra":1}"#] {
        let (status, _) = h.post(&uri, body).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
    }
    assert_eq!(h.json(&format!("/studies/{MID}")).await["status"], "PENDING");
}

#[tokio::test]
async fn reopen_returns_to_pending() {
    let h = Harness::new();
    let (status, _) = h.post(&format!("/studies/{LOW}/reopen"), "").await;
    assert_eq!(status, StatusCode::CONFLICT, "pending studies cannot be reopened");

    h.post(&format!("/studies/{LOW}/decision"), r#"{"verdict":"ABNORMAL"}"#).await;
    let (status, body) = h.post(&format!("/studies/{LOW}/reopen"), r#"{"note":"second look","version":1}"#).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
    let item: serde_json::Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(item["status"], "PENDING");
    assert_eq!(item["version"], 2);
    assert!(h.json(&format!("/studies/{LOW}")).await["decision"].is_null());

    let (status, _) = h.post(&format!("/studies/{LOW}/decision"), r#"{"verdict":"NORMAL"}"#).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(h.json(&format!("/studies/{LOW}")).await["status"], "CONFIRMED_NORMAL");
}

#[tokio::test]
async fn stats_count_agreement() {
    let h = Harness::new();
    let before = h.json("/stats").await;
    assert_eq!(before["total"], 3);
    assert_eq!(before["decided"], 0);
    assert!(before["agreement_rate"].is_null());

    h.post(&format!("/studies/{HIGH}/decision"), r#"{"verdict":"ABNORMAL"}"#).await;
    h.post(&format!("/studies/{MID}/decision"), r#"{"verdict":"NORMAL"}"#).await;
    h.post(&format!("/studies/{LOW}/decision"), r#"{"verdict":"NORMAL"}"#).await;
    let stats = h.json("/stats").await;
    assert_eq!(stats["decided"], 3);
    assert_eq!(stats["agreements"], 2);
    assert!((stats["agreement_rate"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert_eq!(stats["by_status"]["CONFIRMED_ABNORMAL"], 1);
    assert_eq!(stats["by_status"]["OVERRIDDEN_NORMAL"], 1);
    assert_eq!(stats["by_status"]["CONFIRMED_NORMAL"], 1);
    assert_eq!(stats["by_body_part"]["WRIST"]["CONFIRMED_NORMAL"], 1);
    assert_eq!(stats["scoring_failures"], 0);
}

#[tokio::test]
async fn audit_replay_matches_current_state() {
    let h = Harness::new();
    h.post(&format!("/studies/{HIGH}/decision"), r#"{"verdict":"NORMAL"}"#).await;
    h.post(&format!("/studies/{HIGH}/reopen"), "").await;
    h.post(&format!("/studies/{HIGH}/decision"), r#"{"verdict":"ABNORMAL"}"#).await;
    h.post(&format!("/studies/{LOW}/decision"), r#"{"verdict":"NORMAL"}"#).await;

    let log: Vec<radscan_service::AuditRecord> =
        serde_json::from_value(h.json("/audit").await).unwrap();
    assert_eq!(log.len(), 4);
    assert!(log.windows(2).all(|w| w[0].seq < w[1].seq));
    let replayed = replay_audit(&log);
    let current = h.state.store().statuses().unwrap();
    for (id, status) in &current {
        assert_eq!(replayed.get(id).copied().unwrap_or(Status::Pending), *status, "{id}");
    }

    let only: Vec<radscan_service::AuditRecord> =
        serde_json::from_value(h.json(&format!("/audit?study_id={LOW}")).await).unwrap();
    assert_eq!(only.len(), 1);
    assert_eq!(only[0].to_status, Status::ConfirmedNormal);
    assert_eq!(h.get("/audit?who=me").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn overlay_is_cached_byte_for_byte() {
    let h = Harness::new();
    let uri = format!("/studies/{HIGH}/images/1/overlay");
    let calls = h.model.predict_calls.load(Ordering::SeqCst);
    let (status, first) = h.get(&uri).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(&first[..8], b"\x89PNG\r\n\x1a\n");
    assert_eq!(h.model.predict_calls.load(Ordering::SeqCst), calls + 1);

    let (_, second) = h.get(&uri).await;
    assert_eq!(first, second);
    assert_eq!(h.model.predict_calls.load(Ordering::SeqCst), calls + 1, "second request hit the model");

    let decoded = image::load_from_memory(&first).unwrap().to_rgb8();
    assert_eq!(decoded.dimensions(), (24, 24));
    // hot cell (row 1, col 2) of a 4×4 map lands near (x 15, y 8) after upscaling
    let (x, y, _) = decoded
        .enumerate_pixels()
        .max_by_key(|(_, _, p)| p[0] as i32 - p[2] as i32)
        .unwrap();
    assert!((x as i32 - 15).abs() <= 1 && (y as i32 - 8).abs() <= 1, "hotspot at ({x}, {y})");
}

#[tokio::test]
async fn overlay_differs_per_image() {
    let h = Harness::new();
    let (_, a) = h.get(&format!("/studies/{HIGH}/images/0/overlay")).await;
    let (_, b) = h.get(&format!("/studies/{HIGH}/images/1/overlay")).await;
    assert_ne!(a, b);
}

#[tokio::test]
async fn overlay_without_head_is_422() {
    let mut model = common::three_study_model();
    model.with_head = false;
    let h = Harness::with_model(model);
    let (status, _) = h.get(&format!("/studies/{HIGH}/images/0/overlay")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn cors_allows_browser_clients() {
    let h = Harness::new();
    let request = axum::http::Request::get("/worklist")
        .header("origin", "http://localhost:5173")
        .body(axum::body::Body::empty())
        .unwrap();
    let response = tower::ServiceExt::oneshot(h.app.clone(), request).await.unwrap();
    assert!(response.headers().contains_key("access-control-allow-origin"));
}

#[test]
fn openapi_lists_every_route() {
    for path in [
        "/health:",
        "/worklist:",
        "/studies/{id}:",
        "/studies/{id}/images/{k}:",
        "/studies/{id}/images/{k}/overlay:",
        "/studies/{id}/decision:",
        "/studies/{id}/reopen:",
        "/stats:",
        "/audit:",
    ] {
        assert!(OPENAPI_YAML.contains(&format!("\n  {path}\n")), "{path}");
    }
    for status in Status::ALL {
        assert!(OPENAPI_YAML.contains(status.as_str()), "{}", status.as_str());
    }
}
