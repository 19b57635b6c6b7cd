#![allow(dead_code)]

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use ndarray::Array3;
use radscan_core::dataset::{scan_dataset, BodyPart, ImageTensor, Label, Manifest, Split};
use radscan_core::modelzoo::{Classifier, Prediction};
use radscan_core::synthetic::{write_fixture, FixtureStudy};
use radscan_service::{router, score_manifest, AppState, ServiceConfig, Store};
use tower::ServiceExt;

/// Scores images by a substring of their path; emits a 2×4×4 feature map
/// with a single hot cell at row 1, column 2 in channel 0.
pub struct StubModel {
    pub scores: Vec<(String, f32)>,
    pub with_head: bool,
    pub predict_calls: AtomicUsize,
}

impl StubModel {
    pub fn new(scores: &[(&str, f32)]) -> Self {
        StubModel {
            scores: scores.iter().map(|(k, p)| (k.to_string(), *p)).collect(),
            with_head: true,
            predict_calls: AtomicUsize::new(0),
        }
    }

    fn score(&self, path: &Path) -> f32 {
        let s = path.to_string_lossy();
        self.scores
            .iter()
            .find(|(k, _)| s.contains(k.as_str()))
            .map(|(_, p)| *p)
            .unwrap_or(0.5)
    }
}

impl Classifier for StubModel {
    fn name(&self) -> String {
        "stub".into()
    }

    fn predict(&self, batch: &[ImageTensor], capture_features: bool) -> radscan_core::Result<Prediction> {
        self.predict_calls.fetch_add(1, Ordering::SeqCst);
        let probabilities = batch.iter().map(|t| self.score(&t.source_path)).collect();
        let features = capture_features.then(|| {
            batch
                .iter()
                .map(|_| {
                    let mut f = Array3::<f32>::zeros((2, 4, 4));
                    f[[0, 1, 2]] = 3.0;
                    f[[1, 3, 0]] = 5.0;
                    f
                })
                .collect()
        });
        Ok(Prediction { probabilities, features })
    }

    fn head_weights(&self) -> Option<Vec<f32>> {
        self.with_head.then(|| vec![1.0, 0.0])
    }

    fn fingerprint(&self) -> String {
        "stub-v1".into()
    }
}

pub const HIGH: &str = "XR_WRIST-patient00001-study1_positive";
pub const MID: &str = "XR_ELBOW-patient00002-study1_positive";
pub const LOW: &str = "XR_WRIST-patient00003-study1_negative";

/// Three studies scored 0.9 (abnormal call), 0.5 (abnormal call at ≥ 0.5)
/// and 0.2 (normal call).
pub fn three_studies(root: &Path) -> Manifest {
    let studies = [
        FixtureStudy::new(BodyPart::Wrist, 1, 1, Label::Abnormal, 2),
        FixtureStudy::new(BodyPart::Elbow, 2, 1, Label::Abnormal, 1),
        FixtureStudy::new(BodyPart::Wrist, 3, 1, Label::Normal, 1),
    ];
    write_fixture(root, Split::Valid, &studies, 24, 7).unwrap();
    scan_dataset(root, Split::Valid).unwrap()
}

pub fn three_study_model() -> StubModel {
    StubModel::new(&[("patient00001", 0.9), ("patient00002", 0.5), ("patient00003", 0.2)])
}

pub struct Harness {
    pub app: Router,
    pub state: AppState,
    pub model: Arc<StubModel>,
    pub _dir: tempfile::TempDir,
}

impl Harness {
    pub fn with_model(model: StubModel) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let manifest = three_studies(&dir.path().join("data"));
        let store = Arc::new(Store::in_memory().unwrap());
        let config = ServiceConfig::new(dir.path().join("cache"));
        let summary = score_manifest(&store, &model, &manifest, &config.preprocess, 0.5).unwrap();
        assert_eq!(summary.scored, 3);
        let model = Arc::new(model);
        let state = AppState::new(store, model.clone(), config);
        Harness {
            app: router(state.clone()),
            state,
            model,
            _dir: dir,
        }
    }

    pub fn new() -> Self {
        Self::with_model(three_study_model())
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Bytes) {
        self.send(Request::get(uri).body(Body::empty()).unwrap()).await
    }

    pub async fn post(&self, uri: &str, body: &str) -> (StatusCode, Bytes) {
        let request = Request::post(uri)
            .header("content-type", "application/json")
            .header("x-reviewer", "dr-test")
            .body(Body::from(body.to_string()))
            .unwrap();
        self.send(request).await
    }

    pub async fn send(&self, request: Request<Body>) -> (StatusCode, Bytes) {
        let response = self.app.clone().oneshot(request).await.unwrap();
        let status = response.status();
        let bytes = response.into_body().collect().await.unwrap().to_bytes();
        (status, bytes)
    }

    pub async fn json(&self, uri: &str) -> serde_json::Value {
        let (status, body) = self.get(uri).await;
        assert_eq!(status, StatusCode::OK, "{uri}: {}", String::from_utf8_lossy(&body));
        serde_json::from_slice(&body).unwrap()
    }
}

pub fn ids(page: &serde_json::Value) -> Vec<String> {
    page["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["study_id"].as_str().unwrap().to_string())
        .collect()
}
