use std::path::Path;
use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use profiling_cli::service::{router, AppState, ErrorBody, ProfileResponse, SchemaResponse, ShiftResponse};
use profiling_core::checkpoint::checkpoint_hash;
use profiling_core::store::{ingest, DEFAULT_VOCABULARY_CAP};
use profiling_core::synthetic::{DeterministicConfig, DeterministicCorpus};
use profiling_core::{ae_train, AeConfig, AnyModel};
use serde::de::DeserializeOwned;
use tower::ServiceExt;

fn small_ae(dir: &Path) -> std::path::PathBuf {
    let corpus = DeterministicCorpus::generate(&DeterministicConfig {
        rows: 300,
        ..DeterministicConfig::default()
    })
    .unwrap();
    let (table, _) = ingest(corpus.records, DEFAULT_VOCABULARY_CAP, 3).unwrap();
    let config = AeConfig {
        hidden_units: 16,
        embedding_size: 4,
        max_epochs: 3,
        ..AeConfig::default()
    };
    let (model, _) = ae_train(&table, &config).unwrap();
    let path = dir.join("ae.ckpt");
    AnyModel::from(model).save(&path).unwrap();
    path
}

fn app(path: &Path) -> Router {
    router(Arc::new(AppState::load(path, 100).unwrap()), None)
}

async fn call(app: &Router, method: Method, uri: &str, body: &str) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec())
}

fn decode<T: DeserializeOwned>(bytes: &[u8]) -> T {
    serde_json::from_slice(bytes).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(bytes)))
}

#[tokio::test]
async fn empty_profile_covers_every_facet_and_sums_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&small_ae(dir.path()));
    let (status, body) = call(&app, Method::POST, "/profile", "{}").await;
    assert_eq!(status, StatusCode::OK);
    let resp: ProfileResponse = decode(&body);
    assert_eq!(resp.model.kind, "AE");
    let names: Vec<&str> = resp.expectations.keys().map(String::as_str).collect();
    assert_eq!(names, ["A", "B", "N0", "N1", "N2"]);
    for e in resp.expectations.values() {
        let total: f64 = e.values.iter().map(|v| v.probability).sum::<f64>() + e.other;
        assert!((total - 1.0).abs() < 1e-6, "{total}");
    }
}

#[tokio::test]
async fn top_n_limits_listed_values_and_residual_closes_mass() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&small_ae(dir.path()));
    let (status, body) = call(&app, Method::POST, "/profile", r#"{"known":{"A":"a1"},"top_n":2}"#).await;
    assert_eq!(status, StatusCode::OK);
    let resp: ProfileResponse = decode(&body);
    assert!(!resp.expectations.contains_key("A"));
    assert_eq!(resp.fixed["A"], "a1");
    for e in resp.expectations.values() {
        assert_eq!(e.values.len(), 2);
        assert!(e.values[0].probability >= e.values[1].probability);
        let total: f64 = e.values.iter().map(|v| v.probability).sum::<f64>() + e.other;
        assert!((total - 1.0).abs() < 1e-6);
    }
}

#[tokio::test]
async fn concurrent_identical_requests_agree() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&small_ae(dir.path()));
    let body = r#"{"known":{"A":"a2","N0":"n0_1"}}"#;
    let handles: Vec<_> = (0..64)
        .map(|_| {
            let app = app.clone();
            tokio::spawn(async move { call(&app, Method::POST, "/profile", body).await })
        })
        .collect();
    let mut bodies = Vec::new();
    for h in handles {
        let (status, bytes) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        bodies.push(bytes);
    }
    assert!(bodies.windows(2).all(|w| w[0] == w[1]));
}

#[tokio::test]
async fn unknown_facet_is_422_with_suggestions() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&small_ae(dir.path()));
    let (status, body) = call(&app, Method::POST, "/profile", r#"{"known":{"N9":"x"}}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorBody = decode(&body);
    assert_eq!(err.facet.as_deref(), Some("N9"));
    assert!(!err.suggestions.is_empty() && err.suggestions.len() <= 5);
    assert!(err.suggestions[0].starts_with('N'), "{:?}", err.suggestions);
}

#[tokio::test]
async fn unknown_value_is_422_with_suggestions() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&small_ae(dir.path()));
    let (status, body) = call(&app, Method::POST, "/profile", r#"{"known":{"A":"a99"}}"#).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let err: ErrorBody = decode(&body);
    assert_eq!(err.facet.as_deref(), Some("A"));
    assert!(!err.suggestions.is_empty());
}

#[tokio::test]
async fn malformed_body_is_400_with_field_path() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&small_ae(dir.path()));
    let (status, body) = call(&app, Method::POST, "/profile", r#"{"known":{"A":3}}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let err: ErrorBody = decode(&body);
    assert_eq!(err.path.as_deref(), Some("known.A"));

    let (status, body) = call(&app, Method::POST, "/profile", r#"{"top_n":"ten"}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(decode::<ErrorBody>(&body).path.as_deref(), Some("top_n"));

    let (status, _) = call(&app, Method::POST, "/profile", "{not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (status, body) = call(&app, Method::POST, "/shift", r#"{"bogus":{}}"#).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(decode::<ErrorBody>(&body).message.contains("bogus"));
}

#[tokio::test]
async fn shift_with_nothing_added_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&small_ae(dir.path()));
    let (status, body) = call(&app, Method::POST, "/shift", r#"{"base":{"N1":"n1_0"},"added":{}}"#).await;
    assert_eq!(status, StatusCode::OK);
    let resp: ShiftResponse = decode(&body);
    assert_eq!(resp.facets.len(), 4);
    for f in resp.facets.values() {
        assert!(f.divergence.abs() < 1e-12);
        assert!(!f.changed);
        assert_eq!(f.top_before, f.top_after);
    }
}

#[tokio::test]
async fn shift_reports_changes_for_added_evidence() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&small_ae(dir.path()));
    let (status, body) = call(&app, Method::POST, "/shift", r#"{"base":{},"added":{"A":"a0"}}"#).await;
    assert_eq!(status, StatusCode::OK);
    let resp: ShiftResponse = decode(&body);
    assert!(!resp.facets.contains_key("A"));
    assert!(resp.facets.values().all(|f| (0.0..=1.0).contains(&f.divergence)));
    assert!(resp.facets["B"].divergence > 0.0);
}

#[tokio::test]
async fn schema_and_health() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_ae(dir.path());
    let app = app(&path);
    let (status, body) = call(&app, Method::GET, "/schema", "").await;
    assert_eq!(status, StatusCode::OK);
    let resp: SchemaResponse = decode(&body);
    assert_eq!(resp.facets.len(), 5);
    assert_eq!(resp.facets[0].name, "A");
    assert_eq!(resp.facets[0].values.len(), 8);
    assert_eq!(resp.model.checkpoint_hash, checkpoint_hash(&std::fs::read(&path).unwrap()));

    let (status, body) = call(&app, Method::GET, "/health", "").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(decode::<serde_json::Value>(&body)["status"], "ok");
}

#[tokio::test]
async fn serving_leaves_the_checkpoint_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let path = small_ae(dir.path());
    let before = checkpoint_hash(&std::fs::read(&path).unwrap());
    let app = app(&path);
    for body in [r#"{}"#, r#"{"known":{"A":"a1"}}"#] {
        assert_eq!(call(&app, Method::POST, "/profile", body).await.0, StatusCode::OK);
    }
    assert_eq!(call(&app, Method::POST, "/shift", r#"{"added":{"B":"b1"}}"#).await.0, StatusCode::OK);
    assert_eq!(before, checkpoint_hash(&std::fs::read(&path).unwrap()));
}

#[tokio::test]
async fn cors_preflight_allows_configured_origin() {
    let dir = tempfile::tempdir().unwrap();
    let state = Arc::new(AppState::load(&small_ae(dir.path()), 100).unwrap());
    let app = router(state, Some("http://localhost:5173".parse().unwrap()));
    let req = Request::builder()
        .method(Method::OPTIONS)
        .uri("/profile")
        .header(header::ORIGIN, "http://localhost:5173")
        .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
        .body(Body::empty())
        .unwrap();
    let resp = app.oneshot(req).await.unwrap();
    assert_eq!(
        resp.headers().get(header::ACCESS_CONTROL_ALLOW_ORIGIN).unwrap(),
        "http://localhost:5173"
    );
}
