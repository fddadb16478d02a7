use axum::body::Body;
use axum::http::{Request, StatusCode};
use biosearch_core::ingest::SourceDocument;
use biosearch_core::kg::{Entity, KnowledgeSynthesizer, Ontology};
use biosearch_core::{Engine, EngineConfig};
use biosearch_server::{load_state, router, AppState};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

fn docs() -> Vec<SourceDocument> {
    let doc = |id: &str, abs: &str| SourceDocument {
        doc_id: id.into(),
        title: format!("title {id}"),
        abstract_text: abs.into(),
        authors: vec!["Ada Lovelace".into()],
        year: Some(2020),
        ..Default::default()
    };
    vec![
        doc("d1", "Bats are the main reservoir of coronaviruses."),
        doc("d2", "There are about 1200 species of bats worldwide."),
        doc("d3", "SARS-CoV infects humans. A virus found in rhinolophus bats."),
    ]
}

fn engine() -> Engine {
    let ontology = Ontology::new(vec![
        Entity {
            canonical_name: "SARS-CoV".into(),
            aliases: vec!["sars-cov".into()],
            entity_type: "Virus".into(),
            entity_subtype: "Betacoronavirus".into(),
            description: String::new(),
            ontology_id: Some("NCBITaxon:694009".into()),
        },
        Entity {
            canonical_name: "humans".into(),
            aliases: vec!["human".into()],
            entity_type: "Mammal".into(),
            entity_subtype: "Primate".into(),
            description: String::new(),
            ontology_id: Some("NCBITaxon:9606".into()),
        },
    ])
    .unwrap();
    let synth = KnowledgeSynthesizer {
        ontology,
        ..Default::default()
    };
    Engine::build(&docs(), EngineConfig::default(), &synth, vec![]).unwrap()
}

async fn get(app: &axum::Router, uri: &str) -> (StatusCode, Value, axum::http::HeaderMap) {
    let resp = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let body = serde_json::from_slice(&bytes).unwrap_or(Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, body, headers)
}

#[tokio::test]
async fn health_reports_stats_and_fingerprint() {
    let engine = engine();
    let fp = engine.fingerprint().to_string();
    let app = router(AppState::new(engine));
    let (status, body, headers) = get(&app, "/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "ok");
    assert_eq!(body["stats"]["documents"], 3);
    assert_eq!(body["fingerprint"], fp.as_str());
    assert!(body["version"].is_string());
    assert_eq!(headers["x-index-fingerprint"], fp.as_str());
}

#[tokio::test]
async fn missing_index_answers_503() {
    let app = router(AppState::unavailable("no snapshot at /nowhere"));
    let (status, body, _) = get(&app, "/search?q=bats").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["code"], "no_index");
    assert!(body["message"].as_str().unwrap().contains("/nowhere"));
    let (status, body, _) = get(&app, "/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["status"], "no_index");
}

#[test]
fn startup_fails_without_index() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = EngineConfig::default();
    assert!(load_state(&cfg).is_err());
    cfg.index_dir = Some(dir.path().join("missing"));
    assert!(load_state(&cfg).is_err());
    engine().save(dir.path()).unwrap();
    cfg.index_dir = Some(dir.path().to_path_buf());
    assert!(load_state(&cfg).is_ok());
}

#[tokio::test]
async fn malformed_requests_get_field_errors() {
    let app = router(AppState::new(engine()));
    let (status, body, _) = get(&app, "/search").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "q");
    let (status, body, _) = get(&app, "/search?q=bats&r=zero").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "r");
    let (status, body, _) = get(&app, "/triplets?q=bats&facet.colour=red").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["field"], "facet.colour");
    let (status, body, _) = get(&app, "/search?q=%22%22").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "invalid_request");
}

#[tokio::test]
async fn search_spell_and_determinism() {
    let app = router(AppState::new(engine()));
    let (status, a, _) = get(&app, "/search?q=virus%20found%20in%20rhinolophus%20bats&r=2").await;
    assert_eq!(status, StatusCode::OK);
    let results = a["results"].as_array().unwrap();
    assert!(results.len() <= 2);
    assert_eq!(results[0]["unit_id"], "d3#0");
    assert!(results[0]["mechanism"].is_string());
    let (_, b, _) = get(&app, "/search?q=virus%20found%20in%20rhinolophus%20bats&r=2").await;
    assert_eq!(a, b);

    let (_, s, _) = get(&app, "/spell?q=rhinolophsu%20bats").await;
    assert_eq!(s["changed"], true);
    assert_eq!(s["corrected"], "rhinolophus bats");
}

#[tokio::test]
async fn triplets_with_facets() {
    let app = router(AppState::new(engine()));
    let (status, all, _) = get(&app, "/triplets?q=sars-cov%20humans").await;
    assert_eq!(status, StatusCode::OK);
    let n_all = all["results"].as_array().unwrap().len();
    assert!(n_all >= 1);
    assert_eq!(all["facet_counts"]["subject_type"]["Virus"], 1);

    let (_, narrowed, _) = get(&app, "/triplets?q=sars-cov%20humans&facet.subject_type=Virus&facet.object_type=Mammal").await;
    let results = narrowed["results"].as_array().unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0]["triplet"]["subject"], "SARS-CoV");
    assert!(results.len() <= n_all);
}

#[tokio::test]
async fn qa_and_graph_export() {
    let app = router(AppState::new(engine()));
    let (_, phrase, _) = get(&app, "/qa?q=virus%20found%20in%20rhinolophus%20bats").await;
    assert_eq!(phrase["kind"], "phrase_or_keywords");
    assert!(phrase["answer"].is_null());

    let q = "/qa?q=How%20many%20species%20exist%20of%20the%20mammals%20that%20are%20the%20main%20reservoir%20of%20coronaviruses%3F";
    let (status, qa, _) = get(&app, q).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(qa["kind"], "question");
    assert_eq!(qa["answer"]["text"], "1200");

    let (status, body, headers) = get(&app, "/export/graph").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(headers["content-type"], "application/x-ndjson");
    let text = body.as_str().unwrap();
    assert!(text.starts_with(r#"{"record":"header","format":"biosearch-graph","version":1}"#));
    assert!(text.contains("authored_by"));
}
