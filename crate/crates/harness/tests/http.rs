use std::path::Path;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use recompose::annotation::AnnotationStore;
use recompose::pipeline::{build_dataset, Manifest, PipelineConfig};
use recompose::preference::{fit_rewards, read_judgments_jsonl, BTTConfig};
use recompose_harness::server::{router, AppState};

fn fixture(dir: &Path) -> (Router, Arc<AnnotationStore>, Manifest) {
    let cfg = PipelineConfig {
        count: 3,
        seed: 11,
        frames: 4,
        keyframes: 3,
        width: 48,
        height: 48,
        focal: 48.0,
        variants_per_view: 2,
        out_dir: dir.join("data"),
        ..PipelineConfig::default()
    };
    let m = build_dataset(&cfg).unwrap();
    let store = Arc::new(AnnotationStore::open_for_manifest(dir.join("judgments.jsonl"), &m).unwrap());
    let ui = dir.join("ui");
    std::fs::create_dir_all(&ui).unwrap();
    std::fs::write(ui.join("index.html"), "<html>ui</html>").unwrap();
    let state = AppState {
        store: store.clone(),
        manifest: Arc::new(m.clone()),
        dataset: cfg.out_dir.clone(),
    };
    (router(state, Some(ui)), store, m)
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header("content-type", "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let ctype = res
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    (status, res.into_body().collect().await.unwrap().to_bytes().to_vec(), ctype)
}

fn judgment(pair: &str, dim: &str, outcome: &str, who: &str) -> Value {
    json!({ "pair_id": pair, "dimension": dim, "outcome": outcome, "annotator_id": who, "timestamp": 7 })
}

#[tokio::test]
async fn annotate_every_pair_on_every_dimension() {
    let d = tempfile::tempdir().unwrap();
    let (app, store, _) = fixture(d.path());
    assert_eq!(store.pairs().count(), 3);
    let mut stored = 0;
    for dim in ["VQ", "MQ", "CA"] {
        loop {
            let (s, body, _) = call(&app, "GET", &format!("/api/pairs/next?dimension={dim}&annotator=ann"), None).await;
            if s == StatusCode::NO_CONTENT {
                break;
            }
            assert_eq!(s, StatusCode::OK);
            let task: Value = serde_json::from_slice(&body).unwrap();
            assert_ne!(task["seq_a"], task["seq_b"]);
            let pair = task["pair_id"].as_str().unwrap();
            let (s, _, _) = call(&app, "POST", "/api/judgments", Some(judgment(pair, dim, "TIE", "ann"))).await;
            assert_eq!(s, StatusCode::CREATED);
            stored += 1;
        }
    }
    assert_eq!(stored, 9);
    let (_, body, _) = call(&app, "GET", "/api/progress", None).await;
    let p: Value = serde_json::from_slice(&body).unwrap();
    for dim in ["VQ", "MQ", "CA"] {
        assert_eq!(p["dimensions"][dim]["judged"], 3);
        assert_eq!(p["dimensions"][dim]["total"], 3);
        assert_eq!(p["dimensions"][dim]["histogram"]["TIE"], 3);
    }
    let text = std::fs::read_to_string(d.path().join("judgments.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 9);
}

#[tokio::test]
async fn submission_status_codes() {
    let d = tempfile::tempdir().unwrap();
    let (app, store, _) = fixture(d.path());
    let pair = store.pairs().next().unwrap().pair_id.clone();
    let ok = judgment(&pair, "CA", "A_WINS", "x");
    assert_eq!(call(&app, "POST", "/api/judgments", Some(ok.clone())).await.0, StatusCode::CREATED);
    assert_eq!(call(&app, "POST", "/api/judgments", Some(ok)).await.0, StatusCode::CONFLICT);
    for bad in [
        judgment(&pair, "CA", "A_LOSES", "y"),
        judgment(&pair, "ZZ", "TIE", "y"),
        judgment("nope", "CA", "TIE", "y"),
        json!({ "pair_id": pair }),
    ] {
        assert_eq!(call(&app, "POST", "/api/judgments", Some(bad)).await.0, StatusCode::BAD_REQUEST);
    }
    assert_eq!(store.judgments().len(), 1);

    let fix = judgment(&pair, "CA", "B_WINS", "x");
    assert_eq!(call(&app, "POST", "/api/judgments/supersede", Some(fix)).await.0, StatusCode::OK);
    let missing = judgment(&pair, "VQ", "B_WINS", "x");
    assert_eq!(call(&app, "POST", "/api/judgments/supersede", Some(missing)).await.0, StatusCode::NOT_FOUND);

    let (s, body, ctype) = call(&app, "GET", "/api/judgments/export", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(ctype, "application/x-ndjson");
    let js = read_judgments_jsonl(&body[..]).unwrap();
    assert_eq!(js.len(), 1);
    assert_eq!(js[0].outcome, recompose::Outcome::BWins);

    assert_eq!(call(&app, "GET", "/api/pairs/next?dimension=XX&annotator=a", None).await.0, StatusCode::BAD_REQUEST);
    assert_eq!(call(&app, "GET", "/api/pairs/next?dimension=VQ", None).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn frames_guidelines_and_static() {
    let d = tempfile::tempdir().unwrap();
    let (app, _, m) = fixture(d.path());
    let rec = &m.records[0];
    let (s, body, ctype) = call(&app, "GET", &format!("/api/frames/{}/0", rec.id), None).await;
    assert_eq!((s, ctype.as_str()), (StatusCode::OK, "image/png"));
    assert_eq!(&body[1..4], b"PNG");
    let (s, _, _) = call(&app, "GET", &format!("/api/frames/{}/{}", rec.id, rec.frame_count), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "GET", "/api/frames/ghost/0", None).await.0, StatusCode::NOT_FOUND);

    let (s, body, ctype) = call(&app, "GET", "/api/guidelines", None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(ctype.starts_with("text/plain"));
    let text = String::from_utf8(body).unwrap();
    assert!(text.contains("Layering Complexity") && text.contains("Compositional Reasonableness"));

    let (s, body, _) = call(&app, "GET", "/index.html", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body, b"<html>ui</html>");
}

#[tokio::test]
async fn concurrent_http_submissions_and_refit() {
    let d = tempfile::tempdir().unwrap();
    let (app, store, _) = fixture(d.path());
    let pairs: Vec<String> = store.pairs().map(|p| p.pair_id.clone()).collect();
    let mut tasks = Vec::new();
    for i in 0..120 {
        let app = app.clone();
        let pair = pairs[i % pairs.len()].clone();
        let dim = ["VQ", "MQ", "CA"][(i / 3) % 3];
        let outcome = ["A_WINS", "TIE", "B_WINS"][i % 3];
        let who = format!("a{}", (i / 9) % 2);
        tasks.push(tokio::spawn(async move {
            call(&app, "POST", "/api/judgments", Some(judgment(&pair, dim, outcome, &who))).await.0
        }));
    }
    let mut created = 0;
    for t in tasks {
        match t.await.unwrap() {
            StatusCode::CREATED => created += 1,
            StatusCode::CONFLICT => {}
            other => panic!("unexpected {other}"),
        }
    }
    let js = store.judgments();
    assert_eq!(js.len(), created);
    let keys: std::collections::BTreeSet<_> = js.iter().map(|j| (&j.pair_id, j.dimension, &j.annotator_id)).collect();
    assert_eq!(keys.len(), js.len());

    let (_, body, _) = call(&app, "GET", "/api/judgments/export", None).await;
    let exported = read_judgments_jsonl(&body[..]).unwrap();
    let cfg = BTTConfig::default();
    assert_eq!(fit_rewards(&exported, &cfg).unwrap(), fit_rewards(&js, &cfg).unwrap());
}
