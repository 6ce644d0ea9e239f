use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use kfs_core::color::Palette;
use kfs_core::ingest::{build_index, IngestManifest};
use kfs_core::query::{Engine, QuerySpec, RankerTriple, SimilarQuery};
use kfs_core::{Aspect, Field, KeyframeId, KeyframeRecord, Snapshot};
use kfs_server::{router, AppState, Completion, Meta, SearchResponse, Service, VideoSummary};
use kfs_testkit::dataset;
use kfs_testkit::fixtures::CAR_BOX;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    _dir: tempfile::TempDir,
    app: Router,
    service: Arc<Service>,
}

fn fixture() -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let manifest = IngestManifest::load(&dataset::write(dir.path()).unwrap()).unwrap();
    let out = dir.path().join("index");
    build_index(&manifest, &out, false).unwrap();
    // one frame removed after ingest: its hit must be flagged thumbnail-less
    std::fs::remove_file(dir.path().join("frames/vb/3.png")).unwrap();
    let service = Arc::new(Service::open(&out).unwrap());
    let app = router(AppState::ready(Service::open(&out).unwrap()));
    Fixture { _dir: dir, app, service }
}

async fn call(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>, Option<String>) {
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let ctype = res.headers().get("content-type").map(|v| v.to_str().unwrap().to_string());
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, body, ctype)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    let (s, b, _) = call(app, Request::get(uri).body(Body::empty()).unwrap()).await;
    (s, b)
}

async fn post(app: &Router, body: Value) -> (StatusCode, Vec<u8>) {
    let req = Request::post("/v1/search")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (s, b, _) = call(app, req).await;
    (s, b)
}

fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> T {
    serde_json::from_slice(body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(body)))
}

#[tokio::test]
async fn search_matches_engine_and_flags_thumbnails() {
    let f = fixture();
    let body = json!({ "spec": { "canvas": [{ "label": "car", "box": CAR_BOX }], "tags": ["street"] } });
    let (status, bytes) = post(&f.app, body.clone()).await;
    assert_eq!(status, StatusCode::OK);
    let res: SearchResponse = parse(&bytes);
    let spec: QuerySpec = serde_json::from_value(body["spec"].clone()).unwrap();
    let page = f.service.engine().execute(&spec, &RankerTriple::default(), 1000).unwrap();
    assert_eq!(res.total, 5);
    assert_eq!(res.hits.iter().map(|h| &h.id).collect::<Vec<_>>(), page.ids().collect::<Vec<_>>());
    assert_eq!(res.triple, Some(RankerTriple::default()));

    // identical requests, identical bodies
    assert_eq!(post(&f.app, body).await.1, bytes);

    let (_, bytes) = post(&f.app, json!({ "spec": { "tags": ["park"] }, "group_by_video": true })).await;
    let res: SearchResponse = parse(&bytes);
    for hit in &res.hits {
        assert!(f.service.engine().snapshot().ordinal(&hit.id).is_some());
        let missing = hit.id == KeyframeId::new("vb", 3);
        assert_eq!(hit.thumbnail.is_none(), missing, "{}", hit.id);
        if let Some(url) = &hit.thumbnail {
            let (status, _, ctype) = call(&f.app, Request::get(url.as_str()).body(Body::empty()).unwrap()).await;
            assert_eq!(status, StatusCode::OK);
            assert_eq!(ctype.as_deref(), Some("image/png"));
        }
    }
    let groups = res.groups.unwrap();
    assert_eq!(groups.len(), 1);
    assert_eq!(groups[0].hits, res.hits);
}

#[tokio::test]
async fn search_with_triple_and_page_size() {
    let f = fixture();
    let (status, bytes) =
        post(&f.app, json!({ "spec": { "tags": ["street", "park"] }, "triple": "TF-TF-TF", "page_size": 3 })).await;
    assert_eq!(status, StatusCode::OK);
    let res: SearchResponse = parse(&bytes);
    assert_eq!(res.total, 10);
    assert_eq!(res.hits.len(), 3);
    // street has two repetitions, so va frames lead
    assert!(res.hits.iter().all(|h| h.id.video == "va"));
    assert_eq!(res.hits[0].score, 2.0);
}

#[tokio::test]
async fn similarity_spec_routes_to_features() {
    let f = fixture();
    let id = KeyframeId::new("va", 2);
    let (status, bytes) = post(&f.app, json!({ "spec": { "example_id": "va:2" }, "page_size": 20 })).await;
    assert_eq!(status, StatusCode::OK);
    let res: SearchResponse = parse(&bytes);
    let direct = f.service.engine().similar(&SimilarQuery::Id(id), 20).unwrap();
    assert_eq!(res.hits.iter().map(|h| &h.id).collect::<Vec<_>>(), direct.ids().collect::<Vec<_>>());
    assert_eq!(res.triple, None);
    assert_eq!(res.total, 8);

    let (status, bytes) = get(&f.app, "/v1/similar?id=va:2&k=20").await;
    assert_eq!(status, StatusCode::OK);
    let by_get: SearchResponse = parse(&bytes);
    assert_eq!(by_get.hits, res.hits);
}

#[tokio::test]
async fn error_statuses() {
    let f = fixture();
    let cases = [
        json!({ "spec": { "tags": [] } }),
        json!({ "spec": { "version": 9, "tags": ["x"] } }),
        json!({ "spec": { "tags": ["x"], "bogus": 1 } }),
        json!({ "spec": { "tags": ["x"] }, "triple": "TF-TF" }),
        json!({ "spec": { "tags": ["x"] }, "page_size": 0 }),
        json!({ "spec": { "example_id": "va:1", "tags": ["x"] } }),
    ];
    for body in cases {
        let (status, bytes) = post(&f.app, body.clone()).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body}");
        let v: Value = parse(&bytes);
        assert!(v["error"].is_string());
    }
    let raw = Request::post("/v1/search").body(Body::from("{not json")).unwrap();
    assert_eq!(call(&f.app, raw).await.0, StatusCode::BAD_REQUEST);

    assert_eq!(post(&f.app, json!({ "spec": { "example_id": "zz:1" } })).await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/v1/similar?id=zz:1").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/v1/similar?id=nonsense").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(get(&f.app, "/v1/keyframes/zz:1/thumbnail").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/v1/keyframes/vb:3/thumbnail").await.0, StatusCode::NOT_FOUND);
    assert_eq!(get(&f.app, "/v1/videos/zz/summary").await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn not_ready_is_503() {
    let app = router(AppState::loading());
    for uri in ["/v1/meta", "/v1/autocomplete?prefix=mu", "/v1/similar?id=a:1", "/v1/videos/a/summary", "/v1/keyframes/a:1/thumbnail"] {
        assert_eq!(get(&app, uri).await.0, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
    }
    assert_eq!(post(&app, json!({ "spec": { "tags": ["x"] } })).await.0, StatusCode::SERVICE_UNAVAILABLE);
}

fn tag_engine() -> Engine {
    let tags = ["music music", "music", "musical", "museum", "music", "mud", "beach"];
    let records: Vec<KeyframeRecord> = tags
        .iter()
        .enumerate()
        .map(|(i, t)| KeyframeRecord {
            scene_tags: t.to_string(),
            ..KeyframeRecord::empty(KeyframeId::new("t", i as u32), Aspect::Ar16x9)
        })
        .collect();
    Engine::new(Arc::new(Snapshot::from_records(&records).unwrap()), Arc::new(Palette::default()))
}

#[tokio::test]
async fn autocomplete_delegates_to_wildcard_expansion() {
    let engine = tag_engine();
    let want = engine.snapshot().expand_wildcard(Field::SceneTags, "mu");
    let app = router(AppState::ready(Service::new(engine, None)));
    let (status, bytes) = get(&app, "/v1/autocomplete?prefix=Mu").await;
    assert_eq!(status, StatusCode::OK);
    let got: Vec<Completion> = parse(&bytes);
    assert_eq!(got.iter().map(|c| (c.term.clone(), c.df)).collect::<Vec<_>>(), want);
    assert_eq!(got[0].display, "music (3)");
    assert_eq!(got.iter().map(|c| c.term.as_str()).collect::<Vec<_>>(), ["music", "mud", "museum", "musical"]);

    let got: Vec<Completion> = parse(&get(&app, "/v1/autocomplete?prefix=mu&limit=2").await.1);
    assert_eq!(got.len(), 2);
    let got: Vec<Completion> = parse(&get(&app, "/v1/autocomplete?prefix=m").await.1);
    assert!(got.is_empty());
}

#[tokio::test]
async fn meta_and_summary() {
    let f = fixture();
    let (status, bytes) = get(&f.app, "/v1/meta").await;
    assert_eq!(status, StatusCode::OK);
    let meta: Meta = parse(&bytes);
    assert_eq!(meta.grid_size, 7);
    assert_eq!(meta.keyframes, 10);
    assert_eq!(meta.palette.len(), Palette::default().entries().len());
    assert!(meta.palette.iter().any(|c| c.name == "red"));
    let objects: Vec<(&str, u32)> = meta.objects.iter().map(|o| (o.label.as_str(), o.df)).collect();
    assert_eq!(objects, [("car", 5), ("dog", 5)]);
    assert_eq!(meta.shortlist, ["car", "dog"]);
    assert!(meta.similarity);

    let (status, bytes) = get(&f.app, "/v1/videos/vb/summary").await;
    assert_eq!(status, StatusCode::OK);
    let s: VideoSummary = parse(&bytes);
    assert_eq!(s.keyframes, (0..5).map(|i| KeyframeId::new("vb", i)).collect::<Vec<_>>());
}
