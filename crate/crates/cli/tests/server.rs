mod common;

use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use sphx_cli::server::{router, AppState, ServerConfig, PROVENANCE_HEADER};
use sphx_core::embedding::superpixel_means;
use sphx_core::pipeline::prepare_image;
use sphx_core::rle::{decode_runs, runs_from_bytes};
use sphx_core::{HierarchyFile, HighDimImage, PipelineConfig};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    provenance: Option<String>,
    content_type: Option<String>,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }

    fn f32s(&self) -> Vec<f32> {
        self.body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect()
    }
}

async fn send(app: &Router, req: Request<Body>) -> Reply {
    let res = app.clone().oneshot(req).await.unwrap();
    let header = |name: &str| res.headers().get(name).map(|v| v.to_str().unwrap().to_string());
    let provenance = header(PROVENANCE_HEADER);
    let content_type = header("content-type");
    let status = res.status();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply {
        status,
        provenance,
        content_type,
        body,
    }
}

async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post(app: &Router, uri: &str, body: Value) -> Reply {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(app, req).await
}

/// Polls a job until it leaves the queue; returns its final status body.
async fn wait_for(app: &Router, job_id: u64) -> Value {
    for _ in 0..2000 {
        let status = get(app, &format!("/api/job/{job_id}")).await.json();
        match status["status"].as_str().unwrap() {
            "queued" | "running" => tokio::time::sleep(Duration::from_millis(10)).await,
            _ => return status,
        }
    }
    panic!("job {job_id} did not finish");
}

fn hash(path: &Path) -> String {
    hex::encode(Sha256::digest(std::fs::read(path).unwrap()))
}

struct Fixture {
    _dir: tempfile::TempDir,
    run: std::path::PathBuf,
    file: HierarchyFile,
}

/// A 16x12 run with embeddings on every level but `skip`.
fn fixture(skip: Option<usize>) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let run = common::build_run(dir.path(), 16, 12, &[]);
    let file = HierarchyFile::read(&run.join("hierarchy.sphx")).unwrap();
    assert!(file.levels.len() >= 3, "fixture needs three levels");
    for level in 0..file.levels.len() {
        if Some(level) != skip {
            common::embed(&run, &["--level", &level.to_string()]);
        }
    }
    Fixture { _dir: dir, run, file }
}

fn serve(fx: &Fixture, config: ServerConfig) -> (Arc<AppState>, Router) {
    let state = AppState::load(&fx.run, config);
    (state.clone(), router(state))
}

fn quick() -> ServerConfig {
    ServerConfig {
        iterations: 100,
        ..ServerConfig::default()
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn metadata_and_levels() {
    let fx = fixture(None);
    let (_, app) = serve(&fx, quick());
    let provenance = hash(&fx.run.join("hierarchy.sphx"));
    let meta = get(&app, "/api/meta").await;
    assert_eq!(meta.status, StatusCode::OK);
    assert_eq!(meta.provenance.as_deref(), Some(provenance.as_str()));
    let m = meta.json();
    assert_eq!(
        (m["width"].as_u64(), m["height"].as_u64(), m["channels"].as_u64()),
        (Some(16), Some(12), Some(5))
    );
    assert_eq!(m["provenance"], provenance);
    assert_eq!(m["levels"].as_u64().unwrap() as usize, fx.file.levels.len());

    let levels = get(&app, "/api/levels").await;
    assert_eq!(levels.provenance.as_deref(), Some(provenance.as_str()));
    let list = levels.json();
    let list = list.as_array().unwrap();
    assert_eq!(list.len(), fx.file.levels.len());
    for (entry, level) in list.iter().zip(&fx.file.levels) {
        assert_eq!(entry["level"].as_u64().unwrap() as usize, level.level);
        assert_eq!(
            entry["superpixels"].as_u64().unwrap() as usize,
            level.superpixel_count()
        );
        assert_eq!(entry["has_embedding"], true);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn level_payloads() {
    let fx = fixture(None);
    let (_, app) = serve(&fx, quick());
    for level in &fx.file.levels {
        let l = level.level;
        let labels = get(&app, &format!("/api/level/{l}/labels")).await;
        assert_eq!(labels.status, StatusCode::OK);
        assert_eq!(labels.content_type.as_deref(), Some("application/octet-stream"));
        let (runs, used) = runs_from_bytes(&labels.body).unwrap();
        assert_eq!(used, labels.body.len());
        assert_eq!(decode_runs(&runs), level.labels);

        let emb = get(&app, &format!("/api/level/{l}/embedding")).await;
        assert_eq!(emb.status, StatusCode::OK);
        assert_eq!(
            emb.body,
            std::fs::read(fx.run.join(format!("embed/level_{l}.f32"))).unwrap()
        );
        assert_eq!(emb.f32s().len(), 2 * level.superpixel_count());

        let png = get(&app, &format!("/api/level/{l}/colorized")).await;
        assert_eq!(png.status, StatusCode::OK);
        assert_eq!(png.content_type.as_deref(), Some("image/png"));
        assert_eq!(&png.body[..8], b"\x89PNG\r\n\x1a\n");
    }
    let custom = get(
        &app,
        "/api/level/1/colorized?colormap=%23000000,%23ff0000,%2300ff00,%23ffffff",
    )
    .await;
    assert_eq!(custom.status, StatusCode::OK);
    let bad = get(&app, "/api/level/1/colorized?colormap=red").await;
    assert_eq!(bad.status, StatusCode::BAD_REQUEST);
    let n = fx.file.levels.len();
    assert_eq!(
        get(&app, &format!("/api/level/{n}/labels")).await.status,
        StatusCode::NOT_FOUND
    );
    assert_eq!(get(&app, "/api/level/x/labels").await.status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn channel_means_match_direct_computation() {
    let fx = fixture(None);
    let (_, app) = serve(&fx, quick());
    let config = PipelineConfig::load(&fx.run.join("config.txt")).unwrap();
    let img = prepare_image(&HighDimImage::load(&config.input).unwrap(), &config).unwrap();
    let level = &fx.file.levels[1];
    let means = superpixel_means(&img, &level.labels, level.superpixel_count()).unwrap();
    for c in [0usize, 4] {
        let reply = get(&app, &format!("/api/channel/{c}/means?level=1")).await;
        assert_eq!(reply.status, StatusCode::OK);
        let got = reply.f32s();
        assert_eq!(got.len(), level.superpixel_count());
        for (r, v) in got.iter().enumerate() {
            assert_eq!(*v, means[r * 5 + c] as f32);
        }
    }
    assert_eq!(get(&app, "/api/channel/0/means").await.f32s().len(), 16 * 12);
    assert_eq!(
        get(&app, "/api/channel/5/means?level=1").await.status,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn strict_refinement_returns_children() {
    let fx = fixture(None);
    let (_, app) = serve(&fx, quick());
    let parent = fx.file.levels[1].parent.as_ref().unwrap();
    let children: Vec<u64> = (0..parent.len() as u64).filter(|&c| parent[c as usize] <= 1).collect();
    let reply = post(
        &app,
        "/api/refine",
        json!({"level": 2, "ids": [1, 0], "gamma": 1.0, "seed": 3}),
    )
    .await;
    assert_eq!(reply.status, StatusCode::OK);
    let body = reply.json();
    let job = wait_for(&app, body["job_id"].as_u64().unwrap()).await;
    assert_eq!(job["status"], "done");
    assert_eq!(job["progress"], 1.0);
    let reference = job["result_ref"].as_str().unwrap().to_string();
    assert_eq!(body["result_ref"], reference);

    let subset = get(&app, &format!("/api/refined/{reference}/subset")).await;
    assert!(subset.provenance.is_some());
    let s = subset.json();
    let ids: Vec<u64> = s["subset"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(ids, children);
    assert_eq!(s["children"].as_u64().unwrap() as usize, children.len());
    assert_eq!(s["level"], 1);
    assert_eq!(s["selected"], json!([0, 1]));
    let emb = get(&app, &format!("/api/refined/{reference}/embedding")).await;
    assert_eq!(emb.status, StatusCode::OK);
    assert_eq!(emb.f32s().len(), 2 * children.len());
    assert!(emb.f32s().iter().all(|v| v.is_finite()));
}

#[tokio::test(flavor = "multi_thread")]
async fn identical_requests_give_identical_results() {
    let fx = fixture(None);
    let request = json!({"level": 1, "ids": [0, 2], "gamma": 0.01, "seed": 7});
    let mut answers = Vec::new();
    for _ in 0..2 {
        let (_, app) = serve(&fx, quick());
        let body = post(&app, "/api/refine", request.clone()).await.json();
        let job = wait_for(&app, body["job_id"].as_u64().unwrap()).await;
        let reference = job["result_ref"].as_str().unwrap().to_string();
        let again = post(&app, "/api/refine", request.clone()).await.json();
        assert_ne!(again["job_id"], body["job_id"]);
        assert_eq!(
            wait_for(&app, again["job_id"].as_u64().unwrap()).await["result_ref"],
            reference
        );
        let subset = get(&app, &format!("/api/refined/{reference}/subset")).await.json();
        let emb = get(&app, &format!("/api/refined/{reference}/embedding")).await.body;
        answers.push((reference, subset["subset"].clone(), emb));
    }
    assert_eq!(answers[0], answers[1]);
    let (_, app) = serve(&fx, quick());
    let other = post(
        &app,
        "/api/refine",
        json!({"level": 1, "ids": [0, 2], "gamma": 0.01, "seed": 8}),
    )
    .await
    .json();
    assert_ne!(other["result_ref"], json!(answers[0].0));
}

#[tokio::test(flavor = "multi_thread")]
async fn invalid_refinements_are_rejected() {
    let fx = fixture(None);
    let (_, app) = serve(&fx, quick());
    let m = fx.file.levels[1].superpixel_count();
    for body in [
        json!({"level": 1, "ids": [m], "gamma": 0.1}),
        json!({"level": 1, "ids": [], "gamma": 0.1}),
        json!({"level": 0, "ids": [0], "gamma": 0.1}),
        json!({"level": 1, "ids": [0], "gamma": 2.0}),
        json!({"level": 1}),
    ] {
        let reply = post(&app, "/api/refine", body.clone()).await;
        assert_eq!(reply.status, StatusCode::BAD_REQUEST, "{body}");
        assert!(reply.json()["error"].is_string());
    }
    let req = Request::post("/api/refine").body(Body::from("{not json")).unwrap();
    assert_eq!(send(&app, req).await.status, StatusCode::BAD_REQUEST);
    assert_eq!(get(&app, "/api/job/999").await.status, StatusCode::NOT_FOUND);
    assert_eq!(
        get(&app, "/api/refined/feedface/subset").await.status,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        get(&app, "/api/refined/feedface/embedding").await.status,
        StatusCode::NOT_FOUND
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn oversized_refinements_are_refused() {
    let fx = fixture(None);
    let (_, app) = serve(
        &fx,
        ServerConfig {
            max_points: 3,
            ..quick()
        },
    );
    let all: Vec<usize> = (0..fx.file.levels[1].superpixel_count()).collect();
    let reply = post(&app, "/api/refine", json!({"level": 1, "ids": all, "gamma": null})).await;
    assert_eq!(reply.status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test(flavor = "multi_thread")]
async fn missing_artifacts_answer_503() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(AppState::load(dir.path(), quick()));
    for uri in [
        "/api/meta",
        "/api/levels",
        "/api/level/0/labels",
        "/api/channel/0/means",
    ] {
        let reply = get(&app, uri).await;
        assert_eq!(reply.status, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert!(reply.json()["error"].as_str().unwrap().contains("config.txt"));
    }
    let refine = post(&app, "/api/refine", json!({"level": 1, "ids": [0], "gamma": 0.1})).await;
    assert_eq!(refine.status, StatusCode::SERVICE_UNAVAILABLE);

    let fx = fixture(Some(1));
    let (_, app) = serve(&fx, quick());
    let levels = get(&app, "/api/levels").await.json();
    assert_eq!(levels[1]["has_embedding"], false);
    for uri in ["/api/level/1/embedding", "/api/level/1/colorized"] {
        let reply = get(&app, uri).await;
        assert_eq!(reply.status, StatusCode::SERVICE_UNAVAILABLE, "{uri}");
        assert!(reply.json()["error"].as_str().unwrap().contains("sphx embed"));
    }
    assert_eq!(get(&app, "/api/level/0/embedding").await.status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread")]
async fn job_concurrency_is_capped() {
    let fx = fixture(None);
    for cap in [1usize, 2] {
        let (state, app) = serve(
            &fx,
            ServerConfig {
                max_jobs: cap,
                iterations: 300,
                ..ServerConfig::default()
            },
        );
        let mut jobs = Vec::new();
        for seed in 0..5 {
            let body = post(
                &app,
                "/api/refine",
                json!({"level": 1, "ids": [0, 1, 2], "gamma": 0.0, "seed": seed}),
            )
            .await;
            assert_eq!(body.status, StatusCode::OK);
            jobs.push(body.json()["job_id"].as_u64().unwrap());
        }
        let mut ids = jobs.clone();
        ids.dedup();
        assert_eq!(ids.len(), jobs.len());
        for id in jobs {
            assert_eq!(wait_for(&app, id).await["status"], "done");
        }
        assert!(
            state.peak_running() >= 1 && state.peak_running() <= cap,
            "peak {}",
            state.peak_running()
        );
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn serving_leaves_artifacts_untouched() {
    let fx = fixture(None);
    let files = [
        "config.txt",
        "graph.sparse",
        "walks.sparse",
        "hierarchy.sphx",
        "embed/level_1.csv",
    ];
    let before: Vec<String> = files.iter().map(|f| hash(&fx.run.join(f))).collect();
    let (_, app) = serve(&fx, quick());
    let body = post(
        &app,
        "/api/refine",
        json!({"level": 2, "ids": [0], "gamma": 0.05, "seed": 1}),
    )
    .await
    .json();
    wait_for(&app, body["job_id"].as_u64().unwrap()).await;
    get(&app, "/api/level/1/colorized").await;
    let after: Vec<String> = files.iter().map(|f| hash(&fx.run.join(f))).collect();
    assert_eq!(before, after);
}
