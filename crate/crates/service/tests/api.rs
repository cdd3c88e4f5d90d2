use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use axum::body::Bytes;
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::post;
use axum::{Json, Router};
use latmap_core::atlas::{build_atlas, chart_to_ambient};
use latmap_core::io::{load_point_cloud, save_point_cloud, Format};
use latmap_core::layout::{compute_layout, LayoutFile};
use latmap_core::msvd::{analyze, export_spectrum, MsvdParams};
use latmap_core::synth::{generate, GeneratorKind, GeneratorSpec};
use latmap_core::Atlas;
use latmap_service::{spawn, DatasetConfig, ServiceConfig};
use serde_json::{json, Value};
use tempfile::TempDir;

struct Fixture {
    _dir: TempDir,
    dataset: DatasetConfig,
    atlas: Atlas,
}

fn fixture(seed: u64, with_extras: bool) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let cloud = generate(&GeneratorSpec {
        kind: GeneratorKind::Sphere,
        intrinsic_dim: 2,
        ambient_dim: 6,
        count: 400,
        noise_sigma: 0.01,
        seed,
    })
    .unwrap();
    let cloud_path = dir.path().join("cloud.lgpc");
    save_point_cloud(&cloud, &cloud_path, Format::Lgpc).unwrap();
    // lgpc stores f32, so everything downstream is built from the reloaded cloud.
    let cloud = load_point_cloud(&cloud_path, Format::Lgpc).unwrap();
    let atlas = build_atlas(&cloud, 0.6, 4, 7).unwrap();
    let atlas_path = dir.path().join("atlas.json");
    atlas.save(&atlas_path).unwrap();
    let mut dataset = DatasetConfig {
        cloud_path,
        atlas_path,
        ..Default::default()
    };
    if with_extras {
        let (table, est) = analyze(&cloud, &MsvdParams { centers: 16, scales: 8, ..Default::default() }).unwrap();
        let spectrum_path = dir.path().join("spectrum.csv");
        export_spectrum(&table, &est, &spectrum_path).unwrap();
        let layout = compute_layout(&atlas, 100, 1);
        let layout_path = dir.path().join("layout.json");
        std::fs::write(&layout_path, LayoutFile::new(cloud.checksum(), layout).to_json().unwrap()).unwrap();
        dataset.spectrum_path = Some(spectrum_path);
        dataset.layout_path = Some(layout_path);
        dataset.history_path = Some(dir.path().join("history.jsonl"));
    }
    Fixture {
        _dir: dir,
        dataset,
        atlas,
    }
}

fn config(f: &Fixture) -> ServiceConfig {
    let mut c = ServiceConfig::new(f.dataset.clone());
    c.port = 0;
    c
}

async fn stub_decoder() -> SocketAddr {
    async fn echo(body: Json<Value>) -> impl IntoResponse {
        let n = body["vector"].as_array().map_or(0, |v| v.len());
        ([(header::CONTENT_TYPE, "image/x-stub")], Bytes::from(format!("stub:{n}")))
    }
    async fn broken() -> impl IntoResponse {
        (StatusCode::SERVICE_UNAVAILABLE, "down")
    }
    async fn slow() -> impl IntoResponse {
        tokio::time::sleep(Duration::from_secs(5)).await;
        "late"
    }
    let app = Router::new()
        .route("/decode", post(echo))
        .route("/broken", post(broken))
        .route("/slow", post(slow));
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app).await });
    addr
}

async fn get(addr: SocketAddr, path: &str) -> reqwest::Response {
    reqwest::get(format!("http://{addr}{path}")).await.unwrap()
}

async fn post_json(addr: SocketAddr, path: &str, body: Value) -> reqwest::Response {
    reqwest::Client::new()
        .post(format!("http://{addr}{path}"))
        .json(&body)
        .send()
        .await
        .unwrap()
}

#[tokio::test]
async fn read_endpoints_serve_loaded_files() {
    let f = fixture(1, true);
    let (addr, _h) = spawn(&config(&f)).await.unwrap();

    let health: Value = get(addr, "/api/health").await.json().await.unwrap();
    assert_eq!(health["status"], "ok");
    assert_eq!(health["charts"], f.atlas.len());
    assert_eq!(health["dim"], 6);

    let atlas_bytes = get(addr, "/api/atlas").await.bytes().await.unwrap();
    assert_eq!(&atlas_bytes[..], std::fs::read(&f.dataset.atlas_path).unwrap());
    let served = Atlas::from_json(std::str::from_utf8(&atlas_bytes).unwrap()).unwrap();
    assert_eq!(served.d_max, 4);

    let layout_bytes = get(addr, "/api/layout").await.bytes().await.unwrap();
    assert_eq!(&layout_bytes[..], std::fs::read(f.dataset.layout_path.as_ref().unwrap()).unwrap());

    let spectrum: Value = get(addr, "/api/spectrum").await.json().await.unwrap();
    assert_eq!(spectrum["radii"].as_array().unwrap().len(), 8);
    assert_eq!(spectrum["classes"].as_array().unwrap().len(), 6);

    let chart: Value = get(addr, "/api/chart/0").await.json().await.unwrap();
    let c0 = f.atlas.chart(0).unwrap();
    assert_eq!(chart["d"], c0.d);
    assert_eq!(chart["members"].as_array().unwrap().len(), c0.members.len());
    let axis0 = chart["grid"]["axis_values"][0].as_array().unwrap();
    assert_eq!(axis0[4].as_f64().unwrap(), 2.0 * c0.sing_values[0]);

    assert_eq!(get(addr, "/api/chart/99999").await.status(), StatusCode::NOT_FOUND);
    assert_eq!(get(addr, "/api/chart/abc").await.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn missing_layout_and_spectrum_are_not_found() {
    let f = fixture(2, false);
    let (addr, _h) = spawn(&config(&f)).await.unwrap();
    assert_eq!(get(addr, "/api/layout").await.status(), StatusCode::NOT_FOUND);
    assert_eq!(get(addr, "/api/spectrum").await.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn synthesize_and_history_replay() {
    let f = fixture(3, true);
    let (addr, _h) = spawn(&config(&f)).await.unwrap();
    let c1 = f.atlas.chart(1).unwrap();

    let zero: Value = post_json(addr, "/api/synthesize", json!({"chart_id": 1, "coeffs": vec![0.0; c1.d]}))
        .await
        .json()
        .await
        .unwrap();
    let v: Vec<f64> = serde_json::from_value(zero["vector"].clone()).unwrap();
    assert_eq!(v, c1.mean);
    assert_eq!(zero["vector_id"], 0);

    let coeffs: Vec<f64> = (0..c1.d).map(|i| 0.1 * (i as f64 + 1.0)).collect();
    let second: Value = post_json(addr, "/api/synthesize", json!({"chart_id": 1, "coeffs": coeffs}))
        .await
        .json()
        .await
        .unwrap();
    assert_eq!(second["vector_id"], 1);

    let bad = post_json(addr, "/api/synthesize", json!({"chart_id": 1, "coeffs": vec![0.0; c1.d + 1]})).await;
    assert_eq!(bad.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let msg: Value = bad.json().await.unwrap();
    assert!(msg["error"].as_str().unwrap().contains("coefficients"), "{msg}");
    let unknown = post_json(addr, "/api/synthesize", json!({"chart_id": 4242, "coeffs": []})).await;
    assert_eq!(unknown.status(), StatusCode::NOT_FOUND);
    let malformed = post_json(addr, "/api/synthesize", json!({"chart": 1})).await;
    assert_eq!(malformed.status(), StatusCode::UNPROCESSABLE_ENTITY);

    let history: Value = get(addr, "/api/history").await.json().await.unwrap();
    let entries = history["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    for e in entries {
        let chart = f.atlas.chart(e["coords"]["chart_id"].as_u64().unwrap() as usize).unwrap();
        let coeffs: Vec<f64> = serde_json::from_value(e["coords"]["coeffs"].clone()).unwrap();
        let vector: Vec<f64> = serde_json::from_value(e["vector"].clone()).unwrap();
        assert_eq!(chart_to_ambient(chart, &coeffs).unwrap(), vector);
    }
    let ids: Vec<u64> = entries.iter().map(|e| e["vector_id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![0, 1]);

    let log = std::fs::read_to_string(f.dataset.history_path.as_ref().unwrap()).unwrap();
    assert_eq!(log.lines().count(), 2);
}

#[tokio::test]
async fn decode_without_decoder_returns_placeholder() {
    let f = fixture(4, false);
    let (addr, _h) = spawn(&config(&f)).await.unwrap();
    let v = vec![0.3; 6];
    let a = post_json(addr, "/api/decode", json!({"vector": v})).await;
    assert_eq!(a.status(), StatusCode::OK);
    assert!(a.headers()[header::CONTENT_TYPE].to_str().unwrap().starts_with("image/"));
    let a = a.bytes().await.unwrap();
    let b = post_json(addr, "/api/decode", json!({"vector": v})).await.bytes().await.unwrap();
    assert_eq!(a, b);

    let short = post_json(addr, "/api/decode", json!({"vector": [1.0, 2.0]})).await;
    assert_eq!(short.status(), StatusCode::UNPROCESSABLE_ENTITY);
    let missing = post_json(addr, "/api/decode", json!({"vector_id": 12})).await;
    assert_eq!(missing.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn decode_relays_stub_decoder() {
    let stub = stub_decoder().await;
    let f = fixture(5, false);
    let mut cfg = config(&f);
    cfg.decoder_url = Some(format!("http://{stub}/decode"));
    let (addr, _h) = spawn(&cfg).await.unwrap();

    let r = post_json(addr, "/api/decode", json!({"vector": vec![0.0; 6]})).await;
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.headers()[header::CONTENT_TYPE], "image/x-stub");
    assert_eq!(&r.bytes().await.unwrap()[..], b"stub:6");

    let chart = f.atlas.chart(0).unwrap();
    post_json(addr, "/api/synthesize", json!({"chart_id": 0, "coeffs": vec![0.0; chart.d]})).await;
    let by_id = post_json(addr, "/api/decode", json!({"vector_id": 0})).await;
    assert_eq!(&by_id.bytes().await.unwrap()[..], b"stub:6");
}

#[tokio::test]
async fn decoder_failures_become_bad_gateway() {
    let stub = stub_decoder().await;
    let f = fixture(6, false);

    let mut cfg = config(&f);
    cfg.decoder_url = Some(format!("http://{stub}/broken"));
    let (addr, _h) = spawn(&cfg).await.unwrap();
    let r = post_json(addr, "/api/decode", json!({"vector": vec![0.0; 6]})).await;
    assert_eq!(r.status(), StatusCode::BAD_GATEWAY);
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["decoder_status"], 503);

    cfg.decoder_url = Some(format!("http://{stub}/slow"));
    cfg.decoder_timeout_ms = 200;
    let (addr, _h) = spawn(&cfg).await.unwrap();
    let started = std::time::Instant::now();
    let r = post_json(addr, "/api/decode", json!({"vector": vec![0.0; 6]})).await;
    assert_eq!(r.status(), StatusCode::BAD_GATEWAY);
    assert!(started.elapsed() < Duration::from_secs(4));
    let body: Value = r.json().await.unwrap();
    assert!(body["decoder_status"].is_null());
}

#[tokio::test]
async fn extra_datasets_are_mounted_under_their_name() {
    let a = fixture(7, false);
    let b = fixture(8, false);
    let mut cfg = config(&a);
    cfg.datasets.insert("other".into(), b.dataset.clone());
    let (addr, _h) = spawn(&cfg).await.unwrap();
    let ha: Value = get(addr, "/api/health").await.json().await.unwrap();
    let hb: Value = get(addr, "/other/api/health").await.json().await.unwrap();
    assert_eq!(hb["charts"], b.atlas.len());
    assert_ne!(ha["cloud_checksum"], hb["cloud_checksum"]);
}

#[tokio::test]
async fn startup_errors() {
    let a = fixture(9, false);
    let b = fixture(10, false);

    let mut missing = config(&a);
    missing.default.atlas_path = Path::new("/nonexistent/atlas.json").to_path_buf();
    assert!(spawn(&missing).await.is_err());

    let mut crossed = config(&a);
    crossed.default.atlas_path = b.dataset.atlas_path.clone();
    let err = spawn(&crossed).await.map(|_| ()).unwrap_err();
    assert!(err.to_string().contains("mismatch"), "{err}");

    let (addr, _h) = spawn(&config(&a)).await.unwrap();
    let mut busy = config(&a);
    busy.port = addr.port();
    assert!(matches!(spawn(&busy).await, Err(latmap_service::ServiceError::Bind { .. })));
}

#[tokio::test]
async fn concurrent_reads_are_identical() {
    let f = fixture(11, true);
    let (addr, _h) = spawn(&config(&f)).await.unwrap();
    let tasks: Vec<_> = (0..16)
        .map(|_| tokio::spawn(async move { get(addr, "/api/atlas").await.bytes().await.unwrap() }))
        .collect();
    let first = std::fs::read(&f.dataset.atlas_path).unwrap();
    for t in tasks {
        assert_eq!(&t.await.unwrap()[..], &first[..]);
    }
}
