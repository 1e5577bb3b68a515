use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use nhssa::bench::preset;
use nhssa::pipeline::run_pipeline;
use nhssa::signal::{generate_noise, synthesize_signal};
use nhssa::Series;
use nhssa_cli::service::{router, AppState};
use nhssa_cli::session::Session;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture() -> Session {
    let spec = preset("white").unwrap();
    let s: Series = synthesize_signal(&spec.signal, spec.m).unwrap();
    let w: Series = generate_noise(&spec.noise.with_seed(1), spec.m).unwrap();
    let f = s.add(&w).unwrap();
    let nhssa::bench::EstimatorSpec::Nhssa { config } = &spec.estimators[0] else {
        panic!()
    };
    let res = run_pipeline(&f, config).unwrap();
    Session::from_result(res, &f, config, Some(1), "fixture.csv").unwrap()
}

fn app(dir: &tempfile::TempDir) -> Router {
    router(
        AppState::new(fixture(), dir.path().join("session.json")),
        None,
    )
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = serde_json::from_slice(&bytes).unwrap_or(Value::Null);
    (status, v)
}

fn series(v: &Value) -> Vec<[f64; 2]> {
    serde_json::from_value(v.clone()).unwrap()
}

#[tokio::test]
async fn session_summary_and_components() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (st, v) = call(&app, "GET", "/api/session", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["version"], 0);
    assert_eq!(v["schema"], "nhssa/1");
    assert_eq!(v["id"].as_str().unwrap().len(), 16);

    let (st, v) = call(&app, "GET", "/api/components", None).await;
    assert_eq!(st, StatusCode::OK);
    let comps = v["components"].as_array().unwrap();
    assert_eq!(comps.len(), 18);
    // eight eigenvalues well above the rest: four conjugate pairs
    let mut mods: Vec<f64> = comps
        .iter()
        .map(|c| c["abs_eigval"].as_f64().unwrap())
        .collect();
    mods.sort_by(|a, b| b.total_cmp(a));
    assert!(mods[7] >= 0.6, "{mods:?}");
    assert!(mods[7] > 1.5 * mods[8], "{mods:?}");
    assert_eq!(comps.iter().filter(|c| c["label"] != "noise").count(), 8);
    for key in [
        "index",
        "eigval",
        "modulus",
        "wraps",
        "slope_cycles",
        "r2",
        "label",
        "label_source",
        "kept",
    ] {
        assert!(comps[0].get(key).is_some(), "missing {key}");
    }
}

#[tokio::test]
async fn series_endpoint_downsamples() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (st, full) = call(&app, "GET", "/api/components/0/series", None).await;
    assert_eq!(st, StatusCode::OK);
    let n = full["z"].as_array().unwrap().len();
    assert_eq!(full["backmap"].as_array().unwrap().len(), 300);
    let (_, thin) = call(&app, "GET", "/api/components/0/series?stride=7", None).await;
    assert_eq!(thin["z"].as_array().unwrap().len(), n.div_ceil(7));
    assert_eq!(thin["phase"].as_array().unwrap().len(), n.div_ceil(7));
    assert_eq!(
        thin["backmap"].as_array().unwrap().len(),
        300usize.div_ceil(7)
    );
    assert_eq!(thin["z"][1], full["z"][7]);
    let (st, _) = call(&app, "GET", "/api/components/0/series?stride=0", None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, v) = call(&app, "GET", "/api/components/18/series", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(v["version"], 0);
}

#[tokio::test]
async fn noise_label_removes_exactly_that_component() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (_, before) = call(&app, "GET", "/api/reconstruction", None).await;
    let (_, comp) = call(&app, "GET", "/api/components/0/series", None).await;
    assert_eq!(comp["label"], "exponential");

    let (st, v) = call(
        &app,
        "POST",
        "/api/components/0/label",
        Some(json!({"label": "Noise"})),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["version"], 1);
    assert_eq!(v["component"]["label"], "noise");
    assert_eq!(v["component"]["label_source"], "human");

    let (_, after) = call(&app, "GET", "/api/reconstruction", None).await;
    assert_eq!(after["version"], 1);
    let (s0, s1, fj) = (
        series(&before["shat"]),
        series(&after["shat"]),
        series(&comp["backmap"]),
    );
    let scale = s0
        .iter()
        .map(|z| z[0].abs().max(z[1].abs()))
        .fold(0.0, f64::max);
    for k in 0..300 {
        for c in 0..2 {
            let diff = s0[k][c] - s1[k][c] - fj[k][c];
            assert!(diff.abs() <= 1e-7 * scale, "k {k}: {diff}");
        }
    }
    // the partner row stays in the signal group on its own
    assert_eq!(after["frequencies"].as_array().unwrap().len(), 4);
    assert!(after["noise_rows"].as_array().unwrap().contains(&json!(0)));
    let f = series(&after["f"]);
    let w = series(&after["what"]);
    for k in 0..300 {
        assert!((s1[k][0] + w[k][0] - f[k][0]).abs() < 1e-12);
    }
}

#[tokio::test]
async fn relabeling_a_pair_drops_its_frequency() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (_, comps) = call(&app, "GET", "/api/components", None).await;
    let comps = comps["components"].as_array().unwrap().clone();
    let c0 = comps[0]["eigval"].clone();
    let partner = comps
        .iter()
        .position(|c| {
            (c["eigval"][0].as_f64().unwrap() - c0[0].as_f64().unwrap()).abs() < 1e-9
                && (c["eigval"][1].as_f64().unwrap() + c0[1].as_f64().unwrap()).abs() < 1e-9
        })
        .unwrap();
    let f0 = comps[0]["cycles"].as_f64().unwrap().abs();
    for j in [0, partner] {
        let (st, _) = call(
            &app,
            "POST",
            &format!("/api/components/{j}/label"),
            Some(json!({"label": "noise"})),
        )
        .await;
        assert_eq!(st, StatusCode::OK);
    }
    let (_, rec) = call(&app, "GET", "/api/reconstruction", None).await;
    let freqs: Vec<f64> = serde_json::from_value(rec["frequencies"].clone()).unwrap();
    assert_eq!(freqs.len(), 3);
    assert!(freqs.iter().all(|f| (f - f0).abs() > 1e-6));
    // back to signal restores it
    for j in [0, partner] {
        call(
            &app,
            "POST",
            &format!("/api/components/{j}/label"),
            Some(json!({"label": "Spiral"})),
        )
        .await;
    }
    let (_, rec) = call(&app, "GET", "/api/reconstruction", None).await;
    assert_eq!(rec["frequencies"].as_array().unwrap().len(), 4);
    assert_eq!(rec["version"], 4);
}

#[tokio::test]
async fn label_errors() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let (st, v) = call(
        &app,
        "POST",
        "/api/components/99/label",
        Some(json!({"label": "Noise"})),
    )
    .await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(v["version"], 0);
    let (st, _) = call(
        &app,
        "POST",
        "/api/components/1/label",
        Some(json!({"label": "Wobbly"})),
    )
    .await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(
        &app,
        "POST",
        "/api/components/1/label",
        Some(json!({"nope": 1})),
    )
    .await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, _) = call(&app, "POST", "/api/components/1/label", None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    let (st, v) = call(
        &app,
        "POST",
        "/api/components/1/label",
        Some(json!({"label": "Noise", "version": 0})),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["version"], 1);
    let (st, v) = call(
        &app,
        "POST",
        "/api/components/1/label",
        Some(json!({"label": "Noise", "version": 0})),
    )
    .await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(v["version"], 1);
    let (_, audit) = call(&app, "GET", "/api/audit", None).await;
    assert_eq!(audit["entries"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn rapid_posts_bump_version_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    for label in ["Noise", "Exponential"] {
        let (st, _) = call(
            &app,
            "POST",
            "/api/components/2/label",
            Some(json!({ "label": label })),
        )
        .await;
        assert_eq!(st, StatusCode::OK);
    }
    let (_, audit) = call(&app, "GET", "/api/audit", None).await;
    assert_eq!(audit["version"], 2);
    let entries = audit["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert_eq!(entries[0]["old"], "exponential");
    assert_eq!(entries[0]["new"], "noise");
    assert_eq!(entries[1]["new"], "exponential");
    assert_eq!(entries[1]["version"], 2);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_posts_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    let labels = [
        "Noise",
        "Spiral",
        "Exponential",
        "Noise",
        "Spiral",
        "Noise",
        "Exponential",
        "Noise",
    ];
    let tasks: Vec<_> = labels
        .iter()
        .map(|l| {
            let app = app.clone();
            let body = json!({ "label": l });
            tokio::spawn(
                async move { call(&app, "POST", "/api/components/3/label", Some(body)).await },
            )
        })
        .collect();
    let mut versions = Vec::new();
    for t in tasks {
        let (st, v) = t.await.unwrap();
        assert_eq!(st, StatusCode::OK);
        versions.push(v["version"].as_u64().unwrap());
    }
    versions.sort_unstable();
    assert_eq!(versions, (1..=8).collect::<Vec<u64>>());
    let (_, audit) = call(&app, "GET", "/api/audit", None).await;
    let entries = audit["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 8);
    // last writer wins
    let last = entries
        .iter()
        .max_by_key(|e| e["version"].as_u64().unwrap())
        .unwrap();
    let (_, comps) = call(&app, "GET", "/api/components", None).await;
    assert_eq!(comps["components"][3]["label"], last["new"]);
    for pair in entries.windows(2) {
        assert_eq!(pair[0]["new"], pair[1]["old"]);
    }
}

#[tokio::test]
async fn save_round_trips_labels() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    call(
        &app,
        "POST",
        "/api/components/5/label",
        Some(json!({"label": "Noise"})),
    )
    .await;
    let (st, v) = call(&app, "POST", "/api/save", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["version"], 1);
    let reloaded = Session::load(&dir.path().join("session.json")).unwrap();
    assert_eq!(reloaded.version(), 1);
    assert_eq!(reloaded.file.audit.len(), 1);
    assert_eq!(
        reloaded.file.records[5].label,
        nhssa::components::Label::Noise
    );
    assert!(reloaded.selection().noise_rows.contains(&5));
}

#[tokio::test]
async fn every_payload_is_versioned_and_cors_is_on() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(&dir);
    for uri in [
        "/api/session",
        "/api/components",
        "/api/components/1/series",
        "/api/reconstruction",
        "/api/audit",
    ] {
        let (st, v) = call(&app, "GET", uri, None).await;
        assert_eq!(st, StatusCode::OK, "{uri}");
        assert_eq!(v["version"], 0, "{uri}");
    }
    let req = Request::builder()
        .uri("/api/session")
        .header("origin", "http://localhost:5173")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert!(resp.headers().contains_key("access-control-allow-origin"));
    let resp = app
        .clone()
        .oneshot(Request::builder().uri("/").body(Body::empty()).unwrap())
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    let html = resp.into_body().collect().await.unwrap().to_bytes();
    assert!(std::str::from_utf8(&html).unwrap().contains("/api/session"));
}
