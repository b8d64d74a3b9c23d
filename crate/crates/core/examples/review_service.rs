//! The review HTTP API. Seeds a store with a few candidates, then plays a
//! short reviewing session against the router in-process. Pass `--serve` to
//! keep it listening on 127.0.0.1:8080 instead.

use axum::body::Body;
use axum::http::{Method, Request};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use avcorpus::service::{router, serve, AppState};
use avcorpus::store::Store;
use avcorpus::types::{BoundingBox, CandidateSample, Status, Transcription};

async fn send(app: &axum::Router, method: Method, uri: &str, body: Option<Value>) -> String {
    let req = Request::builder()
        .method(method.clone())
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    // Candidate rows carry a box per frame; keep the printout short.
    let text: String = String::from_utf8_lossy(&bytes)
        .lines()
        .map(|l| if l.len() > 150 { format!("  {}...", &l[..150]) } else { format!("  {l}") })
        .collect::<Vec<_>>()
        .join("\n");
    format!("{method} {uri} -> {status}\n{text}")
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let store = Store::open(dir.path().join("store"))?;
    {
        let mut w = store.writer()?;
        for (n, text) in ["buenos dias", "ola que tal", "gracias"].iter().enumerate() {
            w.append_candidate(&CandidateSample {
                candidate_id: CandidateSample::make_id("vid", 0, 0, n * 100),
                video_id: "vid".into(),
                scene_index: 0,
                track_id: 0,
                start_frame: n * 100,
                end_frame: n * 100 + 50,
                fps: 25.0,
                per_frame_bboxes: vec![BoundingBox::new(10.0, 10.0, 50.0, 60.0); 50],
                transcription: Transcription { text: text.to_string(), language: "es".into(), words: vec![] },
                transcription_failed: false,
                status: Status::Pending,
                edited_text: None,
            })?;
        }
    }
    let state = AppState { store: store.clone(), media_root: dir.path().join("media") };

    if std::env::args().any(|a| a == "--serve") {
        println!("store at {}; listening on http://127.0.0.1:8080", store.root().display());
        serve(state, "127.0.0.1:8080".parse()?).await?;
        return Ok(());
    }

    let app = router(state);
    println!("{}", send(&app, Method::GET, "/api/candidates?limit=2", None).await);
    println!("{}", send(&app, Method::GET, "/api/candidates/vid:0:0:100/neighbors", None).await);
    println!(
        "{}",
        send(&app, Method::POST, "/api/candidates/vid:0:0:0/decision", Some(json!({"decision": "accepted"}))).await
    );
    println!(
        "{}",
        send(&app, Method::POST, "/api/candidates/vid:0:0:100/decision", Some(json!({"decision": "accepted"}))).await
    );
    println!(
        "{}",
        send(
            &app,
            Method::PATCH,
            "/api/candidates/vid:0:0:100/transcript",
            Some(json!({"edited_text": "hola que tal"}))
        )
        .await
    );
    println!(
        "{}",
        send(&app, Method::POST, "/api/candidates/vid:0:0:200/decision", Some(json!({"decision": "discarded"}))).await
    );
    println!("{}", send(&app, Method::GET, "/api/export", None).await);
    Ok(())
}
