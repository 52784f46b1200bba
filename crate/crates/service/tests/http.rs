mod common;

use std::time::Duration;

use axum::body::{to_bytes, Body};
use axum::http::{header, Request, StatusCode};
use axum::Router;
use futures::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::Message;
use tower::ServiceExt;

async fn call(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, String, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let ctype = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_owned())
        .unwrap_or_default();
    (
        status,
        ctype,
        to_bytes(resp.into_body(), usize::MAX).await.unwrap().to_vec(),
    )
}

async fn json_of(app: &Router, method: &str, uri: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let (status, ctype, bytes) = call(app, method, uri, body).await;
    assert!(ctype.starts_with("application/json"), "{uri}: {ctype}");
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test(flavor = "multi_thread")]
async fn session_frame_and_layers() {
    let dir = tempfile::tempdir().unwrap();
    let app = convis_service::http::router(common::service(&dir));

    let (st, net) = json_of(&app, "GET", "/net", Body::empty()).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(net["layers"].as_array().unwrap().len(), 8);

    let (st, created) = json_of(&app, "POST", "/session", Body::empty()).await;
    assert_eq!(st, StatusCode::CREATED);
    let id = created["session"].as_str().unwrap().to_owned();

    let (st, ack) = json_of(&app, "POST", &format!("/session/{id}/frame"), common::frame_png(3)).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(ack["frame"], 1);
    let (st, _) = json_of(&app, "POST", &format!("/session/{id}/frame"), "garbage").await;
    assert_eq!(st, StatusCode::BAD_REQUEST);

    let (st, view) = json_of(
        &app,
        "GET",
        &format!("/session/{id}/layer/relu2?since=0"),
        Body::empty(),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!((view["frame"].as_u64(), view["newer"].as_bool()), (Some(1), Some(true)));
    assert_eq!(view["channels"].as_array().unwrap().len(), 16);

    let (st, ctype, png) = call(
        &app,
        "GET",
        &format!("/session/{id}/layer/relu2?format=png&mode=symmetric"),
        Body::empty(),
    )
    .await;
    assert_eq!((st, ctype.as_str()), (StatusCode::OK, "image/png"));
    assert!(image::load_from_memory(&png).is_ok());

    for (uri, want) in [
        (format!("/session/{id}/layer/nope"), StatusCode::NOT_FOUND),
        (format!("/session/{id}/layer/fc3?format=gif"), StatusCode::BAD_REQUEST),
        ("/session/s77/layer/fc3".to_owned(), StatusCode::NOT_FOUND),
        (format!("/session/{id}/unit/fc3/9/panels"), StatusCode::BAD_REQUEST),
        (
            format!("/session/{id}/unit/relu1/0/panels?row=1"),
            StatusCode::BAD_REQUEST,
        ),
        ("/jobs/j999".to_owned(), StatusCode::NOT_FOUND),
        ("/topk/fc3/0".to_owned(), StatusCode::NOT_FOUND),
        ("/results/x/y/z/secret.txt".to_owned(), StatusCode::NOT_FOUND),
        ("/results/..%2F/y/z/meta.json".to_owned(), StatusCode::BAD_REQUEST),
    ] {
        let (st, _, body) = call(&app, "GET", &uri, Body::empty()).await;
        assert_eq!(st, want, "{uri}: {}", String::from_utf8_lossy(&body));
    }

    let (st, panels) = json_of(
        &app,
        "GET",
        &format!("/session/{id}/unit/relu1/3/panels?row=2&col=5"),
        Body::empty(),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(panels["absent"], json!(["ascent", "topk"]));
    for link in ["channel_image", "deconv_image", "gradient_image"] {
        let url = panels[link].as_str().unwrap();
        let (st, ctype, _) = call(&app, "GET", url, Body::empty()).await;
        assert_eq!((st, ctype.as_str()), (StatusCode::OK, "image/png"), "{url}");
    }
    let (st, _) = json_of(
        &app,
        "POST",
        &format!("/session/{id}/select"),
        r#"{"unit":"conv1:2@1,1"}"#,
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    let (st, _) = json_of(&app, "POST", &format!("/session/{id}/select"), r#"{"unit":"conv1:x"}"#).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn optimize_job_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let app = convis_service::http::router(common::service(&dir));
    let body = json!({ "unit": "fc3:2", "preset": "preset-2", "steps": 30, "seed": 1, "seeds": 2 }).to_string();
    let (st, accepted) = json_of(&app, "POST", "/jobs/optimize", body).await;
    assert_eq!(st, StatusCode::ACCEPTED);
    let id = accepted["id"].as_str().unwrap().to_owned();

    let mut last_step = 0;
    let job = loop {
        let (st, job) = json_of(&app, "GET", &format!("/jobs/{id}"), Body::empty()).await;
        assert_eq!(st, StatusCode::OK);
        let step = job["progress"]["step"].as_u64().unwrap();
        assert!(step >= last_step);
        last_step = step;
        match job["state"].as_str().unwrap() {
            "done" => break job,
            "failed" => panic!("{job}"),
            _ => tokio::time::sleep(Duration::from_millis(5)).await,
        }
    };
    let results = job["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    let k = &results[0]["key"];
    let base = format!(
        "/results/{}/{}/{}",
        k["net"].as_str().unwrap(),
        k["unit"].as_str().unwrap(),
        k["run"].as_str().unwrap()
    );
    let (st, ctype, png) = call(&app, "GET", &format!("{base}/image.png"), Body::empty()).await;
    assert_eq!((st, ctype.as_str()), (StatusCode::OK, "image/png"));
    assert_eq!(image::load_from_memory(&png).unwrap().width(), 8);
    let (st, result) = json_of(&app, "GET", &format!("{base}/result.json"), Body::empty()).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(result["activation_trace"].as_array().unwrap().len(), 30);

    let (st, ctype, _) = call(&app, "GET", &format!("/jobs/{id}/montage"), Body::empty()).await;
    assert_eq!((st, ctype.as_str()), (StatusCode::OK, "image/png"));

    for bad in [
        json!({ "unit": "prob:0", "preset": "1" }).to_string(),
        json!({ "unit": "fc3:2", "preset": "5" }).to_string(),
        json!({ "unit": "fc3:2", "preset": "1", "seeds": 0 }).to_string(),
        json!({ "unit": "fc3:2", "preset": "1", "colour": "red" }).to_string(),
        "{".to_owned(),
    ] {
        let (st, _, _) = call(&app, "POST", "/jobs/optimize", bad.clone()).await;
        assert_eq!(st, StatusCode::BAD_REQUEST, "{bad}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn stream_pushes_frames_and_selections() {
    let dir = tempfile::tempdir().unwrap();
    let svc = common::service(&dir);
    let id = svc.create_session().unwrap().session;
    let other = svc.create_session().unwrap().session;
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let app = convis_service::http::router(svc.clone());
    tokio::spawn(async move { axum::serve(listener, app).await });

    let (mut ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/stream?session={id}"))
        .await
        .unwrap();
    ws.send(Message::Text(r#"{"type":"ping"}"#.into())).await.unwrap();
    assert_eq!(recv(&mut ws).await["type"], "pong");

    // Another session's frame is filtered out; ours arrives.
    let (s2, o2, f) = (svc.clone(), other.clone(), common::frame_png(0));
    tokio::task::spawn_blocking(move || s2.submit_frame(&o2, &f).unwrap())
        .await
        .unwrap();
    let (s2, i2, f) = (svc.clone(), id.clone(), common::frame_png(1));
    tokio::task::spawn_blocking(move || s2.submit_frame(&i2, &f).unwrap())
        .await
        .unwrap();
    let ev = recv(&mut ws).await;
    assert_eq!(ev, json!({ "type": "frame", "session": id, "frame": 1 }));

    ws.send(Message::Text(r#"{"type":"select","unit":"fc3:1"}"#.into()))
        .await
        .unwrap();
    let ev = recv(&mut ws).await;
    assert_eq!(
        (ev["type"].as_str(), ev["unit"].as_str(), ev["frame"].as_u64()),
        (Some("selected"), Some("fc3:1"), Some(1))
    );
    assert_eq!(svc.session(&id).unwrap().selected().unwrap().to_string(), "fc3:1");

    ws.send(Message::Text(r#"{"type":"select","unit":"fc3:99"}"#.into()))
        .await
        .unwrap();
    assert_eq!(recv(&mut ws).await["type"], "error");
    ws.send(Message::Text("not json".into())).await.unwrap();
    assert_eq!(recv(&mut ws).await["type"], "error");

    let req = convis_service::JobRequest {
        unit: "fc3:0".into(),
        preset: Some("1".into()),
        steps: Some(5),
        ..Default::default()
    };
    let job = svc.start_job(&req).unwrap();
    let mut states = Vec::new();
    while states.last().map(String::as_str) != Some("done") {
        let ev = recv(&mut ws).await;
        assert_eq!(
            (ev["type"].as_str(), ev["id"].as_str()),
            (Some("job"), Some(job.as_str()))
        );
        states.push(ev["state"].as_str().unwrap().to_owned());
    }
    assert_eq!(states[0], "running");

    assert!(
        tokio_tungstenite::connect_async(format!("ws://{addr}/stream?session=s404"))
            .await
            .is_err()
    );
}

async fn recv<S>(ws: &mut S) -> Value
where
    S: futures::Stream<Item = Result<Message, tokio_tungstenite::tungstenite::Error>> + Unpin,
{
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .unwrap()
            .unwrap()
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}
