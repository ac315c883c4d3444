mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use fitforge::service::{recommend, router, RecommendationRequest};

async fn call(app: &axum::Router, method: &str, uri: &str, body: Value) -> (u16, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(if body.is_null() { String::new() } else { body.to_string() }))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status().as_u16();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap())
}

#[tokio::test]
async fn endpoints_follow_the_contract() {
    let (records, out) = common::small_pipeline();
    let bundle = out.bundle;
    let app = router(Arc::new(bundle.clone()));

    let (s, health) = call(&app, "GET", "/health", Value::Null).await;
    assert_eq!((s, health["status"].as_str()), (200, Some("ok")));

    let (s, routes) = call(&app, "GET", "/routes", Value::Null).await;
    assert_eq!(s, 200);
    let listed = routes["routes"].as_array().unwrap();
    assert_eq!(listed.len(), bundle.routes.len());
    assert!(listed.iter().all(|r| r["distance_km"].is_f64() && r["cluster"].is_u64()));

    let rec = &records[3];
    let (s, profile) = call(&app, "GET", &format!("/routes/{}/profile", rec.workout_id), Value::Null).await;
    assert_eq!(s, 200);
    let alt: Vec<f64> = serde_json::from_value(profile["altitude_seq"].clone()).unwrap();
    let dist: Vec<f64> = serde_json::from_value(profile["distance_seq"].clone()).unwrap();
    assert_eq!(alt, rec.altitude_seq);
    assert_eq!(dist, rec.distance_seq);
    let (s, err) = call(&app, "GET", "/routes/none/profile", Value::Null).await;
    assert_eq!((s, err["code"].as_str()), (404, Some("not_found")));

    let (s, meta) = call(&app, "GET", "/meta", Value::Null).await;
    assert_eq!(s, 200);
    assert_eq!(meta["rank"].as_u64(), Some(bundle.rank() as u64));
    assert_eq!(meta["sequence_length"].as_u64(), Some(12));
    assert_eq!(meta["bundle_version"].as_u64(), Some(1));

    let (s, users) = call(&app, "GET", "/users", Value::Null).await;
    assert_eq!(s, 200);
    assert!(users["users"].as_array().unwrap().iter().all(Value::is_string));

    let req = json!({"user_id": rec.user_id, "route_id": rec.workout_id, "sport": "run", "target_calories": 474});
    let (s, body) = call(&app, "POST", "/recommend", req).await;
    assert_eq!(s, 200);
    let direct = recommend(
        &bundle,
        &RecommendationRequest {
            user_id: rec.user_id.clone(),
            route_id: rec.workout_id.clone(),
            sport: fitforge::data::Sport::Run,
            target_calories: 474.0,
            gender: None,
        },
    )
    .unwrap();
    assert_eq!(body, serde_json::to_value(&direct).unwrap());
    assert_eq!(body["request"]["target_calories"].as_f64(), Some(474.0));
    assert!(body["request"].get("gender").is_none());

    let req = json!({"user_id": rec.user_id, "route_id": "nope", "sport": "run", "target_calories": 474});
    let (s, err) = call(&app, "POST", "/recommend", req).await;
    assert_eq!((s, err["field"].as_str()), (404, Some("route_id")));
}

#[test]
fn responses_are_consistent() {
    let (records, out) = common::small_pipeline();
    let stats = &out.bundle.stats;
    for rec in records.iter().take(10) {
        let req = RecommendationRequest {
            user_id: rec.user_id.clone(),
            route_id: rec.workout_id.clone(),
            sport: rec.sport.clone(),
            target_calories: 300.0,
            gender: None,
        };
        let r = recommend(&out.bundle, &req).unwrap();
        assert_eq!(r.speed_seq.len(), 12);
        assert_eq!(r.heartrate_seq.len(), 12);
        assert!(r.predicted_distance_km >= stats.distance.min && r.predicted_distance_km <= stats.distance.max);
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert_eq!(r.avg_speed_kmh, mean(&r.speed_seq));
        assert_eq!(r.avg_heartrate_bpm, mean(&r.heartrate_seq));
    }
}

#[tokio::test]
async fn busy_port_fails_at_startup() {
    let (_, out) = common::small_pipeline();
    let taken = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = taken.local_addr().unwrap();
    let result = fitforge::service::serve(out.bundle, fitforge::service::ServiceConfig { addr }).await;
    assert!(matches!(result, Err(fitforge::FitError::Io(_))));
}
