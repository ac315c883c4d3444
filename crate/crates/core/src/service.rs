//! Recommendation pipeline over a loaded bundle, its HTTP API, and the
//! table and file renderers used by the command line.

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::data::{Gender, Sport};
use crate::error::{FitError, Result};
use crate::models::{
    assemble_context, predict_distance, predict_sequences, ContextInput, ModelBundle, BUNDLE_VERSION,
};
use crate::tensor::EntityId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationRequest {
    pub user_id: String,
    pub route_id: String,
    pub sport: Sport,
    pub target_calories: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gender: Option<Gender>,
}

impl RecommendationRequest {
    /// Parses a JSON body, reporting the first offending field.
    pub fn from_json(body: &[u8]) -> Result<Self> {
        let value: Value = serde_json::from_slice(body)
            .map_err(|e| FitError::validation("body", format!("not valid JSON: {e}")))?;
        let obj = value.as_object().ok_or_else(|| FitError::validation("body", "expected a JSON object"))?;
        let text = |field: &'static str| -> Result<String> {
            match obj.get(field) {
                Some(Value::String(s)) if !s.is_empty() => Ok(s.clone()),
                Some(_) => Err(FitError::validation(field, "must be a non-empty string")),
                None => Err(FitError::validation(field, "is required")),
            }
        };
        let user_id = text("user_id")?;
        let route_id = text("route_id")?;
        let sport: Sport = text("sport")?
            .parse()
            .map_err(|_| FitError::validation("sport", "must be one of run, bike, mountain-bike"))?;
        let target_calories = obj
            .get("target_calories")
            .ok_or_else(|| FitError::validation("target_calories", "is required"))?
            .as_f64()
            .ok_or_else(|| FitError::validation("target_calories", "must be a number"))?;
        let gender = match obj.get("gender") {
            None | Some(Value::Null) => None,
            Some(v) => Some(
                serde_json::from_value::<Gender>(v.clone())
                    .map_err(|_| FitError::validation("gender", "must be one of male, female, unknown"))?,
            ),
        };
        let req = RecommendationRequest { user_id, route_id, sport, target_calories, gender };
        req.validate()?;
        Ok(req)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_calories > 0.0 && self.target_calories.is_finite()) {
            return Err(FitError::validation("target_calories", format!("{} must be a positive number", self.target_calories)));
        }
        if self.sport.index().is_none() {
            return Err(FitError::validation("sport", "must be one of run, bike, mountain-bike"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationResponse {
    pub request: RecommendationRequest,
    pub predicted_distance_km: f64,
    pub speed_seq: Vec<f64>,
    pub heartrate_seq: Vec<f64>,
    pub avg_speed_kmh: f64,
    pub avg_heartrate_bpm: f64,
    pub bundle_version: u32,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Embedding lookups, context assembly, distance prediction, then speed and
/// heart-rate profiles over the stored route fed with the predicted distance.
pub fn recommend(bundle: &ModelBundle, request: &RecommendationRequest) -> Result<RecommendationResponse> {
    request.validate()?;
    let route = bundle.route(&request.route_id)?;
    bundle.embeddings.lookup(EntityId::User(&request.user_id))?;
    let gender = request
        .gender
        .or_else(|| bundle.user_gender.get(&request.user_id).copied())
        .unwrap_or_default();
    let input = ContextInput {
        user_id: &request.user_id,
        cluster: route.cluster,
        sport: request.sport.clone(),
        gender,
        calories: request.target_calories,
        route_distance_km: route.distance_km,
    };
    let context = assemble_context(&bundle.embeddings, &input, &bundle.stats, &bundle.layout)?;
    let distance = predict_distance(&bundle.distance, &context)?;
    let (speed, hr) = predict_sequences(&bundle.sequence, &context, distance, &route.altitude_seq, &route.distance_seq)?;
    Ok(RecommendationResponse {
        request: request.clone(),
        predicted_distance_km: distance,
        avg_speed_kmh: mean(&speed),
        avg_heartrate_bpm: mean(&hr),
        speed_seq: speed,
        heartrate_seq: hr,
        bundle_version: BUNDLE_VERSION,
    })
}

/// Summary table with one row per response, in the order given.
pub fn render_table(responses: &[RecommendationResponse]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>10}  {:>13}  {:>15}  {:>12}", "calories", "distance (km)", "speed avg (km/h)", "HR avg (bpm)");
    for r in responses {
        let _ = writeln!(
            out,
            "{:>10.1}  {:>13.3}  {:>15.2}  {:>12.1}",
            r.request.target_calories, r.predicted_distance_km, r.avg_speed_kmh, r.avg_heartrate_bpm
        );
    }
    out
}

/// Comma-separated profiles: a `step` column, then speed and heart rate per
/// response.
pub fn render_sequences(responses: &[RecommendationResponse]) -> String {
    let mut out = String::from("step");
    for r in responses {
        let c = r.request.target_calories;
        let _ = write!(out, ",speed_{c},heartrate_{c}");
    }
    out.push('\n');
    let len = responses.iter().map(|r| r.speed_seq.len()).max().unwrap_or(0);
    for t in 0..len {
        let _ = write!(out, "{t}");
        for r in responses {
            let cell = |v: &[f64]| v.get(t).map(|x| x.to_string()).unwrap_or_default();
            let _ = write!(out, ",{},{}", cell(&r.speed_seq), cell(&r.heartrate_seq));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub code: &'static str,
    pub field: Option<String>,
    pub message: String,
}

/// HTTP status and body for an error.
pub fn error_body(err: &FitError) -> (StatusCode, ErrorBody) {
    let (status, code, field) = match err {
        FitError::Validation { field, .. } => (StatusCode::BAD_REQUEST, "validation_error", Some(field.clone())),
        FitError::NotFound { kind, .. } => {
            let field = match *kind {
                "user" => Some("user_id".to_string()),
                "route" => Some("route_id".to_string()),
                _ => None,
            };
            (StatusCode::NOT_FOUND, "not_found", field)
        }
        FitError::Serde(_) | FitError::Parse { .. } => (StatusCode::BAD_REQUEST, "malformed_body", None),
        _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal", None),
    };
    (status, ErrorBody { code, field, message: err.to_string() })
}

struct ApiError(FitError);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, body) = error_body(&self.0);
        (status, Json(body)).into_response()
    }
}

impl From<FitError> for ApiError {
    fn from(e: FitError) -> Self {
        ApiError(e)
    }
}

type Shared = State<Arc<ModelBundle>>;

async fn health() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn routes(State(b): Shared) -> Json<Value> {
    let list: Vec<Value> = b
        .routes
        .iter()
        .map(|r| json!({ "route_id": r.route_id, "distance_km": r.distance_km, "cluster": r.cluster, "sport": r.sport }))
        .collect();
    Json(json!({ "routes": list }))
}

async fn route_profile(State(b): Shared, Path(id): Path<String>) -> std::result::Result<Json<Value>, ApiError> {
    let r = b.route(&id)?;
    Ok(Json(json!({ "route_id": r.route_id, "altitude_seq": r.altitude_seq, "distance_seq": r.distance_seq })))
}

async fn users(State(b): Shared) -> Json<Value> {
    Json(json!({ "users": b.embeddings.index.users }))
}

async fn meta(State(b): Shared) -> Json<Value> {
    Json(json!({
        "bundle_version": BUNDLE_VERSION,
        "rank": b.rank(),
        "sequence_length": b.sequence_length,
        "calories_range": b.stats.calories,
        "distance_range": b.stats.distance,
        "sports": Sport::MODELLED.iter().map(Sport::as_str).collect::<Vec<_>>(),
        "include_gender": b.layout.include_gender,
    }))
}

async fn recommend_handler(State(b): Shared, body: Bytes) -> std::result::Result<Json<RecommendationResponse>, ApiError> {
    let req = RecommendationRequest::from_json(&body)?;
    Ok(Json(recommend(&b, &req)?))
}

/// The HTTP API over a shared, read-only bundle.
pub fn router(bundle: Arc<ModelBundle>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/routes", get(routes))
        .route("/routes/:id/profile", get(route_profile))
        .route("/users", get(users))
        .route("/meta", get(meta))
        .route("/recommend", post(recommend_handler))
        .with_state(bundle)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub addr: SocketAddr,
}

/// Binds `config.addr` and serves until the process ends. Binding failures,
/// such as a busy port, are returned before any request is accepted.
pub async fn serve(bundle: ModelBundle, config: ServiceConfig) -> Result<()> {
    let listener = tokio::net::TcpListener::bind(config.addr).await?;
    axum::serve(listener, router(Arc::new(bundle))).await?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_validation_names_fields() {
        let field = |body: &str| match RecommendationRequest::from_json(body.as_bytes()) {
            Err(FitError::Validation { field, .. }) => field.to_string(),
            other => panic!("{other:?}"),
        };
        assert_eq!(field(r#"{"user_id":"u","route_id":"r","sport":"run","target_calories":-5}"#), "target_calories");
        assert_eq!(field(r#"{"user_id":"u","route_id":"r","sport":"run","target_calories":0}"#), "target_calories");
        assert_eq!(field(r#"{"user_id":"u","route_id":"r","sport":"swim","target_calories":5}"#), "sport");
        assert_eq!(field(r#"{"route_id":"r","sport":"run","target_calories":5}"#), "user_id");
        assert_eq!(field(r#"{"user_id":"u","route_id":"r","sport":"run","target_calories":"x"}"#), "target_calories");
        assert_eq!(field(r#"{"user_id":"u","route_id":"r","sport":"run","target_calories":5,"gender":"x"}"#), "gender");
        assert_eq!(field("not json"), "body");
        let ok = RecommendationRequest::from_json(br#"{"user_id":"u","route_id":"r","sport":"bike","target_calories":592}"#)
            .unwrap();
        assert_eq!(ok.sport, Sport::Bike);
        assert_eq!(ok.gender, None);
    }

    #[test]
    fn error_bodies() {
        let (s, b) = error_body(&FitError::NotFound { kind: "user", id: "u9".into() });
        assert_eq!(s, StatusCode::NOT_FOUND);
        assert_eq!(b.field.as_deref(), Some("user_id"));
        assert!(b.message.contains("u9"));
        let (s, b) = error_body(&FitError::validation("target_calories", "bad"));
        assert_eq!((s, b.code), (StatusCode::BAD_REQUEST, "validation_error"));
    }

    fn response(cal: f64, speed: Vec<f64>) -> RecommendationResponse {
        RecommendationResponse {
            request: RecommendationRequest {
                user_id: "u".into(),
                route_id: "r".into(),
                sport: Sport::Run,
                target_calories: cal,
                gender: None,
            },
            predicted_distance_km: 5.0,
            avg_speed_kmh: mean(&speed),
            avg_heartrate_bpm: 120.0,
            heartrate_seq: vec![120.0; speed.len()],
            speed_seq: speed,
            bundle_version: 1,
        }
    }

    #[test]
    fn table_rows_follow_request_order() {
        let rs = [response(651.0, vec![1.0]), response(474.0, vec![1.0]), response(592.0, vec![1.0])];
        let table = render_table(&rs);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].trim_start().starts_with("651.0"));
        assert!(lines[2].trim_start().starts_with("474.0"));
        assert_eq!(render_table(&rs[..1]).lines().count(), 2);
    }

    #[test]
    fn sequence_file_shape() {
        let one = render_sequences(&[response(500.0, vec![1.0, 2.0, 3.0])]);
        let lines: Vec<&str> = one.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "step,speed_500,heartrate_500");
        assert_eq!(lines[3], "2,3,120");
        let two = render_sequences(&[response(500.0, vec![1.0, 2.0]), response(600.0, vec![4.0, 5.0])]);
        assert!(two.lines().all(|l| l.split(',').count() == 5));
    }
}
