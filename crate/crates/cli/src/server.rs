//! JSON-over-HTTP service for interactive annotation.
//!
//! The model is shared read-only between handlers. Each session sits behind
//! its own mutex, so a correction locks only its session and concurrent
//! sessions proceed in parallel.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use curvegcn::data::{decode_png, image_to_tensor};
use curvegcn::geometry::{ControlCurve, Point2};
use curvegcn::interactive::{curve_iou, masked_predict, pin_only, Correction, InteractiveGcn};
use curvegcn::model::{CurveGcn, ImageFeatures};
use curvegcn::raster::{scanline_fill, Mask};
use curvegcn::trainer::network_input;

pub const MAX_SESSIONS: usize = 64;
pub const SESSION_IDLE: Duration = Duration::from_secs(30 * 60);

/// A loaded checkpoint.
pub struct LoadedModel {
    pub model: CurveGcn,
    pub interactive: Option<InteractiveGcn>,
    /// Hex SHA-256 of the checkpoint bytes.
    pub hash: String,
}

impl LoadedModel {
    pub fn from_checkpoint(bytes: &[u8]) -> curvegcn::Result<Self> {
        let model = CurveGcn::from_checkpoint(bytes)?;
        let interactive = InteractiveGcn::from_model(&model);
        let hash = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
        Ok(Self { model, interactive, hash })
    }
}

struct GroundTruth {
    mask: Mask,
}

struct Session {
    features: ImageFeatures,
    curve: ControlCurve,
    clicks: usize,
    gt: Option<GroundTruth>,
    last_used: Instant,
}

#[derive(Default)]
struct SessionStore {
    sessions: HashMap<String, Arc<Mutex<Session>>>,
}

impl SessionStore {
    fn expire(&mut self, now: Instant) {
        self.sessions.retain(|_, s| {
            // a session busy in another handler is in use, hence not idle
            s.try_lock().map(|s| now.duration_since(s.last_used) < SESSION_IDLE).unwrap_or(true)
        });
    }

    fn insert(&mut self, id: String, session: Session) {
        self.expire(session.last_used);
        while self.sessions.len() >= MAX_SESSIONS {
            let oldest = self
                .sessions
                .iter()
                .filter_map(|(k, s)| s.try_lock().ok().map(|s| (s.last_used, k.clone())))
                .min();
            match oldest {
                Some((_, k)) => {
                    self.sessions.remove(&k);
                }
                None => break,
            }
        }
        self.sessions.insert(id, Arc::new(Mutex::new(session)));
    }
}

#[derive(Clone)]
pub struct AppState {
    model: Option<Arc<LoadedModel>>,
    sessions: Arc<Mutex<SessionStore>>,
}

impl AppState {
    pub fn new(model: Option<LoadedModel>) -> Self {
        Self { model: model.map(Arc::new), sessions: Arc::default() }
    }

    pub fn session_count(&self) -> usize {
        self.sessions.lock().expect("session store poisoned").sessions.len()
    }

    fn model(&self) -> Result<&Arc<LoadedModel>, ApiError> {
        self.model.as_ref().ok_or(ApiError::NoModel)
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        let mut store = self.sessions.lock().expect("session store poisoned");
        store.expire(Instant::now());
        store.sessions.get(id).cloned().ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }
}

#[derive(Debug)]
pub enum ApiError {
    NoModel,
    UnknownSession(String),
    Unprocessable(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, message) = match self {
            ApiError::NoModel => (StatusCode::SERVICE_UNAVAILABLE, "model not loaded".to_string()),
            ApiError::UnknownSession(id) => (StatusCode::NOT_FOUND, format!("unknown session {id}")),
            ApiError::Unprocessable(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(json!({ "error": message }))).into_response()
    }
}

impl From<curvegcn::Error> for ApiError {
    fn from(e: curvegcn::Error) -> Self {
        ApiError::Internal(e.to_string())
    }
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::Unprocessable(format!("malformed body: {e}")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateRequest {
    /// Base64 PNG.
    image: String,
    /// Ground-truth polygon in pixel coordinates of the image.
    #[serde(default)]
    gt_polygon: Option<Vec<[f64; 2]>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorrectRequest {
    node: usize,
    /// Normalized `[0, 1]` coordinates.
    new_pos: [f64; 2],
}

#[derive(Serialize)]
struct SessionView {
    session_id: String,
    curve: Vec<[f64; 2]>,
    clicks: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    iou: Option<f64>,
}

fn view(id: &str, s: &Session, k: usize) -> Result<SessionView, ApiError> {
    let iou = match &s.gt {
        Some(gt) => Some(curve_iou(&s.curve, k, &gt.mask)?),
        None => None,
    };
    Ok(SessionView {
        session_id: id.to_string(),
        curve: s.curve.points().iter().map(|p| [p.x, p.y]).collect(),
        clicks: s.clicks,
        iou,
    })
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Json<SessionView>, ApiError> {
    let loaded = state.model()?.clone();
    let req: CreateRequest = parse_body(&body)?;
    let png = base64::engine::general_purpose::STANDARD
        .decode(req.image.trim())
        .map_err(|e| ApiError::Unprocessable(format!("image is not base64: {e}")))?;
    let img = decode_png(&png).map_err(|e| ApiError::Unprocessable(format!("image is not a PNG: {e}")))?;
    let (w, h) = img.dimensions();
    let gt = match req.gt_polygon {
        Some(poly) => {
            if poly.len() < 3 || poly.iter().flatten().any(|v| !v.is_finite()) {
                return Err(ApiError::Unprocessable("gt_polygon needs at least 3 finite vertices".into()));
            }
            let px: Vec<Point2> = poly.iter().map(|[x, y]| Point2::new(*x, *y)).collect();
            Some(GroundTruth { mask: scanline_fill(&px, h as usize, w as usize) })
        }
        None => None,
    };
    let input = network_input(&image_to_tensor(&img), loaded.model.config().input_size)?;
    let features = loaded.model.extract_features(&input)?;
    let curve = loaded.model.predict_from_features(&features)?.last().clone();
    let session = Session { features, curve, clicks: 0, gt, last_used: Instant::now() };
    let id = uuid::Uuid::new_v4().simple().to_string();
    let out = view(&id, &session, loaded.model.config().k_samples)?;
    state.sessions.lock().expect("session store poisoned").insert(id, session);
    Ok(Json(out))
}

async fn correct(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let loaded = state.model()?.clone();
    let handle = state.session(&id)?;
    let req: CorrectRequest = parse_body(&body)?;
    let mut s = handle.lock().expect("session poisoned");
    let n = s.curve.len();
    if req.node >= n {
        return Err(ApiError::Unprocessable(format!("node {} out of range for {n} control points", req.node)));
    }
    if !req.new_pos.iter().all(|v| v.is_finite()) {
        return Err(ApiError::Unprocessable("new_pos must be finite".into()));
    }
    let corr = Correction::new(s.curve.points(), req.node, Point2::new(req.new_pos[0], req.new_pos[1]))?;
    s.curve = match &loaded.interactive {
        Some(im) => masked_predict(im, &s.features.map, &s.curve, &corr)?,
        None => pin_only(&s.curve, &corr)?,
    };
    // a zero-shift drop is still a click
    s.clicks += 1;
    s.last_used = Instant::now();
    Ok(Json(view(&id, &s, loaded.model.config().k_samples)?))
}

async fn reset(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let loaded = state.model()?.clone();
    let handle = state.session(&id)?;
    let mut s = handle.lock().expect("session poisoned");
    s.curve = loaded.model.predict_from_features(&s.features)?.last().clone();
    s.clicks = 0;
    s.last_used = Instant::now();
    Ok(Json(view(&id, &s, loaded.model.config().k_samples)?))
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let loaded = state.model()?.clone();
    let handle = state.session(&id)?;
    let mut s = handle.lock().expect("session poisoned");
    s.last_used = Instant::now();
    Ok(Json(view(&id, &s, loaded.model.config().k_samples)?))
}

async fn delete_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    let removed = state.sessions.lock().expect("session store poisoned").sessions.remove(&id);
    match removed {
        Some(_) => Ok(StatusCode::NO_CONTENT),
        None => Err(ApiError::UnknownSession(id)),
    }
}

async fn model_info(State(state): State<AppState>) -> Result<Json<serde_json::Value>, ApiError> {
    let loaded = state.model()?;
    let cfg = loaded.model.config();
    Ok(Json(json!({
        "n_points": cfg.n_points,
        "curve_kind": cfg.curve_kind.as_str(),
        "iterations": cfg.iterations,
        "checkpoint_hash": loaded.hash,
        "interactive": loaded.interactive.is_some(),
    })))
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}", get(get_session).delete(delete_session))
        .route("/session/{id}/correct", post(correct))
        .route("/session/{id}/reset", post(reset))
        .route("/model/info", get(model_info))
        .with_state(state)
}
