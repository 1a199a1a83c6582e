//! HTTP wire protocol for the operator console and the experimenter.
//!
//! Every mutation goes through one mutex, so dispatches and records are
//! strictly ordered even with several clients connected.

use std::sync::{Arc, Mutex};

use axum::extract::{Query, Request, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use super::log::{now_ms, PersistentSession};
use super::report::{alias_report, deanonymize_report};
use super::session::Dispatch;
use super::EvalError;

/// Header carrying the experimenter token for report access.
pub const TOKEN_HEADER: &str = "x-experimenter-token";

struct AppState {
    session: Mutex<PersistentSession>,
    token: String,
}

type Shared = Arc<AppState>;

pub struct ApiError(StatusCode, &'static str, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1, "message": self.2 }))).into_response()
    }
}

impl From<EvalError> for ApiError {
    fn from(e: EvalError) -> Self {
        let status = match &e {
            EvalError::UnknownQueue { .. } => StatusCode::NOT_FOUND,
            EvalError::OutOfOrderRecord(_) | EvalError::DuplicateRecord { .. } => {
                StatusCode::CONFLICT
            }
            EvalError::RubricLengthMismatch { .. } | EvalError::InvalidOutcome(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            EvalError::InvalidConfig(_) | EvalError::IncompleteTrials { .. } => {
                StatusCode::BAD_REQUEST
            }
            EvalError::Log(_) | EvalError::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(status, e.kind(), e.to_string())
    }
}

fn lock(s: &Shared) -> std::sync::MutexGuard<'_, PersistentSession> {
    s.session.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Deserialize)]
struct QueueQuery {
    task: Option<String>,
    group: Option<usize>,
}

async fn next_trial(
    State(s): State<Shared>,
    Query(q): Query<QueueQuery>,
) -> Result<Json<Value>, ApiError> {
    let mut guard = lock(&s);
    let (task, group) = match (q.task, q.group) {
        (Some(t), Some(g)) => (t, g),
        (None, None) => match guard.session().current_queue() {
            Some(tg) => tg,
            None => return Ok(Json(json!({ "session_complete": true }))),
        },
        _ => {
            return Err(ApiError(
                StatusCode::BAD_REQUEST,
                "bad_request",
                "give both task and group, or neither".into(),
            ))
        }
    };
    Ok(Json(match guard.next_trial(&task, group)? {
        Dispatch::Trial(t) => serde_json::to_value(t).expect("ticket serializes"),
        Dispatch::GroupComplete { task, group } => {
            json!({ "group_complete": true, "break": true, "task": task, "group": group })
        }
    }))
}

#[derive(Deserialize)]
struct OutcomeBody {
    task: String,
    group: usize,
    alias: String,
    outcomes: Vec<u8>,
}

async fn outcome(
    State(s): State<Shared>,
    Json(b): Json<OutcomeBody>,
) -> Result<Json<Value>, ApiError> {
    let r = lock(&s).record_outcome(&b.task, b.group, &b.alias, &b.outcomes, now_ms())?;
    Ok(Json(
        json!({ "record_id": r.record_id, "trial_index": r.trial_index, "score": r.score }),
    ))
}

async fn progress(State(s): State<Shared>) -> Json<Value> {
    let guard = lock(&s);
    let session = guard.session();
    let queues = session.progress();
    let total: usize = queues.iter().map(|q| q.length).sum();
    Json(json!({
        "queues": queues,
        "recorded": session.records().len(),
        "total": total,
        "complete": session.is_complete(),
        "current": session.current_queue().map(|(task, group)| json!({ "task": task, "group": group })),
    }))
}

async fn session_info(State(s): State<Shared>) -> Json<Value> {
    let guard = lock(&s);
    let cfg = guard.session().config();
    let tasks: Vec<Value> = cfg
        .tasks
        .iter()
        .map(|t| json!({ "id": t.id, "name": t.name, "max_score": t.max_score, "rubric": t.checkpoints }))
        .collect();
    Json(json!({
        "tasks": tasks,
        "groups": guard.session().groups().len(),
        "trials_per_model": cfg.trials_per_model,
        "order": cfg.order,
    }))
}

#[derive(Deserialize)]
struct ReportQuery {
    #[serde(default)]
    deanonymize: bool,
}

fn token_ok(headers: &HeaderMap, token: &str) -> bool {
    let Some(given) = headers.get(TOKEN_HEADER).and_then(|v| v.to_str().ok()) else {
        return false;
    };
    // Length check first, then a comparison that does not stop early.
    given.len() == token.len()
        && given
            .bytes()
            .zip(token.bytes())
            .fold(0u8, |acc, (a, b)| acc | (a ^ b))
            == 0
}

async fn report(
    State(s): State<Shared>,
    headers: HeaderMap,
    Query(q): Query<ReportQuery>,
) -> Result<Json<Value>, ApiError> {
    if !token_ok(&headers, &s.token) {
        return Err(ApiError(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "reports require the experimenter token".into(),
        ));
    }
    let guard = lock(&s);
    let r = if q.deanonymize {
        deanonymize_report(guard.session())
    } else {
        alias_report(guard.session())
    };
    Ok(Json(serde_json::to_value(r).expect("report serializes")))
}

async fn cors(req: Request, next: Next) -> Response {
    let mut resp = if req.method() == Method::OPTIONS {
        StatusCode::NO_CONTENT.into_response()
    } else {
        next.run(req).await
    };
    let h = resp.headers_mut();
    h.insert(
        header::ACCESS_CONTROL_ALLOW_ORIGIN,
        HeaderValue::from_static("*"),
    );
    h.insert(
        header::ACCESS_CONTROL_ALLOW_METHODS,
        HeaderValue::from_static("GET, POST, OPTIONS"),
    );
    h.insert(
        header::ACCESS_CONTROL_ALLOW_HEADERS,
        HeaderValue::from_static("content-type"),
    );
    resp
}

/// Routes: `GET /next-trial`, `POST /outcome`, `GET /progress`,
/// `GET /session`, `GET /report`.
pub fn router(session: PersistentSession, token: String) -> Router {
    let state = Arc::new(AppState {
        session: Mutex::new(session),
        token,
    });
    Router::new()
        .route("/next-trial", get(next_trial))
        .route("/outcome", post(outcome))
        .route("/progress", get(progress))
        .route("/session", get(session_info))
        .route("/report", get(report))
        .layer(middleware::from_fn(cors))
        .with_state(state)
}

/// Serves until the future resolves or ctrl-c arrives.
pub async fn serve(listener: tokio::net::TcpListener, app: Router) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
