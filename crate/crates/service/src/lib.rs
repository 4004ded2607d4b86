//! HTTP front end over the core crate. Request and response bodies use the
//! same JSON forms as the files on disk. Sessions live in memory, each
//! behind its own lock so that actions on one session apply in arrival
//! order while different sessions proceed independently.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, FixedOffset, Local};
use procline_core::line::{build_process_line, cut_at_abstraction, diff_to_core, ProcessLine};
use procline_core::persist::{parse_json, ProcessBase};
use procline_core::reflection::{
    compute_delta, discover_process, import_log_xml, parse_event_log, refine_process, EventLog, JustificationLedger,
    RefinementDecision, DEFAULT_THETA,
};
use procline_core::selection::{select_top_k, ProjectCharacteristic};
use procline_core::session::{load_session, save_session, Session, SessionAction};
use procline_core::{Error, ProcessModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

/// Variable holding the listen address.
pub const LISTEN_VAR: &str = "PROCLINE_LISTEN";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";

pub struct AppState {
    base: ProcessBase,
    line: ProcessLine,
    sessions: RwLock<HashMap<String, Arc<Mutex<Session>>>>,
    snapshot_dir: Option<PathBuf>,
}

pub type SharedState = Arc<AppState>;

impl AppState {
    /// Restores any session snapshots found in `snapshot_dir`.
    pub fn new(base: ProcessBase, snapshot_dir: Option<PathBuf>) -> procline_core::Result<SharedState> {
        base.validate()?;
        let line = build_process_line(&base.variants)?;
        let mut sessions = HashMap::new();
        if let Some(dir) = &snapshot_dir {
            std::fs::create_dir_all(dir)?;
            for entry in std::fs::read_dir(dir)? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let session = load_session(&path)?;
                    sessions.insert(session.id.clone(), Arc::new(Mutex::new(session)));
                }
            }
        }
        Ok(Arc::new(AppState { base, line, sessions: RwLock::new(sessions), snapshot_dir }))
    }

    fn session(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound { what: "session", name: id.to_owned() }.into())
    }

    /// Writes every session to the snapshot directory; returns how many.
    pub async fn snapshot(&self) -> procline_core::Result<usize> {
        let Some(dir) = &self.snapshot_dir else { return Ok(0) };
        let sessions: Vec<Arc<Mutex<Session>>> =
            self.sessions.read().expect("session map lock").values().cloned().collect();
        for session in &sessions {
            let session = session.lock().await;
            save_session(&session, &snapshot_path(dir, &session.id))?;
        }
        Ok(sessions.len())
    }
}

fn snapshot_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.json"))
}

pub fn router(state: SharedState) -> Router {
    Router::new()
        .route("/variants", get(variants))
        .route("/selection", post(selection))
        .route("/line/cut", get(line_cut))
        .route("/line/diff", get(line_diff))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/actions", post(session_action))
        .route("/logs", post(logs))
        .route("/discovery", post(discovery))
        .route("/delta", post(delta))
        .route("/refinement/decisions", post(refinement))
        .with_state(state)
}

/// A core error rendered as `{"error": {"code", "message"}}`. Guarded
/// removals get 409 and carry the target so a client can ask for approval.
#[derive(Debug)]
pub struct ApiError(Error);

impl From<Error> for ApiError {
    fn from(err: Error) -> Self {
        ApiError(err)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = match &self.0 {
            Error::ApprovalRequired { .. } | Error::Duplicate { .. } => StatusCode::CONFLICT,
            Error::NotFound { .. } => StatusCode::NOT_FOUND,
            Error::Json { .. }
            | Error::Parse { .. }
            | Error::Xml(_)
            | Error::Csv { .. }
            | Error::MigrationRequired { .. } => StatusCode::BAD_REQUEST,
            Error::Io(_) => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let mut body = json!({ "code": self.0.code(), "message": self.0.to_string() });
        if let Error::ApprovalRequired { target } = &self.0 {
            body["target"] = json!(target);
        }
        (status, Json(json!({ "error": body }))).into_response()
    }
}

type ApiResult<T = Json<Value>> = Result<T, ApiError>;

fn reply<T: Serialize>(value: &T) -> ApiResult {
    Ok(Json(serde_json::to_value(value).expect("response types serialize")))
}

/// Bodies are parsed by the core so that errors carry line and column.
fn body<T: DeserializeOwned>(text: &str) -> Result<T, ApiError> {
    Ok(parse_json(text, None)?)
}

fn now() -> DateTime<FixedOffset> {
    Local::now().fixed_offset()
}

#[derive(Serialize)]
struct SessionView<'a> {
    #[serde(flatten)]
    session: &'a Session,
    consistency: Vec<procline_core::tailoring::ConsistencyViolation>,
}

fn session_view(session: &Session) -> ApiResult {
    reply(&SessionView { session, consistency: session.consistency() })
}

async fn variants(State(state): State<SharedState>) -> ApiResult {
    reply(&state.base)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum SelectionRequest {
    Rank(RankRequest),
    Choose(ChooseRequest),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RankRequest {
    characteristics: Vec<ProjectCharacteristic>,
    k: usize,
    #[serde(default = "yes")]
    ordinal_distance: bool,
}

/// Picks a variant of a session's cut.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChooseRequest {
    session: String,
    variant_id: String,
    at: Option<DateTime<FixedOffset>>,
}

fn yes() -> bool {
    true
}

async fn selection(State(state): State<SharedState>, text: String) -> ApiResult {
    match body::<SelectionRequest>(&text)? {
        SelectionRequest::Rank(r) => {
            reply(&select_top_k(&state.base.variants, &r.characteristics, r.k, r.ordinal_distance)?)
        }
        SelectionRequest::Choose(c) => {
            let action = SessionAction::Select { variant_id: c.variant_id };
            apply(&state, &c.session, action, c.at).await
        }
    }
}

#[derive(Deserialize)]
struct LevelQuery {
    level: Option<String>,
}

async fn line_cut(State(state): State<SharedState>, Query(q): Query<LevelQuery>) -> ApiResult {
    let raw = q.level.ok_or_else(|| Error::InvalidQuery("`level` is required".into()))?;
    let level: u32 =
        raw.parse().map_err(|_| Error::InvalidQuery(format!("`level` must be a positive integer, got `{raw}`")))?;
    reply(&cut_at_abstraction(&state.line, level)?)
}

#[derive(Deserialize)]
struct VariantQuery {
    variant: Option<String>,
}

async fn line_diff(State(state): State<SharedState>, Query(q): Query<VariantQuery>) -> ApiResult {
    let variant = q.variant.ok_or_else(|| Error::InvalidQuery("`variant` is required".into()))?;
    reply(&diff_to_core(&state.line, &variant)?)
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    id: Option<String>,
}

fn valid_session_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

async fn create_session(State(state): State<SharedState>, text: String) -> ApiResult<(StatusCode, Json<Value>)> {
    let request: CreateSession = if text.trim().is_empty() { CreateSession::default() } else { body(&text)? };
    let mut sessions = state.sessions.write().expect("session map lock");
    let id = match request.id {
        Some(id) if !valid_session_id(&id) => {
            return Err(Error::InvalidQuery(format!("session id `{id}` must be 1-64 of [A-Za-z0-9_-]")).into())
        }
        Some(id) if sessions.contains_key(&id) => return Err(Error::Duplicate { what: "session", name: id }.into()),
        Some(id) => id,
        None => (1..).map(|n| format!("s{n}")).find(|id| !sessions.contains_key(id)).expect("unbounded"),
    };
    let session = Session::new(&id, state.base.variants.clone());
    let view = session_view(&session)?;
    sessions.insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, view))
}

async fn get_session(State(state): State<SharedState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let session = state.session(&id)?;
    let session = session.lock().await;
    session_view(&session)
}

/// Either a bare action or `{"at": ..., "action": ...}`.
#[derive(Deserialize)]
#[serde(untagged)]
enum ActionRequest {
    Timed { at: DateTime<FixedOffset>, action: SessionAction },
    Bare(SessionAction),
}

async fn apply(state: &AppState, id: &str, action: SessionAction, at: Option<DateTime<FixedOffset>>) -> ApiResult {
    let session = state.session(id)?;
    let mut session = session.lock().await;
    let next = session.apply(action, at.unwrap_or_else(now))?;
    *session = next;
    session_view(&session)
}

async fn session_action(State(state): State<SharedState>, UrlPath(id): UrlPath<String>, text: String) -> ApiResult {
    // untagged errors say nothing useful; re-parse as a bare action for a
    // positioned message
    let (action, at) = match body::<ActionRequest>(&text) {
        Ok(ActionRequest::Timed { at, action }) => (action, Some(at)),
        Ok(ActionRequest::Bare(action)) => (action, None),
        Err(_) => (body::<SessionAction>(&text)?, None),
    };
    apply(&state, &id, action, at).await
}

/// Text, JSON or XML, told apart by the first non-blank character.
fn read_log(text: &str) -> Result<EventLog, ApiError> {
    Ok(match text.trim_start().chars().next() {
        Some('<') => import_log_xml(text)?,
        Some('{') => parse_json(text, None)?,
        _ => parse_event_log(text)?,
    })
}

async fn logs(text: String) -> ApiResult {
    let log = read_log(&text)?;
    reply(&json!({ "log": log, "warnings": log.warnings() }))
}

async fn discovery(text: String) -> ApiResult {
    reply(&discover_process(&read_log(&text)?))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DeltaRequest {
    prescriptive: ProcessModel,
    log: EventLog,
}

async fn delta(text: String) -> ApiResult {
    let request: DeltaRequest = body(&text)?;
    request.prescriptive.ensure_valid()?;
    let performed = discover_process(&request.log);
    reply(&compute_delta(&request.prescriptive, &performed, &request.log))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RefinementRequest {
    Session(SessionRefinement),
    Standalone(StandaloneRefinement),
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

/// Refines a session's working process against its ingested log.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRefinement {
    session: String,
    decisions: Vec<RefinementDecision>,
    #[serde(default = "default_theta")]
    theta: f64,
    at: Option<DateTime<FixedOffset>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StandaloneRefinement {
    prescriptive: ProcessModel,
    log: EventLog,
    decisions: Vec<RefinementDecision>,
    #[serde(default = "default_theta")]
    theta: f64,
    at: Option<DateTime<FixedOffset>>,
}

async fn refinement(State(state): State<SharedState>, text: String) -> ApiResult {
    match body::<RefinementRequest>(&text)? {
        RefinementRequest::Session(r) => {
            let action = SessionAction::Refine { decisions: r.decisions, theta: r.theta };
            apply(&state, &r.session, action, r.at).await
        }
        RefinementRequest::Standalone(r) => {
            r.prescriptive.ensure_valid()?;
            let performed = discover_process(&r.log);
            let delta = compute_delta(&r.prescriptive, &performed, &r.log);
            let mut ledger = JustificationLedger::new();
            let refinement = refine_process(
                &r.prescriptive,
                &performed,
                &delta,
                &r.decisions,
                r.theta,
                &mut ledger,
                r.at.unwrap_or_else(now),
            )?;
            let remaining = compute_delta(&refinement.model, &performed, &r.log);
            reply(&json!({
                "model": refinement.model,
                "suggestions": refinement.suggestions,
                "ledger": ledger,
                "delta": remaining,
            }))
        }
    }
}
