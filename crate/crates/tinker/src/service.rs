//! HTTP/JSON API over live sessions and the session store.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex as StdMutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tinker_analysis::{parent_summary, AnalysisError, ParentSummary, UptakeDetector};
use tinker_core::log::LogEntry;
use tinker_core::narrator::Narrator;
use tinker_core::session::{EventPayload, SessionError, SessionKind, SessionStatus};
use tinker_core::store::{find_story, list_stories, Store, StoreError};
use tinker_core::{Condition, Resources, Session, SessionConfig, SessionEvent, SessionLog, SessionState, Turn};
use tokio::sync::Mutex;

/// Milliseconds on the session timeline.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_millis() as u64)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start: u64) -> Self {
        ManualClock(AtomicU64::new(start))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

#[derive(Clone, Debug)]
pub struct SessionLimits {
    pub pause_ms: u64,
    pub idle_timeout_ms: u64,
    pub max_duration_ms: u64,
}

impl Default for SessionLimits {
    fn default() -> Self {
        let base = SessionConfig::new("x", "x", Condition::Structured, 0);
        SessionLimits {
            pause_ms: base.pause_ms,
            idle_timeout_ms: base.idle_timeout_ms,
            max_duration_ms: base.max_duration_ms,
        }
    }
}

type Live = Arc<Mutex<Session>>;

pub struct AppState {
    pub store: Arc<dyn Store>,
    pub resources: Resources,
    pub narrator: Arc<dyn Narrator>,
    pub clock: Arc<dyn Clock>,
    pub auth_token: Option<String>,
    pub limits: SessionLimits,
    live: StdMutex<HashMap<String, Live>>,
    /// Summaries keyed by session, tagged with the log length they cover.
    summaries: StdMutex<HashMap<String, (usize, ParentSummary)>>,
    detector: UptakeDetector,
}

impl AppState {
    pub fn new(store: Arc<dyn Store>, resources: Resources, narrator: Arc<dyn Narrator>, clock: Arc<dyn Clock>) -> Self {
        AppState {
            store,
            resources,
            narrator,
            clock,
            auth_token: None,
            limits: SessionLimits::default(),
            live: StdMutex::new(HashMap::new()),
            summaries: StdMutex::new(HashMap::new()),
            detector: UptakeDetector::default(),
        }
    }

    pub fn with_token(mut self, token: Option<String>) -> Self {
        self.auth_token = token;
        self
    }

    pub fn with_limits(mut self, limits: SessionLimits) -> Self {
        self.limits = limits;
        self
    }

    fn live(&self, id: &str) -> Option<Live> {
        self.live.lock().expect("live map").get(id).cloned()
    }

    fn live_sessions(&self) -> Vec<Live> {
        self.live.lock().expect("live map").values().cloned().collect()
    }

    /// Closes turns whose pause has elapsed and retires sessions that ended.
    pub async fn tick(self: &Arc<Self>) {
        for live in self.live_sessions() {
            let app = self.clone();
            let task = tokio::task::spawn_blocking(move || {
                let mut session = live.blocking_lock();
                if session.state().status != SessionStatus::Active {
                    return;
                }
                let now = app.clock.now_ms().max(session.state().last_event_at);
                match session.finalize(now) {
                    Ok(_) => {}
                    Err(e) => tracing::warn!(session = session.state().session_id.as_str(), "finalize failed: {e}"),
                }
                app.after_change(&mut session);
            });
            if let Err(e) = task.await {
                tracing::error!("tick task failed: {e}");
            }
        }
    }

    /// Saves new records; a finished session gets its story compiled.
    fn after_change(&self, session: &mut Session) {
        if session.state().status == SessionStatus::Finished {
            let at = self.clock.now_ms().max(session.log().last_at().unwrap_or(0));
            if let Err(e) = session.complete(at) {
                tracing::warn!("completing session failed: {e}");
            }
        }
        if let Err(e) = self.store.save(session.log()) {
            tracing::error!(session = session.state().session_id.as_str(), "saving log failed: {e}");
        }
        if !session.state().is_active() && session.state().status != SessionStatus::Finished {
            self.live.lock().expect("live map").remove(&session.state().session_id);
        }
    }

    fn load_log(&self, id: &str) -> Result<SessionLog, ApiError> {
        if let Some(live) = self.live(id) {
            if let Ok(session) = live.try_lock() {
                return Ok(session.log().clone());
            }
        }
        Ok(self.store.load(id)?)
    }

    fn summary(&self, log: &SessionLog) -> Result<ParentSummary, ApiError> {
        let id = log.session_id().to_string();
        if let Some((len, s)) = self.summaries.lock().expect("summary cache").get(&id) {
            if *len == log.len() {
                return Ok(s.clone());
            }
        }
        let summary = parent_summary(log, &self.detector, None)?;
        self.summaries
            .lock()
            .expect("summary cache")
            .insert(id, (log.len(), summary.clone()));
        Ok(summary)
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.code, "message": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let (status, code) = match &e {
            StoreError::UnknownSession(_) => (StatusCode::NOT_FOUND, "UnknownSession"),
            StoreError::UnknownProfile(_) => (StatusCode::NOT_FOUND, "UnknownProfile"),
            StoreError::InvalidId(_) => (StatusCode::BAD_REQUEST, "InvalidId"),
            StoreError::HeaderMismatch(_) | StoreError::Log(_) => (StatusCode::INTERNAL_SERVER_ERROR, "StorageFailure"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        let (status, code) = match &e {
            SessionError::SessionClosed(_) => (StatusCode::CONFLICT, "SessionClosed"),
            SessionError::OutOfOrderEvent { .. } => (StatusCode::CONFLICT, "OutOfOrderEvent"),
            SessionError::Narrator(_) => (StatusCode::BAD_GATEWAY, "ProviderUnavailable"),
            SessionError::ScriptSetIncomplete { .. } | SessionError::ScheduleMismatch { .. } => {
                (StatusCode::INTERNAL_SERVER_ERROR, "ScriptSetIncomplete")
            }
            SessionError::IncompleteSession { .. } => (StatusCode::CONFLICT, "IncompleteSession"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "SessionError"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::SummaryUnavailable(_) => ApiError::new(StatusCode::CONFLICT, "SummaryUnavailable", e.to_string()),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "AnalysisFailure", other.to_string()),
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateSession {
    pub profile_id: String,
    pub condition: Condition,
    #[serde(default)]
    pub kind: SessionKind,
}

/// A child or client input. Time is stamped by the server.
#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventBody {
    Utterance { text: String },
    Scan { payload: String },
    EndOfSpeech,
    AgentSpeechEnded,
}

impl From<EventBody> for EventPayload {
    fn from(b: EventBody) -> Self {
        match b {
            EventBody::Utterance { text } => EventPayload::Utterance { text },
            EventBody::Scan { payload } => EventPayload::Scan { payload },
            EventBody::EndOfSpeech => EventPayload::EndOfSpeech,
            EventBody::AgentSpeechEnded => EventPayload::AgentSpeechEnded,
        }
    }
}

/// New log entries plus the state they leave behind.
#[derive(Debug, Serialize, Deserialize)]
pub struct Effects {
    pub session_id: String,
    pub next: u64,
    pub entries: Vec<LogEntry>,
    pub state: SessionState,
}

fn effects(session: &Session, after: u64) -> Effects {
    let entries = session.log().entries()[(after as usize).min(session.log().len())..].to_vec();
    Effects {
        session_id: session.state().session_id.clone(),
        next: session.log().len() as u64,
        entries,
        state: session.state().clone(),
    }
}

#[derive(Debug, Deserialize)]
pub struct AfterQuery {
    #[serde(default)]
    pub after: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Transcript {
    pub session_id: String,
    pub status: String,
    pub turns: Vec<Turn>,
}

async fn health(State(app): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "status": "ok",
        "narrator": app.narrator.name(),
        "live_sessions": app.live_sessions().len(),
    }))
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    Json(body): Json<CreateSession>,
) -> Result<(StatusCode, Json<Effects>), ApiError> {
    if body.profile_id.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "InvalidProfile", "profile_id is empty"));
    }
    let id = uuid::Uuid::new_v4().simple().to_string();
    let mut config = SessionConfig::new(&id, &body.profile_id, body.condition, app.clock.now_ms());
    config.kind = body.kind;
    config.pause_ms = app.limits.pause_ms;
    config.idle_timeout_ms = app.limits.idle_timeout_ms;
    config.max_duration_ms = app.limits.max_duration_ms;
    let worker = app.clone();
    let session = tokio::task::spawn_blocking(move || {
        let (mut session, _) = Session::start(config, worker.resources.clone(), worker.narrator.clone())?;
        worker.after_change(&mut session);
        Ok::<_, ApiError>(session)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    let out = effects(&session, 0);
    app.live
        .lock()
        .expect("live map")
        .insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(out)))
}

fn not_live(id: &str) -> ApiError {
    ApiError::new(
        StatusCode::CONFLICT,
        "SessionClosed",
        format!("session {id:?} is not open on this server"),
    )
}

async fn post_event(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<AfterQuery>,
    Json(body): Json<EventBody>,
) -> Result<Json<Effects>, ApiError> {
    let live = match app.live(&id) {
        Some(l) => l,
        None => {
            app.store.load(&id)?;
            return Err(not_live(&id));
        }
    };
    let worker = app.clone();
    let out = tokio::task::spawn_blocking(move || {
        let mut session = live.blocking_lock();
        let at = worker.clock.now_ms().max(session.state().last_event_at);
        let result = session.ingest(SessionEvent { at, payload: body.into() });
        worker.after_change(&mut session);
        result.map(|_| effects(&session, q.after))
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(Json(out))
}

async fn poll_effects(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<AfterQuery>,
) -> Result<Json<Effects>, ApiError> {
    match app.live(&id) {
        Some(live) => Ok(Json(effects(&*live.lock().await, q.after))),
        None => {
            let log = app.store.load(&id)?;
            let session = Session::replay(&log, app.resources.clone())
                .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "ReplayFailed", e.to_string()))?;
            Ok(Json(effects(&session, q.after)))
        }
    }
}

async fn transcript(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Transcript>, ApiError> {
    let log = match app.live(&id) {
        Some(live) => live.lock().await.log().clone(),
        None => app.load_log(&id)?,
    };
    let status = if log.is_closed() {
        "closed"
    } else if log.is_abandoned() {
        "abandoned"
    } else {
        "in-progress"
    };
    Ok(Json(Transcript {
        session_id: id,
        status: status.into(),
        turns: log.turns().cloned().collect(),
    }))
}

async fn summary(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<ParentSummary>, ApiError> {
    let log = match app.live(&id) {
        Some(live) => live.lock().await.log().clone(),
        None => app.load_log(&id)?,
    };
    Ok(Json(app.summary(&log)?))
}

async fn stories(State(app): State<Arc<AppState>>, Path(profile): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let store = app.store.clone();
    let list = tokio::task::spawn_blocking(move || list_stories(&*store, &profile))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    Ok(Json(json!({ "stories": list })))
}

async fn story(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    let store = app.store.clone();
    let found = tokio::task::spawn_blocking(move || find_story(&*store, &id))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", e.to_string()))??;
    match found {
        Some(s) => Ok(Json(serde_json::to_value(s).expect("story serializes"))),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, "UnknownStory", "no such story")),
    }
}

async fn require_token(State(app): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    if let Some(token) = &app.auth_token {
        let ok = req
            .headers()
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .is_some_and(|t| t == token);
        if !ok {
            return ApiError::new(StatusCode::UNAUTHORIZED, "Unauthorized", "missing or wrong bearer token").into_response();
        }
    }
    next.run(req).await
}

pub fn router(app: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/events", post(post_event))
        .route("/sessions/{id}/effects", get(poll_effects))
        .route("/sessions/{id}/transcript", get(transcript))
        .route("/sessions/{id}/summary", get(summary))
        .route("/profiles/{profile}/stories", get(stories))
        .route("/stories/{id}", get(story))
        .route_layer(middleware::from_fn_with_state(app.clone(), require_token));
    Router::new()
        .route("/health", get(health))
        .nest("/api", api)
        .with_state(app)
}

/// Periodically closes turns after the pause; runs until the app is dropped
/// by every other owner.
pub fn spawn_ticker(app: Arc<AppState>, every: Duration) -> tokio::task::JoinHandle<()> {
    let weak = Arc::downgrade(&app);
    drop(app);
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(every);
        interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            interval.tick().await;
            match weak.upgrade() {
                Some(app) => app.tick().await,
                None => break,
            }
        }
    })
}
