//! HTTP/JSON routes. Every mutating route performs exactly one engine
//! command under the session's lock and persists the result before
//! answering.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path as FsPath, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use eccola_deploy::engine::{Actor, AuditEvent, ScoresAck, SessionStatus, SubmissionAck};
use eccola_deploy::metrics::PriorityTable;
use eccola_deploy::model::{
    CardId, Phase, SessionConfig, SprintRecord, TokenAllocation, TriggerCategory, TriggerId,
    TriggerStatus, VerdictOutcome,
};
use eccola_deploy::persistence::{load_session, save_session};
use eccola_deploy::picture::{render_svg, DeltaReport};
use eccola_deploy::{
    ChartModel, Clock, Deck, Error, ErrorClass, RenderConfig, RenderMode, Session, SessionId,
    Stakeholder, StakeholderId,
};
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::auth::{attach_token, token_digest, TokenIssuer};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub http_status: u16,
    pub machine_code: String,
    pub human_message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        ApiError {
            http_status: status.as_u16(),
            machine_code: code.to_string(),
            human_message: message.into(),
        }
    }

    fn unauthorized() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "Unauthorized",
            "missing or unknown bearer token",
        )
    }

    fn unknown_session(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "UnknownSession", format!("no session {id:?}"))
    }
}

pub fn status_for(class: ErrorClass) -> StatusCode {
    match class {
        ErrorClass::Validation => StatusCode::BAD_REQUEST,
        ErrorClass::Forbidden => StatusCode::FORBIDDEN,
        ErrorClass::NotFound => StatusCode::NOT_FOUND,
        ErrorClass::Conflict => StatusCode::CONFLICT,
        ErrorClass::Storage => StatusCode::INTERNAL_SERVER_ERROR,
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        ApiError::new(status_for(e.class()), e.machine_code(), e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::new(StatusCode::BAD_REQUEST, "MalformedRequest", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;
type SessionSlot = Arc<Mutex<Session>>;

/// Shared server state: sessions by id, each behind its own lock so that
/// commands on one session are serialized while different sessions proceed
/// in parallel.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<String, SessionSlot>>>,
    storage_dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    issuer: Arc<dyn TokenIssuer>,
}

impl AppState {
    /// In-memory state; nothing is written to disk.
    pub fn ephemeral(clock: Arc<dyn Clock>, issuer: Arc<dyn TokenIssuer>) -> Self {
        AppState {
            sessions: Arc::default(),
            storage_dir: None,
            clock,
            issuer,
        }
    }

    /// State backed by `dir`: existing `*.json` session files are loaded
    /// and every accepted command rewrites its session file.
    pub fn with_storage(
        dir: &FsPath,
        clock: Arc<dyn Clock>,
        issuer: Arc<dyn TokenIssuer>,
    ) -> eccola_deploy::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let session = load_session(&path, clock.clone())?;
                let id = session.state().session_id.to_string();
                sessions.insert(id, Arc::new(Mutex::new(session)));
            }
        }
        Ok(AppState {
            sessions: Arc::new(RwLock::new(sessions)),
            storage_dir: Some(dir.to_path_buf()),
            clock,
            issuer,
        })
    }

    pub fn session_path(&self, id: &str) -> Option<PathBuf> {
        self.storage_dir.as_ref().map(|d| d.join(format!("{id}.json")))
    }

    fn slot(&self, id: &str) -> ApiResult<SessionSlot> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_session(id))
    }

    /// Current copy of a session, for inspection.
    pub async fn snapshot(&self, id: &str) -> Option<Session> {
        let slot = self.slot(id).ok()?;
        let session = slot.lock().await;
        Some(session.clone())
    }

    fn persist(&self, session: &Session) -> eccola_deploy::Result<()> {
        match self.session_path(session.state().session_id.as_str()) {
            Some(path) => save_session(session, &path),
            None => Ok(()),
        }
    }
}

fn bearer(headers: &HeaderMap) -> Option<&str> {
    headers
        .get(header::AUTHORIZATION)?
        .to_str()
        .ok()?
        .strip_prefix("Bearer ")
}

fn authenticate(session: &Session, headers: &HeaderMap) -> ApiResult<Actor> {
    let token = bearer(headers).ok_or_else(ApiError::unauthorized)?;
    session
        .stakeholder_by_token_digest(&token_digest(token))
        .map(|s| Actor::Stakeholder(s.stakeholder_id.clone()))
        .ok_or_else(ApiError::unauthorized)
}

/// Runs one engine command as the caller and saves the session. A failed
/// command or a failed save leaves the stored session unchanged.
async fn command<T>(
    state: &AppState,
    id: &str,
    headers: &HeaderMap,
    op: impl FnOnce(&mut Session, &Actor) -> eccola_deploy::Result<T>,
) -> ApiResult<T> {
    let slot = state.slot(id)?;
    let mut guard = slot.lock().await;
    let actor = authenticate(&guard, headers)?;
    let mut next = guard.clone();
    let out = op(&mut next, &actor)?;
    state.persist(&next)?;
    *guard = next;
    Ok(out)
}

async fn query<T>(
    state: &AppState,
    id: &str,
    headers: &HeaderMap,
    op: impl FnOnce(&Session) -> eccola_deploy::Result<T>,
) -> ApiResult<T> {
    let slot = state.slot(id)?;
    let guard = slot.lock().await;
    authenticate(&guard, headers)?;
    Ok(op(&guard)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewStakeholder {
    pub stakeholder_id: StakeholderId,
    pub display_name: String,
    pub role_label: String,
    #[serde(default = "yes")]
    pub required: bool,
    #[serde(default)]
    pub facilitator: bool,
}

fn yes() -> bool {
    true
}

impl NewStakeholder {
    pub fn into_stakeholder(self) -> Stakeholder {
        Stakeholder {
            stakeholder_id: self.stakeholder_id,
            display_name: self.display_name,
            role_label: self.role_label,
            required: self.required,
            facilitator: self.facilitator,
            token_digest: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub session_id: SessionId,
    pub stakeholders: Vec<NewStakeholder>,
    #[serde(default)]
    pub deck: Option<Deck>,
    #[serde(default)]
    pub config: SessionConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Created {
    pub status: SessionStatus,
    /// Plain bearer tokens, shown once.
    pub tokens: BTreeMap<StakeholderId, String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Registered {
    pub stakeholder_id: StakeholderId,
    pub token: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenRound {
    #[serde(default)]
    pub trigger_ref: Option<TriggerId>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundOpened {
    pub round_index: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllocationBody {
    pub tokens: BTreeMap<CardId, i64>,
    #[serde(default)]
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterTrigger {
    #[serde(default)]
    pub trigger_id: Option<TriggerId>,
    pub description: String,
    pub category: TriggerCategory,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TriggerView {
    pub trigger_id: TriggerId,
    pub status: TriggerStatus,
    pub phase: Phase,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssessmentOpened {
    pub assessment_index: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoresBody {
    pub scores: BTreeMap<CardId, i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerdictBody {
    pub outcome: VerdictOutcome,
    pub rationale: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseView {
    pub phase: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PictureKindParam {
    #[default]
    Target,
    Outcome,
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PictureQuery {
    #[serde(default)]
    pub kind: PictureKindParam,
    #[serde(default)]
    pub mode: RenderMode,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(status))
        .route("/sessions/{id}/stakeholders", post(add_stakeholder))
        .route("/sessions/{id}/rounds", post(open_round))
        .route(
            "/sessions/{id}/rounds/{n}/allocations/{stakeholder}",
            put(submit_allocation),
        )
        .route("/sessions/{id}/rounds/{n}/close", post(close_round))
        .route("/sessions/{id}/triggers", post(register_trigger))
        .route("/sessions/{id}/triggers/{t}/fire", post(fire_trigger))
        .route("/sessions/{id}/sprints", post(record_sprint))
        .route("/sessions/{id}/assessments", post(begin_assessment))
        .route("/sessions/{id}/scores/{stakeholder}", put(submit_scores))
        .route("/sessions/{id}/verdict", post(record_verdict))
        .route("/sessions/{id}/picture", get(picture_json))
        .route("/sessions/{id}/picture.svg", get(picture_svg))
        .route("/sessions/{id}/delta", get(delta))
        .route("/sessions/{id}/audit", get(audit))
        .with_state(state)
}

/// Opens a session. Needs no token: the response hands out the tokens of
/// every initial stakeholder.
async fn create_session(
    State(state): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> ApiResult<(StatusCode, Json<Created>)> {
    let Json(req) = body?;
    let id = req.session_id.to_string();
    let valid_id = !id.is_empty()
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
    if !valid_id {
        return Err(Error::OutOfRange(format!("session id {id:?} must be [A-Za-z0-9._-]+")).into());
    }
    let mut tokens = BTreeMap::new();
    let stakeholders = req
        .stakeholders
        .into_iter()
        .map(|new| {
            let mut s = new.into_stakeholder();
            tokens.insert(s.stakeholder_id.clone(), attach_token(&mut s, state.issuer.as_ref()));
            s
        })
        .collect();
    let session = Session::create(
        req.session_id,
        req.deck.unwrap_or_else(Deck::eccola),
        stakeholders,
        req.config,
        state.clock.clone(),
    )?;
    let status = session.status();
    let mut sessions = state.sessions.write().expect("session map poisoned");
    if sessions.contains_key(&id) {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "SessionExists",
            format!("session {id:?} already exists"),
        ));
    }
    state.persist(&session)?;
    sessions.insert(id, Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(Created { status, tokens })))
}

async fn status(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Json<SessionStatus>> {
    query(&state, &id, &headers, |s| Ok(s.status())).await.map(Json)
}

async fn add_stakeholder(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<NewStakeholder>, JsonRejection>,
) -> ApiResult<Json<Registered>> {
    let Json(new) = body?;
    let mut stakeholder = new.into_stakeholder();
    let token = attach_token(&mut stakeholder, state.issuer.as_ref());
    let stakeholder_id = stakeholder.stakeholder_id.clone();
    command(&state, &id, &headers, |s, actor| s.add_stakeholder(actor, stakeholder)).await?;
    Ok(Json(Registered {
        stakeholder_id,
        token,
    }))
}

async fn open_round(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Option<Json<OpenRound>>,
) -> ApiResult<Json<RoundOpened>> {
    let req = body.map(|Json(b)| b).unwrap_or_default();
    let round_index =
        command(&state, &id, &headers, |s, actor| s.open_round(actor, req.trigger_ref)).await?;
    Ok(Json(RoundOpened { round_index }))
}

async fn submit_allocation(
    State(state): State<AppState>,
    Path((id, round, stakeholder)): Path<(String, u32, String)>,
    headers: HeaderMap,
    body: Result<Json<AllocationBody>, JsonRejection>,
) -> ApiResult<Json<SubmissionAck>> {
    let Json(req) = body?;
    let allocation = TokenAllocation {
        stakeholder_id: StakeholderId::new(stakeholder),
        tokens: req.tokens,
        rationale: req.rationale,
    };
    command(&state, &id, &headers, |s, actor| s.submit_allocation(actor, round, allocation))
        .await
        .map(Json)
}

async fn close_round(
    State(state): State<AppState>,
    Path((id, round)): Path<(String, u32)>,
    headers: HeaderMap,
) -> ApiResult<Json<PriorityTable>> {
    command(&state, &id, &headers, |s, actor| s.close_round(actor, round))
        .await
        .map(Json)
}

async fn register_trigger(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<RegisterTrigger>, JsonRejection>,
) -> ApiResult<Json<TriggerView>> {
    let Json(req) = body?;
    command(&state, &id, &headers, |s, actor| {
        let trigger_id = s.register_trigger(actor, req.trigger_id, req.description, req.category)?;
        Ok(TriggerView {
            trigger_id,
            status: TriggerStatus::Registered,
            phase: s.phase(),
        })
    })
    .await
    .map(Json)
}

async fn fire_trigger(
    State(state): State<AppState>,
    Path((id, trigger)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Json<TriggerView>> {
    let trigger_id = TriggerId::new(trigger);
    command(&state, &id, &headers, |s, actor| {
        let status = s.fire_trigger(actor, &trigger_id)?;
        Ok(TriggerView {
            trigger_id: trigger_id.clone(),
            status,
            phase: s.phase(),
        })
    })
    .await
    .map(Json)
}

async fn record_sprint(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<SprintRecord>, JsonRejection>,
) -> ApiResult<StatusCode> {
    let Json(sprint) = body?;
    command(&state, &id, &headers, |s, actor| s.record_sprint(actor, sprint)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn begin_assessment(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Json<AssessmentOpened>> {
    let assessment_index = command(&state, &id, &headers, |s, actor| s.begin_assessment(actor)).await?;
    Ok(Json(AssessmentOpened { assessment_index }))
}

async fn submit_scores(
    State(state): State<AppState>,
    Path((id, stakeholder)): Path<(String, String)>,
    headers: HeaderMap,
    body: Result<Json<ScoresBody>, JsonRejection>,
) -> ApiResult<Json<ScoresAck>> {
    let Json(req) = body?;
    let stakeholder = StakeholderId::new(stakeholder);
    command(&state, &id, &headers, |s, actor| s.submit_scores(actor, &stakeholder, &req.scores))
        .await
        .map(Json)
}

async fn record_verdict(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Result<Json<VerdictBody>, JsonRejection>,
) -> ApiResult<Json<PhaseView>> {
    let Json(req) = body?;
    let phase = command(&state, &id, &headers, |s, actor| {
        s.record_verdict(actor, req.outcome, req.rationale)
    })
    .await?;
    Ok(Json(PhaseView { phase }))
}

fn pick_picture(s: &Session, q: PictureQuery) -> eccola_deploy::Result<eccola_deploy::SituationalPicture> {
    match q.kind {
        PictureKindParam::Target => s.target_picture().cloned(),
        PictureKindParam::Outcome => s.outcome_picture(q.mode),
    }
}

async fn picture_json(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PictureQuery>,
    headers: HeaderMap,
) -> ApiResult<Json<ChartModel>> {
    query(&state, &id, &headers, |s| {
        pick_picture(s, q).map(|p| ChartModel::from_picture(&p))
    })
    .await
    .map(Json)
}

async fn picture_svg(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<PictureQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let svg = query(&state, &id, &headers, |s| {
        pick_picture(s, q).map(|p| render_svg(&p, &RenderConfig::default()))
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/svg+xml")], svg).into_response())
}

async fn delta(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Json<DeltaReport>> {
    query(&state, &id, &headers, |s| s.delta_report()).await.map(Json)
}

async fn audit(
    State(state): State<AppState>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Json<Vec<AuditEvent>>> {
    query(&state, &id, &headers, |s| Ok(s.journal().events().to_vec()))
        .await
        .map(Json)
}

/// Binds `address` and serves until interrupted.
pub async fn serve(address: &str, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(address).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
