use alice_core::morph::{ArchState, GlobalNode};
use alice_core::session::{
    ExplanationRecord, Phase, QueryTicket, RoundMetrics, Session, SessionConfig, TicketOutcome,
};
use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{ApiError, AppState};

type ApiResult<T> = Result<Json<T>, ApiError>;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/sessions", post(create_session).get(list_sessions))
        .route("/sessions/{id}", get(session_view))
        .route("/sessions/{id}/queries", get(queries))
        .route("/sessions/{id}/metrics", get(metrics))
        .route("/sessions/{id}/architecture", get(architecture))
        .route("/sessions/{id}/saliency", get(saliency))
        .route("/sessions/{id}/explanations", post(explanations))
        .route("/sessions/{id}/skip", post(skip))
        .route("/sessions/{id}/advance", post(advance))
        .with_state(state)
}

fn parse_body<T: DeserializeOwned>(body: &[u8], code: &'static str) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, code, e.to_string()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GroupView {
    pub group_id: usize,
    pub members: Vec<usize>,
    pub names: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ArchitectureView {
    pub round: u32,
    pub num_classes: usize,
    pub arity: usize,
    pub fingerprint: String,
    pub nodes: Vec<GlobalNode>,
    pub groups: Vec<GroupView>,
}

impl ArchitectureView {
    fn of(arch: &ArchState, session: &Session) -> Self {
        let manifest = session.dataset().manifest();
        let name = |c: usize| manifest.class_name(c).unwrap_or_default().to_string();
        Self {
            round: arch.round(),
            num_classes: arch.num_classes(),
            arity: arch.arity(),
            fingerprint: arch.fingerprint(),
            nodes: arch.nodes().to_vec(),
            groups: arch
                .groups()
                .iter()
                .map(|g| GroupView {
                    group_id: g.group_id,
                    members: g.members.clone(),
                    names: g.members.iter().map(|&c| name(c)).collect(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ArchitectureResponse {
    /// Includes merges accepted this round but not yet trained.
    pub current: ArchitectureView,
    /// The architecture the model was last trained with.
    pub trained: ArchitectureView,
}

#[derive(Debug, Serialize)]
pub struct SessionView<'a> {
    pub session_id: &'a str,
    pub config: &'a SessionConfig,
    pub phase: Phase,
    pub round: u32,
    pub stopped_early: bool,
    pub pending_tickets: Vec<u64>,
    pub tickets: &'a [QueryTicket],
    pub architecture: ArchitectureResponse,
    pub metrics: &'a [RoundMetrics],
    pub explanations: &'a [ExplanationRecord],
    pub patches: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Created {
    pub session_id: String,
    pub phase: Phase,
    pub metrics: RoundMetrics,
    pub tickets: Vec<QueryTicket>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Advanced {
    pub phase: Phase,
    pub done: bool,
    pub stopped_early: bool,
    pub metrics: RoundMetrics,
    pub tickets: Vec<QueryTicket>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Submitted {
    pub phase: Phase,
    pub outcomes: Vec<TicketOutcome>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Skipped {
    pub phase: Phase,
    pub tickets: Vec<QueryTicket>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SaliencyView {
    pub sample: u32,
    pub class: usize,
    pub height: usize,
    pub width: usize,
    /// Row-major `height × width` grid.
    pub values: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
struct Answer {
    ticket_id: u64,
    text: String,
}

#[derive(Debug, Deserialize)]
struct SkipRequest {
    ticket_ids: Vec<u64>,
}

#[derive(Debug, Deserialize)]
struct SaliencyQuery {
    sample: u32,
    class: usize,
}

fn pending(session: &Session) -> Vec<QueryTicket> {
    session.pending_tickets().into_iter().cloned().collect()
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Created>), ApiError> {
    let mut config: SessionConfig = parse_body(&body, "invalid_config")?;
    config.dataset = state.resolve_dataset(&config.dataset);
    config.validate()?;
    let created = tokio::task::spawn_blocking(move || -> Result<Created, ApiError> {
        let dataset = state.store().dataset(&config.dataset)?;
        let session = Session::start_with(config, dataset)?;
        let created = Created {
            session_id: String::new(),
            phase: session.phase(),
            metrics: session.metrics()[0].clone(),
            tickets: pending(&session),
        };
        let session_id = state.store().insert(session)?;
        tracing::info!(session_id, "session created");
        Ok(Created { session_id, ..created })
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn list_sessions(State(state): State<AppState>) -> Json<Vec<String>> {
    Json(state.store().ids())
}

async fn read<T>(state: &AppState, id: &str, f: impl FnOnce(&Session) -> Result<T, ApiError>) -> ApiResult<T> {
    let handle = state.store().get(id).ok_or_else(|| ApiError::unknown_session(id))?;
    let session = handle.read().await;
    f(&session).map(Json)
}

/// Runs `f` on a copy of the session under its writer lock, snapshots the
/// result to disk and only then publishes it. A failing `f` leaves the
/// session untouched; a second writer gets 409 instead of queueing.
async fn mutate<T, F>(state: AppState, id: String, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&mut Session) -> Result<T, ApiError> + Send + 'static,
{
    let handle = state.store().get(&id).ok_or_else(|| ApiError::unknown_session(&id))?;
    let mut guard = handle.try_write_owned().map_err(|_| ApiError::busy(&id))?;
    tokio::task::spawn_blocking(move || {
        let mut work = guard.clone();
        let out = f(&mut work)?;
        state.store().persist(&id, &work)?;
        *guard = work;
        Ok(Json(out))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn session_view(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<serde_json::Value>, ApiError> {
    read(&state, &id, |s| {
        let view = SessionView {
            session_id: &id,
            config: s.config(),
            phase: s.phase(),
            round: s.round(),
            stopped_early: s.stopped_early(),
            pending_tickets: s.pending_tickets().iter().map(|t| t.ticket_id).collect(),
            tickets: s.tickets(),
            architecture: ArchitectureResponse {
                current: ArchitectureView::of(s.arch(), s),
                trained: ArchitectureView::of(s.trained_arch(), s),
            },
            metrics: s.metrics(),
            explanations: s.explanations(),
            patches: s.patches().len(),
        };
        serde_json::to_value(view).map_err(|e| ApiError::internal(e.to_string()))
    })
    .await
}

async fn queries(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Vec<QueryTicket>> {
    read(&state, &id, |s| Ok(pending(s))).await
}

async fn metrics(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Vec<RoundMetrics>> {
    read(&state, &id, |s| Ok(s.metrics().to_vec())).await
}

async fn architecture(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<ArchitectureResponse> {
    read(&state, &id, |s| {
        Ok(ArchitectureResponse {
            current: ArchitectureView::of(s.arch(), s),
            trained: ArchitectureView::of(s.trained_arch(), s),
        })
    })
    .await
}

async fn saliency(
    State(state): State<AppState>,
    Path(id): Path<String>,
    query: Result<Query<SaliencyQuery>, QueryRejection>,
) -> ApiResult<SaliencyView> {
    let Query(q) = query.map_err(|e| ApiError::bad_request(e.body_text()))?;
    read(&state, &id, |s| {
        let grid = s.dataset().grid();
        let flat = s.saliency(q.sample, q.class)?;
        Ok(SaliencyView {
            sample: q.sample,
            class: q.class,
            height: grid.h,
            width: grid.w,
            values: flat.chunks(grid.w).map(<[f64]>::to_vec).collect(),
        })
    })
    .await
}

async fn explanations(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Submitted> {
    let answers: Vec<Answer> = parse_body(&body, "bad_request")?;
    let answers: Vec<(u64, String)> = answers.into_iter().map(|a| (a.ticket_id, a.text)).collect();
    mutate(state, id, move |s| {
        let outcomes = s.submit_explanations(&answers)?;
        Ok(Submitted { phase: s.phase(), outcomes })
    })
    .await
}

async fn skip(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> ApiResult<Skipped> {
    let req: SkipRequest = parse_body(&body, "bad_request")?;
    mutate(state, id, move |s| {
        s.skip_tickets(&req.ticket_ids)?;
        Ok(Skipped { phase: s.phase(), tickets: pending(s) })
    })
    .await
}

async fn advance(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Advanced> {
    mutate(state, id, |s| {
        let metrics = s.train_round()?;
        tracing::info!(round = metrics.round, fine = metrics.fine_accuracy, "round trained");
        Ok(Advanced {
            phase: s.phase(),
            done: s.phase() == Phase::Done,
            stopped_early: s.stopped_early(),
            metrics,
            tickets: pending(s),
        })
    })
    .await
}
