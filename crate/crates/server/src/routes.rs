use std::convert::Infallible;
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use expressforge_core::elicitation::{RecordedClip, Stage};
use expressforge_core::kinematics::ChainFile;
use expressforge_core::verification::{exclusion_reasons, ExclusionReason, SurveyStage, VerificationResponse};
use expressforge_core::{
    create_session as plan_session, ElicitationRecord, JointVector, Keyframe, MotionClip, Referent, Session,
    SessionPlan, SpeedMap, StudyState, TransitSpeed,
};
use futures::StreamExt;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::store::Store;
use crate::{now_ms, ApiError, ApiJson, AppState, TICK_HZ};

type ApiResult<T> = Result<T, ApiError>;

pub async fn health() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

pub async fn chain(State(app): State<AppState>) -> Json<ChainFile> {
    Json(app.lock().base().chain.clone())
}

pub async fn referents(State(app): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::to_value(&app.lock().base().referents).expect("serializable"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkRequest {
    angles_deg: JointVector,
}

pub async fn fk(State(app): State<AppState>, ApiJson(req): ApiJson<FkRequest>) -> ApiResult<Json<serde_json::Value>> {
    let store = app.lock();
    let pose = store.chain().forward_kinematics(&req.angles_deg)?;
    let links = store.chain().link_positions(&req.angles_deg)?;
    let orientation: Vec<[f64; 3]> = (0..3)
        .map(|r| {
            [
                pose.orientation[(r, 0)],
                pose.orientation[(r, 1)],
                pose.orientation[(r, 2)],
            ]
        })
        .collect();
    Ok(Json(json!({
        "position_mm": [pose.position_mm.x, pose.position_mm.y, pose.position_mm.z],
        "orientation": orientation,
        "link_positions_mm": links,
    })))
}

#[derive(Debug, Serialize)]
pub struct ClipSummary {
    clip_id: String,
    referent_id: String,
    keyframes: Vec<Keyframe>,
    travel_ms: Vec<f64>,
    duration_ms: f64,
}

impl ClipSummary {
    fn new(clip: &MotionClip, speeds: &SpeedMap) -> Self {
        Self {
            clip_id: clip.id().to_owned(),
            referent_id: clip.provenance().to_owned(),
            keyframes: clip.keyframes().to_vec(),
            travel_ms: (0..clip.len()).map(|i| clip.travel_ms(speeds, i)).collect(),
            duration_ms: clip.duration_ms(speeds),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    participant_id: String,
    plan: SessionPlan,
    stage: Stage,
    current_referent: Option<String>,
    current_prompt: Option<String>,
    draft: Option<ClipSummary>,
    recorded: Vec<RecordedClip>,
    rating_order: Vec<String>,
    current_rating_clip: Option<RecordedClip>,
    records: Vec<ElicitationRecord>,
}

fn session_view(store: &Store, session: &Session) -> SessionView {
    let current_referent = session.current_referent().map(str::to_owned);
    let current_prompt = current_referent.as_deref().and_then(|id| {
        store
            .base()
            .referents
            .referents
            .iter()
            .find(|r| r.id == id)
            .map(|r| r.prompt.clone())
    });
    SessionView {
        participant_id: session.participant_id().to_owned(),
        plan: session.plan().clone(),
        stage: session.stage(),
        current_referent,
        current_prompt,
        draft: session.draft().map(|c| ClipSummary::new(c, &store.speeds)),
        recorded: session.recorded().to_vec(),
        rating_order: session.rating_order().to_vec(),
        current_rating_clip: session.current_rating_clip().cloned(),
        records: session.records().to_vec(),
    }
}

fn session_mut<'a>(store: &'a mut Store, id: &str) -> ApiResult<&'a mut Session> {
    store
        .sessions
        .get_mut(id)
        .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    participant_id: String,
    #[serde(default)]
    participant_index: Option<usize>,
}

pub async fn create_session(
    State(app): State<AppState>,
    ApiJson(req): ApiJson<CreateSession>,
) -> ApiResult<(StatusCode, Json<SessionPlan>)> {
    if req.participant_id.trim().is_empty() {
        return Err(ApiError::field("participant_id", "participant id is empty"));
    }
    let mut store = app.lock();
    if store.sessions.contains_key(&req.participant_id) {
        return Err(ApiError::conflict(format!(
            "session `{}` already exists",
            req.participant_id
        )));
    }
    let referents = &store.base().referents;
    let studied: Vec<Referent> = referents.studied().cloned().collect();
    let tutorials: Vec<Referent> = referents.tutorials().cloned().collect();
    let index = req.participant_index.unwrap_or(store.sessions.len());
    let plan = plan_session(&req.participant_id, index, &studied, &tutorials, None)?;
    let session = Session::new(plan.clone(), rand::random());
    store.sessions.insert(req.participant_id, session);
    store.persist()?;
    Ok((StatusCode::CREATED, Json(plan)))
}

pub async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionView>> {
    let store = app.lock();
    let session = store
        .sessions
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))?;
    Ok(Json(session_view(&store, session)))
}

fn draft_summary(store: &Store, session: &Session) -> Json<ClipSummary> {
    Json(ClipSummary::new(session.draft().expect("just edited"), &store.speeds))
}

pub async fn save_keyframe(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(kf): ApiJson<Keyframe>,
) -> ApiResult<Json<ClipSummary>> {
    let mut store = app.lock();
    let chain = store.chain().clone();
    session_mut(&mut store, &id)?.save_keyframe(&chain, kf)?;
    store.persist()?;
    Ok(draft_summary(&store, &store.sessions[&id]))
}

pub async fn undo(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<ClipSummary>> {
    let mut store = app.lock();
    session_mut(&mut store, &id)?.undo()?;
    store.persist()?;
    Ok(draft_summary(&store, &store.sessions[&id]))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetSpeed {
    index: usize,
    transit_speed: TransitSpeed,
}

pub async fn set_speed(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<SetSpeed>,
) -> ApiResult<Json<ClipSummary>> {
    let mut store = app.lock();
    session_mut(&mut store, &id)?.set_speed(req.index, req.transit_speed)?;
    store.persist()?;
    Ok(draft_summary(&store, &store.sessions[&id]))
}

pub async fn commit(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let mut store = app.lock();
    let clip = session_mut(&mut store, &id)?.commit()?;
    let summary = clip.as_ref().map(|c| ClipSummary::new(c, &store.speeds));
    if let Some(clip) = clip {
        store.clips.push(clip);
    }
    store.persist()?;
    let view = session_view(&store, &store.sessions[&id]);
    Ok(Json(json!({"committed": summary, "session": view})))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlayRequest {
    #[serde(default)]
    clip_id: Option<String>,
}

pub async fn play(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<PlayRequest>,
) -> ApiResult<(StatusCode, Json<serde_json::Value>)> {
    let mut store = app.lock();
    let session = store
        .sessions
        .get(&id)
        .ok_or_else(|| ApiError::not_found(format!("unknown session `{id}`")))?;
    let find = |clip_id: &str| {
        store
            .clips
            .iter()
            .find(|c| c.id() == clip_id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown clip `{clip_id}`")))
    };
    let clip = match (&req.clip_id, session.draft(), session.current_rating_clip()) {
        (Some(clip_id), _, _) => find(clip_id)?,
        (None, Some(draft), _) => draft.clone(),
        (None, None, Some(rating)) => find(&rating.clip_id)?,
        (None, None, None) => {
            return Err(ApiError::conflict(
                "nothing to play: no draft and no clip awaiting rating",
            ))
        }
    };
    let duration_ms = clip.duration_ms(&store.speeds);
    let frames = expressforge_core::motion::frame_count(duration_ms, TICK_HZ);
    let clip_id = clip.id().to_owned();
    let playback_id = store.add_playback(clip);
    Ok((
        StatusCode::CREATED,
        Json(json!({
            "playback_id": playback_id,
            "clip_id": clip_id,
            "duration_ms": duration_ms,
            "tick_hz": TICK_HZ,
            "frames": frames,
            "stream": format!("/playback/{playback_id}/stream"),
        })),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ratings {
    values: Vec<i64>,
    #[serde(default)]
    notes: String,
}

pub async fn ratings(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<Ratings>,
) -> ApiResult<Json<serde_json::Value>> {
    let mut store = app.lock();
    let record = session_mut(&mut store, &id)?
        .submit_ratings(&req.values, &req.notes)?
        .clone();
    store.persist()?;
    let view = session_view(&store, &store.sessions[&id]);
    Ok(Json(json!({"record": record, "session": view})))
}

/// Newline-delimited frames paced by one clock per handle, then `{"done":true}`.
pub async fn stream(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let (handle, chain) = {
        let store = app.lock();
        let handle = store
            .playback(&id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown playback `{id}`")))?;
        (handle, store.chain().clone())
    };
    let frames = handle.clip.frame_stream(&handle.speeds, TICK_HZ)?;
    let mut lines = Vec::with_capacity(frames.len() + 1);
    for frame in frames {
        let links = chain.link_positions(&frame.angles_deg)?;
        let record = json!({"t_ms": frame.t_ms, "angles_deg": frame.angles_deg, "link_positions_mm": links});
        lines.push(format!("{record}\n"));
    }
    lines.push("{\"done\":true}\n".to_owned());
    let tick = Duration::from_secs_f64(1.0 / TICK_HZ);
    let start = tokio::time::Instant::now();
    let body = futures::stream::iter(lines.into_iter().enumerate()).then(move |(i, line)| async move {
        tokio::time::sleep_until(start + tick * i as u32).await;
        Ok::<_, Infallible>(Bytes::from(line))
    });
    Ok((
        [(header::CONTENT_TYPE, "application/x-ndjson")],
        Body::from_stream(body),
    )
        .into_response())
}

fn study_mut<'a>(store: &'a mut Store, id: &str) -> ApiResult<&'a mut StudyState> {
    if store.study.config().study_id != id {
        return Err(ApiError::not_found(format!("unknown study `{id}`")));
    }
    Ok(&mut store.study)
}

pub async fn get_study(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let mut store = app.lock();
    let study = study_mut(&mut store, &id)?;
    let config = study.config();
    Ok(Json(json!({
        "study_id": config.study_id,
        "quota_per_expression": config.quota_per_expression,
        "expressions": config.expressions,
        "battery": config.battery,
        "attention_checks": config.attention_checks,
        "counts": study.counts(),
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantRef {
    participant_id: String,
}

pub async fn assign(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<ParticipantRef>,
) -> ApiResult<Json<serde_json::Value>> {
    let mut store = app.lock();
    let study = study_mut(&mut store, &id)?;
    let assignment = study.assign(&req.participant_id, now_ms())?;
    let video_uri = study.config().video_uri(&assignment.category_id).map(str::to_owned);
    store.persist()?;
    Ok(Json(json!({
        "participant_id": assignment.participant_id,
        "category_id": assignment.category_id,
        "video_uri": video_uri,
        "issued_at": assignment.issued_at,
    })))
}

pub async fn video_ended(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<ParticipantRef>,
) -> ApiResult<Json<serde_json::Value>> {
    let mut store = app.lock();
    let watch_count = study_mut(&mut store, &id)?.record_video_completed(&req.participant_id, now_ms())?;
    Ok(Json(
        json!({"participant_id": req.participant_id, "watch_count": watch_count}),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interpretation {
    participant_id: String,
    text: String,
}

pub async fn interpretation(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<Interpretation>,
) -> ApiResult<Json<serde_json::Value>> {
    let mut store = app.lock();
    study_mut(&mut store, &id)?.submit_interpretation(&req.participant_id, &req.text, now_ms())?;
    Ok(Json(
        json!({"participant_id": req.participant_id, "stage": SurveyStage::Vas}),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vas {
    participant_id: String,
    values: Vec<i64>,
    #[serde(default)]
    attention: Vec<i64>,
    #[serde(default)]
    untouched: Vec<bool>,
}

#[derive(Serialize)]
struct VasOutcome {
    response: VerificationResponse,
    excluded: bool,
    reasons: Vec<ExclusionReason>,
}

pub async fn vas(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ApiJson(req): ApiJson<Vas>,
) -> ApiResult<Json<serde_json::Value>> {
    let mut store = app.lock();
    let study = study_mut(&mut store, &id)?;
    let response = study
        .submit_vas(
            &req.participant_id,
            &req.values,
            &req.attention,
            &req.untouched,
            now_ms(),
        )?
        .clone();
    let reasons = exclusion_reasons(&response, &study.config().attention_checks);
    if !reasons.is_empty() {
        study.release_slot(&req.participant_id)?;
    }
    store.persist()?;
    let outcome = VasOutcome {
        response,
        excluded: !reasons.is_empty(),
        reasons,
    };
    Ok(Json(serde_json::to_value(outcome).expect("serializable")))
}

pub async fn participant(
    State(app): State<AppState>,
    Path((id, pid)): Path<(String, String)>,
) -> ApiResult<Json<serde_json::Value>> {
    let mut store = app.lock();
    let study = study_mut(&mut store, &id)?;
    let progress = study
        .progress(&pid)
        .ok_or_else(|| ApiError::not_found(format!("participant `{pid}` has no assignment")))?;
    let category = &progress.assignment.category_id;
    Ok(Json(json!({
        "participant_id": pid,
        "category_id": category,
        "video_uri": study.config().video_uri(category),
        "stage": progress.stage(),
        "watch_count": progress.watch_count(),
        "interpretation": progress.interpretation.as_ref().map(|(text, _)| text),
        "submitted": progress.submitted,
        "released": progress.released,
    })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MovementOnly {
    flag: bool,
}

pub async fn movement_only(
    State(app): State<AppState>,
    Path((id, pid)): Path<(String, String)>,
    ApiJson(req): ApiJson<MovementOnly>,
) -> ApiResult<Json<serde_json::Value>> {
    let mut store = app.lock();
    let study = study_mut(&mut store, &id)?;
    let mut response = study
        .responses()
        .iter()
        .find(|r| r.participant_id == pid)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("participant `{pid}` has no response")))?;
    response.movement_only = req.flag;
    let reasons = exclusion_reasons(&response, &study.config().attention_checks);
    let released = study.progress(&pid).is_some_and(|p| p.released);
    if reasons.is_empty() && released {
        return Err(ApiError::conflict(format!(
            "quota slot of `{pid}` was already released"
        )));
    }
    study.flag_movement_only(&pid, req.flag)?;
    if !reasons.is_empty() && !released {
        study.release_slot(&pid)?;
    }
    store.persist()?;
    Ok(Json(json!({
        "participant_id": pid,
        "movement_only": req.flag,
        "excluded": !reasons.is_empty(),
        "reasons": reasons,
    })))
}
