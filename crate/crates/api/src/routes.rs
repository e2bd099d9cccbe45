//! HTTP routes. Every session-scoped route lives under `/sessions/{sid}`.

use std::convert::Infallible;

use axum::body::Bytes;
use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{FromRequest, Path, Query, Request, State};
use axum::http::{header, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use futures::stream::{self, Stream, StreamExt};
use innerpond_core::ids::{DialogueId, GroupId, PositionId, RoundId};
use innerpond_core::iposition::{NewPosition, PositionPatch};
use innerpond_core::orchestra::{GroupMember, GroupTurn, Mode};
use innerpond_core::pond::{Color, LeafLayout, PondError, MAX_SIZE, MIN_SIZE};
use innerpond_core::profile::ingest_presurvey;
use innerpond_core::store::{EventFilter, EventKind, Stage};
use innerpond_core::Session;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::broadcast;

use crate::error::ApiError;
use crate::state::{AppState, GroupEvent};

pub fn router(state: AppState) -> Router {
    let session = Router::new()
        .route("/", get(get_session))
        .route("/positions", get(list_positions).post(add_position))
        .route(
            "/positions/{pid}",
            get(get_position).patch(edit_position).delete(delete_position),
        )
        .route("/positions/{pid}/enrichment", post(generate_questions))
        .route("/enrichment/{rid}", get(get_round))
        .route("/enrichment/{rid}/apply", post(apply_refinement))
        .route("/positions/{pid}/dialogue", post(open_dialogue))
        .route("/dialogues/{did}", get(get_dialogue))
        .route("/dialogues/{did}/messages", post(send_message))
        .route("/dialogues/{did}/close", post(close_dialogue))
        .route("/groups/topics", post(generate_topics))
        .route("/groups", post(start_group))
        .route("/groups/{gid}", get(get_group))
        .route("/groups/{gid}/messages", post(mediate))
        .route("/groups/{gid}/skip", post(skip))
        .route("/groups/{gid}/stream", get(stream_group))
        .route("/pond/layouts", put(update_layouts).get(list_layouts))
        .route("/pond/snapshots", post(save_snapshot).get(list_snapshots))
        .route("/pond/snapshots/{label}", get(get_snapshot))
        .route("/log", get(query_log));
    Router::new()
        .route("/sessions", post(create_session))
        .nest("/sessions/{sid}", session)
        .with_state(state)
}

/// JSON body extractor whose rejections use the API error shape.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(value)) => Ok(Body(value)),
            Err(rejection) => Err(json_rejection(rejection)),
        }
    }
}

fn json_rejection(rejection: JsonRejection) -> ApiError {
    ApiError::bad_request("InvalidDocument", rejection.body_text())
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

/// Runs `f` against the locked session on the blocking pool.
async fn with_session<T, F>(state: AppState, sid: String, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&mut Session, &broadcast::Sender<GroupEvent>) -> Result<T, ApiError> + Send + 'static,
{
    blocking(move || {
        let handle = state.handle(&sid)?;
        let mut session = handle.lock()?;
        f(&mut session, &handle.events)
    })
    .await
}

fn pond_error(e: PondError) -> ApiError {
    innerpond_core::Error::from(e).into()
}

fn core<T>(result: innerpond_core::Result<T>) -> Result<T, ApiError> {
    result.map_err(ApiError::from)
}

// Sessions

#[derive(Serialize)]
struct SessionSummary {
    session_id: String,
    user: String,
    locale: String,
    created_at: chrono::DateTime<chrono::Utc>,
    positions: Vec<innerpond_core::iposition::IPosition>,
    layouts: Vec<LeafLayout>,
    diagnostics: Vec<innerpond_core::iposition::Diagnostic>,
    dialogues: Vec<DialogueId>,
    groups: Vec<GroupId>,
    topic_sets: Vec<innerpond_core::orchestra::TopicSet>,
    snapshots: Vec<String>,
    event_count: usize,
}

fn summary(s: &Session) -> SessionSummary {
    let meta = s.meta();
    let state = s.state();
    SessionSummary {
        session_id: meta.session_id.clone(),
        user: meta.user.clone(),
        locale: meta.locale.tag.clone(),
        created_at: meta.created_at,
        positions: state.positions.iter().cloned().collect(),
        layouts: state.pond.layouts.values().cloned().collect(),
        diagnostics: meta.extraction_diagnostics.clone(),
        dialogues: sorted_ids(state.dialogues.keys()),
        groups: sorted_ids(state.groups.keys()),
        topic_sets: state.topic_sets.clone(),
        snapshots: state.snapshots.iter().map(|s| s.label.clone()).collect(),
        event_count: s.events().len(),
    }
}

trait Seq {
    fn seq_key(&self) -> (u64, String);
}

macro_rules! seq_key {
    ($($t:ty),*) => {$(
        impl Seq for $t {
            fn seq_key(&self) -> (u64, String) {
                (self.seq().unwrap_or(u64::MAX), self.as_str().to_string())
            }
        }
    )*};
}
seq_key!(DialogueId, GroupId);

fn sorted_ids<'a, T: Seq + Clone + 'a>(ids: impl Iterator<Item = &'a T>) -> Vec<T> {
    let mut ids: Vec<T> = ids.cloned().collect();
    ids.sort_by_key(Seq::seq_key);
    ids
}

async fn create_session(State(state): State<AppState>, Body(doc): Body<Value>) -> Result<Response, ApiError> {
    let intake = ingest_presurvey(&doc)?;
    let created = blocking(move || {
        let id = uuid::Uuid::new_v4().to_string();
        let session = Session::create(
            &id,
            intake,
            state.config(),
            state.provider(),
            state.clock(),
            state.data_dir().as_deref(),
        )?;
        tracing::info!(session = %id, positions = session.positions().len(), "session created");
        let handle = state.insert(session);
        let session = handle.lock()?;
        Ok(summary(&session))
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)).into_response())
}

async fn get_session(State(state): State<AppState>, Path(sid): Path<String>) -> Result<Json<SessionSummary>, ApiError> {
    with_session(state, sid, |s, _| Ok(Json(summary(s)))).await
}

// Positions

async fn list_positions(
    State(state): State<AppState>,
    Path(sid): Path<String>,
) -> Result<Json<Vec<innerpond_core::iposition::IPosition>>, ApiError> {
    with_session(state, sid, |s, _| Ok(Json(s.positions().iter().cloned().collect()))).await
}

async fn get_position(State(state): State<AppState>, Path((sid, pid)): Path<(String, String)>) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| {
        let p = core(s.position(&PositionId::from(pid.as_str())))?;
        Ok(Json(p.clone()).into_response())
    })
    .await
}

async fn add_position(
    State(state): State<AppState>,
    Path(sid): Path<String>,
    Body(draft): Body<NewPosition>,
) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| {
        let (position, layout) = core(s.add_position(draft))?;
        Ok((StatusCode::CREATED, Json(json!({ "position": position, "layout": layout }))).into_response())
    })
    .await
}

async fn edit_position(
    State(state): State<AppState>,
    Path((sid, pid)): Path<(String, String)>,
    Body(patch): Body<PositionPatch>,
) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| {
        let position = core(s.edit_position(&PositionId::from(pid.as_str()), &patch))?;
        Ok(Json(position).into_response())
    })
    .await
}

async fn delete_position(State(state): State<AppState>, Path((sid, pid)): Path<(String, String)>) -> Result<StatusCode, ApiError> {
    with_session(state, sid, move |s, _| {
        core(s.delete_position(&PositionId::from(pid.as_str())))?;
        Ok(StatusCode::NO_CONTENT)
    })
    .await
}

// Enrichment

#[derive(Deserialize)]
struct ApplyBody {
    answers: Vec<Option<String>>,
}

async fn generate_questions(State(state): State<AppState>, Path((sid, pid)): Path<(String, String)>) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| {
        let round = core(s.generate_questions(&PositionId::from(pid.as_str())))?;
        Ok((StatusCode::CREATED, Json(round)).into_response())
    })
    .await
}

async fn get_round(State(state): State<AppState>, Path((sid, rid)): Path<(String, String)>) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| {
        Ok(Json(core(s.round(&RoundId::from(rid.as_str())))?.clone()).into_response())
    })
    .await
}

async fn apply_refinement(
    State(state): State<AppState>,
    Path((sid, rid)): Path<(String, String)>,
    Body(body): Body<ApplyBody>,
) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| {
        let (position, diagnostics) = core(s.apply_refinement(&RoundId::from(rid.as_str()), &body.answers))?;
        Ok(Json(json!({ "position": position, "diagnostics": diagnostics })).into_response())
    })
    .await
}

// One-on-one dialogue

#[derive(Deserialize)]
struct MessageBody {
    text: String,
}

async fn open_dialogue(State(state): State<AppState>, Path((sid, pid)): Path<(String, String)>) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| {
        let dialogue = core(s.open_dialogue(&PositionId::from(pid.as_str())))?;
        Ok((StatusCode::CREATED, Json(dialogue)).into_response())
    })
    .await
}

async fn get_dialogue(State(state): State<AppState>, Path((sid, did)): Path<(String, String)>) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| {
        Ok(Json(core(s.dialogue(&DialogueId::from(did.as_str())))?.clone()).into_response())
    })
    .await
}

async fn send_message(
    State(state): State<AppState>,
    Path((sid, did)): Path<(String, String)>,
    Body(body): Body<MessageBody>,
) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| {
        let turn = core(s.send_message(&DialogueId::from(did.as_str()), &body.text))?;
        Ok(Json(turn).into_response())
    })
    .await
}

async fn close_dialogue(State(state): State<AppState>, Path((sid, did)): Path<(String, String)>) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| {
        let id = DialogueId::from(did.as_str());
        core(s.close_dialogue(&id))?;
        Ok(Json(core(s.dialogue(&id))?.clone()).into_response())
    })
    .await
}

// Group conversation

#[derive(Deserialize)]
struct PairBody {
    pair: [String; 2],
}

#[derive(Deserialize)]
struct GroupBody {
    pair: [String; 2],
    topic: String,
}

/// A group as clients see it: the hidden intervention turns are left out.
#[derive(Serialize)]
struct GroupView {
    id: GroupId,
    members: [GroupMember; 2],
    chosen_topic: String,
    transcript: Vec<GroupTurn>,
    mode_history: Vec<Mode>,
}

fn group_view(s: &Session, id: &GroupId) -> Result<GroupView, ApiError> {
    let g = core(s.group(id))?;
    Ok(GroupView {
        id: g.id.clone(),
        members: g.members.clone(),
        chosen_topic: g.chosen_topic.clone(),
        transcript: g.transcript.iter().filter(|t| !t.hidden).cloned().collect(),
        mode_history: g.mode_history.clone(),
    })
}

/// Sends the visible turns from `from` onwards to stream subscribers.
fn publish(s: &Session, events: &broadcast::Sender<GroupEvent>, id: &GroupId, from: usize) {
    let Ok(group) = s.group(id) else { return };
    for (index, turn) in group.transcript.iter().enumerate().skip(from) {
        if !turn.hidden {
            let _ = events.send(GroupEvent {
                group_id: id.clone(),
                index,
                turn: turn.clone(),
            });
        }
    }
}

fn transcript_len(s: &Session, id: &GroupId) -> Result<usize, ApiError> {
    Ok(core(s.group(id))?.transcript.len())
}

async fn generate_topics(
    State(state): State<AppState>,
    Path(sid): Path<String>,
    Body(body): Body<PairBody>,
) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| {
        let [a, b] = body.pair.map(|p| PositionId::from(p.as_str()));
        let topics = core(s.generate_topics(&a, &b))?;
        Ok((StatusCode::CREATED, Json(topics)).into_response())
    })
    .await
}

async fn start_group(
    State(state): State<AppState>,
    Path(sid): Path<String>,
    Body(body): Body<GroupBody>,
) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, events| {
        let [a, b] = body.pair.map(|p| PositionId::from(p.as_str()));
        let next_id = GroupId::from_seq(s.state().ids.group + 1);
        let result = s.start_group(&a, &b, &body.topic);
        publish(s, events, &next_id, 0);
        let (group, reply) = core(result)?;
        Ok((
            StatusCode::CREATED,
            Json(json!({ "group": group_view(s, &group.id)?, "reply": reply })),
        )
            .into_response())
    })
    .await
}

async fn get_group(State(state): State<AppState>, Path((sid, gid)): Path<(String, String)>) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| Ok(Json(group_view(s, &GroupId::from(gid.as_str()))?).into_response())).await
}

async fn mediate(
    State(state): State<AppState>,
    Path((sid, gid)): Path<(String, String)>,
    Body(body): Body<MessageBody>,
) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, events| {
        let id = GroupId::from(gid.as_str());
        let before = transcript_len(s, &id)?;
        let result = s.mediate(&id, &body.text);
        publish(s, events, &id, before);
        Ok(Json(core(result)?).into_response())
    })
    .await
}

async fn skip(State(state): State<AppState>, Path((sid, gid)): Path<(String, String)>) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, events| {
        let id = GroupId::from(gid.as_str());
        let before = transcript_len(s, &id)?;
        let result = s.skip(&id);
        publish(s, events, &id, before);
        Ok(Json(core(result)?).into_response())
    })
    .await
}

fn turn_event(index: usize, turn: &GroupTurn) -> Result<Event, Infallible> {
    Ok(Event::default()
        .event("turn")
        .id(index.to_string())
        .json_data(turn)
        .expect("turn serialises"))
}

/// Server-sent events, one visible turn per event: the existing transcript
/// first, then new turns as they are appended.
async fn stream_group(
    State(state): State<AppState>,
    Path((sid, gid)): Path<(String, String)>,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let id = GroupId::from(gid.as_str());
    let (rx, existing) = with_session(state, sid, {
        let id = id.clone();
        move |s, events| {
            let rx = events.subscribe();
            let group = core(s.group(&id))?;
            let existing: Vec<(usize, GroupTurn)> = group
                .transcript
                .iter()
                .enumerate()
                .filter(|(_, t)| !t.hidden)
                .map(|(i, t)| (i, t.clone()))
                .collect();
            Ok((rx, existing))
        }
    })
    .await?;
    let start = existing.last().map_or(0, |(i, _)| i + 1);
    let backlog = stream::iter(existing.into_iter().map(|(i, t)| turn_event(i, &t)));
    let live = stream::unfold(rx, move |mut rx| {
        let id = id.clone();
        async move {
            loop {
                match rx.recv().await {
                    Ok(ev) if ev.group_id == id && ev.index >= start => return Some((turn_event(ev.index, &ev.turn), rx)),
                    Ok(_) => continue,
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        tracing::warn!(skipped = n, "stream subscriber lagged");
                        continue;
                    }
                    Err(broadcast::error::RecvError::Closed) => return None,
                }
            }
        }
    });
    Ok(Sse::new(backlog.chain(live)).keep_alive(KeepAlive::default()))
}

// Pond

/// One entry of a layout update; omitted fields stay as they are.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutUpdate {
    position_id: String,
    x: Option<f64>,
    y: Option<f64>,
    size: Option<f64>,
    color: Option<String>,
}

async fn list_layouts(State(state): State<AppState>, Path(sid): Path<String>) -> Result<Json<Vec<LeafLayout>>, ApiError> {
    with_session(state, sid, |s, _| Ok(Json(s.pond().layouts.values().cloned().collect()))).await
}

/// Applies a batch of layout updates. The whole batch is validated first,
/// then each changed attribute is applied (and logged) separately.
async fn update_layouts(
    State(state): State<AppState>,
    Path(sid): Path<String>,
    Body(updates): Body<Vec<LayoutUpdate>>,
) -> Result<Json<Vec<LeafLayout>>, ApiError> {
    with_session(state, sid, move |s, _| {
        for u in &updates {
            let id = PositionId::from(u.position_id.as_str());
            s.pond().get(&id).map_err(pond_error)?;
            if [u.x, u.y].iter().flatten().any(|v| !v.is_finite()) {
                return Err(pond_error(PondError::BadCoordinate));
            }
            if let Some(size) = u.size.filter(|v| !(MIN_SIZE..=MAX_SIZE).contains(v)) {
                return Err(pond_error(PondError::SizeOutOfRange(size)));
            }
            if let Some(color) = &u.color {
                color.parse::<Color>().map_err(pond_error)?;
            }
        }
        for u in updates {
            let id = PositionId::from(u.position_id.as_str());
            if u.x.is_some() || u.y.is_some() {
                let current = s.pond().get(&id).map_err(pond_error)?.clone();
                core(s.move_leaf(&id, u.x.unwrap_or(current.x), u.y.unwrap_or(current.y)))?;
            }
            if let Some(size) = u.size {
                core(s.resize_leaf(&id, size))?;
            }
            if let Some(color) = &u.color {
                core(s.recolor_leaf(&id, color))?;
            }
        }
        Ok(Json(s.pond().layouts.values().cloned().collect()))
    })
    .await
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotBody {
    user: Option<String>,
}

async fn save_snapshot(State(state): State<AppState>, Path(sid): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let body: SnapshotBody = if body.iter().all(u8::is_ascii_whitespace) {
        SnapshotBody::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ApiError::bad_request("InvalidDocument", e.to_string()))?
    };
    with_session(state, sid, move |s, _| {
        let snapshot = core(s.save_snapshot(body.user.as_deref()))?;
        Ok((StatusCode::CREATED, Json(snapshot)).into_response())
    })
    .await
}

async fn list_snapshots(State(state): State<AppState>, Path(sid): Path<String>) -> Result<Response, ApiError> {
    with_session(state, sid, |s, _| {
        let list: Vec<Value> = s
            .snapshots()
            .iter()
            .map(|snap| json!({ "label": snap.label, "at": snap.at }))
            .collect();
        Ok(Json(list).into_response())
    })
    .await
}

/// The snapshot export document, offered as a download named after its
/// label.
async fn get_snapshot(State(state): State<AppState>, Path((sid, label)): Path<(String, String)>) -> Result<Response, ApiError> {
    with_session(state, sid, move |s, _| {
        let snapshot = core(s.load_snapshot(&label))?;
        let filename = format!("{}.json", snapshot.label.replace('"', "'"));
        Ok((
            [(header::CONTENT_DISPOSITION, format!("attachment; filename=\"{filename}\""))],
            Json(snapshot.clone()),
        )
            .into_response())
    })
    .await
}

// Log

#[derive(Debug, Deserialize)]
struct LogQuery {
    stage: Option<Stage>,
    kind: Option<EventKind>,
}

async fn query_log(
    State(state): State<AppState>,
    Path(sid): Path<String>,
    query: Result<Query<LogQuery>, QueryRejection>,
) -> Result<Response, ApiError> {
    let Query(query) = query.map_err(|e| ApiError::bad_request("InvalidQuery", e.body_text()))?;
    with_session(state, sid, move |s, _| {
        let filter = EventFilter {
            stage: query.stage,
            kind: query.kind,
        };
        let events: Vec<_> = s.query(&filter).into_iter().cloned().collect();
        Ok(Json(events).into_response())
    })
    .await
}
