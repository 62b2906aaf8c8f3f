use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{FromRequest, FromRequestParts, Path, Query, Request, State};
use axum::http::request::Parts;
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use dobj_core::access::Session;
use dobj_core::appraisal::{appraise_all, rank_candidates, what_if, Move};
use dobj_core::packs::{find_pack, install, load_pack_text};
use dobj_core::{
    analyze_pack, apply_plan, AppraisalParams, AttrDraft, Command, ErrorCode, Id, MergePlan, Snapshot, StateIndex,
    Store, Value,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::ServerConfig;
use crate::error::ApiError;

/// Items per page on extent-returning endpoints.
pub const DEFAULT_PAGE: usize = 200;
pub const MAX_PAGE: usize = 5000;

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<Store>,
}

impl AppState {
    pub fn new(store: Arc<Store>) -> AppState {
        AppState { store }
    }
}

/// Builds the HTTP service. Every route answers failures with an
/// [`ApiError`] body.
pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/sessions", post(open_session))
        .route("/sessions/{id}", delete(close_session))
        .route("/concepts", get(list_concepts).post(define_concept))
        .route("/objects", get(list_objects))
        .route("/objects/{id}", get(get_object))
        .route("/events", post(submit_events))
        .route("/query", post(query))
        .route("/meta", get(list_metas).post(comprehend))
        .route("/meta/{id}/extent", get(meta_extent))
        .route("/mandatory", get(mandatory))
        .route("/appraise", post(appraise))
        .route("/vacancies/{id}/candidates", get(candidates))
        .route("/packs/analyze", post(analyze))
        .route("/packs/apply", post(apply))
        .route("/rollback", post(rollback))
        .route("/log", get(log))
        .fallback(|| async { ApiError::new(ErrorCode::UnknownId, "no such endpoint") })
        .method_not_allowed_fallback(|| async { ApiError::validation("method not allowed on this endpoint") })
        .with_state(AppState::new(store))
}

/// Opens (or creates) the store under `config.data_dir` and serves until
/// interrupted. A log whose hash chain does not verify aborts startup.
pub async fn serve(config: ServerConfig) -> Result<(), ApiError> {
    config.validate()?;
    let store = Store::open_or_create(&config.data_dir, config.store_config())?;
    let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ApiError::validation(format!("cannot bind {addr}: {e}")))?;
    axum::serve(listener, router(Arc::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ApiError::validation(format!("server stopped: {e}")))
}

/// Runs engine work off the async executor.
async fn blocking<T, F>(state: &AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&Store) -> Result<T, ApiError> + Send + 'static,
{
    let store = state.store.clone();
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError::validation(format!("request worker failed: {e}")))?
        .map(Json)
}

// ---- extractors -----------------------------------------------------------

/// A JSON body whose failures become `PARSE` errors. An empty body reads as `{}`.
struct Body<T>(T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, Self::Rejection> {
        let bytes = Bytes::from_request(req, state).await.map_err(|e| ApiError::parse(e.body_text()))?;
        let text: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { &bytes };
        serde_json::from_slice(text).map(Body).map_err(|e| {
            let mut err = ApiError::parse(format!("request body: {e}"));
            err.details = json!({ "line": e.line(), "column": e.column() });
            err
        })
    }
}

/// Query parameters as text; typed parsing happens per endpoint.
struct Params(HashMap<String, String>);

impl<S: Send + Sync> FromRequestParts<S> for Params {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        Query::<HashMap<String, String>>::from_request_parts(parts, state)
            .await
            .map(|Query(q)| Params(q))
            .map_err(|e| ApiError::parse(e.body_text()))
    }
}

impl Params {
    fn text(&self, name: &str) -> Option<&str> {
        self.0.get(name).map(String::as_str)
    }

    fn required(&self, name: &str) -> Result<&str, ApiError> {
        self.text(name).ok_or_else(|| ApiError::validation(format!("missing query parameter '{name}'")))
    }

    fn number(&self, name: &str) -> Result<Option<u64>, ApiError> {
        self.text(name).map(|t| parse_u64(name, t)).transpose()
    }

    fn state(&self) -> Result<Option<StateIndex>, ApiError> {
        Ok(self.number("state")?.map(StateIndex))
    }

    fn paging(&self) -> Result<Paging, ApiError> {
        Ok(Paging { cursor: self.number("cursor")?, limit: self.number("limit")?.map(|l| l as usize) })
    }
}

/// A numeric path segment.
struct IdPath(Id);

impl<S: Send + Sync> FromRequestParts<S> for IdPath {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, Self::Rejection> {
        let Path(text) =
            Path::<String>::from_request_parts(parts, state).await.map_err(|e| ApiError::parse(e.body_text()))?;
        parse_u64("id", &text).map(|n| IdPath(Id(n)))
    }
}

/// The session named by `Authorization: Bearer <id>` or `X-Session-Id`.
struct Auth(Arc<Session>);

impl FromRequestParts<AppState> for Auth {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let header = |name: &str| parts.headers.get(name).and_then(|v| v.to_str().ok()).map(str::trim);
        let token = header("authorization")
            .and_then(|v| v.strip_prefix("Bearer "))
            .or_else(|| header("x-session-id"))
            .ok_or_else(|| ApiError::new(ErrorCode::AuthFailed, "missing session token"))?;
        Ok(Auth(state.store.session(token.trim())?))
    }
}

fn parse_u64(name: &str, text: &str) -> Result<u64, ApiError> {
    text.trim().parse().map_err(|_| ApiError::parse(format!("{name}: expected a non-negative integer, got '{text}'")))
}

// ---- paging ---------------------------------------------------------------

#[derive(Clone, Copy, Debug, Default, Deserialize)]
struct Paging {
    #[serde(default)]
    cursor: Option<u64>,
    #[serde(default)]
    limit: Option<usize>,
}

#[derive(Debug, Serialize)]
struct Page<T> {
    state: StateIndex,
    items: Vec<T>,
    #[serde(skip_serializing_if = "Option::is_none")]
    next_cursor: Option<u64>,
}

/// Ids after the cursor, up to the limit. The cursor is the last id of the
/// previous page.
fn page_ids(ids: impl IntoIterator<Item = Id>, paging: Paging) -> Result<(Vec<Id>, Option<u64>), ApiError> {
    let limit = paging.limit.unwrap_or(DEFAULT_PAGE);
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::validation(format!("limit must be between 1 and {MAX_PAGE}")));
    }
    let mut rest = ids.into_iter().filter(|id| paging.cursor.map_or(true, |c| id.0 > c));
    let items: Vec<Id> = rest.by_ref().take(limit).collect();
    let next = if rest.next().is_some() { items.last().map(|id| id.0) } else { None };
    Ok((items, next))
}

// ---- helpers --------------------------------------------------------------

/// Individuals outside the session's scope are hidden; concepts and
/// meta-objects are readable by every session.
fn readable(snap: &Snapshot, session: &Session, id: Id) -> bool {
    snap.content().individual(id).is_none() || snap.can_read(&session.profile, id)
}

fn object_json(snap: &Snapshot, id: Id) -> Result<serde_json::Value, ApiError> {
    let obj = match snap.get_object(id) {
        Ok(o) => o,
        Err(_) => snap.describe(id)?,
    };
    let values: BTreeMap<String, serde_json::Value> =
        obj.values.iter().map(|(k, v)| (k.clone(), v.to_plain_json())).collect();
    Ok(json!({ "id": id, "concept": obj.concept, "state": obj.state, "values": values }))
}

// ---- handlers -------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Credentials {
    login: String,
    password: String,
}

async fn open_session(State(st): State<AppState>, Body(c): Body<Credentials>) -> ApiResult<serde_json::Value> {
    blocking(&st, move |store| {
        let s = store.login(&c.login, &c.password)?;
        Ok(json!({
            "session_id": s.id,
            "scenario": s.scenario().as_str(),
            "state": store.head(),
            "user": s.user,
            "metadata_admin": s.profile.metadata_admin,
        }))
    })
    .await
}

async fn close_session(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<serde_json::Value> {
    blocking(&st, move |store| {
        store.close_session(&id)?;
        Ok(json!({ "closed": id }))
    })
    .await
}

async fn list_concepts(State(st): State<AppState>, _auth: Auth, p: Params) -> ApiResult<serde_json::Value> {
    let at = p.state()?;
    blocking(&st, move |store| {
        let snap = store.snapshot(at)?;
        let items: Vec<_> = snap.content().concepts().cloned().collect();
        Ok(json!({ "state": snap.state(), "items": items }))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ConceptRequest {
    name: String,
    #[serde(default)]
    attributes: Vec<AttrDraft>,
}

async fn define_concept(
    State(st): State<AppState>,
    Auth(session): Auth,
    Body(req): Body<ConceptRequest>,
) -> ApiResult<dobj_core::Receipt> {
    blocking(&st, move |store| Ok(store.submit(&session, Command::define_concept(&req.name, req.attributes))?)).await
}

async fn list_objects(State(st): State<AppState>, Auth(session): Auth, p: Params) -> ApiResult<Page<serde_json::Value>> {
    let at = p.state()?;
    let paging = p.paging()?;
    let domain = p.required("concept")?.to_string();
    blocking(&st, move |store| {
        let snap = store.snapshot(at)?;
        let members = snap.members(&domain)?;
        let (ids, next) = page_ids(members.into_iter().filter(|id| readable(&snap, &session, *id)), paging)?;
        let items = ids.into_iter().map(|id| object_json(&snap, id)).collect::<Result<_, _>>()?;
        Ok(Page { state: snap.state(), items, next_cursor: next })
    })
    .await
}

async fn get_object(
    State(st): State<AppState>,
    Auth(session): Auth,
    IdPath(id): IdPath,
    p: Params,
) -> ApiResult<serde_json::Value> {
    let at = p.state()?;
    blocking(&st, move |store| {
        let snap = store.snapshot(at)?;
        let obj = object_json(&snap, id)?;
        if !readable(&snap, &session, id) {
            return Err(ApiError::new(ErrorCode::AccessDenied, format!("object {id} is outside the session's scope")));
        }
        Ok(obj)
    })
    .await
}

/// One event object, or an array of them applied as one batch.
async fn submit_events(
    State(st): State<AppState>,
    Auth(session): Auth,
    Body(body): Body<serde_json::Value>,
) -> ApiResult<serde_json::Value> {
    blocking(&st, move |store| match &body {
        serde_json::Value::Array(events) => {
            let cmds = events.iter().map(Command::from_json).collect::<Result<Vec<_>, _>>()?;
            Ok(json!(store.submit_batch(&session, cmds)?))
        }
        event => Ok(json!(store.submit_json(&session, event)?)),
    })
    .await
}

#[derive(Clone, Copy, Debug, Default, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum QueryMode {
    #[default]
    Extent,
    Individuate,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct QueryRequest {
    formula: String,
    domain: String,
    #[serde(default)]
    mode: QueryMode,
    #[serde(default)]
    state: Option<StateIndex>,
    #[serde(default)]
    cursor: Option<u64>,
    #[serde(default)]
    limit: Option<usize>,
}

async fn query(State(st): State<AppState>, Auth(session): Auth, Body(q): Body<QueryRequest>) -> ApiResult<serde_json::Value> {
    blocking(&st, move |store| {
        let snap = store.snapshot(q.state)?;
        match q.mode {
            QueryMode::Individuate => {
                let id = snap.individuate(&q.formula, &q.domain)?;
                if !readable(&snap, &session, id) {
                    return Err(ApiError::new(ErrorCode::AccessDenied, format!("object {id} is outside the session's scope")));
                }
                Ok(json!({ "state": snap.state(), "id": id, "object": object_json(&snap, id)? }))
            }
            QueryMode::Extent => {
                let ids = snap.query(&q.formula, &q.domain)?;
                let paging = Paging { cursor: q.cursor, limit: q.limit };
                let (items, next) = page_ids(ids.into_iter().filter(|id| readable(&snap, &session, *id)), paging)?;
                Ok(json!(Page { state: snap.state(), items, next_cursor: next }))
            }
        }
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaRequest {
    name: String,
    domain: String,
    formula: String,
}

async fn comprehend(State(st): State<AppState>, Auth(session): Auth, Body(m): Body<MetaRequest>) -> ApiResult<dobj_core::Receipt> {
    blocking(&st, move |store| Ok(store.submit(&session, Command::comprehend(&m.name, &m.domain, &m.formula))?)).await
}

async fn list_metas(State(st): State<AppState>, _auth: Auth, p: Params) -> ApiResult<serde_json::Value> {
    let at = p.state()?;
    blocking(&st, move |store| {
        let snap = store.snapshot(at)?;
        let items: Vec<_> = snap.content().metas().cloned().collect();
        Ok(json!({ "state": snap.state(), "items": items }))
    })
    .await
}

async fn meta_extent(
    State(st): State<AppState>,
    Auth(session): Auth,
    IdPath(id): IdPath,
    p: Params,
) -> ApiResult<Page<Id>> {
    let at = p.state()?;
    let paging = p.paging()?;
    blocking(&st, move |store| {
        let snap = store.snapshot(at)?;
        let ext = snap.meta_extent(id)?;
        let (items, next) = page_ids(ext.into_iter().filter(|m| readable(&snap, &session, *m)), paging)?;
        Ok(Page { state: snap.state(), items, next_cursor: next })
    })
    .await
}

/// `GET /mandatory?concept=Employee&citizenship=foreign`: every parameter
/// other than `concept` is a draft value, typed by the concept's schema.
async fn mandatory(State(st): State<AppState>, Auth(session): Auth, p: Params) -> ApiResult<serde_json::Value> {
    let concept = p.required("concept")?.to_string();
    let raw = p.0;
    blocking(&st, move |store| {
        let snap = store.head_snapshot();
        let def = snap
            .content()
            .concept_by_name(&concept)
            .ok_or_else(|| dobj_core::Error::UnknownConcept(concept.clone()))?
            .clone();
        let mut draft = serde_json::Map::new();
        for (name, text) in raw.iter().filter(|(k, _)| k.as_str() != "concept") {
            let spec = def
                .attribute(name)
                .ok_or_else(|| dobj_core::Error::UnknownAttribute { concept: concept.clone(), attribute: name.clone() })?;
            let v = Value::from_text(text, spec.value_type).map_err(|e| ApiError::validation(format!("{name}: {e}")))?;
            draft.insert(name.clone(), v.to_plain_json());
        }
        let required = store.mandatory_fields(&session, &concept, &draft)?;
        let fields: Vec<_> = def
            .attributes
            .iter()
            .map(|a| json!({ "name": a.name, "type": a.value_type.to_string(), "required": required.contains(&a.name) }))
            .collect();
        Ok(json!({ "concept": concept, "state": snap.state(), "required": required, "fields": fields }))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AppraiseRequest {
    #[serde(default)]
    state: Option<StateIndex>,
    #[serde(default)]
    params: Option<AppraisalParams>,
    #[serde(default)]
    moves: Vec<Move>,
    #[serde(default)]
    unit: Option<Id>,
}

/// Scores every unit, optionally under hypothetical moves. Never writes.
async fn appraise(State(st): State<AppState>, _auth: Auth, Body(req): Body<AppraiseRequest>) -> ApiResult<serde_json::Value> {
    blocking(&st, move |store| {
        let snap = store.snapshot(req.state)?;
        let org = snap.org();
        let params = req.params.unwrap_or(*snap.content().params());
        let scores = if req.moves.is_empty() { appraise_all(&org, &params)? } else { what_if(&org, &req.moves, &params)? };
        let scores: Vec<_> = match req.unit {
            Some(u) => vec![scores.get(&u).cloned().ok_or(dobj_core::Error::UnknownId(u))?],
            None => scores.into_values().collect(),
        };
        Ok(json!({ "state": snap.state(), "params": params, "root": org.root(), "scores": scores }))
    })
    .await
}

async fn candidates(State(st): State<AppState>, _auth: Auth, IdPath(id): IdPath, p: Params) -> ApiResult<serde_json::Value> {
    let at = p.state()?;
    blocking(&st, move |store| {
        let snap = store.snapshot(at)?;
        let ranked = rank_candidates(&snap.org(), id)?;
        Ok(json!({ "state": snap.state(), "position": id, "items": ranked }))
    })
    .await
}

/// A pack by shipped name or as an inline manifest.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PackRequest {
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    manifest: Option<serde_json::Value>,
    /// A plan returned by analyze; applying it fails if the store moved.
    #[serde(default)]
    plan: Option<MergePlan>,
}

impl PackRequest {
    fn pack(&self) -> Result<dobj_core::ComponentPack, ApiError> {
        match (&self.name, &self.manifest) {
            (_, Some(m)) => Ok(load_pack_text(&m.to_string(), "request")?),
            (Some(n), None) => Ok(find_pack(n, None)?),
            (None, None) => Err(ApiError::validation("give a pack 'name', a 'manifest' or a 'plan'")),
        }
    }
}

async fn analyze(State(st): State<AppState>, _auth: Auth, Body(req): Body<PackRequest>) -> ApiResult<MergePlan> {
    blocking(&st, move |store| Ok(analyze_pack(&req.pack()?, &store.head_snapshot())?)).await
}

async fn apply(State(st): State<AppState>, Auth(session): Auth, Body(req): Body<PackRequest>) -> ApiResult<serde_json::Value> {
    blocking(&st, move |store| {
        let head = match &req.plan {
            Some(plan) => apply_plan(store, &session, plan)?,
            None => install(store, &session, &req.pack()?, None)?,
        };
        Ok(json!({ "head": head }))
    })
    .await
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RollbackRequest {
    to: StateIndex,
}

async fn rollback(State(st): State<AppState>, Auth(session): Auth, Body(req): Body<RollbackRequest>) -> ApiResult<serde_json::Value> {
    blocking(&st, move |store| Ok(json!({ "head": store.rollback(&session, req.to)? }))).await
}

async fn log(State(st): State<AppState>, _auth: Auth, p: Params) -> ApiResult<serde_json::Value> {
    let from = p.number("from")?.unwrap_or(1);
    let to = p.number("to")?;
    blocking(&st, move |store| {
        let head = store.head();
        if let Some(t) = to {
            if t > head.0 {
                return Err(dobj_core::Error::StateBeyondHead { requested: StateIndex(t), head }.into());
            }
        }
        Ok(json!({ "head": head, "items": store.records(from, to) }))
    })
    .await
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(n: u64) -> Vec<Id> {
        (1..=n).map(Id).collect()
    }

    #[test]
    fn pages_chain_through_cursors() {
        let mut seen = Vec::new();
        let mut cursor = None;
        loop {
            let (items, next) = page_ids(ids(450), Paging { cursor, limit: None }).unwrap();
            seen.extend(items);
            match next {
                Some(c) => cursor = Some(c),
                None => break,
            }
        }
        assert_eq!(seen, ids(450));
    }

    #[test]
    fn exact_multiple_has_no_dangling_cursor() {
        let (items, next) = page_ids(ids(200), Paging::default()).unwrap();
        assert_eq!(items.len(), 200);
        assert_eq!(next, None);
    }

    #[test]
    fn zero_limit_is_rejected() {
        assert!(page_ids(ids(3), Paging { cursor: None, limit: Some(0) }).is_err());
    }
}
