//! The event-sourced store: one content value per state, a single-writer
//! submit path, sessions, rollback, replay and optional persistence.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::access::{
    self, AccessAction, AccessProfile, Decision, Scenario, Session, Target, DATA_KINDS, METADATA_KINDS,
};
use crate::content::{max_id, Content, Effect};
use crate::error::{Error, Result};
use crate::event::log::{sha256_hex, EventRecord, LogFile, LogHeader};
use crate::event::rules::{self, Firing, RULE_TRIGGERS};
use crate::event::{compile, Command, JsonMap, Payload};
use crate::formula::{self, Formula};
use crate::model::{DataObject, DomainRef, Id, StateIndex, FIRST_USER_ID};
use crate::org::{self, OrgModel};
use crate::tower::{MetaMemo, DEFAULT_TOWER_CAP};
use crate::value::Value;
use crate::view::View;

pub const LOG_FILE: &str = "events.log";
pub const SIDECAR_FILE: &str = "snapshots.ndjson";
/// States between sidecar checkpoints.
pub const SIDECAR_INTERVAL: u64 = 100;
pub const ADMIN_LOGIN: &str = "admin";

#[derive(Clone, Debug)]
pub struct StoreConfig {
    pub tower_cap: u32,
    pub session_ttl: Duration,
    pub admin_password: String,
    /// Cells kept by the meta extent memo before it is cleared.
    pub memo_bound: usize,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig {
            tower_cap: DEFAULT_TOWER_CAP,
            session_ttl: Duration::from_secs(8 * 3600),
            admin_password: "admin".into(),
            memo_bound: 1 << 18,
        }
    }
}

/// What a successful submit produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Receipt {
    pub state: StateIndex,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subject: Option<Id>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub created: Option<Id>,
}

/// Identity of the content at a state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreSnapshot {
    pub state: StateIndex,
    pub content_hash: String,
}

/// An immutable, cheaply cloned read handle on one committed state.
#[derive(Clone)]
pub struct Snapshot {
    content: Arc<Content>,
    state: StateIndex,
    cap: u32,
    memo: Arc<MetaMemo>,
    org: Arc<OnceLock<Arc<OrgModel>>>,
}

impl Snapshot {
    pub fn view(&self) -> View<'_> {
        View::new(&self.content, self.state, self.cap).with_memo(&self.memo)
    }

    pub fn state(&self) -> StateIndex {
        self.state
    }

    pub fn content(&self) -> &Content {
        &self.content
    }

    pub fn content_hash(&self) -> String {
        self.content.content_hash()
    }

    pub fn org(&self) -> Arc<OrgModel> {
        self.org.get_or_init(|| Arc::new(OrgModel::from_view(&self.view()))).clone()
    }

    /// Id of a concept or meta-object by name.
    pub fn id_of(&self, name: &str) -> Result<Id> {
        self.content.name_id(name).ok_or_else(|| Error::UnknownDomain(name.to_string()))
    }

    pub fn concept_id(&self, name: &str) -> Result<Id> {
        match self.content.concept_by_name(name) {
            Some(c) => Ok(c.id),
            None => Err(Error::UnknownConcept(name.to_string())),
        }
    }

    pub fn domain(&self, name: &str) -> Result<DomainRef> {
        self.view().resolve_domain(name)
    }

    pub fn extent(&self, concept: Id) -> Result<BTreeSet<Id>> {
        Ok(self.view().extent(concept)?.to_set())
    }

    /// Members of a named domain (concept, meta-object or built-in).
    pub fn members(&self, domain: &str) -> Result<BTreeSet<Id>> {
        let d = self.domain(domain)?;
        Ok(self.view().members(&d)?.to_set())
    }

    pub fn get_object(&self, id: Id) -> Result<DataObject> {
        self.view().get_object(id)
    }

    pub fn describe(&self, id: Id) -> Result<DataObject> {
        self.view().describe(id)
    }

    pub fn meta_extent(&self, meta: Id) -> Result<BTreeSet<Id>> {
        Ok(self.view().meta_extent(meta)?.as_ref().clone())
    }

    pub fn individuate(&self, formula: &str, domain: &str) -> Result<Id> {
        let f = formula::parse(formula)?;
        let d = self.domain(domain)?;
        self.view().individuate(&f, &d)
    }

    pub fn query(&self, formula: &str, domain: &str) -> Result<BTreeSet<Id>> {
        let f = formula::parse(formula)?;
        let d = self.domain(domain)?;
        self.view().filter(&f, &d)
    }

    pub fn evaluate(&self, f: &Formula, subject: Id) -> Result<bool> {
        self.view().evaluate(f, &formula::Binding::stored(subject))
    }

    /// Value of one attribute of an alive individual.
    pub fn value(&self, id: Id, attr: &str) -> Option<Value> {
        self.content.individual(id).filter(|r| r.alive()).and_then(|r| r.values.get(attr).cloned())
    }

    pub fn decide(&self, session: &Session, action: AccessAction, target: &Target) -> Result<Decision> {
        session.ensure_open()?;
        Ok(access::decide(&session.profile, &self.view(), action, target))
    }

    pub fn can_read(&self, profile: &AccessProfile, id: Id) -> bool {
        access::decide(profile, &self.view(), AccessAction::Read, &Target::Individual(id)).allowed()
    }
}

/// One state increment of a batch.
pub(crate) enum Step {
    Cmd(Command),
    /// A command whose created id later seeds of the batch can name.
    Keyed { key: String, cmd: Command },
    /// A create whose text values `@key` name earlier seeds of the batch.
    Seed { key: Option<String>, concept: String, values: JsonMap },
    /// Pre-built effects such as pack markers and rollback.
    Raw { kind: String, request: serde_json::Value, effects: Vec<Effect> },
}

fn resolve_keys(values: JsonMap, keys: &BTreeMap<String, Id>) -> Result<JsonMap> {
    values
        .into_iter()
        .map(|(k, v)| match v.as_str().and_then(|s| s.strip_prefix('@')) {
            Some(key) => keys
                .get(key)
                .map(|id| (k.clone(), serde_json::json!(id.0)))
                .ok_or_else(|| Error::Validation(vec![format!("{k}: unknown seed key '@{key}'")])),
            None => Ok((k, v)),
        })
        .collect()
}

/// A fully prepared state increment, not yet committed.
struct Prepared {
    kind: String,
    request: serde_json::Value,
    effects: Vec<Effect>,
    content: Arc<Content>,
    receipt: Receipt,
}

struct Inner {
    history: Vec<Arc<Content>>,
    records: Vec<EventRecord>,
    next_id: u64,
    log: Option<LogFile>,
    sidecar: Option<PathBuf>,
}

impl Inner {
    fn head(&self) -> StateIndex {
        StateIndex(self.history.len() as u64 - 1)
    }

    fn last_hash(&self) -> String {
        self.records.last().map(|r| r.hash.clone()).unwrap_or_else(|| LogHeader::default().hash())
    }
}

pub struct Store {
    inner: RwLock<Inner>,
    writer: Mutex<()>,
    memo: Arc<MetaMemo>,
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    config: StoreConfig,
    dir: Option<PathBuf>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("head", &self.head()).field("dir", &self.dir).finish()
    }
}

fn effects_of(rec: &EventRecord) -> Result<Vec<Effect>> {
    let payload: Payload = serde_json::from_value(rec.payload.clone())
        .map_err(|e| Error::CorruptLog { seq: rec.seq, reason: format!("unreadable payload: {e}") })?;
    Ok(payload.effects)
}

/// Folds effects onto the content of the previous state.
fn step(history: &[Arc<Content>], effects: &[Effect], state: StateIndex) -> std::result::Result<Content, String> {
    let mut content = (**history.last().expect("genesis present")).clone();
    for e in effects {
        match e {
            Effect::Restore { to } => {
                content = (*history.get(to.0 as usize).ok_or_else(|| format!("restore to unknown state {to}"))?)
                    .as_ref()
                    .clone();
            }
            other => content.apply(other, state)?,
        }
    }
    Ok(content)
}

/// Rebuilds the per-state history from log records.
fn fold(records: &[EventRecord]) -> Result<Vec<Arc<Content>>> {
    let mut history = vec![Arc::new(Content::genesis())];
    for rec in records {
        let effects = effects_of(rec)?;
        let content = step(&history, &effects, StateIndex(rec.seq))
            .map_err(|reason| Error::CorruptLog { seq: rec.seq, reason })?;
        history.push(Arc::new(content));
    }
    Ok(history)
}

fn next_id_after(records: &[EventRecord]) -> Result<u64> {
    let mut next = FIRST_USER_ID;
    for r in records {
        if let Some(m) = max_id(&effects_of(r)?) {
            next = next.max(m + 1);
        }
    }
    Ok(next)
}

#[derive(Serialize, Deserialize)]
struct SidecarLine {
    state: StateIndex,
    content_hash: String,
}

/// Ids of individuals the effects create, change or retire.
fn touched(effects: &[Effect]) -> BTreeSet<Id> {
    effects
        .iter()
        .filter_map(|e| match e {
            Effect::Create { id, .. } => Some(*id),
            Effect::SetValues { target, .. } | Effect::Retire { target } => Some(*target),
            _ => None,
        })
        .collect()
}

/// Org tree and assignment invariants over the draft, checked only when the
/// effects touch the relevant concepts.
fn validate_structure(draft: &Content, effects: &[Effect]) -> Result<()> {
    let concept_of = |id: Id| draft.individual(id).map(|r| r.concept);
    let ids = touched(effects);
    let touches = |name: &str| {
        draft.name_id(name).is_some_and(|c| ids.iter().any(|id| concept_of(*id) == Some(c)))
    };
    if touches(org::ORG_UNIT) {
        let unit_c = draft.name_id(org::ORG_UNIT).expect("checked");
        let parent = |u: Id| {
            draft
                .individual(u)
                .and_then(|r| r.values.get("parent").and_then(Value::as_ref_id))
                .filter(|p| draft.alive_members(unit_c).contains(p))
        };
        let units = draft.alive_members(unit_c);
        let roots = units.iter().filter(|u| parent(**u).is_none()).count();
        if !units.is_empty() && roots != 1 {
            return Err(Error::Validation(vec![format!("org units must form a single tree, found {roots} roots")]));
        }
        for u in units.iter() {
            let mut at = *u;
            for _ in 0..=units.len() {
                match parent(at) {
                    Some(p) if p == *u => {
                        return Err(Error::Validation(vec![format!("org unit {u} is its own ancestor")]));
                    }
                    Some(p) => at = p,
                    None => break,
                }
            }
        }
    }
    if touches(org::ASSIGNMENT) {
        let assign_c = draft.name_id(org::ASSIGNMENT).expect("checked");
        for id in &ids {
            let Some(rec) = draft.individual(*id).filter(|r| r.alive() && r.concept == assign_c) else { continue };
            for (key, err) in [("position", true), ("employee", false)] {
                let Some(target) = rec.values.get(key).and_then(Value::as_ref_id) else { continue };
                let count = draft
                    .referrers(target)
                    .filter(|a| {
                        draft.individual(*a).is_some_and(|r| {
                            r.concept == assign_c && r.values.get(key).and_then(Value::as_ref_id) == Some(target)
                        })
                    })
                    .count();
                if count > 1 {
                    return Err(if err {
                        Error::NotVacant(target)
                    } else {
                        Error::Validation(vec![format!("employee {target} already has an active assignment")])
                    });
                }
            }
        }
    }
    Ok(())
}

impl Store {
    fn with_inner(inner: Inner, config: StoreConfig, dir: Option<PathBuf>) -> Store {
        Store {
            inner: RwLock::new(inner),
            writer: Mutex::new(()),
            memo: Arc::new(MetaMemo::bounded(config.memo_bound)),
            sessions: RwLock::new(HashMap::new()),
            config,
            dir,
        }
    }

    /// A store that lives only in memory.
    pub fn in_memory(config: StoreConfig) -> Store {
        let inner = Inner {
            history: vec![Arc::new(Content::genesis())],
            records: Vec::new(),
            next_id: FIRST_USER_ID,
            log: None,
            sidecar: None,
        };
        Store::with_inner(inner, config, None)
    }

    /// Creates a new persisted store in `dir`, which must not hold a log yet.
    pub fn create_at(dir: &Path, config: StoreConfig) -> Result<Store> {
        fs::create_dir_all(dir)?;
        let log = LogFile::create(&dir.join(LOG_FILE))?;
        let sidecar = dir.join(SIDECAR_FILE);
        fs::write(&sidecar, "")?;
        let inner = Inner {
            history: vec![Arc::new(Content::genesis())],
            records: Vec::new(),
            next_id: FIRST_USER_ID,
            log: Some(log),
            sidecar: Some(sidecar),
        };
        Ok(Store::with_inner(inner, config, Some(dir.to_path_buf())))
    }

    /// Opens a persisted store: verifies the hash chain, replays the log and
    /// checks the result against the snapshot sidecar.
    pub fn open(dir: &Path, config: StoreConfig) -> Result<Store> {
        let (log, _, records) = LogFile::open(&dir.join(LOG_FILE))?;
        let history = fold(&records)?;
        let sidecar = dir.join(SIDECAR_FILE);
        if sidecar.exists() {
            for line in BufReader::new(fs::File::open(&sidecar)?).lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: SidecarLine = serde_json::from_str(&line)
                    .map_err(|e| Error::CorruptLog { seq: 0, reason: format!("bad snapshot sidecar: {e}") })?;
                if let Some(c) = history.get(entry.state.0 as usize) {
                    if c.content_hash() != entry.content_hash {
                        return Err(Error::CorruptLog {
                            seq: entry.state.0,
                            reason: "replayed content differs from the snapshot sidecar".into(),
                        });
                    }
                }
            }
        }
        let next_id = next_id_after(&records)?;
        let inner = Inner { history, records, next_id, log: Some(log), sidecar: Some(sidecar) };
        Ok(Store::with_inner(inner, config, Some(dir.to_path_buf())))
    }

    pub fn open_or_create(dir: &Path, config: StoreConfig) -> Result<Store> {
        if dir.join(LOG_FILE).exists() {
            Store::open(dir, config)
        } else {
            Store::create_at(dir, config)
        }
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn head(&self) -> StateIndex {
        self.inner.read().unwrap().head()
    }

    fn check_state(&self, state: StateIndex) -> Result<()> {
        let head = self.head();
        if state > head {
            return Err(Error::StateBeyondHead { requested: state, head });
        }
        Ok(())
    }

    /// Read handle on a state (head when `None`).
    pub fn snapshot(&self, state: Option<StateIndex>) -> Result<Snapshot> {
        let inner = self.inner.read().unwrap();
        let head = inner.head();
        let state = state.unwrap_or(head);
        if state > head {
            return Err(Error::StateBeyondHead { requested: state, head });
        }
        Ok(Snapshot {
            content: inner.history[state.0 as usize].clone(),
            state,
            cap: self.config.tower_cap,
            memo: self.memo.clone(),
            org: Arc::new(OnceLock::new()),
        })
    }

    pub fn head_snapshot(&self) -> Snapshot {
        self.snapshot(None).expect("head is always readable")
    }

    pub fn content_hash(&self, state: Option<StateIndex>) -> Result<String> {
        Ok(self.snapshot(state)?.content_hash())
    }

    pub fn records(&self, from: u64, to: Option<u64>) -> Vec<EventRecord> {
        let inner = self.inner.read().unwrap();
        let to = to.unwrap_or(u64::MAX);
        inner.records.iter().filter(|r| r.seq >= from && r.seq <= to).cloned().collect()
    }

    /// Reconstructs the store by folding the first `upto` records.
    pub fn replay(&self, upto: StateIndex) -> Result<StoreSnapshot> {
        self.check_state(upto)?;
        let records = self.records(1, Some(upto.0));
        let history = fold(&records)?;
        let last = history.last().expect("genesis present");
        Ok(StoreSnapshot { state: upto, content_hash: last.content_hash() })
    }

    // Sessions.

    fn register(&self, session: Session) -> Arc<Session> {
        let s = Arc::new(session);
        let mut sessions = self.sessions.write().unwrap();
        sessions.retain(|_, s| s.is_open());
        sessions.insert(s.id.clone(), s.clone());
        s
    }

    /// A fresh session for the built-in administrator.
    pub fn admin_session(&self) -> Arc<Session> {
        let snap = self.head_snapshot();
        let profile = access::system_profile(snap.content());
        self.register(Session::new(ADMIN_LOGIN, None, profile, snap.state(), self.config.session_ttl))
    }

    /// Authenticates either the administrator or an employee by login and
    /// passcode, deriving the employee's profile from the head org chart.
    pub fn login(&self, login: &str, password: &str) -> Result<Arc<Session>> {
        if login == ADMIN_LOGIN {
            return if password == self.config.admin_password { Ok(self.admin_session()) } else { Err(Error::AuthFailed) };
        }
        let snap = self.head_snapshot();
        let digest = passcode_digest(password);
        let user = org::alive_of(snap.content(), org::EMPLOYEE)
            .find(|(_, v)| v.get("login").and_then(Value::as_text) == Some(login))
            .filter(|(_, v)| v.get("passcode").and_then(Value::as_text) == Some(digest.as_str()))
            .map(|(id, _)| id)
            .ok_or(Error::AuthFailed)?;
        self.open_session_with(login, user, &snap)
    }

    /// Opens a session for a user without credentials (in-process callers).
    pub fn open_session_for(&self, user: Id) -> Result<Arc<Session>> {
        let snap = self.head_snapshot();
        let login = snap.value(user, "login").and_then(|v| v.as_text().map(str::to_string));
        let login = login.unwrap_or_else(|| format!("user{user}"));
        self.open_session_with(&login, user, &snap)
    }

    fn open_session_with(&self, login: &str, user: Id, snap: &Snapshot) -> Result<Arc<Session>> {
        if snap.content().individual(user).filter(|r| r.alive()).is_none() {
            return Err(Error::UnknownId(user));
        }
        let profile = access::derive_profile(&snap.view(), &snap.org(), user)?;
        Ok(self.register(Session::new(login, Some(user), profile, snap.state(), self.config.session_ttl)))
    }

    pub fn derive_profile(&self, user: Id, state: Option<StateIndex>) -> Result<AccessProfile> {
        let snap = self.snapshot(state)?;
        access::derive_profile(&snap.view(), &snap.org(), user)
    }

    pub fn session(&self, token: &str) -> Result<Arc<Session>> {
        let s = self.sessions.read().unwrap().get(token).cloned().ok_or(Error::SessionClosed)?;
        s.ensure_open()?;
        Ok(s)
    }

    pub fn close_session(&self, token: &str) -> Result<()> {
        let s = self.sessions.write().unwrap().remove(token).ok_or(Error::SessionClosed)?;
        s.close();
        Ok(())
    }

    pub fn check_access(
        &self,
        session: &Session,
        action: AccessAction,
        target: &Target,
        state: Option<StateIndex>,
    ) -> Result<Decision> {
        self.snapshot(state)?.decide(session, action, target)
    }

    /// Attributes a submit of a `concept` draft with these values must carry.
    pub fn mandatory_fields(&self, session: &Session, concept: &str, draft: &JsonMap) -> Result<BTreeSet<String>> {
        session.ensure_open()?;
        let snap = self.head_snapshot();
        let def = snap.content().concept_by_name(concept).ok_or_else(|| Error::UnknownConcept(concept.into()))?;
        // Ill-typed or unknown draft fields are ignored here; submit reports them.
        let values: BTreeMap<String, Value> = draft
            .iter()
            .filter_map(|(k, raw)| {
                let attr = def.attribute(k)?;
                Value::from_json(raw, attr.value_type).ok().map(|v| (k.clone(), v))
            })
            .collect();
        access::mandatory_fields(&session.profile, &snap.view(), def.id, &values)
    }

    // Writes.

    pub fn submit(&self, session: &Session, cmd: Command) -> Result<Receipt> {
        self.submit_batch(session, vec![cmd]).map(|mut r| r.remove(0))
    }

    pub fn submit_json(&self, session: &Session, event: &serde_json::Value) -> Result<Receipt> {
        self.submit(session, Command::from_json(event)?)
    }

    /// Submits commands as consecutive states; either all commit or none.
    pub fn submit_batch(&self, session: &Session, cmds: Vec<Command>) -> Result<Vec<Receipt>> {
        self.submit_steps(session, cmds.into_iter().map(Step::Cmd).collect())
    }

    /// Runs a batch of steps, each one state, committing all or nothing.
    pub(crate) fn submit_steps(&self, session: &Session, steps: Vec<Step>) -> Result<Vec<Receipt>> {
        session.ensure_open()?;
        let _w = self.writer.lock().unwrap();
        let (mut head, mut head_state, mut next_id) = {
            let inner = self.inner.read().unwrap();
            (inner.history.last().unwrap().clone(), inner.head(), inner.next_id)
        };
        let mut keys: BTreeMap<String, Id> = BTreeMap::new();
        let mut prepared = Vec::with_capacity(steps.len());
        for step in steps {
            let p = match step {
                Step::Cmd(cmd) => self.prepare(session, &cmd, head, head_state, &mut next_id)?,
                Step::Keyed { key, cmd } => {
                    let p = self.prepare(session, &cmd, head, head_state, &mut next_id)?;
                    if let Some(id) = p.receipt.created {
                        keys.insert(key, id);
                    }
                    p
                }
                Step::Seed { key, concept, values } => {
                    let values = resolve_keys(values, &keys)?;
                    let p = self.prepare(session, &Command::Create { concept, values }, head, head_state, &mut next_id)?;
                    if let (Some(k), Some(id)) = (key, p.receipt.created) {
                        keys.insert(k, id);
                    }
                    p
                }
                Step::Raw { kind, request, effects } => self.prepare_raw(session, kind, request, effects, head, head_state)?,
            };
            head = p.content.clone();
            head_state = p.receipt.state;
            prepared.push(p);
        }
        self.commit(session, prepared, next_id)
    }

    fn prepare_raw(
        &self,
        session: &Session,
        kind: String,
        request: serde_json::Value,
        effects: Vec<Effect>,
        head: Arc<Content>,
        head_state: StateIndex,
    ) -> Result<Prepared> {
        let view = View::new(&head, head_state, self.config.tower_cap);
        access::decide(&session.profile, &view, AccessAction::Write, &Target::EventKind(kind.clone())).into_result()?;
        let state = head_state.next();
        let mut content = (*head).clone();
        for e in &effects {
            match e {
                Effect::Restore { to } => {
                    let inner = self.inner.read().unwrap();
                    let past = inner
                        .history
                        .get(to.0 as usize)
                        .ok_or(Error::StateBeyondHead { requested: *to, head: inner.head() })?;
                    content = past.as_ref().clone();
                }
                other => content.apply(other, state).map_err(|m| Error::Validation(vec![m]))?,
            }
        }
        Ok(Prepared {
            kind,
            request,
            effects,
            content: Arc::new(content),
            receipt: Receipt { state, subject: None, created: None },
        })
    }

    /// Runs the full submit pipeline for one command on top of `head`.
    fn prepare(
        &self,
        session: &Session,
        cmd: &Command,
        head: Arc<Content>,
        head_state: StateIndex,
        next_id: &mut u64,
    ) -> Result<Prepared> {
        let state = head_state.next();
        let kind = cmd.kind();
        let profile = &session.profile;
        let head_view = View::new(&head, head_state, self.config.tower_cap);
        access::decide(profile, &head_view, AccessAction::Write, &Target::EventKind(kind.into())).into_result()?;

        let mut counter = *next_id;
        let mut alloc = || {
            let id = Id(counter);
            counter += 1;
            id
        };
        let compiled = compile(cmd, &View::new(&head, state, self.config.tower_cap), &mut alloc)?;
        let mut draft = (*head).clone();
        for e in &compiled.effects {
            draft.apply(e, state).map_err(|m| Error::Validation(vec![m]))?;
        }
        let mut effects = compiled.effects;

        if DATA_KINDS.contains(&kind) {
            for id in touched(&effects) {
                if head.individual(id).is_some() {
                    access::decide(profile, &head_view, AccessAction::Write, &Target::Individual(id)).into_result()?;
                }
                if draft.individual(id).is_some_and(|r| r.alive()) {
                    let draft_view = View::new(&draft, state, self.config.tower_cap);
                    access::decide(profile, &draft_view, AccessAction::Write, &Target::Individual(id))
                        .into_result()?;
                }
            }
        }

        if RULE_TRIGGERS.contains(&kind) {
            let memo = MetaMemo::new();
            let firing = {
                let draft_view = View::new(&draft, state, self.config.tower_cap).with_memo(&memo);
                rules::fire(&draft_view, kind, compiled.subject, &mut alloc)?
            };
            match firing {
                Firing::Rejected { rule, message } => return Err(Error::RuleRejection { rule, message }),
                Firing::Accepted(extra) => {
                    for e in &extra {
                        draft.apply(e, state).map_err(|m| Error::Validation(vec![m]))?;
                    }
                    effects.extend(extra);
                }
            }
        }

        if let Some(id) = compiled.mandatory {
            if let Some(rec) = draft.individual(id).filter(|r| r.alive()) {
                let draft_view = View::new(&draft, state, self.config.tower_cap);
                let required = access::required_fields(profile.scenario, &draft_view, rec.concept, &rec.values)?;
                let missing: Vec<String> = required
                    .iter()
                    .filter(|a| !rec.values.contains_key(*a))
                    .map(|a| format!("missing required field: {a}"))
                    .collect();
                if !missing.is_empty() {
                    return Err(Error::Validation(missing));
                }
            }
        }

        validate_structure(&draft, &effects)?;
        *next_id = counter;
        Ok(Prepared {
            kind: kind.to_string(),
            request: cmd.to_json(),
            effects,
            content: Arc::new(draft),
            receipt: Receipt { state, subject: compiled.subject, created: compiled.created },
        })
    }

    fn commit(&self, session: &Session, prepared: Vec<Prepared>, next_id: u64) -> Result<Vec<Receipt>> {
        let mut inner = self.inner.write().unwrap();
        let mut prev = inner.last_hash();
        let actor = session.actor();
        let mut records = Vec::with_capacity(prepared.len());
        for p in &prepared {
            let payload = serde_json::to_value(Payload { request: p.request.clone(), effects: p.effects.clone() })
                .expect("payload serializes");
            let rec = EventRecord::new(p.receipt.state.0, &actor, &p.kind, payload, &prev);
            prev = rec.hash.clone();
            records.push(rec);
        }
        if let Some(log) = inner.log.as_mut() {
            log.append(&records)?;
        }
        let mut checkpoints = Vec::new();
        for (p, rec) in prepared.iter().zip(records) {
            if p.receipt.state.0 % SIDECAR_INTERVAL == 0 {
                checkpoints.push(SidecarLine { state: p.receipt.state, content_hash: p.content.content_hash() });
            }
            inner.history.push(p.content.clone());
            inner.records.push(rec);
        }
        inner.next_id = inner.next_id.max(next_id);
        if let (Some(path), false) = (inner.sidecar.clone(), checkpoints.is_empty()) {
            let mut f = OpenOptions::new().append(true).open(path)?;
            for c in checkpoints {
                writeln!(f, "{}", serde_json::to_string(&c).expect("sidecar line serializes"))?;
            }
        }
        Ok(prepared.into_iter().map(|p| p.receipt).collect())
    }

    /// Appends a rollback marker; afterwards head content equals the
    /// content at `to`. Returns the new head.
    pub fn rollback(&self, session: &Session, to: StateIndex) -> Result<StateIndex> {
        session.ensure_open()?;
        self.check_state(to)?;
        let receipts = self.submit_steps(
            session,
            vec![Step::Raw {
                kind: "rollback_marker".into(),
                request: serde_json::json!({ "to": to }),
                effects: vec![Effect::Restore { to }],
            }],
        )?;
        Ok(receipts[0].state)
    }

    // Convenience wrappers used by examples and tests.

    pub fn define_concept(&self, session: &Session, name: &str, attributes: Vec<crate::event::AttrDraft>) -> Result<Id> {
        let r = self.submit(session, Command::define_concept(name, attributes))?;
        Ok(r.created.expect("define_concept creates"))
    }

    pub fn comprehend(&self, session: &Session, name: &str, domain: &str, formula: &str) -> Result<Id> {
        let r = self.submit(session, Command::comprehend(name, domain, formula))?;
        Ok(r.created.expect("comprehend creates"))
    }

    pub fn create(&self, session: &Session, concept: &str, values: serde_json::Value) -> Result<Id> {
        let r = self.submit(session, Command::create(concept, values))?;
        Ok(r.created.expect("create creates"))
    }

    pub fn register_rule(&self, session: &Session, rule: rules::RuleDraft) -> Result<Id> {
        let r = self.submit(session, Command::RuleRegister { rule })?;
        Ok(r.created.expect("rule registration creates"))
    }

    pub fn is_metadata_kind(kind: &str) -> bool {
        METADATA_KINDS.contains(&kind)
    }
}

/// Digest stored in `Employee.passcode`.
pub fn passcode_digest(password: &str) -> String {
    sha256_hex(password.as_bytes())
}

/// Scenario a fresh session of this user would get.
pub fn scenario_of(store: &Store, user: Id) -> Result<Scenario> {
    Ok(store.derive_profile(user, None)?.scenario)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::event::AttrDraft;
    use serde_json::json;

    fn people() -> (Store, Arc<Session>) {
        let store = Store::in_memory(StoreConfig::default());
        let admin = store.admin_session();
        store
            .define_concept(&admin, "Person", vec![AttrDraft::new("name", "text").required(), AttrDraft::new("age", "integer")])
            .unwrap();
        (store, admin)
    }

    #[test]
    fn states_advance_one_per_event() {
        let (store, admin) = people();
        assert_eq!(store.head(), StateIndex(1));
        let a = store.create(&admin, "Person", json!({"name": "Ivanov", "age": 40})).unwrap();
        assert_eq!(store.head(), StateIndex(2));
        store.submit(&admin, Command::set_attr(a, json!({"age": 41}))).unwrap();
        let before = store.snapshot(Some(StateIndex(2))).unwrap();
        assert_eq!(before.value(a, "age"), Some(Value::Integer(40)));
        assert_eq!(store.head_snapshot().value(a, "age"), Some(Value::Integer(41)));
    }

    #[test]
    fn rejected_submit_changes_nothing() {
        let (store, admin) = people();
        let hash = store.content_hash(None).unwrap();
        let err = store.create(&admin, "Person", json!({"age": 3})).unwrap_err();
        assert_eq!(err, Error::Validation(vec!["missing required field: name".into()]));
        assert_eq!(store.head(), StateIndex(1));
        assert_eq!(store.content_hash(None).unwrap(), hash);
        assert!(matches!(store.create(&admin, "Person", json!({"name": 5})), Err(Error::Validation(_))));
    }

    #[test]
    fn rollback_masks_and_ids_stay_fresh() {
        let (store, admin) = people();
        let a = store.create(&admin, "Person", json!({"name": "A"})).unwrap();
        let k = store.head();
        let b = store.create(&admin, "Person", json!({"name": "B"})).unwrap();
        let head = store.rollback(&admin, k).unwrap();
        assert_eq!(head, StateIndex(4));
        assert_eq!(store.content_hash(None).unwrap(), store.content_hash(Some(k)).unwrap());
        let c = store.create(&admin, "Person", json!({"name": "C"})).unwrap();
        assert!(c > b && b > a);
        assert_eq!(store.replay(store.head()).unwrap().content_hash, store.content_hash(None).unwrap());
        assert!(matches!(store.rollback(&admin, StateIndex(99)), Err(Error::StateBeyondHead { .. })));
    }

    #[test]
    fn persisted_store_reopens_identically() {
        let dir = tempfile::tempdir().unwrap();
        let hash;
        {
            let store = Store::create_at(dir.path(), StoreConfig::default()).unwrap();
            let admin = store.admin_session();
            store.define_concept(&admin, "Tag", vec![]).unwrap();
            for _ in 0..120 {
                store.create(&admin, "Tag", json!({})).unwrap();
            }
            hash = store.content_hash(None).unwrap();
        }
        let store = Store::open(dir.path(), StoreConfig::default()).unwrap();
        assert_eq!(store.head(), StateIndex(121));
        assert_eq!(store.content_hash(None).unwrap(), hash);
        let sidecar = fs::read_to_string(dir.path().join(SIDECAR_FILE)).unwrap();
        assert_eq!(sidecar.lines().count(), 1);
    }

    #[test]
    fn closed_sessions_are_unusable() {
        let (store, admin) = people();
        store.close_session(&admin.id).unwrap();
        assert_eq!(store.create(&admin, "Person", json!({"name": "x"})).unwrap_err(), Error::SessionClosed);
        assert!(store.session(&admin.id).is_err());
        assert_eq!(store.login("admin", "nope").unwrap_err(), Error::AuthFailed);
    }
}
