//! Session access profiles derived from the org chart, access decisions,
//! and dynamic mandatory fields.
//!
//! Grants follow a fixed decision table per scenario:
//!
//! | scenario      | units        | read                         | write / events                       | metadata |
//! |---------------|--------------|------------------------------|--------------------------------------|----------|
//! | president     | all          | everything                   | everything                           | yes      |
//! | hr_director   | all          | everything                   | everything                           | yes      |
//! | unit_manager  | own subtree  | every concept and meta       | Employee, Assignment via hire, transfer, dismiss, re_enroll | no |
//! | hr_officer    | own subtree  | HR and org concepts          | same concepts; data and lifecycle events | no    |
//! | employee      | own unit     | own Personal Data and leave records | leave_request only            | no       |
//!
//! Anything not in the table is denied.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::content::Content;
use crate::error::{Error, Result};
use crate::formula::{self, Binding, Formula};
use crate::model::{Id, StateIndex, CONCEPT_CONCEPT, META_CONCEPT};
use crate::org::{self, OrgModel};
use crate::packs::{HR_PACKS, LEAVES_PACK, ORG_PACK, PERSONAL_DATA_PACK};
use crate::value::Value;
use crate::view::View;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    President,
    HrDirector,
    UnitManager,
    HrOfficer,
    Employee,
}

impl Scenario {
    pub const ALL: [Scenario; 5] =
        [Scenario::President, Scenario::HrDirector, Scenario::UnitManager, Scenario::HrOfficer, Scenario::Employee];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scenario::President => "president",
            Scenario::HrDirector => "hr_director",
            Scenario::UnitManager => "unit_manager",
            Scenario::HrOfficer => "hr_officer",
            Scenario::Employee => "employee",
        }
    }

    pub fn parse(s: &str) -> Option<Scenario> {
        Scenario::ALL.into_iter().find(|x| x.as_str() == s)
    }

    fn sees_everything(&self) -> bool {
        matches!(self, Scenario::President | Scenario::HrDirector)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessAction {
    Read,
    Write,
    Define,
}

impl AccessAction {
    pub const ALL: [AccessAction; 3] = [AccessAction::Read, AccessAction::Write, AccessAction::Define];
}

/// Personnel Dynamics lifecycle event kinds.
pub const LIFECYCLE_KINDS: [&str; 4] = ["hire", "transfer", "dismiss", "re_enroll"];
/// Event kinds that change individuals.
pub const DATA_KINDS: [&str; 8] =
    ["create", "set_attr", "retire", "hire", "transfer", "dismiss", "re_enroll", "leave_request"];
/// Event kinds that change metadata; they require a metadata administrator.
pub const METADATA_KINDS: [&str; 9] = [
    "define_concept",
    "extend_concept",
    "comprehend",
    "rule_register",
    "add_override",
    "set_params",
    "annotate",
    "pack_apply",
    "rollback_marker",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    All,
    Units(BTreeSet<Id>),
}

impl Scope {
    pub fn contains(&self, unit: Id) -> bool {
        match self {
            Scope::All => true,
            Scope::Units(s) => s.contains(&unit),
        }
    }

    pub fn is_all(&self) -> bool {
        matches!(self, Scope::All)
    }
}

/// Extra required attributes for drafts of a concept satisfying a condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MandatoryOverride {
    pub id: Id,
    pub name: String,
    pub concept: Id,
    /// Absent means always.
    #[serde(default)]
    pub condition: Option<Formula>,
    pub require: Vec<String>,
    /// Absent means every scenario.
    #[serde(default)]
    pub scenarios: Option<Vec<Scenario>>,
    #[serde(default)]
    pub origin_pack: Option<String>,
    pub defined_at: StateIndex,
}

impl MandatoryOverride {
    pub fn applies_to(&self, scenario: Scenario) -> bool {
        self.scenarios.as_ref().map_or(true, |s| s.contains(&scenario))
    }
}

/// An override as written in a manifest or request body.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OverrideDraft {
    pub name: String,
    pub concept: String,
    #[serde(default)]
    pub condition: Option<String>,
    pub require: Vec<String>,
    #[serde(default)]
    pub scenarios: Option<Vec<Scenario>>,
    #[serde(default)]
    pub origin_pack: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccessProfile {
    pub scenario: Scenario,
    /// None for the built-in administrator.
    pub user: Option<Id>,
    pub unit: Option<Id>,
    pub visible_units: Scope,
    pub grants: BTreeSet<(Id, AccessAction)>,
    pub event_kinds: BTreeSet<String>,
    pub metadata_admin: bool,
    pub mandatory_overrides: Vec<MandatoryOverride>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "id", rename_all = "snake_case")]
pub enum Target {
    Concept(Id),
    Meta(Id),
    Individual(Id),
    EventKind(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "decision", content = "reason", rename_all = "snake_case")]
pub enum Decision {
    Allow,
    Deny(String),
}

impl Decision {
    pub fn allowed(&self) -> bool {
        matches!(self, Decision::Allow)
    }

    pub fn into_result(self) -> Result<()> {
        match self {
            Decision::Allow => Ok(()),
            Decision::Deny(reason) => Err(Error::AccessDenied(reason)),
        }
    }
}

fn pack_of(content: &Content, concept: Id) -> Option<&str> {
    content.concept(concept).and_then(|c| c.origin_pack.as_deref())
}

/// The grant set of a scenario over the concepts and metas of `content`.
pub fn scenario_grants(scenario: Scenario, content: &Content) -> BTreeSet<(Id, AccessAction)> {
    use AccessAction::*;
    let mut g = BTreeSet::new();
    let is_hr = |c: Id| pack_of(content, c).is_some_and(|p| p == ORG_PACK || HR_PACKS.contains(&p));
    for c in content.concepts() {
        let id = c.id;
        match scenario {
            Scenario::President | Scenario::HrDirector => {
                g.extend([(id, Read), (id, Write), (id, Define)]);
            }
            Scenario::UnitManager => {
                g.insert((id, Read));
                if c.name == org::EMPLOYEE || c.name == org::ASSIGNMENT {
                    g.insert((id, Write));
                }
            }
            Scenario::HrOfficer => {
                if is_hr(id) {
                    g.extend([(id, Read), (id, Write)]);
                }
            }
            Scenario::Employee => {
                if pack_of(content, id).is_some_and(|p| p == PERSONAL_DATA_PACK || p == LEAVES_PACK) {
                    g.insert((id, Read));
                }
                if c.name == org::LEAVE_REQUEST {
                    g.insert((id, Write));
                }
            }
        }
    }
    for m in content.metas() {
        match scenario {
            Scenario::President | Scenario::HrDirector => {
                g.extend([(m.id, Read), (m.id, Write), (m.id, Define)]);
            }
            Scenario::UnitManager => {
                g.insert((m.id, Read));
            }
            Scenario::HrOfficer | Scenario::Employee => {}
        }
    }
    g
}

pub fn scenario_event_kinds(scenario: Scenario) -> BTreeSet<String> {
    let kinds: Vec<&str> = match scenario {
        Scenario::President | Scenario::HrDirector => DATA_KINDS.iter().chain(METADATA_KINDS.iter()).copied().collect(),
        Scenario::UnitManager => LIFECYCLE_KINDS.to_vec(),
        Scenario::HrOfficer => DATA_KINDS.to_vec(),
        Scenario::Employee => vec!["leave_request"],
    };
    kinds.into_iter().map(String::from).collect()
}

fn build_profile(
    scenario: Scenario,
    user: Option<Id>,
    unit: Option<Id>,
    visible_units: Scope,
    content: &Content,
) -> AccessProfile {
    AccessProfile {
        scenario,
        user,
        unit,
        visible_units,
        grants: scenario_grants(scenario, content),
        event_kinds: scenario_event_kinds(scenario),
        metadata_admin: scenario.sees_everything(),
        mandatory_overrides: content.overrides().filter(|o| o.applies_to(scenario)).cloned().collect(),
    }
}

/// Profile of the built-in administrator: everything, everywhere.
pub fn system_profile(content: &Content) -> AccessProfile {
    build_profile(Scenario::President, None, None, Scope::All, content)
}

/// Derives a user's profile from the org content of a state.
pub fn derive_profile(view: &View<'_>, org: &OrgModel, user: Id) -> Result<AccessProfile> {
    let content = view.content();
    let (_, position) = org::active_assignment(content, user).ok_or(Error::NoAssignment)?;
    let pos = org.positions.get(&position).ok_or(Error::NoAssignment)?;
    let scenario = org
        .scenario_titles
        .get(&pos.title)
        .and_then(|s| Scenario::parse(s))
        .unwrap_or(Scenario::Employee);
    let visible = match scenario {
        Scenario::President | Scenario::HrDirector => Scope::All,
        Scenario::UnitManager | Scenario::HrOfficer => Scope::Units(org.subtree(pos.unit)),
        Scenario::Employee => Scope::Units(BTreeSet::from([pos.unit])),
    };
    Ok(build_profile(scenario, Some(user), Some(pos.unit), visible, content))
}

/// The unit an individual belongs to. Units own themselves, positions
/// belong to their unit, employees to the unit of their held position (or
/// their department), and anything else to the owner of its first
/// reference that has one. Objects without an owner are global.
pub fn owner_unit(content: &Content, id: Id) -> Option<Id> {
    owner_at_depth(content, id, 0)
}

fn owner_at_depth(content: &Content, id: Id, depth: usize) -> Option<Id> {
    if depth > 4 {
        return None;
    }
    let rec = content.individual(id)?;
    let name = content.concept(rec.concept)?.name.as_str();
    let reference = |k: &str| rec.values.get(k).and_then(Value::as_ref_id);
    match name {
        org::ORG_UNIT => Some(id),
        org::POSITION => reference("unit"),
        org::EMPLOYEE => org::active_assignment(content, id)
            .and_then(|(_, p)| content.individual(p))
            .and_then(|p| p.values.get("unit").and_then(Value::as_ref_id))
            .or_else(|| reference("dept")),
        _ => {
            let def = content.concept(rec.concept)?;
            def.attributes.iter().find_map(|a| {
                let target = rec.values.get(&a.name)?.as_ref_id()?;
                owner_at_depth(content, target, depth + 1)
            })
        }
    }
}

/// Whether an individual is the user or directly references the user.
fn is_own_record(content: &Content, user: Id, id: Id) -> bool {
    id == user || content.individual(id).is_some_and(|r| r.values.values().any(|v| v.as_ref_id() == Some(user)))
}

/// Administrators hold every grant, including on objects defined after
/// their session opened.
fn granted(profile: &AccessProfile, id: Id, action: AccessAction) -> bool {
    profile.metadata_admin || profile.grants.contains(&(id, action))
}

/// The access decision for one action on one target at one state.
pub fn decide(profile: &AccessProfile, view: &View<'_>, action: AccessAction, target: &Target) -> Decision {
    let content = view.content();
    let deny = |s: &str| Decision::Deny(s.to_string());
    match target {
        Target::EventKind(kind) => {
            if METADATA_KINDS.contains(&kind.as_str()) {
                if profile.metadata_admin {
                    Decision::Allow
                } else {
                    deny("metadata_admin required")
                }
            } else if !DATA_KINDS.contains(&kind.as_str()) {
                Decision::Deny(format!("unknown event kind '{kind}'"))
            } else if profile.event_kinds.contains(kind) {
                Decision::Allow
            } else {
                Decision::Deny(format!("scenario {} may not submit '{kind}'", profile.scenario.as_str()))
            }
        }
        Target::Concept(c) => {
            if content.concept(*c).is_none() {
                return deny("unknown concept");
            }
            if action == AccessAction::Define {
                return if profile.metadata_admin { Decision::Allow } else { deny("metadata_admin required") };
            }
            if granted(profile, *c, action) {
                Decision::Allow
            } else {
                Decision::Deny(format!("no {action:?} grant on concept {c}").to_lowercase())
            }
        }
        Target::Meta(m) => {
            if content.meta(*m).is_none() {
                return deny("unknown meta-object");
            }
            match action {
                AccessAction::Read if granted(profile, *m, AccessAction::Read) => Decision::Allow,
                AccessAction::Read => Decision::Deny(format!("no read grant on meta {m}")),
                _ if profile.metadata_admin => Decision::Allow,
                _ => deny("metadata_admin required"),
            }
        }
        Target::Individual(id) => decide_individual(profile, content, action, *id),
    }
}

fn decide_individual(profile: &AccessProfile, content: &Content, action: AccessAction, id: Id) -> Decision {
    if action == AccessAction::Define {
        return Decision::Deny("define applies to metadata only".into());
    }
    if content.concept(id).is_some() {
        return decide_builtin(profile, action, CONCEPT_CONCEPT);
    }
    if content.meta(id).is_some() {
        return decide_builtin(profile, action, META_CONCEPT);
    }
    let Some(rec) = content.individual(id) else { return Decision::Deny(format!("unknown object {id}")) };
    match owner_unit(content, id) {
        Some(unit) if !profile.visible_units.contains(unit) => {
            return Decision::Deny(format!("out-of-scope unit {unit}"));
        }
        None if action == AccessAction::Write && !profile.visible_units.is_all() => {
            return Decision::Deny("global objects are writable only with full scope".into());
        }
        _ => {}
    }
    if !granted(profile, rec.concept, action) {
        let name = content.concept(rec.concept).map(|c| c.name.as_str()).unwrap_or("?");
        return Decision::Deny(format!("no {} grant on {name}", if action == AccessAction::Read { "read" } else { "write" }));
    }
    if profile.scenario == Scenario::Employee {
        let own = profile.user.is_some_and(|u| is_own_record(content, u, id));
        if !own {
            return Decision::Deny("employees may only access their own records".into());
        }
    }
    Decision::Allow
}

fn decide_builtin(profile: &AccessProfile, action: AccessAction, builtin: Id) -> Decision {
    match action {
        AccessAction::Read if granted(profile, builtin, AccessAction::Read) => Decision::Allow,
        AccessAction::Read => Decision::Deny("no read grant on metadata objects".into()),
        _ if profile.metadata_admin => Decision::Allow,
        _ => Decision::Deny("metadata_admin required".into()),
    }
}

/// Required attributes for a draft of `concept` under a profile: the
/// schema's default-required set plus every override for the profile's
/// scenario whose condition holds for the draft.
pub fn mandatory_fields(
    profile: &AccessProfile,
    view: &View<'_>,
    concept: Id,
    draft: &BTreeMap<String, Value>,
) -> Result<BTreeSet<String>> {
    let def = view.content().concept(concept).ok_or_else(|| Error::UnknownConcept(concept.to_string()))?;
    let visible = granted(profile, concept, AccessAction::Read) || granted(profile, concept, AccessAction::Write);
    if !visible {
        return Err(Error::AccessDenied(format!("concept {} is outside the session's scope", def.name)));
    }
    required_fields(profile.scenario, view, concept, draft)
}

/// Required set without the visibility check; overrides are read from the
/// content so enforcement follows the current metadata.
pub(crate) fn required_fields(
    scenario: Scenario,
    view: &View<'_>,
    concept: Id,
    draft: &BTreeMap<String, Value>,
) -> Result<BTreeSet<String>> {
    let def = view.content().concept(concept).ok_or_else(|| Error::UnknownConcept(concept.to_string()))?;
    let mut out: BTreeSet<String> =
        def.attributes.iter().filter(|a| a.required_by_default).map(|a| a.name.clone()).collect();
    let binding = Binding::draft(concept, draft.clone());
    for o in view.content().overrides() {
        if o.concept != concept || !o.applies_to(scenario) {
            continue;
        }
        let holds = match &o.condition {
            None => true,
            Some(f) => {
                formula::check(f, concept, view)?;
                formula::evaluate_checked(f, &binding, view)?
            }
        };
        if holds {
            out.extend(o.require.iter().cloned());
        }
    }
    Ok(out)
}

/// An authenticated session. The profile is fixed when the session opens.
#[derive(Debug)]
pub struct Session {
    pub id: String,
    pub login: String,
    pub user: Option<Id>,
    pub profile: AccessProfile,
    pub opened_at: StateIndex,
    opened: Instant,
    ttl: Duration,
    closed: AtomicBool,
}

impl Session {
    pub(crate) fn new(login: &str, user: Option<Id>, profile: AccessProfile, at: StateIndex, ttl: Duration) -> Session {
        Session {
            id: uuid::Uuid::new_v4().simple().to_string(),
            login: login.to_string(),
            user,
            profile,
            opened_at: at,
            opened: Instant::now(),
            ttl,
            closed: AtomicBool::new(false),
        }
    }

    pub fn scenario(&self) -> Scenario {
        self.profile.scenario
    }

    pub fn is_open(&self) -> bool {
        !self.closed.load(Ordering::SeqCst) && self.opened.elapsed() < self.ttl
    }

    pub fn close(&self) {
        self.closed.store(true, Ordering::SeqCst);
    }

    pub(crate) fn ensure_open(&self) -> Result<()> {
        if self.is_open() {
            Ok(())
        } else {
            Err(Error::SessionClosed)
        }
    }

    pub fn actor(&self) -> String {
        match self.user {
            Some(u) => format!("{}#{u}", self.login),
            None => self.login.clone(),
        }
    }
}
