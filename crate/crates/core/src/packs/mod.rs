//! Component packs: manifests, merge-plan analysis and application.
//!
//! A pack is matched against the store by concept name. Attributes that
//! already exist must agree in type; new attributes extend the concept as
//! optional ones. Concepts tied to the org structure are applied first.

mod demo;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::access::{Scenario, OverrideDraft};
use crate::content::Content;
use crate::error::{Error, Result};
use crate::event::rules::{compile_rule, RuleDraft};
use crate::event::{compile, compile_override, parse_type, AttrDraft, Command, JsonMap};
use crate::formula;
use crate::model::{valid_identifier, Id, StateIndex};
use crate::org;
use crate::store::{Receipt, Snapshot, Step, Store};
use crate::value::ValueType;
use crate::view::View;

pub use demo::{demo_login, seed_demo, DemoOptions, DemoReport, DEMO_SEED};

pub const ORG_PACK: &str = "Organizational Structure";
pub const PERSONAL_DATA_PACK: &str = "Personal Data";
pub const PERSONNEL_DYNAMICS_PACK: &str = "Personnel Dynamics";
pub const LEAVES_PACK: &str = "Leaves and Sick-Lists";

/// The eight HR components, named as in the original system description.
pub const HR_PACKS: [&str; 8] = [
    "Personal Data",
    "Personnel Dynamics",
    "Charges and Deductions",
    "Appraisal and testing",
    "Vacancies",
    "Leaves and Sick-Lists",
    "Training and Skills Improvement",
    "Equipment Fixing",
];

/// Shipped manifests as (file stem, text).
pub const BUILTIN_MANIFESTS: [(&str, &str); 9] = [
    ("organizational_structure", include_str!("../../../../packs/organizational_structure.json")),
    ("personal_data", include_str!("../../../../packs/personal_data.json")),
    ("personnel_dynamics", include_str!("../../../../packs/personnel_dynamics.json")),
    ("charges_and_deductions", include_str!("../../../../packs/charges_and_deductions.json")),
    ("appraisal_and_testing", include_str!("../../../../packs/appraisal_and_testing.json")),
    ("vacancies", include_str!("../../../../packs/vacancies.json")),
    ("leaves_and_sick_lists", include_str!("../../../../packs/leaves_and_sick_lists.json")),
    ("training_and_skills_improvement", include_str!("../../../../packs/training_and_skills_improvement.json")),
    ("equipment_fixing", include_str!("../../../../packs/equipment_fixing.json")),
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConceptDraft {
    pub name: String,
    #[serde(default)]
    pub attributes: Vec<AttrDraft>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetaDraft {
    pub name: String,
    pub domain: String,
    pub formula: String,
}

/// A create event of the seed list. Text values of the form `@key` refer to
/// the seed item carrying that key.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedItem {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key: Option<String>,
    pub concept: String,
    #[serde(default)]
    pub values: JsonMap,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentPack {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub version: String,
    #[serde(default)]
    pub depends: Vec<String>,
    #[serde(default)]
    pub concepts: Vec<ConceptDraft>,
    #[serde(default)]
    pub metas: Vec<MetaDraft>,
    #[serde(default)]
    pub rules: Vec<RuleDraft>,
    #[serde(default)]
    pub mandatory_overrides: Vec<OverrideDraft>,
    #[serde(default)]
    pub seed: Vec<SeedItem>,
}

impl ComponentPack {
    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
            && self.metas.is_empty()
            && self.rules.is_empty()
            && self.mandatory_overrides.is_empty()
            && self.seed.is_empty()
    }

    /// Parses manifest text; `path` only labels errors.
    pub fn parse(text: &str, path: &str) -> Result<ComponentPack> {
        if text.trim().is_empty() {
            return Ok(ComponentPack::default());
        }
        serde_json::from_str(text).map_err(|e| Error::MalformedPack {
            path: path.to_string(),
            message: format!("line {} column {}: {e}", e.line(), e.column()),
        })
    }
}

/// The shipped packs, parsed.
pub fn builtin_packs() -> Vec<ComponentPack> {
    BUILTIN_MANIFESTS
        .iter()
        .map(|(stem, text)| ComponentPack::parse(text, stem).expect("shipped manifest parses"))
        .collect()
}

pub fn builtin_pack(name: &str) -> Option<ComponentPack> {
    builtin_packs().into_iter().find(|p| p.name == name)
}

/// Pack names from manifests in a directory, with their paths.
fn directory_catalog(dir: &Path) -> BTreeMap<String, PathBuf> {
    let mut out = BTreeMap::new();
    let Ok(entries) = std::fs::read_dir(dir) else { return out };
    for entry in entries.flatten() {
        let path = entry.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        if let Ok(p) = std::fs::read_to_string(&path).map_err(Error::from).and_then(|t| ComponentPack::parse(&t, "")) {
            out.insert(p.name, path);
        }
    }
    out
}

/// Finds a pack by name next to `near` (a manifest directory), falling back
/// to the shipped catalog.
pub fn find_pack(name: &str, near: Option<&Path>) -> Result<ComponentPack> {
    if let Some(dir) = near {
        if let Some(path) = directory_catalog(dir).get(name) {
            return load_pack(path);
        }
    }
    builtin_pack(name).ok_or_else(|| Error::MalformedPack {
        path: name.to_string(),
        message: format!("no pack named '{name}'"),
    })
}

/// Reads and validates a manifest. A path without extension gets `.json`.
pub fn load_pack(path: &Path) -> Result<ComponentPack> {
    let path = if path.extension().is_none() && !path.exists() { path.with_extension("json") } else { path.to_path_buf() };
    let label = path.display().to_string();
    let text = std::fs::read_to_string(&path)
        .map_err(|e| Error::MalformedPack { path: label.clone(), message: e.to_string() })?;
    let pack = ComponentPack::parse(&text, &label)?;
    let deps = dependency_closure(&pack, path.parent())?;
    validate(&pack, &deps).map_err(|message| Error::MalformedPack { path: label, message })?;
    Ok(pack)
}

/// Validates manifest text that does not live in a file.
pub fn load_pack_text(text: &str, label: &str) -> Result<ComponentPack> {
    let pack = ComponentPack::parse(text, label)?;
    let deps = dependency_closure(&pack, None)?;
    validate(&pack, &deps).map_err(|message| Error::MalformedPack { path: label.into(), message })?;
    Ok(pack)
}

/// Transitive dependencies, each before its dependents.
pub fn dependency_closure(pack: &ComponentPack, near: Option<&Path>) -> Result<Vec<ComponentPack>> {
    fn visit(
        name: &str,
        near: Option<&Path>,
        seen: &mut BTreeSet<String>,
        out: &mut Vec<ComponentPack>,
        stack: &mut Vec<String>,
    ) -> Result<()> {
        if seen.contains(name) {
            return Ok(());
        }
        if stack.iter().any(|s| s == name) {
            return Err(Error::MalformedPack { path: name.into(), message: "dependency cycle".into() });
        }
        stack.push(name.to_string());
        let p = find_pack(name, near)?;
        for d in &p.depends {
            visit(d, near, seen, out, stack)?;
        }
        stack.pop();
        seen.insert(name.to_string());
        out.push(p);
        Ok(())
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut stack = vec![pack.name.clone()];
    for d in &pack.depends {
        visit(d, near, &mut seen, &mut out, &mut stack)?;
    }
    Ok(out)
}

/// Checks names, attribute types and that every reference resolves within
/// the pack or its dependencies.
fn validate(pack: &ComponentPack, deps: &[ComponentPack]) -> std::result::Result<(), String> {
    if pack.is_empty() && pack.name.is_empty() {
        return Ok(());
    }
    if pack.name.trim().is_empty() {
        return Err("pack needs a name".into());
    }
    let mut known: BTreeMap<&str, &ConceptDraft> = BTreeMap::new();
    for c in deps.iter().flat_map(|d| &d.concepts).chain(&pack.concepts) {
        known.insert(&c.name, c);
    }
    let mut names = BTreeSet::new();
    for c in &pack.concepts {
        if !valid_identifier(&c.name) {
            return Err(format!("concept '{}' is not an identifier", c.name));
        }
        if !names.insert(c.name.as_str()) {
            return Err(format!("concept '{}' is listed twice", c.name));
        }
        let mut attrs = BTreeSet::new();
        for a in &c.attributes {
            if !valid_identifier(&a.name) || !attrs.insert(a.name.as_str()) {
                return Err(format!("attribute '{}.{}' is invalid or repeated", c.name, a.name));
            }
            match reference_target(&a.value_type) {
                Some(target) if !known.contains_key(target) => {
                    return Err(format!("dangling reference '{}.{}' -> '{target}'", c.name, a.name));
                }
                Some(_) => {}
                None if ["text", "integer", "decimal", "boolean", "date"].contains(&a.value_type.trim()) => {}
                None => return Err(format!("attribute '{}.{}' has unknown type '{}'", c.name, a.name, a.value_type)),
            }
        }
    }
    let attr_of = |concept: &str, attr: &str| known.get(concept).is_some_and(|c| c.attributes.iter().any(|a| a.name == attr));
    for m in &pack.metas {
        if !valid_identifier(&m.name) || !names.insert(m.name.as_str()) {
            return Err(format!("meta '{}' is invalid or collides with another name", m.name));
        }
        formula::parse(&m.formula).map_err(|e| format!("meta '{}': {e}", m.name))?;
    }
    for r in &pack.rules {
        if let Some(c) = &r.concept {
            if !known.contains_key(c.as_str()) {
                return Err(format!("rule '{}' names unknown concept '{c}'", r.name));
            }
        }
        if let Some(g) = &r.guard {
            formula::parse(g).map_err(|e| format!("rule '{}': {e}", r.name))?;
        }
    }
    for o in &pack.mandatory_overrides {
        if !known.contains_key(o.concept.as_str()) {
            return Err(format!("override '{}' names unknown concept '{}'", o.name, o.concept));
        }
        for a in &o.require {
            if !attr_of(&o.concept, a) {
                return Err(format!("override '{}' requires unknown attribute '{}.{a}'", o.name, o.concept));
            }
        }
        if let Some(c) = &o.condition {
            formula::parse(c).map_err(|e| format!("override '{}': {e}", o.name))?;
        }
    }
    let mut keys = BTreeSet::new();
    for s in &pack.seed {
        if !known.contains_key(s.concept.as_str()) {
            return Err(format!("seed names unknown concept '{}'", s.concept));
        }
        for (k, v) in &s.values {
            if !attr_of(&s.concept, k) {
                return Err(format!("seed value '{}.{k}' is not an attribute", s.concept));
            }
            if let Some(key) = v.as_str().and_then(|t| t.strip_prefix('@')) {
                if !keys.contains(key) {
                    return Err(format!("seed reference '@{key}' is not defined earlier"));
                }
            }
        }
        if let Some(k) = &s.key {
            keys.insert(k.clone());
        }
    }
    Ok(())
}

fn reference_target(ty: &str) -> Option<&str> {
    ty.trim().strip_prefix("reference(").and_then(|r| r.strip_suffix(')')).map(str::trim)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ConflictKind {
    TypeMismatch,
    StratificationBreak,
    ConstraintContradiction,
    NameCollisionDifferentKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub kind: ConflictKind,
    /// `Concept.attribute`, `meta:Name`, `rule:Name` or `override:Name`.
    pub location: String,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptMatch {
    pub concept: String,
    pub store_concept: Id,
    /// Attributes the pack adds, always as optional ones.
    pub extensions: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum Addition {
    Concept(String),
    Meta(String),
    Rule(String),
    Override(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "step", rename_all = "snake_case")]
pub enum PlanStep {
    Command { command: Command },
    Seed { item: SeedItem },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergePlan {
    pub pack: String,
    pub version: String,
    /// Head the plan was computed against.
    pub base_head: StateIndex,
    pub additions: Vec<Addition>,
    pub matches: Vec<ConceptMatch>,
    pub conflicts: Vec<Conflict>,
    /// Concept application order.
    pub ordering: Vec<String>,
    pub steps: Vec<PlanStep>,
    /// Whether the pack still has to be recorded as applied.
    pub mark: bool,
}

impl MergePlan {
    /// True when applying would change nothing.
    pub fn is_empty(&self) -> bool {
        self.steps.is_empty() && !self.mark
    }

    pub fn is_applicable(&self) -> bool {
        self.conflicts.is_empty()
    }
}

fn classify(e: &Error) -> ConflictKind {
    match e {
        Error::Stratification { .. } | Error::TowerCapExceeded { .. } => ConflictKind::StratificationBreak,
        Error::TypeMismatch(_) => ConflictKind::TypeMismatch,
        Error::DuplicateName(_) => ConflictKind::NameCollisionDifferentKind,
        _ => ConflictKind::ConstraintContradiction,
    }
}

/// Whether a concept references OrgUnit, directly or through other
/// concepts of the store or pack.
fn org_linked(pack: &ComponentPack, content: &Content) -> BTreeSet<String> {
    let mut edges: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for c in content.concepts() {
        let targets = c
            .attributes
            .iter()
            .filter_map(|a| match a.value_type {
                ValueType::Reference(t) => content.concept(t).map(|t| t.name.clone()),
                _ => None,
            })
            .collect();
        edges.insert(c.name.clone(), targets);
    }
    for c in &pack.concepts {
        let e = edges.entry(c.name.clone()).or_default();
        e.extend(c.attributes.iter().filter_map(|a| reference_target(&a.value_type)).map(String::from));
    }
    let mut linked: BTreeSet<String> = BTreeSet::from([org::ORG_UNIT.to_string()]);
    loop {
        let before = linked.len();
        for (name, targets) in &edges {
            if targets.iter().any(|t| linked.contains(t)) {
                linked.insert(name.clone());
            }
        }
        if linked.len() == before {
            return linked;
        }
    }
}

/// Pack concepts in application order: referenced pack concepts first,
/// and among ready concepts org-linked ones before the rest.
fn order_concepts(pack: &ComponentPack, content: &Content) -> Vec<String> {
    let linked = org_linked(pack, content);
    let in_pack: BTreeSet<&str> = pack.concepts.iter().map(|c| c.name.as_str()).collect();
    let mut pending: Vec<&ConceptDraft> = pack.concepts.iter().collect();
    let mut done: BTreeSet<String> = BTreeSet::new();
    let mut out = Vec::new();
    while !pending.is_empty() {
        let ready = |c: &&ConceptDraft| {
            c.attributes.iter().filter_map(|a| reference_target(&a.value_type)).all(|t| {
                t == c.name || !in_pack.contains(t) || done.contains(t)
            })
        };
        let pick = pending
            .iter()
            .position(|c| ready(c) && linked.contains(&c.name))
            .or_else(|| pending.iter().position(ready))
            // A reference cycle inside the pack: keep manifest order.
            .unwrap_or(0);
        let c = pending.remove(pick);
        done.insert(c.name.clone());
        out.push(c.name.clone());
    }
    out
}

struct Scratch {
    content: Content,
    state: StateIndex,
    cap: u32,
    next: u64,
}

impl Scratch {
    fn run(&mut self, cmd: &Command) -> Result<()> {
        let state = self.state.next();
        let mut next = self.next;
        let compiled = {
            let view = View::new(&self.content, state, self.cap);
            compile(cmd, &view, &mut || {
                next += 1;
                Id(next)
            })?
        };
        for e in &compiled.effects {
            self.content.apply(e, state).map_err(|m| Error::Validation(vec![m]))?;
        }
        self.next = next;
        self.state = state;
        Ok(())
    }

    fn view(&self) -> View<'_> {
        View::new(&self.content, self.state, self.cap)
    }
}

/// Computes the merge plan of a pack against a store state.
pub fn analyze_pack(pack: &ComponentPack, snapshot: &Snapshot) -> Result<MergePlan> {
    let content = snapshot.content();
    let mut plan = MergePlan {
        pack: pack.name.clone(),
        version: pack.version.clone(),
        base_head: snapshot.state(),
        additions: Vec::new(),
        matches: Vec::new(),
        conflicts: Vec::new(),
        ordering: order_concepts(pack, content),
        steps: Vec::new(),
        mark: !pack.name.is_empty() && content.applied_packs().get(&pack.name) != Some(&pack.version),
    };
    let origin = (!pack.name.is_empty()).then(|| pack.name.clone());
    let mut scratch = Scratch {
        content: content.clone(),
        state: snapshot.state(),
        cap: snapshot.view().tower_cap(),
        next: u64::MAX / 2,
    };
    let conflict = |plan: &mut MergePlan, kind, location: String, detail: String| {
        plan.conflicts.push(Conflict { kind, location, detail });
    };

    for name in plan.ordering.clone() {
        let draft = pack.concepts.iter().find(|c| c.name == name).expect("ordered from pack");
        if scratch.content.meta_by_name(&name).is_some() {
            conflict(&mut plan, ConflictKind::NameCollisionDifferentKind, name.clone(), "name is a meta-object in the store".into());
            continue;
        }
        let existing = scratch.content.concept_by_name(&name).cloned();
        let Some(existing) = existing else {
            let cmd = Command::DefineConcept { name: name.clone(), attributes: draft.attributes.clone(), origin_pack: origin.clone() };
            match scratch.run(&cmd) {
                Ok(()) => {
                    plan.additions.push(Addition::Concept(name.clone()));
                    plan.steps.push(PlanStep::Command { command: cmd });
                }
                Err(e) => conflict(&mut plan, classify(&e), name.clone(), e.to_string()),
            }
            continue;
        };
        let mut extensions = Vec::new();
        let mut ok = true;
        for a in &draft.attributes {
            let location = format!("{name}.{}", a.name);
            let ty = match parse_type(&a.value_type, &scratch.content, Some((&name, existing.id))) {
                Ok(t) => t,
                Err(e) => {
                    conflict(&mut plan, ConflictKind::ConstraintContradiction, location, e.to_string());
                    ok = false;
                    continue;
                }
            };
            match existing.attribute(&a.name) {
                Some(have) if have.value_type == ty => {}
                Some(have) => {
                    let shown = |t: ValueType| match t {
                        ValueType::Reference(id) => format!(
                            "reference({})",
                            scratch.content.concept(id).map(|c| c.name.as_str()).unwrap_or("?")
                        ),
                        other => other.to_string(),
                    };
                    conflict(
                        &mut plan,
                        ConflictKind::TypeMismatch,
                        location,
                        format!("pack has {}, store has {}", shown(ty), shown(have.value_type)),
                    );
                    ok = false;
                }
                None => extensions.push(a.clone()),
            }
        }
        if ok && !extensions.is_empty() {
            let cmd = Command::ExtendConcept { concept: name.clone(), attributes: extensions.clone() };
            if let Err(e) = scratch.run(&cmd) {
                conflict(&mut plan, classify(&e), name.clone(), e.to_string());
            } else {
                plan.steps.push(PlanStep::Command { command: cmd });
            }
        }
        plan.matches.push(ConceptMatch {
            concept: name.clone(),
            store_concept: existing.id,
            extensions: if ok { extensions.into_iter().map(|a| a.name).collect() } else { Vec::new() },
        });
    }

    for m in &pack.metas {
        let location = format!("meta:{}", m.name);
        if scratch.content.concept_by_name(&m.name).is_some() {
            conflict(&mut plan, ConflictKind::NameCollisionDifferentKind, location, "name is a concept in the store".into());
            continue;
        }
        if let Some(have) = scratch.content.meta_by_name(&m.name) {
            let same = formula::parse(&m.formula).is_ok_and(|f| f == have.formula) && have.domain_name == m.domain;
            if !same {
                conflict(
                    &mut plan,
                    ConflictKind::ConstraintContradiction,
                    location,
                    format!("store defines {} over {} as '{}'", m.name, have.domain_name, have.formula),
                );
            }
            continue;
        }
        let cmd = Command::Comprehend {
            name: m.name.clone(),
            domain: m.domain.clone(),
            formula: m.formula.clone(),
            origin_pack: origin.clone(),
        };
        match scratch.run(&cmd) {
            Ok(()) => {
                plan.additions.push(Addition::Meta(m.name.clone()));
                plan.steps.push(PlanStep::Command { command: cmd });
            }
            Err(e) => conflict(&mut plan, classify(&e), location, e.to_string()),
        }
    }

    for r in &pack.rules {
        let mut r = r.clone();
        r.origin_pack = origin.clone();
        if scratch.content.rules().any(|x| x.name == r.name && x.origin_pack == r.origin_pack) {
            continue;
        }
        let location = format!("rule:{}", r.name);
        match compile_rule(&r, &scratch.view(), Id(0)) {
            Ok(_) => {
                let cmd = Command::RuleRegister { rule: r.clone() };
                if let Err(e) = scratch.run(&cmd) {
                    conflict(&mut plan, classify(&e), location, e.to_string());
                    continue;
                }
                plan.additions.push(Addition::Rule(r.name.clone()));
                plan.steps.push(PlanStep::Command { command: cmd });
            }
            Err(e) => conflict(&mut plan, classify(&e), location, e.to_string()),
        }
    }

    for o in &pack.mandatory_overrides {
        let mut o = o.clone();
        o.origin_pack = origin.clone();
        if scratch.content.overrides().any(|x| x.name == o.name && x.origin_pack == o.origin_pack) {
            continue;
        }
        let location = format!("override:{}", o.name);
        match compile_override(&o, &scratch.view(), &mut || Id(0)) {
            Ok(_) => {
                let cmd = Command::AddOverride { rule: o.clone() };
                if let Err(e) = scratch.run(&cmd) {
                    conflict(&mut plan, classify(&e), location, e.to_string());
                    continue;
                }
                plan.additions.push(Addition::Override(o.name.clone()));
                plan.steps.push(PlanStep::Command { command: cmd });
            }
            Err(e) => conflict(&mut plan, classify(&e), location, e.to_string()),
        }
    }

    if !content.is_applied(&pack.name) {
        plan.steps.extend(pack.seed.iter().map(|s| PlanStep::Seed { item: s.clone() }));
    }
    Ok(plan)
}

/// Applies a conflict-free plan as one all-or-nothing batch bracketed by
/// `pack_apply` markers. An empty plan is a no-op returning the head.
pub fn apply_plan(store: &Store, session: &crate::access::Session, plan: &MergePlan) -> Result<StateIndex> {
    session.ensure_open()?;
    if !session.profile.metadata_admin {
        return Err(Error::AccessDenied("metadata_admin required to apply packs".into()));
    }
    if !plan.conflicts.is_empty() {
        return Err(Error::ConflictsPresent(plan.conflicts.len()));
    }
    let head = store.head();
    if head != plan.base_head {
        return Err(Error::StaleStore { planned: plan.base_head, head });
    }
    if plan.is_empty() {
        return Ok(head);
    }
    let marker = |phase: &str| serde_json::json!({ "pack": plan.pack, "version": plan.version, "phase": phase });
    let mut steps = vec![Step::Raw { kind: "pack_apply".into(), request: marker("begin"), effects: Vec::new() }];
    for s in &plan.steps {
        steps.push(match s {
            PlanStep::Command { command } => Step::Cmd(command.clone()),
            PlanStep::Seed { item } => Step::Seed { key: item.key.clone(), concept: item.concept.clone(), values: item.values.clone() },
        });
    }
    let mut end = Vec::new();
    if !plan.pack.is_empty() {
        end.push(crate::content::Effect::MarkPack { name: plan.pack.clone(), version: plan.version.clone() });
    }
    steps.push(Step::Raw { kind: "pack_apply".into(), request: marker("end"), effects: end });
    let receipts: Vec<Receipt> = store.submit_steps(session, steps)?;
    Ok(receipts.last().map(|r| r.state).unwrap_or(head))
}

/// Analyzes and applies a pack after any of its dependencies that are not
/// applied yet. Returns the new head.
pub fn install(
    store: &Store,
    session: &crate::access::Session,
    pack: &ComponentPack,
    near: Option<&Path>,
) -> Result<StateIndex> {
    let mut head = store.head();
    for dep in dependency_closure(pack, near)? {
        if !store.head_snapshot().content().is_applied(&dep.name) {
            let plan = analyze_pack(&dep, &store.head_snapshot())?;
            head = apply_plan(store, session, &plan)?;
        }
    }
    let plan = analyze_pack(pack, &store.head_snapshot())?;
    if !plan.conflicts.is_empty() {
        return Err(Error::ConflictsPresent(plan.conflicts.len()));
    }
    if !plan.is_empty() {
        head = apply_plan(store, session, &plan)?;
    }
    Ok(head)
}

/// Installs the org pack and all eight HR packs.
pub fn install_all(store: &Store, session: &crate::access::Session) -> Result<StateIndex> {
    let mut head = store.head();
    for name in std::iter::once(ORG_PACK).chain(HR_PACKS) {
        let pack = builtin_pack(name).expect("shipped pack");
        head = install(store, session, &pack, None)?;
    }
    Ok(head)
}

/// Scenario names accepted in override drafts.
pub fn scenario_names() -> Vec<&'static str> {
    Scenario::ALL.iter().map(|s| s.as_str()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_manifests_parse_and_validate() {
        let packs = builtin_packs();
        let names: BTreeSet<&str> = packs.iter().map(|p| p.name.as_str()).collect();
        for n in HR_PACKS.iter().chain([&ORG_PACK]) {
            assert!(names.contains(n), "missing {n}");
        }
        for p in &packs {
            let deps = dependency_closure(p, None).unwrap();
            validate(p, &deps).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
    }

    #[test]
    fn empty_manifest_is_an_empty_pack() {
        assert!(ComponentPack::parse("", "x").unwrap().is_empty());
        assert!(load_pack_text("{}", "x").unwrap().is_empty());
    }

    #[test]
    fn dangling_reference_is_named() {
        let text = r#"{"name": "X", "concepts": [{"name": "A", "attributes": [{"name": "b", "type": "reference(Nowhere)"}]}]}"#;
        match load_pack_text(text, "x.json").unwrap_err() {
            Error::MalformedPack { message, .. } => assert!(message.contains("Nowhere"), "{message}"),
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn parse_errors_carry_position() {
        match ComponentPack::parse("{\"name\": }", "bad.json").unwrap_err() {
            Error::MalformedPack { path, message } => {
                assert_eq!(path, "bad.json");
                assert!(message.contains("line 1"), "{message}");
            }
            e => panic!("{e:?}"),
        }
    }
}
