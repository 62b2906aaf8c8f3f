//! Event commands and their compilation into primitive effects.
//!
//! A command is what a client submits. Compiling it against the current
//! content validates the payload and yields the [`Effect`]s that the log
//! records and replay folds; rules and access checks run in the store.

pub mod log;
pub mod rules;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::access::{MandatoryOverride, OverrideDraft};
use crate::appraisal::AppraisalParams;
use crate::content::{Content, Effect};
use crate::error::{Error, Result};
use crate::formula;
use crate::model::{
    is_reserved_name, valid_identifier, AttributeSpec, ConceptDef, Id, StateIndex, ANNOTATION_ATTRS,
};
use crate::org;
use crate::tower;
use crate::value::{Value, ValueType};
use crate::view::View;

pub use log::EventRecord;
pub use rules::{Action, ActionValue, Rule, RuleDraft};

pub type JsonMap = serde_json::Map<String, serde_json::Value>;

/// An attribute as written in requests and manifests; `type` is one of
/// `text`, `integer`, `decimal`, `boolean`, `date` or `reference(Concept)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttrDraft {
    pub name: String,
    #[serde(rename = "type")]
    pub value_type: String,
    #[serde(default)]
    pub required: bool,
}

impl AttrDraft {
    pub fn new(name: &str, value_type: &str) -> AttrDraft {
        AttrDraft { name: name.into(), value_type: value_type.into(), required: false }
    }

    pub fn required(mut self) -> AttrDraft {
        self.required = true;
        self
    }
}

/// Commands accepted by `submit`, tagged by event kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Command {
    DefineConcept {
        name: String,
        #[serde(default)]
        attributes: Vec<AttrDraft>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin_pack: Option<String>,
    },
    ExtendConcept {
        concept: String,
        attributes: Vec<AttrDraft>,
    },
    Create {
        concept: String,
        #[serde(default)]
        values: JsonMap,
    },
    SetAttr {
        target: Id,
        #[serde(default)]
        values: JsonMap,
        #[serde(default)]
        unset: Vec<String>,
    },
    Retire {
        target: Id,
    },
    Annotate {
        target: Id,
        key: String,
        #[serde(default)]
        value: serde_json::Value,
    },
    Comprehend {
        name: String,
        domain: String,
        formula: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        origin_pack: Option<String>,
    },
    RuleRegister {
        rule: RuleDraft,
    },
    AddOverride {
        rule: OverrideDraft,
    },
    SetParams {
        params: AppraisalParams,
    },
    Hire {
        #[serde(default)]
        values: JsonMap,
        #[serde(default)]
        position: Option<Id>,
    },
    Transfer {
        employee: Id,
        position: Id,
    },
    Dismiss {
        employee: Id,
    },
    ReEnroll {
        employee: Id,
        #[serde(default)]
        position: Option<Id>,
    },
    LeaveRequest {
        employee: Id,
        #[serde(default)]
        values: JsonMap,
    },
}

pub const COMMAND_KINDS: [&str; 15] = [
    "define_concept",
    "extend_concept",
    "create",
    "set_attr",
    "retire",
    "annotate",
    "comprehend",
    "rule_register",
    "add_override",
    "set_params",
    "hire",
    "transfer",
    "dismiss",
    "re_enroll",
    "leave_request",
];

impl Command {
    pub fn kind(&self) -> &'static str {
        match self {
            Command::DefineConcept { .. } => "define_concept",
            Command::ExtendConcept { .. } => "extend_concept",
            Command::Create { .. } => "create",
            Command::SetAttr { .. } => "set_attr",
            Command::Retire { .. } => "retire",
            Command::Annotate { .. } => "annotate",
            Command::Comprehend { .. } => "comprehend",
            Command::RuleRegister { .. } => "rule_register",
            Command::AddOverride { .. } => "add_override",
            Command::SetParams { .. } => "set_params",
            Command::Hire { .. } => "hire",
            Command::Transfer { .. } => "transfer",
            Command::Dismiss { .. } => "dismiss",
            Command::ReEnroll { .. } => "re_enroll",
            Command::LeaveRequest { .. } => "leave_request",
        }
    }

    /// Parses a wire event. Unknown kinds and malformed payloads are
    /// reported separately.
    pub fn from_json(v: &serde_json::Value) -> Result<Command> {
        let kind = v
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| Error::Validation(vec!["event needs a text 'kind'".into()]))?;
        if !COMMAND_KINDS.contains(&kind) {
            return Err(Error::UnknownKind(kind.to_string()));
        }
        serde_json::from_value(v.clone()).map_err(|e| Error::Validation(vec![e.to_string()]))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("command serializes")
    }

    pub fn define_concept(name: &str, attributes: Vec<AttrDraft>) -> Command {
        Command::DefineConcept { name: name.into(), attributes, origin_pack: None }
    }

    pub fn create(concept: &str, values: serde_json::Value) -> Command {
        Command::Create { concept: concept.into(), values: object(values) }
    }

    pub fn set_attr(target: Id, values: serde_json::Value) -> Command {
        Command::SetAttr { target, values: object(values), unset: Vec::new() }
    }

    pub fn comprehend(name: &str, domain: &str, formula: &str) -> Command {
        Command::Comprehend { name: name.into(), domain: domain.into(), formula: formula.into(), origin_pack: None }
    }

    pub fn hire(values: serde_json::Value, position: Option<Id>) -> Command {
        Command::Hire { values: object(values), position }
    }
}

fn object(v: serde_json::Value) -> JsonMap {
    match v {
        serde_json::Value::Object(m) => m,
        serde_json::Value::Null => JsonMap::new(),
        other => panic!("expected a JSON object, got {other}"),
    }
}

/// Result of compiling one command.
#[derive(Debug, Default)]
pub(crate) struct Compiled {
    pub effects: Vec<Effect>,
    /// Individual the event is about; rule guards evaluate against it.
    pub subject: Option<Id>,
    /// Identifier of whatever the command defined or created.
    pub created: Option<Id>,
    /// Individual whose mandatory fields are enforced after rules run.
    pub mandatory: Option<Id>,
}

fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(vec![msg.into()])
}

/// Parses an attribute type. `own` names a concept being defined in the
/// same command so it may reference itself.
pub(crate) fn parse_type(text: &str, content: &Content, own: Option<(&str, Id)>) -> Result<ValueType> {
    let bad = |why: String| Error::InvalidAttribute(why);
    Ok(match text.trim() {
        "text" => ValueType::Text,
        "integer" => ValueType::Integer,
        "decimal" => ValueType::Decimal,
        "boolean" => ValueType::Boolean,
        "date" => ValueType::Date,
        other => {
            let target = other
                .strip_prefix("reference(")
                .and_then(|r| r.strip_suffix(')'))
                .map(str::trim)
                .ok_or_else(|| bad(format!("unknown attribute type '{other}'")))?;
            match own {
                Some((name, id)) if name == target => ValueType::Reference(id),
                _ => match content.concept_by_name(target) {
                    Some(c) if content.members.contains_key(&c.id) => ValueType::Reference(c.id),
                    _ => return Err(bad(format!("reference target '{target}' is not a defined concept"))),
                },
            }
        }
    })
}

pub(crate) fn attribute_specs(
    drafts: &[AttrDraft],
    content: &Content,
    own: Option<(&str, Id)>,
    existing: &[AttributeSpec],
) -> Result<Vec<AttributeSpec>> {
    let mut out: Vec<AttributeSpec> = Vec::new();
    for d in drafts {
        if !valid_identifier(&d.name) {
            return Err(Error::InvalidAttribute(format!("'{}' is not a valid attribute name", d.name)));
        }
        if out.iter().chain(existing).any(|a| a.name == d.name) {
            return Err(Error::InvalidAttribute(format!("duplicate attribute '{}'", d.name)));
        }
        let mut spec = AttributeSpec::new(&d.name, parse_type(&d.value_type, content, own)?);
        spec.required_by_default = d.required;
        out.push(spec);
    }
    Ok(out)
}

/// Coerces loosely typed values into the concept's schema, collecting every problem.
pub(crate) fn coerce_values(def: &ConceptDef, values: &JsonMap, content: &Content) -> Result<BTreeMap<String, Value>> {
    let mut out = BTreeMap::new();
    let mut problems = Vec::new();
    for (k, raw) in values {
        let Some(attr) = def.attribute(k) else {
            problems.push(format!("{k}: not an attribute of {}", def.name));
            continue;
        };
        if raw.is_null() {
            continue;
        }
        match Value::from_json(raw, attr.value_type) {
            Ok(v) => {
                if let (Value::Ref(target), ValueType::Reference(concept)) = (&v, attr.value_type) {
                    let ok = content.individual(*target).is_some_and(|r| r.alive() && r.concept == concept);
                    if !ok {
                        problems.push(format!("{k}: {target} is not an alive individual of the referenced concept"));
                        continue;
                    }
                }
                out.insert(k.clone(), v);
            }
            Err(e) => problems.push(format!("{k}: {e}")),
        }
    }
    if problems.is_empty() {
        Ok(out)
    } else {
        Err(Error::Validation(problems))
    }
}

fn user_concept<'c>(content: &'c Content, name: &str) -> Result<&'c ConceptDef> {
    match content.concept_by_name(name) {
        Some(c) if content.members.contains_key(&c.id) => Ok(c),
        _ => Err(Error::UnknownConcept(name.to_string())),
    }
}

fn alive_individual(view: &View<'_>, id: Id) -> Result<&'static str> {
    match view.content().individual(id) {
        None => Err(Error::UnknownId(id)),
        Some(r) if !r.alive() => Err(Error::NotAliveAtState { id, state: view.state() }),
        Some(_) => Ok(""),
    }
}

fn expect_of(view: &View<'_>, id: Id, concept: &str) -> Result<()> {
    alive_individual(view, id)?;
    let content = view.content();
    let rec = content.individual(id).expect("checked above");
    if content.concept(rec.concept).map(|c| c.name.as_str()) != Some(concept) {
        return Err(validation(format!("{id} is not a {concept}")));
    }
    Ok(())
}

fn ensure_vacant(view: &View<'_>, position: Id) -> Result<()> {
    expect_of(view, position, org::POSITION)?;
    if org::holder_of(view.content(), position).is_some() {
        return Err(Error::NotVacant(position));
    }
    Ok(())
}

fn assignment_effects(
    view: &View<'_>,
    employee: Id,
    position: Id,
    alloc: &mut dyn FnMut() -> Id,
) -> Result<Vec<Effect>> {
    let content = view.content();
    let assignment = user_concept(content, org::ASSIGNMENT)?;
    let unit = content.individual(position).and_then(|p| p.values.get("unit").cloned());
    let mut values = BTreeMap::from([
        ("employee".to_string(), Value::Ref(employee)),
        ("position".to_string(), Value::Ref(position)),
    ]);
    if assignment.attribute("since").is_some() {
        values.insert("since".into(), Value::Integer(view.state().0 as i64));
    }
    let mut effects = vec![Effect::Create { id: alloc(), concept: assignment.id, values }];
    let has_dept = user_concept(content, org::EMPLOYEE)?.attribute("dept").is_some();
    if let (true, Some(unit)) = (has_dept, unit) {
        effects.push(Effect::SetValues {
            target: employee,
            set: BTreeMap::from([("dept".to_string(), unit)]),
            unset: Vec::new(),
        });
    }
    Ok(effects)
}

/// Compiles a command against `view`, whose state is the one the event
/// will produce.
pub(crate) fn compile(cmd: &Command, view: &View<'_>, alloc: &mut dyn FnMut() -> Id) -> Result<Compiled> {
    let content = view.content();
    let state: StateIndex = view.state();
    let mut out = Compiled::default();
    match cmd {
        Command::DefineConcept { name, attributes, origin_pack } => {
            if !valid_identifier(name) || is_reserved_name(name) {
                return Err(validation(format!("'{name}' is not a usable concept name")));
            }
            if content.name_id(name).is_some() {
                return Err(Error::DuplicateName(name.clone()));
            }
            let id = alloc();
            let attributes = attribute_specs(attributes, content, Some((name, id)), &[])?;
            out.effects.push(Effect::DefineConcept {
                concept: ConceptDef {
                    id,
                    name: name.clone(),
                    attributes,
                    defined_at: state,
                    origin_pack: origin_pack.clone(),
                    annotations: BTreeMap::new(),
                },
            });
            out.created = Some(id);
        }
        Command::ExtendConcept { concept, attributes } => {
            let def = user_concept(content, concept)?;
            let mut specs = attribute_specs(attributes, content, Some((&def.name, def.id)), &def.attributes)?;
            // Existing individuals must stay valid, so additions are optional.
            specs.iter_mut().for_each(|a| a.required_by_default = false);
            out.effects.push(Effect::ExtendConcept { concept: def.id, attributes: specs });
        }
        Command::Create { concept, values } => {
            let def = user_concept(content, concept)?;
            let values = coerce_values(def, values, content)?;
            let id = alloc();
            out.effects.push(Effect::Create { id, concept: def.id, values });
            out.subject = Some(id);
            out.created = Some(id);
            out.mandatory = Some(id);
        }
        Command::SetAttr { target, values, unset } => {
            alive_individual(view, *target)?;
            let rec = content.individual(*target).expect("alive");
            let def = content.concept(rec.concept).expect("concept of individual");
            let set = coerce_values(def, values, content)?;
            let mut problems = Vec::new();
            for k in unset {
                match def.attribute(k) {
                    None => problems.push(format!("{k}: not an attribute of {}", def.name)),
                    Some(a) if a.required_by_default => problems.push(format!("{k}: required, cannot be unset")),
                    Some(_) => {}
                }
            }
            if !problems.is_empty() {
                return Err(Error::Validation(problems));
            }
            out.effects.push(Effect::SetValues { target: *target, set, unset: unset.clone() });
            out.subject = Some(*target);
        }
        Command::Retire { target } => {
            alive_individual(view, *target)?;
            out.effects.push(Effect::Retire { target: *target });
            out.subject = Some(*target);
        }
        Command::Annotate { target, key, value } => {
            if content.concept(*target).is_none() && content.meta(*target).is_none() {
                return Err(Error::UnknownId(*target));
            }
            let ty = ANNOTATION_ATTRS
                .iter()
                .find(|(k, _)| k == key)
                .map(|(_, t)| *t)
                .ok_or_else(|| Error::InvalidAttribute(format!("'{key}' is not an annotation")))?;
            let value = if value.is_null() {
                None
            } else {
                Some(Value::from_json(value, ty).map_err(|e| Error::TypeMismatch(format!("{key}: {e}")))?)
            };
            out.effects.push(Effect::Annotate { target: *target, key: key.clone(), value });
        }
        Command::Comprehend { name, domain, formula: text, origin_pack } => {
            let f = formula::parse(text)?;
            let (domain_ref, level) = tower::plan_comprehension(view, name, &f, domain)?;
            let id = alloc();
            out.effects.push(Effect::DefineMeta {
                meta: crate::model::MetaObject {
                    id,
                    name: name.clone(),
                    level,
                    domain: domain_ref,
                    domain_name: domain.clone(),
                    formula: f,
                    defined_at: state,
                    origin_pack: origin_pack.clone(),
                    annotations: BTreeMap::new(),
                },
            });
            out.created = Some(id);
        }
        Command::RuleRegister { rule } => {
            if content.rules().any(|r| r.name == rule.name && r.origin_pack == rule.origin_pack) {
                return Err(Error::DuplicateName(rule.name.clone()));
            }
            let id = alloc();
            let compiled = rules::compile_rule(rule, view, id)?;
            out.effects.push(Effect::AddRule { rule: compiled });
            out.created = Some(id);
        }
        Command::AddOverride { rule } => {
            let o = compile_override(rule, view, alloc)?;
            out.created = Some(o.id);
            out.effects.push(Effect::AddOverride { rule: o });
        }
        Command::SetParams { params } => {
            out.effects.push(Effect::SetParams { params: params.validated()? });
        }
        Command::Hire { values, position } => {
            let def = user_concept(content, org::EMPLOYEE)?;
            let values = coerce_values(def, values, content)?;
            if let Some(p) = position {
                ensure_vacant(view, *p)?;
            }
            let id = alloc();
            out.effects.push(Effect::Create { id, concept: def.id, values });
            if let Some(p) = position {
                out.effects.extend(assignment_effects(view, id, *p, alloc)?);
            }
            out.subject = Some(id);
            out.created = Some(id);
            out.mandatory = Some(id);
        }
        Command::Transfer { employee, position } => {
            expect_of(view, *employee, org::EMPLOYEE)?;
            ensure_vacant(view, *position)?;
            if let Some((a, _)) = org::active_assignment(content, *employee) {
                out.effects.push(Effect::Retire { target: a });
            }
            out.effects.extend(assignment_effects(view, *employee, *position, alloc)?);
            out.subject = Some(*employee);
        }
        Command::Dismiss { employee } => {
            expect_of(view, *employee, org::EMPLOYEE)?;
            if let Some((a, _)) = org::active_assignment(content, *employee) {
                out.effects.push(Effect::Retire { target: a });
            }
            out.subject = Some(*employee);
        }
        Command::ReEnroll { employee, position } => {
            expect_of(view, *employee, org::EMPLOYEE)?;
            if let Some(p) = position {
                ensure_vacant(view, *p)?;
                if let Some((a, _)) = org::active_assignment(content, *employee) {
                    out.effects.push(Effect::Retire { target: a });
                }
                out.effects.extend(assignment_effects(view, *employee, *p, alloc)?);
            }
            out.subject = Some(*employee);
        }
        Command::LeaveRequest { employee, values } => {
            let def = user_concept(content, org::LEAVE_REQUEST)?;
            expect_of(view, *employee, org::EMPLOYEE)?;
            let mut values = values.clone();
            values.insert("employee".into(), serde_json::json!(employee.0));
            let values = coerce_values(def, &values, content)?;
            let id = alloc();
            out.effects.push(Effect::Create { id, concept: def.id, values });
            out.subject = Some(id);
            out.created = Some(id);
            out.mandatory = Some(id);
        }
    }
    Ok(out)
}

pub(crate) fn compile_override(
    draft: &OverrideDraft,
    view: &View<'_>,
    alloc: &mut dyn FnMut() -> Id,
) -> Result<MandatoryOverride> {
    let content = view.content();
    if !valid_identifier(&draft.name) {
        return Err(validation(format!("override name '{}' is not an identifier", draft.name)));
    }
    if content.overrides().any(|o| o.name == draft.name && o.origin_pack == draft.origin_pack) {
        return Err(Error::DuplicateName(draft.name.clone()));
    }
    let def = user_concept(content, &draft.concept)?;
    for attr in &draft.require {
        if def.attribute(attr).is_none() {
            return Err(Error::InvalidAttribute(format!("{} has no attribute '{attr}' to require", def.name)));
        }
    }
    let condition = match &draft.condition {
        Some(text) => {
            let f = formula::parse(text)?;
            formula::check(&f, def.id, view)?;
            Some(f)
        }
        None => None,
    };
    Ok(MandatoryOverride {
        id: alloc(),
        name: draft.name.clone(),
        concept: def.id,
        condition,
        require: draft.require.clone(),
        scenarios: draft.scenarios.clone(),
        origin_pack: draft.origin_pack.clone(),
        defined_at: view.state(),
    })
}

/// Request plus resulting effects, as stored in a record's payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Payload {
    pub request: serde_json::Value,
    pub effects: Vec<Effect>,
}
