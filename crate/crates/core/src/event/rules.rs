//! Trigger rules: a guard over the event's subject and an ordered list of
//! actions. Rules fire in registration order; their actions join the same
//! state increment as the triggering event and never re-trigger rules.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::content::{Content, Effect};
use crate::error::{Error, Result};
use crate::formula::{self, Formula, MAX_HOPS};
use crate::model::{valid_identifier, Id, StateIndex};
use crate::org;
use crate::value::{Value, ValueType};
use crate::view::View;

/// Event kinds a rule may be attached to.
pub const RULE_TRIGGERS: [&str; 8] =
    ["create", "set_attr", "retire", "hire", "transfer", "dismiss", "re_enroll", "leave_request"];

/// Action kinds a rule may carry.
pub const ACTION_KINDS: [&str; 4] = ["reject", "set_attr", "create_individual", "audit"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: Id,
    pub name: String,
    pub trigger: String,
    /// Concept of the subject the guard is evaluated against.
    pub concept: Id,
    #[serde(default)]
    pub guard: Option<Formula>,
    pub actions: Vec<Action>,
    pub registered_at: StateIndex,
    #[serde(default)]
    pub origin_pack: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Reject { message: String },
    SetAttr { path: Vec<String>, value: Value },
    CreateIndividual { concept: Id, values: BTreeMap<String, ActionValue> },
    Audit { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionValue {
    Literal(Value),
    /// A reference to the rule's subject.
    Subject,
}

/// A rule as written in a manifest or request body.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RuleDraft {
    pub name: String,
    pub trigger: String,
    #[serde(default)]
    pub concept: Option<String>,
    #[serde(default)]
    pub guard: Option<String>,
    #[serde(default)]
    pub actions: Vec<serde_json::Value>,
    #[serde(default)]
    pub origin_pack: Option<String>,
}

/// The subject concept implied by lifecycle event kinds.
pub fn implied_concept(trigger: &str) -> Option<&'static str> {
    match trigger {
        "hire" | "transfer" | "dismiss" | "re_enroll" => Some(org::EMPLOYEE),
        "leave_request" => Some(org::LEAVE_REQUEST),
        _ => None,
    }
}

fn invalid(msg: String) -> Error {
    Error::Validation(vec![msg])
}

/// Resolves a draft against the store schema.
pub(crate) fn compile_rule(draft: &RuleDraft, view: &View<'_>, id: Id) -> Result<Rule> {
    if !valid_identifier(&draft.name) {
        return Err(invalid(format!("rule name '{}' is not an identifier", draft.name)));
    }
    if !RULE_TRIGGERS.contains(&draft.trigger.as_str()) {
        return Err(invalid(format!("rules cannot trigger on '{}'", draft.trigger)));
    }
    let concept_name = match (&draft.concept, implied_concept(&draft.trigger)) {
        (Some(c), _) => c.as_str(),
        (None, Some(c)) => c,
        (None, None) => return Err(invalid(format!("a '{}' rule must name its concept", draft.trigger))),
    };
    let concept = user_concept(view.content, concept_name)?;
    let guard = match &draft.guard {
        Some(text) => {
            let f = formula::parse(text)?;
            formula::check(&f, concept, view)?;
            Some(f)
        }
        None => None,
    };
    let actions = draft
        .actions
        .iter()
        .map(|a| compile_action(a, concept, view))
        .collect::<Result<Vec<_>>>()?;
    Ok(Rule {
        id,
        name: draft.name.clone(),
        trigger: draft.trigger.clone(),
        concept,
        guard,
        actions,
        registered_at: view.state,
        origin_pack: draft.origin_pack.clone(),
    })
}

fn user_concept(content: &Content, name: &str) -> Result<Id> {
    match content.concept_by_name(name) {
        Some(c) if content.members.contains_key(&c.id) => Ok(c.id),
        _ => Err(Error::UnknownConcept(name.to_string())),
    }
}

fn compile_action(json: &serde_json::Value, subject: Id, view: &View<'_>) -> Result<Action> {
    let obj = json.as_object().ok_or_else(|| invalid(format!("action must be an object, found {json}")))?;
    let kind = obj.get("kind").and_then(|k| k.as_str()).unwrap_or("");
    let text = |field: &str| -> Result<String> {
        obj.get(field)
            .and_then(|v| v.as_str())
            .map(str::to_string)
            .ok_or_else(|| invalid(format!("{kind} action needs a text '{field}'")))
    };
    match kind {
        "reject" => Ok(Action::Reject { message: text("message")? }),
        "audit" => Ok(Action::Audit { message: text("message")? }),
        "set_attr" => {
            let path_text = text("path")?;
            let path: Vec<String> = path_text.split('.').map(str::to_string).collect();
            if path.len() > MAX_HOPS + 1 || !path.iter().all(|s| valid_identifier(s)) {
                return Err(invalid(format!("bad set_attr path '{path_text}'")));
            }
            let ty = path_type(&path, subject, view.content)?;
            let raw = obj.get("value").ok_or_else(|| invalid("set_attr action needs a 'value'".into()))?;
            let value = Value::from_json(raw, ty).map_err(|e| Error::TypeMismatch(format!("{path_text}: {e}")))?;
            Ok(Action::SetAttr { path, value })
        }
        "create_individual" => {
            let concept = user_concept(view.content, &text("concept")?)?;
            let def = view.content.concept(concept).expect("resolved concept");
            let mut values = BTreeMap::new();
            if let Some(map) = obj.get("values") {
                let map = map.as_object().ok_or_else(|| invalid("create_individual values must be an object".into()))?;
                for (k, raw) in map {
                    let attr = def.attribute(k).ok_or_else(|| Error::UnknownAttribute {
                        concept: def.name.clone(),
                        attribute: k.clone(),
                    })?;
                    let v = if raw.as_str() == Some("@self") {
                        if attr.value_type != ValueType::Reference(subject) {
                            return Err(Error::TypeMismatch(format!("{k} cannot hold the rule subject")));
                        }
                        ActionValue::Subject
                    } else {
                        ActionValue::Literal(
                            Value::from_json(raw, attr.value_type)
                                .map_err(|e| Error::TypeMismatch(format!("{k}: {e}")))?,
                        )
                    };
                    values.insert(k.clone(), v);
                }
            }
            Ok(Action::CreateIndividual { concept, values })
        }
        other => Err(invalid(format!(
            "action kind '{other}' is not allowed; rules may only {}",
            ACTION_KINDS.join(", ")
        ))),
    }
}

fn path_type(path: &[String], subject: Id, content: &Content) -> Result<ValueType> {
    let mut concept = subject;
    let mut ty = None;
    for seg in path {
        if let Some(ValueType::Reference(next)) = ty {
            concept = next;
        } else if ty.is_some() {
            return Err(Error::TypeMismatch(format!("cannot follow '{seg}' through a non-reference")));
        }
        let def = content.concept(concept).ok_or_else(|| Error::UnknownConcept(concept.to_string()))?;
        let attr = def
            .attribute(seg)
            .ok_or_else(|| Error::UnknownAttribute { concept: def.name.clone(), attribute: seg.clone() })?;
        ty = Some(attr.value_type);
    }
    ty.ok_or_else(|| invalid("empty path".into()))
}

/// Outcome of running every matching rule against a draft.
#[derive(Debug)]
pub(crate) enum Firing {
    Rejected { rule: Id, message: String },
    Accepted(Vec<Effect>),
}

/// Evaluates guards of all rules matching `(kind, subject)` against the
/// draft (after the event's own effects, before any rule action) and
/// returns either the first rejection or the combined action effects.
pub(crate) fn fire(
    draft: &View<'_>,
    kind: &str,
    subject: Option<Id>,
    alloc: &mut dyn FnMut() -> Id,
) -> Result<Firing> {
    let Some(subject) = subject else { return Ok(Firing::Accepted(Vec::new())) };
    let Some(subject_concept) = draft.content.individual(subject).map(|r| r.concept) else {
        return Ok(Firing::Accepted(Vec::new()));
    };
    let mut firing = Vec::new();
    for rule in draft.content.rules() {
        if rule.trigger != kind || rule.concept != subject_concept {
            continue;
        }
        let holds = match &rule.guard {
            None => true,
            // A retired subject has no values; such guards do not hold.
            Some(g) => {
                draft.content.individual(subject).is_some_and(|r| r.alive())
                    && formula::evaluate_checked(g, &formula::Binding::stored(subject), draft)?
            }
        };
        if holds {
            firing.push(rule);
        }
    }
    for rule in &firing {
        for a in &rule.actions {
            if let Action::Reject { message } = a {
                return Ok(Firing::Rejected { rule: rule.id, message: message.clone() });
            }
        }
    }
    let mut effects = Vec::new();
    let mut scratch = draft.content.clone();
    for rule in firing {
        for a in &rule.actions {
            if let Some(e) = action_effect(rule, a, subject, &scratch, alloc) {
                scratch.apply(&e, draft.state).map_err(|m| invalid(format!("rule {}: {m}", rule.name)))?;
                effects.push(e);
            }
        }
    }
    Ok(Firing::Accepted(effects))
}

fn action_effect(
    rule: &Rule,
    action: &Action,
    subject: Id,
    content: &Content,
    alloc: &mut dyn FnMut() -> Id,
) -> Option<Effect> {
    match action {
        Action::Reject { .. } => None,
        Action::Audit { message } => Some(Effect::Audit { rule: Some(rule.id), message: message.clone() }),
        Action::SetAttr { path, value } => {
            let (last, hops) = path.split_last()?;
            let target = hops.iter().try_fold(subject, |at, seg| {
                content.individual(at).filter(|r| r.alive())?.values.get(seg)?.as_ref_id()
            });
            let Some(target) = target.filter(|t| content.individual(*t).is_some_and(|r| r.alive())) else {
                return Some(Effect::Audit {
                    rule: Some(rule.id),
                    message: format!("set_attr {} skipped: target not alive", path.join(".")),
                });
            };
            Some(Effect::SetValues {
                target,
                set: BTreeMap::from([(last.clone(), value.clone())]),
                unset: Vec::new(),
            })
        }
        Action::CreateIndividual { concept, values } => {
            let values = values
                .iter()
                .map(|(k, v)| {
                    let v = match v {
                        ActionValue::Literal(v) => v.clone(),
                        ActionValue::Subject => Value::Ref(subject),
                    };
                    (k.clone(), v)
                })
                .collect();
            Some(Effect::Create { id: alloc(), concept: *concept, values })
        }
    }
}
