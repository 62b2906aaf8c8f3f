//! Type checking and two-valued evaluation of formulas against a state.
//!
//! Checking resolves every path against concept schemas and rejects
//! unknown attributes and literal/attribute type mismatches up front.
//! Evaluation then treats any absent value or dangling hop as making the
//! atom false.

use std::borrow::Cow;
use std::collections::BTreeMap;

use super::{CmpOp, Formula, Literal, Operand, Path};
use crate::error::{Error, Result};
use crate::model::Id;
use crate::value::{Value, ValueType};
use crate::view::View;

/// Who a formula is evaluated about.
#[derive(Clone, Debug, PartialEq)]
pub enum Subject {
    /// A stored individual, concept or meta-object.
    Stored(Id),
    /// Values being entered for a not-yet-created individual.
    Draft { concept: Id, values: BTreeMap<String, Value> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Binding {
    pub subject: Subject,
    pub vars: BTreeMap<String, Id>,
}

impl Binding {
    pub fn stored(id: Id) -> Binding {
        Binding { subject: Subject::Stored(id), vars: BTreeMap::new() }
    }

    pub fn draft(concept: Id, values: BTreeMap<String, Value>) -> Binding {
        Binding { subject: Subject::Draft { concept, values }, vars: BTreeMap::new() }
    }

    pub(crate) fn vars_schema(&self, view: &View<'_>) -> Result<BTreeMap<String, Id>> {
        self.vars
            .iter()
            .map(|(name, id)| view.concept_of(*id).map(|c| (name.clone(), c)).ok_or(Error::UnknownId(*id)))
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum PathType {
    /// `self` or a bound variable.
    Entity(Id),
    Value(ValueType),
}

/// Type-checks a formula whose subject is described by `subject_schema`.
pub fn check(f: &Formula, subject_schema: Id, view: &View<'_>) -> Result<()> {
    check_with_vars(f, subject_schema, &BTreeMap::new(), view)
}

pub(crate) fn check_with_vars(
    f: &Formula,
    subject_schema: Id,
    vars: &BTreeMap<String, Id>,
    view: &View<'_>,
) -> Result<()> {
    let mut scope: Vec<(String, Id)> = vars.iter().map(|(k, v)| (k.clone(), *v)).collect();
    check_node(f, subject_schema, &mut scope, view)
}

fn check_node(f: &Formula, subject: Id, scope: &mut Vec<(String, Id)>, view: &View<'_>) -> Result<()> {
    match f {
        Formula::Compare { path, op, rhs } => {
            let ty = path_type(path, subject, scope, view)?;
            check_compare(path, ty, *op, rhs)
        }
        Formula::InConcept { path, domain } => {
            view.resolve_domain(domain)?;
            match path_type(path, subject, scope, view)? {
                PathType::Entity(_) | PathType::Value(ValueType::Reference(_)) => Ok(()),
                PathType::Value(ty) => Err(Error::TypeMismatch(format!("'{path}' is {ty}, not an object reference"))),
            }
        }
        Formula::And(parts) | Formula::Or(parts) => parts.iter().try_for_each(|p| check_node(p, subject, scope, view)),
        Formula::Not(inner) => check_node(inner, subject, scope, view),
        Formula::Exists { var, domain, body } => {
            let d = view.resolve_domain(domain)?;
            scope.push((var.clone(), view.member_schema(&d)));
            let r = check_node(body, subject, scope, view);
            scope.pop();
            r
        }
    }
}

fn attr_type(concept: Id, attr: &str, view: &View<'_>) -> Result<ValueType> {
    let def = view.content.concept(concept).ok_or_else(|| Error::UnknownConcept(concept.to_string()))?;
    def.attribute(attr).map(|a| a.value_type).ok_or_else(|| Error::UnknownAttribute {
        concept: def.name.clone(),
        attribute: attr.to_string(),
    })
}

fn path_type(path: &Path, subject: Id, scope: &[(String, Id)], view: &View<'_>) -> Result<PathType> {
    let segs = path.segments();
    let root = &segs[0];
    let mut cur = if root == "self" {
        PathType::Entity(subject)
    } else if let Some((_, c)) = scope.iter().rev().find(|(n, _)| n == root) {
        PathType::Entity(*c)
    } else {
        PathType::Value(attr_type(subject, root, view)?)
    };
    for seg in &segs[1..] {
        let concept = match cur {
            PathType::Entity(c) | PathType::Value(ValueType::Reference(c)) => c,
            PathType::Value(ty) => {
                return Err(Error::TypeMismatch(format!("cannot follow '{seg}' through a {ty} value in '{path}'")))
            }
        };
        cur = PathType::Value(attr_type(concept, seg, view)?);
    }
    Ok(cur)
}

fn check_compare(path: &Path, ty: PathType, op: CmpOp, rhs: &Operand) -> Result<()> {
    let mismatch = |what: &str| {
        Err(Error::TypeMismatch(format!("'{path}' ({}) compared with {what}", describe_type(ty))))
    };
    let lit = match rhs {
        Operand::SelfRef => {
            return match ty {
                PathType::Entity(_) | PathType::Value(ValueType::Reference(_)) => Ok(()),
                _ => mismatch("self"),
            }
        }
        Operand::Literal(l) => l,
    };
    let ok = match (lit, ty) {
        (Literal::Null, PathType::Value(_)) => matches!(op, CmpOp::Eq | CmpOp::Ne),
        (Literal::Null, PathType::Entity(_)) => false,
        (Literal::Integer(_), PathType::Entity(_)) => true,
        (Literal::Integer(_), PathType::Value(t)) => {
            matches!(t, ValueType::Integer | ValueType::Decimal | ValueType::Reference(_))
        }
        (Literal::Decimal(_), PathType::Value(t)) => matches!(t, ValueType::Integer | ValueType::Decimal),
        (Literal::Text(_), PathType::Value(ValueType::Text)) => true,
        (Literal::Bool(_), PathType::Value(ValueType::Boolean)) => true,
        (Literal::Date(_), PathType::Value(ValueType::Date)) => true,
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        mismatch(&format!("{lit}"))
    }
}

fn describe_type(ty: PathType) -> String {
    match ty {
        PathType::Entity(_) => "object".into(),
        PathType::Value(t) => t.to_string(),
    }
}

enum Resolved {
    Entity(Id),
    Val(Value),
    Absent,
}

struct Env<'a> {
    subject_id: Option<Id>,
    subject_values: Cow<'a, BTreeMap<String, Value>>,
    scope: Vec<(String, Id)>,
}

/// Evaluates a formula that already passed [`check`].
pub fn evaluate_checked(f: &Formula, binding: &Binding, view: &View<'_>) -> Result<bool> {
    let (subject_id, subject_values) = match &binding.subject {
        Subject::Stored(id) => match view.entity(*id) {
            Some(e) => (Some(*id), e.values),
            None => return Err(Error::NotAliveAtState { id: *id, state: view.state }),
        },
        Subject::Draft { values, .. } => (None, Cow::Borrowed(values)),
    };
    let mut env =
        Env { subject_id, subject_values, scope: binding.vars.iter().map(|(k, v)| (k.clone(), *v)).collect() };
    eval(f, &mut env, view)
}

fn eval(f: &Formula, env: &mut Env<'_>, view: &View<'_>) -> Result<bool> {
    match f {
        Formula::Compare { path, op, rhs } => {
            let r = resolve(path, env, view);
            Ok(compare(&r, *op, rhs, env.subject_id))
        }
        Formula::InConcept { path, domain } => {
            let id = match resolve(path, env, view) {
                Resolved::Entity(id) | Resolved::Val(Value::Ref(id)) => id,
                _ => return Ok(false),
            };
            let d = view.resolve_domain(domain)?;
            Ok(view.members(&d)?.contains(&id))
        }
        Formula::And(parts) => {
            for p in parts {
                if !eval(p, env, view)? {
                    return Ok(false);
                }
            }
            Ok(true)
        }
        Formula::Or(parts) => {
            for p in parts {
                if eval(p, env, view)? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
        Formula::Not(inner) => Ok(!eval(inner, env, view)?),
        Formula::Exists { var, domain, body } => {
            let d = view.resolve_domain(domain)?;
            let members = view.members(&d)?;
            for x in members.iter() {
                env.scope.push((var.clone(), x));
                let hit = eval(body, env, view);
                env.scope.pop();
                if hit? {
                    return Ok(true);
                }
            }
            Ok(false)
        }
    }
}

fn resolve(path: &Path, env: &Env<'_>, view: &View<'_>) -> Resolved {
    let segs = path.segments();
    let root = segs[0].as_str();
    let bound = if root == "self" {
        Some(env.subject_id)
    } else {
        env.scope.iter().rev().find(|(n, _)| n == root).map(|(_, id)| Some(*id))
    };
    let (mut values, rest): (Cow<'_, BTreeMap<String, Value>>, &[String]) = match bound {
        Some(None) => return Resolved::Absent,
        Some(Some(id)) if segs.len() == 1 => return Resolved::Entity(id),
        Some(Some(id)) => match view.entity(id) {
            Some(e) => (e.values, &segs[1..]),
            None => return Resolved::Absent,
        },
        None => (Cow::Borrowed(env.subject_values.as_ref()), segs),
    };
    for (i, seg) in rest.iter().enumerate() {
        let Some(v) = values.get(seg.as_str()) else { return Resolved::Absent };
        if i + 1 == rest.len() {
            return Resolved::Val(v.clone());
        }
        let Some(next) = v.as_ref_id().and_then(|id| view.entity(id)) else { return Resolved::Absent };
        values = Cow::Owned(next.values.into_owned());
    }
    Resolved::Absent
}

fn compare(lhs: &Resolved, op: CmpOp, rhs: &Operand, subject: Option<Id>) -> bool {
    if let Operand::Literal(Literal::Null) = rhs {
        let absent = matches!(lhs, Resolved::Absent);
        return match op {
            CmpOp::Eq => absent,
            CmpOp::Ne => !absent,
            _ => false,
        };
    }
    let lhs = match lhs {
        Resolved::Absent => return false,
        Resolved::Entity(id) => Value::Ref(*id),
        Resolved::Val(v) => v.clone(),
    };
    let rhs = match rhs {
        Operand::SelfRef => match subject {
            Some(id) => Value::Ref(id),
            None => return false,
        },
        Operand::Literal(lit) => match (lit, &lhs) {
            (Literal::Integer(i), Value::Ref(_)) => match u64::try_from(*i) {
                Ok(v) => Value::Ref(Id(v)),
                Err(_) => return false,
            },
            (Literal::Integer(i), _) => Value::Integer(*i),
            (Literal::Decimal(d), _) => Value::Decimal(*d),
            (Literal::Text(s), _) => Value::Text(s.clone()),
            (Literal::Bool(b), _) => Value::Boolean(*b),
            (Literal::Date(d), _) => Value::Date(*d),
            (Literal::Null, _) => unreachable!("handled above"),
        },
    };
    lhs.compare(&rhs).is_some_and(|ord| op.holds(ord))
}
