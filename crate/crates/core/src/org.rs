//! The organization as stored data: units, positions, working functions,
//! employees and their assignments.
//!
//! Org data lives in ordinary concepts delivered by packs. [`OrgModel`] is a
//! plain in-memory projection of those concepts at one state. It is also
//! constructible by hand, which the appraisal what-if path and the tests use.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::content::Content;
use crate::model::Id;
use crate::value::Value;
use crate::view::View;

pub const ORG_UNIT: &str = "OrgUnit";
pub const POSITION: &str = "Position";
pub const WORKING_FUNCTION: &str = "WorkingFunction";
pub const POSITION_FUNCTION: &str = "PositionFunction";
pub const SCENARIO_MAPPING: &str = "ScenarioMapping";
pub const EMPLOYEE: &str = "Employee";
pub const EMPLOYEE_FUNCTION: &str = "EmployeeFunction";
pub const ASSIGNMENT: &str = "Assignment";
pub const LEAVE_REQUEST: &str = "LeaveRequest";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub id: Id,
    pub name: String,
    pub parent: Option<Id>,
    pub children: Vec<Id>,
    pub positions: Vec<Id>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionNode {
    pub id: Id,
    pub unit: Id,
    pub title: String,
    pub required: BTreeSet<String>,
    pub holder: Option<Id>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmployeeNode {
    pub id: Id,
    pub name: String,
    pub functions: BTreeSet<String>,
    pub position: Option<Id>,
    pub dept: Option<Id>,
    pub status: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OrgModel {
    pub units: BTreeMap<Id, Unit>,
    pub positions: BTreeMap<Id, PositionNode>,
    pub employees: BTreeMap<Id, EmployeeNode>,
    /// Position title -> scenario name, from the scenario mapping table.
    pub scenario_titles: BTreeMap<String, String>,
}

fn text(values: &BTreeMap<String, Value>, key: &str) -> Option<String> {
    values.get(key).and_then(|v| v.as_text()).map(str::to_string)
}

fn reference(values: &BTreeMap<String, Value>, key: &str) -> Option<Id> {
    values.get(key).and_then(Value::as_ref_id)
}

/// Alive individuals of the named concept with their values.
pub(crate) fn alive_of<'c>(
    content: &'c Content,
    concept: &str,
) -> impl Iterator<Item = (Id, &'c BTreeMap<String, Value>)> + 'c {
    let members = content.concept_by_name(concept).map(|c| content.alive_members(c.id)).unwrap_or_default();
    members.into_iter().filter_map(move |id| content.individual(id).map(|r| (id, &r.values)))
}

/// The alive assignment of an employee, if any, as (assignment, position).
pub(crate) fn active_assignment(content: &Content, employee: Id) -> Option<(Id, Id)> {
    let concept = content.name_id(ASSIGNMENT)?;
    content.referrers(employee).find_map(|a| {
        let rec = content.individual(a)?;
        (rec.concept == concept && reference(&rec.values, "employee") == Some(employee))
            .then(|| reference(&rec.values, "position").map(|p| (a, p)))
            .flatten()
    })
}

/// The employee holding a position through an alive assignment.
pub(crate) fn holder_of(content: &Content, position: Id) -> Option<Id> {
    let concept = content.name_id(ASSIGNMENT)?;
    content.referrers(position).find_map(|a| {
        let rec = content.individual(a)?;
        (rec.concept == concept && reference(&rec.values, "position") == Some(position))
            .then(|| reference(&rec.values, "employee"))
            .flatten()
    })
}

impl OrgModel {
    pub fn new() -> Self {
        Self::default()
    }

    /// Projects the org concepts of a state. Missing concepts yield an
    /// empty (or partial) model.
    pub fn from_view(view: &View<'_>) -> OrgModel {
        let content = view.content();
        let mut m = OrgModel::new();
        for (id, v) in alive_of(content, ORG_UNIT) {
            m.units.insert(
                id,
                Unit { id, name: text(v, "name").unwrap_or_default(), parent: reference(v, "parent"), ..Unit::default() },
            );
        }
        let parents: Vec<(Id, Id)> =
            m.units.values().filter_map(|u| u.parent.map(|p| (u.id, p))).collect();
        for (child, parent) in parents {
            if let Some(p) = m.units.get_mut(&parent) {
                p.children.push(child);
            }
        }
        for (id, v) in alive_of(content, POSITION) {
            let Some(unit) = reference(v, "unit").filter(|u| m.units.contains_key(u)) else { continue };
            m.units.get_mut(&unit).unwrap().positions.push(id);
            m.positions.insert(
                id,
                PositionNode { id, unit, title: text(v, "title").unwrap_or_default(), ..PositionNode::default() },
            );
        }
        let tags: BTreeMap<Id, String> =
            alive_of(content, WORKING_FUNCTION).filter_map(|(id, v)| text(v, "tag").map(|t| (id, t))).collect();
        for (_, v) in alive_of(content, POSITION_FUNCTION) {
            if let (Some(p), Some(tag)) = (reference(v, "position"), reference(v, "function").and_then(|f| tags.get(&f))) {
                if let Some(pos) = m.positions.get_mut(&p) {
                    pos.required.insert(tag.clone());
                }
            }
        }
        for (id, v) in alive_of(content, EMPLOYEE) {
            m.employees.insert(
                id,
                EmployeeNode {
                    id,
                    name: text(v, "name").unwrap_or_default(),
                    dept: reference(v, "dept"),
                    status: text(v, "status"),
                    ..EmployeeNode::default()
                },
            );
        }
        for (_, v) in alive_of(content, EMPLOYEE_FUNCTION) {
            if let (Some(e), Some(tag)) = (reference(v, "employee"), reference(v, "function").and_then(|f| tags.get(&f))) {
                if let Some(emp) = m.employees.get_mut(&e) {
                    emp.functions.insert(tag.clone());
                }
            }
        }
        for (_, v) in alive_of(content, ASSIGNMENT) {
            if let (Some(e), Some(p)) = (reference(v, "employee"), reference(v, "position")) {
                if m.employees.contains_key(&e) && m.positions.contains_key(&p) {
                    m.employees.get_mut(&e).unwrap().position = Some(p);
                    m.positions.get_mut(&p).unwrap().holder = Some(e);
                }
            }
        }
        for (_, v) in alive_of(content, SCENARIO_MAPPING) {
            if let (Some(t), Some(s)) = (text(v, "title"), text(v, "scenario")) {
                m.scenario_titles.insert(t, s);
            }
        }
        m
    }

    pub fn add_unit(&mut self, id: Id, name: &str, parent: Option<Id>) {
        self.units.insert(id, Unit { id, name: name.into(), parent, ..Unit::default() });
        if let Some(p) = parent.and_then(|p| self.units.get_mut(&p)) {
            p.children.push(id);
        }
    }

    pub fn add_position(&mut self, id: Id, unit: Id, title: &str, required: &[&str]) {
        self.positions.insert(
            id,
            PositionNode {
                id,
                unit,
                title: title.into(),
                required: required.iter().map(|s| s.to_string()).collect(),
                holder: None,
            },
        );
        if let Some(u) = self.units.get_mut(&unit) {
            u.positions.push(id);
        }
    }

    pub fn add_employee(&mut self, id: Id, name: &str, functions: &[&str]) {
        self.employees.insert(
            id,
            EmployeeNode {
                id,
                name: name.into(),
                functions: functions.iter().map(|s| s.to_string()).collect(),
                ..EmployeeNode::default()
            },
        );
    }

    /// Places an employee in a position. A previous holder of the target
    /// becomes unassigned; the employee's old position becomes vacant.
    pub fn assign(&mut self, employee: Id, position: Id) {
        if let Some(old) = self.employees.get(&employee).and_then(|e| e.position) {
            if let Some(p) = self.positions.get_mut(&old) {
                p.holder = None;
            }
        }
        if let Some(prev) = self.positions.get(&position).and_then(|p| p.holder) {
            if let Some(e) = self.employees.get_mut(&prev) {
                e.position = None;
            }
        }
        if let Some(p) = self.positions.get_mut(&position) {
            p.holder = Some(employee);
        }
        if let Some(e) = self.employees.get_mut(&employee) {
            e.position = Some(position);
        }
    }

    pub fn root(&self) -> Option<Id> {
        let mut roots = self.units.values().filter(|u| u.parent.is_none());
        let r = roots.next()?;
        roots.next().is_none().then_some(r.id)
    }

    /// The unit and all units below it.
    pub fn subtree(&self, unit: Id) -> BTreeSet<Id> {
        let mut out = BTreeSet::new();
        let mut queue = VecDeque::from([unit]);
        while let Some(u) = queue.pop_front() {
            if !out.insert(u) {
                continue;
            }
            if let Some(node) = self.units.get(&u) {
                queue.extend(node.children.iter().copied());
            }
        }
        out
    }

    /// Units strictly above `unit`, nearest first.
    pub fn ancestors(&self, unit: Id) -> Vec<Id> {
        let mut out = Vec::new();
        let mut at = self.units.get(&unit).and_then(|u| u.parent);
        while let Some(p) = at {
            if out.contains(&p) {
                break;
            }
            out.push(p);
            at = self.units.get(&p).and_then(|u| u.parent);
        }
        out
    }

    pub fn depth(&self) -> usize {
        self.units.keys().map(|u| self.ancestors(*u).len()).max().map_or(0, |d| d + 1)
    }

    /// The unit an employee works in: that of the held position, otherwise
    /// the recorded department.
    pub fn employee_unit(&self, employee: Id) -> Option<Id> {
        let e = self.employees.get(&employee)?;
        e.position.and_then(|p| self.positions.get(&p)).map(|p| p.unit).or(e.dept)
    }

    pub fn vacancies(&self) -> impl Iterator<Item = &PositionNode> {
        self.positions.values().filter(|p| p.holder.is_none())
    }

    /// Tree violations: number of roots other than one, dangling parents, cycles.
    pub fn structural_problems(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let roots = self.units.values().filter(|u| u.parent.is_none()).count();
        if !self.units.is_empty() && roots != 1 {
            problems.push(format!("org units must have exactly one root, found {roots}"));
        }
        for u in self.units.values() {
            if let Some(p) = u.parent {
                if !self.units.contains_key(&p) {
                    problems.push(format!("unit {} has a missing parent {p}", u.id));
                }
            }
            let mut seen = BTreeSet::from([u.id]);
            let mut at = u.parent;
            while let Some(p) = at {
                if !seen.insert(p) {
                    problems.push(format!("unit {} is part of a parent cycle", u.id));
                    break;
                }
                at = self.units.get(&p).and_then(|n| n.parent);
            }
        }
        problems
    }
}
