//! The appraisal functional F over an org model.
//!
//! For a unit u with v vacant and e filled positions:
//!
//! ```text
//! coverage(u) = mean match_score(holder, position) over filled positions (1 if none)
//! staffing(u) = e / (v + e)                                            (1 if no positions)
//! L(u)        = w_s * coverage(u) + w_p * staffing(u)
//! F(u)        = L(u)                                   no children
//!             = mean F(c)                              children, no positions
//!             = w_local * L(u) + w_child * mean F(c)   otherwise
//! ```
//!
//! A unit with neither children nor positions gets L = F = 1: there is no
//! evidence of a gap. Employees score `w_s * match + w_p * F(unit)`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Id;
use crate::org::OrgModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppraisalParams {
    pub w_s: f64,
    pub w_p: f64,
    pub w_local: f64,
    pub w_child: f64,
}

impl Default for AppraisalParams {
    fn default() -> Self {
        AppraisalParams { w_s: 0.5, w_p: 0.5, w_local: 0.5, w_child: 0.5 }
    }
}

/// Allowed deviation of a weight pair's sum from 1.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

impl AppraisalParams {
    /// Checks ranges and sums. Each pair is then normalized so its second
    /// weight is exactly `1 - first`.
    pub fn validated(&self) -> Result<AppraisalParams> {
        let all = [("w_s", self.w_s), ("w_p", self.w_p), ("w_local", self.w_local), ("w_child", self.w_child)];
        for (name, w) in all {
            if !w.is_finite() || !(0.0..=1.0).contains(&w) {
                return Err(Error::InvalidParams(format!("{name} = {w} is outside [0, 1]")));
            }
        }
        if (self.w_s + self.w_p - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidParams(format!("w_s + w_p = {} must be 1", self.w_s + self.w_p)));
        }
        if (self.w_local + self.w_child - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidParams(format!(
                "w_local + w_child = {} must be 1",
                self.w_local + self.w_child
            )));
        }
        Ok(AppraisalParams { w_s: self.w_s, w_p: 1.0 - self.w_s, w_local: self.w_local, w_child: 1.0 - self.w_local })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreCase {
    /// No children: F = L.
    Leaf,
    /// Children but no positions: F = mean of children.
    ChildrenOnly,
    /// Both: F blends L and the children mean.
    Blend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub unit: Id,
    pub value: f64,
    pub case: ScoreCase,
    pub vacant: usize,
    pub filled: usize,
    pub coverage: f64,
    pub staffing: f64,
    pub local: f64,
    pub child_mean: Option<f64>,
}

impl Score {
    pub fn vacancy_rate(&self) -> f64 {
        1.0 - self.staffing
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmployeeScore {
    pub employee: Id,
    pub position: Id,
    pub value: f64,
    pub match_score: f64,
    pub unit_score: Score,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub employee: Id,
    pub score: f64,
    pub current_position: Option<Id>,
}

/// A hypothetical reassignment used by what-if appraisal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Move {
    pub employee: Id,
    pub position: Id,
}

/// Share of required functions the holder possesses; 1 when nothing is required.
pub fn match_score(required: &BTreeSet<String>, possessed: &BTreeSet<String>) -> f64 {
    if required.is_empty() {
        return 1.0;
    }
    required.intersection(possessed).count() as f64 / required.len() as f64
}

fn mean(xs: impl ExactSizeIterator<Item = f64>) -> Option<f64> {
    let n = xs.len();
    (n > 0).then(|| xs.sum::<f64>() / n as f64)
}

fn weigh(w_a: f64, a: f64, w_b: f64, b: f64) -> f64 {
    (w_a * a + w_b * b).clamp(0.0, 1.0)
}

/// Scores every unit bottom-up.
pub fn appraise_all(org: &OrgModel, params: &AppraisalParams) -> Result<BTreeMap<Id, Score>> {
    let p = params.validated()?;
    let mut out = BTreeMap::new();
    // Post-order without recursion so deep trees cannot overflow the stack.
    let mut stack: Vec<(Id, bool)> = org
        .units
        .values()
        .filter(|u| u.parent.map_or(true, |p| !org.units.contains_key(&p)))
        .map(|u| (u.id, false))
        .collect();
    let mut visited = BTreeSet::new();
    while let Some((u, expanded)) = stack.pop() {
        if expanded {
            let score = unit_score(org, u, &p, &out);
            out.insert(u, score);
            continue;
        }
        if !visited.insert(u) {
            continue;
        }
        stack.push((u, true));
        for c in &org.units[&u].children {
            stack.push((*c, false));
        }
    }
    Ok(out)
}

fn unit_score(org: &OrgModel, u: Id, p: &AppraisalParams, done: &BTreeMap<Id, Score>) -> Score {
    let unit = &org.units[&u];
    let positions: Vec<_> = unit.positions.iter().filter_map(|id| org.positions.get(id)).collect();
    let matches: Vec<f64> = positions
        .iter()
        .filter_map(|pos| {
            let holder = org.employees.get(&pos.holder?)?;
            Some(match_score(&pos.required, &holder.functions))
        })
        .collect();
    let filled = matches.len();
    let vacant = positions.len() - filled;
    let coverage = mean(matches.into_iter()).unwrap_or(1.0);
    let staffing = if positions.is_empty() { 1.0 } else { filled as f64 / positions.len() as f64 };
    let local = weigh(p.w_s, coverage, p.w_p, staffing);
    let child_mean = mean(unit.children.iter().filter_map(|c| done.get(c)).map(|s| s.value).collect::<Vec<_>>().into_iter());
    let (case, value) = match child_mean {
        None => (ScoreCase::Leaf, local),
        Some(m) if positions.is_empty() => (ScoreCase::ChildrenOnly, m),
        Some(m) => (ScoreCase::Blend, weigh(p.w_local, local, p.w_child, m)),
    };
    Score { unit: u, value, case, vacant, filled, coverage, staffing, local, child_mean }
}

pub fn appraise_unit(org: &OrgModel, unit: Id, params: &AppraisalParams) -> Result<Score> {
    if !org.units.contains_key(&unit) {
        return Err(Error::UnknownId(unit));
    }
    let mut all = appraise_all(org, params)?;
    all.remove(&unit).ok_or(Error::UnknownId(unit))
}

pub fn appraise_employee(org: &OrgModel, employee: Id, params: &AppraisalParams) -> Result<EmployeeScore> {
    let emp = org.employees.get(&employee).ok_or(Error::UnknownId(employee))?;
    let position = emp.position.ok_or(Error::NoAssignment)?;
    let pos = &org.positions[&position];
    let m = match_score(&pos.required, &emp.functions);
    let p = params.validated()?;
    let unit_score = appraise_unit(org, pos.unit, &p)?;
    let value = weigh(p.w_s, m, p.w_p, unit_score.value);
    Ok(EmployeeScore { employee, position, value, match_score: m, unit_score })
}

/// Every employee ranked by match to a vacant position; ties by id.
pub fn rank_candidates(org: &OrgModel, position: Id) -> Result<Vec<Candidate>> {
    let pos = org.positions.get(&position).ok_or(Error::UnknownId(position))?;
    if pos.holder.is_some() {
        return Err(Error::NotVacant(position));
    }
    let mut out: Vec<Candidate> = org
        .employees
        .values()
        .map(|e| Candidate {
            employee: e.id,
            score: match_score(&pos.required, &e.functions),
            current_position: e.position,
        })
        .collect();
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.employee.cmp(&b.employee)));
    Ok(out)
}

/// Applies hypothetical moves to a copy of the model and scores every unit.
pub fn what_if(org: &OrgModel, moves: &[Move], params: &AppraisalParams) -> Result<BTreeMap<Id, Score>> {
    let mut model = org.clone();
    for m in moves {
        if !model.employees.contains_key(&m.employee) {
            return Err(Error::UnknownId(m.employee));
        }
        if !model.positions.contains_key(&m.position) {
            return Err(Error::UnknownId(m.position));
        }
        model.assign(m.employee, m.position);
    }
    appraise_all(&model, params)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[&str]) -> BTreeSet<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn match_score_cases() {
        assert_eq!(match_score(&set(&["a", "b", "c", "d"]), &set(&["a", "b"])), 0.5);
        assert_eq!(match_score(&set(&[]), &set(&["x"])), 1.0);
        assert_eq!(match_score(&set(&["a"]), &set(&[])), 0.0);
    }

    fn leaf(vacant: usize, filled_perfect: usize) -> OrgModel {
        let mut m = OrgModel::new();
        m.add_unit(Id(1), "leaf", None);
        let mut next = 10;
        for _ in 0..filled_perfect {
            m.add_position(Id(next), Id(1), "p", &["a"]);
            m.add_employee(Id(next + 1), "e", &["a"]);
            m.assign(Id(next + 1), Id(next));
            next += 2;
        }
        for _ in 0..vacant {
            m.add_position(Id(next), Id(1), "p", &["a"]);
            next += 2;
        }
        m
    }

    #[test]
    fn leaf_hand_checks() {
        let p = AppraisalParams::default();
        assert_eq!(appraise_unit(&leaf(0, 2), Id(1), &p).unwrap().value, 1.0);
        let s = appraise_unit(&leaf(2, 0), Id(1), &p).unwrap();
        assert_eq!((s.coverage, s.vacancy_rate(), s.value), (1.0, 1.0, 0.5));
    }

    #[test]
    fn positionless_root_averages_children() {
        let mut m = OrgModel::new();
        m.add_unit(Id(1), "root", None);
        m.add_unit(Id(2), "full", Some(Id(1)));
        m.add_unit(Id(3), "empty", Some(Id(1)));
        m.add_position(Id(10), Id(2), "p", &[]);
        m.add_employee(Id(11), "e", &[]);
        m.assign(Id(11), Id(10));
        m.add_position(Id(12), Id(3), "p", &[]);
        let s = appraise_unit(&m, Id(1), &AppraisalParams::default()).unwrap();
        assert_eq!(s.case, ScoreCase::ChildrenOnly);
        assert_eq!(s.value, 0.75);
    }

    #[test]
    fn employee_and_ranking() {
        let mut m = leaf(1, 0);
        m.add_position(Id(50), Id(1), "p", &["a", "b"]);
        m.add_employee(Id(60), "half", &["a"]);
        m.assign(Id(60), Id(50));
        // unit: coverage 0.5, staffing 0.5 -> 0.5; employee 0.5*0.5 + 0.5*0.5
        let e = appraise_employee(&m, Id(60), &AppraisalParams::default()).unwrap();
        assert_eq!((e.match_score, e.unit_score.value, e.value), (0.5, 0.5, 0.5));
        m.add_employee(Id(61), "none", &[]);
        assert_eq!(appraise_employee(&m, Id(61), &AppraisalParams::default()).unwrap_err(), Error::NoAssignment);
        let ranked = rank_candidates(&m, Id(10)).unwrap();
        assert_eq!(ranked.iter().map(|c| c.employee).collect::<Vec<_>>(), vec![Id(60), Id(61)]);
        assert_eq!(rank_candidates(&m, Id(50)).unwrap_err(), Error::NotVacant(Id(50)));
    }

    #[test]
    fn params_are_validated_and_normalized() {
        let bad = AppraisalParams { w_s: 0.7, ..AppraisalParams::default() };
        assert!(matches!(bad.validated(), Err(Error::InvalidParams(_))));
        let neg = AppraisalParams { w_s: -0.5, w_p: 1.5, ..AppraisalParams::default() };
        assert!(neg.validated().is_err());
        let ok = AppraisalParams { w_s: 0.3, w_p: 0.7, w_local: 0.9, w_child: 0.1 }.validated().unwrap();
        assert_eq!(ok.w_p, 1.0 - 0.3);
    }

    #[test]
    fn complementary_weights_sum_to_exactly_one() {
        // The perfect-staffing fixpoint relies on w + (1 - w) == 1 in floating point.
        let mut x = 0.0f64;
        while x <= 1.0 {
            assert_eq!(x * 1.0 + (1.0 - x) * 1.0, 1.0, "w = {x}");
            x += 0.000_123_7;
        }
    }
}
