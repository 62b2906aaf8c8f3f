//! Deterministic demo corporation: a depth-3 org tree of 22 units, staffed
//! through `hire` events from a fixed-seed generator.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use super::{ORG_PACK, PERSONAL_DATA_PACK};
use crate::access::Session;
use crate::error::{Error, Result};
use crate::event::Command;
use crate::model::{Id, StateIndex};
use crate::org;
use crate::store::{passcode_digest, Step, Store};
use crate::value::Value;

pub const DEMO_SEED: u64 = 0x00D0_B1EC;

const LAST: [&str; 10] =
    ["Ivanov", "Petrov", "Sidorov", "Smirnov", "Kuznetsov", "Popov", "Sokolov", "Lebedev", "Kozlov", "Novikov"];
const FIRST: [&str; 8] = ["Anna", "Boris", "Elena", "Igor", "Maria", "Oleg", "Olga", "Pavel"];
const REGULAR_TITLES: [&str; 5] = ["Specialist", "Engineer", "Accountant", "Analyst", "Clerk"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoOptions {
    pub employees: usize,
    /// No vacancies and every holder has exactly the required functions.
    pub perfect: bool,
    /// Vacant positions per filled one when not perfect.
    pub vacancy_ratio: f64,
}

impl DemoOptions {
    pub fn new(employees: usize) -> DemoOptions {
        DemoOptions { employees, perfect: false, vacancy_ratio: 0.15 }
    }

    pub fn perfect(employees: usize) -> DemoOptions {
        DemoOptions { employees, perfect: true, vacancy_ratio: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DemoReport {
    pub head: StateIndex,
    pub root: Id,
    /// Units in creation order: root, divisions, departments, sections.
    pub units: Vec<Id>,
    pub positions: Vec<Id>,
    pub employees: Vec<Id>,
}

struct PlannedPosition {
    unit: usize,
    title: String,
    required: Vec<Id>,
}

/// Seeds the demo corporation. Needs the org and Personal Data packs.
pub fn seed_demo(store: &Store, session: &Session, options: &DemoOptions) -> Result<DemoReport> {
    let snap = store.head_snapshot();
    let missing: Vec<String> = [ORG_PACK, PERSONAL_DATA_PACK]
        .into_iter()
        .filter(|p| !snap.content().is_applied(p))
        .map(String::from)
        .collect();
    if !missing.is_empty() {
        return Err(Error::PacksMissing(missing));
    }
    let functions: Vec<Id> = org::alive_of(snap.content(), org::WORKING_FUNCTION).map(|(id, _)| id).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(DEMO_SEED);

    // Units: parent index per unit, root first.
    let mut unit_plan: Vec<(String, Option<usize>)> = vec![("Corporation".into(), None)];
    for d in 1..=3 {
        unit_plan.push((format!("Division {d}"), Some(0)));
    }
    for d in 1..=3 {
        for p in 1..=2 {
            unit_plan.push((format!("Department {d}.{p}"), Some(d)));
        }
    }
    for dep in 4..10 {
        let label = unit_plan[dep].0.trim_start_matches("Department ").to_string();
        for s in 1..=2 {
            unit_plan.push((format!("Section {label}.{s}"), Some(dep)));
        }
    }
    let steps = unit_plan
        .iter()
        .enumerate()
        .map(|(i, (name, parent))| {
            let mut values = serde_json::Map::new();
            values.insert("name".into(), json!(name));
            if let Some(p) = parent {
                values.insert("parent".into(), json!(format!("@u{p}")));
            }
            Step::Seed { key: Some(format!("u{i}")), concept: org::ORG_UNIT.into(), values }
        })
        .collect();
    let units: Vec<Id> =
        store.submit_steps(session, steps)?.into_iter().map(|r| r.created.expect("unit created")).collect();
    if options.employees == 0 {
        return Ok(DemoReport { head: store.head(), root: units[0], units, positions: vec![], employees: vec![] });
    }

    // Positions: leadership first, then regular staff, then vacancies.
    let pick_required = |rng: &mut ChaCha8Rng| -> Vec<Id> {
        let n = rng.gen_range(1..=3).min(functions.len());
        let mut f: Vec<Id> = functions.choose_multiple(rng, n).copied().collect();
        f.sort();
        f
    };
    let special = [
        (0usize, "President"),
        (0, "HR Director"),
        (1, "Head of Unit"),
        (2, "Head of Unit"),
        (3, "Head of Unit"),
        (4, "HR Officer"),
    ];
    let mut planned: Vec<PlannedPosition> = Vec::new();
    for (unit, title) in special.iter().take(options.employees) {
        planned.push(PlannedPosition { unit: *unit, title: title.to_string(), required: pick_required(&mut rng) });
    }
    let regular_unit = |rng: &mut ChaCha8Rng| if rng.gen_bool(0.7) { rng.gen_range(10..22) } else { rng.gen_range(4..10) };
    while planned.len() < options.employees {
        let unit = regular_unit(&mut rng);
        let title = REGULAR_TITLES.choose(&mut rng).unwrap().to_string();
        planned.push(PlannedPosition { unit, title, required: pick_required(&mut rng) });
    }
    let vacant = if options.perfect { 0 } else { ((options.employees as f64 * options.vacancy_ratio).round() as usize).max(1) };
    for _ in 0..vacant {
        let unit = rng.gen_range(1..22);
        let title = REGULAR_TITLES.choose(&mut rng).unwrap().to_string();
        planned.push(PlannedPosition { unit, title, required: pick_required(&mut rng) });
    }
    let mut steps = Vec::new();
    for (i, p) in planned.iter().enumerate() {
        let mut values = serde_json::Map::new();
        values.insert("title".into(), json!(p.title));
        values.insert("unit".into(), json!(units[p.unit].0));
        steps.push(Step::Seed { key: Some(format!("p{i}")), concept: org::POSITION.into(), values });
        for f in &p.required {
            let mut values = serde_json::Map::new();
            values.insert("position".into(), json!(format!("@p{i}")));
            values.insert("function".into(), json!(f.0));
            steps.push(Step::Seed { key: None, concept: org::POSITION_FUNCTION.into(), values });
        }
    }
    let receipts = store.submit_steps(session, steps)?;
    let mut positions = Vec::with_capacity(planned.len());
    let mut at = 0;
    for p in &planned {
        positions.push(receipts[at].created.expect("position created"));
        at += 1 + p.required.len();
    }

    // Hires, each followed by the holder's working functions.
    let mut steps = Vec::new();
    let mut hire_steps = Vec::new();
    for (i, p) in planned.iter().take(options.employees).enumerate() {
        let login = format!("e{i}");
        let day = chrono::NaiveDate::from_ymd_opt(2000, 1, 1).unwrap() + chrono::Days::new(rng.gen_range(0..8000));
        let mut values = serde_json::Map::new();
        values.insert("name".into(), json!(format!("{} {}", LAST.choose(&mut rng).unwrap(), FIRST.choose(&mut rng).unwrap())));
        values.insert("hire_date".into(), json!(day.to_string()));
        values.insert("status".into(), json!("active"));
        if rng.gen_bool(0.85) {
            values.insert("citizenship".into(), json!("domestic"));
        } else {
            values.insert("citizenship".into(), json!("foreign"));
            values.insert("visa_no".into(), json!(format!("V{i:05}")));
        }
        values.insert("passcode".into(), json!(passcode_digest(&login)));
        values.insert("login".into(), json!(login));
        let key = format!("e{i}");
        hire_steps.push(steps.len());
        steps.push(Step::Keyed { key: key.clone(), cmd: Command::Hire { values, position: Some(positions[i]) } });
        let possessed: BTreeSet<Id> = if options.perfect {
            p.required.iter().copied().collect()
        } else {
            let mut s: BTreeSet<Id> = p.required.iter().copied().filter(|_| rng.gen_bool(0.7)).collect();
            if rng.gen_bool(0.3) {
                if let Some(f) = functions.choose(&mut rng) {
                    s.insert(*f);
                }
            }
            s
        };
        for f in possessed {
            let mut values = serde_json::Map::new();
            values.insert("employee".into(), json!(format!("@{key}")));
            values.insert("function".into(), json!(f.0));
            steps.push(Step::Seed { key: None, concept: org::EMPLOYEE_FUNCTION.into(), values });
        }
    }
    let receipts = store.submit_steps(session, steps)?;
    let employees: Vec<Id> = hire_steps.iter().map(|i| receipts[*i].created.expect("employee hired")).collect();
    Ok(DemoReport { head: store.head(), root: units[0], units, positions, employees })
}

/// Login of a demo employee; the demo password equals the login.
pub fn demo_login(store: &Store, employee: Id) -> Option<String> {
    store.head_snapshot().value(employee, "login").and_then(|v| match v {
        Value::Text(t) => Some(t),
        _ => None,
    })
}
