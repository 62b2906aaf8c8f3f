//! Shared test scaffolding: a shadow model of a small "Person" world kept in
//! plain collections, a random formula generator with its own brute-force
//! evaluator, and an independent implementation of the appraisal functional.
//! Nothing here calls into the engine's evaluator.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use dobj_core::appraisal::AppraisalParams;
use dobj_core::org::OrgModel;
use dobj_core::{AttrDraft, Command, Id, Session, StateIndex, Store};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value as Json};

pub const NAME_POOL: usize = 1200;
pub const DEPTS: [&str; 6] = ["d0", "d1", "d2", "d3", "d4", "d5"];

#[derive(Clone, Debug, PartialEq)]
pub struct Person {
    pub name: String,
    pub age: Option<i64>,
    pub dept: Option<String>,
    pub active: Option<bool>,
    pub boss: Option<u64>,
}

/// The alive persons of one state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct World {
    pub people: BTreeMap<u64, Person>,
}

pub fn define_person(store: &Store, admin: &Session) -> Id {
    store
        .define_concept(
            admin,
            "Person",
            vec![
                AttrDraft::new("name", "text").required(),
                AttrDraft::new("age", "integer"),
                AttrDraft::new("dept", "text"),
                AttrDraft::new("active", "boolean"),
                AttrDraft::new("boss", "reference(Person)"),
            ],
        )
        .expect("define Person")
}

fn random_person(rng: &mut ChaCha8Rng, world: &World) -> Person {
    let alive: Vec<u64> = world.people.keys().copied().collect();
    Person {
        name: format!("N{}", rng.gen_range(0..NAME_POOL)),
        age: rng.gen_bool(0.9).then(|| rng.gen_range(18..70)),
        dept: rng.gen_bool(0.8).then(|| DEPTS.choose(rng).unwrap().to_string()),
        active: rng.gen_bool(0.85).then(|| rng.gen_bool(0.7)),
        boss: if rng.gen_bool(0.6) { alive.choose(rng).copied() } else { None },
    }
}

fn person_json(p: &Person) -> Map<String, Json> {
    let mut m = Map::new();
    m.insert("name".into(), json!(p.name));
    if let Some(a) = p.age {
        m.insert("age".into(), json!(a));
    }
    if let Some(d) = &p.dept {
        m.insert("dept".into(), json!(d));
    }
    if let Some(a) = p.active {
        m.insert("active".into(), json!(a));
    }
    if let Some(b) = p.boss {
        m.insert("boss".into(), json!(b));
    }
    m
}

/// Creates a person in both the store and the shadow world.
pub fn create_person(store: &Store, admin: &Session, world: &mut World, rng: &mut ChaCha8Rng) -> u64 {
    let p = random_person(rng, world);
    let r = store
        .submit(admin, Command::Create { concept: "Person".into(), values: person_json(&p) })
        .expect("create person");
    let id = r.created.expect("created").0;
    world.people.insert(id, p);
    id
}

/// One random data event (create, update or retire) applied to both sides.
pub fn random_data_event(store: &Store, admin: &Session, world: &mut World, rng: &mut ChaCha8Rng) {
    let roll = rng.gen_range(0..100);
    if world.people.is_empty() || roll < 55 {
        create_person(store, admin, world, rng);
        return;
    }
    let ids: Vec<u64> = world.people.keys().copied().collect();
    let target = *ids.choose(rng).unwrap();
    if roll < 90 {
        let mut values = Map::new();
        let mut unset = Vec::new();
        let mut p = world.people[&target].clone();
        match rng.gen_range(0..5) {
            0 => {
                p.name = format!("N{}", rng.gen_range(0..NAME_POOL));
                values.insert("name".into(), json!(p.name));
            }
            1 => {
                p.age = Some(rng.gen_range(18..70));
                values.insert("age".into(), json!(p.age));
            }
            2 => {
                if rng.gen_bool(0.3) {
                    p.dept = None;
                    unset.push("dept".to_string());
                } else {
                    p.dept = Some(DEPTS.choose(rng).unwrap().to_string());
                    values.insert("dept".into(), json!(p.dept));
                }
            }
            3 => {
                p.active = Some(rng.gen_bool(0.5));
                values.insert("active".into(), json!(p.active));
            }
            _ => {
                let boss = *ids.choose(rng).unwrap();
                p.boss = Some(boss);
                values.insert("boss".into(), json!(boss));
            }
        }
        store
            .submit(admin, Command::SetAttr { target: Id(target), values, unset })
            .expect("set person");
        world.people.insert(target, p);
    } else {
        store.submit(admin, Command::Retire { target: Id(target) }).expect("retire person");
        world.people.remove(&target);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl Op {
    pub const ALL: [Op; 6] = [Op::Eq, Op::Ne, Op::Lt, Op::Le, Op::Gt, Op::Ge];

    fn text(self) -> &'static str {
        match self {
            Op::Eq => "=",
            Op::Ne => "!=",
            Op::Lt => "<",
            Op::Le => "<=",
            Op::Gt => ">",
            Op::Ge => ">=",
        }
    }

    fn test<T: Ord>(self, a: &T, b: &T) -> bool {
        match self {
            Op::Eq => a == b,
            Op::Ne => a != b,
            Op::Lt => a < b,
            Op::Le => a <= b,
            Op::Gt => a > b,
            Op::Ge => a >= b,
        }
    }
}

/// The oracle's own formula tree over persons.
#[derive(Clone, Debug)]
pub enum F {
    Age(Op, i64),
    Name(Op, String),
    Dept(bool, String),
    DeptNull(bool),
    Active(bool),
    BossAge(Op, i64),
    BossNull(bool),
    BossIsSelf,
    BossIs(u64),
    BossAlive,
    /// Someone alive reports to the subject and is older than the bound.
    HasReportOver(i64),
    And(Vec<F>),
    Or(Vec<F>),
    Not(Box<F>),
}

impl F {
    pub fn text(&self) -> String {
        match self {
            F::Age(op, n) => format!("age {} {n}", op.text()),
            F::Name(op, s) => format!("name {} '{s}'", op.text()),
            F::Dept(eq, s) => format!("dept {} '{s}'", if *eq { "=" } else { "!=" }),
            F::DeptNull(is) => format!("dept {} null", if *is { "=" } else { "!=" }),
            F::Active(b) => format!("active = {b}"),
            F::BossAge(op, n) => format!("boss.age {} {n}", op.text()),
            F::BossNull(is) => format!("boss {} null", if *is { "=" } else { "!=" }),
            F::BossIsSelf => "boss = self".into(),
            F::BossIs(id) => format!("boss = {id}"),
            F::BossAlive => "boss in Person".into(),
            F::HasReportOver(n) => format!("exists y in Person: y.boss = self and y.age > {n}"),
            F::And(parts) => parts.iter().map(|p| format!("({})", p.text())).collect::<Vec<_>>().join(" and "),
            F::Or(parts) => parts.iter().map(|p| format!("({})", p.text())).collect::<Vec<_>>().join(" or "),
            F::Not(inner) => format!("not ({})", inner.text()),
        }
    }

    /// Brute-force truth for one subject. Missing values make comparisons
    /// false except against `null`; a dangling reference has no attributes.
    pub fn holds(&self, world: &World, id: u64) -> bool {
        let p = &world.people[&id];
        let boss = p.boss.and_then(|b| world.people.get(&b));
        match self {
            F::Age(op, n) => p.age.is_some_and(|a| op.test(&a, n)),
            F::Name(op, s) => op.test(&p.name, s),
            F::Dept(eq, s) => p.dept.as_ref().is_some_and(|d| (d == s) == *eq),
            F::DeptNull(is) => p.dept.is_none() == *is,
            F::Active(b) => p.active == Some(*b),
            F::BossAge(op, n) => boss.and_then(|b| b.age).is_some_and(|a| op.test(&a, n)),
            F::BossNull(is) => p.boss.is_none() == *is,
            F::BossIsSelf => p.boss == Some(id),
            F::BossIs(b) => p.boss == Some(*b),
            F::BossAlive => boss.is_some(),
            F::HasReportOver(n) => {
                world.people.values().any(|y| y.boss == Some(id) && y.age.is_some_and(|a| a > *n))
            }
            F::And(parts) => parts.iter().all(|f| f.holds(world, id)),
            F::Or(parts) => parts.iter().any(|f| f.holds(world, id)),
            F::Not(inner) => !inner.holds(world, id),
        }
    }

    pub fn uses_domain(&self) -> bool {
        match self {
            F::BossAlive | F::HasReportOver(_) => true,
            F::And(parts) | F::Or(parts) => parts.iter().any(F::uses_domain),
            F::Not(inner) => inner.uses_domain(),
            _ => false,
        }
    }

    pub fn extent(&self, world: &World) -> BTreeSet<u64> {
        world.people.keys().copied().filter(|id| self.holds(world, *id)).collect()
    }
}

fn random_atom(rng: &mut ChaCha8Rng, world: &World, allow_exists: bool) -> F {
    match rng.gen_range(0..if allow_exists { 12 } else { 11 }) {
        0 => F::Age(*Op::ALL.choose(rng).unwrap(), rng.gen_range(15..75)),
        1 | 2 => F::Name(Op::Eq, format!("N{}", rng.gen_range(0..NAME_POOL))),
        3 => F::Name(*Op::ALL.choose(rng).unwrap(), format!("N{}", rng.gen_range(0..NAME_POOL))),
        4 => F::Dept(rng.gen_bool(0.7), DEPTS.choose(rng).unwrap().to_string()),
        5 => F::DeptNull(rng.gen_bool(0.5)),
        6 => F::Active(rng.gen_bool(0.5)),
        7 => F::BossAge(*Op::ALL.choose(rng).unwrap(), rng.gen_range(15..75)),
        8 => {
            if rng.gen_bool(0.5) {
                F::BossNull(rng.gen_bool(0.5))
            } else {
                F::BossIsSelf
            }
        }
        9 => match world.people.keys().copied().collect::<Vec<_>>().choose(rng) {
            Some(id) => F::BossIs(*id),
            None => F::BossAlive,
        },
        10 => F::BossAlive,
        _ => F::HasReportOver(rng.gen_range(30..70)),
    }
}

/// A random formula of bounded depth. `exists_rate` is the chance that an
/// atom is the quadratic existential one.
pub fn random_formula(rng: &mut ChaCha8Rng, world: &World, depth: u32, exists_rate: f64) -> F {
    if depth == 0 || rng.gen_bool(0.4) {
        let exists = rng.gen_bool(exists_rate);
        return random_atom(rng, world, exists);
    }
    match rng.gen_range(0..3) {
        0 => F::And((0..rng.gen_range(2..4)).map(|_| random_formula(rng, world, depth - 1, exists_rate)).collect()),
        1 => F::Or((0..rng.gen_range(2..4)).map(|_| random_formula(rng, world, depth - 1, exists_rate)).collect()),
        _ => F::Not(Box::new(random_formula(rng, world, depth - 1, exists_rate))),
    }
}

/// A random formula that references no domain, so it can define a
/// first-level meta-object over persons.
pub fn unquantified_formula(rng: &mut ChaCha8Rng, world: &World, depth: u32) -> F {
    loop {
        let f = random_formula(rng, world, depth, 0.0);
        if !f.uses_domain() {
            return f;
        }
    }
}

/// A formula biased toward few matches so individuation sees all three
/// outcomes: a name equality narrowed by a random conjunct.
pub fn narrow_formula(rng: &mut ChaCha8Rng, world: &World) -> F {
    let anchor = match world.people.values().collect::<Vec<_>>().choose(rng) {
        Some(p) if rng.gen_bool(0.8) => p.name.clone(),
        _ => format!("N{}", rng.gen_range(0..NAME_POOL)),
    };
    let base = F::Name(Op::Eq, anchor);
    if rng.gen_bool(0.5) {
        base
    } else {
        F::And(vec![base, random_formula(rng, world, 1, 0.0)])
    }
}

/// Result of definite-description lookup in the oracle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Pick {
    One(u64),
    None,
    Many(usize),
}

pub fn pick(extent: &BTreeSet<u64>) -> Pick {
    match extent.len() {
        0 => Pick::None,
        1 => Pick::One(*extent.iter().next().unwrap()),
        n => Pick::Many(n),
    }
}

/// Builds a store with `people` persons and records the shadow world at
/// each state in `keep`.
pub fn seeded_world(
    store: &Store,
    admin: &Session,
    rng: &mut ChaCha8Rng,
    people: usize,
    extra_events: usize,
    keep: &BTreeSet<u64>,
) -> BTreeMap<StateIndex, World> {
    let mut world = World::default();
    let mut kept = BTreeMap::new();
    let mut remember = |world: &World, store: &Store| {
        let head = store.head();
        if keep.contains(&head.0) {
            kept.insert(head, world.clone());
        }
    };
    let mut created = 0;
    let mut extra = 0;
    while created < people || extra < extra_events {
        if created < people && (extra >= extra_events || rng.gen_bool(0.6)) {
            create_person(store, admin, &mut world, rng);
            created += 1;
        } else {
            random_data_event(store, admin, &mut world, rng);
            extra += 1;
        }
        remember(&world, store);
    }
    kept.insert(store.head(), world);
    kept
}

// Appraisal functional, written from its definition.

pub fn oracle_scores(org: &OrgModel, p: &AppraisalParams) -> BTreeMap<Id, f64> {
    fn score(org: &OrgModel, u: Id, p: &AppraisalParams, out: &mut BTreeMap<Id, f64>) -> f64 {
        let unit = &org.units[&u];
        let children: Vec<f64> = unit.children.iter().map(|c| score(org, *c, p, out)).collect();
        let mut v = 0usize;
        let mut matches = Vec::new();
        for pos in unit.positions.iter().map(|id| &org.positions[id]) {
            match pos.holder.and_then(|h| org.employees.get(&h)) {
                None => v += 1,
                Some(e) => {
                    let m = if pos.required.is_empty() {
                        1.0
                    } else {
                        pos.required.iter().filter(|f| e.functions.contains(*f)).count() as f64
                            / pos.required.len() as f64
                    };
                    matches.push(m);
                }
            }
        }
        let e = matches.len();
        let vacancy_rate = if v + e == 0 { 0.0 } else { v as f64 / (v + e) as f64 };
        let coverage = if e == 0 { 1.0 } else { matches.iter().sum::<f64>() / e as f64 };
        let local = p.w_s * coverage + p.w_p * (1.0 - vacancy_rate);
        let f = if children.is_empty() {
            local
        } else {
            let mean = children.iter().sum::<f64>() / children.len() as f64;
            if unit.positions.is_empty() {
                mean
            } else {
                p.w_local * local + p.w_child * mean
            }
        };
        out.insert(u, f);
        f
    }
    let mut out = BTreeMap::new();
    if let Some(root) = org.root() {
        score(org, root, p, &mut out);
    }
    out
}

pub const TAGS: [&str; 8] = ["law", "payroll", "it", "sales", "audit", "hr", "ops", "qa"];

/// A random single-rooted corporation with random staffing and skills.
pub fn random_corporation(rng: &mut ChaCha8Rng, max_units: usize) -> OrgModel {
    let mut org = OrgModel::new();
    let units = rng.gen_range(1..=max_units);
    let mut next = 1u64;
    let mut unit_ids = Vec::new();
    for i in 0..units {
        let id = Id(next);
        next += 1;
        let parent = if i == 0 { None } else { Some(*unit_ids.choose(rng).unwrap()) };
        org.add_unit(id, &format!("u{i}"), parent);
        unit_ids.push(id);
    }
    for u in &unit_ids {
        for _ in 0..rng.gen_range(0..5) {
            let pid = Id(next);
            next += 1;
            let k = rng.gen_range(0..4);
            let req: Vec<&str> = TAGS.choose_multiple(rng, k).copied().collect();
            org.add_position(pid, *u, "Staff", &req);
            if rng.gen_bool(0.6) {
                let eid = Id(next);
                next += 1;
                let k = rng.gen_range(0..5);
                let has: Vec<&str> = TAGS.choose_multiple(rng, k).copied().collect();
                org.add_employee(eid, "e", &has);
                org.assign(eid, pid);
            }
        }
    }
    org
}

pub fn random_params(rng: &mut ChaCha8Rng) -> AppraisalParams {
    let w_s: f64 = rng.gen_range(0.0..=1.0);
    let w_local: f64 = rng.gen_range(0.0..=1.0);
    AppraisalParams { w_s, w_p: 1.0 - w_s, w_local, w_child: 1.0 - w_local }
}
