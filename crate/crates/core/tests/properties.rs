//! Property tests for the invariants of the store, the formula language,
//! the tower, access profiles, appraisal and pack integration.

mod common;

use std::collections::BTreeSet;

use chrono::NaiveDate;
use common::*;
use dobj_core::appraisal::{appraise_all, rank_candidates, AppraisalParams};
use dobj_core::event::log::{read_log, verify_chain};
use dobj_core::formula::{self, Binding, CmpOp, Formula, Literal, Operand, Path, MAX_DEPTH};
use dobj_core::packs::install_all;
use dobj_core::{
    parse, seed_demo, Command, DemoOptions, Error, ErrorCode, Id, StateIndex, Store, StoreConfig, Value, ValueType,
    View,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn ident() -> impl Strategy<Value = String> {
    "[a-z_][a-z0-9_]{0,6}".prop_filter("not a keyword", |s| !formula::is_keyword(s))
}

fn domain_name() -> impl Strategy<Value = String> {
    "[A-Z][A-Za-z0-9]{0,6}"
}

fn literal() -> impl Strategy<Value = Literal> {
    prop_oneof![
        "[a-zA-Z0-9 ']{0,8}".prop_map(Literal::Text),
        any::<i32>().prop_map(|i| Literal::Integer(i as i64)),
        (-1.0e6f64..1.0e6).prop_map(Literal::Decimal),
        any::<bool>().prop_map(Literal::Bool),
        (1900i32..2100, 1u32..=12, 1u32..=28).prop_map(|(y, m, d)| Literal::Date(NaiveDate::from_ymd_opt(y, m, d).unwrap())),
        Just(Literal::Null),
    ]
}

fn op() -> impl Strategy<Value = CmpOp> {
    prop_oneof![Just(CmpOp::Eq), Just(CmpOp::Ne), Just(CmpOp::Lt), Just(CmpOp::Le), Just(CmpOp::Gt), Just(CmpOp::Ge)]
}

fn path() -> impl Strategy<Value = Path> {
    prop::collection::vec(ident(), 1..4).prop_map(Path)
}

fn formula_tree() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        (path(), op(), literal()).prop_map(|(path, op, lit)| Formula::Compare { path, op, rhs: Operand::Literal(lit) }),
        (path(), op()).prop_map(|(path, op)| Formula::Compare { path, op, rhs: Operand::SelfRef }),
        (path(), domain_name()).prop_map(|(path, domain)| Formula::InConcept { path, domain }),
    ];
    leaf.prop_recursive(5, 40, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::And),
            prop::collection::vec(inner.clone(), 2..4).prop_map(Formula::Or),
            inner.clone().prop_map(|f| Formula::Not(Box::new(f))),
            (ident(), domain_name(), inner)
                .prop_map(|(var, domain, body)| Formula::Exists { var, domain, body: Box::new(body) }),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printing_then_parsing_is_identity(f in formula_tree()) {
        prop_assume!(f.depth() <= MAX_DEPTH);
        let text = f.to_string();
        let back = parse(&text).map_err(|e| TestCaseError::fail(format!("{text}: {e}")))?;
        prop_assert_eq!(back, f);
    }

    #[test]
    fn parse_errors_point_inside_the_input(text in "[ -~]{0,30}") {
        if let Err(Error::Parse(e)) = parse(&text) {
            prop_assert!(e.position <= text.chars().count() + 1);
        }
    }
}

/// A small random Person store plus its shadow world.
fn small_world(seed: u64, events: usize) -> (Store, World) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let store = Store::in_memory(StoreConfig::default());
    let admin = store.admin_session();
    define_person(&store, &admin);
    let mut world = World::default();
    for _ in 0..events {
        random_data_event(&store, &admin, &mut world, &mut rng);
    }
    (store, world)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn negation_is_two_valued(seed in any::<u64>()) {
        let (store, world) = small_world(seed, 40);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let snap = store.head_snapshot();
        for _ in 0..10 {
            let f = random_formula(&mut rng, &world, 2, 0.1);
            let positive = snap.query(&f.text(), "Person").unwrap();
            let negative = snap.query(&format!("not ({})", f.text()), "Person").unwrap();
            prop_assert!(positive.is_disjoint(&negative));
            prop_assert_eq!(positive.len() + negative.len(), world.people.len());
            prop_assert_eq!(positive, f.extent(&world).into_iter().map(Id).collect::<BTreeSet<_>>());
        }
    }

    #[test]
    fn individuation_succeeds_exactly_for_one_match(seed in any::<u64>()) {
        let (store, world) = small_world(seed, 60);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(7));
        let snap = store.head_snapshot();
        for _ in 0..10 {
            let f = narrow_formula(&mut rng, &world);
            let expected = pick(&f.extent(&world));
            let got = match snap.individuate(&f.text(), "Person") {
                Ok(id) => Pick::One(id.0),
                Err(Error::NoneSatisfies) => Pick::None,
                Err(Error::Ambiguous { count }) => Pick::Many(count),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn extents_follow_creation_and_retirement(seed in any::<u64>()) {
        let (store, _) = small_world(seed, 50);
        let person = store.head_snapshot().concept_id("Person").unwrap();
        let records: Vec<_> = store.head_snapshot().content().individuals().cloned().collect();
        for s in 1..=store.head().0 {
            let snap = store.snapshot(Some(StateIndex(s))).unwrap();
            let expected: BTreeSet<Id> = records
                .iter()
                .filter(|r| r.concept == person && r.created_at.0 <= s && r.retired_at.map_or(true, |t| s < t.0))
                .map(|r| r.id)
                .collect();
            prop_assert_eq!(snap.extent(person).unwrap(), expected);
        }
    }

    #[test]
    fn replay_of_every_prefix_matches_the_state(seed in any::<u64>()) {
        let (store, _) = small_world(seed, 30);
        for s in 0..=store.head().0 {
            let replayed = store.replay(StateIndex(s)).unwrap();
            prop_assert_eq!(replayed.content_hash, store.content_hash(Some(StateIndex(s))).unwrap());
        }
    }

    #[test]
    fn ids_are_never_reused_after_rollback(seed in any::<u64>(), cut in 1u64..30) {
        let (store, mut world) = small_world(seed, 30);
        let admin = store.admin_session();
        let seen: BTreeSet<Id> = store.head_snapshot().content().individuals().map(|r| r.id).collect();
        store.rollback(&admin, StateIndex(cut.min(store.head().0))).unwrap();
        world.people = world.people.into_iter().filter(|(id, _)| store.head_snapshot().get_object(Id(*id)).is_ok()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fresh = create_person(&store, &admin, &mut world, &mut rng);
        prop_assert!(seen.iter().all(|id| id.0 < fresh));
    }

    #[test]
    fn rejected_submits_leave_no_trace(seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::create_at(dir.path(), StoreConfig::default()).unwrap();
        let admin = store.admin_session();
        define_person(&store, &admin);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut world = World::default();
        for _ in 0..10 {
            random_data_event(&store, &admin, &mut world, &mut rng);
        }
        let log = dir.path().join(dobj_core::store::LOG_FILE);
        let bytes = std::fs::read(&log).unwrap();
        let (head, hash) = (store.head(), store.content_hash(None).unwrap());
        let bad = [
            Command::create("Person", json!({"age": 3})),
            Command::create("Person", json!({"name": 7})),
            Command::create("Nobody", json!({})),
            Command::Retire { target: Id(999_999) },
        ];
        for cmd in bad {
            prop_assert!(store.submit(&admin, cmd).is_err());
        }
        prop_assert_eq!(store.head(), head);
        prop_assert_eq!(store.content_hash(None).unwrap(), hash);
        prop_assert_eq!(std::fs::read(&log).unwrap(), bytes);
        let (header, records) = read_log(&log).unwrap();
        prop_assert!(verify_chain(&header, &records).is_ok());
    }

    #[test]
    fn memoized_extents_equal_fresh_ones(seed in any::<u64>()) {
        let (store, world) = small_world(seed, 40);
        let admin = store.admin_session();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = unquantified_formula(&mut rng, &world, 2);
        let meta = store.comprehend(&admin, "Probe", "Person", &f.text()).unwrap();
        let snap = store.head_snapshot();
        let first = snap.meta_extent(meta).unwrap();
        let again = snap.meta_extent(meta).unwrap();
        let fresh = View::new(snap.content(), snap.state(), 3).meta_extent(meta).unwrap();
        prop_assert_eq!(&first, &again);
        prop_assert_eq!(&first, &*fresh);
        let brute: BTreeSet<Id> = snap
            .members("Person")
            .unwrap()
            .into_iter()
            .filter(|x| formula::evaluate_checked(&parse(&f.text()).unwrap(), &Binding::stored(*x), &snap.view()).unwrap())
            .collect();
        prop_assert_eq!(&first, &brute);
    }

    #[test]
    fn accepted_metas_stay_below_their_level(seed in any::<u64>()) {
        let store = Store::in_memory(StoreConfig::default());
        let admin = store.admin_session();
        define_person(&store, &admin);
        let domains = ["Person", "Concept", "MetaObject1", "MetaObject2", "MetaObject3", "MetaObject"];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        use rand::seq::SliceRandom;
        for i in 0..20 {
            let target = *domains.choose(&mut rng).unwrap();
            let referenced = *domains.choose(&mut rng).unwrap();
            let _ = store.comprehend(&admin, &format!("P{i}"), target, &format!("exists v in {referenced}: v.name != null"));
        }
        let snap = store.head_snapshot();
        let view = snap.view();
        for m in snap.content().metas() {
            let level = dobj_core::tower::level_of(&m.formula, &view).unwrap();
            prop_assert!(level < m.level && m.level <= view.tower_cap());
            prop_assert!(snap.members("MetaObject").unwrap().contains(&m.id));
        }
    }
}

fn perfect_corporation(rng: &mut ChaCha8Rng) -> dobj_core::OrgModel {
    let mut org = random_corporation(rng, 25);
    let vacant: Vec<Id> = org.vacancies().map(|p| p.id).collect();
    let mut next = 10_000_000u64;
    for p in vacant {
        next += 1;
        org.add_employee(Id(next), "filler", &[]);
        org.assign(Id(next), p);
    }
    let holders: Vec<(Id, BTreeSet<String>)> =
        org.positions.values().map(|p| (p.holder.unwrap(), p.required.clone())).collect();
    for (e, req) in holders {
        org.employees.get_mut(&e).unwrap().functions = req;
    }
    org
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scores_stay_in_the_unit_interval(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let org = random_corporation(&mut rng, 30);
        let params = random_params(&mut rng);
        for s in appraise_all(&org, &params).unwrap().values() {
            prop_assert!((0.0..=1.0).contains(&s.value));
        }
    }

    #[test]
    fn perfect_staffing_scores_one_for_any_weights(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let org = perfect_corporation(&mut rng);
        let params = random_params(&mut rng);
        for s in appraise_all(&org, &params).unwrap().values() {
            prop_assert_eq!(s.value, 1.0);
        }
    }

    #[test]
    fn ranking_ignores_duplicated_positions(seed in any::<u64>(), copies in 2usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let org = random_corporation(&mut rng, 10);
        let Some(vacancy) = org.vacancies().next().map(|p| p.id) else { return Ok(()) };
        let base: Vec<Id> = rank_candidates(&org, vacancy).unwrap().into_iter().map(|c| c.employee).collect();
        let mut bigger = org.clone();
        let mut next = 50_000_000u64;
        for _ in 1..copies {
            for p in org.positions.values() {
                next += 1;
                let req: Vec<&str> = p.required.iter().map(String::as_str).collect();
                bigger.add_position(Id(next), p.unit, &p.title, &req);
                if let Some(h) = p.holder {
                    let funcs: Vec<&str> = org.employees[&h].functions.iter().map(String::as_str).collect();
                    bigger.add_employee(Id(next + 1_000_000), "twin", &funcs);
                    bigger.assign(Id(next + 1_000_000), Id(next));
                }
            }
        }
        let ranked: Vec<Id> = rank_candidates(&bigger, vacancy)
            .unwrap()
            .into_iter()
            .map(|c| c.employee)
            .filter(|e| org.employees.contains_key(e))
            .collect();
        prop_assert_eq!(ranked, base);
    }

    #[test]
    fn weights_must_pair_to_one(w_s in -0.5f64..1.5, w_local in -0.5f64..1.5, skew in -0.1f64..0.1) {
        let p = AppraisalParams { w_s, w_p: 1.0 - w_s + skew, w_local, w_child: 1.0 - w_local };
        let ok = (0.0..=1.0).contains(&w_s) && (0.0..=1.0).contains(&p.w_p) && (0.0..=1.0).contains(&w_local)
            && skew.abs() <= 1e-12;
        prop_assert_eq!(p.validated().is_ok(), ok);
    }
}

#[test]
fn hr_store_invariants_hold() {
    let store = Store::in_memory(StoreConfig::default());
    let admin = store.admin_session();
    install_all(&store, &admin).unwrap();
    let report = seed_demo(&store, &admin, &DemoOptions::new(60)).unwrap();
    let snap = store.head_snapshot();

    // Every alive individual conforms to its concept after all packs merged.
    for rec in snap.content().individuals().filter(|r| r.retired_at.is_none()) {
        let def = snap.content().concept(rec.concept).unwrap();
        for a in def.attributes.iter().filter(|a| a.required_by_default) {
            assert!(rec.values.contains_key(&a.name), "{} lacks {}", rec.id, a.name);
        }
        for (k, v) in &rec.values {
            let spec = def.attribute(k).unwrap_or_else(|| panic!("{} has stray {k}", rec.id));
            let fits = matches!(
                (spec.value_type, v),
                (ValueType::Text, Value::Text(_))
                    | (ValueType::Integer, Value::Integer(_))
                    | (ValueType::Decimal, Value::Decimal(_))
                    | (ValueType::Boolean, Value::Boolean(_))
                    | (ValueType::Date, Value::Date(_))
                    | (ValueType::Reference(_), Value::Ref(_))
            );
            assert!(fits, "{}.{k} does not fit {}", rec.id, spec.value_type);
        }
    }

    // Profiles are a function of the state and sessions do not interfere.
    let e = report.employees[3];
    let at = store.head();
    assert_eq!(store.derive_profile(e, Some(at)).unwrap(), store.derive_profile(e, Some(at)).unwrap());
    let a = store.open_session_for(report.employees[0]).unwrap();
    let b = store.open_session_for(report.employees[1]).unwrap();
    let before = snap.can_read(&b.profile, report.units[5]);
    store.close_session(&a.id).unwrap();
    assert_eq!(snap.can_read(&b.profile, report.units[5]), before);
    assert!(b.is_open() && !a.is_open());
    assert_eq!(store.session(&a.id).unwrap_err().code(), ErrorCode::AuthFailed);

    // The log of a seeded store verifies end to end.
    let dir = tempfile::tempdir().unwrap();
    let disk = Store::create_at(dir.path(), StoreConfig::default()).unwrap();
    let admin = disk.admin_session();
    install_all(&disk, &admin).unwrap();
    seed_demo(&disk, &admin, &DemoOptions::new(10)).unwrap();
    let (header, records) = read_log(&dir.path().join(dobj_core::store::LOG_FILE)).unwrap();
    verify_chain(&header, &records).unwrap();
    assert_eq!(records.len() as u64, disk.head().0);
    assert!(records.windows(2).all(|w| w[1].seq == w[0].seq + 1));
}
