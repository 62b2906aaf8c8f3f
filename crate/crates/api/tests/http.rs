//! Endpoint behavior through the router, compared against the same
//! operations run in-process on the same store.

use std::collections::BTreeSet;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use dobj_api::router;
use dobj_core::{install_all, seed_demo, AttrDraft, DemoOptions, Id, StateIndex, Store, StoreConfig};
use http_body_util::BodyExt;
use proptest::prelude::*;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Fixture {
    store: Arc<Store>,
    app: axum::Router,
    token: String,
}

impl Fixture {
    fn new() -> Fixture {
        let store = Arc::new(Store::in_memory(StoreConfig::default()));
        let app = router(store.clone());
        Fixture { store, app, token: String::new() }
    }

    fn demo(employees: usize) -> Fixture {
        let mut f = Fixture::new();
        let admin = f.store.admin_session();
        install_all(&f.store, &admin).unwrap();
        seed_demo(&f.store, &admin, &DemoOptions::new(employees)).unwrap();
        f.login("admin", "admin");
        f
    }

    fn login(&mut self, login: &str, password: &str) -> Value {
        let (status, body) = self.call(Method::POST, "/sessions", Some(json!({"login": login, "password": password})));
        assert_eq!(status, StatusCode::OK, "{body}");
        self.token = body["session_id"].as_str().unwrap().to_string();
        body
    }

    fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let bytes = body.map(|b| b.to_string()).unwrap_or_default();
        self.raw(method, uri, bytes)
    }

    fn raw(&self, method: Method, uri: &str, body: String) -> (StatusCode, Value) {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async {
            let mut req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
            if !self.token.is_empty() {
                req = req.header("authorization", format!("Bearer {}", self.token));
            }
            let resp = self.app.clone().oneshot(req.body(Body::from(body)).unwrap()).await.unwrap();
            let status = resp.status();
            let bytes = resp.into_body().collect().await.unwrap().to_bytes();
            let value = serde_json::from_slice(&bytes).unwrap_or_else(|_| json!({"raw": String::from_utf8_lossy(&bytes)}));
            (status, value)
        })
    }

    fn get(&self, uri: &str) -> (StatusCode, Value) {
        self.call(Method::GET, uri, None)
    }

    fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.call(Method::POST, uri, Some(body))
    }
}

fn ids(v: &Value) -> BTreeSet<Id> {
    v.as_array().unwrap().iter().map(|x| Id(x.as_u64().unwrap())).collect()
}

#[test]
fn login_returns_session_scenario_and_state() {
    let mut f = Fixture::demo(20);
    let body = f.login("admin", "admin");
    assert_eq!(body["scenario"], "president");
    assert_eq!(body["state"], f.store.head().0);
    let (status, body) = f.post("/sessions", json!({"login": "admin", "password": "wrong"}));
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["code"], "AUTH_FAILED");
}

#[test]
fn reads_require_a_session_and_closed_sessions_fail() {
    let mut f = Fixture::demo(10);
    let token = f.token.clone();
    let (status, _) = f.get("/concepts");
    assert_eq!(status, StatusCode::OK);
    let (status, _) = f.call(Method::DELETE, &format!("/sessions/{token}"), None);
    assert_eq!(status, StatusCode::OK);
    let (status, body) = f.get("/concepts");
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["code"], "AUTH_FAILED");
    f.token.clear();
    assert_eq!(f.get("/objects?concept=Employee").1["code"], "AUTH_FAILED");
}

#[test]
fn ambiguous_individuation_is_a_conflict_with_count() {
    let mut f = Fixture::new();
    let admin = f.store.admin_session();
    f.store.define_concept(&admin, "Employee", vec![AttrDraft::new("dept", "text")]).unwrap();
    f.store.create(&admin, "Employee", json!({"dept": "Sales"})).unwrap();
    f.store.create(&admin, "Employee", json!({"dept": "Sales"})).unwrap();
    f.login("admin", "admin");
    let (status, body) =
        f.post("/query", json!({"formula": "dept = 'Sales'", "domain": "Employee", "mode": "individuate"}));
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "AMBIGUOUS");
    assert_eq!(body["details"]["count"], 2);
}

#[test]
fn objects_at_a_pinned_state_equal_the_extent_there() {
    let mut f = Fixture::new();
    let admin = f.store.admin_session();
    f.store.define_concept(&admin, "Employee", vec![AttrDraft::new("n", "integer")]).unwrap();
    let mut expected_at_12 = BTreeSet::new();
    for i in 0..30 {
        let id = f.store.create(&admin, "Employee", json!({"n": i})).unwrap();
        if f.store.head().0 <= 12 {
            expected_at_12.insert(id);
        }
    }
    f.login("admin", "admin");
    let (status, body) = f.get("/objects?concept=Employee&state=12");
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["state"], 12);
    let got: BTreeSet<Id> = body["items"].as_array().unwrap().iter().map(|o| Id(o["id"].as_u64().unwrap())).collect();
    assert_eq!(got, expected_at_12);
    assert_eq!(got.len(), 11);
}

#[test]
fn pagination_walks_the_whole_extent() {
    let f = Fixture::demo(300);
    let expected = f.store.head_snapshot().members("Employee").unwrap();
    assert!(expected.len() > 200);
    let mut seen = Vec::new();
    let mut uri = "/objects?concept=Employee".to_string();
    loop {
        let (status, body) = f.get(&uri);
        assert_eq!(status, StatusCode::OK);
        let items = body["items"].as_array().unwrap();
        assert!(items.len() <= 200);
        seen.extend(items.iter().map(|o| Id(o["id"].as_u64().unwrap())));
        match body["next_cursor"].as_u64() {
            Some(c) => uri = format!("/objects?concept=Employee&cursor={c}"),
            None => break,
        }
    }
    assert_eq!(seen.into_iter().collect::<BTreeSet<_>>(), expected);
}

#[test]
fn state_pinning_survives_concurrent_writes() {
    let f = Fixture::demo(40);
    let pinned = f.store.head().0;
    let uri = format!("/objects?concept=Employee&state={pinned}");
    let before = f.get(&uri).1;
    let admin = f.store.admin_session();
    let values = json!({"name": "Late Hire", "hire_date": "2024-01-01", "citizenship": "domestic"});
    f.post("/events", json!({"kind": "hire", "values": values}));
    f.store.comprehend(&admin, "Late", "Employee", "status = 'active'").unwrap();
    assert!(f.store.head().0 > pinned);
    assert_eq!(f.get(&uri).1, before);
}

#[test]
fn endpoint_results_equal_in_process_results() {
    let f = Fixture::demo(60);
    let snap = f.store.head_snapshot();

    let (_, body) = f.post("/query", json!({"formula": "status = 'active'", "domain": "Employee"}));
    assert_eq!(ids(&body["items"]), snap.query("status = 'active'", "Employee").unwrap());

    let (_, body) = f.post("/query", json!({"formula": "login = 'e3'", "domain": "Employee", "mode": "individuate"}));
    assert_eq!(Id(body["id"].as_u64().unwrap()), snap.individuate("login = 'e3'", "Employee").unwrap());

    let (_, meta) = f.post("/meta", json!({"name": "Foreigners", "domain": "Employee", "formula": "citizenship = 'foreign'"}));
    let meta_id = Id(meta["created"].as_u64().unwrap());
    let (_, ext) = f.get(&format!("/meta/{meta_id}/extent"));
    assert_eq!(ids(&ext["items"]), f.store.head_snapshot().meta_extent(meta_id).unwrap());

    let org = snap.org();
    let (_, body) = f.post("/appraise", json!({"state": snap.state()}));
    let expected = dobj_core::appraisal::appraise_all(&org, snap.content().params()).unwrap();
    for s in body["scores"].as_array().unwrap() {
        let unit = Id(s["unit"].as_u64().unwrap());
        assert_eq!(s["value"].as_f64().unwrap(), expected[&unit].value);
    }

    let vacancy = org.vacancies().next().unwrap().id;
    let (_, body) = f.get(&format!("/vacancies/{vacancy}/candidates"));
    let ranked = dobj_core::appraisal::rank_candidates(&org, vacancy).unwrap();
    assert_eq!(body["items"], serde_json::to_value(&ranked).unwrap());

    let (_, body) = f.get("/log?from=1&to=5");
    assert_eq!(body["items"], serde_json::to_value(f.store.records(1, Some(5))).unwrap());
}

#[test]
fn what_if_moves_leave_the_log_untouched() {
    let f = Fixture::demo(40);
    let org = f.store.head_snapshot().org();
    let vacancy = org.vacancies().next().unwrap().id;
    let employee = *org.employees.keys().next().unwrap();
    let head = f.store.head();
    let (status, body) = f.post("/appraise", json!({"moves": [{"employee": employee, "position": vacancy}]}));
    assert_eq!(status, StatusCode::OK, "{body}");
    let expected = dobj_core::appraisal::what_if(
        &org,
        &[dobj_core::appraisal::Move { employee, position: vacancy }],
        &Default::default(),
    )
    .unwrap();
    let root = org.root().unwrap();
    let got = body["scores"].as_array().unwrap().iter().find(|s| s["unit"] == root.0).unwrap();
    assert_eq!(got["value"].as_f64().unwrap(), expected[&root].value);
    assert_eq!(f.get("/log").1["head"], head.0);
}

#[test]
fn mandatory_follows_draft_values() {
    let f = Fixture::demo(10);
    let (_, domestic) = f.get("/mandatory?concept=Employee&citizenship=domestic");
    let (_, foreign) = f.get("/mandatory?concept=Employee&citizenship=foreign");
    let has_visa = |v: &Value| v["required"].as_array().unwrap().iter().any(|x| x == "visa_no");
    assert!(!has_visa(&domestic));
    assert!(has_visa(&foreign));
    let admin = f.store.admin_session();
    let draft = json!({"citizenship": "foreign"});
    let expected = f.store.mandatory_fields(&admin, "Employee", draft.as_object().unwrap()).unwrap();
    let got: BTreeSet<String> =
        foreign["required"].as_array().unwrap().iter().map(|x| x.as_str().unwrap().to_string()).collect();
    assert_eq!(got, expected);
}

#[test]
fn scenario_sessions_see_their_scope() {
    let mut f = Fixture::demo(40);
    let admin_count = f.get("/objects?concept=Employee&limit=5000").1["items"].as_array().unwrap().len();
    let clerk = f
        .store
        .head_snapshot()
        .org()
        .positions
        .values()
        .filter(|p| p.title == "Clerk")
        .find_map(|p| p.holder)
        .expect("demo has a clerk");
    let login = dobj_core::packs::demo_login(&f.store, clerk).unwrap();
    let body = f.login(&login, &login);
    assert_eq!(body["scenario"], "employee");
    let (_, page) = f.get("/objects?concept=Employee&limit=5000");
    let seen = ids(&Value::Array(page["items"].as_array().unwrap().iter().map(|o| o["id"].clone()).collect()));
    assert_eq!(seen, BTreeSet::from([clerk]));
    assert!(admin_count > 1);
    let (status, body) = f.post("/meta", json!({"name": "Mine", "domain": "Employee", "formula": "name != null"}));
    assert_eq!(status, StatusCode::FORBIDDEN);
    assert_eq!(body["code"], "ACCESS_DENIED");
}

#[test]
fn concept_definition_events_and_rollback_round_trip() {
    let mut f = Fixture::new();
    f.login("admin", "admin");
    let (status, body) = f.post("/concepts", json!({"name": "Car", "attributes": [{"name": "plate", "type": "text", "required": true}]}));
    assert_eq!(status, StatusCode::OK, "{body}");
    let checkpoint = body["state"].as_u64().unwrap();
    let (status, body) = f.post("/events", json!({"kind": "create", "concept": "Car", "values": {"plate": "A1"}}));
    assert_eq!(status, StatusCode::OK, "{body}");
    let (status, body) = f.post("/events", json!({"kind": "create", "concept": "Car", "values": {}}));
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "VALIDATION");
    let (_, body) = f.post("/rollback", json!({"to": checkpoint}));
    assert_eq!(body["head"], 3);
    assert_eq!(f.store.content_hash(None).unwrap(), f.store.content_hash(Some(StateIndex(checkpoint))).unwrap());
    let (status, body) = f.post("/rollback", json!({"to": 999}));
    assert_eq!(status, StatusCode::RANGE_NOT_SATISFIABLE);
    assert_eq!(body["code"], "STATE_BEYOND_HEAD");
    let (status, body) = f.post("/meta", json!({"name": "Loop", "domain": "Car", "formula": "self in Loop"}));
    assert!(status.is_client_error());
    assert!(body["code"] == "STRATIFICATION" || body["code"] == "UNKNOWN_CONCEPT", "{body}");
}

#[test]
fn packs_analyze_then_apply() {
    let mut f = Fixture::new();
    f.login("admin", "admin");
    let (status, plan) = f.post("/packs/analyze", json!({"name": "Organizational Structure"}));
    assert_eq!(status, StatusCode::OK, "{plan}");
    assert!(plan["conflicts"].as_array().unwrap().is_empty());
    let (status, body) = f.post("/packs/apply", json!({"plan": plan}));
    assert_eq!(status, StatusCode::OK, "{body}");
    assert!(f.store.head_snapshot().content().is_applied("Organizational Structure"));
    let (status, body) = f.post("/packs/apply", json!({"plan": plan}));
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert_eq!(body["code"], "STALE_STORE");
    let (status, body) = f.post("/packs/apply", json!({"name": "Leaves and Sick-Lists"}));
    assert_eq!(status, StatusCode::OK, "{body}");
    let manifest = json!({"name": "Clash", "concepts": [{"name": "OrgUnit", "attributes": [{"name": "name", "type": "integer"}]}]});
    let (_, plan) = f.post("/packs/analyze", json!({"manifest": manifest}));
    assert_eq!(plan["conflicts"][0]["kind"], "TypeMismatch");
    let (status, body) = f.post("/packs/apply", json!({"manifest": manifest}));
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(body["code"], "CONFLICT");
}

#[test]
fn unknown_routes_and_bad_methods_are_structured() {
    let f = Fixture::demo(5);
    let (status, body) = f.get("/nope");
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["code"].is_string());
    let (status, body) = f.call(Method::PUT, "/concepts", None);
    assert!(status.is_client_error());
    assert!(body["code"].is_string());
    let (status, body) = f.get("/objects/notanumber");
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "PARSE");
    let (status, body) = f.post("/query", json!({"formula": "name = ", "domain": "Employee"}));
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "PARSE");
}

const ROUTES: [(&str, &str); 14] = [
    ("POST", "/sessions"),
    ("GET", "/concepts"),
    ("POST", "/concepts"),
    ("GET", "/objects"),
    ("POST", "/events"),
    ("POST", "/query"),
    ("POST", "/meta"),
    ("GET", "/meta"),
    ("GET", "/mandatory"),
    ("POST", "/appraise"),
    ("POST", "/packs/analyze"),
    ("POST", "/packs/apply"),
    ("POST", "/rollback"),
    ("GET", "/log"),
];

fn junk() -> impl Strategy<Value = String> {
    prop_oneof![
        Just(String::new()),
        "[ -~]{0,40}",
        Just("{\"kind\": 7}".to_string()),
        Just("[1, {\"kind\": \"nope\"}]".to_string()),
        Just("{\"formula\": \"((\", \"domain\": \"Employee\"}".to_string()),
        Just("{\"to\": -1}".to_string()),
        Just("{\"moves\": [{\"employee\": 1}]}".to_string()),
        Just("{\"plan\": {}}".to_string()),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn malformed_requests_get_structured_errors(route in 0..ROUTES.len(), body in junk(), query in "[a-z=&%0-9]{0,16}") {
        let f = Fixture::demo(0);
        let (method, path) = ROUTES[route];
        let uri = format!("{path}?{query}");
        let (status, value) = f.raw(method.parse().unwrap(), &uri, body);
        if !status.is_success() {
            prop_assert!(status.is_client_error(), "{status} for {method} {uri}");
            let code = value["code"].as_str().unwrap_or("");
            prop_assert!(dobj_core::ErrorCode::ALL.iter().any(|c| c.as_str() == code), "{value}");
            prop_assert!(value["message"].is_string());
        }
    }
}
