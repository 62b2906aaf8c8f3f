//! Drives the HTTP router in-process: log in, query, comprehend a meta,
//! ask for required fields and run a what-if appraisal.

use std::sync::Arc;

use axum::body::Body;
use axum::http::Request;
use dobj_api::router;
use dobj_core::{install_all, seed_demo, DemoOptions, Store, StoreConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn call(app: &axum::Router, token: &str, method: &str, uri: &str, body: Option<Value>) -> Value {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("authorization", format!("Bearer {token}"))
        .header("content-type", "application/json")
        .body(Body::from(body.map(|b| b.to_string()).unwrap_or_default()))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value: Value = serde_json::from_slice(&bytes).unwrap();
    println!("{method:<6} {uri:<44} -> {status}");
    value
}

#[tokio::main]
async fn main() {
    let store = Arc::new(Store::in_memory(StoreConfig::default()));
    let admin = store.admin_session();
    install_all(&store, &admin).unwrap();
    seed_demo(&store, &admin, &DemoOptions::new(50)).unwrap();
    let app = router(store.clone());

    let session = call(&app, "", "POST", "/sessions", Some(json!({"login": "admin", "password": "admin"}))).await;
    let token = session["session_id"].as_str().unwrap().to_string();
    println!("  scenario {}, state {}", session["scenario"], session["state"]);

    let page = call(&app, &token, "GET", "/objects?concept=Employee&limit=3", None).await;
    for o in page["items"].as_array().unwrap() {
        println!("  {} {}", o["id"], o["values"]["name"]);
    }
    println!("  next cursor {}", page["next_cursor"]);

    let err = call(&app, &token, "POST", "/query", Some(json!({"formula": "status = 'active'", "domain": "Employee", "mode": "individuate"}))).await;
    println!("  {} {}", err["code"], err["details"]);

    let meta = call(&app, &token, "POST", "/meta", Some(json!({"name": "Foreign", "domain": "Employee", "formula": "citizenship = 'foreign'"}))).await;
    let ext = call(&app, &token, "GET", &format!("/meta/{}/extent", meta["created"]), None).await;
    println!("  Foreign = {}", ext["items"]);

    let req = call(&app, &token, "GET", "/mandatory?concept=Employee&citizenship=foreign", None).await;
    println!("  required {}", req["required"]);

    let org = store.head_snapshot().org();
    let vacancy = org.vacancies().next().unwrap().id;
    let ranked = call(&app, &token, "GET", &format!("/vacancies/{vacancy}/candidates"), None).await;
    let best = &ranked["items"][0];
    println!("  best candidate {} (match {})", best["employee"], best["score"]);
    let root = org.root().unwrap();
    let now = call(&app, &token, "POST", "/appraise", Some(json!({"unit": root}))).await;
    let moved = call(&app, &token, "POST", "/appraise", Some(json!({"unit": root, "moves": [{"employee": best["employee"], "position": vacancy}]}))).await;
    println!("  root F {} -> {} under the move", now["scores"][0]["value"], moved["scores"][0]["value"]);
    let log = call(&app, &token, "GET", &format!("/log?from={}", store.head().0), None).await;
    println!("  head still {}", log["head"]);
}
