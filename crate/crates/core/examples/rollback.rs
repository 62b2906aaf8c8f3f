//! Rollback appends a marker that restores an earlier content. History
//! stays readable and identifiers are never reused.

use dobj_core::{AttrDraft, StateIndex, Store, StoreConfig};
use serde_json::json;

fn main() -> dobj_core::Result<()> {
    let store = Store::in_memory(StoreConfig::default());
    let admin = store.admin_session();
    store.define_concept(&admin, "Employee", vec![AttrDraft::new("name", "text").required()])?;
    store.create(&admin, "Employee", json!({"name": "Ivanov"}))?;
    let checkpoint = store.head();
    let hash = store.content_hash(None)?;

    let petrov = store.create(&admin, "Employee", json!({"name": "Petrov"}))?;
    store.comprehend(&admin, "Ps", "Employee", "name >= 'P'")?;
    println!("head {} with {} employees", store.head(), store.head_snapshot().members("Employee")?.len());

    let head = store.rollback(&admin, checkpoint)?;
    println!("rolled back to {checkpoint}; new head {head}");
    println!("content equals the checkpoint: {}", store.content_hash(None)? == hash);
    println!("Petrov at head: {:?}", store.head_snapshot().get_object(petrov).err());
    println!("Petrov at state {}: {:?}", head.0 - 2, store.snapshot(Some(StateIndex(head.0 - 2)))?.get_object(petrov)?.values);

    let sidorov = store.create(&admin, "Employee", json!({"name": "Sidorov"}))?;
    println!("next id after rollback: {sidorov} (Petrov was {petrov})");
    match store.rollback(&admin, StateIndex(99_999)) {
        Err(e) => println!("rollback beyond head -> {}", e.code().as_str()),
        Ok(_) => println!("unexpectedly accepted"),
    }
    for r in store.records(1, None) {
        println!("#{:<3} {:<16} by {}", r.seq, r.kind, r.actor);
    }
    Ok(())
}
