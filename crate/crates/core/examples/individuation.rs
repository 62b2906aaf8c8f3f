//! Definite descriptions: a formula picks out an object only when exactly
//! one member of the domain satisfies it at the queried state.

use dobj_core::{AttrDraft, Error, StateIndex, Store, StoreConfig};
use serde_json::json;

fn main() -> dobj_core::Result<()> {
    let store = Store::in_memory(StoreConfig::default());
    let admin = store.admin_session();
    store.define_concept(
        &admin,
        "Employee",
        vec![AttrDraft::new("name", "text").required(), AttrDraft::new("dept", "text"), AttrDraft::new("age", "integer")],
    )?;
    let ivanov = store.create(&admin, "Employee", json!({"name": "Ivanov", "dept": "Sales", "age": 41}))?;
    store.create(&admin, "Employee", json!({"name": "Petrov", "dept": "Sales", "age": 29}))?;
    let before_sidorov = store.head();
    store.create(&admin, "Employee", json!({"name": "Sidorov", "dept": "Legal"}))?;

    let snap = store.head_snapshot();
    println!("name = 'Ivanov'        -> {}", snap.individuate("name = 'Ivanov'", "Employee")?);
    match snap.individuate("dept = 'Sales'", "Employee") {
        Err(Error::Ambiguous { count }) => println!("dept = 'Sales'         -> AMBIGUOUS ({count} matches)"),
        other => println!("dept = 'Sales'         -> {other:?}"),
    }
    match snap.individuate("age > 60", "Employee") {
        Err(Error::NoneSatisfies) => println!("age > 60               -> NONE_SATISFIES"),
        other => println!("age > 60               -> {other:?}"),
    }
    // Absent values never satisfy a comparison, only `= null`.
    println!("age = null             -> {}", snap.individuate("age = null", "Employee")?);
    println!("dept = 'Sales' and age >= 40 -> {}", snap.individuate("dept = 'Sales' and age >= 40", "Employee")?);

    // The same description evaluated at an earlier state.
    let earlier = store.snapshot(Some(before_sidorov))?;
    println!("at state {before_sidorov}: dept = 'Legal' -> {:?}", earlier.individuate("dept = 'Legal'", "Employee").err());
    println!("at state {}: members = {:?}", StateIndex::EMPTY, store.snapshot(Some(StateIndex::EMPTY))?.members("Concept")?);
    assert_eq!(snap.individuate("name = 'Ivanov'", "Employee")?, ivanov);
    Ok(())
}
