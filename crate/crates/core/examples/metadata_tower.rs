//! Comprehension builds meta-objects in a stratified tower: level-1 sets
//! of individuals, level-2 sets of concepts or level-1 metas, and so on up
//! to the configured cap. Metadata is itself queryable data.

use dobj_core::{AttrDraft, Store, StoreConfig};
use serde_json::json;

fn main() -> dobj_core::Result<()> {
    let store = Store::in_memory(StoreConfig::default());
    let admin = store.admin_session();
    store.define_concept(&admin, "Employee", vec![AttrDraft::new("name", "text").required(), AttrDraft::new("age", "integer")])?;
    store.define_concept(&admin, "Tag", vec![])?;
    for (name, age) in [("Ivanov", 41), ("Petrov", 29), ("Sidorova", 63)] {
        store.create(&admin, "Employee", json!({"name": name, "age": age}))?;
    }

    let seniors = store.comprehend(&admin, "Seniors", "Employee", "age >= 60")?;
    let adults = store.comprehend(&admin, "Adults", "Employee", "age >= 18")?;
    let rich = store.comprehend(&admin, "RichConcepts", "Concept", "attribute_count > 0")?;
    let broad = store.comprehend(&admin, "BroadMetas", "MetaObject1", "formula != 'age >= 60'")?;
    let top = store.comprehend(&admin, "Everything", "MetaObject", "level < 3")?;

    let snap = store.head_snapshot();
    for id in [seniors, adults, rich, broad, top] {
        let meta = snap.describe(id)?;
        println!(
            "{:<13} level {} over {:<12} -> {:?}",
            meta.values["name"].to_plain_json(),
            meta.values["level"].to_plain_json(),
            meta.values["domain"].to_plain_json(),
            snap.meta_extent(id)?
        );
    }

    // A level-1 meta may not quantify over its own level.
    match store.comprehend(&admin, "Bad", "Employee", "self in Seniors") {
        Err(e) => println!("self in Seniors over Employee -> {} ({e})", e.code().as_str()),
        Ok(_) => println!("unexpectedly accepted"),
    }
    match store.comprehend(&admin, "TooHigh", "MetaObject3", "level = 3") {
        Err(e) => println!("over MetaObject3 -> {e}"),
        Ok(_) => println!("unexpectedly accepted"),
    }

    // Meta-objects are members of the built-in MetaObject concept.
    println!("MetaObject extent: {:?}", snap.members("MetaObject")?);
    println!("level-2 metas by query: {:?}", snap.query("level = 2", "MetaObject")?);
    Ok(())
}
