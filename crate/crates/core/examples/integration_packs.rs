//! Component packs: analyze a manifest against the store, review the merge
//! plan and its conflicts, then apply it as one all-or-nothing batch.

use dobj_core::packs::{analyze_pack, apply_plan, builtin_pack, install, ORG_PACK, PERSONAL_DATA_PACK};
use dobj_core::{ComponentPack, Store, StoreConfig};
use serde_json::json;

fn main() -> dobj_core::Result<()> {
    let store = Store::in_memory(StoreConfig::default());
    let admin = store.admin_session();
    install(&store, &admin, &builtin_pack(ORG_PACK).unwrap(), None)?;

    let pd = builtin_pack(PERSONAL_DATA_PACK).unwrap();
    let plan = analyze_pack(&pd, &store.head_snapshot())?;
    println!("{}: {} additions, order {:?}, {} conflicts", plan.pack, plan.additions.len(), plan.ordering, plan.conflicts.len());
    let before = (store.head(), store.content_hash(None)?);
    let head = apply_plan(&store, &admin, &plan)?;
    println!("applied up to state {head}");

    let again = analyze_pack(&pd, &store.head_snapshot())?;
    println!("re-analysis empty: {}", again.is_empty());

    store.rollback(&admin, before.0)?;
    println!("rollback restores the pre-apply hash: {}", store.content_hash(None)? == before.1);

    // A local pack that disagrees with the store on an attribute type and
    // on the name of a meta-object.
    let local = ComponentPack::parse(
        &json!({
            "name": "Local Extras",
            "version": "0.1",
            "concepts": [
                {"name": "OrgUnit", "attributes": [{"name": "name", "type": "integer"}, {"name": "code", "type": "text"}]},
                {"name": "TopUnits", "attributes": []}
            ],
            "metas": [{"name": "TopUnits", "domain": "OrgUnit", "formula": "parent != null"}]
        })
        .to_string(),
        "local.json",
    )?;
    let plan = analyze_pack(&local, &store.head_snapshot())?;
    for c in &plan.conflicts {
        println!("conflict {:?} at {}: {}", c.kind, c.location, c.detail);
    }
    println!("apply -> {}", apply_plan(&store, &admin, &plan).unwrap_err().code().as_str());
    Ok(())
}
