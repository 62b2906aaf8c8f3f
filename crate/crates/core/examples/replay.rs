//! A persistent store: an append-only, hash-chained event log plus a
//! snapshot sidecar. Reopening replays the log and verifies the chain.

use dobj_core::{install_all, seed_demo, DemoOptions, StateIndex, Store, StoreConfig};

fn main() -> dobj_core::Result<()> {
    let dir = std::env::temp_dir().join(format!("dobj-replay-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    let store = Store::create_at(&dir, StoreConfig::default())?;
    let admin = store.admin_session();
    install_all(&store, &admin)?;
    seed_demo(&store, &admin, &DemoOptions::new(40))?;
    let head = store.head();
    let live = store.content_hash(None)?;
    println!("wrote {} events to {}", head, dir.display());
    drop(store);

    let reopened = Store::open(&dir, StoreConfig::default())?;
    println!("reopened at {} with equal hash: {}", reopened.head(), reopened.content_hash(None)? == live);
    for at in [StateIndex(1), StateIndex(head.0 / 2), head] {
        let snap = reopened.replay(at)?;
        println!("replay({at:>3}) = {}", &snap.content_hash[..16]);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
