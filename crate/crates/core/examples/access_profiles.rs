//! Session profiles derived from the org chart: each position title maps to
//! a scenario, and the scenario decides what the session may read, write
//! and define within its part of the tree.

use dobj_core::access::{AccessAction, Target};
use dobj_core::{install_all, seed_demo, Command, DemoOptions, Store, StoreConfig};
use serde_json::json;

fn main() -> dobj_core::Result<()> {
    let store = Store::in_memory(StoreConfig::default());
    let admin = store.admin_session();
    install_all(&store, &admin)?;
    let demo = seed_demo(&store, &admin, &DemoOptions::new(40))?;
    let snap = store.head_snapshot();
    let org = snap.org();
    let employee_concept = snap.concept_id("Employee")?;
    let total = snap.content().individuals().filter(|r| r.retired_at.is_none()).count();

    let mut shown = std::collections::BTreeSet::new();
    for emp in &demo.employees {
        let session = store.open_session_for(*emp)?;
        let scenario = session.profile.scenario;
        if !shown.insert(scenario) {
            continue;
        }
        let title = &org.positions[&org.employees[emp].position.unwrap()].title;
        let readable = snap.content().individuals().filter(|r| snap.can_read(&session.profile, r.id)).count();
        let write_employee = snap.decide(&session, AccessAction::Write, &Target::Concept(employee_concept))?;
        println!(
            "{:<13} ({title:<11}) reads {readable:>4}/{total} objects, write Employee: {:?}, metadata admin: {}",
            scenario.as_str(),
            write_employee,
            session.profile.metadata_admin
        );
    }

    // Required fields depend on the scenario and on the draft itself.
    let draft = json!({"name": "Novak", "citizenship": "foreign"});
    let required = store.mandatory_fields(&admin, "Employee", draft.as_object().unwrap())?;
    println!("required for a foreign hire: {required:?}");

    // A plain employee can only file leave requests.
    let plain = demo
        .employees
        .iter()
        .map(|e| store.open_session_for(*e).unwrap())
        .find(|s| s.profile.scenario == dobj_core::Scenario::Employee)
        .expect("demo has plain employees");
    let denied = store.submit(&plain, Command::comprehend("Mine", "Employee", "name != null"));
    println!("employee defines a meta -> {}", denied.unwrap_err().code().as_str());
    let user = plain.profile.user.unwrap();
    let values = json!({"kind": "sick", "start": "2024-05-02"});
    let filed = store.submit(&plain, Command::LeaveRequest { employee: user, values: values.as_object().cloned().unwrap() })?;
    println!("employee files a leave request -> state {}", filed.state);
    Ok(())
}
