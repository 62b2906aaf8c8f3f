//! Hire, transfer, dismiss and re-enroll an employee through the business
//! rules shipped with the Personnel Dynamics pack.

use dobj_core::{install_all, seed_demo, Command, DemoOptions, Store, StoreConfig};
use serde_json::json;

fn main() -> dobj_core::Result<()> {
    let store = Store::in_memory(StoreConfig::default());
    let admin = store.admin_session();
    install_all(&store, &admin)?;
    let demo = seed_demo(&store, &admin, &DemoOptions::new(30))?;
    println!("seeded {} employees, head = {}", demo.employees.len(), store.head());

    let org = store.head_snapshot().org();
    let mut vacancies = org.vacancies().map(|p| p.id);
    let first = vacancies.next().expect("demo has vacancies");
    let second = vacancies.next().expect("demo has two vacancies");

    let values = json!({"name": "Orlova Daria", "hire_date": "2024-03-01", "citizenship": "domestic"});
    let hired = store.submit(
        &admin,
        Command::Hire { values: values.as_object().cloned().unwrap(), position: Some(first) },
    )?;
    let daria = hired.created.expect("hire creates an employee");
    println!("hired {daria} at state {}, status = {:?}", hired.state, store.head_snapshot().value(daria, "status"));

    store.submit(&admin, Command::Dismiss { employee: daria })?;
    println!("dismissed, status = {:?}", store.head_snapshot().value(daria, "status"));

    match store.submit(&admin, Command::Transfer { employee: daria, position: second }) {
        Err(e) => println!("transfer after dismissal rejected: {} ({e})", e.code().as_str()),
        Ok(_) => println!("transfer unexpectedly accepted"),
    }

    store.submit(&admin, Command::ReEnroll { employee: daria, position: None })?;
    let moved = store.submit(&admin, Command::Transfer { employee: daria, position: second })?;
    println!("re-enrolled and transferred at state {}", moved.state);

    let orders = store.head_snapshot().query(&format!("employee = {}", daria.0), "DynamicsOrder")?;
    println!("dynamics orders for the employee: {}", orders.len());
    Ok(())
}
