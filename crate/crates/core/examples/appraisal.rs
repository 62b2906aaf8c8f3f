//! Unit appraisal over the org tree: skill coverage and staffing blend into
//! a local score that aggregates bottom-up. What-if moves are scored on a
//! copy without touching the store.

use dobj_core::appraisal::{appraise_all, appraise_employee, rank_candidates, what_if, AppraisalParams, Move};
use dobj_core::{install_all, seed_demo, DemoOptions, Store, StoreConfig};

fn main() -> dobj_core::Result<()> {
    let store = Store::in_memory(StoreConfig::default());
    let admin = store.admin_session();
    install_all(&store, &admin)?;
    let demo = seed_demo(&store, &admin, &DemoOptions::new(60))?;
    let org = store.head_snapshot().org();
    let params = AppraisalParams::default();

    let scores = appraise_all(&org, &params)?;
    for unit in demo.units.iter().take(4) {
        let s = &scores[unit];
        println!(
            "{:<14} F = {:.4} ({:?}; coverage {:.3}, staffing {:.3}, {} vacant)",
            org.units[unit].name, s.value, s.case, s.coverage, s.staffing, s.vacant
        );
    }
    let e = appraise_employee(&org, demo.employees[7], &params)?;
    println!("employee {} scores {:.4} (match {:.2})", e.employee, e.value, e.match_score);

    let vacancy = org.vacancies().next().expect("demo has vacancies").id;
    let ranked = rank_candidates(&org, vacancy)?;
    let best = ranked[0].clone();
    println!("best candidate for {vacancy}: {} (match {:.2}, now at {:?})", best.employee, best.score, best.current_position);

    let head = store.head();
    let after = what_if(&org, &[Move { employee: best.employee, position: vacancy }], &params)?;
    println!("root F {:.4} -> {:.4} if moved; head unchanged: {}", scores[&demo.root].value, after[&demo.root].value, store.head() == head);

    let perfect = Store::in_memory(StoreConfig::default());
    let admin = perfect.admin_session();
    install_all(&perfect, &admin)?;
    let p = seed_demo(&perfect, &admin, &DemoOptions::perfect(30))?;
    let root = appraise_all(&perfect.head_snapshot().org(), &params)?[&p.root].value;
    println!("fully staffed perfect-match corporation: F(root) = {root}");
    Ok(())
}
