//! The command line against a temporary store: init, install packs, seed,
//! appraise, query, roll back and export.

use dobj_api::run_cli;

fn dobj(dir: &std::path::Path, args: &[&str]) -> i32 {
    println!("$ dobj {}", args.join(" "));
    let mut argv = vec!["dobj".to_string(), "--data-dir".into(), dir.display().to_string()];
    argv.extend(args.iter().map(|s| s.to_string()));
    run_cli(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    dobj(d, &["init"]);
    dobj(d, &["pack", "apply", "Personal Data"]);
    dobj(d, &["seed", "--employees", "30", "--perfect"]);
    dobj(d, &["appraise"]);
    dobj(d, &["query", "--domain", "Employee", "--formula", "login = 'e0'", "--individuate"]);
    dobj(d, &["replay", "--to", "10"]);
    dobj(d, &["rollback", "--to", "10"]);
    dobj(d, &["export", "--format", "csv", "--concept", "OrgUnit", "--state", "60"]);
    let code = dobj(d, &["rollback", "--to", "99999"]);
    println!("exit code {code}");
}
