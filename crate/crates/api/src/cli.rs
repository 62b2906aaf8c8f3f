use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use dobj_core::appraisal::appraise_all;
use dobj_core::packs::{find_pack, install, load_pack};
use dobj_core::store::LOG_FILE;
use dobj_core::{install_all, seed_demo, Command, DemoOptions, Error, Id, StateIndex, Store, StoreConfig};
use serde_json::json;

use crate::config::ServerConfig;
use crate::error::ApiError;

#[derive(Parser, Debug)]
#[command(name = "dobj", version, about = "Event-sourced data objects with a metadata tower")]
struct Cli {
    /// Store directory.
    #[arg(long, global = true, env = "DOBJ_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Create an empty store (or report an existing one).
    Init,
    /// Serve the HTTP API.
    Serve {
        #[arg(long, env = "DOBJ_PORT")]
        port: Option<u16>,
    },
    /// Component packs.
    Pack {
        #[command(subcommand)]
        action: PackCmd,
    },
    /// Seed the demo corporation.
    Seed {
        #[arg(long)]
        employees: usize,
        /// No vacancies and perfect skill matches.
        #[arg(long)]
        perfect: bool,
    },
    /// Score a unit (the root by default).
    Appraise {
        #[arg(long)]
        unit: Option<u64>,
        #[arg(long)]
        state: Option<u64>,
    },
    /// Evaluate a formula over a domain.
    Query {
        #[arg(long)]
        domain: String,
        #[arg(long)]
        formula: String,
        #[arg(long)]
        individuate: bool,
        #[arg(long)]
        state: Option<u64>,
    },
    /// Rebuild a state from the log and print its content hash.
    Replay {
        #[arg(long)]
        to: u64,
    },
    /// Restore the content of an earlier state.
    Rollback {
        #[arg(long)]
        to: u64,
    },
    /// Dump data objects.
    Export {
        #[arg(long, value_enum)]
        format: Format,
        /// Only this concept; CSV without it writes one file per concept.
        #[arg(long)]
        concept: Option<String>,
        /// Output directory for per-concept CSV files.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        state: Option<u64>,
    },
    /// Time a mixed read and write workload on an in-memory demo store.
    Bench {
        #[arg(long)]
        ops: usize,
        #[arg(long, default_value_t = 200)]
        employees: usize,
    },
}

#[derive(Subcommand, Debug)]
enum PackCmd {
    /// Install a manifest file and its dependencies.
    Load { manifest: PathBuf },
    /// Install a pack by name, looking next to --dir first.
    Apply {
        name: String,
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Install the org pack and all HR packs.
    All,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

/// Runs one invocation. Returns 0 on success, 1 with the error code name
/// on stderr for engine failures and 2 for usage errors.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let sink: &mut dyn Write = if code == 0 { out } else { err };
            let _ = write!(sink, "{}", e.render());
            return code;
        }
    };
    let mut config = match ServerConfig::from_env() {
        Ok(c) => c,
        Err(e) => return fail(err, e.into()),
    };
    if let Some(dir) = cli.data_dir {
        config.data_dir = dir;
    }
    let result = match cli.command {
        Cmd::Serve { port } => {
            if let Some(p) = port {
                config.port = p;
            }
            let _ = writeln!(out, "serving {} on port {}", config.data_dir.display(), config.port);
            let _ = out.flush();
            serve_blocking(config).map(|_| String::new())
        }
        cmd => execute(cmd, &config),
    };
    match result {
        Ok(text) => {
            let _ = write!(out, "{text}");
            0
        }
        Err(e) => fail(err, e),
    }
}

fn fail(err: &mut dyn Write, e: ApiError) -> i32 {
    let _ = writeln!(err, "error: {}: {}", e.code, e.message);
    1
}

fn serve_blocking(config: ServerConfig) -> Result<(), ApiError> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| ApiError::validation(format!("runtime: {e}")))?;
    rt.block_on(crate::server::serve(config))
}

fn open(config: &ServerConfig) -> Result<Store, ApiError> {
    if !config.data_dir.join(LOG_FILE).exists() {
        return Err(ApiError::validation(format!("no store at {}; run `dobj init` first", config.data_dir.display())));
    }
    Ok(Store::open(&config.data_dir, config.store_config())?)
}

fn state_arg(s: Option<u64>) -> Option<StateIndex> {
    s.map(StateIndex)
}

fn execute(cmd: Cmd, config: &ServerConfig) -> Result<String, ApiError> {
    let mut o = String::new();
    match cmd {
        Cmd::Init => {
            config.validate()?;
            let existed = config.data_dir.join(LOG_FILE).exists();
            let store = Store::open_or_create(&config.data_dir, config.store_config())?;
            let verb = if existed { "opened existing" } else { "initialized" };
            writeln!(o, "{verb} store at {} (head {})", config.data_dir.display(), store.head()).ok();
        }
        Cmd::Serve { .. } => unreachable!("handled by run_cli"),
        Cmd::Pack { action } => {
            let store = open(config)?;
            let admin = store.admin_session();
            let head = match action {
                PackCmd::Load { manifest } => {
                    let pack = load_pack(&manifest)?;
                    install(&store, &admin, &pack, manifest.parent())?
                }
                PackCmd::Apply { name, dir } => {
                    let pack = find_pack(&name, dir.as_deref())?;
                    install(&store, &admin, &pack, dir.as_deref())?
                }
                PackCmd::All => install_all(&store, &admin)?,
            };
            let applied: Vec<_> = store.head_snapshot().content().applied_packs().keys().cloned().collect();
            writeln!(o, "head {head}; applied packs: {}", applied.join(", ")).ok();
        }
        Cmd::Seed { employees, perfect } => {
            let store = open(config)?;
            let options = if perfect { DemoOptions::perfect(employees) } else { DemoOptions::new(employees) };
            let report = seed_demo(&store, &store.admin_session(), &options)?;
            writeln!(
                o,
                "head {}; root unit {}; {} units, {} positions, {} employees",
                report.head,
                report.root,
                report.units.len(),
                report.positions.len(),
                report.employees.len()
            )
            .ok();
        }
        Cmd::Appraise { unit, state } => {
            let store = open(config)?;
            let snap = store.snapshot(state_arg(state))?;
            let org = snap.org();
            let unit = match unit {
                Some(u) => Id(u),
                None => org.root().ok_or_else(|| ApiError::validation("the store has no org units"))?,
            };
            let scores = appraise_all(&org, snap.content().params())?;
            let s = scores.get(&unit).ok_or(Error::UnknownId(unit))?;
            let name = org.units.get(&unit).map(|u| u.name.as_str()).unwrap_or("?");
            writeln!(o, "unit {unit} ({name}) at state {}: F = {:?}", snap.state(), s.value).ok();
            writeln!(o, "  case        {:?}", s.case).ok();
            writeln!(o, "  local       {:?}", s.local).ok();
            writeln!(o, "  coverage    {:?}", s.coverage).ok();
            writeln!(o, "  staffing    {:?} ({} filled, {} vacant)", s.staffing, s.filled, s.vacant).ok();
            match s.child_mean {
                Some(m) => writeln!(o, "  child mean  {m:?}").ok(),
                None => writeln!(o, "  child mean  -").ok(),
            };
        }
        Cmd::Query { domain, formula, individuate, state } => {
            let store = open(config)?;
            let snap = store.snapshot(state_arg(state))?;
            if individuate {
                writeln!(o, "{}", snap.individuate(&formula, &domain)?).ok();
            } else {
                for id in snap.query(&formula, &domain)? {
                    writeln!(o, "{id}").ok();
                }
            }
        }
        Cmd::Replay { to } => {
            let store = open(config)?;
            let snap = store.replay(StateIndex(to))?;
            writeln!(o, "state {} content_hash {}", snap.state, snap.content_hash).ok();
        }
        Cmd::Rollback { to } => {
            let store = open(config)?;
            let head = store.rollback(&store.admin_session(), StateIndex(to))?;
            writeln!(o, "restored state {to}; head {head}").ok();
        }
        Cmd::Export { format, concept, out, state } => {
            let store = open(config)?;
            let snap = store.snapshot(state_arg(state))?;
            match format {
                Format::Json => o = export_json(&snap, concept.as_deref())?,
                Format::Csv => match (concept, out) {
                    (Some(c), None) => o = export_csv(&snap, &c)?,
                    (concept, out) => {
                        let dir = out.unwrap_or_else(|| config.data_dir.join("export"));
                        let names: Vec<String> = match concept {
                            Some(c) => vec![c],
                            None => snap.content().concepts().map(|c| c.name.clone()).collect(),
                        };
                        write_csv_files(&snap, &names, &dir)?;
                        writeln!(o, "wrote {} CSV files to {}", names.len(), dir.display()).ok();
                    }
                },
            }
        }
        Cmd::Bench { ops, employees } => o = bench(ops, employees)?,
    }
    Ok(o)
}

/// Canonical object notation: the same tagged value encoding as the log.
fn export_json(snap: &dobj_core::Snapshot, concept: Option<&str>) -> Result<String, ApiError> {
    let content = snap.content();
    let only = concept.map(|c| snap.concept_id(c)).transpose()?;
    let individuals: Vec<_> =
        content.individuals().filter(|r| r.alive() && only.map_or(true, |c| r.concept == c)).collect();
    let doc = json!({
        "state": snap.state(),
        "content_hash": snap.content_hash(),
        "concepts": content.concepts().filter(|c| only.map_or(true, |o| c.id == o)).collect::<Vec<_>>(),
        "metas": if only.is_some() { vec![] } else { content.metas().collect::<Vec<_>>() },
        "individuals": individuals,
    });
    Ok(serde_json::to_string_pretty(&doc).expect("export serializes") + "\n")
}

/// One row per alive individual: `id` then every schema attribute.
fn export_csv(snap: &dobj_core::Snapshot, concept: &str) -> Result<String, ApiError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    write_concept_csv(snap, concept, &mut w)?;
    let bytes = w.into_inner().map_err(|e| ApiError::validation(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv is utf-8"))
}

fn write_concept_csv<W: Write>(snap: &dobj_core::Snapshot, concept: &str, w: &mut csv::Writer<W>) -> Result<(), ApiError> {
    let id = snap.concept_id(concept)?;
    let def = snap.content().concept(id).ok_or(Error::UnknownConcept(concept.into()))?;
    let csv_err = |e: csv::Error| ApiError::validation(format!("csv: {e}"));
    let mut header = vec!["id".to_string()];
    header.extend(def.attributes.iter().map(|a| a.name.clone()));
    w.write_record(&header).map_err(csv_err)?;
    for member in snap.extent(id)? {
        let rec = snap.describe(member)?;
        let mut row = vec![member.to_string()];
        row.extend(def.attributes.iter().map(|a| rec.values.get(&a.name).map(|v| v.to_string()).unwrap_or_default()));
        w.write_record(&row).map_err(csv_err)?;
    }
    Ok(())
}

fn write_csv_files(snap: &dobj_core::Snapshot, names: &[String], dir: &Path) -> Result<(), ApiError> {
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    for name in names {
        let file = std::fs::File::create(dir.join(format!("{name}.csv"))).map_err(Error::from)?;
        let mut w = csv::Writer::from_writer(file);
        write_concept_csv(snap, name, &mut w)?;
        w.flush().map_err(Error::from)?;
    }
    Ok(())
}

/// Three reads (individuation by login) per write (a name change), timed
/// one operation at a time.
fn bench(ops: usize, employees: usize) -> Result<String, ApiError> {
    if ops == 0 {
        return Err(ApiError::validation("--ops must be positive"));
    }
    let store = Store::in_memory(StoreConfig::default());
    let admin = store.admin_session();
    install_all(&store, &admin)?;
    let demo = seed_demo(&store, &admin, &DemoOptions::new(employees.max(1)))?;
    let mut reads = Vec::new();
    let mut writes = Vec::new();
    let started = Instant::now();
    for i in 0..ops {
        let k = i % demo.employees.len();
        let t = Instant::now();
        if i % 4 == 3 {
            let cmd = Command::set_attr(demo.employees[k], json!({ "name": format!("Bench {i}") }));
            store.submit(&admin, cmd)?;
            writes.push(t.elapsed().as_secs_f64() * 1e3);
        } else {
            store.head_snapshot().individuate(&format!("login = 'e{k}'"), "Employee")?;
            reads.push(t.elapsed().as_secs_f64() * 1e3);
        }
    }
    let total = started.elapsed().as_secs_f64();
    let mut o = String::new();
    writeln!(o, "{ops} ops in {total:.3}s ({:.0} ops/s)", ops as f64 / total).ok();
    for (label, mut xs) in [("read", reads), ("write", writes)] {
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(f64::total_cmp);
        let q = |p: f64| xs[((xs.len() - 1) as f64 * p).round() as usize];
        writeln!(o, "{label:<5} n={:<6} p50 {:.3} ms  p95 {:.3} ms  p99 {:.3} ms", xs.len(), q(0.5), q(0.95), q(0.99)).ok();
    }
    Ok(o)
}
