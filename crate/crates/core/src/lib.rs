//! An event-sourced enterprise object engine.
//!
//! Data and metadata live in one store as data objects: a concept, an
//! individual and a state. Every accepted event advances the global state
//! by one; any earlier state stays readable, and rollback appends a marker
//! that restores an earlier content. Comprehension-defined meta-objects form
//! a stratified tower over concepts, sessions get access profiles derived
//! from the org chart, and component packs integrate new schema through a
//! conflict-checked merge plan.
//!
//! ```
//! use dobj_core::{AttrDraft, Store, StoreConfig};
//! use serde_json::json;
//!
//! let store = Store::in_memory(StoreConfig::default());
//! let admin = store.admin_session();
//! store.define_concept(&admin, "Employee", vec![AttrDraft::new("name", "text").required()]).unwrap();
//! let ivanov = store.create(&admin, "Employee", json!({"name": "Ivanov"})).unwrap();
//! store.create(&admin, "Employee", json!({"name": "Petrov"})).unwrap();
//! let snap = store.head_snapshot();
//! assert_eq!(snap.individuate("name = 'Ivanov'", "Employee").unwrap(), ivanov);
//! ```

pub mod access;
pub mod appraisal;
pub mod content;
pub mod error;
pub mod event;
pub mod formula;
pub mod model;
pub mod org;
pub mod packs;
pub mod store;
pub mod tower;
pub mod value;
pub mod view;

pub use access::{AccessAction, AccessProfile, Decision, Scenario, Session, Target};
pub use appraisal::{AppraisalParams, Score};
pub use content::{Content, Effect};
pub use error::{Error, ErrorCode, Result};
pub use event::{AttrDraft, Command, EventRecord, RuleDraft};
pub use formula::{parse, Formula};
pub use model::{DataObject, DomainRef, Id, StateIndex};
pub use org::OrgModel;
pub use packs::{analyze_pack, apply_plan, install, install_all, load_pack, seed_demo, ComponentPack, DemoOptions, MergePlan};
pub use store::{Receipt, Snapshot, Store, StoreConfig, StoreSnapshot};
pub use value::{Value, ValueType};
pub use view::View;
