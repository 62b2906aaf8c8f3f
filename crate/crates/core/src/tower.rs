//! Stratified comprehension: level bookkeeping and the per-state extent memo.
//!
//! A domain referenced by a formula sits one level above its members:
//! a concept is level 1, the set of all concepts level 2, a level-k slice of
//! meta-objects level k+1. A comprehension's formula may only reference
//! domains strictly below the level of the object being defined.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::formula::{self, Formula};
use crate::model::{is_reserved_name, valid_identifier, DomainRef, Id, StateIndex};
use crate::view::View;

pub const DEFAULT_TOWER_CAP: u32 = 3;

/// Highest level of any domain the formula references; 0 if none.
pub fn level_of(f: &Formula, view: &View<'_>) -> Result<u32> {
    let mut level = 0;
    for name in f.referenced_domains() {
        let d = view.resolve_domain(&name)?;
        level = level.max(view.domain_level(&d));
    }
    Ok(level)
}

/// Level of the meta-object produced by comprehending over `domain`.
pub fn result_level(domain: &DomainRef, view: &View<'_>) -> u32 {
    match domain {
        DomainRef::Concept(_) => 1,
        DomainRef::AllConcepts => 2,
        DomainRef::MetaLevel(k) => k + 1,
        DomainRef::Meta(id) => view.content.meta(*id).map(|m| m.level).unwrap_or(1),
        DomainRef::AllMetas => view.cap,
    }
}

/// Validates a comprehension and returns its resolved domain and level.
pub(crate) fn plan_comprehension(
    view: &View<'_>,
    name: &str,
    formula: &Formula,
    domain_name: &str,
) -> Result<(DomainRef, u32)> {
    if !valid_identifier(name) || is_reserved_name(name) {
        return Err(Error::InvalidAttribute(format!("'{name}' is not a usable meta-object name")));
    }
    if view.content.name_id(name).is_some() {
        return Err(Error::DuplicateName(name.to_string()));
    }
    let domain = view.resolve_domain(domain_name)?;
    let level = result_level(&domain, view);
    if level > view.cap {
        return Err(Error::TowerCapExceeded { level, cap: view.cap });
    }
    let formula_level = level_of(formula, view)?;
    if formula_level >= level {
        return Err(Error::Stratification { formula_level, target_level: level });
    }
    formula::check(formula, view.member_schema(&domain), view)?;
    Ok((domain, level))
}

/// Memoized meta extents keyed by (meta, state). Content at a state never
/// changes once committed, so entries stay valid for the store's lifetime.
/// Two racing computations of one cell produce equal sets; last write wins.
#[derive(Debug, Default)]
pub struct MetaMemo {
    cells: Mutex<HashMap<(Id, StateIndex), Arc<BTreeSet<Id>>>>,
    bound: Option<usize>,
}

impl MetaMemo {
    pub fn new() -> Self {
        Self::default()
    }

    /// A memo that drops everything once it holds `bound` cells.
    pub fn bounded(bound: usize) -> Self {
        MetaMemo { cells: Mutex::default(), bound: Some(bound) }
    }

    pub fn get(&self, meta: Id, state: StateIndex) -> Option<Arc<BTreeSet<Id>>> {
        self.cells.lock().unwrap().get(&(meta, state)).cloned()
    }

    pub fn put(&self, meta: Id, state: StateIndex, extent: Arc<BTreeSet<Id>>) {
        let mut cells = self.cells.lock().unwrap();
        if self.bound.is_some_and(|b| cells.len() >= b) {
            cells.clear();
        }
        cells.insert((meta, state), extent);
    }

    pub fn len(&self) -> usize {
        self.cells.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
