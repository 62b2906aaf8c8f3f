//! Read-side queries over the content of one state.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use im::OrdSet;

use crate::content::Content;
use crate::error::{Error, Result};
use crate::formula::{self, Binding, Formula, Subject};
use crate::model::{
    parse_level_slice, AttributeSpec, DataObject, DomainRef, Id, MetaObject, StateIndex, CONCEPT_CONCEPT,
    CONCEPT_CONCEPT_NAME, META_CONCEPT, META_CONCEPT_NAME,
};
use crate::tower::MetaMemo;
use crate::value::Value;

/// Content of one state plus the evaluation settings needed to answer
/// queries about it. Views over committed states may memoize meta extents;
/// views over drafts never do.
#[derive(Clone, Copy)]
pub struct View<'a> {
    pub(crate) content: &'a Content,
    pub(crate) state: StateIndex,
    pub(crate) memo: Option<&'a MetaMemo>,
    pub(crate) cap: u32,
}

/// A set of member identifiers.
#[derive(Clone, Debug)]
pub enum Members {
    Concept(OrdSet<Id>),
    Computed(Arc<BTreeSet<Id>>),
}

impl Members {
    pub fn contains(&self, id: &Id) -> bool {
        match self {
            Members::Concept(s) => s.contains(id),
            Members::Computed(s) => s.contains(id),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Members::Concept(s) => s.len(),
            Members::Computed(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = Id> + '_> {
        match self {
            Members::Concept(s) => Box::new(s.iter().copied()),
            Members::Computed(s) => Box::new(s.iter().copied()),
        }
    }

    pub fn to_set(&self) -> BTreeSet<Id> {
        self.iter().collect()
    }
}

/// Schema and values of an addressable object.
pub(crate) struct Entity<'a> {
    pub concept: Id,
    pub values: Cow<'a, BTreeMap<String, Value>>,
}

impl<'a> View<'a> {
    pub fn new(content: &'a Content, state: StateIndex, cap: u32) -> View<'a> {
        View { content, state, memo: None, cap }
    }

    pub(crate) fn with_memo(mut self, memo: &'a MetaMemo) -> View<'a> {
        self.memo = Some(memo);
        self
    }

    pub fn content(&self) -> &'a Content {
        self.content
    }

    pub fn state(&self) -> StateIndex {
        self.state
    }

    pub fn tower_cap(&self) -> u32 {
        self.cap
    }

    pub fn schema(&self, concept: Id) -> Option<&'a [AttributeSpec]> {
        self.content.concept(concept).map(|c| c.attributes.as_slice())
    }

    pub fn resolve_domain(&self, name: &str) -> Result<DomainRef> {
        match name {
            CONCEPT_CONCEPT_NAME => return Ok(DomainRef::AllConcepts),
            META_CONCEPT_NAME => return Ok(DomainRef::AllMetas),
            _ => {}
        }
        if let Some(k) = parse_level_slice(name) {
            return if k >= 1 && k <= self.cap {
                Ok(DomainRef::MetaLevel(k))
            } else {
                Err(Error::UnknownDomain(name.to_string()))
            };
        }
        match self.content.name_id(name) {
            Some(id) if self.content.metas.contains_key(&id) => Ok(DomainRef::Meta(id)),
            Some(id) => Ok(DomainRef::Concept(id)),
            None => Err(Error::UnknownDomain(name.to_string())),
        }
    }

    pub fn domain_name(&self, domain: &DomainRef) -> String {
        match domain {
            DomainRef::Concept(id) => self.content.concept(*id).map(|c| c.name.clone()).unwrap_or_default(),
            DomainRef::Meta(id) => self.content.meta(*id).map(|m| m.name.clone()).unwrap_or_default(),
            DomainRef::AllConcepts => CONCEPT_CONCEPT_NAME.to_string(),
            DomainRef::AllMetas => META_CONCEPT_NAME.to_string(),
            DomainRef::MetaLevel(k) => format!("{META_CONCEPT_NAME}{k}"),
        }
    }

    /// Level of a domain when a formula references it: a set of level-k
    /// objects sits at level k+1.
    pub fn domain_level(&self, domain: &DomainRef) -> u32 {
        match domain {
            DomainRef::Concept(_) => 1,
            DomainRef::Meta(id) => self.content.meta(*id).map(|m| m.level).unwrap_or(1),
            DomainRef::AllConcepts => 2,
            DomainRef::MetaLevel(k) => k + 1,
            // Ranges over every level, including the cap itself.
            DomainRef::AllMetas => self.cap + 1,
        }
    }

    /// The concept whose schema describes members of the domain.
    pub fn member_schema(&self, domain: &DomainRef) -> Id {
        match domain {
            DomainRef::Concept(id) => *id,
            DomainRef::Meta(id) => self.content.meta(*id).map(|m| self.member_schema(&m.domain)).unwrap_or(*id),
            DomainRef::AllConcepts => CONCEPT_CONCEPT,
            DomainRef::AllMetas | DomainRef::MetaLevel(_) => META_CONCEPT,
        }
    }

    /// Everything in the domain at this state.
    pub fn members(&self, domain: &DomainRef) -> Result<Members> {
        Ok(match domain {
            DomainRef::Concept(id) => {
                if self.content.concept(*id).is_none() {
                    return Err(Error::UnknownConcept(id.to_string()));
                }
                Members::Concept(self.content.alive_members(*id))
            }
            DomainRef::Meta(id) => Members::Computed(self.meta_extent(*id)?),
            DomainRef::AllConcepts => Members::Computed(Arc::new(self.content.concepts.keys().copied().collect())),
            DomainRef::AllMetas => Members::Computed(Arc::new(self.content.metas.keys().copied().collect())),
            DomainRef::MetaLevel(k) => Members::Computed(Arc::new(
                self.content.metas.values().filter(|m| m.level == *k).map(|m| m.id).collect(),
            )),
        })
    }

    /// Extent of a concept (user or built-in).
    pub fn extent(&self, concept: Id) -> Result<Members> {
        match concept {
            CONCEPT_CONCEPT => self.members(&DomainRef::AllConcepts),
            META_CONCEPT => self.members(&DomainRef::AllMetas),
            id if self.content.concept(id).is_some() => self.members(&DomainRef::Concept(id)),
            id => Err(Error::UnknownConcept(id.to_string())),
        }
    }

    /// Candidates a comprehension filters: for a comprehension over all
    /// meta-objects only those strictly below its own level.
    pub(crate) fn comprehension_candidates(&self, meta: &MetaObject) -> Result<Members> {
        match meta.domain {
            DomainRef::AllMetas => Ok(Members::Computed(Arc::new(
                self.content.metas.values().filter(|m| m.level < meta.level).map(|m| m.id).collect(),
            ))),
            ref other => self.members(other),
        }
    }

    pub fn meta_extent(&self, meta: Id) -> Result<Arc<BTreeSet<Id>>> {
        let def = self.content.meta(meta).ok_or(Error::UnknownId(meta))?;
        if let Some(hit) = self.memo.and_then(|m| m.get(meta, self.state)) {
            return Ok(hit);
        }
        let candidates = self.comprehension_candidates(def)?;
        let schema = self.member_schema(&def.domain);
        formula::check(&def.formula, schema, self)?;
        let mut out = BTreeSet::new();
        for x in candidates.iter() {
            if formula::evaluate_checked(&def.formula, &Binding::stored(x), self)? {
                out.insert(x);
            }
        }
        let out = Arc::new(out);
        if let Some(memo) = self.memo {
            memo.put(meta, self.state, out.clone());
        }
        Ok(out)
    }

    /// The schema concept of any addressable object alive at this state.
    pub fn concept_of(&self, id: Id) -> Option<Id> {
        if self.content.concepts.contains_key(&id) {
            Some(CONCEPT_CONCEPT)
        } else if self.content.metas.contains_key(&id) {
            Some(META_CONCEPT)
        } else {
            self.content.individual(id).filter(|r| r.alive()).map(|r| r.concept)
        }
    }

    pub(crate) fn entity(&self, id: Id) -> Option<Entity<'a>> {
        if let Some(rec) = self.content.individuals.get(&id) {
            return rec.alive().then(|| Entity { concept: rec.concept, values: Cow::Borrowed(&rec.values) });
        }
        if let Some(c) = self.content.concept(id) {
            let mut v = c.annotations.clone();
            v.insert("name".into(), Value::Text(c.name.clone()));
            v.insert("level".into(), Value::Integer(1));
            v.insert("defined_at".into(), Value::Integer(c.defined_at.0 as i64));
            v.insert("attribute_count".into(), Value::Integer(c.attributes.len() as i64));
            return Some(Entity { concept: CONCEPT_CONCEPT, values: Cow::Owned(v) });
        }
        if let Some(m) = self.content.meta(id) {
            let mut v = m.annotations.clone();
            v.insert("name".into(), Value::Text(m.name.clone()));
            v.insert("level".into(), Value::Integer(m.level as i64));
            v.insert("formula".into(), Value::Text(m.formula.to_string()));
            v.insert("domain".into(), Value::Text(m.domain_name.clone()));
            v.insert("defined_at".into(), Value::Integer(m.defined_at.0 as i64));
            return Some(Entity { concept: META_CONCEPT, values: Cow::Owned(v) });
        }
        None
    }

    /// Snapshot of an individual.
    pub fn get_object(&self, id: Id) -> Result<DataObject> {
        let rec = self.content.individual(id).ok_or(Error::UnknownId(id))?;
        if !rec.alive() {
            return Err(Error::NotAliveAtState { id, state: self.state });
        }
        Ok(DataObject { concept: rec.concept, individual: id, state: self.state, values: rec.values.clone() })
    }

    /// Uniform view of individuals, concepts and meta-objects.
    pub fn describe(&self, id: Id) -> Result<DataObject> {
        if let Some(rec) = self.content.individual(id) {
            if !rec.alive() {
                return Err(Error::NotAliveAtState { id, state: self.state });
            }
        }
        let e = self.entity(id).ok_or(Error::UnknownId(id))?;
        Ok(DataObject { concept: e.concept, individual: id, state: self.state, values: e.values.into_owned() })
    }

    /// Evaluates a formula for one binding.
    pub fn evaluate(&self, f: &Formula, binding: &Binding) -> Result<bool> {
        let schema = match &binding.subject {
            Subject::Stored(id) => self.concept_of(*id).ok_or(Error::UnknownId(*id))?,
            Subject::Draft { concept, .. } => *concept,
        };
        formula::check_with_vars(f, schema, &binding.vars_schema(self)?, self)?;
        formula::evaluate_checked(f, binding, self)
    }

    /// Returns the single member of `domain` satisfying the formula.
    pub fn individuate(&self, f: &Formula, domain: &DomainRef) -> Result<Id> {
        let members = self.members(domain)?;
        formula::check(f, self.member_schema(domain), self)?;
        let mut found = None;
        let mut count = 0usize;
        for x in members.iter() {
            if formula::evaluate_checked(f, &Binding::stored(x), self)? {
                count += 1;
                found.get_or_insert(x);
            }
        }
        match count {
            0 => Err(Error::NoneSatisfies),
            1 => Ok(found.unwrap()),
            n => Err(Error::Ambiguous { count: n }),
        }
    }

    /// Members of `domain` satisfying the formula.
    pub fn filter(&self, f: &Formula, domain: &DomainRef) -> Result<BTreeSet<Id>> {
        let members = self.members(domain)?;
        formula::check(f, self.member_schema(domain), self)?;
        let mut out = BTreeSet::new();
        for x in members.iter() {
            if formula::evaluate_checked(f, &Binding::stored(x), self)? {
                out.insert(x);
            }
        }
        Ok(out)
    }
}
