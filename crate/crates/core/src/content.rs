//! Store content at one state and the primitive effects that transform it.
//!
//! Content is built from persistent maps, so keeping one value per state is
//! cheap: consecutive states share almost all of their structure.

use std::collections::BTreeMap;
use std::sync::Arc;

use im::{OrdMap, OrdSet, Vector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::access::MandatoryOverride;
use crate::appraisal::AppraisalParams;
use crate::event::rules::Rule;
use crate::model::{
    builtin_concept, AttributeSpec, ConceptDef, Id, IndividualRecord, MetaObject, StateIndex, CONCEPT_CONCEPT,
    META_CONCEPT,
};
use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "ContentData")]
pub struct Content {
    pub(crate) concepts: OrdMap<Id, Arc<ConceptDef>>,
    pub(crate) metas: OrdMap<Id, Arc<MetaObject>>,
    /// Shared namespace of concept and meta names.
    pub(crate) names: OrdMap<String, Id>,
    pub(crate) individuals: OrdMap<Id, Arc<IndividualRecord>>,
    /// Alive members per user concept.
    pub(crate) members: OrdMap<Id, OrdSet<Id>>,
    pub(crate) rules: Vector<Arc<Rule>>,
    pub(crate) overrides: OrdMap<Id, Arc<MandatoryOverride>>,
    pub(crate) params: AppraisalParams,
    /// Applied packs: name -> version.
    pub(crate) packs: OrdMap<String, String>,
    /// Alive individuals holding a reference, keyed by the referenced id.
    /// Derived from `individuals`, so it is neither hashed nor serialized.
    #[serde(skip)]
    pub(crate) referrers: OrdMap<Id, OrdSet<Id>>,
}

#[derive(Deserialize)]
struct ContentData {
    concepts: OrdMap<Id, Arc<ConceptDef>>,
    metas: OrdMap<Id, Arc<MetaObject>>,
    names: OrdMap<String, Id>,
    individuals: OrdMap<Id, Arc<IndividualRecord>>,
    members: OrdMap<Id, OrdSet<Id>>,
    rules: Vector<Arc<Rule>>,
    overrides: OrdMap<Id, Arc<MandatoryOverride>>,
    params: AppraisalParams,
    packs: OrdMap<String, String>,
}

impl From<ContentData> for Content {
    fn from(d: ContentData) -> Self {
        let mut c = Content {
            concepts: d.concepts,
            metas: d.metas,
            names: d.names,
            individuals: d.individuals,
            members: d.members,
            rules: d.rules,
            overrides: d.overrides,
            params: d.params,
            packs: d.packs,
            referrers: OrdMap::new(),
        };
        let alive: Vec<_> = c.individuals.values().filter(|r| r.alive()).cloned().collect();
        for rec in alive {
            c.link(rec.id, &rec.values);
        }
        c
    }
}

fn refs(values: &BTreeMap<String, Value>) -> impl Iterator<Item = Id> + '_ {
    values.values().filter_map(Value::as_ref_id)
}

/// A primitive, already-validated change to the content.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Effect {
    DefineConcept { concept: ConceptDef },
    ExtendConcept { concept: Id, attributes: Vec<AttributeSpec> },
    Create { id: Id, concept: Id, values: BTreeMap<String, Value> },
    SetValues {
        target: Id,
        #[serde(default)]
        set: BTreeMap<String, Value>,
        #[serde(default)]
        unset: Vec<String>,
    },
    Retire { target: Id },
    Annotate { target: Id, key: String, value: Option<Value> },
    DefineMeta { meta: MetaObject },
    AddRule { rule: Rule },
    AddOverride { rule: MandatoryOverride },
    SetParams { params: AppraisalParams },
    MarkPack { name: String, version: String },
    /// Content becomes that of an earlier state.
    Restore { to: StateIndex },
    Audit { rule: Option<Id>, message: String },
}

impl Default for Content {
    fn default() -> Self {
        Content::genesis()
    }
}

impl Content {
    /// The empty store: only the two built-in concepts exist.
    pub fn genesis() -> Content {
        let mut c = Content {
            concepts: OrdMap::new(),
            metas: OrdMap::new(),
            names: OrdMap::new(),
            individuals: OrdMap::new(),
            members: OrdMap::new(),
            rules: Vector::new(),
            overrides: OrdMap::new(),
            params: AppraisalParams::default(),
            packs: OrdMap::new(),
            referrers: OrdMap::new(),
        };
        for id in [CONCEPT_CONCEPT, META_CONCEPT] {
            let def = builtin_concept(id).expect("builtin");
            c.names.insert(def.name.clone(), id);
            c.concepts.insert(id, Arc::new(def));
        }
        c
    }

    pub fn concept(&self, id: Id) -> Option<&ConceptDef> {
        self.concepts.get(&id).map(|c| c.as_ref())
    }

    pub fn concept_by_name(&self, name: &str) -> Option<&ConceptDef> {
        self.names.get(name).and_then(|id| self.concept(*id))
    }

    pub fn meta(&self, id: Id) -> Option<&MetaObject> {
        self.metas.get(&id).map(|m| m.as_ref())
    }

    pub fn meta_by_name(&self, name: &str) -> Option<&MetaObject> {
        self.names.get(name).and_then(|id| self.meta(*id))
    }

    pub fn name_id(&self, name: &str) -> Option<Id> {
        self.names.get(name).copied()
    }

    pub fn individual(&self, id: Id) -> Option<&IndividualRecord> {
        self.individuals.get(&id).map(|r| r.as_ref())
    }

    pub fn concepts(&self) -> impl Iterator<Item = &ConceptDef> {
        self.concepts.values().map(|c| c.as_ref())
    }

    pub fn metas(&self) -> impl Iterator<Item = &MetaObject> {
        self.metas.values().map(|m| m.as_ref())
    }

    pub fn individuals(&self) -> impl Iterator<Item = &IndividualRecord> {
        self.individuals.values().map(|r| r.as_ref())
    }

    /// Alive members of a user concept.
    pub fn alive_members(&self, concept: Id) -> OrdSet<Id> {
        self.members.get(&concept).cloned().unwrap_or_default()
    }

    /// Alive individuals whose values reference `id`.
    pub fn referrers(&self, id: Id) -> impl Iterator<Item = Id> + '_ {
        self.referrers.get(&id).into_iter().flat_map(|s| s.iter().copied())
    }

    fn link(&mut self, holder: Id, values: &BTreeMap<String, Value>) {
        for t in refs(values) {
            self.referrers.entry(t).or_default().insert(holder);
        }
    }

    fn unlink(&mut self, holder: Id, values: &BTreeMap<String, Value>) {
        for t in refs(values) {
            if let Some(set) = self.referrers.get_mut(&t) {
                set.remove(&holder);
                if set.is_empty() {
                    self.referrers.remove(&t);
                }
            }
        }
    }

    pub fn rules(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().map(|r| r.as_ref())
    }

    pub fn overrides(&self) -> impl Iterator<Item = &MandatoryOverride> {
        self.overrides.values().map(|o| o.as_ref())
    }

    pub fn params(&self) -> &AppraisalParams {
        &self.params
    }

    pub fn applied_packs(&self) -> &OrdMap<String, String> {
        &self.packs
    }

    pub fn is_applied(&self, pack: &str) -> bool {
        self.packs.contains_key(pack)
    }

    /// SHA-256 over the canonical serialization of everything stored.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("content serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Applies one effect. [`Effect::Restore`] needs history and is handled
    /// by the caller.
    pub fn apply(&mut self, effect: &Effect, state: StateIndex) -> Result<(), String> {
        match effect {
            Effect::DefineConcept { concept } => {
                if self.names.contains_key(&concept.name) {
                    return Err(format!("name {} already defined", concept.name));
                }
                let mut def = concept.clone();
                def.defined_at = state;
                self.names.insert(def.name.clone(), def.id);
                self.members.insert(def.id, OrdSet::new());
                self.concepts.insert(def.id, Arc::new(def));
            }
            Effect::ExtendConcept { concept, attributes } => {
                let def = self.concepts.get(concept).ok_or_else(|| format!("unknown concept {concept}"))?;
                let mut def = (**def).clone();
                for attr in attributes {
                    if def.attribute(&attr.name).is_some() {
                        return Err(format!("attribute {} already on {}", attr.name, def.name));
                    }
                    def.attributes.push(attr.clone());
                }
                self.concepts.insert(*concept, Arc::new(def));
            }
            Effect::Create { id, concept, values } => {
                if self.individuals.contains_key(id) {
                    return Err(format!("id {id} already exists"));
                }
                if !self.members.contains_key(concept) {
                    return Err(format!("unknown concept {concept}"));
                }
                let rec = IndividualRecord {
                    id: *id,
                    concept: *concept,
                    created_at: state,
                    retired_at: None,
                    values: values.clone(),
                };
                self.individuals.insert(*id, Arc::new(rec));
                self.members.entry(*concept).or_default().insert(*id);
                self.link(*id, values);
            }
            Effect::SetValues { target, set, unset } => {
                let rec = self.individuals.get(target).ok_or_else(|| format!("unknown individual {target}"))?;
                if !rec.alive() {
                    return Err(format!("individual {target} is retired"));
                }
                let mut rec = (**rec).clone();
                self.unlink(*target, &rec.values);
                for (k, v) in set {
                    rec.values.insert(k.clone(), v.clone());
                }
                for k in unset {
                    rec.values.remove(k);
                }
                self.link(*target, &rec.values);
                self.individuals.insert(*target, Arc::new(rec));
            }
            Effect::Retire { target } => {
                let rec = self.individuals.get(target).ok_or_else(|| format!("unknown individual {target}"))?;
                if !rec.alive() {
                    return Err(format!("individual {target} already retired"));
                }
                let mut rec = (**rec).clone();
                rec.retired_at = Some(state);
                self.unlink(*target, &rec.values);
                if let Some(set) = self.members.get_mut(&rec.concept) {
                    set.remove(target);
                }
                self.individuals.insert(*target, Arc::new(rec));
            }
            Effect::Annotate { target, key, value } => {
                let set = |annotations: &mut BTreeMap<String, Value>| match value {
                    Some(v) => {
                        annotations.insert(key.clone(), v.clone());
                    }
                    None => {
                        annotations.remove(key);
                    }
                };
                if let Some(c) = self.concepts.get(target) {
                    let mut c = (**c).clone();
                    set(&mut c.annotations);
                    self.concepts.insert(*target, Arc::new(c));
                } else if let Some(m) = self.metas.get(target) {
                    let mut m = (**m).clone();
                    set(&mut m.annotations);
                    self.metas.insert(*target, Arc::new(m));
                } else {
                    return Err(format!("unknown metadata object {target}"));
                }
            }
            Effect::DefineMeta { meta } => {
                if self.names.contains_key(&meta.name) {
                    return Err(format!("name {} already defined", meta.name));
                }
                let mut m = meta.clone();
                m.defined_at = state;
                self.names.insert(m.name.clone(), m.id);
                self.metas.insert(m.id, Arc::new(m));
            }
            Effect::AddRule { rule } => {
                let mut r = rule.clone();
                r.registered_at = state;
                self.rules.push_back(Arc::new(r));
            }
            Effect::AddOverride { rule } => {
                self.overrides.insert(rule.id, Arc::new(rule.clone()));
            }
            Effect::SetParams { params } => self.params = *params,
            Effect::MarkPack { name, version } => {
                self.packs.insert(name.clone(), version.clone());
            }
            Effect::Restore { .. } => return Err("restore must be applied by the history owner".into()),
            Effect::Audit { .. } => {}
        }
        Ok(())
    }
}

/// Ids allocated by an effect list (used to keep the id counter monotone).
pub(crate) fn max_id(effects: &[Effect]) -> Option<u64> {
    effects
        .iter()
        .filter_map(|e| match e {
            Effect::DefineConcept { concept } => Some(concept.id),
            Effect::Create { id, .. } => Some(*id),
            Effect::DefineMeta { meta } => Some(meta.id),
            Effect::AddRule { rule } => Some(rule.id),
            Effect::AddOverride { rule } => Some(rule.id),
            _ => None,
        })
        .map(|id| id.0)
        .max()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::ValueType;

    fn concept(id: u64, name: &str) -> ConceptDef {
        ConceptDef {
            id: Id(id),
            name: name.into(),
            attributes: vec![AttributeSpec::new("name", ValueType::Text)],
            defined_at: StateIndex(0),
            origin_pack: None,
            annotations: BTreeMap::new(),
        }
    }

    #[test]
    fn create_and_retire_maintain_members() {
        let mut c = Content::genesis();
        c.apply(&Effect::DefineConcept { concept: concept(100, "Tag") }, StateIndex(1)).unwrap();
        c.apply(&Effect::Create { id: Id(101), concept: Id(100), values: BTreeMap::new() }, StateIndex(2))
            .unwrap();
        assert!(c.alive_members(Id(100)).contains(&Id(101)));
        c.apply(&Effect::Retire { target: Id(101) }, StateIndex(3)).unwrap();
        assert!(c.alive_members(Id(100)).is_empty());
        assert_eq!(c.individual(Id(101)).unwrap().retired_at, Some(StateIndex(3)));
        assert!(c.apply(&Effect::Retire { target: Id(101) }, StateIndex(4)).is_err());
    }

    #[test]
    fn hash_tracks_content_not_history() {
        let mut a = Content::genesis();
        let b = a.clone();
        assert_eq!(a.content_hash(), b.content_hash());
        a.apply(&Effect::DefineConcept { concept: concept(100, "Tag") }, StateIndex(1)).unwrap();
        assert_ne!(a.content_hash(), b.content_hash());
    }

    #[test]
    fn content_roundtrips_through_json() {
        let mut a = Content::genesis();
        a.apply(&Effect::DefineConcept { concept: concept(100, "Tag") }, StateIndex(1)).unwrap();
        let text = serde_json::to_string(&a).unwrap();
        let back: Content = serde_json::from_str(&text).unwrap();
        assert_eq!(back.content_hash(), a.content_hash());
        assert_eq!(back, a);
    }

    #[test]
    fn referrer_index_follows_values() {
        let mut c = Content::genesis();
        let mut def = concept(100, "Node");
        def.attributes.push(AttributeSpec::new("next", ValueType::Reference(Id(100))));
        c.apply(&Effect::DefineConcept { concept: def }, StateIndex(1)).unwrap();
        c.apply(&Effect::Create { id: Id(101), concept: Id(100), values: BTreeMap::new() }, StateIndex(2)).unwrap();
        let link = BTreeMap::from([("next".to_string(), Value::Ref(Id(101)))]);
        c.apply(&Effect::Create { id: Id(102), concept: Id(100), values: link }, StateIndex(3)).unwrap();
        assert_eq!(c.referrers(Id(101)).collect::<Vec<_>>(), vec![Id(102)]);
        c.apply(
            &Effect::SetValues { target: Id(102), set: BTreeMap::new(), unset: vec!["next".into()] },
            StateIndex(4),
        )
        .unwrap();
        assert_eq!(c.referrers(Id(101)).count(), 0);
        let back: Content = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
