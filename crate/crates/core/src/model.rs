//! Concepts, individuals, meta-objects and the state index.
//!
//! Every stored thing is addressed by an [`Id`] drawn from a single monotone
//! counter. Identifiers are never reused, not even for events that were later
//! masked by a rollback.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::formula::Formula;
use crate::value::{Value, ValueType};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Id(pub u64);

impl fmt::Display for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Global state counter. State 0 is the empty store; each accepted event
/// increments it by exactly one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateIndex(pub u64);

impl StateIndex {
    pub const EMPTY: StateIndex = StateIndex(0);

    pub fn next(self) -> StateIndex {
        StateIndex(self.0 + 1)
    }
}

impl fmt::Display for StateIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Built-in concept whose members are all concepts.
pub const CONCEPT_CONCEPT: Id = Id(1);
/// Built-in concept whose members are all meta-objects.
pub const META_CONCEPT: Id = Id(2);
pub const CONCEPT_CONCEPT_NAME: &str = "Concept";
pub const META_CONCEPT_NAME: &str = "MetaObject";
/// First identifier handed out to user objects.
pub const FIRST_USER_ID: u64 = 100;

/// Attributes on concepts and meta-objects that administrators may set.
pub const ANNOTATION_ATTRS: [(&str, ValueType); 2] = [("audited", ValueType::Boolean), ("note", ValueType::Text)];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub value_type: ValueType,
    #[serde(default)]
    pub required_by_default: bool,
}

impl AttributeSpec {
    pub fn new(name: impl Into<String>, value_type: ValueType) -> Self {
        AttributeSpec { name: name.into(), value_type, required_by_default: false }
    }

    pub fn required(mut self) -> Self {
        self.required_by_default = true;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConceptDef {
    pub id: Id,
    pub name: String,
    pub attributes: Vec<AttributeSpec>,
    pub defined_at: StateIndex,
    #[serde(default)]
    pub origin_pack: Option<String>,
    #[serde(default)]
    pub annotations: BTreeMap<String, Value>,
}

impl ConceptDef {
    /// Concepts are sets of level-0 individuals.
    pub const LEVEL: u32 = 1;

    pub fn attribute(&self, name: &str) -> Option<&AttributeSpec> {
        self.attributes.iter().find(|a| a.name == name)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub id: Id,
    pub concept: Id,
    pub created_at: StateIndex,
    #[serde(default)]
    pub retired_at: Option<StateIndex>,
    pub values: BTreeMap<String, Value>,
}

impl IndividualRecord {
    pub fn alive(&self) -> bool {
        self.retired_at.is_none()
    }
}

/// What a comprehension ranges over.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainRef {
    /// Alive individuals of a concept (members are level 0).
    Concept(Id),
    /// The extent of another meta-object.
    Meta(Id),
    /// Every concept (members are level 1).
    AllConcepts,
    /// Every meta-object.
    AllMetas,
    /// Meta-objects of exactly the given level.
    MetaLevel(u32),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaObject {
    pub id: Id,
    pub name: String,
    pub level: u32,
    pub domain: DomainRef,
    pub domain_name: String,
    pub formula: Formula,
    pub defined_at: StateIndex,
    #[serde(default)]
    pub origin_pack: Option<String>,
    #[serde(default)]
    pub annotations: BTreeMap<String, Value>,
}

/// A uniform view of any stored object at a state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataObject {
    pub concept: Id,
    pub individual: Id,
    pub state: StateIndex,
    pub values: BTreeMap<String, Value>,
}

pub(crate) fn concept_schema() -> Vec<AttributeSpec> {
    vec![
        AttributeSpec::new("name", ValueType::Text),
        AttributeSpec::new("level", ValueType::Integer),
        AttributeSpec::new("defined_at", ValueType::Integer),
        AttributeSpec::new("attribute_count", ValueType::Integer),
        AttributeSpec::new("audited", ValueType::Boolean),
        AttributeSpec::new("note", ValueType::Text),
    ]
}

pub(crate) fn meta_schema() -> Vec<AttributeSpec> {
    vec![
        AttributeSpec::new("name", ValueType::Text),
        AttributeSpec::new("level", ValueType::Integer),
        AttributeSpec::new("formula", ValueType::Text),
        AttributeSpec::new("domain", ValueType::Text),
        AttributeSpec::new("defined_at", ValueType::Integer),
        AttributeSpec::new("audited", ValueType::Boolean),
        AttributeSpec::new("note", ValueType::Text),
    ]
}

pub(crate) fn builtin_concept(id: Id) -> Option<ConceptDef> {
    let (name, attributes) = match id {
        CONCEPT_CONCEPT => (CONCEPT_CONCEPT_NAME, concept_schema()),
        META_CONCEPT => (META_CONCEPT_NAME, meta_schema()),
        _ => return None,
    };
    Some(ConceptDef {
        id,
        name: name.to_string(),
        attributes,
        defined_at: StateIndex::EMPTY,
        origin_pack: None,
        annotations: BTreeMap::new(),
    })
}

/// `MetaObject2` names the slice of level-2 meta-objects.
pub(crate) fn parse_level_slice(name: &str) -> Option<u32> {
    let digits = name.strip_prefix(META_CONCEPT_NAME)?;
    if digits.is_empty() || digits.starts_with('0') {
        return None;
    }
    digits.parse().ok()
}

pub(crate) fn is_reserved_name(name: &str) -> bool {
    name == CONCEPT_CONCEPT_NAME || name == META_CONCEPT_NAME || parse_level_slice(name).is_some() || name == "self"
}

pub(crate) fn valid_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !crate::formula::is_keyword(name)
}
