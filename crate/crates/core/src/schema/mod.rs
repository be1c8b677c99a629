//! Genus-differentia classification schemas.
//!
//! A [`Schema`] is a tree of [`ClassificationNode`]s. Each non-root node is
//! distinguished from its siblings by a set of equality constraints over
//! declared visual properties (its differentiae); the conjunction of all
//! constraints on its root path is its genus. Drafts are edited freely, checked
//! by [`Schema::validate`], and turned into an immutable controlled vocabulary
//! by [`Schema::freeze`].

mod label;
mod registry;
mod resolve;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use label::AlignmentReport;
pub use registry::{ConceptId, ConceptRegistry};
pub use resolve::{FrontierEntry, PropertyAssertionSet, ResolutionResult, ResolutionStatus};
pub use validate::{Canon, Finding, Locus, Severity, ValidationReport};

pub type NodeId = String;
pub type PropertyId = String;

/// Errors raised by schema authoring and resolution.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("schema is frozen")]
    FrozenSchema,
    #[error("schema is not frozen")]
    SchemaNotFrozen,
    #[error("property `{0}` is already declared")]
    DuplicateProperty(PropertyId),
    #[error("property `{0}` has an empty domain")]
    EmptyDomain(PropertyId),
    #[error("property `{property}` declares variant `{variant}` twice")]
    DuplicateVariant { property: PropertyId, variant: String },
    #[error("node `{0}` already exists")]
    DuplicateNode(NodeId),
    #[error("unknown parent node `{0}`")]
    UnknownParent(NodeId),
    #[error("unknown node `{0}`")]
    UnknownNode(NodeId),
    #[error("unknown property `{0}`")]
    UnknownProperty(PropertyId),
    #[error("value `{value}` is outside the domain of `{property}`")]
    ValueOutOfDomain { property: PropertyId, value: Value },
    #[error("node `{0}` has no lexical binding")]
    NoBinding(NodeId),
    #[error("lexical binding for `{0}` needs a non-empty lemma and gloss")]
    InvalidBinding(NodeId),
    #[error("`{0}` is not a valid identifier")]
    InvalidIdentifier(String),
    #[error("context profile name must not be empty")]
    InvalidContext,
    #[error("concept id must be a positive integer")]
    InvalidConceptId,
    #[error("node `{0}` already has a concept id")]
    AlreadyAssigned(NodeId),
    #[error("concept id {0} is already in use")]
    ConceptIdInUse(ConceptId),
    #[error("schema failed validation with {} error(s)", .0.errors().count())]
    ValidationFailed(ValidationReport),
}

/// A value of a visual property.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Symbol(String),
}

impl Value {
    pub fn symbol(s: impl Into<String>) -> Self {
        Value::Symbol(s.into())
    }

    /// Parses `text` according to the kind of `domain`.
    pub fn parse_for(domain: &Domain, text: &str) -> Option<Value> {
        match domain {
            Domain::Integer { .. } => text.trim().parse().ok().map(Value::Int),
            Domain::Enum { .. } | Domain::Boolean => Some(Value::Symbol(text.trim().to_string())),
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Symbol(s) => f.write_str(s),
        }
    }
}

impl From<i64> for Value {
    fn from(n: i64) -> Self {
        Value::Int(n)
    }
}

impl From<&str> for Value {
    fn from(s: &str) -> Self {
        Value::Symbol(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PropertyKind {
    Enum,
    Integer,
    Boolean,
}

pub const PRESENT: &str = "present";
pub const ABSENT: &str = "absent";

/// The value set of a property. Booleans are the two symbols `present` and
/// `absent`, so absence is assertable evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Domain {
    Enum { variants: Vec<String> },
    Integer { min: i64, max: i64 },
    Boolean,
}

impl Domain {
    pub fn enumeration<I, S>(variants: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Domain::Enum {
            variants: variants.into_iter().map(Into::into).collect(),
        }
    }

    pub fn kind(&self) -> PropertyKind {
        match self {
            Domain::Enum { .. } => PropertyKind::Enum,
            Domain::Integer { .. } => PropertyKind::Integer,
            Domain::Boolean => PropertyKind::Boolean,
        }
    }

    pub fn contains(&self, value: &Value) -> bool {
        match (self, value) {
            (Domain::Enum { variants }, Value::Symbol(s)) => variants.iter().any(|v| v == s),
            (Domain::Integer { min, max }, Value::Int(n)) => min <= n && n <= max,
            (Domain::Boolean, Value::Symbol(s)) => s == PRESENT || s == ABSENT,
            _ => false,
        }
    }

    /// Number of values in the domain.
    pub fn size(&self) -> u64 {
        match self {
            Domain::Enum { variants } => variants.len() as u64,
            Domain::Integer { min, max } if min <= max => (*max as i128 - *min as i128 + 1) as u64,
            Domain::Integer { .. } => 0,
            Domain::Boolean => 2,
        }
    }

    /// The `index`-th value in domain order.
    pub fn nth(&self, index: u64) -> Option<Value> {
        match self {
            Domain::Enum { variants } => variants.get(index as usize).cloned().map(Value::Symbol),
            Domain::Integer { min, .. } if index < self.size() => {
                Some(Value::Int((*min as i128 + index as i128) as i64))
            }
            Domain::Integer { .. } => None,
            Domain::Boolean => match index {
                0 => Some(Value::symbol(PRESENT)),
                1 => Some(Value::symbol(ABSENT)),
                _ => None,
            },
        }
    }

    /// Position of `value` in domain order.
    pub fn index_of(&self, value: &Value) -> Option<u64> {
        if !self.contains(value) {
            return None;
        }
        match (self, value) {
            (Domain::Enum { variants }, Value::Symbol(s)) => variants.iter().position(|v| v == s).map(|i| i as u64),
            (Domain::Integer { min, .. }, Value::Int(n)) => Some((*n as i128 - *min as i128) as u64),
            (Domain::Boolean, Value::Symbol(s)) => Some(if s == PRESENT { 0 } else { 1 }),
            _ => None,
        }
    }
}

/// A declared visual property together with the phrases used to verbalize
/// its values in glosses and synthesized labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyDef {
    pub id: PropertyId,
    pub domain: Domain,
    pub phrases: BTreeMap<Value, String>,
}

impl PropertyDef {
    pub fn new(id: impl Into<String>, domain: Domain) -> Self {
        PropertyDef {
            id: id.into(),
            domain,
            phrases: BTreeMap::new(),
        }
    }

    pub fn with_phrase(mut self, value: impl Into<Value>, phrase: impl Into<String>) -> Self {
        self.phrases.insert(value.into(), phrase.into());
        self
    }

    pub fn kind(&self) -> PropertyKind {
        self.domain.kind()
    }

    /// Phrase for `value`; values without a declared phrase fall back to
    /// "<property words> <value words>".
    pub fn phrase(&self, value: &Value) -> String {
        match self.phrases.get(value) {
            Some(p) => p.clone(),
            None => format!("{} {}", words(&self.id), words(&value.to_string())),
        }
    }
}

fn check_ident(s: &str) -> Result<(), SchemaError> {
    if crate::dsl::is_identifier(s) {
        Ok(())
    } else {
        Err(SchemaError::InvalidIdentifier(s.to_string()))
    }
}

pub(crate) fn words(ident: &str) -> String {
    ident.replace('_', " ")
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DifferentiaConstraint {
    pub property: PropertyId,
    pub value: Value,
}

impl DifferentiaConstraint {
    pub fn new(property: impl Into<String>, value: impl Into<Value>) -> Self {
        DifferentiaConstraint {
            property: property.into(),
            value: value.into(),
        }
    }
}

impl fmt::Display for DifferentiaConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.property, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexicalBinding {
    pub lemma: String,
    pub language: String,
    pub gloss: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
}

impl LexicalBinding {
    pub fn new(lemma: impl Into<String>, language: impl Into<String>, gloss: impl Into<String>) -> Self {
        LexicalBinding {
            lemma: lemma.into(),
            language: language.into(),
            gloss: gloss.into(),
            synonyms: Vec::new(),
        }
    }

    pub fn with_synonyms<I, S>(mut self, synonyms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.synonyms = synonyms.into_iter().map(Into::into).collect();
        self
    }

    fn is_well_formed(&self) -> bool {
        !self.lemma.trim().is_empty() && !self.gloss.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationNode {
    pub id: NodeId,
    pub parent: Option<NodeId>,
    pub differentiae: Vec<DifferentiaConstraint>,
    pub binding: Option<LexicalBinding>,
    pub concept_id: Option<ConceptId>,
}

/// The context and purpose a schema is made for. Every schema is relative to
/// exactly one profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextProfile {
    pub name: String,
    pub purpose: String,
    pub language: String,
}

impl ContextProfile {
    pub fn new(name: impl Into<String>, purpose: impl Into<String>, language: impl Into<String>) -> Self {
        ContextProfile {
            name: name.into(),
            purpose: purpose.into(),
            language: language.into(),
        }
    }
}

/// Content hash of a schema's canonical text, rendered as `sha256:<hex>`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VersionStamp(pub String);

impl VersionStamp {
    pub fn of_text(text: &str) -> Self {
        let digest = Sha256::digest(text.as_bytes());
        VersionStamp(format!("sha256:{}", hex::encode(digest)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for VersionStamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    id: String,
    context: ContextProfile,
    registry_base: u64,
    properties: BTreeMap<PropertyId, PropertyDef>,
    nodes: BTreeMap<NodeId, ClassificationNode>,
    children: BTreeMap<NodeId, BTreeSet<NodeId>>,
    stamp: Option<VersionStamp>,
}

impl Schema {
    pub fn new(id: impl Into<String>, context: ContextProfile, registry_base: u64) -> Result<Self, SchemaError> {
        if context.name.trim().is_empty() {
            return Err(SchemaError::InvalidContext);
        }
        if registry_base == 0 {
            return Err(SchemaError::InvalidConceptId);
        }
        let id = id.into();
        check_ident(&id)?;
        Ok(Schema {
            id,
            context,
            registry_base,
            properties: BTreeMap::new(),
            nodes: BTreeMap::new(),
            children: BTreeMap::new(),
            stamp: None,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn context(&self) -> &ContextProfile {
        &self.context
    }

    pub fn registry_base(&self) -> u64 {
        self.registry_base
    }

    pub fn is_frozen(&self) -> bool {
        self.stamp.is_some()
    }

    pub fn properties(&self) -> impl Iterator<Item = &PropertyDef> {
        self.properties.values()
    }

    pub fn property(&self, id: &str) -> Option<&PropertyDef> {
        self.properties.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ClassificationNode> {
        self.nodes.values()
    }

    pub fn node(&self, id: &str) -> Option<&ClassificationNode> {
        self.nodes.get(id)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Children of `id`, sorted by node id.
    pub fn children(&self, id: &str) -> impl Iterator<Item = &ClassificationNode> {
        self.children
            .get(id)
            .into_iter()
            .flatten()
            .filter_map(|c| self.nodes.get(c))
    }

    pub fn roots(&self) -> impl Iterator<Item = &ClassificationNode> {
        self.nodes.values().filter(|n| n.parent.is_none())
    }

    /// The unique root, if there is exactly one.
    pub fn root(&self) -> Option<&ClassificationNode> {
        let mut roots = self.roots();
        match (roots.next(), roots.next()) {
            (Some(r), None) => Some(r),
            _ => None,
        }
    }

    /// Node ids from the root down to `id`, or `None` when `id` is unknown or
    /// its ancestry does not reach a root (dangling parent or cycle).
    pub fn root_path(&self, id: &str) -> Option<Vec<NodeId>> {
        let mut path = vec![];
        let mut seen = BTreeSet::new();
        let mut cur = self.nodes.get(id)?;
        loop {
            if !seen.insert(cur.id.as_str()) {
                return None;
            }
            path.push(cur.id.clone());
            match &cur.parent {
                None => break,
                Some(p) => cur = self.nodes.get(p)?,
            }
        }
        path.reverse();
        Some(path)
    }

    /// Depth of `id` below the root (root = 0).
    pub fn depth(&self, id: &str) -> Option<usize> {
        self.root_path(id).map(|p| p.len() - 1)
    }

    /// Nodes reachable from the root in pre-order, children by id.
    pub fn preorder(&self) -> Vec<&ClassificationNode> {
        let mut out = vec![];
        let mut stack: Vec<&ClassificationNode> = self.roots().collect();
        stack.reverse();
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if !seen.insert(n.id.as_str()) {
                continue;
            }
            out.push(n);
            let mut kids: Vec<_> = self.children(&n.id).collect();
            kids.reverse();
            stack.extend(kids);
        }
        out
    }

    /// All constraints along the root path of `id`, top-down.
    pub fn cumulative_constraints(&self, id: &str) -> Vec<DifferentiaConstraint> {
        self.root_path(id)
            .unwrap_or_default()
            .iter()
            .filter_map(|n| self.nodes.get(n))
            .flat_map(|n| n.differentiae.iter().cloned())
            .collect()
    }

    pub fn version_stamp(&self) -> Option<&VersionStamp> {
        self.stamp.as_ref()
    }

    /// Hash of the current canonical text, frozen or not.
    pub fn content_stamp(&self) -> VersionStamp {
        VersionStamp::of_text(&self.canonical_text())
    }

    /// Canonical schema text; the input of the content hash.
    pub fn canonical_text(&self) -> String {
        crate::dsl::serialize(&crate::dsl::document_from_schema(self))
    }

    fn ensure_draft(&self) -> Result<(), SchemaError> {
        if self.is_frozen() {
            Err(SchemaError::FrozenSchema)
        } else {
            Ok(())
        }
    }

    pub fn add_property(&mut self, def: PropertyDef) -> Result<(), SchemaError> {
        self.ensure_draft()?;
        check_ident(&def.id)?;
        if self.properties.contains_key(&def.id) {
            return Err(SchemaError::DuplicateProperty(def.id));
        }
        if def.domain.size() == 0 {
            return Err(SchemaError::EmptyDomain(def.id));
        }
        if let Domain::Enum { variants } = &def.domain {
            let mut seen = BTreeSet::new();
            for v in variants {
                check_ident(v)?;
                if !seen.insert(v) {
                    return Err(SchemaError::DuplicateVariant {
                        property: def.id.clone(),
                        variant: v.clone(),
                    });
                }
            }
        }
        if let Some(v) = def.phrases.keys().find(|v| !def.domain.contains(v)) {
            return Err(SchemaError::ValueOutOfDomain {
                property: def.id.clone(),
                value: v.clone(),
            });
        }
        self.properties.insert(def.id.clone(), def);
        Ok(())
    }

    fn check_constraints(&self, differentiae: &[DifferentiaConstraint]) -> Result<(), SchemaError> {
        for c in differentiae {
            let prop = self
                .properties
                .get(&c.property)
                .ok_or_else(|| SchemaError::UnknownProperty(c.property.clone()))?;
            if !prop.domain.contains(&c.value) {
                return Err(SchemaError::ValueOutOfDomain {
                    property: c.property.clone(),
                    value: c.value.clone(),
                });
            }
        }
        Ok(())
    }

    fn check_binding(id: &str, binding: &Option<LexicalBinding>) -> Result<(), SchemaError> {
        match binding {
            Some(b) if !b.is_well_formed() => Err(SchemaError::InvalidBinding(id.to_string())),
            _ => Ok(()),
        }
    }

    fn insert(&mut self, node: ClassificationNode) {
        if let Some(p) = &node.parent {
            self.children.entry(p.clone()).or_default().insert(node.id.clone());
        }
        self.nodes.insert(node.id.clone(), node);
    }

    /// Adds a parentless node. More than one root is representable in a draft
    /// and reported by validation.
    pub fn add_root(&mut self, id: impl Into<String>, binding: Option<LexicalBinding>) -> Result<NodeId, SchemaError> {
        self.ensure_draft()?;
        let id = id.into();
        check_ident(&id)?;
        if self.nodes.contains_key(&id) {
            return Err(SchemaError::DuplicateNode(id));
        }
        Self::check_binding(&id, &binding)?;
        self.insert(ClassificationNode {
            id: id.clone(),
            parent: None,
            differentiae: vec![],
            binding,
            concept_id: None,
        });
        Ok(id)
    }

    /// Appends a child under `parent`. No canon is checked here.
    pub fn add_node(
        &mut self,
        parent: &str,
        id: impl Into<String>,
        differentiae: Vec<DifferentiaConstraint>,
        binding: Option<LexicalBinding>,
    ) -> Result<NodeId, SchemaError> {
        self.ensure_draft()?;
        let id = id.into();
        if !self.nodes.contains_key(parent) {
            return Err(SchemaError::UnknownParent(parent.to_string()));
        }
        check_ident(&id)?;
        if self.nodes.contains_key(&id) {
            return Err(SchemaError::DuplicateNode(id));
        }
        self.check_constraints(&differentiae)?;
        Self::check_binding(&id, &binding)?;
        self.insert(ClassificationNode {
            id: id.clone(),
            parent: Some(parent.to_string()),
            differentiae,
            binding,
            concept_id: None,
        });
        Ok(id)
    }

    fn node_mut(&mut self, id: &str) -> Result<&mut ClassificationNode, SchemaError> {
        self.ensure_draft()?;
        self.nodes
            .get_mut(id)
            .ok_or_else(|| SchemaError::UnknownNode(id.to_string()))
    }

    /// Moves `id` under `new_parent`. May introduce a cycle, which validation
    /// reports.
    pub fn reparent(&mut self, id: &str, new_parent: Option<&str>) -> Result<(), SchemaError> {
        self.ensure_draft()?;
        if let Some(p) = new_parent {
            if !self.nodes.contains_key(p) {
                return Err(SchemaError::UnknownParent(p.to_string()));
            }
        }
        let node = self.node_mut(id)?;
        let old = std::mem::replace(&mut node.parent, new_parent.map(str::to_string));
        if let Some(old) = old {
            if let Some(set) = self.children.get_mut(&old) {
                set.remove(id);
            }
        }
        if let Some(p) = new_parent {
            self.children.entry(p.to_string()).or_default().insert(id.to_string());
        }
        Ok(())
    }

    pub fn set_differentiae(&mut self, id: &str, differentiae: Vec<DifferentiaConstraint>) -> Result<(), SchemaError> {
        self.ensure_draft()?;
        self.check_constraints(&differentiae)?;
        self.node_mut(id)?.differentiae = differentiae;
        Ok(())
    }

    pub fn set_binding(&mut self, id: &str, binding: Option<LexicalBinding>) -> Result<(), SchemaError> {
        Self::check_binding(id, &binding)?;
        self.node_mut(id)?.binding = binding;
        Ok(())
    }

    /// Sets an explicit concept id on a draft node. Uniqueness is a canon
    /// checked by validation, not here.
    pub fn set_concept_id(&mut self, id: &str, concept: Option<ConceptId>) -> Result<(), SchemaError> {
        self.node_mut(id)?.concept_id = concept;
        Ok(())
    }

    /// Validates, allocates missing concept ids from the registry base in
    /// pre-order, and stamps the result. Freezing a frozen schema returns it
    /// unchanged.
    pub fn freeze(&self) -> Result<Schema, SchemaError> {
        if self.is_frozen() {
            return Ok(self.clone());
        }
        let report = self.validate();
        if report.has_errors() {
            return Err(SchemaError::ValidationFailed(report));
        }
        let mut frozen = self.clone();
        let mut registry = ConceptRegistry::new(self.registry_base)?;
        for node in self.nodes.values() {
            if let Some(cid) = node.concept_id {
                registry.assign(&node.id, cid)?;
            }
        }
        let order: Vec<NodeId> = self
            .preorder()
            .into_iter()
            .filter(|n| n.concept_id.is_none())
            .map(|n| n.id.clone())
            .collect();
        for id in order {
            let cid = registry.allocate(&id)?;
            frozen.nodes.get_mut(&id).expect("node exists").concept_id = Some(cid);
        }
        frozen.stamp = Some(frozen.content_stamp());
        Ok(frozen)
    }

    /// The label records carry for `id`: the bound lemma when the binding is
    /// in the schema's language, otherwise a synthesized phrase.
    pub fn canonical_label(&self, id: &str) -> Result<String, SchemaError> {
        self.synthesize_label(id, &self.context.language)
    }

    /// Looks up a node by its concept id.
    pub fn node_by_concept(&self, concept: ConceptId) -> Option<&ClassificationNode> {
        self.nodes.values().find(|n| n.concept_id == Some(concept))
    }
}
