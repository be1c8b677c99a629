use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{ClassificationNode, DifferentiaConstraint, NodeId, PropertyId, Schema, SchemaError, Value};

/// Observed property values for one localized region. At most one value per
/// property, by construction.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PropertyAssertionSet(BTreeMap<PropertyId, Value>);

impl PropertyAssertionSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets `property` to `value`, returning the previous value.
    pub fn assert(&mut self, property: impl Into<String>, value: impl Into<Value>) -> Option<Value> {
        self.0.insert(property.into(), value.into())
    }

    pub fn retract(&mut self, property: &str) -> Option<Value> {
        self.0.remove(property)
    }

    pub fn get(&self, property: &str) -> Option<&Value> {
        self.0.get(property)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PropertyId, &Value)> {
        self.0.iter()
    }

    pub fn satisfies(&self, c: &DifferentiaConstraint) -> bool {
        self.0.get(&c.property) == Some(&c.value)
    }

    /// True if every assertion here also appears in `other`.
    pub fn is_subset_of(&self, other: &PropertyAssertionSet) -> bool {
        self.0.iter().all(|(k, v)| other.0.get(k) == Some(v))
    }
}

impl<K: Into<String>, V: Into<Value>> FromIterator<(K, V)> for PropertyAssertionSet {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        PropertyAssertionSet(iter.into_iter().map(|(k, v)| (k.into(), v.into())).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResolutionStatus {
    Leaf,
    Partial,
}

impl std::fmt::Display for ResolutionStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResolutionStatus::Leaf => "leaf",
            ResolutionStatus::Partial => "partial",
        })
    }
}

/// A child of the terminal node and the constraints the evidence does not yet
/// satisfy for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrontierEntry {
    pub child: NodeId,
    pub unsatisfied: Vec<DifferentiaConstraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolutionResult {
    pub path: Vec<NodeId>,
    pub terminal: NodeId,
    pub status: ResolutionStatus,
    pub unsatisfied_frontier: Vec<FrontierEntry>,
}

impl Schema {
    /// Checks that every assertion names a declared property and a value in
    /// its domain.
    pub fn check_assertions(&self, assertions: &PropertyAssertionSet) -> Result<(), SchemaError> {
        for (p, v) in assertions.iter() {
            let def = self
                .property(p)
                .ok_or_else(|| SchemaError::UnknownProperty(p.clone()))?;
            if !def.domain.contains(v) {
                return Err(SchemaError::ValueOutOfDomain {
                    property: p.clone(),
                    value: v.clone(),
                });
            }
        }
        Ok(())
    }

    /// Children of `id` whose differentiae are all satisfied.
    pub fn qualifying_children<'a>(
        &'a self,
        id: &str,
        assertions: &'a PropertyAssertionSet,
    ) -> impl Iterator<Item = &'a ClassificationNode> + 'a {
        self.children(id)
            .filter(move |c| c.differentiae.iter().all(|d| assertions.satisfies(d)))
    }

    /// Descends from the root, stepping into the child whose differentiae the
    /// evidence satisfies, until no child qualifies.
    pub fn resolve(&self, assertions: &PropertyAssertionSet) -> Result<ResolutionResult, SchemaError> {
        if !self.is_frozen() {
            return Err(SchemaError::SchemaNotFrozen);
        }
        self.check_assertions(assertions)?;
        let root = self.root().ok_or(SchemaError::SchemaNotFrozen)?;
        let mut path = vec![root.id.clone()];
        let mut cur = root;
        // The sibling canon leaves at most one qualifying child per step.
        while let Some(next) = self.qualifying_children(&cur.id, assertions).next() {
            path.push(next.id.clone());
            cur = next;
        }
        let unsatisfied_frontier: Vec<FrontierEntry> = self
            .children(&cur.id)
            .map(|c| FrontierEntry {
                child: c.id.clone(),
                unsatisfied: c
                    .differentiae
                    .iter()
                    .filter(|d| !assertions.satisfies(d))
                    .cloned()
                    .collect(),
            })
            .collect();
        let status = if unsatisfied_frontier.is_empty() {
            ResolutionStatus::Leaf
        } else {
            ResolutionStatus::Partial
        };
        Ok(ResolutionResult {
            path,
            terminal: cur.id.clone(),
            status,
            unsatisfied_frontier,
        })
    }
}
