use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::num::NonZeroU64;

use serde::{Deserialize, Serialize};

use super::{NodeId, SchemaError};

/// Language-independent concept identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConceptId(NonZeroU64);

impl ConceptId {
    pub fn new(value: u64) -> Result<Self, SchemaError> {
        NonZeroU64::new(value)
            .map(ConceptId)
            .ok_or(SchemaError::InvalidConceptId)
    }

    pub fn get(self) -> u64 {
        self.0.get()
    }
}

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Allocates concept ids in one namespace. Allocation walks upward from the
/// base and never hands out an id twice, even one that was assigned
/// explicitly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptRegistry {
    base: u64,
    cursor: u64,
    used: BTreeSet<u64>,
    assigned: BTreeMap<NodeId, ConceptId>,
}

impl ConceptRegistry {
    pub fn new(base: u64) -> Result<Self, SchemaError> {
        ConceptId::new(base)?;
        Ok(ConceptRegistry {
            base,
            cursor: base,
            used: BTreeSet::new(),
            assigned: BTreeMap::new(),
        })
    }

    pub fn base(&self) -> u64 {
        self.base
    }

    pub fn get(&self, node: &str) -> Option<ConceptId> {
        self.assigned.get(node).copied()
    }

    /// Records an explicit id for `node`.
    pub fn assign(&mut self, node: &str, id: ConceptId) -> Result<(), SchemaError> {
        if self.assigned.contains_key(node) {
            return Err(SchemaError::AlreadyAssigned(node.to_string()));
        }
        if !self.used.insert(id.get()) {
            return Err(SchemaError::ConceptIdInUse(id));
        }
        self.assigned.insert(node.to_string(), id);
        Ok(())
    }

    /// Hands out the smallest unused id at or above the cursor.
    pub fn allocate(&mut self, node: &str) -> Result<ConceptId, SchemaError> {
        if self.assigned.contains_key(node) {
            return Err(SchemaError::AlreadyAssigned(node.to_string()));
        }
        let mut candidate = self.cursor;
        while self.used.contains(&candidate) {
            candidate += 1;
        }
        let id = ConceptId::new(candidate)?;
        self.used.insert(candidate);
        self.cursor = candidate + 1;
        self.assigned.insert(node.to_string(), id);
        Ok(id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_allocation_from_base() {
        let mut r = ConceptRegistry::new(1_278_950).unwrap();
        let ids: Vec<u64> = ["a", "b", "c", "d", "e"]
            .iter()
            .map(|n| r.allocate(n).unwrap().get())
            .collect();
        assert_eq!(ids, vec![1_278_950, 1_278_951, 1_278_952, 1_278_953, 1_278_954]);
    }

    #[test]
    fn explicit_ids_are_respected_and_skipped() {
        let mut r = ConceptRegistry::new(1_278_950).unwrap();
        r.assign("guitar", ConceptId::new(1_278_956).unwrap()).unwrap();
        let ids: Vec<u64> = (0..8).map(|i| r.allocate(&format!("n{i}")).unwrap().get()).collect();
        assert!(!ids.contains(&1_278_956));
        assert_eq!(ids[6], 1_278_957);
        assert_eq!(r.get("guitar").unwrap().get(), 1_278_956);
    }

    #[test]
    fn second_allocation_for_same_node_fails() {
        let mut r = ConceptRegistry::new(5).unwrap();
        r.allocate("guitar").unwrap();
        assert_eq!(r.allocate("guitar"), Err(SchemaError::AlreadyAssigned("guitar".into())));
    }

    #[test]
    fn disjoint_bases_give_disjoint_ids() {
        let mut a = ConceptRegistry::new(100).unwrap();
        let mut b = ConceptRegistry::new(1_000).unwrap();
        let xs: BTreeSet<u64> = (0..50).map(|i| a.allocate(&i.to_string()).unwrap().get()).collect();
        let ys: BTreeSet<u64> = (0..50).map(|i| b.allocate(&i.to_string()).unwrap().get()).collect();
        assert!(xs.is_disjoint(&ys));
    }

    #[test]
    fn zero_is_not_a_concept_id() {
        assert_eq!(ConceptId::new(0), Err(SchemaError::InvalidConceptId));
        assert!(ConceptRegistry::new(0).is_err());
    }
}
