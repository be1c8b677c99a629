use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{words, DifferentiaConstraint, NodeId, Schema, SchemaError};

/// Phrases a node's gloss fails to mention.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub node: NodeId,
    pub missing: Vec<MissingPhrase>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingPhrase {
    pub constraint: DifferentiaConstraint,
    pub phrase: String,
}

impl AlignmentReport {
    pub fn is_aligned(&self) -> bool {
        self.missing.is_empty()
    }
}

impl Schema {
    /// Checks that the gloss of `id` mentions, case-insensitively, the phrase
    /// of every constraint on its root path.
    pub fn check_gloss_alignment(&self, id: &str) -> Result<AlignmentReport, SchemaError> {
        let node = self.node(id).ok_or_else(|| SchemaError::UnknownNode(id.to_string()))?;
        let binding = node
            .binding
            .as_ref()
            .ok_or_else(|| SchemaError::NoBinding(id.to_string()))?;
        let gloss = binding.gloss.to_lowercase();
        let mut seen = BTreeSet::new();
        let mut missing = vec![];
        for c in self.cumulative_constraints(id) {
            if !seen.insert(c.clone()) {
                continue;
            }
            let phrase = match self.property(&c.property) {
                Some(p) => p.phrase(&c.value),
                None => continue,
            };
            if !gloss.contains(&phrase.to_lowercase()) {
                missing.push(MissingPhrase { constraint: c, phrase });
            }
        }
        Ok(AlignmentReport {
            node: id.to_string(),
            missing,
        })
    }

    /// The label of `id` in `language`. A binding in that language wins;
    /// otherwise the label is the nearest bound ancestor's lemma followed by
    /// the phrases of every differentia below that ancestor, e.g.
    /// "stringed instrument with thirteen taut strings".
    pub fn synthesize_label(&self, id: &str, language: &str) -> Result<String, SchemaError> {
        let path = match self.root_path(id) {
            Some(p) => p,
            None if self.node(id).is_some() => vec![id.to_string()],
            None => return Err(SchemaError::UnknownNode(id.to_string())),
        };
        let bound_in = |n: &str| {
            self.node(n)
                .and_then(|n| n.binding.as_ref())
                .filter(|b| b.language == language)
                .map(|b| b.lemma.clone())
        };
        if let Some(lemma) = bound_in(id) {
            return Ok(lemma);
        }
        let anchor = path.iter().rposition(|n| bound_in(n).is_some());
        let (base, below) = match anchor {
            Some(i) => (bound_in(&path[i]).expect("anchor is bound"), &path[i + 1..]),
            None => (words(&path[0]), &path[1..]),
        };
        let phrases: Vec<String> = below
            .iter()
            .filter_map(|n| self.node(n))
            .flat_map(|n| {
                let mut cs = n.differentiae.clone();
                cs.sort();
                cs.into_iter()
            })
            .filter_map(|c| self.property(&c.property).map(|p| p.phrase(&c.value)))
            .collect();
        Ok(match phrases.split_first() {
            None => base,
            Some((first, rest)) => {
                let mut label = format!("{base} with {first}");
                for p in rest {
                    label.push_str(" and ");
                    label.push_str(p);
                }
                label
            }
        })
    }
}
