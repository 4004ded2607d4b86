//! Differences between two process models, shared by the variant-vs-core
//! view of a process line and the prescriptive-vs-performed analysis.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::line::ObjectPatch;
use crate::model::{IdentityKey, KeyEdge};
use crate::reflection::RelationConflict;

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessDelta {
    /// In the reference (core or prescriptive) model only.
    #[serde(default)]
    pub missing_objects: BTreeSet<IdentityKey>,
    /// In the compared (variant or performed) model only.
    #[serde(default)]
    pub extra_objects: BTreeSet<IdentityKey>,
    #[serde(default)]
    pub missing_edges: BTreeSet<KeyEdge>,
    #[serde(default)]
    pub extra_edges: BTreeSet<KeyEdge>,
    /// Objects present on both sides whose fields differ.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty", with = "key_map")]
    pub attribute_overrides: BTreeMap<IdentityKey, ObjectPatch>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub relation_conflicts: Vec<RelationConflict>,
    /// Activity -> number of distinct cases that completed it.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty", with = "key_map")]
    pub frequency: BTreeMap<IdentityKey, usize>,
    #[serde(default)]
    pub case_count: usize,
}

impl ProcessDelta {
    pub fn objects_empty(&self) -> bool {
        self.missing_objects.is_empty() && self.extra_objects.is_empty()
    }

    pub fn edges_empty(&self) -> bool {
        self.missing_edges.is_empty() && self.extra_edges.is_empty()
    }

    /// No structural difference at all; frequency support is ignored.
    pub fn is_empty(&self) -> bool {
        self.objects_empty()
            && self.edges_empty()
            && self.attribute_overrides.is_empty()
            && self.relation_conflicts.is_empty()
    }

    /// Share of cases supporting `key`, in `[0, 1]`.
    pub fn support(&self, key: &IdentityKey) -> f64 {
        if self.case_count == 0 {
            return 0.0;
        }
        self.frequency.get(key).copied().unwrap_or(0) as f64 / self.case_count as f64
    }
}

/// Set differences `left − right` and `right − left`.
pub(crate) fn set_differences<T: Ord + Clone>(left: &BTreeSet<T>, right: &BTreeSet<T>) -> (BTreeSet<T>, BTreeSet<T>) {
    (left.difference(right).cloned().collect(), right.difference(left).cloned().collect())
}

/// JSON maps need string keys; identity-keyed maps travel as entry lists.
pub(crate) mod key_map {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry<V> {
        key: IdentityKey,
        value: V,
    }

    pub fn serialize<S: Serializer, V: Serialize>(
        map: &BTreeMap<IdentityKey, V>,
        serializer: S,
    ) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(map.iter().map(|(key, value)| Entry { key: key.clone(), value }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>, V: Deserialize<'de>>(
        deserializer: D,
    ) -> Result<BTreeMap<IdentityKey, V>, D::Error> {
        let entries = Vec::<Entry<V>>::deserialize(deserializer)?;
        Ok(entries.into_iter().map(|e| (e.key, e.value)).collect())
    }
}
