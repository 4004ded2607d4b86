//! Process lines: a shared core plus per-variant deltas, abstraction cuts
//! and variant-vs-core diffs.
//!
//! Variants are compared by [`IdentityKey`], so independently authored
//! variants line up as long as kind and normalized name agree. Every delta
//! records enough to rebuild its variant exactly, ids and spelling included.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Deserializer, Serialize};

use crate::delta::{key_map, set_differences, ProcessDelta};
use crate::error::{Error, Result};
use crate::model::{
    identity_key, AttributeKind, AttributeValue, CharacteristicValue, Edge, IdentityKey, KeyEdge, MetaModel,
    MilestoneInfo, ObjectId, Priority, ProcessModel, ProcessObject,
};

/// Id given to the core model of every line.
pub const CORE_ID: &str = "core";

/// A process object with its structural references expressed as keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineObject {
    pub key: IdentityKey,
    pub id: ObjectId,
    pub name: String,
    pub priority: Priority,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<AttributeKind, AttributeValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<IdentityKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<IdentityKey>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub milestone: Option<MilestoneInfo>,
}

/// Field-level differences of a variant's object against the core's.
/// Absent fields are inherited; `null` clears an optional field.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectPatch {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<ObjectId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<Priority>,
    /// `None` entries remove the attribute.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<AttributeKind, Option<AttributeValue>>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "double_option")]
    pub parent: Option<Option<IdentityKey>>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "double_option")]
    pub container: Option<Option<IdentityKey>>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "double_option")]
    pub milestone: Option<Option<MilestoneInfo>>,
}

fn double_option<'de, D, T>(deserializer: D) -> std::result::Result<Option<Option<T>>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    Option::<T>::deserialize(deserializer).map(Some)
}

impl ObjectPatch {
    /// Patch turning `base` into `target`; `None` when they agree.
    pub fn between(base: &LineObject, target: &LineObject) -> Option<ObjectPatch> {
        fn changed<T: PartialEq + Clone>(base: &T, target: &T) -> Option<T> {
            (base != target).then(|| target.clone())
        }
        let mut attributes = BTreeMap::new();
        for (kind, value) in &target.attributes {
            if base.attributes.get(kind) != Some(value) {
                attributes.insert(*kind, Some(value.clone()));
            }
        }
        for kind in base.attributes.keys() {
            if !target.attributes.contains_key(kind) {
                attributes.insert(*kind, None);
            }
        }
        let patch = ObjectPatch {
            id: changed(&base.id, &target.id),
            name: changed(&base.name, &target.name),
            priority: changed(&base.priority, &target.priority),
            attributes,
            parent: changed(&base.parent, &target.parent),
            container: changed(&base.container, &target.container),
            milestone: changed(&base.milestone, &target.milestone),
        };
        (patch != ObjectPatch::default()).then_some(patch)
    }

    pub fn apply(&self, object: &mut LineObject) {
        if let Some(id) = &self.id {
            object.id = id.clone();
        }
        if let Some(name) = &self.name {
            object.name = name.clone();
        }
        if let Some(priority) = self.priority {
            object.priority = priority;
        }
        for (kind, value) in &self.attributes {
            match value {
                Some(value) => object.attributes.insert(*kind, value.clone()),
                None => object.attributes.remove(kind),
            };
        }
        if let Some(parent) = &self.parent {
            object.parent = parent.clone();
        }
        if let Some(container) = &self.container {
            object.container = container.clone();
        }
        if let Some(milestone) = &self.milestone {
            object.milestone = milestone.clone();
        }
    }
}

/// Model-level data of a variant that is not part of the object graph.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantHeader {
    pub id: String,
    pub abstraction_index: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub characteristics: BTreeMap<String, CharacteristicValue>,
    pub meta_model: MetaModel,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinement_links: Vec<String>,
}

impl VariantHeader {
    fn of(model: &ProcessModel) -> Self {
        VariantHeader {
            id: model.id.clone(),
            abstraction_index: model.abstraction_index,
            characteristics: model.characteristics.clone(),
            meta_model: model.meta_model.clone(),
            refinement_links: model.refinement_links.clone(),
        }
    }
}

/// A model viewed through identity keys.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KeyedModel {
    pub objects: BTreeMap<IdentityKey, LineObject>,
    pub edges: BTreeSet<KeyEdge>,
}

impl KeyedModel {
    /// Fails when two objects share a key or an object has an empty name.
    pub fn of(model: &ProcessModel) -> Result<Self> {
        let mut keys = BTreeMap::new();
        for object in model.objects.values() {
            let key = identity_key(object)?;
            if keys.insert(key.clone(), object.id.clone()).is_some() {
                return Err(Error::Duplicate { what: "identity key", name: format!("{key} in model `{}`", model.id) });
            }
        }
        let key_of = |id: &ObjectId| -> Result<IdentityKey> {
            model.key_of(id).ok_or_else(|| Error::NotFound { what: "object", name: id.to_string() })
        };
        let mut objects = BTreeMap::new();
        for object in model.objects.values() {
            let key = identity_key(object)?;
            let line_object = LineObject {
                key: key.clone(),
                id: object.id.clone(),
                name: object.name.clone(),
                priority: object.priority,
                attributes: object.attributes.clone(),
                parent: object.parent.as_ref().map(key_of).transpose()?,
                container: model.containment.get(&object.id).map(key_of).transpose()?,
                milestone: object.milestone.clone(),
            };
            objects.insert(key, line_object);
        }
        let edges =
            model.edges.iter().map(|e| Ok(Edge::new(key_of(&e.from)?, key_of(&e.to)?))).collect::<Result<_>>()?;
        Ok(KeyedModel { objects, edges })
    }

    fn into_model(self, header: VariantHeader) -> Result<ProcessModel> {
        let id_of = |key: &IdentityKey| -> Result<ObjectId> {
            self.objects
                .get(key)
                .map(|o| o.id.clone())
                .ok_or_else(|| Error::NotFound { what: "object", name: key.to_string() })
        };
        let mut model = ProcessModel::new(header.id, header.abstraction_index, header.meta_model);
        model.characteristics = header.characteristics;
        model.refinement_links = header.refinement_links;
        for object in self.objects.values() {
            if let Some(container) = &object.container {
                model.containment.insert(object.id.clone(), id_of(container)?);
            }
            model.insert(ProcessObject {
                id: object.id.clone(),
                kind: object.key.kind,
                name: object.name.clone(),
                priority: object.priority,
                attributes: object.attributes.clone(),
                parent: object.parent.as_ref().map(id_of).transpose()?,
                milestone: object.milestone.clone(),
            });
        }
        for edge in &self.edges {
            model.edges.insert(Edge::new(id_of(&edge.from)?, id_of(&edge.to)?));
        }
        Ok(model)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantDelta {
    pub variant_id: String,
    pub header: VariantHeader,
    #[serde(default)]
    pub added_objects: Vec<LineObject>,
    #[serde(default)]
    pub removed_object_keys: BTreeSet<IdentityKey>,
    #[serde(default)]
    pub added_edges: BTreeSet<KeyEdge>,
    #[serde(default)]
    pub removed_edges: BTreeSet<KeyEdge>,
    #[serde(default, with = "key_map")]
    pub attribute_overrides: BTreeMap<IdentityKey, ObjectPatch>,
}

impl VariantDelta {
    /// True when the variant's object graph equals the core's.
    pub fn is_empty(&self) -> bool {
        self.added_objects.is_empty()
            && self.removed_object_keys.is_empty()
            && self.added_edges.is_empty()
            && self.removed_edges.is_empty()
            && self.attribute_overrides.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessLine {
    pub core: ProcessModel,
    /// Variant ids in ingestion order.
    pub variants: Vec<String>,
    pub deltas: BTreeMap<String, VariantDelta>,
    pub abstraction_indices: BTreeMap<String, u32>,
}

/// Builds the line for `variants`: the core holds every object and edge
/// whose key occurs in all of them, with field values from the first.
pub fn build_process_line(variants: &[ProcessModel]) -> Result<ProcessLine> {
    let (first, _) = variants.split_first().ok_or(Error::Empty("variant list"))?;
    let mut seen = BTreeSet::new();
    for variant in variants {
        if !seen.insert(variant.id.as_str()) {
            return Err(Error::Duplicate { what: "variant id", name: variant.id.clone() });
        }
        variant.ensure_valid()?;
    }
    let keyed: Vec<KeyedModel> = variants.iter().map(KeyedModel::of).collect::<Result<_>>()?;

    let mut core_keys: BTreeSet<IdentityKey> = keyed[0].objects.keys().cloned().collect();
    let mut core_edges = keyed[0].edges.clone();
    for other in &keyed[1..] {
        core_keys.retain(|k| other.objects.contains_key(k));
        core_edges.retain(|e| other.edges.contains(e));
    }

    let core_objects: BTreeMap<IdentityKey, LineObject> = core_keys
        .iter()
        .map(|key| {
            let mut object = keyed[0].objects[key].clone();
            object.parent = object.parent.filter(|p| core_keys.contains(p));
            object.container = object.container.filter(|c| core_keys.contains(c));
            (key.clone(), object)
        })
        .collect();
    let core = KeyedModel { objects: core_objects, edges: core_edges };

    let mut deltas = BTreeMap::new();
    for (variant, keyed) in variants.iter().zip(&keyed) {
        deltas.insert(variant.id.clone(), delta_against(&core, variant, keyed));
    }

    let mut core_header = VariantHeader::of(first);
    core_header.id = CORE_ID.to_owned();
    let core = core.into_model(core_header)?;

    Ok(ProcessLine {
        core,
        variants: variants.iter().map(|v| v.id.clone()).collect(),
        abstraction_indices: variants.iter().map(|v| (v.id.clone(), v.abstraction_index)).collect(),
        deltas,
    })
}

fn delta_against(core: &KeyedModel, variant: &ProcessModel, keyed: &KeyedModel) -> VariantDelta {
    let added_objects =
        keyed.objects.iter().filter(|(k, _)| !core.objects.contains_key(*k)).map(|(_, o)| o.clone()).collect();
    let removed_object_keys = core.objects.keys().filter(|k| !keyed.objects.contains_key(*k)).cloned().collect();
    let (removed_edges, added_edges) = set_differences(&core.edges, &keyed.edges);
    let attribute_overrides = core
        .objects
        .iter()
        .filter_map(|(key, base)| {
            let target = keyed.objects.get(key)?;
            Some((key.clone(), ObjectPatch::between(base, target)?))
        })
        .collect();
    VariantDelta {
        variant_id: variant.id.clone(),
        header: VariantHeader::of(variant),
        added_objects,
        removed_object_keys,
        added_edges,
        removed_edges,
        attribute_overrides,
    }
}

impl ProcessLine {
    pub fn is_empty(&self) -> bool {
        self.variants.is_empty()
    }

    pub fn delta(&self, variant_id: &str) -> Result<&VariantDelta> {
        self.deltas.get(variant_id).ok_or_else(|| Error::NotFound { what: "variant", name: variant_id.to_owned() })
    }
}

pub fn reconstruct_variant(line: &ProcessLine, variant_id: &str) -> Result<ProcessModel> {
    let delta = line.delta(variant_id)?;
    let mut keyed = KeyedModel::of(&line.core)?;
    for key in &delta.removed_object_keys {
        keyed.objects.remove(key);
    }
    for (key, patch) in &delta.attribute_overrides {
        let object =
            keyed.objects.get_mut(key).ok_or_else(|| Error::NotFound { what: "core object", name: key.to_string() })?;
        patch.apply(object);
    }
    for object in &delta.added_objects {
        keyed.objects.insert(object.key.clone(), object.clone());
    }
    keyed.edges.retain(|e| !delta.removed_edges.contains(e));
    keyed.edges.extend(delta.added_edges.iter().cloned());
    keyed.into_model(delta.header.clone())
}

/// Variants of a line at one abstraction level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CutProcessLine {
    pub requested_level: u32,
    pub selected_level: u32,
    pub members: Vec<String>,
}

impl CutProcessLine {
    pub fn contains(&self, variant_id: &str) -> bool {
        self.members.iter().any(|m| m == variant_id)
    }
}

/// Variants at `level`; failing that, those at the nearest level below it;
/// failing that (every variant is more detailed), the most abstract level
/// present.
pub fn cut_at_abstraction(line: &ProcessLine, level: u32) -> Result<CutProcessLine> {
    if level == 0 {
        return Err(Error::InvalidLevel(level));
    }
    if line.is_empty() {
        return Err(Error::Empty("process line"));
    }
    let levels: BTreeSet<u32> = line.abstraction_indices.values().copied().collect();
    let selected_level =
        levels.range(..=level).next_back().or_else(|| levels.first()).copied().expect("non-empty line has levels");
    let members =
        line.variants.iter().filter(|v| line.abstraction_indices.get(*v) == Some(&selected_level)).cloned().collect();
    Ok(CutProcessLine { requested_level: level, selected_level, members })
}

/// What distinguishes `variant_id` from the line's core.
pub fn diff_to_core(line: &ProcessLine, variant_id: &str) -> Result<ProcessDelta> {
    let delta = line.delta(variant_id)?;
    Ok(ProcessDelta {
        missing_objects: delta.removed_object_keys.clone(),
        extra_objects: delta.added_objects.iter().map(|o| o.key.clone()).collect(),
        missing_edges: delta.removed_edges.clone(),
        extra_edges: delta.added_edges.clone(),
        attribute_overrides: delta.attribute_overrides.clone(),
        ..ProcessDelta::default()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MetaModel, ProcessObject};

    fn variant(id: &str, level: u32, tasks: &[&str]) -> ProcessModel {
        let mut model = ProcessModel::new(id, level, MetaModel::full());
        for (i, name) in tasks.iter().enumerate() {
            model.insert(ProcessObject::task(format!("{id}-t{i}"), *name));
        }
        for pair in tasks.windows(2) {
            let from = tasks.iter().position(|t| t == &pair[0]).unwrap();
            let to = tasks.iter().position(|t| t == &pair[1]).unwrap();
            model = model.with_edge(&format!("{id}-t{from}"), &format!("{id}-t{to}"));
        }
        model
    }

    #[test]
    fn identical_variants_share_everything() {
        let a = variant("a", 1, &["Spec", "Design", "Test"]);
        let mut b = a.clone();
        b.id = "b".into();
        let line = build_process_line(&[a.clone(), b]).unwrap();
        assert!(line.deltas.values().all(VariantDelta::is_empty));
        assert_eq!(KeyedModel::of(&line.core).unwrap(), KeyedModel::of(&a).unwrap());
    }

    #[test]
    fn disjoint_variants_have_an_empty_core() {
        let a = variant("a", 1, &["Spec", "Design"]);
        let b = variant("b", 1, &["Review", "Test"]);
        let line = build_process_line(&[a, b]).unwrap();
        assert!(line.core.objects.is_empty());
        assert_eq!(line.deltas["a"].added_objects.len(), 2);
        assert_eq!(line.deltas["b"].added_objects.len(), 2);
    }

    #[test]
    fn empty_and_duplicate_inputs_fail() {
        assert!(matches!(build_process_line(&[]), Err(Error::Empty(_))));
        let a = variant("a", 1, &["Spec"]);
        assert!(matches!(build_process_line(&[a.clone(), a]), Err(Error::Duplicate { what: "variant id", .. })));
    }

    #[test]
    fn round_trip_preserves_ids_and_spelling() {
        let a = variant("a", 1, &["Spec", "Design", "Test"]);
        let b = variant("b", 2, &["spec ", "DESIGN", "Integration"]);
        let line = build_process_line(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(reconstruct_variant(&line, "a").unwrap(), a);
        assert_eq!(reconstruct_variant(&line, "b").unwrap(), b);
        assert!(matches!(reconstruct_variant(&line, "zz"), Err(Error::NotFound { .. })));
    }

    #[test]
    fn cut_filters_by_level_with_fallback_below() {
        let line = build_process_line(&[
            variant("v1", 1, &["A"]),
            variant("v2", 2, &["A"]),
            variant("v3", 2, &["A"]),
            variant("v4", 3, &["A"]),
        ])
        .unwrap();
        let cut = cut_at_abstraction(&line, 2).unwrap();
        assert_eq!(cut.members, ["v2", "v3"]);
        let cut = cut_at_abstraction(&line, 5).unwrap();
        assert_eq!((cut.selected_level, cut.members.as_slice()), (3, &["v4".to_owned()][..]));
        assert!(matches!(cut_at_abstraction(&line, 0), Err(Error::InvalidLevel(0))));
    }

    #[test]
    fn cut_below_every_level_uses_the_most_abstract() {
        let line = build_process_line(&[variant("v1", 2, &["A"]), variant("v2", 3, &["A"])]).unwrap();
        let cut = cut_at_abstraction(&line, 1).unwrap();
        assert_eq!((cut.selected_level, cut.members.as_slice()), (2, &["v1".to_owned()][..]));
    }

    #[test]
    fn all_level_one() {
        let line = build_process_line(&[variant("v1", 1, &["A"]), variant("v2", 1, &["B"])]).unwrap();
        assert_eq!(cut_at_abstraction(&line, 1).unwrap().members, ["v1", "v2"]);
    }

    #[test]
    fn diff_marks_extra_task() {
        let a = variant("a", 1, &["Spec", "Test"]);
        let b = variant("b", 1, &["Spec", "Test", "Integration"]);
        let line = build_process_line(&[a, b]).unwrap();
        assert!(diff_to_core(&line, "a").unwrap().is_empty());
        let delta = diff_to_core(&line, "b").unwrap();
        assert_eq!(delta.extra_objects, BTreeSet::from([IdentityKey::task("Integration")]));
        assert!(delta.missing_objects.is_empty());
        assert!(matches!(diff_to_core(&line, "zz"), Err(Error::NotFound { .. })));
    }

    #[test]
    fn duplicate_keys_within_a_variant_are_rejected() {
        let model = ProcessModel::new("a", 1, MetaModel::full())
            .with_object(ProcessObject::task("x", "Review"))
            .with_object(ProcessObject::task("y", " review"));
        assert!(matches!(build_process_line(&[model]), Err(Error::Duplicate { what: "identity key", .. })));
    }

    #[test]
    fn patches_survive_json() {
        let patch = ObjectPatch {
            parent: Some(None),
            container: Some(Some(IdentityKey::phase("Design"))),
            attributes: BTreeMap::from([(AttributeKind::Roles, None)]),
            ..ObjectPatch::default()
        };
        let json = serde_json::to_string(&patch).unwrap();
        assert_eq!(serde_json::from_str::<ObjectPatch>(&json).unwrap(), patch);
    }
}
