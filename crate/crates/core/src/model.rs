//! Process domain types: objects, models, the attribute meta model and
//! cross-variant identity.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Process attributes a project may describe its process with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeKind {
    Milestones,
    Phases,
    PhasePrecondition,
    PhasePostcondition,
    DeliveryTime,
    DeliverableMaturity,
    Activities,
    ActivityPrecondition,
    ActivityPostcondition,
    ActivityPriority,
    Inputs,
    Outputs,
    SupportProcessInterfaces,
    Roles,
}

/// Shape of the value an attribute kind carries on an object.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueType {
    Text,
    Time,
    Maturity,
    Names,
}

impl AttributeKind {
    pub const ALL: [AttributeKind; 14] = [
        AttributeKind::Milestones,
        AttributeKind::Phases,
        AttributeKind::PhasePrecondition,
        AttributeKind::PhasePostcondition,
        AttributeKind::DeliveryTime,
        AttributeKind::DeliverableMaturity,
        AttributeKind::Activities,
        AttributeKind::ActivityPrecondition,
        AttributeKind::ActivityPostcondition,
        AttributeKind::ActivityPriority,
        AttributeKind::Inputs,
        AttributeKind::Outputs,
        AttributeKind::SupportProcessInterfaces,
        AttributeKind::Roles,
    ];

    /// Kinds every meta model keeps.
    pub const MANDATORY: [AttributeKind; 2] = [AttributeKind::Activities, AttributeKind::ActivityPriority];

    pub fn is_mandatory(self) -> bool {
        Self::MANDATORY.contains(&self)
    }

    /// `None` for structural kinds: their "values" are the objects and the
    /// priority field, not entries in an object's attribute map.
    pub fn value_type(self) -> Option<ValueType> {
        use AttributeKind::*;
        match self {
            Milestones | Phases | Activities | ActivityPriority => None,
            PhasePrecondition | PhasePostcondition | ActivityPrecondition | ActivityPostcondition => {
                Some(ValueType::Text)
            }
            DeliveryTime => Some(ValueType::Time),
            DeliverableMaturity => Some(ValueType::Maturity),
            Inputs | Outputs | SupportProcessInterfaces | Roles => Some(ValueType::Names),
        }
    }

    pub fn as_str(self) -> &'static str {
        use AttributeKind::*;
        match self {
            Milestones => "milestones",
            Phases => "phases",
            PhasePrecondition => "phase-precondition",
            PhasePostcondition => "phase-postcondition",
            DeliveryTime => "delivery-time",
            DeliverableMaturity => "deliverable-maturity",
            Activities => "activities",
            ActivityPrecondition => "activity-precondition",
            ActivityPostcondition => "activity-postcondition",
            ActivityPriority => "activity-priority",
            Inputs => "inputs",
            Outputs => "outputs",
            SupportProcessInterfaces => "support-process-interfaces",
            Roles => "roles",
        }
    }
}

impl fmt::Display for AttributeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The set of attribute kinds a model is described with.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetaModel {
    kinds: BTreeSet<AttributeKind>,
}

impl MetaModel {
    /// Builds a meta model; the mandatory kinds are always added.
    pub fn new(kinds: impl IntoIterator<Item = AttributeKind>) -> Self {
        let mut kinds: BTreeSet<_> = kinds.into_iter().collect();
        kinds.extend(AttributeKind::MANDATORY);
        MetaModel { kinds }
    }

    pub fn full() -> Self {
        Self::new(AttributeKind::ALL)
    }

    pub fn minimal() -> Self {
        Self::new([])
    }

    pub fn contains(&self, kind: AttributeKind) -> bool {
        self.kinds.contains(&kind)
    }

    pub fn kinds(&self) -> impl Iterator<Item = AttributeKind> + '_ {
        self.kinds.iter().copied()
    }

    pub(crate) fn insert(&mut self, kind: AttributeKind) {
        self.kinds.insert(kind);
    }

    pub(crate) fn remove(&mut self, kind: AttributeKind) {
        self.kinds.remove(&kind);
    }
}

impl Default for MetaModel {
    fn default() -> Self {
        Self::full()
    }
}

/// Ordered `Optional < Recommended < MinimalRequirement`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Priority {
    #[default]
    Optional,
    Recommended,
    MinimalRequirement,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectKind {
    Milestone,
    Phase,
    Task,
}

impl fmt::Display for ObjectKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ObjectKind::Milestone => "milestone",
            ObjectKind::Phase => "phase",
            ObjectKind::Task => "task",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Self {
        ObjectId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        ObjectId(s.to_owned())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeValue {
    Text(String),
    Time(DateTime<FixedOffset>),
    Maturity(u8),
    Names(Vec<String>),
}

impl AttributeValue {
    pub fn value_type(&self) -> ValueType {
        match self {
            AttributeValue::Text(_) => ValueType::Text,
            AttributeValue::Time(_) => ValueType::Time,
            AttributeValue::Maturity(_) => ValueType::Maturity,
            AttributeValue::Names(_) => ValueType::Names,
        }
    }
}

pub const MAX_MATURITY: u8 = 5;

/// What a milestone promises: deliverables, due time, maturity, owner.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MilestoneInfo {
    #[serde(default)]
    pub artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub due: Option<DateTime<FixedOffset>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maturity: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub responsible: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessObject {
    pub id: ObjectId,
    pub kind: ObjectKind,
    pub name: String,
    #[serde(default)]
    pub priority: Priority,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<AttributeKind, AttributeValue>,
    /// Enclosing task, for sub-tasks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent: Option<ObjectId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub milestone: Option<MilestoneInfo>,
}

impl ProcessObject {
    pub fn new(id: impl Into<String>, kind: ObjectKind, name: impl Into<String>) -> Self {
        ProcessObject {
            id: ObjectId(id.into()),
            kind,
            name: name.into(),
            priority: Priority::Optional,
            attributes: BTreeMap::new(),
            parent: None,
            milestone: (kind == ObjectKind::Milestone).then(MilestoneInfo::default),
        }
    }

    pub fn task(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self::new(id, ObjectKind::Task, name)
    }

    pub fn phase(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self::new(id, ObjectKind::Phase, name)
    }

    pub fn milestone(id: impl Into<String>, name: impl Into<String>) -> Self {
        Self::new(id, ObjectKind::Milestone, name)
    }

    pub fn with_priority(mut self, priority: Priority) -> Self {
        self.priority = priority;
        self
    }

    pub fn with_attribute(mut self, kind: AttributeKind, value: AttributeValue) -> Self {
        self.attributes.insert(kind, value);
        self
    }

    pub fn with_parent(mut self, parent: impl Into<String>) -> Self {
        self.parent = Some(ObjectId(parent.into()));
        self
    }

    pub fn is_minimal_requirement(&self) -> bool {
        self.priority == Priority::MinimalRequirement
    }

    pub fn key(&self) -> Result<IdentityKey> {
        identity_key(self)
    }

    /// Artifact names listed under `outputs`.
    pub fn outputs(&self) -> &[String] {
        match self.attributes.get(&AttributeKind::Outputs) {
            Some(AttributeValue::Names(names)) => names,
            _ => &[],
        }
    }
}

/// Cross-variant identity: kind plus case-folded, whitespace-normalized name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct IdentityKey {
    pub kind: ObjectKind,
    pub name: String,
}

impl IdentityKey {
    pub fn new(kind: ObjectKind, name: &str) -> Result<Self> {
        let name = normalize_name(name);
        if name.is_empty() {
            return Err(Error::InvalidObject(format!("{kind} with an empty name")));
        }
        Ok(IdentityKey { kind, name })
    }

    pub fn task(name: &str) -> Self {
        Self::new(ObjectKind::Task, name).expect("task name must not be empty")
    }

    pub fn milestone(name: &str) -> Self {
        Self::new(ObjectKind::Milestone, name).expect("milestone name must not be empty")
    }

    pub fn phase(name: &str) -> Self {
        Self::new(ObjectKind::Phase, name).expect("phase name must not be empty")
    }
}

impl<'de> Deserialize<'de> for IdentityKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            kind: ObjectKind,
            name: String,
        }
        let raw = Raw::deserialize(deserializer)?;
        IdentityKey::new(raw.kind, &raw.name).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for IdentityKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} `{}`", self.kind, self.name)
    }
}

pub fn normalize_name(name: &str) -> String {
    name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

pub fn identity_key(object: &ProcessObject) -> Result<IdentityKey> {
    IdentityKey::new(object.kind, &object.name)
}

/// An ordered "directly precedes" pair.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge<T> {
    pub from: T,
    pub to: T,
}

impl<T> Edge<T> {
    pub fn new(from: T, to: T) -> Self {
        Edge { from, to }
    }
}

impl<T: fmt::Display> fmt::Display for Edge<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.from, self.to)
    }
}

impl<T: Serialize> Serialize for Edge<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        (&self.from, &self.to).serialize(serializer)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Edge<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let (from, to) = <(T, T)>::deserialize(deserializer)?;
        Ok(Edge { from, to })
    }
}

pub type KeyEdge = Edge<IdentityKey>;

/// A characteristic value: categorical label or ordinal integer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CharacteristicValue {
    Ordinal(i64),
    Categorical(String),
}

impl fmt::Display for CharacteristicValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CharacteristicValue::Ordinal(v) => write!(f, "{v}"),
            CharacteristicValue::Categorical(v) => f.write_str(v),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessModel {
    pub id: String,
    /// 1 is the most abstract, domain-level description.
    pub abstraction_index: u32,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub characteristics: BTreeMap<String, CharacteristicValue>,
    #[serde(default)]
    pub meta_model: MetaModel,
    #[serde(default, with = "object_list")]
    pub objects: BTreeMap<ObjectId, ProcessObject>,
    #[serde(default)]
    pub edges: BTreeSet<Edge<ObjectId>>,
    /// child -> container (phase -> milestone, task -> phase or milestone).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub containment: BTreeMap<ObjectId, ObjectId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub refinement_links: Vec<String>,
}

mod object_list {
    use super::*;

    pub fn serialize<S: Serializer>(
        objects: &BTreeMap<ObjectId, ProcessObject>,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(objects.values())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<BTreeMap<ObjectId, ProcessObject>, D::Error> {
        let list = Vec::<ProcessObject>::deserialize(deserializer)?;
        let mut map = BTreeMap::new();
        for object in list {
            let id = object.id.clone();
            if map.insert(id.clone(), object).is_some() {
                return Err(serde::de::Error::custom(format!("duplicate object id `{id}`")));
            }
        }
        Ok(map)
    }
}

impl ProcessModel {
    pub fn new(id: impl Into<String>, abstraction_index: u32, meta_model: MetaModel) -> Self {
        ProcessModel {
            id: id.into(),
            abstraction_index,
            characteristics: BTreeMap::new(),
            meta_model,
            objects: BTreeMap::new(),
            edges: BTreeSet::new(),
            containment: BTreeMap::new(),
            refinement_links: Vec::new(),
        }
    }

    pub fn with_object(mut self, object: ProcessObject) -> Self {
        self.insert(object);
        self
    }

    pub fn with_edge(mut self, from: &str, to: &str) -> Self {
        self.edges.insert(Edge::new(ObjectId::from(from), ObjectId::from(to)));
        self
    }

    pub fn with_container(mut self, child: &str, container: &str) -> Self {
        self.containment.insert(ObjectId::from(child), ObjectId::from(container));
        self
    }

    pub fn with_characteristic(mut self, name: &str, value: CharacteristicValue) -> Self {
        self.characteristics.insert(name.to_owned(), value);
        self
    }

    pub fn insert(&mut self, object: ProcessObject) {
        self.objects.insert(object.id.clone(), object);
    }

    pub fn object(&self, id: &ObjectId) -> Option<&ProcessObject> {
        self.objects.get(id)
    }

    /// Identity key -> object id. Objects with empty names are skipped;
    /// on a key clash the smallest id wins.
    pub fn key_index(&self) -> HashMap<IdentityKey, ObjectId> {
        let mut index = HashMap::new();
        for object in self.objects.values() {
            if let Ok(key) = identity_key(object) {
                index.entry(key).or_insert_with(|| object.id.clone());
            }
        }
        index
    }

    pub fn find(&self, key: &IdentityKey) -> Option<&ProcessObject> {
        self.objects.values().find(|o| identity_key(o).is_ok_and(|k| &k == key))
    }

    pub fn keys(&self) -> BTreeSet<IdentityKey> {
        self.objects.values().filter_map(|o| identity_key(o).ok()).collect()
    }

    pub fn keys_of_kind(&self, kind: ObjectKind) -> BTreeSet<IdentityKey> {
        self.objects.values().filter(|o| o.kind == kind).filter_map(|o| identity_key(o).ok()).collect()
    }

    pub fn key_of(&self, id: &ObjectId) -> Option<IdentityKey> {
        self.objects.get(id).and_then(|o| identity_key(o).ok())
    }

    /// Edges translated to identity-key pairs; edges with unresolvable
    /// endpoints are dropped.
    pub fn key_edges(&self) -> BTreeSet<KeyEdge> {
        self.edges.iter().filter_map(|e| Some(Edge::new(self.key_of(&e.from)?, self.key_of(&e.to)?))).collect()
    }

    /// Key edges whose endpoints are both of `kind`.
    pub fn key_edges_among(&self, kind: ObjectKind) -> BTreeSet<KeyEdge> {
        self.key_edges().into_iter().filter(|e| e.from.kind == kind && e.to.kind == kind).collect()
    }

    /// An id not used by any object, derived from `preferred`.
    pub fn fresh_id(&self, preferred: &ObjectId) -> ObjectId {
        if !self.objects.contains_key(preferred) {
            return preferred.clone();
        }
        (2..)
            .map(|n| ObjectId(format!("{}#{n}", preferred.0)))
            .find(|id| !self.objects.contains_key(id))
            .expect("unbounded id space")
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let report = validate_model(self);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel { model: self.id.clone(), violations: report.violations })
        }
    }
}

/// A broken structural invariant, naming the offending id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation", rename_all = "kebab-case")]
pub enum Violation {
    ZeroAbstractionIndex,
    MissingMandatoryKind { kind: AttributeKind },
    ObjectIdMismatch { id: ObjectId, object_id: ObjectId },
    EmptyName { id: ObjectId },
    DanglingEdge { from: ObjectId, to: ObjectId, missing: ObjectId },
    DanglingContainment { child: ObjectId, missing: ObjectId },
    InvalidContainment { child: ObjectId, container: ObjectId },
    DanglingParent { id: ObjectId, missing: ObjectId },
    ParentNotTask { id: ObjectId, parent: ObjectId },
    ParentCycle { id: ObjectId },
    DisabledAttribute { id: ObjectId, kind: AttributeKind },
    StructuralAttribute { id: ObjectId, kind: AttributeKind },
    AttributeTypeMismatch { id: ObjectId, kind: AttributeKind },
    MaturityOutOfRange { id: ObjectId, value: u8 },
    MissingMilestoneInfo { id: ObjectId },
    UnexpectedMilestoneInfo { id: ObjectId },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            ZeroAbstractionIndex => write!(f, "abstraction index must be at least 1"),
            MissingMandatoryKind { kind } => write!(f, "meta model lacks mandatory kind `{kind}`"),
            ObjectIdMismatch { id, object_id } => {
                write!(f, "object stored under `{id}` carries id `{object_id}`")
            }
            EmptyName { id } => write!(f, "object `{id}` has an empty name"),
            DanglingEdge { from, to, missing } => {
                write!(f, "edge `{from}` -> `{to}` references unknown object `{missing}`")
            }
            DanglingContainment { child, missing } => {
                write!(f, "containment of `{child}` references unknown object `{missing}`")
            }
            InvalidContainment { child, container } => {
                write!(f, "`{child}` cannot be contained in `{container}`")
            }
            DanglingParent { id, missing } => {
                write!(f, "object `{id}` has unknown parent `{missing}`")
            }
            ParentNotTask { id, parent } => {
                write!(f, "parent link `{id}` -> `{parent}` must join two tasks")
            }
            ParentCycle { id } => write!(f, "parent chain of `{id}` is cyclic"),
            DisabledAttribute { id, kind } => {
                write!(f, "object `{id}` carries `{kind}` outside the meta model")
            }
            StructuralAttribute { id, kind } => {
                write!(f, "object `{id}` carries a value for structural kind `{kind}`")
            }
            AttributeTypeMismatch { id, kind } => {
                write!(f, "object `{id}` has a wrongly typed `{kind}` value")
            }
            MaturityOutOfRange { id, value } => {
                write!(f, "object `{id}` has maturity {value}, expected 0..={MAX_MATURITY}")
            }
            MissingMilestoneInfo { id } => write!(f, "milestone `{id}` lacks milestone details"),
            UnexpectedMilestoneInfo { id } => {
                write!(f, "non-milestone `{id}` carries milestone details")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_model(model: &ProcessModel) -> ValidationReport {
    let mut violations = Vec::new();
    if model.abstraction_index == 0 {
        violations.push(Violation::ZeroAbstractionIndex);
    }
    for kind in AttributeKind::MANDATORY {
        if !model.meta_model.contains(kind) {
            violations.push(Violation::MissingMandatoryKind { kind });
        }
    }

    for (id, object) in &model.objects {
        if *id != object.id {
            violations.push(Violation::ObjectIdMismatch { id: id.clone(), object_id: object.id.clone() });
        }
        if normalize_name(&object.name).is_empty() {
            violations.push(Violation::EmptyName { id: id.clone() });
        }
        for (kind, value) in &object.attributes {
            if !model.meta_model.contains(*kind) {
                violations.push(Violation::DisabledAttribute { id: id.clone(), kind: *kind });
            }
            match kind.value_type() {
                None => violations.push(Violation::StructuralAttribute { id: id.clone(), kind: *kind }),
                Some(expected) if expected != value.value_type() => {
                    violations.push(Violation::AttributeTypeMismatch { id: id.clone(), kind: *kind })
                }
                Some(_) => {}
            }
            if let AttributeValue::Maturity(value) = value {
                if *value > MAX_MATURITY {
                    violations.push(Violation::MaturityOutOfRange { id: id.clone(), value: *value });
                }
            }
        }
        match (&object.milestone, object.kind) {
            (None, ObjectKind::Milestone) => violations.push(Violation::MissingMilestoneInfo { id: id.clone() }),
            (Some(_), ObjectKind::Phase | ObjectKind::Task) => {
                violations.push(Violation::UnexpectedMilestoneInfo { id: id.clone() })
            }
            (Some(info), ObjectKind::Milestone) => {
                if let Some(value) = info.maturity.filter(|m| *m > MAX_MATURITY) {
                    violations.push(Violation::MaturityOutOfRange { id: id.clone(), value });
                }
            }
            (None, _) => {}
        }
        if let Some(parent) = &object.parent {
            match model.objects.get(parent) {
                None => violations.push(Violation::DanglingParent { id: id.clone(), missing: parent.clone() }),
                Some(p) if p.kind != ObjectKind::Task || object.kind != ObjectKind::Task => {
                    violations.push(Violation::ParentNotTask { id: id.clone(), parent: parent.clone() })
                }
                Some(_) => {}
            }
        }
    }

    for edge in &model.edges {
        for end in [&edge.from, &edge.to] {
            if !model.objects.contains_key(end) {
                violations.push(Violation::DanglingEdge {
                    from: edge.from.clone(),
                    to: edge.to.clone(),
                    missing: end.clone(),
                });
            }
        }
    }

    for (child, container) in &model.containment {
        let child_kind = model.objects.get(child).map(|o| o.kind);
        let container_kind = model.objects.get(container).map(|o| o.kind);
        if child_kind.is_none() {
            violations.push(Violation::DanglingContainment { child: child.clone(), missing: child.clone() });
        }
        if container_kind.is_none() {
            violations.push(Violation::DanglingContainment { child: child.clone(), missing: container.clone() });
        }
        if let (Some(child_kind), Some(container_kind)) = (child_kind, container_kind) {
            if !may_contain(container_kind, child_kind) {
                violations.push(Violation::InvalidContainment { child: child.clone(), container: container.clone() });
            }
        }
    }

    for id in parent_cycle_members(model) {
        violations.push(Violation::ParentCycle { id });
    }

    ValidationReport { violations }
}

/// Milestones hold phases and tasks; phases hold tasks.
pub fn may_contain(container: ObjectKind, child: ObjectKind) -> bool {
    matches!(
        (container, child),
        (ObjectKind::Milestone, ObjectKind::Phase)
            | (ObjectKind::Milestone, ObjectKind::Task)
            | (ObjectKind::Phase, ObjectKind::Task)
    )
}

/// Objects lying on a cycle of parent links, in id order.
fn parent_cycle_members(model: &ProcessModel) -> Vec<ObjectId> {
    let parent_of = |id: &ObjectId| model.objects.get(id).and_then(|o| o.parent.as_ref());
    let mut on_cycle = BTreeSet::new();
    let mut settled: BTreeSet<&ObjectId> = BTreeSet::new();
    for start in model.objects.keys() {
        if settled.contains(start) {
            continue;
        }
        let mut path: Vec<&ObjectId> = Vec::new();
        let mut current = Some(start);
        while let Some(id) = current {
            if settled.contains(id) {
                break;
            }
            if let Some(pos) = path.iter().position(|p| *p == id) {
                on_cycle.extend(path[pos..].iter().map(|p| (*p).clone()));
                break;
            }
            path.push(id);
            current = parent_of(id);
        }
        settled.extend(path);
    }
    on_cycle.into_iter().collect()
}

/// A data flow between two artifacts or parameters; the owner of `to`
/// must hear about changes to `from`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataDependency {
    pub from: String,
    pub to: String,
    pub owner_of_to: String,
}

impl DataDependency {
    pub fn new(from: &str, to: &str, owner_of_to: &str) -> Result<Self> {
        if from == to {
            return Err(Error::InvalidObject(format!("data dependency from `{from}` to itself")));
        }
        Ok(DataDependency { from: from.to_owned(), to: to.to_owned(), owner_of_to: owner_of_to.to_owned() })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> ProcessModel {
        ProcessModel::new("m", 1, MetaModel::full())
            .with_object(ProcessObject::milestone("M1", "Prototype 1"))
            .with_object(ProcessObject::phase("P1", "Design"))
            .with_object(ProcessObject::task("T1", "Requirements review"))
            .with_edge("P1", "T1")
            .with_container("P1", "M1")
            .with_container("T1", "P1")
    }

    #[test]
    fn well_formed_model_has_empty_report() {
        assert!(validate_model(&fixture()).is_valid());
    }

    #[test]
    fn dangling_edge_is_named() {
        let model = fixture().with_edge("T1", "X");
        let report = validate_model(&model);
        assert!(report.violations.iter().any(|v| matches!(
            v,
            Violation::DanglingEdge { missing, .. } if missing.as_str() == "X"
        )));
    }

    #[test]
    fn parent_cycle_is_reported() {
        let model = fixture()
            .with_object(ProcessObject::task("T2", "Sub").with_parent("T3"))
            .with_object(ProcessObject::task("T3", "Sub sub").with_parent("T2"));
        let report = validate_model(&model);
        let cyclic: Vec<_> = report
            .violations
            .iter()
            .filter_map(|v| match v {
                Violation::ParentCycle { id } => Some(id.as_str()),
                _ => None,
            })
            .collect();
        assert_eq!(cyclic, ["T2", "T3"]);
    }

    #[test]
    fn validation_is_pure() {
        let model = fixture().with_edge("Q", "T1");
        let before = model.clone();
        assert_eq!(validate_model(&model), validate_model(&model));
        assert_eq!(model, before);
    }

    #[test]
    fn attributes_outside_meta_model_are_flagged() {
        let mut model = fixture();
        model.meta_model = MetaModel::minimal();
        model
            .objects
            .get_mut(&ObjectId::from("T1"))
            .unwrap()
            .attributes
            .insert(AttributeKind::Roles, AttributeValue::Names(vec!["Developer".into()]));
        let report = validate_model(&model);
        assert_eq!(report.violations, [Violation::DisabledAttribute { id: "T1".into(), kind: AttributeKind::Roles }]);
    }

    #[test]
    fn containment_rules() {
        let model = fixture().with_container("M1", "T1");
        let report = validate_model(&model);
        assert!(report
            .violations
            .contains(&Violation::InvalidContainment { child: "M1".into(), container: "T1".into() }));
    }

    #[test]
    fn milestone_details_and_maturity() {
        let mut model = fixture();
        model.objects.get_mut(&ObjectId::from("M1")).unwrap().milestone = None;
        model
            .objects
            .get_mut(&ObjectId::from("T1"))
            .unwrap()
            .attributes
            .insert(AttributeKind::DeliverableMaturity, AttributeValue::Maturity(6));
        let report = validate_model(&model);
        assert!(report.violations.contains(&Violation::MissingMilestoneInfo { id: "M1".into() }));
        assert!(report.violations.contains(&Violation::MaturityOutOfRange { id: "T1".into(), value: 6 }));
    }

    #[test]
    fn identity_key_normalizes_case_and_whitespace() {
        let a = ProcessObject::task("a", "Requirements review");
        let b = ProcessObject::task("b", " requirements REVIEW ");
        assert_eq!(identity_key(&a).unwrap(), identity_key(&b).unwrap());

        let task = ProcessObject::task("a", "A");
        let milestone = ProcessObject::milestone("b", "A");
        assert_ne!(identity_key(&task).unwrap(), identity_key(&milestone).unwrap());
        assert_ne!(identity_key(&task).unwrap(), identity_key(&ProcessObject::task("c", "B")).unwrap());
    }

    #[test]
    fn identity_key_rejects_empty_names() {
        let err = identity_key(&ProcessObject::task("a", "  \t")).unwrap_err();
        assert!(matches!(err, Error::InvalidObject(_)));
    }

    #[test]
    fn meta_model_keeps_mandatory_kinds() {
        let meta = MetaModel::new([AttributeKind::Roles]);
        assert!(meta.contains(AttributeKind::Activities));
        assert!(meta.contains(AttributeKind::ActivityPriority));
        assert_eq!(AttributeKind::ALL.len(), 14);
    }

    #[test]
    fn priority_order() {
        assert!(Priority::MinimalRequirement > Priority::Recommended);
        assert!(Priority::Recommended > Priority::Optional);
    }

    #[test]
    fn data_dependency_endpoints_differ() {
        assert!(DataDependency::new("a", "a", "r").is_err());
    }

    #[test]
    fn duplicate_object_ids_are_rejected_on_parse() {
        let json = r#"{"id":"m","abstraction_index":1,"objects":[
            {"id":"T","kind":"task","name":"A"},{"id":"T","kind":"task","name":"B"}]}"#;
        let err = serde_json::from_str::<ProcessModel>(json).unwrap_err();
        assert!(err.to_string().contains("duplicate object id `T`"));
    }
}
