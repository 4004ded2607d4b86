//! Adapting a selected process to a project: the adapt-vs-build gate,
//! meta-model adaptation, guarded instance tailoring, building a process
//! from scratch and the minimal-requirement consistency check.
//!
//! Objects with priority minimal-requirement can only be removed with an
//! [`Approval`] carrying a justification; every such removal is written to
//! the [`JustificationLedger`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{DateTime, FixedOffset};
use num_rational::Ratio;
use serde::{Deserialize, Serialize, Serializer};

use crate::delta::set_differences;
use crate::error::{Error, Result};
use crate::model::{
    identity_key, may_contain, AttributeKind, AttributeValue, DataDependency, Edge, IdentityKey, MetaModel, ObjectId,
    ObjectKind, Priority, ProcessModel, ProcessObject, Violation,
};
use crate::reflection::{JustificationLedger, LedgerEntry};

/// Adapt-vs-build ratio; infinite when adapting costs nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Roi {
    Finite(Ratio<u64>),
    Infinite,
}

impl Roi {
    pub fn exceeds_one(self) -> bool {
        match self {
            Roi::Infinite => true,
            Roi::Finite(r) => r > Ratio::from_integer(1),
        }
    }
}

impl fmt::Display for Roi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Roi::Infinite => f.write_str("inf"),
            Roi::Finite(r) => write!(f, "{r}"),
        }
    }
}

impl Serialize for Roi {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Roi::Infinite => serializer.serialize_str("inf"),
            Roi::Finite(r) => serializer.serialize_f64(*r.numer() as f64 / *r.denom() as f64),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RoiDecision {
    Adapt,
    Build,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RoiEstimate {
    pub adapt_effort: u64,
    pub build_effort: u64,
    pub roi: Roi,
    pub decision: RoiDecision,
}

/// Effort proxies are object and edge counts: adapting costs the symmetric
/// difference between the selected process and the target, building costs
/// the whole target.
pub fn estimate_roi(selected: &ProcessModel, target_sketch: &ProcessModel) -> RoiEstimate {
    let (only_selected, only_target) = set_differences(&selected.keys(), &target_sketch.keys());
    let (edges_selected, edges_target) = set_differences(&selected.key_edges(), &target_sketch.key_edges());
    let adapt_effort = (only_selected.len() + only_target.len() + edges_selected.len() + edges_target.len()) as u64;
    let build_effort = (target_sketch.objects.len() + target_sketch.edges.len()) as u64;
    let roi = if adapt_effort == 0 { Roi::Infinite } else { Roi::Finite(Ratio::new(build_effort, adapt_effort)) };
    let decision = if roi.exceeds_one() { RoiDecision::Adapt } else { RoiDecision::Build };
    RoiEstimate { adapt_effort, build_effort, roi, decision }
}

/// Enables `add` and disables `remove`; disabling a kind strips its values
/// from every object.
pub fn adapt_meta_model(
    model: &ProcessModel,
    add: &BTreeSet<AttributeKind>,
    remove: &BTreeSet<AttributeKind>,
) -> Result<ProcessModel> {
    if let Some(kind) = remove.iter().find(|k| k.is_mandatory()) {
        return Err(Error::MandatoryKind(*kind));
    }
    let mut adapted = model.clone();
    for kind in add {
        adapted.meta_model.insert(*kind);
    }
    for kind in remove {
        adapted.meta_model.remove(*kind);
        for object in adapted.objects.values_mut() {
            object.attributes.remove(kind);
        }
    }
    Ok(adapted)
}

/// Sign-off for a guarded change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Approval {
    pub approver: String,
    pub justification: String,
}

impl Approval {
    pub fn new(approver: &str, justification: &str) -> Self {
        Approval { approver: approver.to_owned(), justification: justification.to_owned() }
    }

    pub fn is_complete(&self) -> bool {
        !self.approver.trim().is_empty() && !self.justification.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TailoringAction {
    RemoveObject {
        key: IdentityKey,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        approval: Option<Approval>,
    },
    AddObject {
        object: ProcessObject,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        container: Option<IdentityKey>,
    },
    RemoveEdge {
        from: IdentityKey,
        to: IdentityKey,
    },
    AddEdge {
        from: IdentityKey,
        to: IdentityKey,
    },
    /// `value: None` clears the attribute.
    SetAttribute {
        key: IdentityKey,
        kind: AttributeKind,
        #[serde(default)]
        value: Option<AttributeValue>,
    },
}

impl TailoringAction {
    pub fn remove(key: IdentityKey) -> Self {
        TailoringAction::RemoveObject { key, approval: None }
    }

    pub fn remove_approved(key: IdentityKey, approval: Approval) -> Self {
        TailoringAction::RemoveObject { key, approval: Some(approval) }
    }

    pub fn add(object: ProcessObject, container: Option<IdentityKey>) -> Self {
        TailoringAction::AddObject { object, container }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TailoringAction::RemoveObject { .. } => "remove-object",
            TailoringAction::AddObject { .. } => "add-object",
            TailoringAction::RemoveEdge { .. } => "remove-edge",
            TailoringAction::AddEdge { .. } => "add-edge",
            TailoringAction::SetAttribute { .. } => "set-attribute",
        }
    }
}

fn resolve(model: &ProcessModel, key: &IdentityKey) -> Result<ObjectId> {
    model.find(key).map(|o| o.id.clone()).ok_or_else(|| Error::NotFound { what: "object", name: key.to_string() })
}

/// `id` plus everything it (transitively) contains.
pub(crate) fn containment_closure(model: &ProcessModel, id: &ObjectId) -> BTreeSet<ObjectId> {
    let mut closure = BTreeSet::from([id.clone()]);
    loop {
        let before = closure.len();
        let inner: Vec<ObjectId> = model
            .containment
            .iter()
            .filter(|(_, container)| closure.contains(*container))
            .map(|(child, _)| child.clone())
            .collect();
        closure.extend(inner);
        if closure.len() == before {
            return closure;
        }
    }
}

/// Removes `id` with everything it contains and their incident edges.
/// Sub-tasks of removed tasks move up to the nearest surviving ancestor
/// task. Minimal-requirement objects in the removed set need a complete
/// approval; one ledger entry is produced per such object.
pub(crate) fn remove_with_cascade(
    model: &ProcessModel,
    id: &ObjectId,
    approval: Option<&Approval>,
    action: &str,
    at: DateTime<FixedOffset>,
) -> Result<(ProcessModel, Vec<LedgerEntry>)> {
    if !model.objects.contains_key(id) {
        return Err(Error::NotFound { what: "object", name: id.to_string() });
    }
    let removed = containment_closure(model, id);
    let guarded: Vec<&ProcessObject> = std::iter::once(id)
        .chain(removed.iter().filter(|r| *r != id))
        .filter_map(|r| model.objects.get(r))
        .filter(|o| o.is_minimal_requirement())
        .collect();
    let approval = approval.filter(|a| a.is_complete());
    let entries = match (guarded.first(), approval) {
        (None, _) => Vec::new(),
        (Some(first), None) => {
            return Err(Error::ApprovalRequired { target: identity_key(first)? });
        }
        (Some(_), Some(approval)) => guarded
            .iter()
            .map(|o| {
                Ok(LedgerEntry {
                    timestamp: at,
                    actor: approval.approver.clone(),
                    action: action.to_owned(),
                    target: identity_key(o)?.to_string(),
                    justification: approval.justification.clone(),
                })
            })
            .collect::<Result<_>>()?,
    };

    let mut next = model.clone();
    for r in &removed {
        next.objects.remove(r);
        next.containment.remove(r);
    }
    next.edges.retain(|e| !removed.contains(&e.from) && !removed.contains(&e.to));
    let surviving_parent = |mut parent: Option<ObjectId>| {
        while let Some(p) = parent.as_ref().filter(|p| removed.contains(*p)) {
            parent = model.objects.get(p).and_then(|o| o.parent.clone());
        }
        parent
    };
    for object in next.objects.values_mut() {
        if object.parent.as_ref().is_some_and(|p| removed.contains(p)) {
            object.parent = surviving_parent(object.parent.clone());
        }
    }
    Ok((next, entries))
}

/// Applies one action. Guarded removals are appended to `ledger`; on error
/// neither the model nor the ledger changes.
pub fn apply_tailoring(
    model: &ProcessModel,
    action: &TailoringAction,
    ledger: &mut JustificationLedger,
    at: DateTime<FixedOffset>,
) -> Result<ProcessModel> {
    let (next, entries) = apply_action(model, action, at)?;
    ledger.extend(entries);
    Ok(next)
}

fn apply_action(
    model: &ProcessModel,
    action: &TailoringAction,
    at: DateTime<FixedOffset>,
) -> Result<(ProcessModel, Vec<LedgerEntry>)> {
    match action {
        TailoringAction::RemoveObject { key, approval } => {
            let id = resolve(model, key)?;
            remove_with_cascade(model, &id, approval.as_ref(), action.name(), at)
        }
        TailoringAction::AddObject { object, container } => {
            Ok((add_object(model, object, container.as_ref())?, Vec::new()))
        }
        TailoringAction::RemoveEdge { from, to } => {
            let edge = Edge::new(resolve(model, from)?, resolve(model, to)?);
            let mut next = model.clone();
            if !next.edges.remove(&edge) {
                return Err(Error::NotFound { what: "edge", name: format!("{from} -> {to}") });
            }
            Ok((next, Vec::new()))
        }
        TailoringAction::AddEdge { from, to } => {
            let edge = Edge::new(resolve(model, from)?, resolve(model, to)?);
            let mut next = model.clone();
            if !next.edges.insert(edge) {
                return Err(Error::Duplicate { what: "edge", name: format!("{from} -> {to}") });
            }
            Ok((next, Vec::new()))
        }
        TailoringAction::SetAttribute { key, kind, value } => {
            if !model.meta_model.contains(*kind) {
                return Err(Error::KindDisabled(*kind));
            }
            let expected = kind
                .value_type()
                .ok_or_else(|| Error::InvalidObject(format!("`{kind}` is structural and carries no values")))?;
            let id = resolve(model, key)?;
            let mut next = model.clone();
            let object = next.objects.get_mut(&id).expect("resolved id exists");
            match value {
                Some(value) if value.value_type() != expected => {
                    return Err(Error::InvalidObject(format!("wrongly typed value for `{kind}`")))
                }
                Some(value) => {
                    object.attributes.insert(*kind, value.clone());
                }
                None => {
                    object.attributes.remove(kind);
                }
            }
            next.ensure_valid()?;
            Ok((next, Vec::new()))
        }
    }
}

fn add_object(model: &ProcessModel, object: &ProcessObject, container: Option<&IdentityKey>) -> Result<ProcessModel> {
    let key = identity_key(object)?;
    if model.objects.contains_key(&object.id) {
        return Err(Error::Duplicate { what: "object id", name: object.id.to_string() });
    }
    if model.find(&key).is_some() {
        return Err(Error::Duplicate { what: "object", name: key.to_string() });
    }
    if let Some(kind) = object.attributes.keys().find(|k| !model.meta_model.contains(**k)) {
        return Err(Error::KindDisabled(*kind));
    }
    if let Some(parent) = &object.parent {
        if !model.objects.contains_key(parent) {
            return Err(Error::NotFound { what: "parent", name: parent.to_string() });
        }
    }
    let mut next = model.clone();
    if let Some(container) = container {
        let container_id = resolve(model, container)?;
        if !may_contain(container.kind, object.kind) {
            return Err(Error::InvalidObject(format!("{container} cannot contain {key}")));
        }
        next.containment.insert(object.id.clone(), container_id);
    }
    next.insert(object.clone());
    next.ensure_valid()?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Removal {
    pub key: IdentityKey,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approval: Option<Approval>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Addition {
    pub object: ProcessObject,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub container: Option<IdentityKey>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanStep {
    #[serde(default)]
    pub remove: Vec<Removal>,
    #[serde(default)]
    pub add: Vec<Addition>,
}

impl PlanStep {
    fn is_empty(&self) -> bool {
        self.remove.is_empty() && self.add.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseStep {
    pub milestone: IdentityKey,
    #[serde(flatten)]
    pub step: PlanStep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResidualStep {
    pub kind: AttributeKind,
    pub actions: Vec<TailoringAction>,
}

/// The standard tailoring order: milestones, then the phases of each
/// remaining milestone, then the residual attribute kinds.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TailoringPlan {
    #[serde(default)]
    pub milestones: PlanStep,
    #[serde(default)]
    pub phases: Vec<PhaseStep>,
    #[serde(default)]
    pub residual: Vec<ResidualStep>,
}

/// Flattens `plan` into the action sequence [`standard_tailoring`] folds.
/// Removals of objects already covered by an earlier removal's containment
/// cascade are dropped, as are phase steps of removed milestones.
pub fn expand_plan(model: &ProcessModel, plan: &TailoringPlan) -> Result<Vec<TailoringAction>> {
    if !plan.milestones.is_empty() && !model.meta_model.contains(AttributeKind::Milestones) {
        return Err(Error::KindDisabled(AttributeKind::Milestones));
    }
    if plan.phases.iter().any(|p| !p.step.is_empty()) && !model.meta_model.contains(AttributeKind::Phases) {
        return Err(Error::KindDisabled(AttributeKind::Phases));
    }
    for step in &plan.residual {
        if !model.meta_model.contains(step.kind) {
            return Err(Error::KindDisabled(step.kind));
        }
        check_residual_step(step)?;
    }

    let mut covered: BTreeSet<IdentityKey> = BTreeSet::new();
    let mut actions = Vec::new();
    let remove = |covered: &mut BTreeSet<IdentityKey>, actions: &mut Vec<TailoringAction>, removal: &Removal| {
        if covered.contains(&removal.key) {
            return;
        }
        if let Some(object) = model.find(&removal.key) {
            covered.extend(containment_closure(model, &object.id).iter().filter_map(|id| model.key_of(id)));
        }
        actions.push(TailoringAction::RemoveObject { key: removal.key.clone(), approval: removal.approval.clone() });
    };

    for removal in &plan.milestones.remove {
        remove(&mut covered, &mut actions, removal);
    }
    for addition in &plan.milestones.add {
        actions.push(TailoringAction::add(addition.object.clone(), addition.container.clone()));
    }

    let mut milestones: Vec<IdentityKey> = model
        .objects
        .values()
        .filter(|o| o.kind == ObjectKind::Milestone)
        .filter_map(|o| identity_key(o).ok())
        .collect();
    milestones.extend(plan.milestones.add.iter().filter_map(|a| identity_key(&a.object).ok()));
    for step in &plan.phases {
        if !milestones.contains(&step.milestone) {
            return Err(Error::NotFound { what: "milestone", name: step.milestone.to_string() });
        }
    }
    for milestone in milestones.iter().filter(|m| !covered.contains(*m)).cloned().collect::<Vec<_>>() {
        for step in plan.phases.iter().filter(|s| s.milestone == milestone) {
            for removal in &step.step.remove {
                remove(&mut covered, &mut actions, removal);
            }
            for addition in &step.step.add {
                let container = addition.container.clone().or_else(|| Some(milestone.clone()));
                actions.push(TailoringAction::add(addition.object.clone(), container));
            }
        }
    }

    for step in &plan.residual {
        for action in &step.actions {
            match action {
                TailoringAction::RemoveObject { key, approval } => {
                    remove(&mut covered, &mut actions, &Removal { key: key.clone(), approval: approval.clone() })
                }
                other => actions.push(other.clone()),
            }
        }
    }
    Ok(actions)
}

fn check_residual_step(step: &ResidualStep) -> Result<()> {
    for action in &step.actions {
        let fits = match (step.kind, action) {
            (AttributeKind::Activities, TailoringAction::SetAttribute { .. }) => false,
            (AttributeKind::Activities, TailoringAction::RemoveObject { key, .. }) => key.kind == ObjectKind::Task,
            (AttributeKind::Activities, TailoringAction::AddObject { object, .. }) => object.kind == ObjectKind::Task,
            (AttributeKind::Activities, _) => true,
            (kind, TailoringAction::SetAttribute { kind: action_kind, .. }) => kind == *action_kind,
            _ => false,
        };
        if !fits {
            return Err(Error::InvalidObject(format!(
                "`{}` does not belong to the `{}` step",
                action.name(),
                step.kind
            )));
        }
    }
    Ok(())
}

/// Runs the standard tailoring plan atomically: the first failing action
/// aborts with the model and the ledger unchanged.
pub fn standard_tailoring(
    model: &ProcessModel,
    plan: &TailoringPlan,
    ledger: &mut JustificationLedger,
    at: DateTime<FixedOffset>,
) -> Result<ProcessModel> {
    let actions = expand_plan(model, plan)?;
    let mut scratch = JustificationLedger::new();
    let mut current = model.clone();
    for action in &actions {
        current = apply_tailoring(&current, action, &mut scratch, at)?;
    }
    ledger.extend(scratch.entries().iter().cloned());
    Ok(current)
}

/// A task placed in the context of a milestone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDraft {
    pub object: ProcessObject,
    pub milestone: ObjectId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuildRequest {
    pub id: String,
    #[serde(default = "default_index")]
    pub abstraction_index: u32,
    pub meta_model: MetaModel,
    pub milestones: Vec<ProcessObject>,
    #[serde(default)]
    pub tasks: Vec<TaskDraft>,
    #[serde(default)]
    pub dependencies: Vec<DataDependency>,
    #[serde(default)]
    pub edges: Vec<Edge<ObjectId>>,
}

fn default_index() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Notification {
    pub task: ObjectId,
    pub inform: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BuiltProcess {
    pub model: ProcessModel,
    pub notifications: Vec<Notification>,
}

/// Assembles a process from milestones and tasks. A task whose outputs
/// feed a data dependency yields a notification for the owner of the
/// dependent data.
pub fn build_process(request: &BuildRequest) -> Result<BuiltProcess> {
    let mut model = ProcessModel::new(request.id.clone(), request.abstraction_index, request.meta_model.clone());
    for milestone in &request.milestones {
        if milestone.kind != ObjectKind::Milestone {
            return Err(Error::InvalidObject(format!("`{}` is not a milestone", milestone.id)));
        }
        insert_fresh(&mut model, milestone.clone())?;
    }
    for draft in &request.tasks {
        let is_milestone = model.objects.get(&draft.milestone).is_some_and(|o| o.kind == ObjectKind::Milestone);
        if !is_milestone {
            return Err(Error::UnknownMilestone {
                task: draft.object.id.to_string(),
                milestone: draft.milestone.to_string(),
            });
        }
        if draft.object.kind != ObjectKind::Task {
            return Err(Error::InvalidObject(format!("`{}` is not a task", draft.object.id)));
        }
        insert_fresh(&mut model, draft.object.clone())?;
        model.containment.insert(draft.object.id.clone(), draft.milestone.clone());
    }
    model.edges.extend(request.edges.iter().cloned());

    let report = crate::model::validate_model(&model);
    if let Some(Violation::ParentCycle { id }) =
        report.violations.iter().find(|v| matches!(v, Violation::ParentCycle { .. }))
    {
        return Err(Error::CyclicParent(id.to_string()));
    }
    model.ensure_valid()?;

    let mut notifications = Vec::new();
    for draft in &request.tasks {
        for output in draft.object.outputs() {
            for dependency in request.dependencies.iter().filter(|d| &d.from == output) {
                let notification =
                    Notification { task: draft.object.id.clone(), inform: dependency.owner_of_to.clone() };
                if !notifications.contains(&notification) {
                    notifications.push(notification);
                }
            }
        }
    }
    Ok(BuiltProcess { model, notifications })
}

fn insert_fresh(model: &mut ProcessModel, object: ProcessObject) -> Result<()> {
    if model.objects.contains_key(&object.id) {
        return Err(Error::Duplicate { what: "object id", name: object.id.to_string() });
    }
    model.insert(object);
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencyViolation {
    pub missing_key: IdentityKey,
    pub kind: ObjectKind,
    pub source: String,
}

pub const SELECTED_PROCESS: &str = "selected process";

/// One violation per minimal-requirement milestone or task of `selected`
/// missing from `tailored`. Phases are not checked.
pub fn check_consistency(selected: &ProcessModel, tailored: &ProcessModel) -> Vec<ConsistencyViolation> {
    let present = tailored.keys();
    let missing: BTreeSet<IdentityKey> = selected
        .objects
        .values()
        .filter(|o| o.priority == Priority::MinimalRequirement)
        .filter(|o| matches!(o.kind, ObjectKind::Milestone | ObjectKind::Task))
        .filter_map(|o| identity_key(o).ok())
        .filter(|k| !present.contains(k))
        .collect();
    missing
        .into_iter()
        .map(|key| ConsistencyViolation { kind: key.kind, missing_key: key, source: SELECTED_PROCESS.to_owned() })
        .collect()
}

/// Copies the objects named by `violations` from `selected` back into
/// `tailored`. Each is re-anchored under its nearest ancestor that exists in
/// the result, or left at top level; edges to surviving objects come along.
pub fn apply_fixes(
    tailored: &ProcessModel,
    violations: &[ConsistencyViolation],
    selected: &ProcessModel,
) -> Result<ProcessModel> {
    let mut result = tailored.clone();
    let mut readded: BTreeMap<ObjectId, ObjectId> = BTreeMap::new();
    let mut ordered: Vec<&ConsistencyViolation> = violations.iter().collect();
    ordered.sort_by_key(|v| v.missing_key.kind);
    for violation in ordered {
        let source = selected.find(&violation.missing_key).ok_or_else(|| Error::NotFound {
            what: "object in selected process",
            name: violation.missing_key.to_string(),
        })?;
        if result.find(&violation.missing_key).is_some() {
            continue;
        }
        let mut object = source.clone();
        object.id = result.fresh_id(&source.id);
        object.parent = None;
        object.attributes.retain(|kind, _| result.meta_model.contains(*kind));
        readded.insert(source.id.clone(), object.id.clone());
        result.insert(object);
    }

    let present = |result: &ProcessModel, selected_id: &ObjectId| -> Option<ObjectId> {
        let key = selected.key_of(selected_id)?;
        result.find(&key).map(|o| o.id.clone())
    };
    for (source_id, new_id) in &readded {
        let kind = result.objects[new_id].kind;
        let mut ancestor = selected.containment.get(source_id);
        while let Some(candidate) = ancestor {
            if let Some(found) = present(&result, candidate) {
                if may_contain(result.objects[&found].kind, kind) {
                    result.containment.insert(new_id.clone(), found);
                    break;
                }
            }
            ancestor = selected.containment.get(candidate);
        }
        let parent = selected.objects[source_id]
            .parent
            .as_ref()
            .and_then(|p| present(&result, p))
            .filter(|p| result.objects[p].kind == ObjectKind::Task && kind == ObjectKind::Task);
        result.objects.get_mut(new_id).expect("just inserted").parent = parent;
    }
    for edge in &selected.edges {
        if !readded.contains_key(&edge.from) && !readded.contains_key(&edge.to) {
            continue;
        }
        if let (Some(from), Some(to)) = (present(&result, &edge.from), present(&result, &edge.to)) {
            result.edges.insert(Edge::new(from, to));
        }
    }
    result.ensure_valid()?;
    Ok(result)
}
