#![allow(dead_code)]

use std::path::PathBuf;

use chrono::{DateTime, FixedOffset};
use procline_core::model::{CharacteristicValue, MilestoneInfo};
use procline_core::{AttributeKind, AttributeValue, MetaModel, ObjectKind, Priority, ProcessModel, ProcessObject};
use rand::seq::SliceRandom;
use rand::Rng;

pub const MILESTONES: [&str; 4] = ["Requirements baseline", "Prototype 1", "Prototype 2", "Delivery"];
pub const PHASES: [&str; 5] = ["Requirements", "Architecture", "Design", "Verification", "Rollout"];
pub const TASKS: [&str; 24] = [
    "Communication customer",
    "Communication TG",
    "Requirements specification",
    "Requirements review",
    "Requirements adaptation",
    "Architecture modeling",
    "Architecture review",
    "Architecture change",
    "New statechart modeling",
    "Statechart review",
    "Statechart change",
    "Fault removal from statechart",
    "Statechart optimization",
    "Panel development",
    "Panel change",
    "System test",
    "Integration",
    "Backlog grooming",
    "Implementation",
    "Code review",
    "Release planning",
    "Risk assessment",
    "Hazard analysis",
    "Acceptance test",
];

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

pub fn at(minute: i64) -> DateTime<FixedOffset> {
    DateTime::parse_from_rfc3339("2004-11-17T09:00:00+01:00").unwrap() + chrono::Duration::minutes(minute)
}

/// Same key, different spelling.
fn respell(rng: &mut impl Rng, name: &str) -> String {
    match rng.gen_range(0..4) {
        0 => name.to_uppercase(),
        1 => format!("  {}  ", name.replace(' ', "   ")),
        _ => name.to_owned(),
    }
}

fn priority(rng: &mut impl Rng) -> Priority {
    *[Priority::Optional, Priority::Recommended, Priority::MinimalRequirement].choose(rng).unwrap()
}

fn meta_model(rng: &mut impl Rng) -> MetaModel {
    MetaModel::new(AttributeKind::ALL.into_iter().filter(|_| rng.gen_bool(0.8)))
}

fn attribute(rng: &mut impl Rng, kind: AttributeKind) -> Option<AttributeValue> {
    use procline_core::model::ValueType;
    Some(match kind.value_type()? {
        ValueType::Text => AttributeValue::Text(format!("condition {}", rng.gen_range(0..4))),
        ValueType::Time => AttributeValue::Time(at(rng.gen_range(0..10_000))),
        ValueType::Maturity => AttributeValue::Maturity(rng.gen_range(0..=5)),
        ValueType::Names => {
            let pool = ["spec", "statecharts", "panel", "report", "analyst", "tester"];
            let count = rng.gen_range(1..3);
            AttributeValue::Names(pool.choose_multiple(rng, count).map(|s| s.to_string()).collect())
        }
    })
}

/// A valid model with at most `max_objects` objects, drawing names from
/// shared pools so that variants overlap.
pub fn random_model(rng: &mut impl Rng, id: &str, level: u32, max_objects: usize) -> ProcessModel {
    let mut model = ProcessModel::new(id, level, meta_model(rng));
    if rng.gen_bool(0.5) {
        model = model.with_characteristic("team_size", CharacteristicValue::Ordinal(rng.gen_range(2..8)));
    }
    if rng.gen_bool(0.5) {
        let lifecycle = *["iterative", "sequential"].choose(rng).unwrap();
        model = model.with_characteristic("lifecycle", CharacteristicValue::Categorical(lifecycle.into()));
    }
    let total = rng.gen_range(0..=max_objects);
    let mut pool: Vec<(ObjectKind, &str)> = MILESTONES
        .iter()
        .map(|n| (ObjectKind::Milestone, *n))
        .chain(PHASES.iter().map(|n| (ObjectKind::Phase, *n)))
        .chain(TASKS.iter().map(|n| (ObjectKind::Task, *n)))
        .collect();
    pool.shuffle(rng);
    pool.truncate(total);

    let mut ids: Vec<(String, ObjectKind)> = Vec::new();
    for (i, (kind, name)) in pool.iter().enumerate() {
        let object_id = format!("{id}-{i}-{}", rng.gen_range(0..1000));
        let mut object = ProcessObject::new(object_id.as_str(), *kind, respell(rng, name)).with_priority(priority(rng));
        if *kind == ObjectKind::Milestone {
            object.milestone = Some(MilestoneInfo { maturity: Some(rng.gen_range(0..=5)), ..MilestoneInfo::default() });
        }
        for attr in AttributeKind::ALL {
            if model.meta_model.contains(attr) && rng.gen_bool(0.2) {
                if let Some(value) = attribute(rng, attr) {
                    object.attributes.insert(attr, value);
                }
            }
        }
        let earlier_tasks: Vec<&String> = ids.iter().filter(|(_, k)| *k == ObjectKind::Task).map(|(i, _)| i).collect();
        if *kind == ObjectKind::Task && !earlier_tasks.is_empty() && rng.gen_bool(0.25) {
            object.parent = Some((*earlier_tasks.choose(rng).unwrap()).as_str().into());
        }
        model.insert(object);
        ids.push((object_id, *kind));
    }
    for (child, kind) in &ids {
        let containers: Vec<&String> =
            ids.iter().filter(|(_, k)| procline_core::model::may_contain(*k, *kind)).map(|(i, _)| i).collect();
        if !containers.is_empty() && rng.gen_bool(0.6) {
            let container = *containers.choose(rng).unwrap();
            model = model.with_container(child, container);
        }
    }
    for _ in 0..ids.len() {
        if ids.len() < 2 {
            break;
        }
        let from = &ids.choose(rng).unwrap().0;
        let to = &ids.choose(rng).unwrap().0;
        if from != to {
            model = model.with_edge(from, to);
        }
    }
    model.ensure_valid().expect("generator yields valid models");
    model
}

/// One to ten variants over levels 1..=3.
pub fn random_variant_set(rng: &mut impl Rng, max_objects: usize) -> Vec<ProcessModel> {
    let count = rng.gen_range(1..=10);
    (0..count)
        .map(|i| {
            let level = rng.gen_range(1..=3);
            random_model(rng, &format!("v{i}"), level, max_objects)
        })
        .collect()
}
