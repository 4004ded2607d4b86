//! Bottom-up reflection: activity logs, discovery of the performed process,
//! delta analysis against the prescriptive process, justified refinement
//! and replay checks for on-the-fly changes.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt;
use std::io::BufRead;

use chrono::{DateTime, FixedOffset, SecondsFormat};
use quick_xml::events::{BytesDecl, BytesEnd, BytesStart, Event as XmlEvent};
use quick_xml::{Reader, Writer};
use serde::{Deserialize, Serialize};

use crate::delta::{set_differences, ProcessDelta};
use crate::error::{Error, Result};
use crate::model::{
    normalize_name, AttributeKind, AttributeValue, Edge, IdentityKey, KeyEdge, MetaModel, ObjectId, ObjectKind,
    ProcessModel, ProcessObject,
};
use crate::tailoring::{remove_with_cascade, Approval};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Started,
    Completed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Started => "started",
            Status::Completed => "completed",
        }
    }

    fn parse(token: &str) -> Option<Self> {
        match token {
            "started" => Some(Status::Started),
            "completed" => Some(Status::Completed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub timestamp: DateTime<FixedOffset>,
    pub case_id: String,
    pub activity: String,
    pub status: Status,
    pub performer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    /// Source line in the text log, for diagnostics only.
    #[serde(skip)]
    pub line: Option<usize>,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.timestamp == other.timestamp
            && self.timestamp.offset() == other.timestamp.offset()
            && self.case_id == other.case_id
            && self.activity == other.activity
            && self.status == other.status
            && self.performer == other.performer
            && self.group == other.group
    }
}

impl Eq for Event {}

impl Event {
    pub fn new(
        timestamp: DateTime<FixedOffset>,
        case_id: &str,
        activity: &str,
        status: Status,
        performer: &str,
    ) -> Self {
        Event {
            timestamp,
            case_id: case_id.to_owned(),
            activity: activity.to_owned(),
            status,
            performer: performer.to_owned(),
            group: None,
            line: None,
        }
    }

    pub fn with_group(mut self, group: &str) -> Self {
        self.group = Some(group.to_owned());
        self
    }

    pub fn activity_key(&self) -> Result<IdentityKey> {
        IdentityKey::new(ObjectKind::Task, &self.activity)
    }
}

/// Events in timestamp order; ties keep their input order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, from = "LogRepr")]
pub struct EventLog {
    events: Vec<Event>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LogRepr {
    events: Vec<Event>,
}

impl From<LogRepr> for EventLog {
    fn from(repr: LogRepr) -> Self {
        EventLog::new(repr.events)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LogWarning {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    pub case_id: String,
    pub activity: String,
    pub performer: String,
    pub message: String,
}

impl fmt::Display for LogWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        write!(
            f,
            "{} (case `{}`, activity `{}`, performer `{}`)",
            self.message, self.case_id, self.activity, self.performer
        )
    }
}

/// A started/completed pair of one (case, activity, performer).
#[derive(Debug, Clone, Copy)]
pub struct EventPair<'a> {
    pub started: &'a Event,
    pub completed: &'a Event,
}

impl EventLog {
    pub fn new(mut events: Vec<Event>) -> Self {
        events.sort_by_key(|e| e.timestamp);
        EventLog { events }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// Distinct case ids in order of first appearance.
    pub fn case_ids(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.events.iter().filter(|e| seen.insert(e.case_id.as_str())).map(|e| e.case_id.as_str()).collect()
    }

    /// FIFO pairing of started and completed events per
    /// (case, activity, performer); also returns the events left unmatched.
    pub fn pair_events(&self) -> (Vec<EventPair<'_>>, Vec<&Event>) {
        let mut open: HashMap<(&str, &str, &str), VecDeque<&Event>> = HashMap::new();
        let mut pairs = Vec::new();
        let mut unmatched = Vec::new();
        for event in &self.events {
            let slot = (event.case_id.as_str(), event.activity.as_str(), event.performer.as_str());
            match event.status {
                Status::Started => open.entry(slot).or_default().push_back(event),
                Status::Completed => match open.get_mut(&slot).and_then(VecDeque::pop_front) {
                    Some(started) => pairs.push(EventPair { started, completed: event }),
                    None => unmatched.push(event),
                },
            }
        }
        let mut dangling: Vec<&Event> = open.into_values().flatten().collect();
        dangling.sort_by_key(|e| e.timestamp);
        unmatched.extend(dangling);
        (pairs, unmatched)
    }

    /// Completed events without an earlier unmatched start. They are kept
    /// in the log; callers decide how to surface them.
    pub fn warnings(&self) -> Vec<LogWarning> {
        let (_, unmatched) = self.pair_events();
        unmatched
            .into_iter()
            .filter(|e| e.status == Status::Completed)
            .map(|e| LogWarning {
                line: e.line,
                case_id: e.case_id.clone(),
                activity: e.activity.clone(),
                performer: e.performer.clone(),
                message: "completed without a matching start".into(),
            })
            .collect()
    }

    /// Completed activities per case, time-ordered; cases in order of first
    /// appearance.
    pub fn traces(&self) -> Vec<CasePrefix> {
        let mut traces: Vec<CasePrefix> = self
            .case_ids()
            .into_iter()
            .map(|case_id| CasePrefix { case_id: case_id.to_owned(), activities: Vec::new() })
            .collect();
        let index: HashMap<String, usize> = traces.iter().enumerate().map(|(i, t)| (t.case_id.clone(), i)).collect();
        for event in self.events.iter().filter(|e| e.status == Status::Completed) {
            traces[index[&event.case_id]].activities.push(event.activity.clone());
        }
        traces
    }
}

pub fn parse_event_log(text: &str) -> Result<EventLog> {
    read_event_log(text.as_bytes())
}

/// Streaming variant of [`parse_event_log`].
pub fn read_event_log(reader: impl BufRead) -> Result<EventLog> {
    let mut events = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        let number = index + 1;
        let content = line.trim();
        if content.is_empty() || content.starts_with('#') {
            continue;
        }
        events.push(parse_line(content, number)?);
    }
    Ok(EventLog::new(events))
}

fn parse_line(content: &str, line: usize) -> Result<Event> {
    let fields: Vec<&str> = content.split(';').map(str::trim).collect();
    if !(5..=6).contains(&fields.len()) {
        return Err(Error::Parse {
            line,
            field: "record",
            message: format!("expected 5 or 6 `;`-separated fields, found {}", fields.len()),
        });
    }
    let required = |index: usize, field: &'static str| -> Result<String> {
        let value = fields[index];
        if value.is_empty() {
            return Err(Error::Parse { line, field, message: "empty value".into() });
        }
        Ok(value.to_owned())
    };
    let timestamp = DateTime::parse_from_rfc3339(fields[0]).map_err(|e| Error::Parse {
        line,
        field: "timestamp",
        message: format!("`{}`: {e}", fields[0]),
    })?;
    let status = Status::parse(fields[3]).ok_or_else(|| Error::Parse {
        line,
        field: "status",
        message: format!("unknown status token `{}`", fields[3]),
    })?;
    Ok(Event {
        timestamp,
        case_id: required(1, "case")?,
        activity: required(2, "activity")?,
        status,
        performer: required(4, "performer")?,
        group: fields.get(5).filter(|g| !g.is_empty()).map(|g| (*g).to_owned()),
        line: Some(line),
    })
}

fn format_timestamp(timestamp: &DateTime<FixedOffset>) -> String {
    timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, false)
}

/// Canonical text form: one `TIMESTAMP;CASE;ACTIVITY;STATUS;PERFORMER[;GROUP]`
/// line per event.
pub fn write_event_log(log: &EventLog) -> String {
    let mut out = String::new();
    for event in &log.events {
        out.push_str(&format_timestamp(&event.timestamp));
        for field in [&event.case_id, &event.activity] {
            out.push(';');
            out.push_str(field);
        }
        out.push(';');
        out.push_str(event.status.as_str());
        out.push(';');
        out.push_str(&event.performer);
        if let Some(group) = &event.group {
            out.push(';');
            out.push_str(group);
        }
        out.push('\n');
    }
    out
}

const XML_ROOT: &str = "event-log";
const XML_EVENT: &str = "event";

pub fn export_log_xml(log: &EventLog) -> String {
    let mut writer = Writer::new_with_indent(Vec::new(), b' ', 2);
    let write = |writer: &mut Writer<Vec<u8>>, event: XmlEvent<'_>| {
        writer.write_event(event).expect("writing to memory cannot fail");
    };
    write(&mut writer, XmlEvent::Decl(BytesDecl::new("1.0", Some("UTF-8"), None)));
    write(&mut writer, XmlEvent::Start(BytesStart::new(XML_ROOT)));
    for event in &log.events {
        let timestamp = format_timestamp(&event.timestamp);
        let mut element = BytesStart::new(XML_EVENT);
        element.push_attribute(("timestamp", timestamp.as_str()));
        element.push_attribute(("case", event.case_id.as_str()));
        element.push_attribute(("activity", event.activity.as_str()));
        element.push_attribute(("status", event.status.as_str()));
        element.push_attribute(("performer", event.performer.as_str()));
        if let Some(group) = &event.group {
            element.push_attribute(("group", group.as_str()));
        }
        write(&mut writer, XmlEvent::Empty(element));
    }
    write(&mut writer, XmlEvent::End(BytesEnd::new(XML_ROOT)));
    let mut text = String::from_utf8(writer.into_inner()).expect("xml writer emits utf-8");
    text.push('\n');
    text
}

/// Reads a document produced by [`export_log_xml`].
pub fn import_log_xml(text: &str) -> Result<EventLog> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);
    let mut events = Vec::new();
    let mut seen_root = false;
    let mut in_root = false;
    loop {
        let event = reader.read_event().map_err(|e| Error::Xml(e.to_string()))?;
        match event {
            XmlEvent::Start(ref element) | XmlEvent::Empty(ref element)
                if !in_root && !seen_root && element.name().as_ref() == XML_ROOT.as_bytes() =>
            {
                seen_root = true;
                in_root = matches!(event, XmlEvent::Start(_));
            }
            XmlEvent::Start(ref element) | XmlEvent::Empty(ref element)
                if in_root && element.name().as_ref() == XML_EVENT.as_bytes() =>
            {
                events.push(event_from_xml(element)?);
            }
            XmlEvent::End(element) if in_root && element.name().as_ref() == XML_EVENT.as_bytes() => {}
            XmlEvent::End(element) if in_root && element.name().as_ref() == XML_ROOT.as_bytes() => {
                in_root = false;
            }
            XmlEvent::Start(element) | XmlEvent::Empty(element) => {
                return Err(Error::Xml(format!(
                    "unexpected element `{}`",
                    String::from_utf8_lossy(element.name().as_ref())
                )))
            }
            XmlEvent::Text(text) if !text.is_empty() => return Err(Error::Xml("unexpected text content".into())),
            XmlEvent::Eof => break,
            _ => {}
        }
    }
    if !seen_root || in_root {
        return Err(Error::Xml(format!("missing or unterminated `{XML_ROOT}` root element")));
    }
    Ok(EventLog::new(events))
}

fn event_from_xml(element: &BytesStart<'_>) -> Result<Event> {
    let mut fields: BTreeMap<String, String> = BTreeMap::new();
    for attribute in element.attributes() {
        let attribute = attribute.map_err(|e| Error::Xml(e.to_string()))?;
        let name = String::from_utf8_lossy(attribute.key.as_ref()).into_owned();
        let value = attribute.unescape_value().map_err(|e| Error::Xml(e.to_string()))?.into_owned();
        if !matches!(name.as_str(), "timestamp" | "case" | "activity" | "status" | "performer" | "group") {
            return Err(Error::Xml(format!("unknown event attribute `{name}`")));
        }
        fields.insert(name, value);
    }
    let mut take = |name: &str| {
        fields
            .remove(name)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| Error::Xml(format!("event lacks attribute `{name}`")))
    };
    let timestamp = take("timestamp")?;
    let timestamp =
        DateTime::parse_from_rfc3339(&timestamp).map_err(|e| Error::Xml(format!("timestamp `{timestamp}`: {e}")))?;
    let case_id = take("case")?;
    let activity = take("activity")?;
    let status = take("status")?;
    let status = Status::parse(&status).ok_or_else(|| Error::Xml(format!("unknown status token `{status}`")))?;
    let performer = take("performer")?;
    Ok(Event { timestamp, case_id, activity, status, performer, group: fields.remove("group"), line: None })
}

/// Abstraction index given to discovered models: they are as detailed as
/// the log itself.
pub const DISCOVERED_ABSTRACTION_INDEX: u32 = u32::MAX;
pub const DISCOVERED_MODEL_ID: &str = "performed";

/// Directly-follows discovery: one task per activity, and an edge `(a, b)`
/// whenever some case completes `b` right after `a`.
pub fn discover_process(log: &EventLog) -> ProcessModel {
    let mut model =
        ProcessModel::new(DISCOVERED_MODEL_ID, DISCOVERED_ABSTRACTION_INDEX, MetaModel::new([AttributeKind::Roles]));
    // activity key -> (task id, performers)
    let mut tasks: BTreeMap<String, (ObjectId, BTreeSet<String>)> = BTreeMap::new();
    for event in log.events() {
        let key = normalize_name(&event.activity);
        if key.is_empty() {
            continue;
        }
        tasks
            .entry(key)
            .or_insert_with(|| (ObjectId::new(event.activity.clone()), BTreeSet::new()))
            .1
            .insert(event.performer.clone());
    }
    for (id, performers) in tasks.values() {
        model.insert(
            ProcessObject::task(id.as_str(), id.as_str())
                .with_attribute(AttributeKind::Roles, AttributeValue::Names(performers.iter().cloned().collect())),
        );
    }
    let id_of = |activity: &str| tasks.get(&normalize_name(activity)).map(|t| t.0.clone());
    for trace in log.traces() {
        for pair in trace.activities.windows(2) {
            if let (Some(from), Some(to)) = (id_of(&pair[0]), id_of(&pair[1])) {
                model.edges.insert(Edge::new(from, to));
            }
        }
    }
    model
}

/// Ordering relation between two activities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Relation {
    /// a → b
    Precedes,
    /// a ← b
    Follows,
    /// a ∥ b
    Parallel,
    /// a # b
    Unrelated,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Precedes => "→",
            Relation::Follows => "←",
            Relation::Parallel => "∥",
            Relation::Unrelated => "#",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FootprintMatrix {
    pub activities: Vec<IdentityKey>,
    pub relations: Vec<Vec<Relation>>,
}

impl FootprintMatrix {
    pub fn get(&self, a: &IdentityKey, b: &IdentityKey) -> Option<Relation> {
        let i = self.activities.binary_search(a).ok()?;
        let j = self.activities.binary_search(b).ok()?;
        Some(self.relations[i][j])
    }
}

/// Footprint of a directly-follows relation. Edge endpoints missing from
/// `activities` are added to it.
pub fn footprint(edges: &BTreeSet<KeyEdge>, activities: &BTreeSet<IdentityKey>) -> FootprintMatrix {
    let mut all = activities.clone();
    for edge in edges {
        all.insert(edge.from.clone());
        all.insert(edge.to.clone());
    }
    let activities: Vec<IdentityKey> = all.into_iter().collect();
    let relations = activities
        .iter()
        .map(|a| {
            activities
                .iter()
                .map(|b| {
                    let forward = edges.contains(&Edge::new(a.clone(), b.clone()));
                    let backward = edges.contains(&Edge::new(b.clone(), a.clone()));
                    match (forward, backward) {
                        (true, true) => Relation::Parallel,
                        (true, false) => Relation::Precedes,
                        (false, true) => Relation::Follows,
                        (false, false) => Relation::Unrelated,
                    }
                })
                .collect()
        })
        .collect();
    FootprintMatrix { activities, relations }
}

/// A pair of shared activities ordered differently by the two models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationConflict {
    pub first: IdentityKey,
    pub second: IdentityKey,
    pub prescribed: Relation,
    pub performed: Relation,
}

/// Prescriptive-vs-performed delta over activities (tasks). Milestones and
/// phases of the prescriptive model have no counterpart in a log and are
/// left out.
pub fn compute_delta(prescriptive: &ProcessModel, performed: &ProcessModel, log: &EventLog) -> ProcessDelta {
    let prescribed_tasks = prescriptive.keys_of_kind(ObjectKind::Task);
    let performed_tasks = performed.keys_of_kind(ObjectKind::Task);
    let (missing_objects, extra_objects) = set_differences(&prescribed_tasks, &performed_tasks);

    let prescribed_edges = prescriptive.key_edges_among(ObjectKind::Task);
    let performed_edges = performed.key_edges_among(ObjectKind::Task);
    let (missing_edges, extra_edges) = set_differences(&prescribed_edges, &performed_edges);

    let shared: BTreeSet<IdentityKey> = prescribed_tasks.intersection(&performed_tasks).cloned().collect();
    let restrict = |edges: &BTreeSet<KeyEdge>| -> BTreeSet<KeyEdge> {
        edges.iter().filter(|e| shared.contains(&e.from) && shared.contains(&e.to)).cloned().collect()
    };
    let prescribed_fp = footprint(&restrict(&prescribed_edges), &shared);
    let performed_fp = footprint(&restrict(&performed_edges), &shared);
    let mut relation_conflicts = Vec::new();
    for (i, first) in prescribed_fp.activities.iter().enumerate() {
        for (j, second) in prescribed_fp.activities.iter().enumerate().skip(i) {
            let prescribed = prescribed_fp.relations[i][j];
            let performed = performed_fp.relations[i][j];
            if prescribed != performed {
                relation_conflicts.push(RelationConflict {
                    first: first.clone(),
                    second: second.clone(),
                    prescribed,
                    performed,
                });
            }
        }
    }

    let (frequency, case_count) = case_support(log);
    ProcessDelta {
        missing_objects,
        extra_objects,
        missing_edges,
        extra_edges,
        relation_conflicts,
        frequency,
        case_count,
        ..ProcessDelta::default()
    }
}

/// Activity -> distinct cases completing it, plus the total case count.
pub fn case_support(log: &EventLog) -> (BTreeMap<IdentityKey, usize>, usize) {
    let traces = log.traces();
    let mut frequency = BTreeMap::new();
    for trace in &traces {
        let keys: BTreeSet<IdentityKey> =
            trace.activities.iter().filter_map(|a| IdentityKey::new(ObjectKind::Task, a).ok()).collect();
        for key in keys {
            *frequency.entry(key).or_insert(0) += 1;
        }
    }
    (frequency, traces.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum RefinementTarget {
    Object { key: IdentityKey },
    Edge { from: IdentityKey, to: IdentityKey },
}

impl fmt::Display for RefinementTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefinementTarget::Object { key } => write!(f, "{key}"),
            RefinementTarget::Edge { from, to } => write!(f, "edge {from} -> {to}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RefinementAction {
    Add,
    Remove,
    Keep,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementDecision {
    pub target: RefinementTarget,
    pub action: RefinementAction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub approval: Option<Approval>,
}

impl RefinementDecision {
    pub fn object(key: IdentityKey, action: RefinementAction) -> Self {
        RefinementDecision { target: RefinementTarget::Object { key }, action, approval: None }
    }

    pub fn edge(edge: KeyEdge, action: RefinementAction) -> Self {
        RefinementDecision { target: RefinementTarget::Edge { from: edge.from, to: edge.to }, action, approval: None }
    }

    pub fn approved(mut self, approval: Approval) -> Self {
        self.approval = Some(approval);
        self
    }
}

/// Default share of cases an extra activity needs to be suggested.
pub const DEFAULT_THETA: f64 = 0.5;

/// Extra activities supported by at least `theta` of the cases.
pub fn suggest_additions(delta: &ProcessDelta, theta: f64) -> Result<Vec<IdentityKey>> {
    check_theta(theta)?;
    if delta.case_count == 0 {
        return Ok(Vec::new());
    }
    Ok(delta.extra_objects.iter().filter(|k| delta.support(k) >= theta).cloned().collect())
}

fn check_theta(theta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&theta) {
        Ok(())
    } else {
        Err(Error::InvalidQuery(format!("theta {theta} is outside [0, 1]")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Refinement {
    pub model: ProcessModel,
    /// Suggested additions; they still need an explicit `add` decision.
    pub suggestions: Vec<IdentityKey>,
}

/// Applies refinement decisions to the prescriptive process. Object
/// decisions run before edge decisions, each group in list order. Guarded
/// removals land in `ledger`; on error neither the model nor the ledger
/// changes.
pub fn refine_process(
    prescriptive: &ProcessModel,
    performed: &ProcessModel,
    delta: &ProcessDelta,
    decisions: &[RefinementDecision],
    theta: f64,
    ledger: &mut JustificationLedger,
    at: DateTime<FixedOffset>,
) -> Result<Refinement> {
    let suggestions = suggest_additions(delta, theta)?;
    let mut model = prescriptive.clone();
    let mut entries = Vec::new();
    let (objects, edges): (Vec<_>, Vec<_>) =
        decisions.iter().partition(|d| matches!(d.target, RefinementTarget::Object { .. }));
    for decision in objects.into_iter().chain(edges) {
        check_in_delta(decision, delta)?;
        match (&decision.target, decision.action) {
            (_, RefinementAction::Keep) => {}
            (RefinementTarget::Object { key }, RefinementAction::Add) => {
                let source = performed
                    .find(key)
                    .ok_or_else(|| Error::NotFound { what: "performed object", name: key.to_string() })?;
                if model.find(key).is_some() {
                    return Err(Error::Duplicate { what: "object", name: key.to_string() });
                }
                let mut object = ProcessObject::new(source.id.as_str(), key.kind, source.name.clone());
                object.id = model.fresh_id(&source.id);
                object.attributes = source
                    .attributes
                    .iter()
                    .filter(|(kind, _)| model.meta_model.contains(**kind))
                    .map(|(k, v)| (*k, v.clone()))
                    .collect();
                model.insert(object);
            }
            (RefinementTarget::Object { key }, RefinementAction::Remove) => {
                let id = model
                    .find(key)
                    .map(|o| o.id.clone())
                    .ok_or_else(|| Error::NotFound { what: "object", name: key.to_string() })?;
                let (next, removed) =
                    remove_with_cascade(&model, &id, decision.approval.as_ref(), "refine-remove", at)?;
                model = next;
                entries.extend(removed);
            }
            (RefinementTarget::Edge { from, to }, RefinementAction::Remove)
                if model.find(from).is_none() || model.find(to).is_none() =>
            {
                // an earlier object removal already took the edge with it
            }
            (RefinementTarget::Edge { from, to }, action) => {
                let resolve = |key: &IdentityKey| {
                    model
                        .find(key)
                        .map(|o| o.id.clone())
                        .ok_or_else(|| Error::NotFound { what: "object", name: key.to_string() })
                };
                let edge = Edge::new(resolve(from)?, resolve(to)?);
                if action == RefinementAction::Add {
                    model.edges.insert(edge);
                } else {
                    model.edges.remove(&edge);
                }
            }
        }
    }
    model.ensure_valid()?;
    ledger.extend(entries);
    Ok(Refinement { model, suggestions })
}

fn check_in_delta(decision: &RefinementDecision, delta: &ProcessDelta) -> Result<()> {
    let (in_missing, in_extra) = match &decision.target {
        RefinementTarget::Object { key } => (delta.missing_objects.contains(key), delta.extra_objects.contains(key)),
        RefinementTarget::Edge { from, to } => {
            let edge = Edge::new(from.clone(), to.clone());
            (delta.missing_edges.contains(&edge), delta.extra_edges.contains(&edge))
        }
    };
    let ok = match decision.action {
        RefinementAction::Add => in_extra,
        RefinementAction::Remove => in_missing,
        RefinementAction::Keep => in_missing || in_extra,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::NotInDelta { target: decision.target.to_string() })
    }
}

/// A running case's completed activities, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CasePrefix {
    pub case_id: String,
    pub activities: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaseVerdict {
    pub case_id: String,
    pub accepted: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub verdicts: Vec<CaseVerdict>,
    /// True when every active case can continue on the changed model.
    pub safe: bool,
}

/// Replays each prefix on `changed`: every activity must be a task of the
/// model and every consecutive pair one of its edges.
pub fn check_replayability(changed: &ProcessModel, prefixes: &[CasePrefix]) -> ReplayReport {
    let tasks = changed.keys_of_kind(ObjectKind::Task);
    let edges = changed.key_edges_among(ObjectKind::Task);
    let verdicts: Vec<CaseVerdict> = prefixes
        .iter()
        .map(|prefix| {
            let reason = replay_failure(prefix, &tasks, &edges);
            CaseVerdict { case_id: prefix.case_id.clone(), accepted: reason.is_none(), reason }
        })
        .collect();
    let safe = verdicts.iter().all(|v| v.accepted);
    ReplayReport { verdicts, safe }
}

fn replay_failure(prefix: &CasePrefix, tasks: &BTreeSet<IdentityKey>, edges: &BTreeSet<KeyEdge>) -> Option<String> {
    let mut keys = Vec::with_capacity(prefix.activities.len());
    for activity in &prefix.activities {
        match IdentityKey::new(ObjectKind::Task, activity) {
            Ok(key) if tasks.contains(&key) => keys.push(key),
            _ => return Some(format!("activity `{activity}` is not in the changed model")),
        }
    }
    keys.windows(2)
        .find(|pair| !edges.contains(&Edge::new(pair[0].clone(), pair[1].clone())))
        .map(|pair| format!("no edge {} -> {}", pair[0], pair[1]))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LedgerEntry {
    pub timestamp: DateTime<FixedOffset>,
    pub actor: String,
    pub action: String,
    pub target: String,
    pub justification: String,
}

/// Append-only audit trail of guarded removals.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JustificationLedger {
    entries: Vec<LedgerEntry>,
}

impl JustificationLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, entry: LedgerEntry) {
        self.entries.push(entry);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Extend<LedgerEntry> for JustificationLedger {
    fn extend<I: IntoIterator<Item = LedgerEntry>>(&mut self, iter: I) {
        self.entries.extend(iter);
    }
}
