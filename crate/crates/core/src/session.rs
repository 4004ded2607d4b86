//! The event-sourced acquisition session: selection, cut, variant choice,
//! tailoring, then alternating execution and reflection.
//!
//! A session's state is a pure function of its base and transcript, so a
//! saved session is just those two plus the ledger, which is cross-checked
//! on load.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};

use crate::delta::ProcessDelta;
use crate::error::{Error, Result};
use crate::line::{build_process_line, cut_at_abstraction, reconstruct_variant, ProcessLine};
use crate::model::{AttributeKind, IdentityKey, ProcessModel};
use crate::persist::{check_version, parse_json, write_json, SCHEMA_VERSION};
use crate::reflection::{
    compute_delta, discover_process, refine_process, EventLog, JustificationLedger, RefinementDecision, DEFAULT_THETA,
};
use crate::selection::{mark_selected, select_top_k, ProjectCharacteristic, SelectionState, VariantScore};
use crate::tailoring::{
    adapt_meta_model, apply_fixes, apply_tailoring, check_consistency, standard_tailoring, ConsistencyViolation,
    TailoringAction, TailoringPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Selecting,
    Cutting,
    Tailoring,
    Executing,
    Reflecting,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Phase::Selecting => "selecting",
            Phase::Cutting => "cutting",
            Phase::Tailoring => "tailoring",
            Phase::Executing => "executing",
            Phase::Reflecting => "reflecting",
            Phase::Done => "done",
        };
        f.write_str(name)
    }
}

fn default_true() -> bool {
    true
}

fn default_theta() -> f64 {
    DEFAULT_THETA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SessionAction {
    /// Ranks the base and builds the process line over the top `k`.
    SelectTopK {
        characteristics: Vec<ProjectCharacteristic>,
        k: usize,
        #[serde(default = "default_true")]
        ordinal_distance: bool,
    },
    Cut {
        level: u32,
    },
    Select {
        variant_id: String,
    },
    BackToSelection,
    AdaptMetaModel {
        #[serde(default)]
        add: BTreeSet<AttributeKind>,
        #[serde(default)]
        remove: BTreeSet<AttributeKind>,
    },
    Tailor {
        change: TailoringAction,
    },
    StandardTailoring {
        plan: TailoringPlan,
    },
    /// Restores the minimal-requirement objects the consistency check
    /// reports missing.
    ApplyFixes,
    StartExecution,
    /// Adds events to the session log, rediscovers and recomputes the delta.
    IngestLog {
        log: EventLog,
    },
    Refine {
        decisions: Vec<RefinementDecision>,
        #[serde(default = "default_theta")]
        theta: f64,
    },
    ContinueExecution,
    Finish,
}

impl SessionAction {
    pub fn name(&self) -> &'static str {
        match self {
            SessionAction::SelectTopK { .. } => "select-top-k",
            SessionAction::Cut { .. } => "cut",
            SessionAction::Select { .. } => "select",
            SessionAction::BackToSelection => "back-to-selection",
            SessionAction::AdaptMetaModel { .. } => "adapt-meta-model",
            SessionAction::Tailor { .. } => "tailor",
            SessionAction::StandardTailoring { .. } => "standard-tailoring",
            SessionAction::ApplyFixes => "apply-fixes",
            SessionAction::StartExecution => "start-execution",
            SessionAction::IngestLog { .. } => "ingest-log",
            SessionAction::Refine { .. } => "refine",
            SessionAction::ContinueExecution => "continue-execution",
            SessionAction::Finish => "finish",
        }
    }

    fn allowed_in(&self, phase: Phase) -> bool {
        use Phase::*;
        match self {
            SessionAction::SelectTopK { .. } => matches!(phase, Selecting | Cutting),
            SessionAction::Cut { .. } | SessionAction::Select { .. } => phase == Cutting,
            SessionAction::BackToSelection => matches!(phase, Cutting | Tailoring),
            SessionAction::AdaptMetaModel { .. }
            | SessionAction::Tailor { .. }
            | SessionAction::StandardTailoring { .. }
            | SessionAction::ApplyFixes
            | SessionAction::StartExecution => phase == Tailoring,
            SessionAction::IngestLog { .. } => matches!(phase, Executing | Reflecting),
            SessionAction::Refine { .. } | SessionAction::ContinueExecution => phase == Reflecting,
            SessionAction::Finish => matches!(phase, Executing | Reflecting),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranscriptEntry {
    pub at: DateTime<FixedOffset>,
    pub action: SessionAction,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Session {
    pub id: String,
    #[serde(skip)]
    pub base: Vec<ProcessModel>,
    pub phase: Phase,
    pub ranking: Vec<VariantScore>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<ProcessLine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected: Option<ProcessModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub working: Option<ProcessModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log: Option<EventLog>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub performed: Option<ProcessModel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<ProcessDelta>,
    pub suggestions: Vec<IdentityKey>,
    pub ledger: JustificationLedger,
    pub transcript: Vec<TranscriptEntry>,
}

impl Session {
    pub fn new(id: &str, base: Vec<ProcessModel>) -> Self {
        Session {
            id: id.to_owned(),
            base,
            phase: Phase::Selecting,
            ranking: Vec::new(),
            line: None,
            selection: None,
            selected: None,
            working: None,
            log: None,
            performed: None,
            delta: None,
            suggestions: Vec::new(),
            ledger: JustificationLedger::new(),
            transcript: Vec::new(),
        }
    }

    /// The session after `action`, with the action appended to the
    /// transcript. `self` is left untouched on error.
    pub fn apply(&self, action: SessionAction, at: DateTime<FixedOffset>) -> Result<Session> {
        if !action.allowed_in(self.phase) {
            return Err(Error::PhaseIllegal { phase: self.phase.to_string(), action: action.name().to_owned() });
        }
        let mut next = self.clone();
        next.step(&action, at)?;
        next.transcript.push(TranscriptEntry { at, action });
        Ok(next)
    }

    /// Rebuilds a session from its base and transcript.
    pub fn replay(id: &str, base: Vec<ProcessModel>, transcript: &[TranscriptEntry]) -> Result<Session> {
        transcript.iter().try_fold(Session::new(id, base), |s, entry| s.apply(entry.action.clone(), entry.at))
    }

    /// Missing minimal-requirement objects of the selected process.
    pub fn consistency(&self) -> Vec<ConsistencyViolation> {
        match (&self.selected, &self.working) {
            (Some(selected), Some(working)) => check_consistency(selected, working),
            _ => Vec::new(),
        }
    }

    fn reset_selection(&mut self) {
        self.ranking.clear();
        self.line = None;
        self.selection = None;
        self.selected = None;
        self.working = None;
    }

    fn step(&mut self, action: &SessionAction, at: DateTime<FixedOffset>) -> Result<()> {
        match action {
            SessionAction::SelectTopK { characteristics, k, ordinal_distance } => {
                let ranking = select_top_k(&self.base, characteristics, *k, *ordinal_distance)?;
                let ranked: Vec<ProcessModel> =
                    ranking.iter().filter_map(|s| self.base.iter().find(|v| v.id == s.variant_id).cloned()).collect();
                self.reset_selection();
                self.line = Some(build_process_line(&ranked)?);
                self.ranking = ranking;
                self.phase = Phase::Cutting;
            }
            SessionAction::Cut { level } => {
                let line = self.line.as_ref().ok_or(Error::Empty("process line"))?;
                self.selection = Some(SelectionState::new(cut_at_abstraction(line, *level)?));
            }
            SessionAction::Select { variant_id } => {
                let state = self.selection.as_ref().ok_or(Error::Empty("cut"))?;
                let state = mark_selected(state, variant_id)?;
                let line = self.line.as_ref().expect("a cut implies a line");
                let selected = reconstruct_variant(line, variant_id)?;
                self.working = Some(selected.clone());
                self.selected = Some(selected);
                self.selection = Some(state);
                self.phase = Phase::Tailoring;
            }
            SessionAction::BackToSelection => {
                self.reset_selection();
                self.phase = Phase::Selecting;
            }
            SessionAction::AdaptMetaModel { add, remove } => {
                self.working = Some(adapt_meta_model(working(&self.working)?, add, remove)?);
            }
            SessionAction::Tailor { change } => {
                let next = apply_tailoring(working(&self.working)?, change, &mut self.ledger, at)?;
                self.working = Some(next);
            }
            SessionAction::StandardTailoring { plan } => {
                let next = standard_tailoring(working(&self.working)?, plan, &mut self.ledger, at)?;
                self.working = Some(next);
            }
            SessionAction::ApplyFixes => {
                let selected = self.selected.as_ref().ok_or(Error::Empty("selected process"))?;
                let violations = self.consistency();
                self.working = Some(apply_fixes(working(&self.working)?, &violations, selected)?);
            }
            SessionAction::StartExecution => {
                working(&self.working)?;
                self.phase = Phase::Executing;
            }
            SessionAction::IngestLog { log } => {
                let mut events = self.log.take().map(|l| l.events().to_vec()).unwrap_or_default();
                events.extend(log.events().iter().cloned());
                let log = EventLog::new(events);
                let performed = discover_process(&log);
                self.delta = Some(compute_delta(working(&self.working)?, &performed, &log));
                self.performed = Some(performed);
                self.log = Some(log);
                self.suggestions.clear();
                self.phase = Phase::Reflecting;
            }
            SessionAction::Refine { decisions, theta } => {
                let performed = self.performed.as_ref().ok_or(Error::Empty("performed process"))?;
                let delta = self.delta.as_ref().ok_or(Error::Empty("delta"))?;
                let log = self.log.as_ref().ok_or(Error::Empty("event log"))?;
                let refinement =
                    refine_process(working(&self.working)?, performed, delta, decisions, *theta, &mut self.ledger, at)?;
                self.delta = Some(compute_delta(&refinement.model, performed, log));
                self.suggestions = refinement.suggestions;
                self.working = Some(refinement.model);
            }
            SessionAction::ContinueExecution => self.phase = Phase::Executing,
            SessionAction::Finish => self.phase = Phase::Done,
        }
        Ok(())
    }
}

fn working(model: &Option<ProcessModel>) -> Result<&ProcessModel> {
    model.as_ref().ok_or(Error::Empty("working model"))
}

/// What a session file stores. The ledger is redundant with the
/// transcript and must agree with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub schema_version: u32,
    pub id: String,
    pub base: Vec<ProcessModel>,
    pub transcript: Vec<TranscriptEntry>,
    pub ledger: JustificationLedger,
}

impl From<&Session> for SessionRecord {
    fn from(session: &Session) -> Self {
        SessionRecord {
            schema_version: SCHEMA_VERSION,
            id: session.id.clone(),
            base: session.base.clone(),
            transcript: session.transcript.clone(),
            ledger: session.ledger.clone(),
        }
    }
}

impl SessionRecord {
    pub fn restore(self) -> Result<Session> {
        let session = Session::replay(&self.id, self.base, &self.transcript)?;
        if session.ledger != self.ledger {
            return Err(Error::TranscriptMismatch(format!(
                "stored ledger has {} entries, replay produces {}",
                self.ledger.len(),
                session.ledger.len()
            )));
        }
        Ok(session)
    }
}

pub fn parse_session(text: &str, path: Option<&Path>) -> Result<Session> {
    check_version(text, path)?;
    parse_json::<SessionRecord>(text, path)?.restore()
}

pub fn load_session(path: &Path) -> Result<Session> {
    parse_session(&fs::read_to_string(path)?, Some(path))
}

pub fn save_session(session: &Session, path: &Path) -> Result<()> {
    write_json(&SessionRecord::from(session), path)
}
