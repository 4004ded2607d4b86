use std::path::PathBuf;

use crate::model::{AttributeKind, IdentityKey, Violation};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid object: {0}")]
    InvalidObject(String),

    #[error("model `{model}` is invalid: {}", join_violations(.violations))]
    InvalidModel { model: String, violations: Vec<Violation> },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("duplicate {what} `{name}`")]
    Duplicate { what: &'static str, name: String },

    #[error("{what} `{name}` not found")]
    NotFound { what: &'static str, name: String },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("invalid abstraction level {0}; levels start at 1")]
    InvalidLevel(u32),

    #[error("attribute kind `{0}` is mandatory and cannot be removed")]
    MandatoryKind(AttributeKind),

    #[error("attribute kind `{0}` is not part of the meta model")]
    KindDisabled(AttributeKind),

    #[error("removing minimal-requirement object {target} needs an approval with a justification")]
    ApprovalRequired { target: IdentityKey },

    #[error("task `{task}` references unknown milestone `{milestone}`")]
    UnknownMilestone { task: String, milestone: String },

    #[error("sub-task links form a cycle through `{0}`")]
    CyclicParent(String),

    #[error("{target} is not part of the delta")]
    NotInDelta { target: String },

    #[error("line {line}: invalid {field}: {message}")]
    Parse { line: usize, field: &'static str, message: String },

    #[error("xml: {0}")]
    Xml(String),

    #[error("line {line}: {message}")]
    Csv { line: u64, message: String },

    #[error("unknown {what} `{name}`")]
    UnknownLabel { what: &'static str, name: String },

    #[error("comparison needs at least two groups, got {0}")]
    TooFewGroups(usize),

    #[error("{}:{line}:{column}: {message}", .path.as_ref().map(|p| p.display().to_string()).unwrap_or_else(|| "<input>".into()))]
    Json { path: Option<PathBuf>, line: usize, column: usize, message: String },

    #[error("schema version {found} needs migration to {expected}")]
    MigrationRequired { found: u32, expected: u32 },

    #[error("action `{action}` is not allowed in phase `{phase}`")]
    PhaseIllegal { phase: String, action: String },

    #[error("session record is inconsistent: {0}")]
    TranscriptMismatch(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable machine-readable code, used by the CLI and the service.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidObject(_) => "invalid-object",
            Error::InvalidModel { .. } => "invalid-model",
            Error::Empty(_) => "empty-input",
            Error::Duplicate { .. } => "duplicate",
            Error::NotFound { .. } => "not-found",
            Error::InvalidQuery(_) => "invalid-query",
            Error::InvalidLevel(_) => "invalid-level",
            Error::MandatoryKind(_) => "mandatory-kind",
            Error::KindDisabled(_) => "kind-disabled",
            Error::ApprovalRequired { .. } => "approval-required",
            Error::UnknownMilestone { .. } => "unknown-milestone",
            Error::CyclicParent(_) => "cyclic-parent",
            Error::NotInDelta { .. } => "not-in-delta",
            Error::Parse { .. } => "parse-error",
            Error::Xml(_) => "xml-error",
            Error::Csv { .. } => "csv-error",
            Error::UnknownLabel { .. } => "unknown-label",
            Error::TooFewGroups(_) => "too-few-groups",
            Error::Json { .. } => "parse-error",
            Error::MigrationRequired { .. } => "migration-required",
            Error::PhaseIllegal { .. } => "phase-illegal",
            Error::TranscriptMismatch(_) => "transcript-mismatch",
            Error::Io(_) => "io-error",
        }
    }

    pub(crate) fn json(path: Option<PathBuf>, err: serde_json::Error) -> Self {
        Error::Json { path, line: err.line(), column: err.column(), message: err.to_string() }
    }
}

fn join_violations(violations: &[Violation]) -> String {
    violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}
