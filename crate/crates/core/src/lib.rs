//! Acquisition of project-specific software processes from a process line.
//!
//! The crate covers the full loop: pick and cut a process line top-down
//! ([`selection`], [`line`]), tailor the chosen variant under
//! minimal-requirement guards ([`tailoring`]), then refine it bottom-up from
//! activity logs ([`reflection`]). [`analytics`] aggregates effort data and
//! [`persist`] / [`session`] provide file formats and the event-sourced
//! session state machine used by the CLI and the service.

pub mod analytics;
pub mod delta;
pub mod error;
pub mod line;
pub mod model;
pub mod persist;
pub mod reflection;
pub mod selection;
pub mod session;
pub mod tailoring;

pub use error::{Error, Result};
pub use model::{
    identity_key, validate_model, AttributeKind, AttributeValue, DataDependency, Edge, IdentityKey, KeyEdge, MetaModel,
    ObjectId, ObjectKind, Priority, ProcessModel, ProcessObject,
};
