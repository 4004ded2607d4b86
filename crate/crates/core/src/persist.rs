//! JSON files: the process base and generic helpers for the other
//! artifacts. Unknown fields are rejected and errors carry line/column.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ProcessModel;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessBase {
    pub schema_version: u32,
    pub variants: Vec<ProcessModel>,
}

impl ProcessBase {
    pub fn new(variants: Vec<ProcessModel>) -> Self {
        ProcessBase { schema_version: SCHEMA_VERSION, variants }
    }

    pub fn variant(&self, id: &str) -> Option<&ProcessModel> {
        self.variants.iter().find(|v| v.id == id)
    }

    /// Unique variant ids and every variant valid.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for variant in &self.variants {
            if !seen.insert(variant.id.as_str()) {
                return Err(Error::Duplicate { what: "variant id", name: variant.id.clone() });
            }
            variant.ensure_valid()?;
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

/// Parses JSON text; `path` only labels diagnostics.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: Option<&Path>) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::json(path.map(Path::to_path_buf), e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_json(&fs::read_to_string(path)?, Some(path))
}

/// Pretty JSON with a trailing newline.
pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize to JSON");
    text.push('\n');
    text
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, to_json(value))?;
    Ok(())
}

/// The version is checked before the full document, so files from another
/// schema fail with `MigrationRequired` rather than a field error.
pub(crate) fn check_version(text: &str, path: Option<&Path>) -> Result<()> {
    let probe: VersionProbe = parse_json(text, path)?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(Error::MigrationRequired { found: probe.schema_version, expected: SCHEMA_VERSION });
    }
    Ok(())
}

pub fn parse_base(text: &str, path: Option<&Path>) -> Result<ProcessBase> {
    check_version(text, path)?;
    let base: ProcessBase = parse_json(text, path)?;
    base.validate()?;
    Ok(base)
}

pub fn load_base(path: &Path) -> Result<ProcessBase> {
    parse_base(&fs::read_to_string(path)?, Some(path))
}

pub fn save_base(base: &ProcessBase, path: &Path) -> Result<()> {
    base.validate()?;
    write_json(base, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MetaModel, ProcessObject};

    fn base() -> ProcessBase {
        ProcessBase::new(vec![
            ProcessModel::new("a", 1, MetaModel::full()).with_object(ProcessObject::task("T", "Test")),
            ProcessModel::new("b", 2, MetaModel::minimal()),
        ])
    }

    #[test]
    fn round_trip_through_a_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("base.json");
        save_base(&base(), &path).unwrap();
        assert_eq!(load_base(&path).unwrap(), base());
    }

    #[test]
    fn rejections() {
        let text = to_json(&base());
        let unknown = text.replacen("\"variants\"", "\"colour\": 1,\n  \"variants\"", 1);
        let err = parse_base(&unknown, None).unwrap_err();
        assert!(matches!(&err, Error::Json { line: 3, .. }), "{err}");
        assert!(err.to_string().contains("colour"));

        let truncated = &text[..text.len() / 2];
        assert!(matches!(parse_base(truncated, None), Err(Error::Json { line, .. }) if line > 1));

        let old = text.replacen("\"schema_version\": 1", "\"schema_version\": 0", 1);
        assert!(matches!(parse_base(&old, None), Err(Error::MigrationRequired { found: 0, expected: 1 })));

        let mut dup = base();
        dup.variants[1].id = "a".into();
        let err = parse_base(&to_json(&dup), None).unwrap_err();
        assert!(err.to_string().contains("`a`"));
    }
}
