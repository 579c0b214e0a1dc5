//! Persisted artifacts: versioned JSON documents and CSV metric tables.
//!
//! Every JSON document written by this crate or its tooling opens with a
//! `schema_version` field. Readers check the stamp before interpreting the
//! rest, so a log from an older layout fails loudly instead of misparsing.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bumped whenever any persisted layout changes shape.
pub const SCHEMA_VERSION: u32 = 1;

/// Pretty-printed JSON with a trailing newline; creates parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[derive(Deserialize)]
struct VersionProbe {
    schema_version: u32,
}

/// Read a JSON document whose top level carries `schema_version`, rejecting
/// stamps other than [`SCHEMA_VERSION`] before the full parse runs.
pub fn read_versioned<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    let probe: VersionProbe = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
    if probe.schema_version != SCHEMA_VERSION {
        return Err(Error::InvalidConfig(format!(
            "{}: schema_version {} but this build reads {}",
            path.display(),
            probe.schema_version,
            SCHEMA_VERSION
        )));
    }
    serde_json::from_str(&text)
        .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
}

/// Serialize rows to CSV text, header first. Row structs must be flat.
pub fn csv_string<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).map_err(|e| Error::Other(format!("csv: {e}")))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Other(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Other(format!("csv: {e}")))
}

/// CSV file variant of [`csv_string`]; creates parent directories.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, csv_string(rows)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, PartialEq, Serialize, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Doc {
        schema_version: u32,
        label: String,
        value: f64,
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/doc.json");
        let doc =
            Doc { schema_version: SCHEMA_VERSION, label: "a".into(), value: 0.1 + 0.2 };
        write_json(&path, &doc).unwrap();
        let back: Doc = read_versioned(&path).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.value.to_bits(), doc.value.to_bits());
    }

    #[test]
    fn stale_schema_stamp_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doc.json");
        let doc = Doc { schema_version: SCHEMA_VERSION + 1, label: "a".into(), value: 1.0 };
        write_json(&path, &doc).unwrap();
        let err = read_versioned::<Doc>(&path).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)), "{err}");
    }

    #[test]
    fn unknown_fields_fail_the_strict_parse() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("doc.json");
        fs::write(
            &path,
            format!(r#"{{"schema_version":{SCHEMA_VERSION},"label":"a","value":1.0,"extra":3}}"#),
        )
        .unwrap();
        assert!(read_versioned::<Doc>(&path).is_err());
    }

    #[test]
    fn csv_has_header_then_one_line_per_row() {
        #[derive(Serialize)]
        struct Row {
            name: &'static str,
            x: f64,
        }
        let text = csv_string(&[Row { name: "a", x: 0.5 }, Row { name: "b", x: -1.0 }]).unwrap();
        assert_eq!(text, "name,x\na,0.5\nb,-1.0\n");
    }
}
