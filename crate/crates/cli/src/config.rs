//! Merging a JSON config file with command-line flags.
//!
//! Flags are serialized with unset options omitted and laid over the file's
//! object, then the result is deserialized into the command's resolved
//! config. Defaults live on the resolved structs, so a flag only wins when it
//! was actually given.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

/// Failure classes that map onto exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad or missing arguments: exit 2.
    Usage(String),
    /// Validation or evaluation failure: exit 1.
    Failure(anyhow::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Failure(e) => write!(f, "error: {e:#}"),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Failure(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn load_config(path: &Path) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        // a `run.json` echo: `{"command": ..., "config": {...}}`
        Ok(Value::Object(mut m))
            if m.len() == 2 && m.contains_key("command") && m["config"].is_object() =>
        {
            match m.remove("config") {
                Some(Value::Object(c)) => Ok(c),
                _ => unreachable!("checked above"),
            }
        }
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(usage(format!(
            "config {} must be a JSON object",
            path.display()
        ))),
        Err(e) => Err(usage(format!("config {}: {e}", path.display()))),
    }
}

/// Turns serde's field errors into flag names.
fn explain(e: serde_json::Error) -> CliError {
    let msg = e.to_string();
    if let Some(field) = msg
        .strip_prefix("missing field `")
        .and_then(|r| r.split('`').next())
    {
        return usage(format!(
            "missing required option --{}",
            field.replace('_', "-")
        ));
    }
    usage(msg)
}

pub fn resolve<A: Serialize, C: DeserializeOwned>(
    config: Option<&PathBuf>,
    flags: &A,
) -> CliResult<C> {
    let mut merged = match config {
        Some(p) => load_config(p)?,
        None => Map::new(),
    };
    let Value::Object(flags) = serde_json::to_value(flags).expect("flags serialize") else {
        unreachable!("flag structs serialize to objects");
    };
    for (k, v) in flags {
        if !v.is_null() {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(explain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Serialize)]
    struct Flags {
        #[serde(skip_serializing_if = "Option::is_none")]
        answers: Option<String>,
        #[serde(skip_serializing_if = "Option::is_none")]
        seed: Option<u64>,
    }

    #[derive(Debug, Deserialize, PartialEq)]
    #[serde(deny_unknown_fields)]
    struct Resolved {
        answers: String,
        #[serde(default)]
        seed: u64,
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"answers":"a.jsonl","seed":3}"#).unwrap();
        let flags = Flags {
            answers: None,
            seed: Some(9),
        };
        let r: Resolved = resolve(Some(&path), &flags).unwrap();
        assert_eq!(
            r,
            Resolved {
                answers: "a.jsonl".into(),
                seed: 9
            }
        );
    }

    #[test]
    fn run_echo_is_unwrapped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"command":"eval-vqa","config":{"answers":"a.jsonl","seed":3}}"#,
        )
        .unwrap();
        let flags = Flags {
            answers: None,
            seed: None,
        };
        let r: Resolved = resolve(Some(&path), &flags).unwrap();
        assert_eq!(r.seed, 3);
    }

    #[test]
    fn missing_field_is_usage() {
        let flags = Flags {
            answers: None,
            seed: None,
        };
        match resolve::<_, Resolved>(None, &flags) {
            Err(CliError::Usage(m)) => assert_eq!(m, "missing required option --answers"),
            other => panic!("{other:?}"),
        }
    }
}
