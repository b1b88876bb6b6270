//! Config loading: JSON file, then command-line overrides, then the
//! `DECOUPLER_SEED` fallback, deserialized with field-path diagnostics.

use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const SEED_ENV: &str = "DECOUPLER_SEED";

/// A problem with the user's configuration; maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

/// Flag values collected for merging over the file.
#[derive(Default)]
pub struct Overrides(Map<String, Value>);

impl Overrides {
    pub fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.insert(key.to_owned(), serde_json::to_value(v).expect("plain values serialize"));
        }
        self
    }
}

fn read_object(path: &Path) -> anyhow::Result<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str::<Value>(&text) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(config_error(format!("{}: top level must be a JSON object", path.display()))),
        Err(e) => Err(config_error(format!("{}: {e}", path.display()))),
    }
}

/// Merges file, flags and environment into `T`. `seeded` commands take
/// their seed from `DECOUPLER_SEED` when neither file nor flag sets one.
pub fn resolve<T: DeserializeOwned>(path: Option<&Path>, overrides: Overrides, seeded: bool) -> anyhow::Result<T> {
    let mut map = match path {
        Some(p) => read_object(p)?,
        None => Map::new(),
    };
    map.extend(overrides.0);
    if seeded && !map.contains_key("seed") {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            let seed: u64 =
                raw.trim().parse().map_err(|_| config_error(format!("{SEED_ENV}={raw:?} is not a u64 seed")))?;
            map.insert("seed".into(), seed.into());
        }
    }
    serde_path_to_error::deserialize(Value::Object(map)).map_err(|e| {
        let path = e.path().to_string();
        if path == "." {
            config_error(format!("config: {}", e.inner()))
        } else {
            config_error(format!("config field `{path}`: {}", e.inner()))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde::Deserialize;

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Inner {
        level: u32,
    }

    #[derive(Debug, Deserialize)]
    #[serde(deny_unknown_fields)]
    struct Sample {
        n: usize,
        inner: Inner,
        seed: u64,
    }

    #[test]
    fn flags_override_file_fields() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"n": 3, "inner": {"level": 1}, "seed": 5}"#).unwrap();
        let mut o = Overrides::default();
        o.set("n", Some(7usize)).set::<u64>("seed", None);
        let s: Sample = resolve(Some(&path), o, true).unwrap();
        assert_eq!((s.n, s.inner.level, s.seed), (7, 1, 5));
    }

    #[test]
    fn nested_errors_name_the_field() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"n": 3, "inner": {"level": -1}, "seed": 5}"#).unwrap();
        let err = resolve::<Sample>(Some(&path), Overrides::default(), true).unwrap_err();
        assert!(err.to_string().contains("inner.level"), "{err}");
        assert!(err.downcast_ref::<ConfigError>().is_some());
    }

    #[test]
    fn non_object_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, "[1, 2]").unwrap();
        assert!(resolve::<Sample>(Some(&path), Overrides::default(), false).is_err());
    }
}
