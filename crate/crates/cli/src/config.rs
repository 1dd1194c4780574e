//! TOML config loading with dotted `key=value` overrides.

use std::fs;
use std::path::Path;

use reshoot::{Error, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use toml::{Table, Value};

/// Parses one override value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Sets `path` (dot-separated) in `table`, creating intermediate tables.
pub fn set_path(table: &mut Table, path: &str, value: Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Config(format!("malformed override key {path:?}")));
    }
    let (last, parents) = keys.split_last().expect("split yields one key");
    let mut cur = table;
    for k in parents {
        let entry = cur.entry(k.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {path:?}: {k:?} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

pub fn apply_override(table: &mut Table, spec: &str) -> Result<()> {
    let (k, v) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    set_path(table, k.trim(), parse_value(v.trim()))
}

/// Reads `path` (if any), applies `overrides` in order and deserializes.
/// Unknown keys are rejected by the target type.
pub fn load<T: DeserializeOwned>(path: Option<&Path>, overrides: &[String], seed: Option<(&[&str], u64)>) -> Result<T> {
    let mut table = match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<Table>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    if let Some((keys, s)) = seed {
        for k in keys {
            set_path(&mut table, k, Value::Integer(s as i64))?;
        }
    }
    Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

/// Writes the effective config next to a command's outputs.
pub fn echo<T: Serialize>(dir: &Path, cfg: &T) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let text = toml::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?;
    let path = dir.join("effective_config.toml");
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_build_nested_tables() {
        let mut t = Table::new();
        apply_override(&mut t, "model.dim=64").unwrap();
        apply_override(&mut t, "stage=pretrain_base").unwrap();
        apply_override(&mut t, "cond_noise_steps=[0, 10]").unwrap();
        assert_eq!(t["model"]["dim"].as_integer(), Some(64));
        assert_eq!(t["stage"].as_str(), Some("pretrain_base"));
        assert_eq!(t["cond_noise_steps"].as_array().unwrap().len(), 2);
        assert!(apply_override(&mut t, "novalue").is_err());
        assert!(apply_override(&mut t, "model..dim=1").is_err());
        assert!(apply_override(&mut t, "stage.x=1").is_err());
    }
}
