//! Loading TOML run files and applying command-line overrides.

use std::path::Path;

use serde::de::DeserializeOwned;
use toml::{Table, Value};

use crate::CliError;

pub fn load_table(path: Option<&Path>) -> Result<Table, CliError> {
    let Some(path) = path else {
        return Ok(Table::new());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    text.parse::<Table>()
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Sets `key` (dot-separated) to `value`, creating intermediate tables.
pub fn set(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| CliError::Config(format!("empty key in `{key}`")))?;
    let mut cur = table;
    for p in parts {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Parses `text` as a TOML value, falling back to a bare string.
pub fn parse_value(text: &str) -> Value {
    format!("v = {text}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(text.to_string()))
}

/// Applies `KEY=VALUE` assignments.
pub fn apply_sets(table: &mut Table, sets: &[String]) -> Result<(), CliError> {
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{s}`")))?;
        set(table, k.trim(), parse_value(v.trim()))?;
    }
    Ok(())
}

pub fn set_if<T: Into<Value>>(table: &mut Table, key: &str, value: Option<T>) -> Result<(), CliError> {
    match value {
        Some(v) => set(table, key, v.into()),
        None => Ok(()),
    }
}

/// `lo:hi:step` or a comma-separated list.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Config(format!("snr_db: cannot parse `{text}` (expected lo:hi:step or a,b,c)"));
    if let Some((lo, rest)) = text.split_once(':') {
        let (hi, step) = rest.split_once(':').ok_or_else(bad)?;
        let (lo, hi, step): (f64, f64, f64) = (
            lo.trim().parse().map_err(|_| bad())?,
            hi.trim().parse().map_err(|_| bad())?,
            step.trim().parse().map_err(|_| bad())?,
        );
        if !(step > 0.0) || hi < lo {
            return Err(bad());
        }
        let n = ((hi - lo) / step + 1e-9).floor() as usize;
        return Ok((0..=n).map(|k| lo + step * k as f64).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(|_| bad())).collect()
}

pub fn usize_list(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("expected a comma-separated list of counts, got `{text}`")))
        })
        .collect()
}

pub fn decode<T: DeserializeOwned>(table: Table) -> Result<T, CliError> {
    T::deserialize(Value::Table(table)).map_err(|e| CliError::Config(format!("invalid configuration: {}", e.message())))
}
