//! Flat provenance records: every resolved setting under a dotted key.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::models::ModelSpec;

use super::config::{ExperimentConfig, Resolved};

pub type Provenance = Map<String, Value>;

pub const VERSION_KEY: &str = "apfl.version";

fn flatten_into(prefix: &str, value: Value, out: &mut Provenance) {
    match value {
        Value::Object(map) if !map.is_empty() => {
            for (k, v) in map {
                flatten_into(&format!("{prefix}.{k}"), v, out);
            }
        }
        leaf => {
            out.insert(prefix.to_string(), leaf);
        }
    }
}

fn flatten_section<T: Serialize>(prefix: &str, value: &T, out: &mut Provenance) -> Result<()> {
    let v = serde_json::to_value(value).map_err(|e| Error::Format(e.to_string()))?;
    flatten_into(prefix, v, out);
    Ok(())
}

/// Rebuilds the nested object stored under `prefix`.
fn section<T: DeserializeOwned>(prov: &Provenance, prefix: &str) -> Result<T> {
    let mut root = Map::new();
    let lead = format!("{prefix}.");
    for (key, value) in prov {
        let Some(path) = key.strip_prefix(&lead) else { continue };
        let mut node = &mut root;
        let mut parts = path.split('.').peekable();
        while let Some(part) = parts.next() {
            if parts.peek().is_none() {
                node.insert(part.to_string(), value.clone());
            } else {
                let child = node.entry(part.to_string()).or_insert_with(|| Value::Object(Map::new()));
                node = child
                    .as_object_mut()
                    .ok_or_else(|| Error::Format(format!("provenance key {key} conflicts with a value")))?;
            }
        }
    }
    if root.is_empty() {
        return Err(Error::Format(format!("provenance has no {prefix}.* keys")));
    }
    serde_json::from_value(Value::Object(root)).map_err(|e| Error::Format(format!("provenance {prefix}: {e}")))
}

/// Config, resolved model and schedule, dataset provenance, and crate version.
pub fn build_provenance(config: &ExperimentConfig, resolved: &Resolved) -> Result<Provenance> {
    let mut out = Map::new();
    out.insert(VERSION_KEY.into(), Value::String(env!("CARGO_PKG_VERSION").into()));
    flatten_section("config", config, &mut out)?;
    flatten_section("resolved.model", &resolved.spec, &mut out)?;
    flatten_section("resolved.lr", &resolved.run.schedule, &mut out)?;
    flatten_section("dataset", resolved.dataset.provenance(), &mut out)?;
    Ok(out)
}

pub fn config_from_provenance(prov: &Provenance) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = section(prov, "config")?;
    config.validate()?;
    Ok(config)
}

pub fn spec_from_provenance(prov: &Provenance) -> Result<ModelSpec> {
    section(prov, "resolved.model")
}

pub fn write_provenance(path: &Path, prov: &Provenance) -> Result<()> {
    let mut text = serde_json::to_string_pretty(prov).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_provenance(path: &Path) -> Result<Provenance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}
