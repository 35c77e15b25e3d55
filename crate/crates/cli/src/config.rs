//! Run configuration: built-in defaults, an optional TOML file layered on
//! top, then `--set` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use vscrl::algo::TrainConfig;

use crate::error::{CliError, CliResult};

/// The built-in configuration every file is layered over.
pub const DEFAULT_CONFIG: &str = include_str!("../default.toml");

const SECTIONS: [&str; 3] = ["defaults", "generator", "reference"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub defaults: TrainConfig,
    pub generator: GeneratorSection,
    pub reference: ReferenceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSection {
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the bearer token.
    pub api_key_env: Option<String>,
    pub timeout_ms: u64,
    /// Line-delimited few-shot examples sent with each request.
    pub few_shot: Option<PathBuf>,
}

/// How the frozen reference policy is behavior-cloned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    /// Number of held-out layouts the demonstrations are drawn from.
    pub demo_layouts: usize,
    pub episodes_per_layout: usize,
    /// 0 gives the uniform reference.
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl RunConfig {
    /// Built-in defaults, then `file`, then each `key=value` override. Keys
    /// without a section prefix refer to `[defaults]`.
    pub fn resolve(file: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table: Table = toml::from_str(DEFAULT_CONFIG).expect("built-in config parses");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            let user: Table = toml::from_str(&text)
                .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
            merge(&mut table, user);
        }
        for kv in overrides {
            apply_override(&mut table, kv)?;
        }
        let cfg: RunConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
        cfg.defaults.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn apply_override(table: &mut Table, kv: &str) -> CliResult<()> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {kv:?} is not KEY=VALUE")))?;
    let mut path: Vec<&str> = key.trim().split('.').collect();
    if !SECTIONS.contains(&path[0]) {
        path.insert(0, "defaults");
    }
    // Values are read as TOML; anything that is not valid TOML is a string.
    let value = toml::from_str::<Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    let (last, parents) = path.split_last().expect("nonempty key");
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| Value::Table(Table::new()))
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override {key}: {p} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// A parsed `--seed` list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Seeds(pub Vec<u64>);

impl std::str::FromStr for Seeds {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        parse_seeds(s).map(Seeds)
    }
}

/// Parses `0,1,2`, `0-2` or a mix such as `0-2,7`.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u64 = a.trim().parse().map_err(|_| format!("bad seed range {part:?}"))?;
                let b: u64 = b.trim().parse().map_err(|_| format!("bad seed range {part:?}"))?;
                if a > b {
                    return Err(format!("empty seed range {part:?}"));
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| format!("bad seed {part:?}"))?),
        }
    }
    if out.is_empty() {
        return Err("seed list is empty".into());
    }
    Ok(out)
}
