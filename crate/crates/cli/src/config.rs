//! Run configuration: every module config in one file, with dotted
//! `section.key=value` overrides from the command line.

use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use roadnet_core::agent::EngineConfig;
use roadnet_core::expert::ExpertConfig;
use roadnet_core::metrics::{AplsParams, TopoParams};
use roadnet_core::predict::{NoiseSpec, WireConfig};
use roadnet_core::synthetic::SyntheticSpec;
use roadnet_core::training::LossWeights;

use crate::invalid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WireSettings {
    /// Per-request timeout in seconds.
    pub timeout_secs: f64,
}

impl Default for WireSettings {
    fn default() -> Self {
        Self { timeout_secs: 30.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub engine: EngineConfig,
    pub expert: ExpertConfig,
    pub noise: NoiseSpec,
    pub topo: TopoParams,
    pub apls: AplsParams,
    pub loss: LossWeights,
    pub wire: WireSettings,
    pub synthetic: SyntheticSpec,
}

impl RunConfig {
    /// Reads `path` (TOML, or JSON by extension) when given, then applies
    /// `overrides` in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut value = match path {
            Some(p) => read_value(p)?,
            None => toml::Value::try_from(RunConfig::default()).context("serializing defaults")?,
        };
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: RunConfig = value
            .try_into()
            .map_err(|e: toml::de::Error| invalid(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.engine.validate().map_err(invalid)?;
        self.expert.validate().map_err(invalid)?;
        self.noise.validate().map_err(|e| invalid(format!("noise: {e}")))?;
        self.topo.validate().map_err(invalid)?;
        self.apls.validate().map_err(invalid)?;
        self.loss.validate().map_err(invalid)?;
        self.synthetic.validate().map_err(invalid)?;
        let t = self.wire.timeout_secs;
        if !(t > 0.0 && t.is_finite()) {
            return Err(invalid(format!("wire.timeout_secs must be positive, got {t}")));
        }
        Ok(())
    }

    pub fn wire_config(&self) -> WireConfig {
        WireConfig {
            n_queries: self.engine.n_queries,
            roi_size: self.engine.roi_size,
            timeout: Duration::from_secs_f64(self.wire.timeout_secs),
        }
    }
}

fn read_value(path: &Path) -> Result<toml::Value> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let value = if is_json {
        let json: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| invalid(format!("{}: {e}", path.display())))?;
        toml::Value::try_from(json).map_err(|e| invalid(format!("{}: {e}", path.display())))?
    } else {
        toml::Value::Table(
            text.parse::<toml::Table>()
                .map_err(|e| invalid(format!("{}: {e}", path.display())))?,
        )
    };
    Ok(value)
}

/// Parses the right-hand side of an override as a TOML value, falling back
/// to a bare string.
fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn apply_override(root: &mut toml::Value, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| invalid(format!("override {spec:?} is not of the form key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        return Err(invalid(format!("override {spec:?} has an empty key segment")));
    }
    let mut node = root;
    for seg in &path[..path.len() - 1] {
        let table = node
            .as_table_mut()
            .ok_or_else(|| invalid(format!("override {spec:?}: {seg:?} is not a section")))?;
        node = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    let table = node
        .as_table_mut()
        .ok_or_else(|| invalid(format!("override {spec:?}: parent is not a section")))?;
    table.insert(path[path.len() - 1].to_string(), parse_scalar(raw.trim()));
    Ok(())
}
