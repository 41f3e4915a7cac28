//! The single JSON experiment config and its command-line overrides.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use toolseq::degrade::{all_cases, case, CaseRecipe};
use toolseq::oracle::DEFAULT_BUDGET;
use toolseq::po::PoConfig;
use toolseq::reward::ProviderConfig;
use toolseq::toolset::{default_registry, Registry};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Tool names from the default registry, in action order; `null` keeps
    /// all ten. STOP is always appended.
    pub tools: Option<Vec<String>>,
    pub synth: SynthConfig,
    pub po: PoConfig,
    pub provider: ProviderConfig,
    pub oracle: OracleConfig,
    pub bench: BenchConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            tools: None,
            synth: SynthConfig::default(),
            po: PoConfig::default(),
            provider: ProviderConfig::default(),
            oracle: OracleConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Case ids 1..=15; empty means all fifteen.
    pub cases: Vec<u32>,
    pub per_case: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            cases: Vec::new(),
            per_case: 20,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn recipes(&self) -> Result<Vec<CaseRecipe>, CliError> {
        if self.cases.is_empty() {
            return Ok(all_cases());
        }
        self.cases
            .iter()
            .map(|&c| case(c).map_err(|e| CliError::Input(e.to_string())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub l_max: usize,
    pub budget: u64,
    /// Score gap at or below which a policy plan counts as matching.
    pub tolerance: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            l_max: 2,
            budget: DEFAULT_BUDGET,
            tolerance: 0.04,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub t_max: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self { t_max: 5 }
    }
}

impl Config {
    /// Reads `path` (or the defaults when `None`) and applies `key.path=value`
    /// overrides. Values parse as JSON and fall back to plain strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut v = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
            }
            None => serde_json::to_value(Config::default()).expect("config serializes"),
        };
        for o in overrides {
            apply_override(&mut v, o)?;
        }
        let cfg: Config = serde_json::from_value(v).map_err(|e| CliError::Input(format!("config: {e}")))?;
        cfg.po.validate().map_err(|e| CliError::Input(e.to_string()))?;
        Ok(cfg.with_env())
    }

    /// Applies `SCORER_URL` to a remote provider.
    pub fn with_env(mut self) -> Self {
        self.provider = self.provider.with_env_override();
        self
    }

    pub fn registry(&self) -> Result<Registry, CliError> {
        match &self.tools {
            None => Ok(default_registry()),
            Some(names) => {
                let names: Vec<&str> = names.iter().map(String::as_str).collect();
                Registry::subset(&names).map_err(|e| CliError::Input(e.to_string()))
            }
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Sets `a.b.c=value` inside `root`, creating objects along the way.
pub fn apply_override(root: &mut Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Input(format!("override {spec:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut cur = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Input(format!("override {spec:?} has an empty key")));
        }
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::Input(format!("override {spec:?}: {part} is not inside an object")))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

/// Replaces the provider when `--provider` names a different kind.
pub fn provider_for_kind(current: &ProviderConfig, kind: &str) -> Result<ProviderConfig, CliError> {
    if current.kind() == kind {
        return Ok(current.clone());
    }
    let p = match kind {
        "oracle" => ProviderConfig::Oracle,
        "proxy" => ProviderConfig::default(),
        "remote" => {
            let url = std::env::var(toolseq::reward::SCORER_URL_ENV).map_err(|_| {
                CliError::Input("--provider remote needs a remote provider in the config or SCORER_URL".into())
            })?;
            ProviderConfig::Remote(toolseq::reward::RemoteConfig::new(url))
        }
        other => return Err(CliError::Input(format!("unknown provider {other:?}"))),
    };
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_set_nested_values() {
        let mut v = serde_json::to_value(Config::default()).unwrap();
        apply_override(&mut v, "po.updates=7").unwrap();
        apply_override(&mut v, "provider={\"kind\":\"oracle\"}").unwrap();
        apply_override(&mut v, "tools=[\"median3\",\"clahe\"]").unwrap();
        let cfg: Config = serde_json::from_value(v).unwrap();
        assert_eq!(cfg.po.updates, 7);
        assert_eq!(cfg.provider, ProviderConfig::Oracle);
        assert_eq!(cfg.registry().unwrap().n_actions(), 3);
    }

    #[test]
    fn bad_overrides_are_input_errors() {
        let mut v = serde_json::to_value(Config::default()).unwrap();
        assert!(apply_override(&mut v, "novalue").is_err());
        assert!(apply_override(&mut v, "po.updates.x=1").is_err());
        assert!(Config::load(None, &["po.lr=-1".into()]).is_err());
        assert!(Config::load(None, &["nonsense=1".into()]).is_err());
    }

    #[test]
    fn defaults_round_trip() {
        let cfg = Config::default();
        let back: Config = serde_json::from_str(&cfg.to_json_pretty()).unwrap();
        assert_eq!(back, cfg);
        let partial: Config = serde_json::from_str(r#"{"po":{"updates":3}}"#).unwrap();
        assert_eq!(partial.po.updates, 3);
        assert_eq!(partial.synth.per_case, 20);
    }
}
