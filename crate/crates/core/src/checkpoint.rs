//! Policy checkpoints as versioned JSON.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::state_dim;
use crate::nets::Mlp;
use crate::po::{PoConfig, Trainer};
use crate::toolset::Registry;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("{path}: not a checkpoint: {reason}")]
    Parse { path: String, reason: String },
    #[error("checkpoint version {found} is not supported (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
    #[error("registry fingerprint mismatch: checkpoint {found}, runtime {expected}")]
    Fingerprint { expected: String, found: String },
    #[error("network shape does not match {n_actions} actions")]
    Shape { n_actions: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub d_in: usize,
    pub n_actions: usize,
    pub registry_fingerprint: String,
    pub tool_names: Vec<String>,
    pub actor: Mlp,
    pub critic: Option<Mlp>,
    pub config: PoConfig,
    pub provider: String,
    pub updates_done: usize,
}

impl Checkpoint {
    pub fn new(registry: &Registry, actor: Mlp, critic: Option<Mlp>, config: PoConfig, provider: &str, updates_done: usize) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            d_in: state_dim(registry.n_actions()),
            n_actions: registry.n_actions(),
            registry_fingerprint: registry.fingerprint(),
            tool_names: registry.tools().iter().map(|t| t.name.clone()).collect(),
            actor,
            critic,
            config,
            provider: provider.to_string(),
            updates_done,
        }
    }

    pub fn from_trainer(t: &Trainer, provider: &str) -> Self {
        Self::new(
            t.registry(),
            t.learner.actor.clone(),
            t.learner.critic.clone(),
            t.cfg.clone(),
            provider,
            t.updates_done(),
        )
    }

    /// Checks that the checkpoint was trained against `registry`.
    pub fn validate(&self, registry: &Registry) -> Result<(), CheckpointError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found: self.version });
        }
        let expected = registry.fingerprint();
        if self.registry_fingerprint != expected {
            return Err(CheckpointError::Fingerprint {
                expected,
                found: self.registry_fingerprint.clone(),
            });
        }
        let n = registry.n_actions();
        if self.actor.d_out != n || self.actor.d_in != state_dim(n) {
            return Err(CheckpointError::Shape { n_actions: n });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_json()).map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| CheckpointError::Parse {
            path: path.display().to_string(),
            reason: e.to_string(),
        })
    }

    /// Loads and validates against the runtime registry.
    pub fn load_for(path: &Path, registry: &Registry) -> Result<Self, CheckpointError> {
        let ck = Self::load(path)?;
        ck.validate(registry)?;
        Ok(ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::init_params;
    use crate::toolset::default_registry;

    #[test]
    fn round_trip_and_fingerprint_check() {
        let reg = default_registry();
        let n = reg.n_actions();
        let ck = Checkpoint::new(&reg, init_params(state_dim(n), n, 1), None, PoConfig::default(), "proxy", 0);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("policy.json");
        ck.save(&path).unwrap();
        assert_eq!(Checkpoint::load_for(&path, &reg).unwrap(), ck);

        let other = Registry::subset(&["median3", "clahe"]).unwrap();
        assert!(matches!(
            Checkpoint::load_for(&path, &other),
            Err(CheckpointError::Fingerprint { .. })
        ));
        std::fs::write(&path, "{}").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(CheckpointError::Parse { .. })));
        assert!(matches!(
            Checkpoint::load(&dir.path().join("missing.json")),
            Err(CheckpointError::Io { .. })
        ));
    }
}
