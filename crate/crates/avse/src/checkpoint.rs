//! Versioned JSON checkpoints.

use std::fs;
use std::path::Path;

use avse_core::autodiff::Tensor;
use avse_core::model::{Model, ModelConfig};
use avse_core::optim::AdamState;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const FORMAT: &str = "avse-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Where the deterministic seed stream stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub counter: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// `pretrain` or `finetune:<reward>`.
    pub stage: String,
    pub step: u64,
    pub model: ModelConfig,
    pub params: Vec<NamedTensor>,
    pub adam: AdamState,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn new(stage: impl Into<String>, step: u64, model: &Model, adam: &AdamState, rng: RngState) -> Self {
        let params = model
            .param_names()
            .into_iter()
            .zip(model.params())
            .map(|(name, t)| NamedTensor { name, shape: t.shape().to_vec(), data: t.data().to_vec() })
            .collect();
        Self {
            format: FORMAT.into(),
            version: VERSION,
            stage: stage.into(),
            step,
            model: *model.config(),
            params,
            adam: adam.clone(),
            rng,
        }
    }

    /// Rebuilds the model, rejecting format, config, name or shape mismatches.
    pub fn restore(&self, expected: &ModelConfig) -> Result<(Model, AdamState)> {
        let bad = |m: String| CliError::BadArgs(format!("checkpoint rejected: {m}"));
        if self.format != FORMAT || self.version != VERSION {
            return Err(bad(format!("format {} v{} (expected {FORMAT} v{VERSION})", self.format, self.version)));
        }
        if &self.model != expected {
            return Err(bad(format!("model config {:?} differs from experiment config {:?}", self.model, expected)));
        }
        let names = expected.layout();
        if names.len() != self.params.len() {
            return Err(bad(format!("{} tensors, expected {}", self.params.len(), names.len())));
        }
        let mut tensors = Vec::with_capacity(names.len());
        for ((name, _), p) in names.iter().zip(&self.params) {
            if name != &p.name {
                return Err(bad(format!("tensor {} where {name} was expected", p.name)));
            }
            tensors.push(Tensor::new(p.shape.clone(), p.data.clone())?);
        }
        let model = Model::from_params(*expected, tensors)?;
        if !self.adam.matches(model.params()) {
            return Err(bad("optimizer state does not match the parameters".into()));
        }
        Ok((model, self.adam.clone()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec(self).expect("checkpoint serializes");
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::format(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig { n: 4, kernel: 8, stride: 4, tcn_blocks: 1, tcn_channels: 3, d_v: 2 }
    }

    #[test]
    fn round_trip_is_exact() {
        let m = Model::new(small(), 5).unwrap();
        let a = AdamState::new(m.params());
        let ck = Checkpoint::new("pretrain", 7, &m, &a, RngState { seed: 1, counter: 2 });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        let (m2, a2) = back.restore(&small()).unwrap();
        assert_eq!(m2, m);
        assert_eq!(a2, a);
    }

    #[test]
    fn rejects_mismatches() {
        let m = Model::new(small(), 5).unwrap();
        let a = AdamState::new(m.params());
        let ck = Checkpoint::new("pretrain", 0, &m, &a, RngState { seed: 0, counter: 0 });
        assert!(ck.restore(&ModelConfig { n: 5, ..small() }).is_err());
        let mut renamed = ck.clone();
        renamed.params[0].name = "other".into();
        assert!(renamed.restore(&small()).is_err());
        let mut reshaped = ck.clone();
        reshaped.params[1].shape = vec![2, 2];
        assert!(reshaped.restore(&small()).is_err());
        let mut versioned = ck;
        versioned.version = 99;
        assert!(versioned.restore(&small()).is_err());
    }
}
