use std::fs;
use std::path::{Path, PathBuf};

use avse_core::model::ModelConfig;
use avse_core::ppo::PpoConfig;
use avse_core::reward::RewardKind;
use avse_core::signal::NoiseKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PretrainConfig {
    /// Optimizer steps.
    pub steps: usize,
    /// Scenes per step.
    pub batch: usize,
    pub lr: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self { steps: 500, batch: 1, lr: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scene_count: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub snr_grid: Vec<f64>,
    pub noise_kinds: Vec<NoiseKind>,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub ppo: PpoConfig,
    pub reward: RewardKind,
    /// Fine-tuning checkpoint interval in epochs; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub out_dir: PathBuf,
    pub master_seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene_count: 80,
            duration_s: 1.0,
            sample_rate: 16000,
            snr_grid: vec![-5.0, 0.0, 5.0],
            noise_kinds: vec![NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble],
            model: ModelConfig::default(),
            pretrain: PretrainConfig::default(),
            ppo: PpoConfig::default(),
            reward: RewardKind::Interpretable,
            checkpoint_every: 0,
            out_dir: PathBuf::from("runs/default"),
            master_seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| CliError::BadArgs(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CliError::BadArgs(m.into()));
        if self.scene_count == 0 {
            return bad("scene_count must be positive");
        }
        if !(self.duration_s >= 1.0 && self.duration_s.is_finite()) {
            return bad("duration_s must be at least 1.0 s so intelligibility can be measured");
        }
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive");
        }
        if self.snr_grid.is_empty() || self.snr_grid.iter().any(|s| !s.is_finite()) {
            return bad("snr_grid must be a non-empty list of finite dB values");
        }
        if self.noise_kinds.is_empty() {
            return bad("noise_kinds must not be empty");
        }
        if self.pretrain.batch == 0 || !(self.pretrain.lr > 0.0 && self.pretrain.lr.is_finite()) {
            return bad("pretrain.batch and pretrain.lr must be positive");
        }
        self.model.validate()?;
        self.ppo.validate()?;
        Ok(())
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = ExperimentConfig::default();
        let back: ExperimentConfig = serde_json::from_str(&cfg.to_pretty_json()).unwrap();
        assert_eq!(back, cfg);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn partial_documents_take_defaults() {
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"scene_count": 10, "ppo": {"beta": 0.01}}"#).unwrap();
        assert_eq!(cfg.scene_count, 10);
        assert_eq!(cfg.ppo.beta, 0.01);
        assert_eq!(cfg.ppo.sigma, 0.05);
        assert_eq!(cfg.model.n, 64);
    }

    #[test]
    fn rejects_unknown_and_invalid_fields() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"scenes": 3}"#).is_err());
        let cfg = ExperimentConfig { snr_grid: vec![], ..ExperimentConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig { scene_count: 0, ..ExperimentConfig::default() };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }
}
