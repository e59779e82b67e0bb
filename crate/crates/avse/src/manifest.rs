//! Scene manifest: one JSON object per line.

use std::fs;
use std::io::Write;
use std::path::Path;

use avse_core::signal::NoiseKind;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    HeldOut,
}

impl Split {
    /// Every fifth scene is held out, giving an 80/20 split.
    pub fn of(id: u64) -> Self {
        if id % 5 == 4 {
            Split::HeldOut
        } else {
            Split::Train
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub id: u64,
    pub seed: u64,
    pub split: Split,
    pub snr_db: f64,
    pub measured_snr_db: f64,
    pub noise_kind: NoiseKind,
    pub f0_hz: f64,
    pub duration_s: f64,
    pub sample_rate: u32,
    /// Paths relative to the manifest directory.
    pub clean: String,
    pub noise: String,
    pub noisy: String,
    pub clipped_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub entries: Vec<SceneEntry>,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for e in &self.entries {
            serde_json::to_writer(&mut out, e).expect("entry serializes");
            out.push(b'\n');
        }
        let mut f = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
        f.write_all(&out).map_err(|e| CliError::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let e: SceneEntry =
                serde_json::from_str(line).map_err(|e| CliError::format(path, format!("line {}: {e}", n + 1)))?;
            entries.push(e);
        }
        Ok(Self { entries })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SceneEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn get(&self, id: u64) -> Option<&SceneEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_scenes_split_eight_two() {
        let held = (0..10).filter(|i| Split::of(*i) == Split::HeldOut).count();
        assert_eq!(held, 2);
    }
}
