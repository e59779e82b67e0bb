//! Deterministic scene construction and loading.

use std::path::Path;

use avse_core::seed::{derive, stage, unit};
use avse_core::signal::{generate_clean, generate_noise, mix_scene_with, visual_features, Scene, VisualConfig};

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::manifest::{SceneEntry, Split};
use crate::wav;

/// Peak ceiling applied jointly to clean, noise and mixture before writing.
pub const PEAK_LIMIT: f64 = 0.99;

pub fn scene_seed(cfg: &ExperimentConfig, id: u64) -> u64 {
    derive(derive(cfg.master_seed, stage::SCENES), id)
}

pub fn visual_config(cfg: &ExperimentConfig) -> VisualConfig {
    VisualConfig { dim: cfg.model.d_v, ..VisualConfig::default() }
}

/// Builds scene `id` in memory, already quantized to 16-bit.
pub fn build(cfg: &ExperimentConfig, id: u64) -> Result<(SceneEntry, Scene)> {
    let seed = scene_seed(cfg, id);
    let grid = cfg.snr_grid.len() as u64;
    let snr_db = cfg.snr_grid[(id % grid) as usize];
    let kind = cfg.noise_kinds[((id / grid) % cfg.noise_kinds.len() as u64) as usize];
    let f0_hz = 100.0 + 150.0 * unit(derive(seed, 0));

    let clean = generate_clean(cfg.duration_s, f0_hz, derive(seed, 1), cfg.sample_rate)?;
    let noise = generate_noise(kind, cfg.duration_s, derive(seed, 2), cfg.sample_rate)?;
    let mut scene = mix_scene_with(&clean, &noise, snr_db, derive(seed, 3), &visual_config(cfg))?;
    scene.limit_peak(PEAK_LIMIT);
    let scene = quantized(scene, cfg, seed)?;

    let entry = SceneEntry {
        id,
        seed,
        split: Split::of(id),
        snr_db,
        measured_snr_db: scene.measured_snr_db(),
        noise_kind: kind,
        f0_hz,
        duration_s: cfg.duration_s,
        sample_rate: cfg.sample_rate,
        clean: format!("scenes/{id:05}_clean.wav"),
        noise: format!("scenes/{id:05}_noise.wav"),
        noisy: format!("scenes/{id:05}_noisy.wav"),
        clipped_samples: 0,
    };
    Ok((entry, scene))
}

/// Rounds every signal to 16-bit and rebuilds the visual stream from the rounded clean signal.
fn quantized(scene: Scene, cfg: &ExperimentConfig, seed: u64) -> Result<Scene> {
    let clean = wav::quantize(&scene.clean);
    let noise = wav::quantize(&scene.noise);
    let noisy = wav::quantize(&scene.noisy);
    let vc = visual_config(cfg);
    let visual = visual_features(&clean, vc.frame_rate, vc.dim, derive(seed, 4))?;
    Ok(Scene { clean, noise, noisy, visual, snr_db: scene.snr_db, seed })
}

/// Reads a scene's WAVs back; identical to the in-memory result of [`build`].
pub fn load(root: &Path, entry: &SceneEntry, cfg: &ExperimentConfig) -> Result<Scene> {
    let clean = wav::read(&root.join(&entry.clean))?;
    let noise = wav::read(&root.join(&entry.noise))?;
    let noisy = wav::read(&root.join(&entry.noisy))?;
    let vc = visual_config(cfg);
    let visual = visual_features(&clean, vc.frame_rate, vc.dim, derive(entry.seed, 4))?;
    Ok(Scene { clean, noise, noisy, visual, snr_db: entry.snr_db, seed: entry.seed })
}
