use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Matrix, VisualStream, Waveform, DEFAULT_FRAME_RATE};
use crate::{Error, Result};

const FEATURE_NOISE_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisualConfig {
    pub frame_rate: f64,
    pub dim: usize,
}

impl Default for VisualConfig {
    fn default() -> Self {
        Self { frame_rate: DEFAULT_FRAME_RATE, dim: 4 }
    }
}

/// Envelope-derived visual features: row 0 is the per-frame RMS of `clean`,
/// row `j` the derivative of the envelope smoothed over `2j + 1` frames plus
/// seeded N(0, 0.01^2) jitter.
pub fn visual_features(clean: &Waveform, frame_rate: f64, d_v: usize, seed: u64) -> Result<VisualStream> {
    if !(frame_rate > 0.0) || !frame_rate.is_finite() {
        return Err(Error::invalid("frame rate must be positive"));
    }
    if d_v == 0 {
        return Err(Error::invalid("visual dimension must be at least 1"));
    }
    let fs = clean.sample_rate() as f64;
    let n = clean.len();
    let frames = libm::ceil(n as f64 * frame_rate / fs) as usize;
    let spf = fs / frame_rate;

    let envelope: Vec<f64> = (0..frames)
        .map(|t| {
            let start = (libm::floor(t as f64 * spf) as usize).min(n);
            let end = (libm::floor((t + 1) as f64 * spf) as usize).clamp(start, n);
            let seg = &clean.samples()[start..end];
            if seg.is_empty() {
                0.0
            } else {
                libm::sqrt(seg.iter().map(|s| s * s).sum::<f64>() / seg.len() as f64)
            }
        })
        .collect();

    let mut features = Matrix::zeros(d_v, frames);
    features.row_mut(0).copy_from_slice(&envelope);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, FEATURE_NOISE_STD).expect("positive std");
    for j in 1..d_v {
        let smooth = moving_average(&envelope, j);
        let row = features.row_mut(j);
        for t in 0..frames {
            let prev = smooth[t.saturating_sub(1)];
            let next = smooth[(t + 1).min(frames - 1)];
            row[t] = 0.5 * (next - prev) + jitter.sample(&mut rng);
        }
    }

    Ok(VisualStream { features, frame_rate })
}

fn moving_average(x: &[f64], half: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = vec![0.0; n];
    for (t, o) in out.iter_mut().enumerate() {
        let lo = t.saturating_sub(half);
        let hi = (t + half + 1).min(n);
        *o = x[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
    }
    out
}
