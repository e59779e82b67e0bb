//! Waveforms, synthetic audio-visual scenes and short-time analysis.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub mod fft;
mod resample;
mod stft;
mod synth;
mod visual;

pub use resample::resample;
pub use stft::{stft, StftFrame};
pub use synth::{generate_clean, generate_noise, mix_scene, mix_scene_with};
pub use visual::{visual_features, VisualConfig};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;
pub const DEFAULT_FRAME_RATE: f64 = 25.0;

/// A mono sampled signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::invalid("sample rate must be positive"));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("sample {i} is not finite")));
        }
        Ok(Self { samples, sample_rate })
    }

    pub fn zeros(len: usize, sample_rate: u32) -> Self {
        Self { samples: vec![0.0; len], sample_rate: sample_rate.max(1) }
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|s| s * s).sum()
    }

    /// Mean square.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            0.0
        } else {
            self.energy() / self.samples.len() as f64
        }
    }

    pub fn rms(&self) -> f64 {
        libm::sqrt(self.power())
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub(crate) fn from_parts(samples: Vec<f64>, sample_rate: u32) -> Self {
        debug_assert!(samples.iter().all(|s| s.is_finite()));
        Self { samples, sample_rate }
    }
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::shape(format!("{} values for a {rows}x{cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Per-frame visual features aligned with a clean target, shape `d_v x t_v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualStream {
    pub features: Matrix,
    pub frame_rate: f64,
}

impl VisualStream {
    pub fn dim(&self) -> usize {
        self.features.rows()
    }

    pub fn frames(&self) -> usize {
        self.features.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    White,
    Pink,
    Babble,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::White => "white",
            NoiseKind::Pink => "pink",
            NoiseKind::Babble => "babble",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "white" => Ok(NoiseKind::White),
            "pink" => Ok(NoiseKind::Pink),
            "babble" => Ok(NoiseKind::Babble),
            other => Err(Error::InvalidArgument(format!("unknown noise kind `{other}`"))),
        }
    }
}

/// One training or evaluation example.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub clean: Waveform,
    pub noise: Waveform,
    pub noisy: Waveform,
    pub visual: VisualStream,
    pub snr_db: f64,
    pub seed: u64,
}

impl Scene {
    /// SNR of `clean` against `noisy - clean`.
    pub fn measured_snr_db(&self) -> f64 {
        measured_snr_db(&self.clean, &self.noisy)
    }

    /// Rescales clean, noise and mixture jointly so the mixture peak is at most
    /// `limit`. The SNR is unchanged. Returns the gain applied.
    pub fn limit_peak(&mut self, limit: f64) -> f64 {
        let peak = self.noisy.peak();
        if peak <= limit || peak == 0.0 {
            return 1.0;
        }
        let g = limit / peak;
        self.clean = self.clean.scaled(g);
        self.noise = self.noise.scaled(g);
        self.noisy = self.noisy.scaled(g);
        g
    }
}

/// SNR in dB of `clean` against the residual `noisy - clean`.
pub fn measured_snr_db(clean: &Waveform, noisy: &Waveform) -> f64 {
    let pc: f64 = clean.samples().iter().map(|s| s * s).sum();
    let pn: f64 = clean
        .samples()
        .iter()
        .zip(noisy.samples())
        .map(|(c, y)| (y - c) * (y - c))
        .sum();
    10.0 * libm::log10(pc / pn)
}

pub(crate) fn check_same_rate(a: &Waveform, b: &Waveform) -> Result<()> {
    if a.sample_rate() != b.sample_rate() {
        return Err(Error::InvalidArgument(
            format!("sample rates differ: {} vs {}", a.sample_rate(), b.sample_rate()).to_string(),
        ));
    }
    Ok(())
}
