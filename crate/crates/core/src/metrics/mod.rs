//! Objective quality measures and the acoustic features behind both reward
//! models.

use serde::{Deserialize, Serialize};

use crate::signal::Waveform;
use crate::{Error, Result, EPS};

mod stoi;

pub use stoi::{stoi, stoi_slices, STOI_RATE};

/// Minimum signal length accepted by [`si_snr`].
pub const MIN_SI_SNR_LEN: usize = 16;
/// Default frame for [`segmental_snr`] in samples (16 ms at 16 kHz).
pub const SEG_SNR_FRAME: usize = 256;
const SEG_SNR_FLOOR: f64 = -10.0;
const SEG_SNR_CEIL: f64 = 35.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub si_snr_db: f64,
    pub stoi: f64,
    pub seg_snr_db: f64,
}

/// Measurable correlates of the quality axes the reward text talks about.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcousticFeatures {
    /// Mean power of the part of `est` not explained by `ref`, dB, with `est`
    /// first rescaled to the energy of `ref` so loudness cannot hide noise.
    pub residual_noise_db: f64,
    /// `1 - cos^2(est, ref)`, in `[0, 1]`.
    pub distortion_index: f64,
    /// STOI of `est` against `ref`.
    pub intelligibility_proxy: f64,
    /// RMS level of `est`, dB.
    pub loudness_db: f64,
    /// `si_snr(ref, est) - si_snr(ref, noisy)`.
    pub improvement_db: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "length mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Scale-invariant SNR in dB.
///
/// The estimate is first rescaled to the reference norm, then
/// `s_t = <est, ref> / (|ref|^2 + eps) * ref` and
/// `10 log10(|s_t|^2 / (|est - s_t|^2 + eps))`. The rescaling makes the value
/// exactly invariant to positive gains on `est`, including at the `eps` floor.
pub fn si_snr(reference: &Waveform, estimate: &Waveform, eps: f64) -> Result<f64> {
    si_snr_slices(reference.samples(), estimate.samples(), eps)
}

pub fn si_snr_slices(reference: &[f64], estimate: &[f64], eps: f64) -> Result<f64> {
    same_len(reference, estimate)?;
    if reference.len() < MIN_SI_SNR_LEN {
        return Err(Error::invalid("si-snr needs at least 16 samples"));
    }
    let ref_energy = dot(reference, reference);
    if ref_energy == 0.0 {
        return Err(Error::degenerate("reference is all zeros"));
    }
    let est_energy = dot(estimate, estimate);
    if est_energy == 0.0 {
        return Err(Error::degenerate("estimate is all zeros"));
    }
    let gain = libm::sqrt(ref_energy / est_energy);
    let alpha = gain * dot(estimate, reference) / (ref_energy + eps);
    let mut target = 0.0;
    let mut residual = 0.0;
    for (e, r) in estimate.iter().zip(reference) {
        let t = alpha * r;
        let d = gain * e - t;
        target += t * t;
        residual += d * d;
    }
    if target == 0.0 {
        return Err(Error::degenerate("estimate is orthogonal to the reference"));
    }
    Ok(10.0 * libm::log10(target / (residual + eps)))
}

/// Mean per-frame SNR over non-overlapping frames, each clamped to [-10, 35] dB.
pub fn segmental_snr(reference: &Waveform, estimate: &Waveform, frame: usize) -> Result<f64> {
    let (r, e) = (reference.samples(), estimate.samples());
    same_len(r, e)?;
    if frame == 0 || r.len() < frame {
        return Err(Error::invalid("segmental snr needs len >= frame > 0"));
    }
    let frames = r.len() / frame;
    let total: f64 = (0..frames)
        .map(|f| {
            let rs = &r[f * frame..(f + 1) * frame];
            let es = &e[f * frame..(f + 1) * frame];
            let sig = dot(rs, rs);
            let err: f64 = rs.iter().zip(es).map(|(a, b)| (a - b) * (a - b)).sum();
            (10.0 * libm::log10((sig + EPS) / (err + EPS))).clamp(SEG_SNR_FLOOR, SEG_SNR_CEIL)
        })
        .sum();
    Ok(total / frames as f64)
}

pub fn metric_report(reference: &Waveform, estimate: &Waveform) -> Result<MetricReport> {
    Ok(MetricReport {
        si_snr_db: si_snr(reference, estimate, EPS)?,
        stoi: stoi(reference, estimate)?,
        seg_snr_db: segmental_snr(reference, estimate, SEG_SNR_FRAME)?,
    })
}

pub fn acoustic_features(reference: &Waveform, estimate: &Waveform, noisy: &Waveform) -> Result<AcousticFeatures> {
    let (r, e) = (reference.samples(), estimate.samples());
    same_len(r, e)?;
    same_len(r, noisy.samples())?;
    let ref_energy = dot(r, r);
    if ref_energy == 0.0 {
        return Err(Error::degenerate("reference is all zeros"));
    }
    let est_energy = dot(e, e);
    let cross = dot(e, r);
    let alpha = cross / (ref_energy + EPS);
    let residual: f64 = e.iter().zip(r).map(|(e, r)| (e - alpha * r) * (e - alpha * r)).sum();
    let n = r.len().max(1) as f64;
    let level = if est_energy > 0.0 { ref_energy / est_energy } else { 1.0 };

    let distortion_index = if est_energy == 0.0 {
        1.0
    } else {
        (1.0 - cross * cross / (est_energy * ref_energy)).clamp(0.0, 1.0)
    };
    let improvement_db = si_snr(reference, estimate, EPS)? - si_snr(reference, noisy, EPS)?;

    Ok(AcousticFeatures {
        residual_noise_db: 10.0 * libm::log10(level * residual / n + EPS),
        distortion_index,
        intelligibility_proxy: stoi(reference, estimate)?,
        loudness_db: 10.0 * libm::log10(est_energy / n + EPS),
        improvement_db,
    })
}
