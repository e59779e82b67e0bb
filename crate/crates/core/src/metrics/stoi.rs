//! Short-time objective intelligibility, following the reference procedure:
//! 10 kHz resampling, silent-frame removal 40 dB below the loudest frame,
//! 512-point STFT of 256-sample frames, 15 one-third-octave bands from
//! 150 Hz, 30-frame segments, normalization and clipping at -15 dB SDR.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::signal::fft::power_spectrum;
use crate::signal::{resample, Waveform};
use crate::{Error, Result};

pub const STOI_RATE: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = FRAME / 2;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const TINY: f64 = f64::EPSILON;

/// `stoi` on two waveforms at a common sample rate. The result is clamped to
/// `[0, 1]`.
pub fn stoi(reference: &Waveform, estimate: &Waveform) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::invalid("stoi inputs must have equal length"));
    }
    if reference.sample_rate() != estimate.sample_rate() {
        return Err(Error::invalid("stoi inputs must share a sample rate"));
    }
    let x = resample(reference, STOI_RATE)?;
    let y = resample(estimate, STOI_RATE)?;
    stoi_slices(x.samples(), y.samples())
}

/// `stoi` on signals already at [`STOI_RATE`].
pub fn stoi_slices(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::invalid("stoi inputs must have equal length"));
    }
    if x.len() <= FRAME {
        return Err(Error::InsufficientSignal("signal shorter than one analysis frame".into()));
    }
    let (x, y) = remove_silent_frames(x, y);
    let xs = band_envelopes(&x);
    let ys = band_envelopes(&y);
    let frames = xs.first().map_or(0, |b| b.len());
    if frames < SEGMENT {
        return Err(Error::InsufficientSignal(alloc::format!(
            "{frames} non-silent frames, need {SEGMENT}"
        )));
    }

    let clip = libm::pow(10.0, -BETA_DB / 20.0);
    let segments = frames - SEGMENT + 1;
    let mut total = 0.0;
    let mut xn = [0.0; SEGMENT];
    let mut yn = [0.0; SEGMENT];
    for m in SEGMENT..=frames {
        for b in 0..BANDS {
            let xseg = &xs[b][m - SEGMENT..m];
            let yseg = &ys[b][m - SEGMENT..m];
            let scale = norm(xseg) / (norm(yseg) + TINY);
            for j in 0..SEGMENT {
                xn[j] = xseg[j];
                yn[j] = (yseg[j] * scale).min(xseg[j] * (1.0 + clip));
            }
            center(&mut xn);
            center(&mut yn);
            let nx = norm(&xn) + TINY;
            let ny = norm(&yn) + TINY;
            total += xn.iter().zip(&yn).map(|(a, b)| (a / nx) * (b / ny)).sum::<f64>();
        }
    }
    let d = total / (BANDS * segments) as f64;
    Ok(d.clamp(0.0, 1.0))
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= mean);
}

/// Symmetric Hann without its zero end points (`hanning(n + 2)[1..n + 1]`).
fn analysis_window() -> Vec<f64> {
    (1..=FRAME)
        .map(|n| 0.5 - 0.5 * libm::cos(2.0 * PI * n as f64 / (FRAME + 1) as f64))
        .collect()
}

fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    // Frames start at 0, HOP, .. strictly before len - FRAME.
    (0..len.saturating_sub(FRAME)).step_by(HOP)
}

fn remove_silent_frames(x: &[f64], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let w = analysis_window();
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energies: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = x[s..s + FRAME].iter().zip(&w).map(|(v, h)| (v * h) * (v * h)).sum();
            20.0 * libm::log10(libm::sqrt(e) + TINY)
        })
        .collect();
    let max = energies.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energies)
        .filter(|(_, e)| max - DYN_RANGE_DB - **e < 0.0)
        .map(|(s, _)| *s)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let out_len = (kept.len() - 1) * HOP + FRAME;
    let mut xo = vec![0.0; out_len];
    let mut yo = vec![0.0; out_len];
    for (i, &s) in kept.iter().enumerate() {
        let o = i * HOP;
        for j in 0..FRAME {
            xo[o + j] += w[j] * x[s + j];
            yo[o + j] += w[j] * y[s + j];
        }
    }
    (xo, yo)
}

/// One-third-octave band edges as FFT bin ranges `[lo, hi)`.
fn band_bins() -> [(usize, usize); BANDS] {
    let bins = NFFT / 2 + 1;
    let freq = |k: usize| k as f64 * STOI_RATE as f64 / NFFT as f64;
    let closest = |target: f64| {
        (0..bins)
            .min_by(|&a, &b| (freq(a) - target).abs().total_cmp(&(freq(b) - target).abs()))
            .unwrap_or(0)
    };
    let mut out = [(0, 0); BANDS];
    for (k, o) in out.iter_mut().enumerate() {
        let k = k as f64;
        let lo = MIN_FREQ * libm::pow(2.0, (2.0 * k - 1.0) / 6.0);
        let hi = MIN_FREQ * libm::pow(2.0, (2.0 * k + 1.0) / 6.0);
        *o = (closest(lo), closest(hi));
    }
    out
}

/// Band envelopes, `BANDS` rows of per-frame magnitudes.
fn band_envelopes(x: &[f64]) -> Vec<Vec<f64>> {
    let w = analysis_window();
    let edges = band_bins();
    let mut out = vec![Vec::new(); BANDS];
    let mut frame = [0.0; FRAME];
    for s in frame_starts(x.len()) {
        for j in 0..FRAME {
            frame[j] = w[j] * x[s + j];
        }
        let p = power_spectrum(&frame, NFFT);
        for (b, &(lo, hi)) in edges.iter().enumerate() {
            out[b].push(libm::sqrt(p[lo..hi].iter().sum()));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_clean, generate_noise, NoiseKind};

    fn mix(seed: u64, snr_db: f64) -> (Waveform, Waveform) {
        let clean = generate_clean(1.0, 110.0 + seed as f64, seed, 16000).unwrap();
        let noise = generate_noise(NoiseKind::White, 1.0, seed + 100, 16000).unwrap();
        let g = libm::sqrt(clean.power() / libm::pow(10.0, snr_db / 10.0));
        let noisy: Vec<f64> = clean.samples().iter().zip(noise.samples()).map(|(c, n)| c + g * n).collect();
        (clean, Waveform::new(noisy, 16000).unwrap())
    }

    #[test]
    fn band_edges_cover_expected_range() {
        let edges = band_bins();
        // 150 Hz * 2^(-1/6) ~ 133.6 Hz -> closest bin at 19.53 Hz spacing is 7.
        assert_eq!(edges[0].0, 7);
        assert!(edges.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(edges[BANDS - 1].1 <= NFFT / 2 + 1);
    }

    #[test]
    fn identical_and_sign_flipped() {
        let (clean, _) = mix(3, 0.0);
        let s = stoi(&clean, &clean).unwrap();
        assert!(s >= 0.99, "{s}");
        let flipped = clean.scaled(-1.0);
        assert!((stoi(&clean, &flipped).unwrap() - s).abs() < 1e-9);
        let loud = clean.scaled(3.0);
        assert!((stoi(&clean, &loud).unwrap() - s).abs() < 1e-9);
    }

    #[test]
    fn noisier_is_less_intelligible() {
        let lo: f64 = (0..5).map(|s| stoi(&mix(s, 0.0).0, &mix(s, -10.0).1).unwrap()).sum();
        let hi: f64 = (0..5).map(|s| stoi(&mix(s, 0.0).0, &mix(s, 10.0).1).unwrap()).sum();
        assert!(lo < hi, "{lo} {hi}");
    }

    #[test]
    fn short_input_is_rejected() {
        let w = Waveform::zeros(3000, 16000);
        assert!(matches!(stoi(&w, &w), Err(Error::InsufficientSignal(_))));
        let t = Waveform::zeros(100, 16000);
        assert!(matches!(stoi(&t, &t), Err(Error::InsufficientSignal(_))));
    }

    // Values computed by the reference Python implementation (pystoi 0.4,
    // extended=False) on the same formula-built 10 kHz signals.
    #[test]
    fn matches_reference_implementation() {
        let n = 15000;
        let x: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / 10000.0;
                let env = (libm::sin(2.0 * PI * 3.0 * t) + 0.2).max(0.0);
                env * (libm::sin(2.0 * PI * 140.0 * t)
                    + 0.5 * libm::sin(2.0 * PI * 280.0 * t + 0.3)
                    + 0.25 * libm::sin(2.0 * PI * 1130.0 * t))
            })
            .collect();
        let noise: Vec<f64> = (0..n)
            .map(|i| {
                let i = i as f64;
                libm::sin(i * i * 0.0007) * 0.6 + libm::sin(i * 1.93) * 0.2
            })
            .collect();
        for (g, expected) in [(0.0, 0.999999999999969), (0.3, 0.38041546200018855), (1.0, 0.33235956858875026)] {
            let y: Vec<f64> = x.iter().zip(&noise).map(|(a, b)| a + g * b).collect();
            let d = stoi_slices(&x, &y).unwrap();
            assert!((d - expected).abs() < 1e-6, "gain {g}: {d} vs {expected}");
        }
    }

    #[test]
    fn zero_estimate_scores_zero() {
        let (clean, _) = mix(1, 0.0);
        let z = Waveform::zeros(clean.len(), 16000);
        assert_eq!(stoi(&clean, &z).unwrap(), 0.0);
    }
}
