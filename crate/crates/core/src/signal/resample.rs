//! Rational-ratio polyphase resampling with a Kaiser-windowed sinc kernel.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::Waveform;
use crate::{Error, Result};

/// Kernel half-width in zero crossings of the lower of the two rates.
const ZERO_CROSSINGS: f64 = 32.0;
const KAISER_BETA: f64 = 8.0;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        libm::sin(PI * x) / (PI * x)
    }
}

/// Resamples to `target_rate`. Output length is `round(len * target / source)`.
/// Equal rates return the input unchanged.
pub fn resample(w: &Waveform, target_rate: u32) -> Result<Waveform> {
    if target_rate == 0 {
        return Err(Error::invalid("target rate must be positive"));
    }
    let src = w.sample_rate() as u64;
    let dst = target_rate as u64;
    if src == dst {
        return Ok(w.clone());
    }
    let g = gcd(src, dst);
    let up = dst / g;
    let down = src / g;
    let len = w.len() as u64;
    let out_len = ((len * dst + src / 2) / src) as usize;

    let ratio = (dst as f64 / src as f64).min(1.0);
    let half_width = ZERO_CROSSINGS / ratio;
    let taps = libm::ceil(half_width) as i64;
    let norm = bessel_i0(KAISER_BETA);

    // One coefficient row per fractional phase p/up; tap j covers offset j - taps + 1.
    let width = (2 * taps) as usize;
    let mut table = vec![0.0; up as usize * width];
    for p in 0..up as usize {
        let frac = p as f64 / up as f64;
        for j in 0..width {
            let d = (j as i64 - taps + 1) as f64 - frac;
            let x = d / half_width;
            let win = if x.abs() >= 1.0 {
                0.0
            } else {
                bessel_i0(KAISER_BETA * libm::sqrt(1.0 - x * x)) / norm
            };
            table[p * width + j] = ratio * sinc(ratio * d) * win;
        }
    }

    let x = w.samples();
    let mut out: Vec<f64> = Vec::with_capacity(out_len);
    for n in 0..out_len as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = (pos % up) as usize;
        let coeffs = &table[phase * width..(phase + 1) * width];
        let first = base - taps + 1;
        let lo = (-first).max(0) as usize;
        let hi = ((x.len() as i64 - first).min(width as i64)).max(0) as usize;
        let mut acc = 0.0;
        if lo < hi {
            let start = (first + lo as i64) as usize;
            for (c, s) in coeffs[lo..hi].iter().zip(&x[start..start + (hi - lo)]) {
                acc += c * s;
            }
        }
        out.push(acc);
    }
    Ok(Waveform::from_parts(out, target_rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, fs: u32, n: usize) -> Waveform {
        let s = (0..n).map(|i| libm::sin(2.0 * PI * freq * i as f64 / fs as f64)).collect();
        Waveform::new(s, fs).unwrap()
    }

    #[test]
    fn identity_when_rates_match() {
        let w = tone(440.0, 16000, 1000);
        let r = resample(&w, 16000).unwrap();
        assert_eq!(r, w);
    }

    #[test]
    fn output_length_rounds() {
        for n in [16000usize, 16001, 17, 1] {
            let w = tone(440.0, 16000, n);
            let r = resample(&w, 10000).unwrap();
            assert_eq!(r.len(), libm::round(n as f64 * 5.0 / 8.0) as usize, "{n}");
            assert_eq!(r.sample_rate(), 10000);
        }
    }

    #[test]
    fn band_limited_energy_is_kept() {
        for (from, to) in [(16000u32, 10000u32), (10000, 16000), (16000, 8000)] {
            let f_max = 0.45 * from.min(to) as f64;
            let fs = from as f64;
            let n = from as usize;
            let s: Vec<f64> = (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    libm::sin(2.0 * PI * 300.0 * t) + 0.5 * libm::sin(2.0 * PI * f_max * 0.95 * t + 0.3)
                })
                .collect();
            let w = Waveform::new(s, from).unwrap();
            let r = resample(&w, to).unwrap();
            let rel = (r.rms() - w.rms()).abs() / w.rms();
            assert!(rel <= 0.02, "{from}->{to}: {rel}");
        }
    }

    #[test]
    fn rejects_zero_rate() {
        assert!(resample(&tone(1.0, 100, 10), 0).is_err());
    }
}
