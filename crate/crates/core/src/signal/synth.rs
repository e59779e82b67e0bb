//! Deterministic stand-ins for target speech, noise and their mixtures.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::fft::fft_in_place;
use super::{check_same_rate, visual_features, NoiseKind, Scene, VisualConfig, Waveform};
use crate::seed::derive;
use crate::{Error, Result};

const HARMONICS: usize = 5;
const ENVELOPE_PARTIALS: usize = 3;
const PEAK: f64 = 0.9;
const BABBLE_TALKERS: u64 = 4;

fn sample_count(duration_s: f64, sample_rate: u32) -> Result<usize> {
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::invalid("duration must be positive"));
    }
    if sample_rate == 0 {
        return Err(Error::invalid("sample rate must be positive"));
    }
    Ok((libm::round(duration_s * sample_rate as f64) as usize).max(1))
}

/// Harmonic complex (f0 and four overtones at 1/k amplitude) under a slow
/// 2-6 Hz random envelope that drops to zero in places. Peak is 0.9.
pub fn generate_clean(duration_s: f64, f0_hz: f64, seed: u64, sample_rate: u32) -> Result<Waveform> {
    let n = sample_count(duration_s, sample_rate)?;
    if !(50.0..=400.0).contains(&f0_hz) {
        return Err(Error::invalid("f0 must lie in [50, 400] Hz"));
    }
    let fs = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let phases: Vec<f64> = (0..HARMONICS).map(|_| rng.random::<f64>() * 2.0 * PI).collect();
    let env: Vec<(f64, f64, f64)> = (0..ENVELOPE_PARTIALS)
        .map(|_| {
            let f = 2.0 + 4.0 * rng.random::<f64>();
            let ph = rng.random::<f64>() * 2.0 * PI;
            let a = 0.5 + 0.5 * rng.random::<f64>();
            (f, ph, a)
        })
        .collect();
    let env_norm: f64 = env.iter().map(|e| e.2).sum();

    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let t = i as f64 / fs;
        let s: f64 = env.iter().map(|&(f, ph, a)| a * libm::sin(2.0 * PI * f * t + ph)).sum::<f64>() / env_norm;
        let gate = ((s + 0.3) / 1.3).max(0.0);
        if gate == 0.0 {
            continue;
        }
        let mut tone = 0.0;
        for (k, ph) in phases.iter().enumerate() {
            let h = (k + 1) as f64;
            if h * f0_hz >= fs / 2.0 {
                break;
            }
            tone += libm::sin(2.0 * PI * h * f0_hz * t + ph) / h;
        }
        *o = gate * tone;
    }

    let peak = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        let g = PEAK / peak;
        out.iter_mut().for_each(|s| *s *= g);
    }
    Ok(Waveform::from_parts(out, sample_rate))
}

fn normalize_rms(samples: &mut [f64]) {
    let rms = libm::sqrt(samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64);
    if rms > 0.0 {
        samples.iter_mut().for_each(|s| *s /= rms);
    }
}

/// Unit-RMS noise of the given color.
pub fn generate_noise(kind: NoiseKind, duration_s: f64, seed: u64, sample_rate: u32) -> Result<Waveform> {
    let n = sample_count(duration_s, sample_rate)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = match kind {
        NoiseKind::White => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
        NoiseKind::Pink => pink(n, &mut rng),
        NoiseKind::Babble => {
            let mut acc = vec![0.0; n];
            for talker in 0..BABBLE_TALKERS {
                let child = derive(seed, talker);
                let f0 = 100.0 + 150.0 * ChaCha8Rng::seed_from_u64(child).random::<f64>();
                let voice = generate_clean(duration_s, f0, derive(child, 1), sample_rate)?;
                acc.iter_mut().zip(voice.samples()).for_each(|(a, v)| *a += v);
            }
            acc
        }
    };
    normalize_rms(&mut out);
    Ok(Waveform::from_parts(out, sample_rate))
}

/// 1/f power spectrum shaped in the frequency domain.
fn pink(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let n_fft = n.next_power_of_two().max(2);
    let mut re = vec![0.0; n_fft];
    let mut im = vec![0.0; n_fft];
    for k in 1..=n_fft / 2 {
        let amp = 1.0 / libm::sqrt(k as f64);
        let a: f64 = rng.sample(StandardNormal);
        let b: f64 = rng.sample(StandardNormal);
        re[k] = amp * a;
        im[k] = if k == n_fft / 2 { 0.0 } else { amp * b };
        if k != n_fft / 2 {
            re[n_fft - k] = re[k];
            im[n_fft - k] = -im[k];
        }
    }
    fft_in_place(&mut re, &mut im, true);
    re.truncate(n);
    re
}

/// Mixes `clean` with a seeded crop of `noise` at `snr_db` and attaches
/// default visual features.
pub fn mix_scene(clean: &Waveform, noise: &Waveform, snr_db: f64, seed: u64) -> Result<Scene> {
    mix_scene_with(clean, noise, snr_db, seed, &VisualConfig::default())
}

pub fn mix_scene_with(
    clean: &Waveform,
    noise: &Waveform,
    snr_db: f64,
    seed: u64,
    visual: &VisualConfig,
) -> Result<Scene> {
    check_same_rate(clean, noise)?;
    if noise.len() < clean.len() {
        return Err(Error::invalid("noise is shorter than the clean target"));
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr must be finite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let slack = noise.len() - clean.len();
    let offset = if slack == 0 { 0 } else { rng.random_range(0..=slack) };
    let crop = &noise.samples()[offset..offset + clean.len()];

    let pc = clean.power();
    let pn = crop.iter().map(|s| s * s).sum::<f64>() / crop.len().max(1) as f64;
    if pc == 0.0 {
        return Err(Error::degenerate("clean target is all zeros"));
    }
    if pn == 0.0 {
        return Err(Error::degenerate("noise is all zeros"));
    }
    let gain = libm::sqrt(pc / (pn * libm::pow(10.0, snr_db / 10.0)));
    let scaled: Vec<f64> = crop.iter().map(|s| s * gain).collect();
    let noisy: Vec<f64> = clean.samples().iter().zip(&scaled).map(|(c, n)| c + n).collect();
    let visual = visual_features(clean, visual.frame_rate, visual.dim, derive(seed, 7))?;

    Ok(Scene {
        clean: clean.clone(),
        noise: Waveform::from_parts(scaled, clean.sample_rate()),
        noisy: Waveform::from_parts(noisy, clean.sample_rate()),
        visual,
        snr_db,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{fft::power_spectrum, measured_snr_db};

    fn dominant_bin(x: &[f64]) -> usize {
        let p = power_spectrum(x, x.len());
        (1..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap()
    }

    #[test]
    fn clean_is_deterministic_and_bounded() {
        let a = generate_clean(1.0, 120.0, 7, 16000).unwrap();
        let b = generate_clean(1.0, 120.0, 7, 16000).unwrap();
        assert_eq!(a.samples(), b.samples());
        assert!(a.peak() <= 0.9 + 1e-15);
        assert_eq!(a.len(), 16000);
        let c = generate_clean(1.0, 120.0, 8, 16000).unwrap();
        assert_ne!(a.samples(), c.samples());
    }

    #[test]
    fn clean_has_silent_gaps() {
        let a = generate_clean(1.0, 150.0, 3, 16000).unwrap();
        let zeros = a.samples().iter().filter(|s| **s == 0.0).count();
        assert!(zeros > 100, "{zeros}");
    }

    #[test]
    fn clean_rejects_bad_arguments() {
        assert!(matches!(generate_clean(0.0, 120.0, 1, 16000), Err(Error::InvalidArgument(_))));
        assert!(matches!(generate_clean(1.0, 120.0, 1, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(generate_clean(1.0, 20.0, 1, 16000), Err(Error::InvalidArgument(_))));
        assert!(generate_noise(NoiseKind::White, -1.0, 1, 16000).is_err());
    }

    #[test]
    fn clean_peak_near_f0() {
        // 1 s at 16 kHz: DFT bins are 1 Hz wide.
        let a = generate_clean(1.0, 120.0, 7, 16000).unwrap();
        let bin = dominant_bin(a.samples());
        assert!((119..=121).contains(&bin), "{bin}");
    }

    #[test]
    fn noise_is_unit_rms_and_deterministic() {
        for kind in [NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble] {
            let a = generate_noise(kind, 1.0, 3, 16000).unwrap();
            assert!((a.rms() - 1.0).abs() < 1e-6, "{kind}");
            let b = generate_noise(kind, 1.0, 3, 16000).unwrap();
            assert_eq!(a.samples(), b.samples());
        }
    }

    #[test]
    fn mix_hits_requested_snr() {
        let clean = generate_clean(1.0, 130.0, 11, 16000).unwrap();
        let noise = generate_noise(NoiseKind::Pink, 1.5, 12, 16000).unwrap();
        for snr in [0.0, -18.0, 6.55] {
            let scene = mix_scene(&clean, &noise, snr, 5).unwrap();
            assert!((scene.measured_snr_db() - snr).abs() < 0.01);
            assert_eq!(scene.noisy.len(), clean.len());
            assert_eq!(scene.noise.len(), clean.len());
        }
    }

    #[test]
    fn limit_peak_preserves_snr() {
        let clean = generate_clean(1.0, 130.0, 11, 16000).unwrap();
        let noise = generate_noise(NoiseKind::White, 1.0, 12, 16000).unwrap();
        let mut scene = mix_scene(&clean, &noise, -18.0, 5).unwrap();
        let g = scene.limit_peak(0.99);
        assert!(g < 1.0);
        assert!(scene.noisy.peak() <= 0.99 + 1e-12);
        assert!((measured_snr_db(&scene.clean, &scene.noisy) + 18.0).abs() < 0.01);
    }

    #[test]
    fn mix_rejects_degenerate_inputs() {
        let clean = generate_clean(1.0, 130.0, 11, 16000).unwrap();
        let silence = Waveform::zeros(16000, 16000);
        let noise = generate_noise(NoiseKind::White, 1.0, 12, 16000).unwrap();
        assert!(matches!(mix_scene(&silence, &noise, 0.0, 1), Err(Error::DegenerateSignal(_))));
        assert!(matches!(mix_scene(&clean, &silence, 0.0, 1), Err(Error::DegenerateSignal(_))));
        let short = generate_noise(NoiseKind::White, 0.5, 12, 16000).unwrap();
        assert!(matches!(mix_scene(&clean, &short, 0.0, 1), Err(Error::InvalidArgument(_))));
    }
}
