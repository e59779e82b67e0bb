//! Iterative radix-2 FFT with a direct-DFT fallback for other lengths.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// In-place complex FFT. `re.len()` must be a power of two.
pub fn fft_in_place(re: &mut [f64], im: &mut [f64], inverse: bool) {
    let n = re.len();
    debug_assert_eq!(n, im.len());
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }

    let mut j = 0usize;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let sign = if inverse { 1.0 } else { -1.0 };
    let mut len = 2;
    while len <= n {
        let ang = sign * 2.0 * PI / len as f64;
        let half = len / 2;
        // Twiddles computed directly per index; recurrences drift on long transforms.
        let tw: Vec<(f64, f64)> = (0..half)
            .map(|k| (libm::cos(ang * k as f64), libm::sin(ang * k as f64)))
            .collect();
        let mut start = 0;
        while start < n {
            for k in 0..half {
                let (wr, wi) = tw[k];
                let a = start + k;
                let b = a + half;
                let xr = re[b] * wr - im[b] * wi;
                let xi = re[b] * wi + im[b] * wr;
                re[b] = re[a] - xr;
                im[b] = im[a] - xi;
                re[a] += xr;
                im[a] += xi;
            }
            start += len;
        }
        len <<= 1;
    }

    if inverse {
        let scale = 1.0 / n as f64;
        for v in re.iter_mut().chain(im.iter_mut()) {
            *v *= scale;
        }
    }
}

/// Squared magnitudes of bins `0..=n/2` of the real frame zero-padded to `n_fft`.
pub fn power_spectrum(frame: &[f64], n_fft: usize) -> Vec<f64> {
    let bins = n_fft / 2 + 1;
    if n_fft.is_power_of_two() {
        let mut re = vec![0.0; n_fft];
        let mut im = vec![0.0; n_fft];
        re[..frame.len()].copy_from_slice(frame);
        fft_in_place(&mut re, &mut im, false);
        (0..bins).map(|k| re[k] * re[k] + im[k] * im[k]).collect()
    } else {
        (0..bins)
            .map(|k| {
                let mut sr = 0.0;
                let mut si = 0.0;
                for (t, &x) in frame.iter().enumerate() {
                    let ang = -2.0 * PI * ((k * t) % n_fft) as f64 / n_fft as f64;
                    sr += x * libm::cos(ang);
                    si += x * libm::sin(ang);
                }
                sr * sr + si * si
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(re: &[f64], im: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let n = re.len();
        let mut or = vec![0.0; n];
        let mut oi = vec![0.0; n];
        for k in 0..n {
            for t in 0..n {
                let a = -2.0 * PI * (k * t) as f64 / n as f64;
                or[k] += re[t] * libm::cos(a) - im[t] * libm::sin(a);
                oi[k] += re[t] * libm::sin(a) + im[t] * libm::cos(a);
            }
        }
        (or, oi)
    }

    #[test]
    fn matches_naive_dft_and_inverts() {
        let re0: Vec<f64> = (0..64).map(|i| libm::sin(i as f64 * 0.37) + 0.1 * i as f64).collect();
        let im0: Vec<f64> = (0..64).map(|i| libm::cos(i as f64 * 1.3)).collect();
        let (er, ei) = naive(&re0, &im0);
        let mut re = re0.clone();
        let mut im = im0.clone();
        fft_in_place(&mut re, &mut im, false);
        for k in 0..64 {
            assert!((re[k] - er[k]).abs() < 1e-9);
            assert!((im[k] - ei[k]).abs() < 1e-9);
        }
        fft_in_place(&mut re, &mut im, true);
        for k in 0..64 {
            assert!((re[k] - re0[k]).abs() < 1e-12);
            assert!((im[k] - im0[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn non_power_of_two_uses_direct_dft() {
        let frame: Vec<f64> = (0..12).map(|i| libm::cos(2.0 * PI * 3.0 * i as f64 / 12.0)).collect();
        let p = power_spectrum(&frame, 12);
        assert_eq!(p.len(), 7);
        assert!((p[3] - 36.0).abs() < 1e-9);
        assert!(p[2] < 1e-18 && p[4] < 1e-18);
    }
}
