use alloc::vec::Vec;
use core::f64::consts::PI;

use super::fft::power_spectrum;
use super::{Matrix, Waveform};
use crate::{Error, Result};

/// Hann-windowed magnitude spectrogram, `bins x frames`.
#[derive(Debug, Clone, PartialEq)]
pub struct StftFrame {
    pub magnitudes: Matrix,
    pub window_len: usize,
    pub hop: usize,
}

pub(crate) fn hann(len: usize) -> Vec<f64> {
    (0..len).map(|n| 0.5 - 0.5 * libm::cos(2.0 * PI * n as f64 / len as f64)).collect()
}

pub fn stft(w: &Waveform, window_len: usize, hop: usize) -> Result<StftFrame> {
    if hop == 0 || hop > window_len || window_len > w.len() {
        return Err(Error::invalid("stft requires 0 < hop <= window_len <= len"));
    }
    let frames = (w.len() - window_len) / hop + 1;
    let bins = window_len / 2 + 1;
    let window = hann(window_len);
    let mut magnitudes = Matrix::zeros(bins, frames);
    let mut frame = alloc::vec![0.0; window_len];
    for f in 0..frames {
        let seg = &w.samples()[f * hop..f * hop + window_len];
        for ((d, s), h) in frame.iter_mut().zip(seg).zip(&window) {
            *d = s * h;
        }
        for (b, p) in power_spectrum(&frame, window_len).into_iter().enumerate() {
            magnitudes.set(b, f, libm::sqrt(p));
        }
    }
    Ok(StftFrame { magnitudes, window_len, hop })
}
