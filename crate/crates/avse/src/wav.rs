//! Mono WAV files: 16-bit PCM on write; 16/24/32-bit PCM or 32-bit float on read.

use std::path::Path;

use avse_core::signal::Waveform;
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{CliError, Result};

const FULL_SCALE: f64 = 32767.0;

fn hound_err(path: &Path, e: hound::Error) -> CliError {
    match e {
        hound::Error::IoError(io) => CliError::io(path, io),
        hound::Error::Unsupported => CliError::UnsupportedFormat { path: path.into(), detail: "unsupported WAV encoding".into() },
        other => CliError::format(path, other),
    }
}

pub fn read(path: &Path) -> Result<Waveform> {
    let mut reader = WavReader::open(path).map_err(|e| hound_err(path, e))?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(CliError::UnsupportedFormat { path: path.into(), detail: format!("{} channels, expected mono", spec.channels) });
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = (1i64 << (bits - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| hound_err(path, e))?
        }
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(|e| hound_err(path, e))?,
        (fmt, bits) => {
            return Err(CliError::UnsupportedFormat { path: path.into(), detail: format!("{bits}-bit {fmt:?}") });
        }
    };
    // 16-bit writes use a 32767 scale; undo it exactly for round trips.
    let samples = if spec.sample_format == SampleFormat::Int && spec.bits_per_sample == 16 {
        samples.into_iter().map(|v| v * 32768.0 / FULL_SCALE).collect()
    } else {
        samples
    };
    Ok(Waveform::new(samples, spec.sample_rate)?)
}

fn to_pcm(v: f64) -> (i16, bool) {
    let scaled = (v * FULL_SCALE).round();
    if scaled > FULL_SCALE {
        (i16::MAX, true)
    } else if scaled < -FULL_SCALE {
        (-i16::MAX, true)
    } else {
        (scaled as i16, false)
    }
}

/// The waveform exactly as [`write`] followed by [`read`] would return it.
pub fn quantize(w: &Waveform) -> Waveform {
    let samples = w.samples().iter().map(|&v| to_pcm(v).0 as f64 / FULL_SCALE).collect();
    Waveform::new(samples, w.sample_rate()).expect("quantized samples are finite")
}

/// Writes 16-bit mono PCM. Returns how many samples were clipped.
pub fn write(path: &Path, w: &Waveform) -> Result<usize> {
    let spec = WavSpec { channels: 1, sample_rate: w.sample_rate(), bits_per_sample: 16, sample_format: SampleFormat::Int };
    let mut writer = WavWriter::create(path, spec).map_err(|e| hound_err(path, e))?;
    let mut clipped = 0;
    for &v in w.samples() {
        let (s, c) = to_pcm(v);
        clipped += usize::from(c);
        writer.write_sample(s).map_err(|e| hound_err(path, e))?;
    }
    writer.finalize().map_err(|e| hound_err(path, e))?;
    Ok(clipped)
}
