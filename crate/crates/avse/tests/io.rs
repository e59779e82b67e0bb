use std::fs;

use avse::lexicon;
use avse::lock::{DirLock, LOCK_NAME};
use avse::pipeline::explain_waveforms;
use avse::wav;
use avse_core::reward::{LEXICON, LEXICON_VERSION};
use avse_core::signal::{generate_clean, generate_noise, mix_scene, NoiseKind, Waveform};

fn header(data_bytes: u32, rate: u32) -> Vec<u8> {
    let mut h = Vec::new();
    h.extend(b"RIFF");
    h.extend((36 + data_bytes).to_le_bytes());
    h.extend(b"WAVEfmt ");
    h.extend(16u32.to_le_bytes());
    h.extend(1u16.to_le_bytes());
    h.extend(1u16.to_le_bytes());
    h.extend(rate.to_le_bytes());
    h.extend((rate * 2).to_le_bytes());
    h.extend(2u16.to_le_bytes());
    h.extend(16u16.to_le_bytes());
    h.extend(b"data");
    h.extend(data_bytes.to_le_bytes());
    h
}

#[test]
fn four_sample_file_matches_hand_built_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.wav");
    let w = Waveform::new(vec![0.0, 0.5, -0.5, 1.0], 16000).unwrap();
    assert_eq!(wav::write(&path, &w).unwrap(), 0);
    let mut want = header(8, 16000);
    for s in [0i16, 16384, -16384, 32767] {
        want.extend(s.to_le_bytes());
    }
    assert_eq!(fs::read(&path).unwrap(), want);
    let back = wav::read(&path).unwrap();
    assert_eq!(back.samples(), wav::quantize(&w).samples());
    assert_eq!(back.samples()[3], 1.0);
}

#[test]
fn empty_file_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.wav");
    let w = Waveform::new(vec![], 8000).unwrap();
    wav::write(&path, &w).unwrap();
    assert_eq!(fs::read(&path).unwrap(), header(0, 8000));
    let back = wav::read(&path).unwrap();
    assert!(back.is_empty());
    assert_eq!(back.sample_rate(), 8000);
}

#[test]
fn clipping_is_counted_and_quantization_is_bounded() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.wav");
    let samples: Vec<f64> = (0..2000).map(|i| 1.2 * ((i as f64) * 0.013).sin()).collect();
    let w = Waveform::new(samples.clone(), 16000).unwrap();
    let over = samples.iter().filter(|v| (*v * 32767.0).round().abs() > 32767.0).count();
    assert!(over > 0);
    assert_eq!(wav::write(&path, &w).unwrap(), over);
    let back = wav::read(&path).unwrap();
    for (a, b) in samples.iter().zip(back.samples()) {
        if a.abs() <= 1.0 {
            assert!((a - b).abs() <= 0.5 / 32767.0 + 1e-15);
        } else {
            assert_eq!(b.abs(), 1.0);
        }
    }
}

#[test]
fn stereo_input_is_unsupported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("st.wav");
    let spec = hound::WavSpec { channels: 2, sample_rate: 16000, bits_per_sample: 16, sample_format: hound::SampleFormat::Int };
    let mut w = hound::WavWriter::create(&path, spec).unwrap();
    w.write_sample(0i16).unwrap();
    w.write_sample(0i16).unwrap();
    w.finalize().unwrap();
    let err = wav::read(&path).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert_eq!(err.kind(), "unsupported_format");
}

#[test]
fn shipped_lexicon_equals_the_scorer_table() {
    let lex = lexicon::shipped();
    assert_eq!(lex.version, LEXICON_VERSION);
    let pairs: Vec<(&str, f64)> = lex.phrases.iter().map(|p| (p.phrase.as_str(), p.weight)).collect();
    assert_eq!(pairs, LEXICON);
    assert_eq!((lex.score_map.offset, lex.score_map.min, lex.score_map.max), (3.0, 1.0, 5.0));
    assert!((lex.score_map.slope - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn lock_blocks_a_second_claim_and_releases() {
    let dir = tempfile::tempdir().unwrap();
    let held = DirLock::acquire(dir.path()).unwrap();
    assert!(dir.path().join(LOCK_NAME).exists());
    let err = DirLock::acquire(dir.path()).unwrap_err();
    assert_eq!(err.exit_code(), 3);
    drop(held);
    assert!(!dir.path().join(LOCK_NAME).exists());
}

#[test]
fn explaining_the_clean_signal_uses_best_band_phrases() {
    let c = generate_clean(1.0, 130.0, 4, 16000).unwrap();
    let n = generate_noise(NoiseKind::Babble, 1.0, 5, 16000).unwrap();
    let scene = mix_scene(&c, &n, 0.0, 6).unwrap();
    let ex = explain_waveforms(3, &scene, &scene.clean).unwrap();
    for phrase in ["clear and easy to understand", "no noticeable background noise", "good speech sample"] {
        assert!(ex.enhanced.description.contains(phrase), "{}", ex.enhanced.description);
    }
    assert!(!ex.noisy.description.contains("no noticeable background noise"));
    assert!(ex.delta_reward > 0.0 && ex.delta_si_snr_db > 0.0 && ex.delta_stoi > 0.0);
    assert_eq!(ex.delta_reward, ex.enhanced.sentiment - ex.noisy.sentiment);
    let text = ex.render();
    assert!(text.starts_with("scene 3\n") && text.contains(&ex.enhanced.description));
}
