use avse_core::metrics::AcousticFeatures;
use avse_core::reward::{
    bands, describe, describe_bands, mos_proxy, relative_reward, sentiment_score, InterpretableReward, MosProxyReward,
    RewardContext, RewardModel,
};
use avse_core::signal::{generate_clean, generate_noise, mix_scene, NoiseKind};
use proptest::prelude::*;

fn features(intel: f64, residual: f64, distortion: f64, improvement: f64) -> AcousticFeatures {
    AcousticFeatures {
        residual_noise_db: residual,
        distortion_index: distortion,
        intelligibility_proxy: intel,
        loudness_db: -20.0,
        improvement_db: improvement,
    }
}

#[test]
fn lexicon_hand_evaluation() {
    // +1.0 for the clarity phrase, -0.3 for the noise phrase; sum 0.7 on the
    // [-3, 3] to [1, 5] map: 3 + 0.7 * 4 / 6.
    let s = sentiment_score("The speech is clear and easy to understand, with some background noises.").unwrap();
    assert!((s - (3.0 + 0.7 * 4.0 / 6.0)).abs() < 1e-12, "{s}");
    assert!((s - 3.466_666_666_666_667).abs() < 1e-12);
}

#[test]
fn quality_phrases_appear_in_descriptions() {
    let good = describe(&features(0.9, -30.0, 0.02, 5.0));
    assert!(good.contains("clear and easy to understand"), "{good}");
    assert!(good.contains("no noticeable background noise"), "{good}");
    let bad = describe(&features(0.3, -5.0, 0.5, -1.0));
    assert!(bad.contains("a lot of background noise"), "{bad}");
    assert_eq!(bad, describe(&features(0.3, -5.0, 0.5, -1.0)));
}

#[test]
fn mos_proxy_at_identity_estimate() {
    // improvement 0 and intelligibility 0.5 leave 1 + 4 sigmoid(-1.5 d).
    for (d, want) in [(0.0, 3.0), (0.2, 2.702_229_932_753_364), (0.7, 2.036_900_403_271_384)] {
        let got = mos_proxy(&features(0.5, -12.0, d, 0.0));
        assert!((got - want).abs() < 1e-12, "d={d}: {got} vs {want}");
    }
}

#[test]
fn mos_proxy_increases_with_improvement() {
    let v: Vec<f64> = (-10..=10).map(|i| mos_proxy(&features(0.6, -15.0, 0.2, i as f64))).collect();
    assert!(v.windows(2).all(|w| w[1] > w[0]));
}

fn scene_at(snr: f64, seed: u64, kind: NoiseKind) -> avse_core::signal::Scene {
    let c = generate_clean(1.0, 110.0 + 20.0 * seed as f64, seed, 16000).unwrap();
    let n = generate_noise(kind, 1.0, seed + 100, 16000).unwrap();
    mix_scene(&c, &n, snr, seed + 200).unwrap()
}

#[test]
fn clean_scores_high_and_lowest_snr_scores_low() {
    for (i, kind) in [NoiseKind::White, NoiseKind::Pink, NoiseKind::Babble].into_iter().enumerate() {
        let s = scene_at(-18.0, i as u64 + 1, kind);
        let ctx = RewardContext { clean: &s.clean, noisy: &s.noisy };
        let clean = InterpretableReward.score(&s.clean, &ctx).unwrap();
        assert!(clean.sentiment >= 4.0, "{kind:?}: {} {}", clean.sentiment, clean.description);
        let noisy = InterpretableReward.score(&s.noisy, &ctx).unwrap();
        assert!(noisy.sentiment <= 2.5, "{kind:?}: {} {}", noisy.sentiment, noisy.description);
    }
}

#[test]
fn reported_reward_delta_is_plain_arithmetic() {
    let s = scene_at(0.0, 1, NoiseKind::White);
    let ctx = RewardContext { clean: &s.clean, noisy: &s.noisy };
    let mut a = InterpretableReward.score(&s.noisy, &ctx).unwrap();
    let mut b = a.clone();
    assert_eq!(relative_reward(&a, &b).unwrap(), 0.0);
    a.sentiment = 4.20;
    b.sentiment = 2.41;
    assert!((relative_reward(&a, &b).unwrap() - 1.79).abs() < 1e-12);
    assert_eq!(relative_reward(&a, &b).unwrap(), -relative_reward(&b, &a).unwrap());
}

#[test]
fn scoring_is_frozen_over_many_calls() {
    let s = scene_at(0.0, 2, NoiseKind::Pink);
    let ctx = RewardContext { clean: &s.clean, noisy: &s.noisy };
    let models: [&dyn RewardModel; 2] = [&InterpretableReward, &MosProxyReward];
    for m in models {
        let first = m.score(&s.noisy, &ctx).unwrap();
        for _ in 0..5_000 {
            assert_eq!(m.score(&s.noisy, &ctx).unwrap(), first);
        }
    }
}

fn any_features() -> impl Strategy<Value = AcousticFeatures> {
    (0.0f64..=1.0, -60.0f64..20.0, 0.0f64..=1.0, -40.0f64..40.0).prop_map(|(i, r, d, imp)| features(i, r, d, imp))
}

/// A strictly better band for one axis, if any.
fn better(f: &AcousticFeatures, axis: usize) -> Option<AcousticFeatures> {
    let mut g = *f;
    let b = bands(f);
    use avse_core::reward::Band::*;
    match axis {
        0 => g.intelligibility_proxy = match b.clarity { Worst => 0.6, Middle => 0.9, Best => return None },
        1 => g.residual_noise_db = match b.noise { Worst => -15.0, Middle => -30.0, Best => return None },
        _ => g.distortion_index = match b.distortion { Worst => 0.2, Middle => 0.05, Best => return None },
    }
    Some(g)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn scores_stay_in_range(f in any_features()) {
        let s = sentiment_score(&describe(&f)).unwrap();
        prop_assert!((1.0..=5.0).contains(&s));
        prop_assert!((1.0..=5.0).contains(&mos_proxy(&f)));
    }

    #[test]
    fn text_is_a_function_of_bands(f in any_features()) {
        prop_assert_eq!(describe(&f), describe_bands(&bands(&f)));
    }

    #[test]
    fn a_better_band_never_lowers_the_score(f in any_features(), axis in 0usize..3) {
        if let Some(g) = better(&f, axis) {
            let before = sentiment_score(&describe(&f)).unwrap();
            let after = sentiment_score(&describe(&g)).unwrap();
            prop_assert!(after >= before, "{} -> {}", describe(&f), describe(&g));
        }
    }
}
