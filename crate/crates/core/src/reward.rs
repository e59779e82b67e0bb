//! Frozen reward models.
//!
//! The interpretable model turns acoustic features into a short quality
//! description and scores that text with a phrase lexicon. The scalar model
//! maps the same features straight to a score. Both score on `[1, 5]`.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::metrics::{acoustic_features, AcousticFeatures};
use crate::signal::Waveform;
use crate::{Error, Result};

/// Instruction a speech-language assessor would receive; kept in every record.
pub const PROMPT: &str = "Give me an assessment of the quality of this speech sample";

pub const LEXICON_VERSION: u32 = 1;

/// Phrase weights used by [`sentiment_score`].
pub const LEXICON: &[(&str, f64)] = &[
    ("clear and easy to understand", 1.0),
    ("no noticeable background noise", 1.0),
    ("good speech sample", 1.0),
    ("somewhat muffled", -0.3),
    ("some background noises", -0.3),
    ("a slight sense of distortion", -0.3),
    ("distorted and muffled", -1.0),
    ("a lot of background noise", -1.0),
    ("strong distortion", -1.0),
    ("difficult to understand", -1.0),
    ("poor speech sample", -1.0),
];

pub const SCORE_MIN: f64 = 1.0;
pub const SCORE_MAX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Best,
    Middle,
    Worst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bands {
    pub clarity: Band,
    pub noise: Band,
    pub distortion: Band,
}

pub fn bands(f: &AcousticFeatures) -> Bands {
    let clarity = match f.intelligibility_proxy {
        x if x >= 0.75 => Band::Best,
        x if x >= 0.45 => Band::Middle,
        _ => Band::Worst,
    };
    let noise = match f.residual_noise_db {
        x if x <= -25.0 => Band::Best,
        x if x <= -10.0 => Band::Middle,
        _ => Band::Worst,
    };
    let distortion = match f.distortion_index {
        x if x < 0.1 => Band::Best,
        x if x <= 0.3 => Band::Middle,
        _ => Band::Worst,
    };
    Bands { clarity, noise, distortion }
}

/// The description depends on the band assignment only.
pub fn describe_bands(b: &Bands) -> String {
    let clarity = match b.clarity {
        Band::Best => "clear and easy to understand",
        Band::Middle => "somewhat muffled",
        Band::Worst => "distorted and muffled, difficult to understand",
    };
    let noise = match b.noise {
        Band::Best => "no noticeable background noise",
        Band::Middle => "some background noises",
        Band::Worst => "a lot of background noise",
    };
    let distortion = match b.distortion {
        Band::Best => "",
        Band::Middle => " There is a slight sense of distortion.",
        Band::Worst => " There is strong distortion.",
    };
    let good = b.clarity != Band::Worst && b.noise != Band::Worst && b.distortion != Band::Worst;
    let summary = if good { "good" } else { "poor" };
    format!("The speech is {clarity}, with {noise}.{distortion} Overall, this is a {summary} speech sample.")
}

pub fn describe(f: &AcousticFeatures) -> String {
    describe_bands(&bands(f))
}

/// Sum of matched phrase weights, scanning left to right and taking the
/// longest phrase at each word boundary.
pub fn lexicon_sum(text: &str) -> f64 {
    let lower = text.to_ascii_lowercase();
    let bytes = lower.as_bytes();
    let mut phrases: Vec<&(&str, f64)> = LEXICON.iter().collect();
    phrases.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
    let is_word = |c: u8| c.is_ascii_alphanumeric();
    let mut sum = 0.0;
    let mut i = 0;
    while i < bytes.len() {
        if i > 0 && is_word(bytes[i - 1]) {
            i += 1;
            continue;
        }
        let hit = phrases.iter().find(|(p, _)| {
            let end = i + p.len();
            lower[i..].starts_with(p) && (end == bytes.len() || !is_word(bytes[end]))
        });
        match hit {
            Some((p, w)) => {
                sum += w;
                i += p.len();
            }
            None => i += 1,
        }
    }
    sum
}

/// Lexicon sum mapped affinely from `[-3, 3]` to `[1, 5]`, then clamped.
pub fn sentiment_score(text: &str) -> Result<f64> {
    if text.trim().is_empty() {
        return Err(Error::invalid("cannot score an empty description"));
    }
    Ok((3.0 + 2.0 / 3.0 * lexicon_sum(text)).clamp(SCORE_MIN, SCORE_MAX))
}

/// References available to the proxy assessors.
#[derive(Debug, Clone, Copy)]
pub struct RewardContext<'a> {
    pub clean: &'a Waveform,
    pub noisy: &'a Waveform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub description: String,
    pub sentiment: f64,
    pub features: AcousticFeatures,
    pub model_id: String,
    pub prompt: String,
}

/// A frozen scorer. Implementations hold no mutable state.
pub trait RewardModel: Send + Sync {
    fn model_id(&self) -> &str;
    fn score(&self, est: &Waveform, ctx: &RewardContext<'_>) -> Result<RewardRecord>;
}

fn features(est: &Waveform, ctx: &RewardContext<'_>) -> Result<AcousticFeatures> {
    if est.len() != ctx.clean.len() || est.len() != ctx.noisy.len() {
        return Err(Error::invalid(format!(
            "estimate has {} samples, context {} / {}",
            est.len(),
            ctx.clean.len(),
            ctx.noisy.len()
        )));
    }
    acoustic_features(ctx.clean, est, ctx.noisy)
}

/// Features, then description, then lexicon sentiment.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InterpretableReward;

impl InterpretableReward {
    pub const ID: &'static str = "interpretable-v1";
}

impl RewardModel for InterpretableReward {
    fn model_id(&self) -> &str {
        Self::ID
    }

    fn score(&self, est: &Waveform, ctx: &RewardContext<'_>) -> Result<RewardRecord> {
        let features = features(est, ctx)?;
        let description = describe(&features);
        let sentiment = sentiment_score(&description)?;
        Ok(RewardRecord { description, sentiment, features, model_id: Self::ID.to_owned(), prompt: PROMPT.to_owned() })
    }
}

/// Smooth feature-to-score map with no text.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MosProxyReward;

impl MosProxyReward {
    pub const ID: &'static str = "mos-proxy-v1";
}

pub fn mos_proxy(f: &AcousticFeatures) -> f64 {
    let z = 0.30 * f.improvement_db + 2.0 * (f.intelligibility_proxy - 0.5) - 1.5 * f.distortion_index;
    (1.0 + 4.0 / (1.0 + libm::exp(-z))).clamp(SCORE_MIN, SCORE_MAX)
}

impl RewardModel for MosProxyReward {
    fn model_id(&self) -> &str {
        Self::ID
    }

    fn score(&self, est: &Waveform, ctx: &RewardContext<'_>) -> Result<RewardRecord> {
        let features = features(est, ctx)?;
        Ok(RewardRecord {
            description: String::new(),
            sentiment: mos_proxy(&features),
            features,
            model_id: Self::ID.to_owned(),
            prompt: PROMPT.to_owned(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    #[default]
    Interpretable,
    MosProxy,
}

impl RewardKind {
    pub fn model(self) -> &'static dyn RewardModel {
        match self {
            RewardKind::Interpretable => &InterpretableReward,
            RewardKind::MosProxy => &MosProxyReward,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            RewardKind::Interpretable => "interpretable",
            RewardKind::MosProxy => "mos_proxy",
        }
    }
}

impl core::str::FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "interpretable" => Ok(Self::Interpretable),
            "mos_proxy" => Ok(Self::MosProxy),
            other => Err(Error::invalid(format!("unknown reward model {other:?}"))),
        }
    }
}

/// `R = score(rl) - score(base)`; both records must come from one model.
pub fn relative_reward(rl: &RewardRecord, base: &RewardRecord) -> Result<f64> {
    if rl.model_id != base.model_id {
        return Err(Error::RewardModelMismatch { rl: rl.model_id.clone(), base: base.model_id.clone() });
    }
    Ok(rl.sentiment - base.sentiment)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn feats(intel: f64, resid: f64, dist: f64) -> AcousticFeatures {
        AcousticFeatures {
            residual_noise_db: resid,
            distortion_index: dist,
            intelligibility_proxy: intel,
            loudness_db: -12.0,
            improvement_db: 0.0,
        }
    }

    #[test]
    fn describes_bands() {
        let good = describe(&feats(0.9, -30.0, 0.02));
        assert!(good.contains("clear and easy to understand"));
        assert!(good.contains("no noticeable background noise"));
        assert!(good.contains("good speech sample"));
        let bad = describe(&feats(0.3, -5.0, 0.5));
        assert!(bad.contains("a lot of background noise"));
        assert!(bad.contains("poor speech sample"));
        assert_eq!(describe(&feats(0.6, -12.0, 0.2)), describe(&feats(0.6, -12.0, 0.2)));
    }

    #[test]
    fn band_edges() {
        assert_eq!(bands(&feats(0.75, -25.0, 0.3)), Bands { clarity: Band::Best, noise: Band::Best, distortion: Band::Middle });
        assert_eq!(bands(&feats(0.45, -10.0, 0.1)), Bands { clarity: Band::Middle, noise: Band::Middle, distortion: Band::Middle });
        assert_eq!(
            bands(&feats(0.4499, -9.99, 0.3001)),
            Bands { clarity: Band::Worst, noise: Band::Worst, distortion: Band::Worst }
        );
    }

    #[test]
    fn sentiment_saturates() {
        let best = describe_bands(&Bands { clarity: Band::Best, noise: Band::Best, distortion: Band::Best });
        let worst = describe_bands(&Bands { clarity: Band::Worst, noise: Band::Worst, distortion: Band::Worst });
        assert_eq!(sentiment_score(&best).unwrap(), 5.0);
        assert_eq!(sentiment_score(&worst).unwrap(), 1.0);
        assert!(sentiment_score("  ").is_err());
    }

    #[test]
    fn longest_match_and_case() {
        assert_eq!(lexicon_sum("CLEAR AND EASY TO UNDERSTAND"), 1.0);
        assert_eq!(lexicon_sum("difficult to understand"), -1.0);
        assert_eq!(lexicon_sum("unclear and easy to understand"), 0.0);
        assert_eq!(lexicon_sum("nothing here"), 0.0);
        assert_eq!(sentiment_score("nothing here").unwrap(), 3.0);
    }

    #[test]
    fn relative_reward_rules() {
        let rec = |s: f64, id: &str| RewardRecord {
            description: String::new(),
            sentiment: s,
            features: feats(0.5, -10.0, 0.1),
            model_id: id.into(),
            prompt: PROMPT.into(),
        };
        let a = rec(4.20, "x");
        let b = rec(2.41, "x");
        assert!((relative_reward(&a, &b).unwrap() - 1.79).abs() < 1e-12);
        assert_eq!(relative_reward(&a, &a).unwrap(), 0.0);
        assert_eq!(relative_reward(&a, &b).unwrap(), -relative_reward(&b, &a).unwrap());
        assert!(matches!(relative_reward(&a, &rec(3.0, "y")), Err(Error::RewardModelMismatch { .. })));
    }

    #[test]
    fn reward_kind_parsing() {
        assert_eq!("mos_proxy".parse::<RewardKind>().unwrap(), RewardKind::MosProxy);
        assert!("dnsmos".parse::<RewardKind>().is_err());
        assert_eq!(RewardKind::Interpretable.model().model_id(), InterpretableReward::ID);
    }
}
