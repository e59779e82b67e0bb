//! Critic-free single-step PPO over Gaussian mask policies.
//!
//! One scene is one episode: the policy emits a mask mean, a Gaussian mask is
//! sampled around it, and the frozen reward model scores the decoded audio
//! relative to the frozen base policy. The relative reward minus the KL
//! penalty stands in for the advantage.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::model::{si_snr_loss, Model};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::reward::{relative_reward, RewardContext, RewardModel, RewardRecord};
use crate::seed::derive;
use crate::signal::{Scene, Waveform};
use crate::{Error, Result};

/// How the importance ratio is formed from the two log-densities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RatioMode {
    /// `exp(logp_new - logp_old)` over the whole mask.
    Joint,
    /// `exp((logp_new - logp_old) / d)`: geometric mean of the per-element ratios.
    #[default]
    PerElement,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    /// Action noise standard deviation.
    pub sigma: f64,
    /// Clip range.
    pub epsilon: f64,
    /// KL weight.
    pub beta: f64,
    /// SI-SNR loss weight.
    pub gamma: f64,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub ratio: RatioMode,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            sigma: 0.05,
            epsilon: 0.1,
            beta: 1e-4,
            gamma: 1.0,
            lr: 1e-3,
            epochs: 20,
            seed: 0,
            ratio: RatioMode::PerElement,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |c: bool, msg: &str| if c { Ok(()) } else { Err(Error::invalid(msg)) };
        ok(self.sigma > 0.0 && self.sigma.is_finite(), "ppo.sigma must be positive")?;
        ok(self.epsilon > 0.0 && self.epsilon < 1.0, "ppo.epsilon must lie in (0, 1)")?;
        ok(self.beta >= 0.0 && self.beta.is_finite(), "ppo.beta must be non-negative")?;
        ok(self.gamma >= 0.0 && self.gamma.is_finite(), "ppo.gamma must be non-negative")?;
        ok(self.lr > 0.0 && self.lr.is_finite(), "ppo.lr must be positive")
    }
}

/// `mu + sigma * n` with i.i.d. standard normal `n`. Not clamped.
pub fn sample_action(mu: &Tensor, sigma: f64, seed: u64) -> Result<Tensor> {
    if !(sigma >= 0.0) {
        return Err(Error::invalid("sigma must be non-negative"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = mu
        .data()
        .iter()
        .map(|m| {
            let n: f64 = StandardNormal.sample(&mut rng);
            m + sigma * n
        })
        .collect();
    Tensor::new(mu.shape().to_vec(), data)
}

/// Diagonal Gaussian log-density of `action`, summed over elements.
pub fn log_prob(tape: &mut Tape, action: &Tensor, mu: Var, sigma: f64) -> Result<Var> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("log density needs sigma > 0"));
    }
    let d = action.len() as f64;
    let a = tape.constant(action.clone());
    let diff = tape.sub(a, mu)?;
    let ss = tape.sum_sq(diff);
    let quad = tape.scale(ss, -0.5 / (sigma * sigma));
    let norm = d * libm::log(sigma * libm::sqrt(2.0 * core::f64::consts::PI));
    Ok(tape.add_scalar(quad, -norm))
}

/// `KL(N(mu_rl, s^2 I) || N(mu_base, s^2 I)) = |mu_rl - mu_base|^2 / (2 s^2)`.
pub fn kl_policies(tape: &mut Tape, mu_rl: Var, mu_base: &Tensor, sigma: f64) -> Result<Var> {
    if !(sigma > 0.0) {
        return Err(Error::invalid("KL needs sigma > 0"));
    }
    let b = tape.constant(mu_base.clone());
    let diff = tape.sub(mu_rl, b)?;
    let ss = tape.sum_sq(diff);
    Ok(tape.scale(ss, 0.5 / (sigma * sigma)))
}

/// `R - beta * kl`, with `R` a constant.
pub fn objective_l(tape: &mut Tape, reward: f64, kl: Var, beta: f64) -> Var {
    let pen = tape.scale(kl, -beta);
    tape.add_scalar(pen, reward)
}

/// `-min(ratio * L, clip(ratio, 1-eps, 1+eps) * L)` with `L` gradient-stopped.
pub fn ppo_clip_loss(tape: &mut Tape, ratio: Var, objective: Var, epsilon: f64) -> Result<Var> {
    let l_bar = tape.scalar_value(objective);
    let raw = tape.scale(ratio, l_bar);
    let clipped = tape.clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
    let clipped = tape.scale(clipped, l_bar);
    let m = tape.minimum(raw, clipped)?;
    Ok(tape.neg(m))
}

/// `clip + gamma * si_snr`.
pub fn total_loss(tape: &mut Tape, clip: Var, si_snr: Var, gamma: f64) -> Result<Var> {
    let s = tape.scale(si_snr, gamma);
    tape.add(clip, s)
}

/// Importance ratio on the tape against a fixed old log-density.
pub fn ratio(tape: &mut Tape, logp_new: Var, logp_old: f64, elements: usize, mode: RatioMode) -> Var {
    let diff = tape.add_scalar(logp_new, -logp_old);
    let diff = match mode {
        RatioMode::Joint => diff,
        RatioMode::PerElement => tape.scale(diff, 1.0 / elements.max(1) as f64),
    };
    tape.exp(diff)
}

/// Log-density value computed through the exact same ops as [`log_prob`].
pub fn log_prob_value(action: &Tensor, mu: &Tensor, sigma: f64) -> Result<f64> {
    let mut tape = Tape::new();
    let m = tape.constant(mu.clone());
    let lp = log_prob(&mut tape, action, m, sigma)?;
    Ok(tape.scalar_value(lp))
}

/// The frozen base policy's deterministic outcome on one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseOutcome {
    pub mask_mean: Tensor,
    pub enhanced: Waveform,
    pub record: RewardRecord,
}

pub fn base_outcome(base: &Model, scene: &Scene, reward: &dyn RewardModel) -> Result<BaseOutcome> {
    let trace = base.forward(&scene.noisy, &scene.visual)?;
    let ctx = RewardContext { clean: &scene.clean, noisy: &scene.noisy };
    let record = reward.score(&trace.enhanced, &ctx)?;
    Ok(BaseOutcome { mask_mean: trace.mask_mean, enhanced: trace.enhanced, record })
}

/// One scene update, as logged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyStep {
    pub epoch: usize,
    pub scene_id: u64,
    #[serde(rename = "R")]
    pub reward: f64,
    pub kl: f64,
    pub kl_per_element: f64,
    pub ratio: f64,
    pub clip_active: bool,
    pub sentiment_rl: f64,
    pub sentiment_base: f64,
    pub si_snr_rl: f64,
    pub description_rl: String,
    pub logp_new: f64,
    pub logp_old: f64,
    pub objective_l: f64,
    pub clip_loss: f64,
    pub total_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub steps: usize,
    pub mean_reward: f64,
    pub mean_kl: f64,
    pub mean_sentiment: f64,
    pub mean_si_snr: f64,
    pub mean_ratio: f64,
    pub clip_fraction: f64,
}

/// A training scene together with its id and cached base outcome.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeInput<'a> {
    pub id: u64,
    pub scene: &'a Scene,
    pub base: &'a BaseOutcome,
}

/// Seed of the action noise for one (epoch, scene) pair.
pub fn action_seed(cfg: &PpoConfig, epoch: usize, scene_id: u64) -> u64 {
    derive(derive(cfg.seed, epoch as u64), scene_id)
}

/// Runs one PPO update for one scene.
pub fn ppo_step(
    policy: &mut Model,
    adam: &mut AdamState,
    prev: &Model,
    input: &EpisodeInput<'_>,
    reward: &dyn RewardModel,
    cfg: &PpoConfig,
    epoch: usize,
) -> Result<PolicyStep> {
    if input.base.record.model_id != reward.model_id() {
        return Err(Error::RewardModelMismatch {
            rl: reward.model_id().into(),
            base: input.base.record.model_id.clone(),
        });
    }
    let scene = input.scene;
    let mut tape = Tape::new();
    let bound = policy.bind(&mut tape, true);
    let trace = policy.forward_on(&mut tape, &bound, &scene.noisy, &scene.visual)?;
    let mu = tape.value(trace.mask_mean).clone();
    let elements = mu.len();

    let action = sample_action(&mu, cfg.sigma, action_seed(cfg, epoch, input.id))?;
    let enhanced_rl = policy.decode_mask(tape.value(trace.latent), &action, scene.noisy.len(), scene.noisy.sample_rate())?;
    let ctx = RewardContext { clean: &scene.clean, noisy: &scene.noisy };
    let record = reward.score(&enhanced_rl, &ctx)?;
    let r = relative_reward(&record, &input.base.record)?;

    let mu_old = prev.forward(&scene.noisy, &scene.visual)?.mask_mean;
    let logp_old = log_prob_value(&action, &mu_old, cfg.sigma)?;
    let logp_new = log_prob(&mut tape, &action, trace.mask_mean, cfg.sigma)?;
    let ratio_v = ratio(&mut tape, logp_new, logp_old, elements, cfg.ratio);

    let kl = kl_policies(&mut tape, trace.mask_mean, &input.base.mask_mean, cfg.sigma)?;
    let obj = objective_l(&mut tape, r, kl, cfg.beta);
    let clip = ppo_clip_loss(&mut tape, ratio_v, obj, cfg.epsilon)?;
    let si = si_snr_loss(&mut tape, scene.clean.samples(), trace.enhanced)?;
    let total = total_loss(&mut tape, clip, si, cfg.gamma)?;
    let penalty = tape.scale(kl, cfg.beta);
    let step_loss = tape.add(total, penalty)?;

    let ratio_f = tape.scalar_value(ratio_v);
    let kl_f = tape.scalar_value(kl);
    let loss_f = tape.scalar_value(step_loss);
    if !loss_f.is_finite() {
        return Err(Error::NonFinite(format!(
            "epoch {epoch} scene {}: loss={loss_f} ratio={ratio_f} logp_new={} logp_old={logp_old} R={r} kl={kl_f}",
            input.id,
            tape.scalar_value(logp_new),
        )));
    }
    tape.backward(step_loss)?;
    let grads = policy.gradients(&tape, &bound);
    if grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(format!("epoch {epoch} scene {}: non-finite gradient", input.id)));
    }
    let adam_cfg = AdamConfig { lr: cfg.lr, ..AdamConfig::default() };
    adam_step(policy.params_mut(), &grads, adam, &adam_cfg)?;

    Ok(PolicyStep {
        epoch,
        scene_id: input.id,
        reward: r,
        kl: kl_f,
        kl_per_element: kl_f / elements as f64,
        ratio: ratio_f,
        clip_active: (ratio_f - 1.0).abs() > cfg.epsilon,
        sentiment_rl: record.sentiment,
        sentiment_base: input.base.record.sentiment,
        si_snr_rl: -tape.scalar_value(si),
        description_rl: record.description,
        logp_new: tape.scalar_value(logp_new),
        logp_old,
        objective_l: tape.scalar_value(obj),
        clip_loss: tape.scalar_value(clip),
        total_loss: loss_f,
    })
}

/// One pass over `inputs`, one optimizer step per scene. `prev` is the
/// snapshot taken at the start of the epoch.
pub fn finetune_epoch(
    policy: &mut Model,
    adam: &mut AdamState,
    prev: &Model,
    inputs: &[EpisodeInput<'_>],
    reward: &dyn RewardModel,
    cfg: &PpoConfig,
    epoch: usize,
    on_step: &mut dyn FnMut(&PolicyStep),
) -> Result<EpochStats> {
    cfg.validate()?;
    let mut steps = Vec::with_capacity(inputs.len());
    for input in inputs {
        let step = ppo_step(policy, adam, prev, input, reward, cfg, epoch)?;
        on_step(&step);
        steps.push((step.reward, step.kl, step.sentiment_rl, step.si_snr_rl, step.ratio, step.clip_active));
    }
    let n = steps.len().max(1) as f64;
    let mean = |f: fn(&(f64, f64, f64, f64, f64, bool)) -> f64| steps.iter().map(f).sum::<f64>() / n;
    Ok(EpochStats {
        epoch,
        steps: steps.len(),
        mean_reward: mean(|s| s.0),
        mean_kl: mean(|s| s.1),
        mean_sentiment: mean(|s| s.2),
        mean_si_snr: mean(|s| s.3),
        mean_ratio: mean(|s| s.4),
        clip_fraction: mean(|s| if s.5 { 1.0 } else { 0.0 }),
    })
}
