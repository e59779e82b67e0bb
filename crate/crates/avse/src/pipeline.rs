//! The six workflows behind the CLI. Every output is a pure function of the
//! experiment config and master seed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use avse_core::metrics::{metric_report, si_snr, stoi, AcousticFeatures, MetricReport};
use avse_core::model::Model;
use avse_core::optim::{AdamConfig, AdamState};
use avse_core::ppo::{base_outcome, finetune_epoch, BaseOutcome, EpisodeInput, EpochStats, PolicyStep, PpoConfig};
use avse_core::reward::{InterpretableReward, RewardContext, RewardKind, RewardModel};
use avse_core::seed::{derive, stage};
use avse_core::signal::{measured_snr_db, Scene, Waveform};
use avse_core::train::train_step;
use avse_core::{metrics, EPS};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, RngState};
use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::manifest::{Manifest, SceneEntry, Split};
use crate::report::{EvalRow, EvalTable, Method, RowMetrics, RowStatus};
use crate::{scenes, wav};

/// File locations under one output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }

    pub fn pretrain_checkpoint(&self) -> PathBuf {
        self.root.join("pretrain").join("checkpoint.json")
    }

    pub fn loss_curve(&self) -> PathBuf {
        self.root.join("pretrain").join("loss_curve.json")
    }

    pub fn finetune_dir(&self, kind: RewardKind) -> PathBuf {
        self.root.join(format!("finetune_{}", kind.as_str()))
    }

    pub fn finetune_checkpoint(&self, kind: RewardKind) -> PathBuf {
        self.finetune_dir(kind).join("checkpoint.json")
    }

    pub fn training_log(&self, kind: RewardKind) -> PathBuf {
        self.finetune_dir(kind).join("training_log.jsonl")
    }

    pub fn epoch_stats(&self, kind: RewardKind) -> PathBuf {
        self.finetune_dir(kind).join("epoch_stats.json")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn eval_csv(&self) -> PathBuf {
        self.eval_dir().join("eval.csv")
    }

    pub fn eval_markdown(&self) -> PathBuf {
        self.eval_dir().join("eval.md")
    }

    pub fn per_scene(&self) -> PathBuf {
        self.eval_dir().join("per_scene.json")
    }

    pub fn enhanced(&self, method: Method, id: u64) -> PathBuf {
        self.eval_dir().join(method.as_str()).join(format!("{id:05}_enhanced.wav"))
    }

    /// Default checkpoint evaluated for each method row.
    pub fn checkpoint_for(&self, method: Method) -> Option<PathBuf> {
        match method {
            Method::Noisy => None,
            Method::Baseline => Some(self.pretrain_checkpoint()),
            Method::RlScalar => Some(self.finetune_checkpoint(RewardKind::MosProxy)),
            Method::RlInterpretable => Some(self.finetune_checkpoint(RewardKind::Interpretable)),
        }
    }
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    fs::write(path, s).map_err(|e| CliError::io(path, e))
}

fn read_manifest(layout: &Layout) -> Result<Manifest> {
    let path = layout.manifest();
    if !path.exists() {
        return Err(CliError::io(&path, std::io::Error::new(std::io::ErrorKind::NotFound, "run gen-scenes first")));
    }
    Manifest::read(&path)
}

/// Writes every scene's WAVs and the manifest.
pub fn gen_scenes(cfg: &ExperimentConfig, layout: &Layout) -> Result<Manifest> {
    mkdir(&layout.root.join("scenes"))?;
    let built: Vec<(SceneEntry, Scene)> =
        (0..cfg.scene_count as u64).into_par_iter().map(|id| scenes::build(cfg, id)).collect::<Result<_>>()?;
    let entries = built
        .par_iter()
        .map(|(entry, scene)| {
            let mut entry = entry.clone();
            entry.clipped_samples = wav::write(&layout.root.join(&entry.clean), &scene.clean)?
                + wav::write(&layout.root.join(&entry.noise), &scene.noise)?
                + wav::write(&layout.root.join(&entry.noisy), &scene.noisy)?;
            Ok(entry)
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest { entries };
    manifest.write(&layout.manifest())?;
    Ok(manifest)
}

pub fn load_split(cfg: &ExperimentConfig, layout: &Layout, manifest: &Manifest, split: Split) -> Result<Vec<(SceneEntry, Scene)>> {
    let entries: Vec<&SceneEntry> = manifest.split(split).collect();
    entries.par_iter().map(|e| Ok(((*e).clone(), scenes::load(&layout.root, e, cfg)?))).collect()
}

pub fn initial_model(cfg: &ExperimentConfig) -> Result<Model> {
    Ok(Model::new(cfg.model, derive(cfg.master_seed, stage::INIT))?)
}

/// Scene order for one pretraining epoch: a seeded permutation.
fn epoch_order(seed: u64, epoch: u64, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    let s = derive(seed, epoch);
    idx.sort_by_key(|&i| derive(s, i as u64));
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub steps: usize,
    pub mean_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossCurve {
    pub initial_loss: f64,
    pub step_losses: Vec<f64>,
    pub epochs: Vec<EpochLoss>,
}

fn mean_loss(model: &Model, scenes: &[(SceneEntry, Scene)]) -> Result<f64> {
    let losses: Vec<f64> = scenes.par_iter().map(|(_, s)| avse_core::train::loss(model, s)).collect::<Result<_, _>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len().max(1) as f64)
}

/// Supervised SI-SNR training. On a non-finite loss the last good
/// parameters are checkpointed before the error is returned.
pub fn pretrain(cfg: &ExperimentConfig, layout: &Layout) -> Result<LossCurve> {
    let manifest = read_manifest(layout)?;
    let train = load_split(cfg, layout, &manifest, Split::Train)?;
    if train.is_empty() {
        return Err(CliError::BadArgs("no training scenes in the manifest".into()));
    }
    mkdir(&layout.root.join("pretrain"))?;
    let mut model = initial_model(cfg)?;
    let mut adam = AdamState::new(model.params());
    let adam_cfg = AdamConfig { lr: cfg.pretrain.lr, ..AdamConfig::default() };
    let seed = derive(cfg.master_seed, stage::PRETRAIN);
    let initial_loss = mean_loss(&model, &train)?;

    let per_epoch = train.len().div_ceil(cfg.pretrain.batch);
    let mut order = Vec::new();
    let mut step_losses = Vec::with_capacity(cfg.pretrain.steps);
    let mut epochs = Vec::new();
    for step in 0..cfg.pretrain.steps {
        let epoch = step / per_epoch;
        if step % per_epoch == 0 {
            order = epoch_order(seed, epoch as u64, train.len());
        }
        let start = (step % per_epoch) * cfg.pretrain.batch;
        let batch: Vec<&Scene> = order[start..(start + cfg.pretrain.batch).min(order.len())].iter().map(|&i| &train[i].1).collect();
        match train_step(&mut model, &mut adam, &batch, &adam_cfg) {
            Ok(l) => step_losses.push(l),
            Err(e @ avse_core::Error::NonFinite(_)) => {
                let ck = Checkpoint::new("pretrain", step as u64, &model, &adam, RngState { seed, counter: step as u64 });
                ck.save(&layout.pretrain_checkpoint())?;
                return Err(CliError::Numerical(format!(
                    "pretraining aborted at step {step} ({e}); last good checkpoint written to {}",
                    layout.pretrain_checkpoint().display()
                )));
            }
            Err(e) => return Err(e.into()),
        }
        if (step + 1) % per_epoch == 0 || step + 1 == cfg.pretrain.steps {
            let first = epoch * per_epoch;
            let slice = &step_losses[first..];
            epochs.push(EpochLoss { epoch, steps: slice.len(), mean_loss: slice.iter().sum::<f64>() / slice.len() as f64 });
        }
    }
    let steps = cfg.pretrain.steps as u64;
    Checkpoint::new("pretrain", steps, &model, &adam, RngState { seed, counter: steps }).save(&layout.pretrain_checkpoint())?;
    let curve = LossCurve { initial_loss, step_losses, epochs };
    write_json(&layout.loss_curve(), &curve)?;
    Ok(curve)
}

pub fn load_model(cfg: &ExperimentConfig, path: &Path) -> Result<Model> {
    Ok(Checkpoint::load(path)?.restore(&cfg.model)?.0)
}

/// PPO fine-tuning of the pretrained model under one reward model.
pub fn finetune(cfg: &ExperimentConfig, layout: &Layout, kind: RewardKind, init: Option<&Path>) -> Result<Vec<EpochStats>> {
    let init = init.map(Path::to_path_buf).unwrap_or_else(|| layout.pretrain_checkpoint());
    let base = load_model(cfg, &init)?;
    let manifest = read_manifest(layout)?;
    let train = load_split(cfg, layout, &manifest, Split::Train)?;
    let reward = kind.model();
    let outcomes: Vec<BaseOutcome> =
        train.par_iter().map(|(_, s)| base_outcome(&base, s, reward)).collect::<Result<_, _>>()?;
    let inputs: Vec<EpisodeInput<'_>> =
        train.iter().zip(&outcomes).map(|((e, s), b)| EpisodeInput { id: e.id, scene: s, base: b }).collect();

    let dir = layout.finetune_dir(kind);
    mkdir(&dir)?;
    let ppo = PpoConfig { seed: derive(derive(cfg.master_seed, stage::FINETUNE), cfg.ppo.seed), ..cfg.ppo };
    let mut policy = base.clone();
    let mut adam = AdamState::new(policy.params());
    let log_path = layout.training_log(kind);
    let file = fs::File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let mut io_err = None;
    let mut stats = Vec::with_capacity(ppo.epochs);
    let stage_name = format!("finetune:{}", kind.as_str());

    for epoch in 0..ppo.epochs {
        let prev = policy.clone();
        let mut on_step = |s: &PolicyStep| {
            if io_err.is_none() {
                let line = serde_json::to_string(s).expect("step serializes");
                if let Err(e) = writeln!(log, "{line}") {
                    io_err = Some(e);
                }
            }
        };
        let result = finetune_epoch(&mut policy, &mut adam, &prev, &inputs, reward, &ppo, epoch, &mut on_step);
        if let Some(e) = io_err.take() {
            return Err(CliError::io(&log_path, e));
        }
        let st = match result {
            Ok(st) => st,
            Err(e @ avse_core::Error::NonFinite(_)) => {
                let _ = log.flush();
                let ck = Checkpoint::new(&stage_name, epoch as u64, &prev, &adam, RngState { seed: ppo.seed, counter: epoch as u64 });
                ck.save(&dir.join("last_good.json"))?;
                return Err(CliError::Numerical(format!("fine-tuning aborted in epoch {epoch}: {e}")));
            }
            Err(e) => return Err(e.into()),
        };
        stats.push(st);
        let done = (epoch + 1) as u64;
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 && epoch + 1 < ppo.epochs {
            Checkpoint::new(&stage_name, done, &policy, &adam, RngState { seed: ppo.seed, counter: done })
                .save(&dir.join(format!("checkpoint_epoch{done:03}.json")))?;
        }
    }
    log.flush().map_err(|e| CliError::io(&log_path, e))?;
    let done = ppo.epochs as u64;
    Checkpoint::new(&stage_name, done, &policy, &adam, RngState { seed: ppo.seed, counter: done })
        .save(&layout.finetune_checkpoint(kind))?;
    write_json(&layout.epoch_stats(kind), &stats)?;
    Ok(stats)
}

/// Per-scene evaluation record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneScore {
    pub method: Method,
    pub scene_id: u64,
    pub si_snr_db: f64,
    pub stoi: f64,
    pub seg_snr_db: f64,
    pub sentiment: f64,
    pub description: String,
}

fn score_scene(method: Method, id: u64, scene: &Scene, est: &Waveform) -> Result<SceneScore> {
    let report = metric_report(&scene.clean, est)?;
    let ctx = RewardContext { clean: &scene.clean, noisy: &scene.noisy };
    let rec = InterpretableReward.score(est, &ctx)?;
    Ok(SceneScore {
        method,
        scene_id: id,
        si_snr_db: report.si_snr_db,
        stoi: report.stoi,
        seg_snr_db: report.seg_snr_db,
        sentiment: rec.sentiment,
        description: rec.description,
    })
}

/// Checkpoint overrides for [`evaluate`]; `None` uses the layout default.
#[derive(Debug, Clone, Default)]
pub struct EvalCheckpoints {
    pub baseline: Option<PathBuf>,
    pub rl_scalar: Option<PathBuf>,
    pub rl_interpretable: Option<PathBuf>,
}

impl EvalCheckpoints {
    fn path(&self, layout: &Layout, m: Method) -> Option<PathBuf> {
        let o = match m {
            Method::Noisy => return None,
            Method::Baseline => &self.baseline,
            Method::RlScalar => &self.rl_scalar,
            Method::RlInterpretable => &self.rl_interpretable,
        };
        o.clone().or_else(|| layout.checkpoint_for(m))
    }
}

/// Scores all four rows on the held-out scenes. Metrics are computed on the
/// enhanced audio exactly as written to disk.
pub fn evaluate(cfg: &ExperimentConfig, layout: &Layout, cks: &EvalCheckpoints) -> Result<(EvalTable, Vec<SceneScore>)> {
    let manifest = read_manifest(layout)?;
    let held = load_split(cfg, layout, &manifest, Split::HeldOut)?;
    if held.is_empty() {
        return Err(CliError::BadArgs("no held-out scenes in the manifest".into()));
    }
    mkdir(&layout.eval_dir())?;
    let mut rows = Vec::new();
    let mut per_scene = Vec::new();
    for method in Method::ALL {
        let model = match cks.path(layout, method) {
            None => None,
            Some(p) if !p.exists() => {
                rows.push(EvalRow { method, status: RowStatus::Absent { reason: format!("checkpoint not found: {}", p.display()) } });
                continue;
            }
            Some(p) => Some(load_model(cfg, &p)?),
        };
        if model.is_some() {
            mkdir(&layout.eval_dir().join(method.as_str()))?;
        }
        let scores: Vec<SceneScore> = held
            .par_iter()
            .map(|(e, s)| {
                let est = match &model {
                    None => s.noisy.clone(),
                    Some(m) => {
                        let out = wav::quantize(&m.forward(&s.noisy, &s.visual)?.enhanced);
                        wav::write(&layout.enhanced(method, e.id), &out)?;
                        out
                    }
                };
                score_scene(method, e.id, s, &est)
            })
            .collect::<Result<_>>()?;
        let n = scores.len() as f64;
        let mean = |f: fn(&SceneScore) -> f64| scores.iter().map(f).sum::<f64>() / n;
        rows.push(EvalRow {
            method,
            status: RowStatus::Present(RowMetrics {
                scenes: scores.len(),
                mean_si_snr_db: mean(|s| s.si_snr_db),
                mean_stoi: mean(|s| s.stoi),
                mean_sentiment: mean(|s| s.sentiment),
                mean_seg_snr_db: mean(|s| s.seg_snr_db),
            }),
        });
        per_scene.extend(scores);
    }
    let table = EvalTable { rows };
    table.write(&layout.eval_csv(), &layout.eval_markdown())?;
    write_json(&layout.per_scene(), &per_scene)?;
    Ok((table, per_scene))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    #[serde(flatten)]
    pub metrics: MetricReport,
    /// Plain SNR of `est` against `ref`.
    pub snr_db: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<AcousticFeatures>,
}

pub fn score(reference: &Waveform, est: &Waveform, noisy: Option<&Waveform>) -> Result<ScoreReport> {
    let metrics = metric_report(reference, est)?;
    let features = noisy.map(|n| metrics::acoustic_features(reference, est, n)).transpose()?;
    Ok(ScoreReport { metrics, snr_db: measured_snr_db(reference, est), features })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub description: String,
    pub sentiment: f64,
    pub si_snr_db: f64,
    pub stoi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub scene_id: u64,
    pub noisy: Assessment,
    pub enhanced: Assessment,
    pub delta_reward: f64,
    pub delta_si_snr_db: f64,
    pub delta_stoi: f64,
}

fn assess(scene: &Scene, est: &Waveform) -> Result<Assessment> {
    let ctx = RewardContext { clean: &scene.clean, noisy: &scene.noisy };
    let rec = InterpretableReward.score(est, &ctx)?;
    Ok(Assessment {
        description: rec.description,
        sentiment: rec.sentiment,
        si_snr_db: si_snr(&scene.clean, est, EPS)?,
        stoi: stoi(&scene.clean, est)?,
    })
}

/// Before/after descriptions of one scene with the reward, SI-SNR and STOI deltas.
pub fn explain_waveforms(scene_id: u64, scene: &Scene, enhanced: &Waveform) -> Result<Explanation> {
    let noisy = assess(scene, &scene.noisy)?;
    let enhanced = assess(scene, enhanced)?;
    Ok(Explanation {
        scene_id,
        delta_reward: enhanced.sentiment - noisy.sentiment,
        delta_si_snr_db: enhanced.si_snr_db - noisy.si_snr_db,
        delta_stoi: enhanced.stoi - noisy.stoi,
        noisy,
        enhanced,
    })
}

impl Explanation {
    pub fn render(&self) -> String {
        format!(
            "scene {}\n\
             noisy:    {} (score {:.2}, SI-SNR {:.2} dB, STOI {:.3})\n\
             enhanced: {} (score {:.2}, SI-SNR {:.2} dB, STOI {:.3})\n\
             Δreward {:+.2} | ΔSI-SNR {:+.2} dB | ΔSTOI {:+.3}\n",
            self.scene_id,
            self.noisy.description,
            self.noisy.sentiment,
            self.noisy.si_snr_db,
            self.noisy.stoi,
            self.enhanced.description,
            self.enhanced.sentiment,
            self.enhanced.si_snr_db,
            self.enhanced.stoi,
            self.delta_reward,
            self.delta_si_snr_db,
            self.delta_stoi,
        )
    }
}

/// Explains one scene with the given checkpoint, defaulting to the
/// interpretable fine-tuned model and falling back to the baseline.
pub fn explain(cfg: &ExperimentConfig, layout: &Layout, scene_id: u64, checkpoint: Option<&Path>) -> Result<Explanation> {
    let manifest = read_manifest(layout)?;
    let entry = manifest.get(scene_id).ok_or_else(|| CliError::BadArgs(format!("scene {scene_id} is not in the manifest")))?;
    let scene = scenes::load(&layout.root, entry, cfg)?;
    let path = match checkpoint {
        Some(p) => p.to_path_buf(),
        None => {
            let rl = layout.finetune_checkpoint(RewardKind::Interpretable);
            if rl.exists() {
                rl
            } else {
                layout.pretrain_checkpoint()
            }
        }
    };
    let model = load_model(cfg, &path)?;
    let enhanced = wav::quantize(&model.forward(&scene.noisy, &scene.visual)?.enhanced);
    explain_waveforms(scene_id, &scene, &enhanced)
}
