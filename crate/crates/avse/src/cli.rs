//! Argument parsing and command dispatch.

use std::path::PathBuf;

use avse_core::reward::RewardKind;
use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::lock::DirLock;
use crate::pipeline::{self, EvalCheckpoints, Layout};
use crate::wav;

#[derive(Debug, Parser)]
#[command(name = "avse", version, about = "Audio-visual speech enhancement with interpretable RL fine-tuning")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON experiment config; unspecified fields take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `master_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `out_dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Print the resolved config as JSON and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize the scene corpus and its manifest.
    GenScenes,
    /// Supervised SI-SNR pretraining on the training split.
    Pretrain,
    /// PPO fine-tuning of the pretrained model.
    Finetune {
        /// Reward model; defaults to the config's `reward`.
        #[arg(long)]
        reward: Option<RewardKind>,
        /// Starting checkpoint; defaults to the pretraining output.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Score every method row on the held-out split.
    Evaluate {
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long)]
        rl_scalar: Option<PathBuf>,
        #[arg(long)]
        rl_interpretable: Option<PathBuf>,
    },
    /// Objective metrics of one estimate against a reference.
    Score {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        est: PathBuf,
        /// Adds acoustic features relative to this mixture.
        #[arg(long)]
        noisy: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Before/after descriptions of one scene.
    Explain {
        #[arg(long)]
        scene: u64,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
}

pub fn resolve_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn json_line<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("serializable")
}

/// Runs one parsed command and returns what goes to stdout.
pub fn run(cli: Cli) -> Result<String> {
    let cfg = resolve_config(&cli.common)?;
    if cli.common.print_config {
        return Ok(cfg.to_pretty_json());
    }
    let Some(command) = cli.command else {
        return Err(CliError::BadArgs("no subcommand given; see --help".into()));
    };
    let layout = Layout::new(&cfg.out_dir);
    match command {
        Command::GenScenes => {
            let _lock = DirLock::acquire(&layout.root)?;
            let m = pipeline::gen_scenes(&cfg, &layout)?;
            Ok(format!("wrote {} scenes to {}\n", m.entries.len(), layout.manifest().display()))
        }
        Command::Pretrain => {
            let _lock = DirLock::acquire(&layout.root)?;
            let curve = pipeline::pretrain(&cfg, &layout)?;
            let last = curve.epochs.last().map_or(curve.initial_loss, |e| e.mean_loss);
            Ok(format!(
                "pretrained {} steps: loss {:.3} -> {:.3}\n",
                curve.step_losses.len(),
                curve.initial_loss,
                last
            ))
        }
        Command::Finetune { reward, init } => {
            let _lock = DirLock::acquire(&layout.root)?;
            let kind = reward.unwrap_or(cfg.reward);
            let stats = pipeline::finetune(&cfg, &layout, kind, init.as_deref())?;
            Ok(stats.iter().map(|s| json_line(s) + "\n").collect())
        }
        Command::Evaluate { baseline, rl_scalar, rl_interpretable } => {
            let _lock = DirLock::acquire(&layout.root)?;
            let cks = EvalCheckpoints { baseline, rl_scalar, rl_interpretable };
            let (table, _) = pipeline::evaluate(&cfg, &layout, &cks)?;
            Ok(table.to_markdown())
        }
        Command::Score { reference, est, noisy, json } => {
            let r = wav::read(&reference)?;
            let e = wav::read(&est)?;
            let n = noisy.as_deref().map(wav::read).transpose()?;
            let report = pipeline::score(&r, &e, n.as_ref())?;
            if json {
                return Ok(json_line(&report) + "\n");
            }
            let m = &report.metrics;
            let mut out = format!(
                "SI-SNR {:.3} dB | STOI {:.4} | segSNR {:.3} dB | SNR {:.3} dB\n",
                m.si_snr_db, m.stoi, m.seg_snr_db, report.snr_db
            );
            if let Some(f) = &report.features {
                out += &format!(
                    "residual {:.2} dB | distortion {:.4} | improvement {:.2} dB\n",
                    f.residual_noise_db, f.distortion_index, f.improvement_db
                );
            }
            Ok(out)
        }
        Command::Explain { scene, checkpoint, json } => {
            let ex = pipeline::explain(&cfg, &layout, scene, checkpoint.as_deref())?;
            Ok(if json { json_line(&ex) + "\n" } else { ex.render() })
        }
    }
}
