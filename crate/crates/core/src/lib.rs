//! Numerical core for training a mask-based speech enhancer and fine-tuning
//! it with a critic-free PPO loop driven by an interpretable reward.
//!
//! The crate is `no_std` (it needs `alloc`) and performs no IO. File formats,
//! the command line and data-parallel orchestration live in the `avse` crate.
//!
//! Layout:
//!
//! - [`signal`]: waveforms, synthetic scenes, resampling and STFT.
//! - [`metrics`]: SI-SNR, STOI, segmental SNR and reward features.
//! - [`autodiff`]: a reverse-mode tape over dense `f64` arrays.
//! - [`model`]: the encoder / visual frontend / TCN separator / decoder.
//! - [`optim`]: Adam.
//! - [`reward`]: description + lexicon sentiment reward and a scalar baseline.
//! - [`ppo`]: Gaussian mask policy, KL anchor, clipped surrogate, epoch driver.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod autodiff;
mod error;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod ppo;
pub mod reward;
pub mod seed;
pub mod signal;
pub mod stats;
pub mod train;

pub use error::{Error, Result};

/// Guard added wherever a log or a division could see zero.
pub const EPS: f64 = 1e-8;
