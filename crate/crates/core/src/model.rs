//! Mask-based audio-visual enhancer.
//!
//! `encoder -> (fusion with visual projection) -> TCN -> sigmoid mask -> decoder`.
//! Every forward pass, trained or not, runs through the same [`Tape`] code
//! path; inference simply binds parameters as constants.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Conv1dSpec, Tape, Tensor, Var};
use crate::signal::{VisualStream, Waveform};
use crate::{Error, Result, EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Latent channels.
    pub n: usize,
    /// Encoder window in samples.
    pub kernel: usize,
    /// Encoder hop in samples.
    pub stride: usize,
    pub tcn_blocks: usize,
    pub tcn_channels: usize,
    /// Visual feature dimension.
    pub d_v: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { n: 64, kernel: 16, stride: 8, tcn_blocks: 3, tcn_channels: 64, d_v: 4 }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("n", self.n),
            ("kernel", self.kernel),
            ("stride", self.stride),
            ("tcn_blocks", self.tcn_blocks),
            ("tcn_channels", self.tcn_channels),
            ("d_v", self.d_v),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::invalid(format!("model.{name} must be positive")));
            }
        }
        if self.stride > self.kernel {
            return Err(Error::invalid("model.stride must not exceed model.kernel"));
        }
        Ok(())
    }

    /// Latent frames for an input of `len` samples.
    pub fn frames(&self, len: usize) -> Result<usize> {
        if len < self.kernel {
            return Err(Error::invalid(format!("input of {len} samples is shorter than the {}-sample kernel", self.kernel)));
        }
        Ok((len - self.kernel) / self.stride + 1)
    }

    /// Names and shapes of every parameter, in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let (n, c, k, dv) = (self.n, self.tcn_channels, self.kernel, self.d_v);
        let mut out: Vec<(String, Vec<usize>)> = vec![
            ("encoder.weight".into(), vec![n, 1, k]),
            ("encoder.bias".into(), vec![n]),
            ("visual.depthwise.weight".into(), vec![dv, 1, 3]),
            ("visual.pointwise.weight".into(), vec![c, dv, 1]),
            ("visual.pointwise.bias".into(), vec![c]),
            ("fusion.weight".into(), vec![c, n + c, 1]),
            ("fusion.bias".into(), vec![c]),
        ];
        for b in 0..self.tcn_blocks {
            out.push((format!("tcn.{b}.in.weight"), vec![c, c, 1]));
            out.push((format!("tcn.{b}.in.bias"), vec![c]));
            out.push((format!("tcn.{b}.prelu1"), vec![]));
            out.push((format!("tcn.{b}.depthwise.weight"), vec![c, 1, 3]));
            out.push((format!("tcn.{b}.depthwise.bias"), vec![c]));
            out.push((format!("tcn.{b}.prelu2"), vec![]));
            out.push((format!("tcn.{b}.out.weight"), vec![c, c, 1]));
            out.push((format!("tcn.{b}.out.bias"), vec![c]));
        }
        out.push(("mask.weight".into(), vec![n, c, 1]));
        out.push(("mask.bias".into(), vec![n]));
        out.push(("decoder.weight".into(), vec![n, 1, k]));
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

const ENC_W: usize = 0;
const ENC_B: usize = 1;
const VIS_DW: usize = 2;
const VIS_PW: usize = 3;
const VIS_PB: usize = 4;
const FUSE_W: usize = 5;
const FUSE_B: usize = 6;
const TCN0: usize = 7;
const PER_BLOCK: usize = 8;

const PRELU_INIT: f64 = 0.25;

/// The enhancer parameters plus their configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    params: Vec<Tensor>,
}

/// Parameters registered on a tape, indexed like [`ModelConfig::layout`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct TapeTrace {
    pub latent: Var,
    pub vproj: Var,
    pub mask_mean: Var,
    pub enhanced: Var,
}

/// Detached result of [`Model::forward`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub latent: Tensor,
    pub vproj: Tensor,
    pub mask_mean: Tensor,
    pub enhanced: Waveform,
}

impl Model {
    /// Centered uniform init scaled by `1/sqrt(fan_in)`; PReLU slopes start at 0.25.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layout = config.layout();
        let mut params = Vec::with_capacity(layout.len());
        let mut fan_in = 1usize;
        for (name, shp) in &layout {
            let len: usize = shp.iter().product();
            let data = if name.ends_with("prelu1") || name.ends_with("prelu2") {
                vec![PRELU_INIT; 1]
            } else {
                if name.ends_with("weight") {
                    fan_in = if name == "decoder.weight" { shp[0] * shp[2] } else { shp[1] * shp[2] };
                }
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                (0..len).map(|_| rng.random_range(-bound..bound)).collect()
            };
            params.push(Tensor::new(shp.clone(), data)?);
        }
        Ok(Self { config, params })
    }

    /// Rebuilds a model from stored tensors, checking every shape.
    pub fn from_params(config: ModelConfig, params: Vec<Tensor>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != params.len() {
            return Err(Error::shape(format!("expected {} parameter tensors, got {}", layout.len(), params.len())));
        }
        for ((name, shp), p) in layout.iter().zip(&params) {
            if p.shape() != shp.as_slice() {
                return Err(Error::shape(format!("{name}: expected shape {shp:?}, got {:?}", p.shape())));
            }
            if p.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{name} holds non-finite values")));
            }
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_names(&self) -> Vec<String> {
        self.config.layout().into_iter().map(|(n, _)| n).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Registers parameters as trainable leaves, or as constants when `trainable` is false.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|p| if trainable { tape.leaf(p.clone()) } else { tape.constant(p.clone()) })
            .collect();
        Bound { vars }
    }

    /// Collects the gradient of every bound parameter after `tape.backward`.
    pub fn gradients(&self, tape: &Tape, bound: &Bound) -> Vec<Tensor> {
        bound.vars.iter().map(|v| tape.grad(*v)).collect()
    }

    /// `ReLU(conv(x))`, shape `(N, K)`.
    pub fn encode(&self, tape: &mut Tape, p: &Bound, x: &[f64]) -> Result<Var> {
        self.config.frames(x.len())?;
        let xv = tape.constant(Tensor::from_rows(1, x.len(), x.to_vec())?);
        let spec = Conv1dSpec { stride: self.config.stride, ..Conv1dSpec::default() };
        let y = tape.conv1d(xv, p.vars[ENC_W], Some(p.vars[ENC_B]), spec)?;
        Ok(tape.relu(y))
    }

    /// Depthwise temporal conv, pointwise projection, then interpolation to `frames`.
    pub fn visual_frontend(&self, tape: &mut Tape, p: &Bound, v: &VisualStream, frames: usize) -> Result<Var> {
        let feats = &v.features;
        if feats.rows() != self.config.d_v {
            return Err(Error::invalid(format!("visual stream has {} features, model expects {}", feats.rows(), self.config.d_v)));
        }
        if feats.cols() < 2 {
            return Err(Error::invalid("visual stream needs at least 2 frames"));
        }
        let vin = tape.constant(Tensor::from_rows(feats.rows(), feats.cols(), feats.as_slice().to_vec())?);
        let dw = Conv1dSpec { padding: 1, groups: self.config.d_v, ..Conv1dSpec::default() };
        let h = tape.conv1d(vin, p.vars[VIS_DW], None, dw)?;
        let h = tape.conv1d(h, p.vars[VIS_PW], Some(p.vars[VIS_PB]), Conv1dSpec::default())?;
        tape.interpolate(h, frames)
    }

    /// Fusion and TCN blocks; returns the sigmoid mask mean, shape `(N, K)`.
    pub fn separate(&self, tape: &mut Tape, p: &Bound, latent: Var, vproj: Var) -> Result<Var> {
        let (lk, vk) = (tape.value(latent).shape().to_vec(), tape.value(vproj).shape().to_vec());
        if lk.len() != 2 || vk.len() != 2 || lk[1] != vk[1] {
            return Err(Error::invalid(format!("latent {lk:?} and visual projection {vk:?} disagree on frames")));
        }
        let pw = Conv1dSpec::default();
        let cat = tape.concat_rows(latent, vproj)?;
        let mut h = tape.conv1d(cat, p.vars[FUSE_W], Some(p.vars[FUSE_B]), pw)?;
        let c = self.config.tcn_channels;
        for b in 0..self.config.tcn_blocks {
            let base = TCN0 + b * PER_BLOCK;
            let v = &p.vars[base..base + PER_BLOCK];
            let dilation = 1usize << b;
            let mut y = tape.conv1d(h, v[0], Some(v[1]), pw)?;
            y = tape.prelu(y, v[2])?;
            let dw = Conv1dSpec { dilation, padding: dilation, groups: c, ..Conv1dSpec::default() };
            y = tape.conv1d(y, v[3], Some(v[4]), dw)?;
            y = tape.prelu(y, v[5])?;
            y = tape.conv1d(y, v[6], Some(v[7]), pw)?;
            h = tape.add(h, y)?;
        }
        let mw = TCN0 + self.config.tcn_blocks * PER_BLOCK;
        let m = tape.conv1d(h, p.vars[mw], Some(p.vars[mw + 1]), pw)?;
        Ok(tape.sigmoid(m))
    }

    /// Transposed conv of `latent * mask`, trimmed or zero-padded to `out_len`; shape `(1, out_len)`.
    pub fn decode(&self, tape: &mut Tape, p: &Bound, latent: Var, mask: Var, out_len: usize) -> Result<Var> {
        let masked = tape.mul(latent, mask).map_err(|_| Error::invalid("latent and mask shapes differ"))?;
        let dec = *p.vars.last().expect("decoder weight");
        let y = tape.conv_transpose1d(masked, dec, self.config.stride)?;
        tape.resize(y, out_len)
    }

    /// Full pass on a tape.
    pub fn forward_on(&self, tape: &mut Tape, p: &Bound, x: &Waveform, v: &VisualStream) -> Result<TapeTrace> {
        let latent = self.encode(tape, p, x.samples())?;
        let frames = tape.value(latent).dim(1);
        let vproj = self.visual_frontend(tape, p, v, frames)?;
        let mask_mean = self.separate(tape, p, latent, vproj)?;
        let enhanced = self.decode(tape, p, latent, mask_mean, x.len())?;
        Ok(TapeTrace { latent, vproj, mask_mean, enhanced })
    }

    /// Gradient-free forward pass.
    pub fn forward(&self, x: &Waveform, v: &VisualStream) -> Result<ForwardTrace> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let t = self.forward_on(&mut tape, &p, x, v)?;
        Ok(ForwardTrace {
            latent: tape.value(t.latent).clone(),
            vproj: tape.value(t.vproj).clone(),
            mask_mean: tape.value(t.mask_mean).clone(),
            enhanced: Waveform::from_parts(tape.value(t.enhanced).data().to_vec(), x.sample_rate()),
        })
    }

    /// Decodes an arbitrary mask against a fixed latent.
    pub fn decode_mask(&self, latent: &Tensor, mask: &Tensor, out_len: usize, sample_rate: u32) -> Result<Waveform> {
        let mut tape = Tape::new();
        let p = self.bind(&mut tape, false);
        let l = tape.constant(latent.clone());
        let m = tape.constant(mask.clone());
        let y = self.decode(&mut tape, &p, l, m, out_len)?;
        Waveform::new(tape.value(y).data().to_vec(), sample_rate)
    }
}

/// Negative SI-SNR of `y_hat` against `target`, matching [`crate::metrics::si_snr`].
pub fn si_snr_loss(tape: &mut Tape, target: &[f64], y_hat: Var) -> Result<Var> {
    let shp = tape.value(y_hat).shape().to_vec();
    if tape.value(y_hat).len() != target.len() {
        return Err(Error::invalid(format!("target has {} samples, estimate {}", target.len(), tape.value(y_hat).len())));
    }
    let rr: f64 = target.iter().map(|v| v * v).sum();
    if rr == 0.0 {
        return Err(Error::DegenerateSignal("target is all zeros".into()));
    }
    let r = tape.constant(Tensor::new(shp, target.to_vec())?);
    let ee = tape.sum_sq(y_hat);
    if tape.scalar_value(ee) == 0.0 {
        return Err(Error::DegenerateSignal("estimate is all zeros".into()));
    }
    let inv = tape.powf(ee, -0.5);
    let gain = tape.scale(inv, libm::sqrt(rr));
    let est = tape.mul_scalar(gain, y_hat)?;
    let d = tape.dot(est, r)?;
    let alpha = tape.scale(d, 1.0 / (rr + EPS));
    let proj = tape.mul_scalar(alpha, r)?;
    let res = tape.sub(est, proj)?;
    let num = tape.sum_sq(proj);
    let den = tape.sum_sq(res);
    let den = tape.add_scalar(den, EPS);
    let ln = tape.log10(num);
    let ld = tape.log10(den);
    let diff = tape.sub(ld, ln)?;
    Ok(tape.scale(diff, 10.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{generate_clean, generate_noise, mix_scene, NoiseKind};

    fn small() -> ModelConfig {
        ModelConfig { n: 6, kernel: 8, stride: 4, tcn_blocks: 2, tcn_channels: 5, d_v: 4 }
    }

    fn scene(seconds: f64) -> crate::signal::Scene {
        let c = generate_clean(seconds, 150.0, 3, 16000).unwrap();
        let n = generate_noise(NoiseKind::White, seconds, 4, 16000).unwrap();
        mix_scene(&c, &n, 0.0, 5).unwrap()
    }

    #[test]
    fn default_parameter_count() {
        let cfg = ModelConfig::default();
        assert_eq!(cfg.parameter_count(), 40594);
        assert_eq!(Model::new(cfg, 1).unwrap().parameter_count(), 40594);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig { stride: 17, ..ModelConfig::default() }.validate().is_err());
        assert!(ModelConfig { n: 0, ..ModelConfig::default() }.validate().is_err());
        assert!(ModelConfig::default().frames(15).is_err());
        assert_eq!(ModelConfig::default().frames(16000).unwrap(), 1999);
    }

    #[test]
    fn forward_shapes_and_determinism() {
        let m = Model::new(small(), 9).unwrap();
        let s = scene(0.1);
        let a = m.forward(&s.noisy, &s.visual).unwrap();
        let b = m.forward(&s.noisy, &s.visual).unwrap();
        assert_eq!(a, b);
        let k = small().frames(s.noisy.len()).unwrap();
        assert_eq!(a.mask_mean.shape(), &[6, k]);
        assert_eq!(a.vproj.shape(), &[5, k]);
        assert_eq!(a.enhanced.len(), s.noisy.len());
        assert!(a.mask_mean.data().iter().all(|v| *v > 0.0 && *v < 1.0));
        assert!(a.latent.data().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn zero_input_encodes_to_relu_bias() {
        let m = Model::new(small(), 2).unwrap();
        let mut t = Tape::new();
        let p = m.bind(&mut t, false);
        let w = m.encode(&mut t, &p, &[0.0; 40]).unwrap();
        let out = t.value(w);
        let bias = m.params()[ENC_B].data();
        for n in 0..6 {
            for k in 0..out.dim(1) {
                assert_eq!(out.data()[n * out.dim(1) + k], bias[n].max(0.0));
            }
        }
    }

    #[test]
    fn zero_mask_decodes_to_silence() {
        let m = Model::new(small(), 2).unwrap();
        let latent = Tensor::new(vec![6, 9], (0..54).map(|i| i as f64).collect()).unwrap();
        let y = m.decode_mask(&latent, &Tensor::zeros(&[6, 9]), 100, 16000).unwrap();
        assert!(y.samples().iter().all(|v| *v == 0.0));
        for len in [16000, 16001] {
            let lat = Tensor::zeros(&[6, small().frames(len).unwrap()]);
            assert_eq!(m.decode_mask(&lat, &lat, len, 16000).unwrap().len(), len);
        }
    }

    #[test]
    fn loss_matches_metric_and_is_scale_invariant() {
        let s = scene(0.05);
        let target = s.clean.samples();
        let eval = |est: &[f64]| {
            let mut t = Tape::new();
            let v = t.constant(Tensor::from_rows(1, est.len(), est.to_vec()).unwrap());
            let l = si_snr_loss(&mut t, target, v).unwrap();
            t.scalar_value(l)
        };
        let base = eval(s.noisy.samples());
        let metric = crate::metrics::si_snr(&s.clean, &s.noisy, EPS).unwrap();
        assert!((base + metric).abs() < 1e-9);
        for a in [0.5, 2.0] {
            let scaled: Vec<f64> = s.noisy.samples().iter().map(|v| v * a).collect();
            assert!((eval(&scaled) - base).abs() < 1e-6);
        }
        assert!(eval(target) <= -80.0);
    }

    #[test]
    fn loss_rejects_degenerate_inputs() {
        let mut t = Tape::new();
        let v = t.constant(Tensor::from_rows(1, 4, vec![1.0; 4]).unwrap());
        assert!(matches!(si_snr_loss(&mut t, &[0.0; 4], v), Err(Error::DegenerateSignal(_))));
        let z = t.constant(Tensor::zeros(&[1, 4]));
        assert!(matches!(si_snr_loss(&mut t, &[1.0; 4], z), Err(Error::DegenerateSignal(_))));
        assert!(si_snr_loss(&mut t, &[1.0; 3], v).is_err());
    }

    #[test]
    fn from_params_checks_shapes() {
        let m = Model::new(small(), 1).unwrap();
        let mut p = m.params().to_vec();
        assert_eq!(Model::from_params(small(), p.clone()).unwrap(), m);
        p[3] = Tensor::zeros(&[1]);
        assert!(Model::from_params(small(), p).is_err());
        assert_eq!(m.param_names()[0], "encoder.weight");
        assert_eq!(m.param_names().last().unwrap(), "decoder.weight");
    }
}
