//! Supervised SI-SNR training step.

use alloc::vec::Vec;

use crate::autodiff::{Tape, Tensor};
use crate::model::{si_snr_loss, Model};
use crate::optim::{adam_step, AdamConfig, AdamState};
use crate::signal::Scene;
use crate::{Error, Result};

/// Loss and parameter gradients for one scene.
pub fn loss_and_grads(model: &Model, scene: &Scene) -> Result<(f64, Vec<Tensor>)> {
    let mut tape = Tape::new();
    let p = model.bind(&mut tape, true);
    let trace = model.forward_on(&mut tape, &p, &scene.noisy, &scene.visual)?;
    let loss = si_snr_loss(&mut tape, scene.clean.samples(), trace.enhanced)?;
    tape.backward(loss)?;
    Ok((tape.scalar_value(loss), model.gradients(&tape, &p)))
}

/// Loss of one scene without building gradients.
pub fn loss(model: &Model, scene: &Scene) -> Result<f64> {
    let trace = model.forward(&scene.noisy, &scene.visual)?;
    Ok(-crate::metrics::si_snr(&scene.clean, &trace.enhanced, crate::EPS)?)
}

/// One Adam step on the mean loss over `batch`. Returns that mean loss.
/// Parameters are untouched when the loss or a gradient is non-finite.
pub fn train_step(model: &mut Model, adam: &mut AdamState, batch: &[&Scene], cfg: &AdamConfig) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::invalid("empty training batch"));
    }
    let mut total = 0.0;
    let mut acc: Option<Vec<Tensor>> = None;
    for scene in batch {
        let (l, g) = loss_and_grads(model, scene)?;
        total += l;
        match acc.as_mut() {
            None => acc = Some(g),
            Some(a) => {
                for (a, g) in a.iter_mut().zip(&g) {
                    a.data_mut().iter_mut().zip(g.data()).for_each(|(x, y)| *x += y);
                }
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    let mut grads = acc.expect("non-empty batch");
    for g in &mut grads {
        g.data_mut().iter_mut().for_each(|v| *v *= scale);
    }
    let mean = total * scale;
    if !mean.is_finite() || grads.iter().any(|g| g.data().iter().any(|v| !v.is_finite())) {
        return Err(Error::NonFinite(alloc::format!("training loss {mean}")));
    }
    adam_step(model.params_mut(), &grads, adam, cfg)?;
    Ok(mean)
}
