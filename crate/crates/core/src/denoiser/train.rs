use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Denoiser;
use crate::seed::rng_for;
use crate::signal::{MrStftConfig, MrStftLoss};
use crate::tensor::{Adam, AdamConfig, Tape};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserTrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub seed: u64,
    /// Global gradient-norm clip (0 = off).
    pub grad_clip: f32,
    pub mrstft: MrStftConfig,
}

impl Default for DenoiserTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            lr: 3e-3,
            batch_size: 8,
            seed: 0,
            grad_clip: 1.0,
            mrstft: MrStftConfig::default(),
        }
    }
}

impl DenoiserTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.mrstft.validate()?;
        if !(self.grad_clip >= 0.0 && self.grad_clip.is_finite()) {
            return Err(Error::Config(format!(
                "grad_clip must be >= 0, got {}",
                self.grad_clip
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "lr must be positive, got {}",
                self.lr
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DenoiserTrainLog {
    /// Mean loss over all pairs before the first update.
    pub initial_loss: f32,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f32>,
    /// Mean loss over all pairs after each epoch.
    pub eval_losses: Vec<f32>,
    /// Epoch whose parameters were kept (`None`: the starting point).
    pub best_epoch: Option<usize>,
}

fn pair_loss<D: Denoiser + ?Sized>(
    model: &D,
    loss: &MrStftLoss,
    clean: &[f32],
    attacked: &[f32],
) -> Result<f32> {
    let tape = Tape::new();
    let x = tape.input(vec![attacked.len()], attacked.to_vec(), false)?;
    Ok(loss.loss(clean, model.forward(&tape, x)?)?.item())
}

fn pair_grads<D: Denoiser + ?Sized>(
    model: &D,
    loss: &MrStftLoss,
    clean: &[f32],
    attacked: &[f32],
) -> Result<(f32, Vec<Vec<f32>>)> {
    let tape = Tape::new();
    let params = model.params().bind(&tape);
    let x = tape.input(vec![attacked.len()], attacked.to_vec(), false)?;
    let l = loss.loss(clean, model.forward_with(&params, x)?)?;
    let grads = tape.backward(l)?;
    Ok((l.item(), model.params().collect_grads(&grads, &params)))
}

fn mean_loss<D: Denoiser + ?Sized>(
    model: &D,
    loss: &MrStftLoss,
    pairs: &[(Vec<f32>, Vec<f32>)],
) -> Result<f32> {
    let losses: Vec<Result<f32>> = pairs
        .par_iter()
        .map(|(c, a)| pair_loss(model, loss, c, a))
        .collect();
    let mut total = 0.0f64;
    for l in losses {
        total += l? as f64;
    }
    Ok((total / pairs.len() as f64) as f32)
}

/// Deep-regression training on `(benign, attacked)` pairs with the
/// multi-resolution STFT loss.
pub fn train_offline<D: Denoiser + ?Sized>(
    model: &mut D,
    pairs: &[(Vec<f32>, Vec<f32>)],
    cfg: &DenoiserTrainConfig,
) -> Result<DenoiserTrainLog> {
    cfg.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("denoiser training pairs"));
    }
    for (clean, attacked) in pairs {
        if clean.len() != attacked.len() {
            return Err(Error::LengthMismatch(clean.len(), attacked.len()));
        }
    }
    let loss = MrStftLoss::new(&cfg.mrstft)?;
    let mut log = DenoiserTrainLog {
        initial_loss: mean_loss(model, &loss, pairs)?,
        ..DenoiserTrainLog::default()
    };
    let mut best = (log.initial_loss, model.params().clone());
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_for(cfg.seed, &format!("denoiser-epoch-{epoch}")));
        let (mut total, mut batches) = (0.0f64, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let current: &D = model;
            let results: Vec<Result<(f32, Vec<Vec<f32>>)>> = batch
                .par_iter()
                .map(|&i| pair_grads(current, &loss, &pairs[i].0, &pairs[i].1))
                .collect();
            let mut grads = Vec::with_capacity(batch.len());
            let mut batch_loss = 0.0f64;
            for r in results {
                let (l, g) = r?;
                batch_loss += l as f64;
                grads.push(g);
            }
            let batch_loss = batch_loss / batch.len() as f64;
            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    stage: "denoiser training",
                    detail: format!("non-finite loss in epoch {epoch}"),
                });
            }
            model.params_mut().set_mean_grads(grads)?;
            if cfg.grad_clip > 0.0 {
                model.params_mut().clip_grad_norm(cfg.grad_clip);
            }
            adam.step(model.params_mut())?;
            total += batch_loss;
            batches += 1;
        }
        let mean = (total / batches as f64) as f32;
        let eval = mean_loss(model, &loss, pairs)?;
        log::info!("denoiser epoch {epoch}: loss {mean:.4}, full-set {eval:.4}");
        log.epoch_losses.push(mean);
        log.eval_losses.push(eval);
        if eval < best.0 {
            best = (eval, model.params().clone());
            log.best_epoch = Some(epoch);
        }
    }
    // the loss is not smooth where output magnitudes match the target, so a
    // step can leave a better point; keep the best one seen
    *model.params_mut() = best.1;
    model.params_mut().zero_grad();
    model.mark_trained(cfg.epochs);
    Ok(log)
}
