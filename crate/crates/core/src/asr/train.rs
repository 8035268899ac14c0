use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{asr_loss, AsrModel, Utterance};
use crate::seed::rng_for;
use crate::tensor::{Adam, AdamConfig, Tape};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    /// Average the parameters after each of the last N epochs (0 = off).
    pub average_last: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 3e-3,
            batch_size: 8,
            average_last: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
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
pub struct TrainLog {
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f32>,
}

fn example_grads(model: &AsrModel, utt: &Utterance) -> Result<(f32, Vec<Vec<f32>>)> {
    let tape = Tape::new();
    let params = model.bind(&tape);
    let x = tape.input(vec![utt.waveform.len()], utt.waveform.clone(), false)?;
    let loss = asr_loss(model.forward_with(&params, x)?, &utt.frame_labels)?;
    let grads = tape.backward(loss)?;
    Ok((loss.item(), model.params().collect_grads(&grads, &params)))
}

/// Clean-data training with Adam over shuffled minibatches.
pub fn train(model: &mut AsrModel, data: &[Utterance], cfg: &TrainConfig) -> Result<TrainLog> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Empty("training corpus"));
    }
    let mut adam = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let averaged = cfg.average_last.min(cfg.epochs);
    let mut sums: Option<Vec<Vec<f64>>> = None;
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_for(cfg.seed, &format!("asr-epoch-{epoch}")));
        let mut total = 0.0f64;
        let mut batches = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let results: Vec<Result<(f32, Vec<Vec<f32>>)>> = batch
                .par_iter()
                .map(|&i| example_grads(model, &data[i]))
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
                    stage: "asr training",
                    detail: format!("non-finite loss in epoch {epoch}"),
                });
            }
            model.params_mut().set_mean_grads(grads)?;
            adam.step(model.params_mut())?;
            total += batch_loss;
            batches += 1;
        }
        let mean = (total / batches as f64) as f32;
        log::info!("asr epoch {epoch}: loss {mean:.4}");
        log.epoch_losses.push(mean);
        if epoch + averaged >= cfg.epochs {
            let sums = sums.get_or_insert_with(|| {
                model
                    .params()
                    .tensors()
                    .iter()
                    .map(|t| vec![0.0; t.numel()])
                    .collect()
            });
            for (s, t) in sums.iter_mut().zip(model.params().tensors()) {
                s.iter_mut()
                    .zip(t.data())
                    .for_each(|(a, b)| *a += *b as f64);
            }
        }
    }
    if let Some(sums) = sums {
        for (s, t) in sums.iter().zip(model.params_mut().tensors_mut()) {
            t.data_mut()
                .iter_mut()
                .zip(s)
                .for_each(|(w, a)| *w = (a / averaged as f64) as f32);
        }
    }
    model.params_mut().zero_grad();
    model.mark_trained(cfg.epochs);
    Ok(log)
}
