use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asr::{AsrModel, CrossEntropy, Objective, TrainConfig, Utterance};
use crate::attack::{pgd_with, AttackSpec, Mode, ModelChain, Norm};
use crate::denoiser::Denoiser;
use crate::seed::{derive_seed, rng_for};
use crate::tensor::{Adam, AdamConfig, Tape};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    AsrOnly,
    Joint,
    JointFrozen,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::AsrOnly => "asr_only",
            Variant::Joint => "joint",
            Variant::JointFrozen => "joint_frozen",
        }
    }

    fn trains_asr(&self) -> bool {
        !matches!(self, Variant::JointFrozen)
    }

    fn uses_denoiser(&self) -> bool {
        !matches!(self, Variant::AsrOnly)
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "asr_only" | "asr" => Ok(Variant::AsrOnly),
            "joint" => Ok(Variant::Joint),
            "joint_frozen" => Ok(Variant::JointFrozen),
            _ => Err(Error::Config(format!("unknown fine-tune variant `{s}`"))),
        }
    }
}

/// Adversarial fine-tuning. Each minibatch draws one L∞ budget from a
/// log-uniform law on `[eps_min, eps_max]`, crafts untargeted PGD against
/// the current parameters and steps on the loss at the attacked inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub asr_lr: f32,
    pub denoiser_lr: f32,
    pub eps_min: f32,
    pub eps_max: f32,
    pub inner_iterations: usize,
    /// Multiplies the sampled budget, for corpora not at the reference
    /// level. Set by the caller from the corpus, not from config files.
    #[serde(skip, default = "unit_scale")]
    pub signal_scale: f32,
    /// Use only the first N training utterances (0 = all).
    pub max_utterances: usize,
    pub seed: u64,
}

fn unit_scale() -> f32 {
    1.0
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 8,
            asr_lr: TrainConfig::default().lr / 10.0,
            denoiser_lr: 1e-4,
            eps_min: 1e-4,
            eps_max: 0.02,
            inner_iterations: 7,
            signal_scale: 1.0,
            max_utterances: 0,
            seed: 0,
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.inner_iterations == 0 {
            return Err(Error::Config(
                "epochs, batch_size and inner_iterations must be positive".into(),
            ));
        }
        for (name, lr) in [("asr_lr", self.asr_lr), ("denoiser_lr", self.denoiser_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {lr}")));
            }
        }
        let zero = self.eps_min == 0.0 && self.eps_max == 0.0;
        if !zero
            && !(self.eps_min > 0.0 && self.eps_min <= self.eps_max && self.eps_max.is_finite())
        {
            return Err(Error::Config(format!(
                "need 0 < eps_min <= eps_max, got [{}, {}]",
                self.eps_min, self.eps_max
            )));
        }
        if !(self.signal_scale > 0.0 && self.signal_scale.is_finite()) {
            return Err(Error::Config("signal_scale must be positive".into()));
        }
        Ok(())
    }

    fn sample_epsilon(&self, epoch: usize, batch: usize) -> f32 {
        if self.eps_max == 0.0 {
            return 0.0;
        }
        let mut rng = rng_for(self.seed, &format!("ft-eps-{epoch}-{batch}"));
        let (lo, hi) = ((self.eps_min as f64).ln(), (self.eps_max as f64).ln());
        let e = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        e.exp() as f32
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FinetuneLog {
    /// Mean outer loss per epoch.
    pub epoch_losses: Vec<f32>,
    /// Sampled budget per minibatch, before scaling.
    pub epsilons: Vec<f32>,
}

type Grads = (f32, Vec<Vec<f32>>, Vec<Vec<f32>>);

#[allow(clippy::too_many_arguments)]
fn example_grads(
    asr: &AsrModel,
    denoiser: Option<&dyn Denoiser>,
    variant: Variant,
    objective: &dyn Objective,
    utt: &Utterance,
    budget: f32,
    inner: usize,
    seed: u64,
) -> Result<Grads> {
    let mut chain = ModelChain::new(asr);
    if let Some(d) = denoiser {
        chain = chain.with_denoiser(d);
    }
    let input = if budget > 0.0 {
        let spec = AttackSpec::pgd(Norm::Linf, budget, inner, Mode::Untargeted)?;
        pgd_with(
            &chain,
            objective,
            &utt.waveform,
            &utt.frame_labels,
            &spec,
            seed,
        )?
        .adversarial
    } else {
        utt.waveform.clone()
    };
    let tape = Tape::new();
    let asr_vars = if variant.trains_asr() {
        asr.bind(&tape)
    } else {
        asr.bind_frozen(&tape)
    };
    let den_vars = match denoiser {
        Some(d) if variant.uses_denoiser() => d.params().bind(&tape),
        Some(d) => d.params().bind_frozen(&tape),
        None => Vec::new(),
    };
    let x = tape.input(vec![input.len()], input, false)?;
    let loss = objective.loss(
        chain.forward_bound(x, &asr_vars, &den_vars, seed)?,
        &utt.frame_labels,
    )?;
    let value = loss.item();
    if !value.is_finite() {
        return Err(Error::Diverged {
            stage: "finetune",
            detail: format!("non-finite loss on {}", utt.id),
        });
    }
    let grads = tape.backward(loss)?;
    let g_asr = asr.params().collect_grads(&grads, &asr_vars);
    let g_den = denoiser
        .map(|d| d.params().collect_grads(&grads, &den_vars))
        .unwrap_or_default();
    Ok((value, g_asr, g_den))
}

/// Shared routine behind the three variants. `objective` is the single
/// loss read by both the inner attack and the outer step.
pub fn adv_finetune(
    variant: Variant,
    asr: &mut AsrModel,
    mut denoiser: Option<&mut dyn Denoiser>,
    data: &[Utterance],
    cfg: &FinetuneConfig,
    objective: &dyn Objective,
) -> Result<FinetuneLog> {
    cfg.validate()?;
    if asr.trained_epochs() == 0 {
        return Err(Error::NotPretrained("recognizer"));
    }
    if variant.uses_denoiser() {
        match denoiser.as_deref() {
            None => {
                return Err(Error::Config(format!(
                    "variant {} needs a denoiser",
                    variant.as_str()
                )))
            }
            Some(d) if !d.is_pretrained() => return Err(Error::NotPretrained("denoiser")),
            _ => {}
        }
    }
    let data = match cfg.max_utterances {
        0 => data,
        n => &data[..n.min(data.len())],
    };
    if data.is_empty() {
        return Err(Error::Empty("fine-tuning corpus"));
    }
    let mut asr_opt = Adam::new(AdamConfig {
        lr: cfg.asr_lr,
        ..AdamConfig::default()
    });
    let mut den_opt = Adam::new(AdamConfig {
        lr: cfg.denoiser_lr,
        ..AdamConfig::default()
    });
    let mut log = FinetuneLog::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_for(cfg.seed, &format!("ft-epoch-{epoch}")));
        let mut total = 0.0f64;
        let mut batches = 0usize;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let eps = cfg.sample_epsilon(epoch, b);
            log.epsilons.push(eps);
            let budget = eps * cfg.signal_scale;
            let results: Vec<Result<Grads>> = {
                let asr_ref: &AsrModel = asr;
                let den_ref: Option<&dyn Denoiser> =
                    denoiser.as_deref().map(|d| d as &dyn Denoiser);
                batch
                    .par_iter()
                    .map(|&i| {
                        let seed = derive_seed(cfg.seed, &format!("ft/{epoch}/{}", data[i].id));
                        example_grads(
                            asr_ref,
                            den_ref,
                            variant,
                            objective,
                            &data[i],
                            budget,
                            cfg.inner_iterations,
                            seed,
                        )
                    })
                    .collect()
            };
            let mut batch_loss = 0.0f64;
            let mut g_asr = Vec::with_capacity(batch.len());
            let mut g_den = Vec::with_capacity(batch.len());
            for r in results {
                let (l, ga, gd) = r?;
                batch_loss += l as f64;
                g_asr.push(ga);
                g_den.push(gd);
            }
            total += batch_loss / batch.len() as f64;
            batches += 1;
            if variant.trains_asr() {
                asr.params_mut().set_mean_grads(g_asr)?;
                asr_opt.step(asr.params_mut())?;
                asr.params_mut().zero_grad();
            }
            if variant.uses_denoiser() {
                let d = denoiser.as_deref_mut().expect("checked above");
                if !d.params().is_empty() {
                    d.params_mut().set_mean_grads(g_den)?;
                    den_opt.step(d.params_mut())?;
                    d.params_mut().zero_grad();
                }
            }
        }
        log.epoch_losses.push((total / batches as f64) as f32);
    }
    Ok(log)
}

/// Fine-tunes the recognizer alone.
pub fn adv_finetune_asr(
    asr: &mut AsrModel,
    data: &[Utterance],
    cfg: &FinetuneConfig,
) -> Result<FinetuneLog> {
    adv_finetune(Variant::AsrOnly, asr, None, data, cfg, &CrossEntropy)
}

/// Fine-tunes denoiser and recognizer together, attacking the full chain.
pub fn adv_finetune_joint(
    denoiser: &mut dyn Denoiser,
    asr: &mut AsrModel,
    data: &[Utterance],
    cfg: &FinetuneConfig,
) -> Result<FinetuneLog> {
    adv_finetune(
        Variant::Joint,
        asr,
        Some(denoiser),
        data,
        cfg,
        &CrossEntropy,
    )
}

/// Fine-tunes only the denoiser; the recognizer is left untouched.
pub fn adv_finetune_joint_frozen(
    denoiser: &mut dyn Denoiser,
    asr: &AsrModel,
    data: &[Utterance],
    cfg: &FinetuneConfig,
) -> Result<FinetuneLog> {
    let mut scratch = asr.clone();
    let log = adv_finetune(
        Variant::JointFrozen,
        &mut scratch,
        Some(denoiser),
        data,
        cfg,
        &CrossEntropy,
    )?;
    debug_assert_eq!(scratch.params().checksum(), asr.params().checksum());
    Ok(log)
}
