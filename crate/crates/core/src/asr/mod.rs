//! Small convolutional recognizer: log-magnitude STFT frontend, a stack of
//! length-preserving conv1d layers and a per-frame softmax over the vocabulary.

mod train;
mod vocab;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use train::{train, TrainConfig, TrainLog};
pub use vocab::{collapse, Vocab, SIL, SIL_TOKEN};

use crate::checkpoint;
use crate::seed::rng_for;
use crate::signal::{stft_magnitude, StftConfig, StftPlan, Window};
use crate::tensor::{ParamSet, Tape, Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AsrConfig {
    pub frontend: StftConfig,
    pub channels: usize,
    pub kernel: usize,
    pub layers: usize,
    /// Added to magnitudes before the log.
    pub log_floor: f32,
}

impl Default for AsrConfig {
    fn default() -> Self {
        Self {
            frontend: StftConfig {
                frame_len: 64,
                frame_shift: 16,
                window: Window::Hann,
            },
            channels: 32,
            kernel: 5,
            layers: 3,
            log_floor: 1e-3,
        }
    }
}

impl AsrConfig {
    pub fn validate(&self) -> Result<()> {
        self.frontend.validate()?;
        if self.channels == 0 || self.layers == 0 {
            return Err(Error::Config(
                "recognizer needs at least one layer and channel".into(),
            ));
        }
        if self.kernel.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "kernel must be odd to preserve length, got {}",
                self.kernel
            )));
        }
        if !(self.log_floor > 0.0 && self.log_floor.is_finite()) {
            return Err(Error::Config(format!(
                "log_floor must be positive, got {}",
                self.log_floor
            )));
        }
        Ok(())
    }
}

/// A waveform with its transcript and per-frame alignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub id: String,
    pub waveform: Vec<f32>,
    pub words: Vec<String>,
    pub frame_labels: Vec<usize>,
}

impl Utterance {
    /// Checks that collapsing the frame labels reproduces the transcript.
    pub fn validate(&self, vocab: &Vocab, frontend: &StftConfig) -> Result<()> {
        let frames = frontend.frames(self.waveform.len())?;
        if frames != self.frame_labels.len() {
            return Err(Error::LengthMismatch(frames, self.frame_labels.len()));
        }
        if let Some(&bad) = self.frame_labels.iter().find(|&&l| l >= vocab.len()) {
            return Err(Error::LabelOutOfRange {
                label: bad,
                size: vocab.len(),
            });
        }
        let collapsed = vocab.words(&collapse(&self.frame_labels));
        if collapsed != self.words {
            return Err(Error::Vocab(format!(
                "{}: labels collapse to {:?}, transcript is {:?}",
                self.id, collapsed, self.words
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AsrMeta {
    config: AsrConfig,
    vocab: Vocab,
    trained_epochs: usize,
}

#[derive(Debug, Clone)]
pub struct AsrModel {
    config: AsrConfig,
    vocab: Vocab,
    plan: StftPlan,
    params: ParamSet,
    trained_epochs: usize,
}

impl AsrModel {
    pub fn new(config: AsrConfig, vocab: Vocab, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = rng_for(seed, "asr-init");
        let mut params = ParamSet::new();
        let mut c_in = config.frontend.bins();
        for l in 0..config.layers {
            let fan_in = c_in * config.kernel;
            let bound = (6.0 / fan_in as f32).sqrt();
            let w = (0..config.channels * fan_in)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            params.push(
                format!("conv{l}.weight"),
                Tensor::new(vec![config.channels, c_in, config.kernel], w)?,
            );
            params.push(
                format!("conv{l}.bias"),
                Tensor::zeros(vec![config.channels, 1]),
            );
            c_in = config.channels;
        }
        let v = vocab.len();
        let bound = (6.0 / (c_in + v) as f32).sqrt();
        let w = (0..c_in * v)
            .map(|_| rng.gen_range(-bound..bound))
            .collect();
        params.push("out.weight", Tensor::new(vec![c_in, v], w)?);
        params.push("out.bias", Tensor::zeros(vec![v]));
        Ok(Self {
            plan: StftPlan::new(config.frontend)?,
            config,
            vocab,
            params,
            trained_epochs: 0,
        })
    }

    pub fn config(&self) -> &AsrConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn trained_epochs(&self) -> usize {
        self.trained_epochs
    }

    pub fn mark_trained(&mut self, epochs: usize) {
        self.trained_epochs += epochs;
    }

    /// Samples per posterior frame.
    pub fn frame_rate(&self) -> usize {
        self.config.frontend.frame_shift
    }

    pub fn num_frames(&self, samples: usize) -> Result<usize> {
        self.config.frontend.frames(samples)
    }

    /// Records the parameters as trainable leaves (per tensor flags).
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params.bind(tape)
    }

    /// Records the parameters as constants.
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.params.bind_frozen(tape)
    }

    /// Log-posteriors `[frames × |V|]` using already bound parameters.
    pub fn forward_with<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        let mut h = stft_magnitude(&self.plan, x)?
            .add_scalar(self.config.log_floor)?
            .log()?
            .transpose()?;
        let pad = self.config.kernel / 2;
        for l in 0..self.config.layers {
            h = h
                .conv1d(params[2 * l], 1, 1, pad)?
                .add(params[2 * l + 1])?
                .relu()?;
        }
        let n = 2 * self.config.layers;
        let logits = h.transpose()?.matmul(params[n])?.add(params[n + 1])?;
        Ok(logits.log_softmax(1)?)
    }

    pub fn forward<'t>(&self, tape: &'t Tape, x: Var<'t>) -> Result<Var<'t>> {
        let params = self.bind_frozen(tape);
        self.forward_with(&params, x)
    }

    pub fn log_posteriors(&self, x: &[f32]) -> Result<Tensor> {
        let tape = Tape::new();
        let xv = tape.input(vec![x.len()], x.to_vec(), false)?;
        Ok(self.forward(&tape, xv)?.to_tensor())
    }

    pub fn transcribe(&self, x: &[f32]) -> Result<Vec<String>> {
        let lp = self.log_posteriors(x)?;
        Ok(self.vocab.words(&decode(&lp)))
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = AsrMeta {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            trained_epochs: self.trained_epochs,
        };
        checkpoint::save(dir, "asr", &self.params, &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (params, meta): (ParamSet, AsrMeta) = checkpoint::load(dir, "asr")?;
        let mut model = Self::new(meta.config, meta.vocab, 0)?;
        if params.names() != model.params.names()
            || params
                .iter()
                .zip(model.params.iter())
                .any(|(a, b)| a.1.shape() != b.1.shape())
        {
            return Err(Error::Checkpoint(format!(
                "{}: parameter layout does not match the recorded config",
                dir.display()
            )));
        }
        model.params = params;
        model.trained_epochs = meta.trained_epochs;
        Ok(model)
    }
}

/// Mean negative log-probability of the frame labels.
pub fn asr_loss<'t>(log_posteriors: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
    let shape = log_posteriors.shape();
    if shape.len() != 2 || shape[0] != labels.len() {
        return Err(Error::LengthMismatch(
            shape.first().copied().unwrap_or(0),
            labels.len(),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= shape[1]) {
        return Err(Error::LabelOutOfRange {
            label: bad,
            size: shape[1],
        });
    }
    Ok(log_posteriors.pick(labels)?.mean()?.neg()?)
}

/// Training/attack loss over log-posteriors and frame labels.
pub trait Objective: Sync {
    fn loss<'t>(&self, log_posteriors: Var<'t>, labels: &[usize]) -> Result<Var<'t>>;
}

/// Framewise cross-entropy, see [`asr_loss`].
#[derive(Debug, Clone, Copy, Default)]
pub struct CrossEntropy;

impl Objective for CrossEntropy {
    fn loss<'t>(&self, log_posteriors: Var<'t>, labels: &[usize]) -> Result<Var<'t>> {
        asr_loss(log_posteriors, labels)
    }
}

/// Greedy decoding: per-frame argmax (lowest index wins ties), then
/// [`collapse`].
pub fn decode(log_posteriors: &Tensor) -> Vec<usize> {
    let v = log_posteriors.shape().last().copied().unwrap_or(0);
    if v == 0 {
        return Vec::new();
    }
    let best: Vec<usize> = log_posteriors
        .data()
        .chunks(v)
        .map(|row| {
            let mut arg = 0;
            for (i, &p) in row.iter().enumerate() {
                if p > row[arg] {
                    arg = i;
                }
            }
            arg
        })
        .collect();
    collapse(&best)
}
