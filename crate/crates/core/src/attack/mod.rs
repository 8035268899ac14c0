//! White-box FGSM and PGD under L∞ and L2 budgets against a [`ModelChain`].

mod chain;
mod manifest;

use serde::{Deserialize, Serialize};

pub use chain::ModelChain;
pub use manifest::{read_manifest, write_manifest, ManifestRow};

use crate::asr::{CrossEntropy, Objective};
use crate::seed::derive_seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Norm {
    #[serde(rename = "linf")]
    Linf,
    #[serde(rename = "l2")]
    L2,
}

impl Norm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Norm::Linf => "linf",
            Norm::L2 => "l2",
        }
    }

    pub fn of(&self, delta: &[f32]) -> f32 {
        match self {
            Norm::Linf => delta.iter().fold(0.0f32, |m, v| m.max(v.abs())),
            Norm::L2 => l2_norm(delta) as f32,
        }
    }
}

impl std::fmt::Display for Norm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Descend the loss toward target labels.
    Targeted,
    /// Ascend the loss on the ground-truth labels.
    Untargeted,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub norm: Norm,
    pub epsilon: f32,
    pub iterations: usize,
    pub step: f32,
    pub mode: Mode,
    pub clamp_audio: bool,
}

impl AttackSpec {
    /// PGD with step `ε/5`.
    pub fn pgd(norm: Norm, epsilon: f32, iterations: usize, mode: Mode) -> Result<Self> {
        let spec = Self {
            norm,
            epsilon,
            iterations,
            step: epsilon / 5.0,
            mode,
            clamp_audio: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Single L∞ step of size `ε`.
    pub fn fgsm(epsilon: f32, mode: Mode) -> Result<Self> {
        let spec = Self {
            norm: Norm::Linf,
            epsilon,
            iterations: 1,
            step: epsilon,
            mode,
            clamp_audio: true,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::Config(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if self.iterations == 0 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutput {
    pub adversarial: Vec<f32>,
    pub delta: Vec<f32>,
}

fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt()
}

/// Scales `delta` onto the L2 ball of radius `epsilon` if it lies outside.
pub fn project_l2(delta: &[f32], epsilon: f32) -> Vec<f32> {
    let norm = l2_norm(delta);
    if norm <= epsilon as f64 {
        return delta.to_vec();
    }
    let scale = epsilon as f64 / norm;
    delta.iter().map(|v| (*v as f64 * scale) as f32).collect()
}

/// `x + δ`, clamped to `[−1, 1]` when `clamp` is set.
pub fn apply(x: &[f32], delta: &[f32], clamp: bool) -> Vec<f32> {
    x.iter()
        .zip(delta)
        .map(|(a, d)| {
            if clamp {
                (a + d).clamp(-1.0, 1.0)
            } else {
                a + d
            }
        })
        .collect()
}

/// Shrinks components of `delta` that would push `x + δ` outside
/// `[−1, 1]`, never growing `|δ|`.
fn clamp_delta(x: &[f32], delta: &mut [f32]) {
    for (d, a) in delta.iter_mut().zip(x) {
        let v = a + *d;
        if v > 1.0 {
            *d = (1.0 - a).min(*d).max(0.0);
        } else if v < -1.0 {
            *d = (-1.0 - a).max(*d).min(0.0);
        }
    }
}

/// Projected gradient descent with the framewise cross-entropy loss.
/// `labels` are the target frames (targeted) or the ground truth
/// (untargeted).
pub fn pgd(
    chain: &ModelChain<'_>,
    x: &[f32],
    labels: &[usize],
    spec: &AttackSpec,
    seed: u64,
) -> Result<AttackOutput> {
    pgd_with(chain, &CrossEntropy, x, labels, spec, seed)
}

/// [`pgd`] with an explicit objective.
pub fn pgd_with(
    chain: &ModelChain<'_>,
    objective: &dyn Objective,
    x: &[f32],
    labels: &[usize],
    spec: &AttackSpec,
    seed: u64,
) -> Result<AttackOutput> {
    spec.validate()?;
    let view = chain.attacker_view();
    let mut delta = vec![0.0f32; x.len()];
    for it in 0..spec.iterations {
        let current = apply(x, &delta, spec.clamp_audio);
        let noise_seed = view.noise_seed(seed, it as u64);
        let (_, grad) = view.input_gradient(objective, &current, labels, noise_seed)?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                stage: "attack",
                detail: format!("non-finite input gradient at iteration {it}"),
            });
        }
        let ascend = match spec.mode {
            Mode::Targeted => -1.0f32,
            Mode::Untargeted => 1.0,
        };
        match spec.norm {
            Norm::Linf => {
                for (d, g) in delta.iter_mut().zip(&grad) {
                    let s = if *g > 0.0 {
                        1.0
                    } else if *g < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    *d = (*d + spec.step * ascend * s).clamp(-spec.epsilon, spec.epsilon);
                }
            }
            Norm::L2 => {
                let norm = l2_norm(&grad);
                if norm > 0.0 {
                    let k = spec.step as f64 * ascend as f64 / norm;
                    delta
                        .iter_mut()
                        .zip(&grad)
                        .for_each(|(d, g)| *d += (k * *g as f64) as f32);
                }
                delta = project_l2(&delta, spec.epsilon);
            }
        }
        if spec.clamp_audio {
            clamp_delta(x, &mut delta);
        }
    }
    Ok(AttackOutput {
        adversarial: apply(x, &delta, spec.clamp_audio),
        delta,
    })
}

/// One signed step of size `ε`.
pub fn fgsm(
    chain: &ModelChain<'_>,
    x: &[f32],
    labels: &[usize],
    epsilon: f32,
    mode: Mode,
    seed: u64,
) -> Result<AttackOutput> {
    pgd(chain, x, labels, &AttackSpec::fgsm(epsilon, mode)?, seed)
}

/// Per-utterance attack seed.
pub fn attack_seed(seed: u64, utt_id: &str) -> u64 {
    derive_seed(seed, &format!("attack/{utt_id}"))
}
