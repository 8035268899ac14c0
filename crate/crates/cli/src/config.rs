//! Experiment configuration: one TOML document, one section per stage.

use std::fs;
use std::path::{Path, PathBuf};

use advspeech::asr::{AsrConfig, TrainConfig};
use advspeech::attack::{Mode, Norm};
use advspeech::corpus::{AttackGrid, CorpusConfig};
use advspeech::defense::{FinetuneConfig, SmoothingConfig};
use advspeech::denoiser::{DenoiserConfig, DenoiserTrainConfig};
use advspeech::seed::derive_seed;
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::systems::System;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed. Every stage seed is derived from it, salted with the
    /// stage's own `seed` field.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub asr: AsrConfig,
    #[serde(default)]
    pub asr_train: TrainConfig,
    #[serde(default)]
    pub attacks: AttackDatasetConfig,
    #[serde(default)]
    pub denoiser: DenoiserConfig,
    #[serde(default)]
    pub denoiser_train: DenoiserTrainConfig,
    #[serde(default)]
    pub finetune: FinetuneConfig,
    #[serde(default = "default_smoothing")]
    pub smoothing: SmoothingConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_smoothing() -> SmoothingConfig {
    SmoothingConfig::new(0.001).expect("valid sigma")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: default_out(),
            corpus: CorpusConfig::default(),
            asr: AsrConfig::default(),
            asr_train: TrainConfig::default(),
            attacks: AttackDatasetConfig::default(),
            denoiser: DenoiserConfig::default(),
            denoiser_train: DenoiserTrainConfig::default(),
            finetune: FinetuneConfig::default(),
            smoothing: default_smoothing(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

/// Offline attack dataset for denoiser training, plus a held-out set
/// drawn from the test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct AttackDatasetConfig {
    pub grid: AttackGrid,
    /// 0 = the whole training split.
    pub train_utterances: usize,
    /// 0 = the whole test split.
    pub heldout_utterances: usize,
    pub seed: u64,
}

/// One row family of the result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSetting {
    /// Label only; `iterations = 1` selects FGSM.
    pub name: String,
    pub iterations: usize,
    pub epsilons: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub norm: Norm,
    pub mode: Mode,
    pub attacks: Vec<AttackSetting>,
    pub systems: Vec<System>,
    /// 0 = the whole test split.
    pub max_utterances: usize,
    /// Budget left out of the boxplot summary.
    pub boxplot_exclude_epsilon: Option<f32>,
    pub seed: u64,
}

const GRID: [f32; 5] = [1e-4, 1e-3, 0.01, 0.1, 0.2];

impl Default for EvaluationConfig {
    fn default() -> Self {
        let setting = |name: &str, iterations, eps: &[f32]| AttackSetting {
            name: name.into(),
            iterations,
            epsilons: eps.to_vec(),
        };
        Self {
            norm: Norm::Linf,
            mode: Mode::Targeted,
            attacks: vec![
                setting("FGSM", 1, &GRID),
                setting("PGD-7", 7, &GRID),
                setting("PGD-100", 100, &[0.01, 0.1]),
            ],
            systems: System::ALL.to_vec(),
            max_utterances: 0,
            boxplot_exclude_epsilon: Some(0.2),
            seed: 0,
        }
    }
}

/// Stage names used to derive per-stage seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Corpus,
    AsrInit,
    AsrTrain,
    Attacks,
    DenoiserInit,
    DenoiserTrain,
    Finetune,
    Evaluate,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Floats are written in their shortest f32 form.
    pub fn to_toml(&self) -> Result<String, CliError> {
        let mut v = toml::Value::try_from(self).map_err(|e| CliError::Config(e.to_string()))?;
        shorten_floats(&mut v);
        toml::to_string_pretty(&v).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.corpus.validate()?;
        self.asr.validate()?;
        self.asr_train.validate()?;
        self.attacks.grid.validate()?;
        self.denoiser.validate()?;
        self.denoiser_train.validate()?;
        self.finetune.validate()?;
        self.smoothing.validate()?;
        let fe = &self.asr.frontend;
        if (fe.frame_len, fe.frame_shift) != (self.corpus.frame_len, self.corpus.frame_shift) {
            return Err(CliError::Config(format!(
                "recognizer frontend {}/{} differs from the corpus framing {}/{}",
                fe.frame_len, fe.frame_shift, self.corpus.frame_len, self.corpus.frame_shift
            )));
        }
        let ev = &self.evaluation;
        if ev.attacks.is_empty() || ev.systems.is_empty() {
            return Err(CliError::Config(
                "evaluation needs at least one attack and one system".into(),
            ));
        }
        for a in &ev.attacks {
            if a.epsilons.is_empty() {
                return Err(CliError::Config(format!(
                    "attack `{}` has an empty epsilon list",
                    a.name
                )));
            }
            if a.iterations == 0 {
                return Err(CliError::Config(format!(
                    "attack `{}` needs at least one iteration",
                    a.name
                )));
            }
            if a.iterations == 1 && ev.norm != Norm::Linf {
                return Err(CliError::Config(format!(
                    "attack `{}`: FGSM is defined for linf only",
                    a.name
                )));
            }
            if a.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return Err(CliError::Config(format!(
                    "attack `{}` has a non-positive epsilon",
                    a.name
                )));
            }
        }
        Ok(())
    }

    pub fn stage_seed(&self, stage: Stage) -> u64 {
        let (name, salt) = match stage {
            Stage::Corpus => ("corpus", self.corpus.seed),
            Stage::AsrInit => ("asr-init", self.asr_train.seed),
            Stage::AsrTrain => ("asr-train", self.asr_train.seed),
            Stage::Attacks => ("attacks", self.attacks.seed),
            Stage::DenoiserInit => ("denoiser-init", self.denoiser_train.seed),
            Stage::DenoiserTrain => ("denoiser-train", self.denoiser_train.seed),
            Stage::Finetune => ("finetune", self.finetune.seed),
            Stage::Evaluate => ("evaluate", self.evaluation.seed),
        };
        derive_seed(self.seed, &format!("{name}/{salt}"))
    }
}

fn shorten_floats(v: &mut toml::Value) {
    match v {
        toml::Value::Float(f) => {
            if let Ok(short) = (*f as f32).to_string().parse::<f64>() {
                *f = short;
            }
        }
        toml::Value::Array(items) => items.iter_mut().for_each(shorten_floats),
        toml::Value::Table(t) => t.iter_mut().for_each(|(_, v)| shorten_floats(v)),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("sead = 3").is_err());
        assert!(ExperimentConfig::from_toml("[corpus]\nvocab = 3").is_err());
        assert!(ExperimentConfig::from_toml("seed = 3\n[corpus]\nn_train = 40").is_ok());
    }

    #[test]
    fn empty_epsilon_list_is_rejected() {
        let text = "[evaluation]\n[[evaluation.attacks]]\nname = \"PGD-7\"\niterations = 7\nepsilons = []\n";
        assert!(matches!(
            ExperimentConfig::from_toml(text),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn stage_seeds_follow_master() {
        let a = ExperimentConfig::default();
        let b = ExperimentConfig {
            seed: 1,
            ..a.clone()
        };
        assert_ne!(a.stage_seed(Stage::Corpus), b.stage_seed(Stage::Corpus));
        assert_ne!(a.stage_seed(Stage::Corpus), a.stage_seed(Stage::AsrTrain));
    }
}
