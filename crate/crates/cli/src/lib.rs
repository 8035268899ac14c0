//! Config-driven experiment pipeline: corpus synthesis, training, attack
//! generation, defenses and the WER evaluation grid.

pub mod config;
mod error;
pub mod pipeline;
pub mod systems;

pub use config::{AttackDatasetConfig, AttackSetting, EvaluationConfig, ExperimentConfig, Stage};
pub use error::CliError;
pub use pipeline::{
    read_heldout, read_results, EvalSummary, HeldoutRow, Layout, ResultRow, Runner,
};
pub use systems::System;
