//! Randomized smoothing and adversarial fine-tuning.

mod finetune;
mod smoothing;

pub use finetune::{
    adv_finetune, adv_finetune_asr, adv_finetune_joint, adv_finetune_joint_frozen, FinetuneConfig,
    FinetuneLog, Variant,
};
pub use smoothing::{smooth, smooth_var, SeedPolicy, SmoothingConfig};
