//! The evaluated systems and their result-table labels.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    Baseline,
    BaselineRs,
    /// Denoiser in front of the recognizer, attacked on the bare recognizer.
    DenoiserNonAdaptive,
    /// Smoothing and denoiser, attacked through both.
    Denoiser,
    AdvFinetuneAsr,
    AdvFinetuneJoint,
    AdvFinetuneJointFrozen,
}

impl System {
    pub const ALL: [System; 7] = [
        System::Baseline,
        System::BaselineRs,
        System::DenoiserNonAdaptive,
        System::Denoiser,
        System::AdvFinetuneAsr,
        System::AdvFinetuneJoint,
        System::AdvFinetuneJointFrozen,
    ];

    pub fn label(&self, sigma: f32) -> String {
        let rs = format!("RS{sigma}");
        match self {
            System::Baseline => "Baseline".into(),
            System::BaselineRs => format!("Baseline+{rs}"),
            System::DenoiserNonAdaptive => "Baseline+DENOISER(non-adaptive)".into(),
            System::Denoiser => format!("Baseline+{rs}+DENOISER"),
            System::AdvFinetuneAsr => format!("ADV-FINETUNE-ASR+{rs}"),
            System::AdvFinetuneJoint => format!("ADV-FINETUNE-JOINT+{rs}"),
            System::AdvFinetuneJointFrozen => format!("ADV-FINETUNE-JOINT-ASRfrozen+{rs}"),
        }
    }

    pub fn smoothed(&self) -> bool {
        !matches!(self, System::Baseline | System::DenoiserNonAdaptive)
    }
}
