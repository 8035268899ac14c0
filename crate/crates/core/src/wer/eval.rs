use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ErrorCounts, TranscriptSet};
use crate::asr::Utterance;
use crate::attack::{attack_seed, pgd, AttackSpec, Mode, ModelChain};
use crate::seed::derive_seed;
use crate::{Error, Result};

/// Target transcript and frame labels for one utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub words: Vec<String>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellOptions {
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum UttOutcome {
    Done(TranscriptSet),
    Failed(String),
}

/// Pooled counts for one (system, attack, budget) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WerReport {
    pub benign: ErrorCounts,
    pub gt: ErrorCounts,
    pub tgt: Option<ErrorCounts>,
    pub n_utts: usize,
    /// Utterance ids whose attack failed; they are left out of every pool.
    pub failures: Vec<(String, String)>,
    pub transcripts: Vec<(String, TranscriptSet)>,
}

impl WerReport {
    pub fn benign_wer(&self) -> f64 {
        self.benign.wer().unwrap_or(f64::NAN)
    }

    pub fn gt_wer(&self) -> f64 {
        self.gt.wer().unwrap_or(f64::NAN)
    }

    pub fn tgt_wer(&self) -> Option<f64> {
        self.tgt.map(|c| c.wer().unwrap_or(f64::NAN))
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Pools per-utterance transcript sets.
    pub fn pool(outcomes: Vec<(String, UttOutcome)>, targeted: bool) -> Result<Self> {
        let mut report = WerReport {
            benign: ErrorCounts::default(),
            gt: ErrorCounts::default(),
            tgt: targeted.then(ErrorCounts::default),
            n_utts: 0,
            failures: Vec::new(),
            transcripts: Vec::new(),
        };
        for (id, outcome) in outcomes {
            match outcome {
                UttOutcome::Failed(msg) => report.failures.push((id, msg)),
                UttOutcome::Done(set) => {
                    report.benign += set.benign_counts()?;
                    if let Some(c) = set.gt_counts()? {
                        report.gt += c;
                    }
                    if let (Some(acc), Some(c)) = (report.tgt.as_mut(), set.tgt_counts()?) {
                        *acc += c;
                    }
                    report.n_utts += 1;
                    report.transcripts.push((id, set));
                }
            }
        }
        Ok(report)
    }
}

fn evaluate_utt(
    chain: &ModelChain<'_>,
    utt: &Utterance,
    spec: &AttackSpec,
    target: Option<&Target>,
    seed: u64,
) -> Result<TranscriptSet> {
    let s = attack_seed(seed, &utt.id);
    let benign = chain.transcribe(&utt.waveform, derive_seed(s, "benign"))?;
    let labels = match (spec.mode, target) {
        (Mode::Targeted, Some(t)) => &t.labels,
        (Mode::Targeted, None) => return Err(Error::Config(format!("no target for {}", utt.id))),
        (Mode::Untargeted, _) => &utt.frame_labels,
    };
    let adv = pgd(chain, &utt.waveform, labels, spec, s)?;
    let adversarial = chain.transcribe(&adv.adversarial, derive_seed(s, "adversarial"))?;
    Ok(TranscriptSet {
        actual: utt.words.clone(),
        benign,
        target: (spec.mode == Mode::Targeted)
            .then(|| target.map(|t| t.words.clone()).unwrap_or_default()),
        adversarial: Some(adversarial),
    })
}

/// Benign decode, attack and adversarial decode per utterance, pooled.
/// `targets` is aligned with `utts` and required for targeted specs.
/// An utterance whose attack fails is recorded and skipped.
pub fn evaluate_cell(
    chain: &ModelChain<'_>,
    utts: &[Utterance],
    spec: &AttackSpec,
    targets: Option<&[Target]>,
    opts: CellOptions,
) -> Result<WerReport> {
    spec.validate()?;
    if utts.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    if let Some(t) = targets {
        if t.len() != utts.len() {
            return Err(Error::LengthMismatch(utts.len(), t.len()));
        }
    } else if spec.mode == Mode::Targeted {
        return Err(Error::Config("targeted evaluation needs targets".into()));
    }
    let outcomes: Vec<(String, UttOutcome)> = utts
        .par_iter()
        .enumerate()
        .map(|(i, u)| {
            let target = targets.map(|t| &t[i]);
            let outcome = match evaluate_utt(chain, u, spec, target, opts.seed) {
                Ok(set) => UttOutcome::Done(set),
                Err(e) => {
                    log::warn!("attack on {} failed: {e}", u.id);
                    UttOutcome::Failed(e.to_string())
                }
            };
            (u.id.clone(), outcome)
        })
        .collect();
    WerReport::pool(outcomes, spec.mode == Mode::Targeted)
}
