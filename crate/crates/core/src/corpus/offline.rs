use std::fs;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Corpus;
use crate::asr::{AsrModel, Utterance};
use crate::attack::{
    apply, attack_seed, pgd, read_manifest, write_manifest, AttackSpec, ManifestRow, Mode,
    ModelChain, Norm,
};
use crate::seed::rng_for;
use crate::tensor::{io, Tensor};
use crate::{Error, Result};

/// Relative odds of the two norm families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormWeights {
    pub linf: f64,
    pub l2: f64,
}

impl Default for NormWeights {
    fn default() -> Self {
        Self { linf: 1.0, l2: 1.0 }
    }
}

/// Budget and iteration grids; entries within a grid are drawn with
/// weight `1 + rank` in ascending order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttackGrid {
    pub l2: Vec<f32>,
    pub linf: Vec<f32>,
    pub iterations: Vec<usize>,
    pub norm_weights: NormWeights,
}

impl Default for AttackGrid {
    fn default() -> Self {
        Self {
            l2: vec![0.2, 0.5, 1.5, 1.9],
            linf: vec![0.001, 0.01, 0.1],
            iterations: vec![10, 20, 50, 100, 200],
            norm_weights: NormWeights::default(),
        }
    }
}

fn rank_weights(n: usize) -> Vec<f64> {
    (0..n).map(|r| 1.0 + r as f64).collect()
}

fn sorted<T: Copy + PartialOrd>(v: &[T]) -> Vec<T> {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).expect("finite grid"));
    s
}

impl AttackGrid {
    pub fn validate(&self) -> Result<()> {
        let w = self.norm_weights;
        if !(w.linf >= 0.0 && w.l2 >= 0.0 && w.linf + w.l2 > 0.0) {
            return Err(Error::Config(
                "norm weights must be non-negative and not both zero".into(),
            ));
        }
        if (w.linf > 0.0 && self.linf.is_empty())
            || (w.l2 > 0.0 && self.l2.is_empty())
            || self.iterations.is_empty()
        {
            return Err(Error::Config("attack grid has an empty list".into()));
        }
        if self
            .l2
            .iter()
            .chain(&self.linf)
            .any(|e| !(*e > 0.0 && e.is_finite()))
        {
            return Err(Error::Config("grid budgets must be positive".into()));
        }
        if self.iterations.contains(&0) {
            return Err(Error::Config("grid iterations must be positive".into()));
        }
        Ok(())
    }

    /// One (norm, nominal budget, iterations) draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Norm, f32, usize) {
        let w = self.norm_weights;
        let norm = if rng.gen::<f64>() * (w.linf + w.l2) < w.linf {
            Norm::Linf
        } else {
            Norm::L2
        };
        let budgets = sorted(match norm {
            Norm::Linf => &self.linf,
            Norm::L2 => &self.l2,
        });
        let iters = sorted(&self.iterations);
        let b = WeightedIndex::new(rank_weights(budgets.len()))
            .expect("non-empty")
            .sample(rng);
        let i = WeightedIndex::new(rank_weights(iters.len()))
            .expect("non-empty")
            .sample(rng);
        (norm, budgets[b], iters[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct OfflineConfig {
    pub grid: AttackGrid,
    /// Attack only the first N utterances of the split (0 = all).
    pub max_utterances: usize,
    pub seed: u64,
}

/// One stored perturbation with its manifest metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackRow {
    pub meta: ManifestRow,
    pub delta: Vec<f32>,
}

/// Clean waveform and its attacked version.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackPair {
    pub utt_id: String,
    pub clean: Vec<f32>,
    pub attacked: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttackDataset {
    pub rows: Vec<AttackRow>,
}

impl AttackDataset {
    /// Rebuilds `(clean, clean + δ)` from the corpus.
    pub fn pairs(&self, corpus: &Corpus) -> Result<Vec<AttackPair>> {
        self.rows
            .iter()
            .map(|r| {
                let u = corpus.get(&r.meta.utt_id).ok_or_else(|| {
                    Error::Config(format!(
                        "attack row refers to unknown utterance {}",
                        r.meta.utt_id
                    ))
                })?;
                if u.waveform.len() != r.delta.len() {
                    return Err(Error::LengthMismatch(u.waveform.len(), r.delta.len()));
                }
                Ok(AttackPair {
                    utt_id: u.id.clone(),
                    clean: u.waveform.clone(),
                    attacked: apply(&u.waveform, &r.delta, true),
                })
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("delta"))?;
        for r in &self.rows {
            io::save(
                &dir.join(&r.meta.path_to_delta),
                &Tensor::from_vec(r.delta.clone())?,
            )?;
        }
        let meta: Vec<ManifestRow> = self.rows.iter().map(|r| r.meta.clone()).collect();
        write_manifest(&dir.join("manifest.jsonl"), &meta)
    }

    /// Loads and rechecks every row's budget.
    pub fn load(dir: &Path) -> Result<Self> {
        let mut rows = Vec::new();
        for meta in read_manifest(&dir.join("manifest.jsonl"))? {
            let delta = io::load(&dir.join(&meta.path_to_delta))?.into_data();
            let norm = meta.norm.of(&delta);
            let slack = match meta.norm {
                Norm::Linf => 0.0,
                Norm::L2 => 1e-6,
            };
            if norm > meta.budget + slack {
                return Err(Error::Checkpoint(format!(
                    "{}: {} norm {norm} exceeds budget {}",
                    meta.utt_id, meta.norm, meta.budget
                )));
            }
            rows.push(AttackRow { meta, delta });
        }
        Ok(Self { rows })
    }
}

fn attack_one(
    asr: &AsrModel,
    corpus: &Corpus,
    utt: &Utterance,
    cfg: &OfflineConfig,
) -> Result<AttackRow> {
    let (norm, epsilon, iterations) = cfg
        .grid
        .sample(&mut rng_for(cfg.seed, &format!("offline/{}", utt.id)));
    let target = corpus.target_for(utt, cfg.seed)?;
    let scale = corpus.signal_scale();
    let budget = epsilon * scale;
    let spec = AttackSpec::pgd(norm, budget, iterations, Mode::Targeted)?;
    let seed = attack_seed(cfg.seed, &utt.id);
    let out = pgd(
        &ModelChain::new(asr),
        &utt.waveform,
        &target.labels,
        &spec,
        seed,
    )?;
    Ok(AttackRow {
        meta: ManifestRow {
            utt_id: utt.id.clone(),
            norm,
            epsilon,
            budget,
            signal_scale: scale,
            iterations,
            seed,
            path_to_delta: format!("delta/{}.aten", utt.id),
            target_text: target.words.join(" "),
        },
        delta: out.delta,
    })
}

/// Targeted PGD against the bare recognizer on each utterance of `split`,
/// with the attack setting drawn from the grid per utterance. Failed
/// rows are logged and dropped.
pub fn generate_offline_attacks(
    asr: &AsrModel,
    corpus: &Corpus,
    split: &[Utterance],
    cfg: &OfflineConfig,
) -> Result<AttackDataset> {
    cfg.grid.validate()?;
    let split = match cfg.max_utterances {
        0 => split,
        n => &split[..n.min(split.len())],
    };
    let results: Vec<Result<AttackRow>> = split
        .par_iter()
        .map(|u| attack_one(asr, corpus, u, cfg))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    for (u, r) in split.iter().zip(results) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => log::warn!("offline attack on {} skipped: {e}", u.id),
        }
    }
    if rows.is_empty() && !split.is_empty() {
        return Err(Error::Empty("offline attack dataset"));
    }
    Ok(AttackDataset { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid() {
        let g = AttackGrid::default();
        assert_eq!(g.l2, [0.2, 0.5, 1.5, 1.9]);
        assert_eq!(g.linf, [0.001, 0.01, 0.1]);
        assert_eq!(g.iterations, [10, 20, 50, 100, 200]);
        assert!(g.validate().is_ok());
    }

    #[test]
    fn single_family_grid() {
        let g = AttackGrid {
            norm_weights: NormWeights { linf: 1.0, l2: 0.0 },
            l2: vec![],
            ..AttackGrid::default()
        };
        g.validate().unwrap();
        let mut rng = rng_for(1, "t");
        assert!((0..50).all(|_| g.sample(&mut rng).0 == Norm::Linf));
    }
}
