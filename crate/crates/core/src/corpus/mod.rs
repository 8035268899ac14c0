//! Synthetic speech-like corpus with exact frame alignments.
//!
//! Every word is a fixed two-tone motif lasting `word_frames` posterior
//! frames. Utterances are words separated by silent gaps, normalized to a
//! fixed RMS and mixed with white noise at a fixed SNR.

mod offline;
mod store;
mod target;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub use offline::{
    generate_offline_attacks, AttackDataset, AttackGrid, AttackPair, AttackRow, NormWeights,
    OfflineConfig,
};
pub use target::{assign_target, render_target};

use crate::asr::{Utterance, Vocab, SIL};
use crate::seed::rng_for;
use crate::signal::{StftConfig, Window};
use crate::{Error, Result};

/// Amplitude the nominal attack budgets are calibrated against.
pub const REFERENCE_RMS: f32 = 0.1;

const MOTIF_HZ: [f32; 12] = [
    375.0, 625.0, 875.0, 1125.0, 1375.0, 1625.0, 1875.0, 2125.0, 2375.0, 2625.0, 2875.0, 3125.0,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    /// Including the silence token.
    pub vocab_size: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub words_min: usize,
    pub words_max: usize,
    pub word_frames: usize,
    pub gap_min: usize,
    pub gap_max: usize,
    pub sample_rate: u32,
    pub frame_len: usize,
    pub frame_shift: usize,
    pub rms: f32,
    pub snr_db: f32,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            vocab_size: 20,
            n_train: 500,
            n_test: 100,
            words_min: 3,
            words_max: 6,
            word_frames: 6,
            gap_min: 2,
            gap_max: 4,
            sample_rate: 8000,
            frame_len: 64,
            frame_shift: 16,
            rms: REFERENCE_RMS,
            snr_db: 20.0,
            seed: 0,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        Vocab::phonetic(self.vocab_size)?;
        StftConfig::new(self.frame_len, self.frame_shift, Window::Hann)?;
        let bad = |msg: String| Err(Error::Config(msg));
        if self.words_min == 0 || self.words_min > self.words_max {
            return bad(format!(
                "need 1 <= words_min <= words_max, got {}..{}",
                self.words_min, self.words_max
            ));
        }
        if self.gap_min == 0 || self.gap_min > self.gap_max {
            return bad(format!(
                "need 1 <= gap_min <= gap_max, got {}..{}",
                self.gap_min, self.gap_max
            ));
        }
        if self.word_frames == 0 {
            return bad("word_frames must be positive".into());
        }
        if self.n_train == 0 {
            return bad("n_train must be positive".into());
        }
        if !(self.rms > 0.0 && self.rms <= 0.5) {
            return bad(format!("rms must be in (0, 0.5], got {}", self.rms));
        }
        if !self.snr_db.is_finite() {
            return bad("snr_db must be finite".into());
        }
        let top = MOTIF_HZ[MOTIF_HZ.len() - 1];
        if (self.sample_rate as f32) < 2.0 * top + 1.0 {
            return bad(format!(
                "sample_rate {} cannot represent {top} Hz motifs",
                self.sample_rate
            ));
        }
        Ok(())
    }

    pub fn frontend(&self) -> StftConfig {
        StftConfig {
            frame_len: self.frame_len,
            frame_shift: self.frame_shift,
            window: Window::Hann,
        }
    }

    /// Sample offset of frame `i`'s word region: frame centres fall inside
    /// `[shift·a + off, shift·b + off)` exactly for frames `a..b`.
    fn segment_offset(&self) -> usize {
        (self.frame_len - self.frame_shift) / 2
    }

    pub fn samples_for(&self, frames: usize) -> usize {
        self.frame_len + (frames - 1) * self.frame_shift
    }
}

/// Two-tone motif per word.
#[derive(Debug, Clone, PartialEq)]
struct Motif {
    hz: [f32; 2],
    phase: [f32; 2],
}

fn motifs(cfg: &CorpusConfig) -> Vec<Motif> {
    let mut pairs = Vec::new();
    for i in 0..MOTIF_HZ.len() {
        for j in i + 2..MOTIF_HZ.len() {
            pairs.push([MOTIF_HZ[i], MOTIF_HZ[j]]);
        }
    }
    let mut rng = rng_for(cfg.seed, "motifs");
    pairs.shuffle(&mut rng);
    pairs
        .into_iter()
        .take(cfg.vocab_size - 1)
        .map(|hz| Motif {
            hz,
            phase: [
                rng.gen_range(0.0..std::f32::consts::TAU),
                rng.gen_range(0.0..std::f32::consts::TAU),
            ],
        })
        .collect()
}

fn render_motif(m: &Motif, len: usize, sample_rate: u32, out: &mut [f32]) {
    let ramp = (len / 6).max(1);
    for (t, o) in out.iter_mut().take(len).enumerate() {
        let edge = t.min(len - 1 - t);
        let env = if edge >= ramp {
            1.0
        } else {
            0.5 - 0.5 * (std::f32::consts::PI * edge as f32 / ramp as f32).cos()
        };
        let time = t as f32 / sample_rate as f32;
        let v: f32 = (0..2)
            .map(|k| (std::f32::consts::TAU * m.hz[k] * time + m.phase[k]).sin())
            .sum();
        *o += env * v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub vocab: Vocab,
    pub train: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

impl Corpus {
    /// `config.rms / REFERENCE_RMS`: multiplies nominal attack budgets.
    pub fn signal_scale(&self) -> f32 {
        self.config.rms / REFERENCE_RMS
    }

    pub fn get(&self, id: &str) -> Option<&Utterance> {
        self.train.iter().chain(&self.test).find(|u| u.id == id)
    }

    pub fn train_transcripts(&self) -> Vec<Vec<String>> {
        self.train.iter().map(|u| u.words.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let frontend = self.config.frontend();
        for u in self.train.iter().chain(&self.test) {
            u.validate(&self.vocab, &frontend)?;
        }
        let mut ids: Vec<&str> = self
            .train
            .iter()
            .chain(&self.test)
            .map(|u| u.id.as_str())
            .collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(
                "utterance ids are not unique across splits".into(),
            ));
        }
        Ok(())
    }
}

fn synthesize_utterance(
    cfg: &CorpusConfig,
    vocab: &Vocab,
    motifs: &[Motif],
    id: String,
) -> Utterance {
    let mut rng = rng_for(cfg.seed, &id);
    let n_words = rng.gen_range(cfg.words_min..=cfg.words_max);
    let ids: Vec<usize> = (0..n_words)
        .map(|_| rng.gen_range(1..vocab.len()))
        .collect();
    let gaps: Vec<usize> = (0..=n_words)
        .map(|_| rng.gen_range(cfg.gap_min..=cfg.gap_max))
        .collect();
    let n_frames: usize = gaps.iter().sum::<usize>() + n_words * cfg.word_frames;
    let n_samples = cfg.samples_for(n_frames);

    let mut labels = vec![SIL; n_frames];
    let mut clean = vec![0.0f32; n_samples];
    let seg_len = cfg.word_frames * cfg.frame_shift;
    let mut frame = gaps[0];
    for (w, &tok) in ids.iter().enumerate() {
        labels[frame..frame + cfg.word_frames].fill(tok);
        let start = frame * cfg.frame_shift + cfg.segment_offset();
        render_motif(
            &motifs[tok - 1],
            seg_len,
            cfg.sample_rate,
            &mut clean[start..start + seg_len],
        );
        frame += cfg.word_frames + gaps[w + 1];
    }

    let rms =
        (clean.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / n_samples as f64).sqrt() as f32;
    let gain = cfg.rms / rms;
    let noise_std = cfg.rms * 10f32.powf(-cfg.snr_db / 20.0);
    let noise = Normal::new(0.0f32, noise_std).expect("finite std");
    let waveform = clean
        .iter()
        .map(|c| (c * gain + noise.sample(&mut rng)).clamp(-1.0, 1.0))
        .collect();
    Utterance {
        id,
        waveform,
        words: vocab.words(&ids),
        frame_labels: labels,
    }
}

/// Deterministic corpus; utterance `k` of a split depends only on the
/// seed and its id.
pub fn synthesize_corpus(cfg: &CorpusConfig) -> Result<Corpus> {
    cfg.validate()?;
    let vocab = Vocab::phonetic(cfg.vocab_size)?;
    let motifs = motifs(cfg);
    let split = |name: &str, n: usize| -> Vec<Utterance> {
        (0..n)
            .map(|k| synthesize_utterance(cfg, &vocab, &motifs, format!("{name}-{k:04}")))
            .collect()
    };
    let corpus = Corpus {
        train: split("train", cfg.n_train),
        test: split("test", cfg.n_test),
        vocab,
        config: cfg.clone(),
    };
    corpus.validate()?;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asr::collapse;

    fn small() -> CorpusConfig {
        CorpusConfig {
            n_train: 20,
            n_test: 5,
            vocab_size: 8,
            seed: 4,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn deterministic_and_aligned() {
        let a = synthesize_corpus(&small()).unwrap();
        let b = synthesize_corpus(&small()).unwrap();
        assert_eq!(a, b);
        for u in a.train.iter().chain(&a.test) {
            assert_eq!(a.vocab.words(&collapse(&u.frame_labels)), u.words);
            assert!(u.words.len() >= 3 && u.words.len() <= 6);
            assert!(u.waveform.iter().all(|v| v.abs() <= 1.0));
        }
        let c = synthesize_corpus(&CorpusConfig { seed: 5, ..small() }).unwrap();
        assert_ne!(a.train[0].waveform, c.train[0].waveform);
    }

    #[test]
    fn level_and_snr() {
        let c = synthesize_corpus(&small()).unwrap();
        for u in &c.train {
            let rms =
                (u.waveform.iter().map(|v| v * v).sum::<f32>() / u.waveform.len() as f32).sqrt();
            // clean at 0.1 plus noise at -20 dB
            assert!((rms - 0.1005).abs() < 0.004, "{rms}");
        }
    }

    #[test]
    fn words_sit_on_their_frames() {
        let cfg = small();
        let c = synthesize_corpus(&cfg).unwrap();
        let u = &c.train[0];
        let first = u.frame_labels.iter().position(|&l| l != SIL).unwrap();
        let start = first * cfg.frame_shift + cfg.segment_offset();
        let energy = |r: std::ops::Range<usize>| {
            u.waveform[r.clone()].iter().map(|v| v * v).sum::<f32>() / r.len() as f32
        };
        assert!(energy(start + 20..start + 70) > 10.0 * energy(0..start - 8));
    }

    #[test]
    fn motifs_are_distinct() {
        let m = motifs(&CorpusConfig {
            vocab_size: 27,
            ..CorpusConfig::default()
        });
        assert_eq!(m.len(), 26);
        for i in 0..m.len() {
            for j in 0..i {
                assert_ne!(m[i].hz, m[j].hz);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            CorpusConfig {
                vocab_size: 1,
                ..small()
            },
            CorpusConfig {
                words_min: 4,
                words_max: 3,
                ..small()
            },
            CorpusConfig {
                gap_min: 0,
                ..small()
            },
            CorpusConfig {
                rms: 0.0,
                ..small()
            },
            CorpusConfig {
                sample_rate: 4000,
                ..small()
            },
        ] {
            assert!(synthesize_corpus(&cfg).is_err(), "{cfg:?}");
        }
    }
}
