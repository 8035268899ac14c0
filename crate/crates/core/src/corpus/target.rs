use rand::Rng;

use super::{Corpus, CorpusConfig};
use crate::asr::{Utterance, SIL};
use crate::seed::rng_for;
use crate::wer::Target;
use crate::{Error, Result};

/// Picks a target transcript of similar length from `pool`, never equal
/// to `words`. Starts at ±20% of the word count and widens by 10% steps.
pub fn assign_target(
    utt_id: &str,
    words: &[String],
    pool: &[Vec<String>],
    seed: u64,
) -> Result<Vec<String>> {
    let usable: Vec<&Vec<String>> = pool
        .iter()
        .filter(|t| t.as_slice() != words && !t.is_empty())
        .collect();
    if usable.is_empty() {
        return Err(Error::Empty("target pool"));
    }
    let n = words.len() as f64;
    let longest = usable.iter().map(|t| t.len()).max().unwrap_or(0) as f64;
    let mut rng = rng_for(seed, &format!("target/{utt_id}"));
    let mut step = 0;
    loop {
        let tol = ((0.2 + 0.1 * step as f64) * n).round();
        let candidates: Vec<&&Vec<String>> = usable
            .iter()
            .filter(|t| (t.len() as f64 - n).abs() <= tol)
            .collect();
        if !candidates.is_empty() {
            return Ok(candidates[rng.gen_range(0..candidates.len())].to_vec());
        }
        if tol > n.max(longest) {
            // unreachable: at this width every usable transcript qualifies
            return Err(Error::Empty("target candidates"));
        }
        step += 1;
    }
}

/// Frame labels for `target` over `n_frames` frames at the corpus word
/// cadence: words of `word_frames` frames separated by evenly spread
/// silence, truncated if they do not fit.
pub fn render_target(target: &[usize], n_frames: usize, cfg: &CorpusConfig) -> Vec<usize> {
    let mut labels = vec![SIL; n_frames];
    let k = target.len();
    if k == 0 {
        return labels;
    }
    let w = cfg.word_frames;
    let spare = n_frames.saturating_sub(k * w);
    let gap = (spare / (k + 1)).clamp(1, cfg.gap_max);
    let used = k * w + (k - 1) * gap;
    let mut frame = n_frames.saturating_sub(used) / 2;
    for &tok in target {
        if frame + w > n_frames {
            break;
        }
        labels[frame..frame + w].fill(tok);
        frame += w + gap;
    }
    labels
}

impl Corpus {
    /// Target transcript from the training pool plus its frame rendering
    /// over `utt`'s duration.
    pub fn target_for(&self, utt: &Utterance, seed: u64) -> Result<Target> {
        let words = assign_target(&utt.id, &utt.words, &self.train_transcripts(), seed)?;
        let ids = self.vocab.ids(&words)?;
        let labels = render_target(&ids, utt.frame_labels.len(), &self.config);
        Ok(Target { words, labels })
    }
}
