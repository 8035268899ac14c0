//! Word error rate, the benign/GT/TGT protocol and summary statistics.

mod eval;

pub use eval::{evaluate_cell, CellOptions, Target, UttOutcome, WerReport};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Lowercases, drops punctuation other than `$`, splits on whitespace.
pub fn normalize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.chars()
                .filter(|c| c.is_alphanumeric() || *c == '$')
                .flat_map(char::to_lowercase)
                .collect::<String>()
        })
        .filter(|w| !w.is_empty())
        .collect()
}

/// Edit counts of one alignment, poolable across utterances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorCounts {
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub ref_len: usize,
}

impl ErrorCounts {
    pub fn errors(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// Percentage; `None` on an empty pooled reference.
    pub fn wer(&self) -> Option<f64> {
        (self.ref_len > 0).then(|| 100.0 * self.errors() as f64 / self.ref_len as f64)
    }
}

impl std::ops::AddAssign for ErrorCounts {
    fn add_assign(&mut self, o: Self) {
        self.substitutions += o.substitutions;
        self.insertions += o.insertions;
        self.deletions += o.deletions;
        self.ref_len += o.ref_len;
    }
}

/// Levenshtein alignment with unit costs. Among equal-cost alignments the
/// backtrace prefers a substitution over an insertion/deletion pair.
pub fn align<S: AsRef<str>, T: AsRef<str>>(
    reference: &[S],
    hypothesis: &[T],
) -> Result<ErrorCounts> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diff = usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            d[i * w + j] = (d[(i - 1) * w + j - 1] + diff)
                .min(d[(i - 1) * w + j] + 1)
                .min(d[i * w + j - 1] + 1);
        }
    }
    let mut c = ErrorCounts {
        ref_len: n,
        ..Default::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let diff = usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            if here == d[(i - 1) * w + j - 1] + diff {
                c.substitutions += diff;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            c.deletions += 1;
            i -= 1;
        } else {
            c.insertions += 1;
            j -= 1;
        }
    }
    Ok(c)
}

/// `(percentage, S, I, D)`.
pub fn wer<S: AsRef<str>, T: AsRef<str>>(
    reference: &[S],
    hypothesis: &[T],
) -> Result<(f64, usize, usize, usize)> {
    let c = align(reference, hypothesis)?;
    Ok((
        c.wer().expect("non-empty"),
        c.substitutions,
        c.insertions,
        c.deletions,
    ))
}

/// The four transcripts behind one evaluated utterance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptSet {
    pub actual: Vec<String>,
    pub benign: Vec<String>,
    pub target: Option<Vec<String>>,
    pub adversarial: Option<Vec<String>>,
}

impl TranscriptSet {
    pub fn benign_counts(&self) -> Result<ErrorCounts> {
        align(&self.actual, &self.benign)
    }

    pub fn gt_counts(&self) -> Result<Option<ErrorCounts>> {
        self.adversarial
            .as_ref()
            .map(|a| align(&self.actual, a))
            .transpose()
    }

    pub fn tgt_counts(&self) -> Result<Option<ErrorCounts>> {
        match (&self.target, &self.adversarial) {
            (Some(t), Some(a)) => align(t, a).map(Some),
            _ => Ok(None),
        }
    }
}

/// Min, quartiles and max by nearest rank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub n: usize,
}

/// Nearest-rank percentile: the value at 1-based rank `ceil(p·n)`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Some(BoxStats {
        min: v[0],
        q1: nearest_rank(&v, 0.25),
        median: nearest_rank(&v, 0.5),
        q3: nearest_rank(&v, 0.75),
        max: v[v.len() - 1],
        n: v.len(),
    })
}

/// One GT WER observation for the summary.
#[derive(Debug, Clone, PartialEq)]
pub struct Setting {
    pub system: String,
    pub epsilon: f32,
    pub gt_wer: f64,
}

/// Groups GT WERs by system (first-seen order) and summarizes each,
/// skipping settings whose budget equals `exclude_epsilon`.
pub fn summarize_boxplot(
    settings: &[Setting],
    exclude_epsilon: Option<f32>,
) -> Vec<(String, BoxStats)> {
    let mut groups: Vec<(String, Vec<f64>)> = Vec::new();
    for s in settings {
        if exclude_epsilon.is_some_and(|e| (s.epsilon - e).abs() <= 1e-6 * e.abs().max(1.0)) {
            continue;
        }
        match groups.iter_mut().find(|(name, _)| *name == s.system) {
            Some((_, v)) => v.push(s.gt_wer),
            None => groups.push((s.system.clone(), vec![s.gt_wer])),
        }
    }
    groups
        .into_iter()
        .filter_map(|(name, v)| box_stats(&v).map(|b| (name, b)))
        .collect()
}
