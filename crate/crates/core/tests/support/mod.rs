//! Independent oracles shared by the integration and acceptance suites.
#![allow(dead_code, clippy::needless_range_loop)]

use advspeech::tensor::{Tape, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_vec(rng: &mut ChaCha8Rng, n: usize, scale: f32) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Max over inputs of `max_i |analytic_i − numeric_i| / max(max_i |analytic_i|, 1e-6)`.
///
/// `build` maps the input vars to an output var; the scalar probed is
/// `Σ w ⊙ output` with fixed random weights, summed in f64 for the
/// numeric side, differentiated with a five-point stencil.
pub fn fd_check<F, E>(inputs: &[(Vec<usize>, Vec<f32>)], h: f32, seed: u64, build: F) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Result<Var<'t>, E>,
    E: std::fmt::Debug,
{
    // analytic
    let tape = Tape::new();
    let vars: Vec<Var> = inputs
        .iter()
        .map(|(s, d)| tape.input(s.clone(), d.clone(), true).unwrap())
        .collect();
    let out = build(&tape, &vars).unwrap();
    let mut r = rng(seed);
    let weights = rand_vec(&mut r, out.numel(), 1.0);
    let w = tape.input(out.shape(), weights.clone(), false).unwrap();
    let loss = out.mul(w).unwrap().sum().unwrap();
    let grads = tape.backward(loss).unwrap();
    let analytic: Vec<Vec<f32>> = vars.iter().map(|v| grads.wrt(*v)).collect();

    let eval = |inputs: &[(Vec<usize>, Vec<f32>)]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = inputs
            .iter()
            .map(|(s, d)| tape.input(s.clone(), d.clone(), false).unwrap())
            .collect();
        let out = build(&tape, &vars).unwrap().value();
        out.iter()
            .zip(&weights)
            .map(|(o, w)| *o as f64 * *w as f64)
            .sum()
    };

    let mut worst = 0.0f64;
    for (which, (_, data)) in inputs.iter().enumerate() {
        let scale = analytic[which]
            .iter()
            .fold(0.0f64, |m, g| m.max(g.abs() as f64))
            .max(1e-6);
        for i in 0..data.len() {
            let at = |d: f32| {
                let mut shifted = inputs.to_vec();
                shifted[which].1[i] += d;
                eval(&shifted)
            };
            // five-point central stencil
            let numeric =
                (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h as f64);
            let err = (numeric - analytic[which][i] as f64).abs() / scale;
            worst = worst.max(err);
        }
    }
    worst
}

/// Textbook cross-correlation with explicit bounds checks.
#[allow(clippy::too_many_arguments)]
pub fn naive_conv1d(
    input: &[f32],
    kernel: &[f32],
    c_in: usize,
    c_out: usize,
    k: usize,
    len: usize,
    stride: usize,
    dilation: usize,
    padding: usize,
) -> Vec<f32> {
    let padded = len + 2 * padding;
    let span = dilation * (k - 1) + 1;
    let len_out = (padded - span) / stride + 1;
    let mut out = vec![0.0f32; c_out * len_out];
    for co in 0..c_out {
        for ci in 0..c_in {
            for tap in 0..k {
                for t in 0..len_out {
                    let pos = (t * stride + tap * dilation) as isize - padding as isize;
                    if pos < 0 || pos >= len as isize {
                        continue;
                    }
                    let w = kernel[(co * c_in + ci) * k + tap];
                    if w == 0.0 {
                        continue;
                    }
                    out[co * len_out + t] += w * input[ci * len + pos as usize];
                }
            }
        }
    }
    out
}

/// Per-frame DFT magnitudes in f64: `frames × (frame_len/2 + 1)`.
pub fn naive_stft_mag(x: &[f32], frame_len: usize, shift: usize, window: &[f64]) -> Vec<Vec<f64>> {
    let frames = 1 + (x.len() - frame_len) / shift;
    let bins = frame_len / 2 + 1;
    (0..frames)
        .map(|f| {
            (0..bins)
                .map(|k| {
                    let (mut re, mut im) = (0.0f64, 0.0f64);
                    for n in 0..frame_len {
                        let v = x[f * shift + n] as f64 * window[n];
                        let ang = 2.0 * std::f64::consts::PI * (k * n) as f64 / frame_len as f64;
                        re += v * ang.cos();
                        im -= v * ang.sin();
                    }
                    (re * re + im * im).sqrt()
                })
                .collect()
        })
        .collect()
}

pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Plain quadratic Levenshtein distance over tokens.
pub fn dp_levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    for i in 1..=a.len() {
        let mut cur = vec![i; b.len() + 1];
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        prev = cur;
    }
    prev[b.len()]
}

pub fn tiny_corpus_config() -> advspeech::corpus::CorpusConfig {
    advspeech::corpus::CorpusConfig {
        vocab_size: 8,
        n_train: 32,
        n_test: 8,
        words_min: 2,
        words_max: 3,
        ..Default::default()
    }
}

pub fn tiny_corpus() -> advspeech::corpus::Corpus {
    advspeech::corpus::synthesize_corpus(&tiny_corpus_config()).unwrap()
}

/// Small recognizer trained briefly on [`tiny_corpus`].
pub fn tiny_asr(corpus: &advspeech::corpus::Corpus) -> advspeech::asr::AsrModel {
    use advspeech::asr::{train, AsrConfig, AsrModel, TrainConfig};
    let cfg = AsrConfig {
        channels: 16,
        ..AsrConfig::default()
    };
    let mut m = AsrModel::new(cfg, corpus.vocab.clone(), 1).unwrap();
    let tc = TrainConfig {
        epochs: 3,
        average_last: 0,
        ..Default::default()
    };
    train(&mut m, &corpus.train, &tc).unwrap();
    m
}
