use serde::{Deserialize, Serialize};

use crate::tensor::{Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Rectangular,
    Hann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StftConfig {
    pub frame_len: usize,
    pub frame_shift: usize,
    pub window: Window,
}

impl StftConfig {
    pub fn new(frame_len: usize, frame_shift: usize, window: Window) -> Result<Self> {
        let cfg = Self {
            frame_len,
            frame_shift,
            window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_shift == 0 || self.frame_shift > self.frame_len {
            return Err(Error::Config(format!(
                "frame_shift must be in 1..={}, got {}",
                self.frame_len, self.frame_shift
            )));
        }
        if !self.frame_len.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "frame_len must be even, got {}",
                self.frame_len
            )));
        }
        Ok(())
    }

    pub fn bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    /// Number of frames for a signal of `len` samples.
    pub fn frames(&self, len: usize) -> Result<usize> {
        if len < self.frame_len {
            return Err(Error::TooShort {
                needed: self.frame_len,
                got: len,
            });
        }
        Ok(1 + (len - self.frame_len) / self.frame_shift)
    }

    /// Smallest signal length producing exactly `frames` frames.
    pub fn samples_for(&self, frames: usize) -> usize {
        self.frame_len + (frames.max(1) - 1) * self.frame_shift
    }
}

/// Window and DFT matrices for one [`StftConfig`], built once and reused.
#[derive(Debug, Clone)]
pub struct StftPlan {
    cfg: StftConfig,
    window: Tensor,
    cos: Tensor,
    neg_sin: Tensor,
}

impl StftPlan {
    pub fn new(cfg: StftConfig) -> Result<Self> {
        cfg.validate()?;
        let (n, bins) = (cfg.frame_len, cfg.bins());
        let window: Vec<f32> = (0..n)
            .map(|i| match cfg.window {
                Window::Rectangular => 1.0,
                // periodic Hann
                Window::Hann => {
                    (0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / n as f64).cos()) as f32
                }
            })
            .collect();
        let mut cos = Vec::with_capacity(n * bins);
        let mut neg_sin = Vec::with_capacity(n * bins);
        for t in 0..n {
            for k in 0..bins {
                // reduce the phase index first to keep the angle small
                let ang = std::f64::consts::TAU * ((t * k) % n) as f64 / n as f64;
                cos.push(ang.cos() as f32);
                neg_sin.push(-ang.sin() as f32);
            }
        }
        Ok(Self {
            cfg,
            window: Tensor::new(vec![n], window)?,
            cos: Tensor::new(vec![n, bins], cos)?,
            neg_sin: Tensor::new(vec![n, bins], neg_sin)?,
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.cfg
    }
}

/// Real and imaginary parts, each `[frames × bins]`.
pub fn stft<'t>(plan: &StftPlan, x: Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
    let len = x.numel();
    plan.cfg.frames(len)?;
    let tape = x.tape();
    let frames = x
        .reshape(vec![len])?
        .frames(plan.cfg.frame_len, plan.cfg.frame_shift)?;
    let windowed = match plan.cfg.window {
        Window::Rectangular => frames,
        Window::Hann => frames.mul(tape.constant(&plan.window))?,
    };
    let re = windowed.matmul(tape.constant(&plan.cos))?;
    let im = windowed.matmul(tape.constant(&plan.neg_sin))?;
    Ok((re, im))
}

pub fn stft_magnitude<'t>(plan: &StftPlan, x: Var<'t>) -> Result<Var<'t>> {
    let (re, im) = stft(plan, x)?;
    Ok(re.magnitude(im)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn mag(cfg: StftConfig, x: Vec<f32>) -> (Vec<usize>, Vec<f32>) {
        let plan = StftPlan::new(cfg).unwrap();
        let tape = Tape::new();
        let xv = tape.input(vec![x.len()], x, false).unwrap();
        let m = stft_magnitude(&plan, xv).unwrap();
        (m.shape(), m.value())
    }

    #[test]
    fn config_invariants() {
        assert!(StftConfig::new(64, 0, Window::Hann).is_err());
        assert!(StftConfig::new(64, 65, Window::Hann).is_err());
        assert!(StftConfig::new(63, 16, Window::Hann).is_err());
        let c = StftConfig::new(64, 16, Window::Hann).unwrap();
        assert_eq!(c.bins(), 33);
        assert_eq!(c.frames(64).unwrap(), 1);
        assert_eq!(c.frames(100).unwrap(), 3);
        assert_eq!(c.samples_for(3), 96);
        assert!(matches!(c.frames(10), Err(Error::TooShort { .. })));
    }

    #[test]
    fn zero_signal_has_zero_magnitude() {
        let (shape, m) = mag(
            StftConfig::new(32, 8, Window::Hann).unwrap(),
            vec![0.0; 100],
        );
        assert_eq!(shape, vec![9, 17]);
        assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bin_aligned_cosine() {
        let n = 64;
        let k = 5;
        let x: Vec<f32> = (0..n)
            .map(|i| (std::f64::consts::TAU * (k * i) as f64 / n as f64).cos() as f32)
            .collect();
        let (_, m) = mag(StftConfig::new(n, n, Window::Rectangular).unwrap(), x);
        for (bin, v) in m.iter().enumerate() {
            let want = if bin == k { n as f32 / 2.0 } else { 0.0 };
            assert!((v - want).abs() < 1e-4, "bin {bin}: {v}");
        }
    }

    #[test]
    fn linearity() {
        let plan = StftPlan::new(StftConfig::new(32, 8, Window::Hann).unwrap()).unwrap();
        let a: Vec<f32> = (0..80).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..80).map(|i| (i as f32 * 1.91).cos() * 0.5).collect();
        let ab: Vec<f32> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let tape = Tape::new();
        let run = |x: &[f32]| {
            let v = tape.input(vec![x.len()], x.to_vec(), false).unwrap();
            let (re, im) = stft(&plan, v).unwrap();
            (re.value(), im.value())
        };
        let (ra, ia) = run(&a);
        let (rb, ib) = run(&b);
        let (rab, iab) = run(&ab);
        for i in 0..ra.len() {
            assert!((ra[i] + rb[i] - rab[i]).abs() < 1e-5);
            assert!((ia[i] + ib[i] - iab[i]).abs() < 1e-5);
        }
    }
}
