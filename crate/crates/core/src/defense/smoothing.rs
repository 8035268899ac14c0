use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seed::{derive_seed, rng_for};
use crate::tensor::{Tensor, Var};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedPolicy {
    /// New noise on every forward pass.
    FreshPerCall,
    /// One noise draw per utterance, reused by every pass.
    FixedPerUtterance,
}

/// Additive Gaussian input noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    pub sigma: f32,
    #[serde(default = "default_policy")]
    pub seed_policy: SeedPolicy,
}

fn default_policy() -> SeedPolicy {
    SeedPolicy::FreshPerCall
}

impl SmoothingConfig {
    pub fn new(sigma: f32) -> Result<Self> {
        let cfg = Self {
            sigma,
            seed_policy: SeedPolicy::FreshPerCall,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::Config(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Noise seed for pass number `call` on an utterance seeded with `base`.
    pub fn call_seed(&self, base: u64, call: u64) -> u64 {
        match self.seed_policy {
            SeedPolicy::FreshPerCall => derive_seed(base, &format!("noise-{call}")),
            SeedPolicy::FixedPerUtterance => derive_seed(base, "noise"),
        }
    }

    pub fn noise(&self, len: usize, seed: u64) -> Vec<f32> {
        if self.sigma == 0.0 {
            return vec![0.0; len];
        }
        let normal = Normal::new(0.0f32, self.sigma).expect("validated sigma");
        let mut rng = rng_for(seed, "smoothing");
        (0..len).map(|_| normal.sample(&mut rng)).collect()
    }
}

/// `x + σ·η`, `η ~ N(0, I)` drawn from `seed`. Exact identity at `σ = 0`.
pub fn smooth(x: &[f32], cfg: &SmoothingConfig, seed: u64) -> Vec<f32> {
    if cfg.sigma == 0.0 {
        return x.to_vec();
    }
    x.iter()
        .zip(cfg.noise(x.len(), seed))
        .map(|(a, n)| a + n)
        .collect()
}

/// Tape version of [`smooth`]; the noise is a constant.
pub fn smooth_var<'t>(x: Var<'t>, cfg: &SmoothingConfig, seed: u64) -> Result<Var<'t>> {
    if cfg.sigma == 0.0 {
        return Ok(x);
    }
    let noise = Tensor::new(x.shape(), cfg.noise(x.numel(), seed))?;
    Ok(x.add(x.tape().constant(&noise))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    #[test]
    fn zero_sigma_is_identity() {
        let x = vec![0.25, -1.0, 3e-9, 0.0];
        let cfg = SmoothingConfig::new(0.0).unwrap();
        assert_eq!(smooth(&x, &cfg, 9), x);
        let tape = Tape::new();
        let v = tape.input(vec![4], x.clone(), true).unwrap();
        assert_eq!(smooth_var(v, &cfg, 9).unwrap().id(), v.id());
    }

    #[test]
    fn seeded_and_policy_aware() {
        let cfg = SmoothingConfig::new(0.1).unwrap();
        let x = vec![0.0; 16];
        assert_eq!(smooth(&x, &cfg, 1), smooth(&x, &cfg, 1));
        assert_ne!(smooth(&x, &cfg, 1), smooth(&x, &cfg, 2));
        assert_ne!(cfg.call_seed(5, 0), cfg.call_seed(5, 1));
        let fixed = SmoothingConfig {
            seed_policy: SeedPolicy::FixedPerUtterance,
            ..cfg
        };
        assert_eq!(fixed.call_seed(5, 0), fixed.call_seed(5, 1));
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(SmoothingConfig::new(-0.1).is_err());
        assert!(SmoothingConfig::new(f32::NAN).is_err());
    }
}
