use serde::{Deserialize, Serialize};

use super::stft::{stft_magnitude, StftConfig, StftPlan, Window};
use crate::tensor::{Tensor, Var, EPS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MrStftConfig {
    pub resolutions: Vec<StftConfig>,
}

impl Default for MrStftConfig {
    fn default() -> Self {
        let r = |frame_len, frame_shift| StftConfig {
            frame_len,
            frame_shift,
            window: Window::Hann,
        };
        Self {
            resolutions: vec![r(64, 16), r(128, 32), r(32, 8)],
        }
    }
}

impl MrStftConfig {
    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return Err(Error::Config(
                "MR-STFT needs at least one resolution".into(),
            ));
        }
        for (i, r) in self.resolutions.iter().enumerate() {
            r.validate()?;
            if self.resolutions[..i].contains(r) {
                return Err(Error::Config(format!("duplicate MR-STFT resolution {r:?}")));
            }
        }
        Ok(())
    }

    pub fn max_frame_len(&self) -> usize {
        self.resolutions
            .iter()
            .map(|r| r.frame_len)
            .max()
            .unwrap_or(0)
    }
}

/// Magnitude of the fixed reference `x` as a constant, plus its Frobenius norm.
fn reference_magnitude<'t>(plan: &StftPlan, x: &[f32], like: Var<'t>) -> Result<(Var<'t>, f32)> {
    let tape = like.tape();
    let xv = tape.constant(&Tensor::from_vec(x.to_vec())?);
    let m = stft_magnitude(plan, xv)?;
    let norm = m.with_value(|v| v.iter().map(|a| (*a as f64).powi(2)).sum::<f64>().sqrt()) as f32;
    Ok((m, norm))
}

fn check_lengths(x: &[f32], x_hat: Var<'_>) -> Result<()> {
    if x.len() != x_hat.numel() {
        return Err(Error::LengthMismatch(x.len(), x_hat.numel()));
    }
    Ok(())
}

/// `‖ |X| − |X̂| ‖_F / ‖ |X| ‖_F`, differentiable in `x_hat`.
pub fn spectral_convergence<'t>(plan: &StftPlan, x: &[f32], x_hat: Var<'t>) -> Result<Var<'t>> {
    check_lengths(x, x_hat)?;
    let (mx, norm) = reference_magnitude(plan, x, x_hat)?;
    if norm <= EPS {
        return Err(Error::ZeroReference);
    }
    let mh = stft_magnitude(plan, x_hat)?;
    let num = mh.sub(mx)?.square()?.sum()?.sqrt()?;
    Ok(num.mul_scalar(1.0 / norm)?)
}

/// Mean absolute log-magnitude difference over all time-frequency bins.
pub fn log_magnitude_loss<'t>(plan: &StftPlan, x: &[f32], x_hat: Var<'t>) -> Result<Var<'t>> {
    check_lengths(x, x_hat)?;
    let (mx, _) = reference_magnitude(plan, x, x_hat)?;
    let mh = stft_magnitude(plan, x_hat)?;
    Ok(mx.log()?.sub(mh.log()?)?.abs()?.mean()?)
}

/// Sum over resolutions of spectral convergence plus log-magnitude loss.
#[derive(Debug, Clone)]
pub struct MrStftLoss {
    plans: Vec<StftPlan>,
}

impl MrStftLoss {
    pub fn new(cfg: &MrStftConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            plans: cfg
                .resolutions
                .iter()
                .map(|r| StftPlan::new(*r))
                .collect::<Result<_>>()?,
        })
    }

    pub fn loss<'t>(&self, x: &[f32], x_hat: Var<'t>) -> Result<Var<'t>> {
        check_lengths(x, x_hat)?;
        let mut total: Option<Var<'t>> = None;
        for plan in &self.plans {
            let term =
                spectral_convergence(plan, x, x_hat)?.add(log_magnitude_loss(plan, x, x_hat)?)?;
            total = Some(match total {
                Some(t) => t.add(term)?,
                None => term,
            });
        }
        Ok(total.expect("at least one resolution"))
    }

    /// Loss value without gradient bookkeeping.
    pub fn value(&self, x: &[f32], x_hat: &[f32]) -> Result<f32> {
        let tape = crate::tensor::Tape::new();
        let xh = tape.input(vec![x_hat.len()], x_hat.to_vec(), false)?;
        Ok(self.loss(x, xh)?.item())
    }
}

pub fn mrstft_loss<'t>(cfg: &MrStftConfig, x: &[f32], x_hat: Var<'t>) -> Result<Var<'t>> {
    MrStftLoss::new(cfg)?.loss(x, x_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tape;

    fn signal(n: usize, seed: u32) -> Vec<f32> {
        (0..n)
            .map(|i| (i as f32 * 0.61 + seed as f32).sin() * 0.3 + (i as f32 * 0.13).cos() * 0.2)
            .collect()
    }

    fn plan() -> StftPlan {
        StftPlan::new(StftConfig::new(32, 8, Window::Hann).unwrap()).unwrap()
    }

    fn eval<F>(x_hat: &[f32], f: F) -> Result<f32>
    where
        F: for<'t> Fn(Var<'t>) -> Result<Var<'t>>,
    {
        let tape = Tape::new();
        let v = tape.input(vec![x_hat.len()], x_hat.to_vec(), false)?;
        Ok(f(v)?.item())
    }

    #[test]
    fn spectral_convergence_identities() {
        let p = plan();
        let x = signal(96, 1);
        assert_eq!(eval(&x, |v| spectral_convergence(&p, &x, v)).unwrap(), 0.0);
        let zero = vec![0.0; 96];
        let one = eval(&zero, |v| spectral_convergence(&p, &x, v)).unwrap();
        assert!((one - 1.0).abs() < 1e-6);
        assert!(matches!(
            eval(&x, |v| spectral_convergence(&p, &zero, v)),
            Err(Error::ZeroReference)
        ));
    }

    #[test]
    fn log_magnitude_identities() {
        let p = plan();
        let x = signal(96, 2);
        assert_eq!(eval(&x, |v| log_magnitude_loss(&p, &x, v)).unwrap(), 0.0);
        let doubled: Vec<f32> = x.iter().map(|v| 2.0 * v).collect();
        let l = eval(&doubled, |v| log_magnitude_loss(&p, &x, v)).unwrap();
        assert!((l - 2f32.ln()).abs() < 1e-5, "{l}");
    }

    #[test]
    fn mrstft_zero_on_equal_magnitudes() {
        let cfg = MrStftConfig::default();
        let x = signal(256, 3);
        let neg: Vec<f32> = x.iter().map(|v| -v).collect();
        let loss = MrStftLoss::new(&cfg).unwrap();
        assert_eq!(loss.value(&x, &x).unwrap(), 0.0);
        assert!(loss.value(&x, &neg).unwrap().abs() < 1e-6);
        assert!(loss.value(&x, &signal(256, 9)).unwrap() > 0.0);
    }

    #[test]
    fn single_resolution_is_sum_of_terms() {
        let r = StftConfig::new(32, 8, Window::Hann).unwrap();
        let cfg = MrStftConfig {
            resolutions: vec![r],
        };
        let x = signal(128, 4);
        let y = signal(128, 5);
        let p = StftPlan::new(r).unwrap();
        let sc = eval(&y, |v| spectral_convergence(&p, &x, v)).unwrap();
        let lm = eval(&y, |v| log_magnitude_loss(&p, &x, v)).unwrap();
        let total = MrStftLoss::new(&cfg).unwrap().value(&x, &y).unwrap();
        assert!((total - (sc + lm)).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(MrStftConfig {
            resolutions: vec![]
        }
        .validate()
        .is_err());
        let r = StftConfig::new(32, 8, Window::Hann).unwrap();
        assert!(MrStftConfig {
            resolutions: vec![r, r]
        }
        .validate()
        .is_err());
        assert!(MrStftConfig::default().validate().is_ok());
        assert_eq!(MrStftConfig::default().max_frame_len(), 128);
    }

    #[test]
    fn length_mismatch() {
        let p = plan();
        let x = signal(96, 1);
        assert!(matches!(
            eval(&signal(97, 1), |v| spectral_convergence(&p, &x, v)),
            Err(Error::LengthMismatch(96, 97))
        ));
    }
}
