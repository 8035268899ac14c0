//! Time-domain masking denoiser in the Conv-TasNet mould: a strided conv
//! encoder, a residual stack of dilated convs producing a sigmoid mask over
//! the encodings, and a transposed-conv decoder.

mod train;

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use train::{train_offline, DenoiserTrainConfig, DenoiserTrainLog};

use crate::checkpoint;
use crate::seed::rng_for;
use crate::tensor::{ParamSet, Tape, Tensor, Var};
use crate::{Error, Result};

/// Anything that maps a waveform to a same-length waveform on the tape.
pub trait Denoiser: Send + Sync {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn forward_with<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>>;
    /// Whether the parameters came out of a training run.
    fn is_pretrained(&self) -> bool;
    fn mark_trained(&mut self, epochs: usize);

    fn forward<'t>(&self, tape: &'t Tape, x: Var<'t>) -> Result<Var<'t>> {
        let params = self.params().bind_frozen(tape);
        self.forward_with(&params, x)
    }

    fn denoise(&self, x: &[f32]) -> Result<Vec<f32>> {
        let tape = Tape::new();
        let xv = tape.input(vec![x.len()], x.to_vec(), false)?;
        Ok(self.forward(&tape, xv)?.value())
    }
}

/// Passes the input through untouched and has no parameters.
#[derive(Debug, Clone, Default)]
pub struct IdentityDenoiser {
    params: ParamSet,
}

impl Denoiser for IdentityDenoiser {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward_with<'t>(&self, _params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        Ok(x)
    }

    fn is_pretrained(&self) -> bool {
        true
    }

    fn mark_trained(&mut self, _epochs: usize) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DenoiserConfig {
    pub enc_dim: usize,
    pub enc_kernel: usize,
    pub enc_stride: usize,
    pub layers: usize,
    pub sep_kernel: usize,
    /// The separator reads `½·ln(encodings² + sep_floor²)`.
    pub sep_floor: f32,
    /// Mask value of the untrained model; the decoder gain compensates.
    pub mask_init: f32,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        Self {
            enc_dim: 32,
            enc_kernel: 16,
            enc_stride: 8,
            layers: 8,
            sep_kernel: 3,
            sep_floor: 1e-3,
            mask_init: 0.5,
        }
    }
}

impl DenoiserConfig {
    /// Encoder width and depth of the LibriSpeech-scale model.
    pub fn paper_shape() -> Self {
        Self {
            enc_dim: 128,
            layers: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.enc_stride == 0 || self.enc_kernel != 2 * self.enc_stride {
            return bad(format!(
                "encoder kernel must be twice the stride, got kernel {} stride {}",
                self.enc_kernel, self.enc_stride
            ));
        }
        if self.enc_dim == 0 {
            return bad("enc_dim must be positive".into());
        }
        if self.sep_kernel.is_multiple_of(2) {
            return bad(format!(
                "separator kernel must be odd, got {}",
                self.sep_kernel
            ));
        }
        if !(self.sep_floor > 0.0 && self.sep_floor.is_finite()) {
            return bad(format!(
                "sep_floor must be positive, got {}",
                self.sep_floor
            ));
        }
        if !(self.mask_init > 0.0 && self.mask_init < 1.0) {
            return bad(format!(
                "mask_init must be in (0, 1), got {}",
                self.mask_init
            ));
        }
        if self.layers > 24 {
            return bad(format!("at most 24 separator layers, got {}", self.layers));
        }
        Ok(())
    }

    pub fn min_len(&self) -> usize {
        self.enc_kernel
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TasNetMeta {
    config: DenoiserConfig,
    trained_epochs: usize,
}

#[derive(Debug, Clone)]
pub struct TasNet {
    config: DenoiserConfig,
    params: ParamSet,
    trained_epochs: usize,
}

/// Orthonormal DCT-II basis rows of length `n`.
fn dct_basis(n: usize) -> Vec<Vec<f32>> {
    (0..n)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            (0..n)
                .map(|t| {
                    (scale * (std::f64::consts::PI * (t as f64 + 0.5) * k as f64 / n as f64).cos())
                        as f32
                })
                .collect()
        })
        .collect()
}

impl TasNet {
    /// The first `enc_kernel` encoder rows are the DCT basis and the decoder
    /// is the matching synthesis, scaled so that the untrained model (mask
    /// `mask_init`) reproduces its input up to rounding when
    /// `enc_dim ≥ enc_kernel`. Rows past the basis get random analysis
    /// filters and silent synthesis.
    pub fn new(config: DenoiserConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (d, k) = (config.enc_dim, config.enc_kernel);
        let basis = dct_basis(k);
        let overlap = (k / config.enc_stride) as f32;
        let gain = 1.0 / (overlap * config.mask_init);
        let mut rng = rng_for(seed, "denoiser-init");
        let mut enc = Vec::with_capacity(d * k);
        let mut dec = Vec::with_capacity(d * k);
        for row in 0..d {
            if row < k {
                enc.extend_from_slice(&basis[row]);
                dec.extend(basis[row].iter().map(|v| v * gain));
            } else {
                let bound = (1.0 / k as f32).sqrt();
                enc.extend((0..k).map(|_| rng.gen_range(-bound..bound)));
                dec.extend(std::iter::repeat_n(0.0, k));
            }
        }
        let mut params = ParamSet::new();
        params.push("encoder.weight", Tensor::new(vec![d, 1, k], enc)?);
        let bound = 0.1 * (6.0 / (d * config.sep_kernel) as f32).sqrt();
        for l in 0..config.layers {
            let w = (0..d * d * config.sep_kernel)
                .map(|_| rng.gen_range(-bound..bound))
                .collect();
            params.push(
                format!("sep{l}.weight"),
                Tensor::new(vec![d, d, config.sep_kernel], w)?,
            );
            params.push(format!("sep{l}.bias"), Tensor::zeros(vec![d, 1]));
        }
        params.push("mask.weight", Tensor::zeros(vec![d, d, 1]));
        let logit = (config.mask_init / (1.0 - config.mask_init)).ln();
        params.push("mask.bias", Tensor::new(vec![d, 1], vec![logit; d])?);
        params.push("decoder.weight", Tensor::new(vec![d, 1, k], dec)?);
        Ok(Self {
            config,
            params,
            trained_epochs: 0,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn trained_epochs(&self) -> usize {
        self.trained_epochs
    }

    /// Left/right reflect padding for an input of `n` samples.
    fn padding(&self, n: usize) -> (usize, usize) {
        let s = self.config.enc_stride;
        (s, s + (s - n % s) % s)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let meta = TasNetMeta {
            config: self.config.clone(),
            trained_epochs: self.trained_epochs,
        };
        checkpoint::save(dir, "denoiser", &self.params, &meta)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let (params, meta): (ParamSet, TasNetMeta) = checkpoint::load(dir, "denoiser")?;
        let mut model = Self::new(meta.config, 0)?;
        if params.names() != model.params.names()
            || params
                .iter()
                .zip(model.params.iter())
                .any(|(a, b)| a.1.shape() != b.1.shape())
        {
            return Err(Error::Checkpoint(format!(
                "{}: parameter layout does not match the recorded config",
                dir.display()
            )));
        }
        model.params = params;
        model.trained_epochs = meta.trained_epochs;
        Ok(model)
    }
}

impl Denoiser for TasNet {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward_with<'t>(&self, params: &[Var<'t>], x: Var<'t>) -> Result<Var<'t>> {
        let n = x.numel();
        if n < self.config.min_len() {
            return Err(Error::TooShort {
                needed: self.config.min_len(),
                got: n,
            });
        }
        let cfg = &self.config;
        let (left, right) = self.padding(n);
        let padded = x.reshape(vec![n])?.pad_reflect(left, right)?;
        let len = padded.numel();
        let enc = padded
            .reshape(vec![1, len])?
            .conv1d(params[0], cfg.enc_stride, 1, 0)?;
        let mut h = enc
            .square()?
            .add_scalar(cfg.sep_floor * cfg.sep_floor)?
            .log()?
            .mul_scalar(0.5)?;
        for l in 0..cfg.layers {
            let dil = 1 << l;
            let pad = dil * (cfg.sep_kernel / 2);
            let branch = h
                .conv1d(params[1 + 2 * l], 1, dil, pad)?
                .add(params[2 + 2 * l])?
                .relu()?;
            h = h.add(branch)?;
        }
        let m = 1 + 2 * cfg.layers;
        let mask = h
            .conv1d(params[m], 1, 1, 0)?
            .add(params[m + 1])?
            .sigmoid()?;
        let out = enc
            .mul(mask)?
            .conv_transpose1d(params[m + 2], cfg.enc_stride, 1, 0)?
            .reshape(vec![len])?
            .slice(left, n)?;
        Ok(out)
    }

    fn is_pretrained(&self) -> bool {
        self.trained_epochs > 0
    }

    fn mark_trained(&mut self, epochs: usize) {
        self.trained_epochs += epochs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(n: usize) -> Vec<f32> {
        (0..n)
            .map(|i| ((i as f32) * 0.37).sin() * 0.2 + ((i as f32) * 1.3).cos() * 0.05)
            .collect()
    }

    #[test]
    fn preserves_length() {
        let d = TasNet::new(DenoiserConfig::default(), 1).unwrap();
        for n in [16, 17, 160, 161, 1024] {
            assert_eq!(d.denoise(&wave(n)).unwrap().len(), n);
        }
        assert!(matches!(d.denoise(&wave(15)), Err(Error::TooShort { .. })));
    }

    #[test]
    fn full_width_init_is_near_identity() {
        let d = TasNet::new(DenoiserConfig::default(), 1).unwrap();
        let x = wave(333);
        let y = d.denoise(&x).unwrap();
        let err = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn mask_in_unit_interval() {
        let d = TasNet::new(DenoiserConfig::default(), 1).unwrap();
        let tape = Tape::new();
        let p = d.params().bind_frozen(&tape);
        let h = tape.input(vec![32, 10], wave(320), false).unwrap();
        let m = h.conv1d(p[17], 1, 1, 0).unwrap().sigmoid().unwrap().value();
        assert!(m.iter().all(|v| *v > 0.0 && *v < 1.0));
    }

    #[test]
    fn paper_shape_preset() {
        let cfg = DenoiserConfig::paper_shape();
        assert_eq!(
            (cfg.enc_dim, cfg.enc_kernel, cfg.enc_stride, cfg.layers),
            (128, 16, 8, 16)
        );
        let d = TasNet::new(cfg, 3).unwrap();
        let x = wave(200);
        let y = d.denoise(&x).unwrap();
        let err = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let mut d = TasNet::new(DenoiserConfig::default(), 2).unwrap();
        d.mark_trained(1);
        d.save(dir.path()).unwrap();
        let back = TasNet::load(dir.path()).unwrap();
        assert_eq!(back.params(), d.params());
        assert!(back.is_pretrained());
    }
}
