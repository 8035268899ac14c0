use crate::asr::{decode, AsrModel, Objective};
use crate::defense::{smooth_var, SmoothingConfig};
use crate::denoiser::Denoiser;
use crate::tensor::{Tape, Tensor, Var};
use crate::Result;

/// `denoiser → smoothing noise → recognizer`, plus which stages an
/// attacker differentiates through.
#[derive(Clone, Copy)]
pub struct ModelChain<'m> {
    pub asr: &'m AsrModel,
    pub denoiser: Option<&'m dyn Denoiser>,
    pub smoothing: Option<SmoothingConfig>,
    pub attack_denoiser: bool,
    pub attack_smoothing: bool,
}

impl std::fmt::Debug for ModelChain<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelChain")
            .field("denoiser", &self.denoiser.is_some())
            .field("smoothing", &self.smoothing)
            .field("attack_denoiser", &self.attack_denoiser)
            .field("attack_smoothing", &self.attack_smoothing)
            .finish()
    }
}

impl<'m> ModelChain<'m> {
    pub fn new(asr: &'m AsrModel) -> Self {
        Self {
            asr,
            denoiser: None,
            smoothing: None,
            attack_denoiser: true,
            attack_smoothing: true,
        }
    }

    pub fn with_denoiser(mut self, denoiser: &'m dyn Denoiser) -> Self {
        self.denoiser = Some(denoiser);
        self
    }

    pub fn with_smoothing(mut self, cfg: SmoothingConfig) -> Self {
        self.smoothing = Some(cfg);
        self
    }

    /// The attacker sees only the bare recognizer.
    pub fn non_adaptive(mut self) -> Self {
        self.attack_denoiser = false;
        self.attack_smoothing = false;
        self
    }

    /// The chain the attacker differentiates.
    pub fn attacker_view(&self) -> ModelChain<'m> {
        ModelChain {
            asr: self.asr,
            denoiser: self.denoiser.filter(|_| self.attack_denoiser),
            smoothing: self.smoothing.filter(|_| self.attack_smoothing),
            attack_denoiser: true,
            attack_smoothing: true,
        }
    }

    pub fn noise_seed(&self, base: u64, call: u64) -> u64 {
        self.smoothing
            .map(|s| s.call_seed(base, call))
            .unwrap_or(base)
    }

    /// Log-posteriors with parameters already bound on the tape.
    pub fn forward_bound<'t>(
        &self,
        x: Var<'t>,
        asr_params: &[Var<'t>],
        denoiser_params: &[Var<'t>],
        noise_seed: u64,
    ) -> Result<Var<'t>> {
        let mut h = x;
        if let Some(d) = self.denoiser {
            h = d.forward_with(denoiser_params, h)?;
        }
        if let Some(s) = &self.smoothing {
            h = smooth_var(h, s, noise_seed)?;
        }
        self.asr.forward_with(asr_params, h)
    }

    /// Forward pass with every parameter recorded as a constant.
    pub fn forward<'t>(&self, tape: &'t Tape, x: Var<'t>, noise_seed: u64) -> Result<Var<'t>> {
        let asr_params = self.asr.bind_frozen(tape);
        let den_params = self
            .denoiser
            .map(|d| d.params().bind_frozen(tape))
            .unwrap_or_default();
        self.forward_bound(x, &asr_params, &den_params, noise_seed)
    }

    pub fn log_posteriors(&self, x: &[f32], noise_seed: u64) -> Result<Tensor> {
        let tape = Tape::new();
        let xv = tape.input(vec![x.len()], x.to_vec(), false)?;
        Ok(self.forward(&tape, xv, noise_seed)?.to_tensor())
    }

    pub fn transcribe(&self, x: &[f32], noise_seed: u64) -> Result<Vec<String>> {
        Ok(self
            .asr
            .vocab()
            .words(&decode(&self.log_posteriors(x, noise_seed)?)))
    }

    /// Loss value and its gradient with respect to the input waveform.
    pub fn input_gradient(
        &self,
        objective: &dyn Objective,
        x: &[f32],
        labels: &[usize],
        noise_seed: u64,
    ) -> Result<(f32, Vec<f32>)> {
        let tape = Tape::new();
        let xv = tape.input(vec![x.len()], x.to_vec(), true)?;
        let loss = objective.loss(self.forward(&tape, xv, noise_seed)?, labels)?;
        let grads = tape.backward(loss)?;
        Ok((loss.item(), grads.wrt(xv)))
    }

    pub fn loss(
        &self,
        objective: &dyn Objective,
        x: &[f32],
        labels: &[usize],
        noise_seed: u64,
    ) -> Result<f32> {
        let tape = Tape::new();
        let xv = tape.input(vec![x.len()], x.to_vec(), false)?;
        Ok(objective
            .loss(self.forward(&tape, xv, noise_seed)?, labels)?
            .item())
    }
}
