//! Differentiable STFT and the multi-resolution STFT training loss.

mod loss;
mod stft;

pub use loss::{log_magnitude_loss, mrstft_loss, spectral_convergence, MrStftConfig, MrStftLoss};
pub use stft::{stft, stft_magnitude, StftConfig, StftPlan, Window};
