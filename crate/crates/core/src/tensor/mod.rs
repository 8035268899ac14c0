//! Minimal reverse-mode automatic differentiation.
//!
//! [`Tensor`] is a plain owned value (parameters, waveforms, checkpoints).
//! A [`Tape`] records one forward pass; [`Var`] is a handle to a value on
//! that tape. Calling [`Tape::backward`] on a scalar produces [`Gradients`],
//! which can be folded into the `grad` slot of the tensors that were bound
//! as leaves.

mod backward;
mod broadcast;
pub mod io;
pub(crate) mod kernels;
mod optim;
mod params;
mod tape;

pub use backward::Gradients;
pub use optim::{sgd_step, Adam, AdamConfig};
pub use params::ParamSet;
pub use tape::{Tape, Var};

use thiserror::Error;

/// Epsilon used by the guarded `log` and `div` operations.
pub const EPS: f32 = 1e-8;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} needs {expected} values, got {got}")]
    BadLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("{op}: {msg}")]
    Invalid { op: &'static str, msg: String },
    #[error("log of negative input {0}")]
    LogDomain(f32),
    #[error("parameter `{0}` has no gradient")]
    MissingGrad(String),
    #[error("tensor file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, TensorError>;

pub(crate) fn invalid(op: &'static str, msg: impl Into<String>) -> TensorError {
    TensorError::Invalid {
        op,
        msg: msg.into(),
    }
}

pub(crate) fn check_finite(op: &'static str, values: &[f32]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

/// Dense row-major f32 array with an optional gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
    requires_grad: bool,
    grad: Option<Vec<f32>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected = shape.iter().product::<usize>();
        if expected != data.len() {
            return Err(TensorError::BadLength {
                shape,
                expected,
                got: data.len(),
            });
        }
        check_finite("tensor", &data)?;
        Ok(Self {
            shape,
            data,
            requires_grad: false,
            grad: None,
        })
    }

    pub fn from_vec(data: Vec<f32>) -> Result<Self> {
        Self::new(vec![data.len()], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
            requires_grad: false,
            grad: None,
        }
    }

    pub fn scalar(v: f32) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
            requires_grad: false,
            grad: None,
        }
    }

    /// Marks the tensor as trainable.
    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to values. Callers must keep values finite.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, on: bool) {
        self.requires_grad = on;
        if !on {
            self.grad = None;
        }
    }

    pub fn grad(&self) -> Option<&[f32]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient slot, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f32]) -> Result<()> {
        if g.len() != self.data.len() {
            return Err(TensorError::BadLength {
                shape: self.shape.clone(),
                expected: self.data.len(),
                got: g.len(),
            });
        }
        match &mut self.grad {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            None => self.grad = Some(g.to_vec()),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
