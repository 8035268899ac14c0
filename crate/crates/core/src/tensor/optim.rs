use super::{ParamSet, Result, TensorError};

/// Plain gradient descent over the trainable tensors of `params`.
pub fn sgd_step(params: &mut ParamSet, lr: f32) -> Result<()> {
    check_grads(params)?;
    for t in params.tensors_mut() {
        if !t.requires_grad() {
            continue;
        }
        let g = t.grad().expect("checked").to_vec();
        t.data_mut()
            .iter_mut()
            .zip(&g)
            .for_each(|(w, g)| *w -= lr * g);
    }
    Ok(())
}

fn check_grads(params: &ParamSet) -> Result<()> {
    for (name, t) in params.iter() {
        if t.requires_grad() && t.grad().is_none() {
            return Err(TensorError::MissingGrad(name.to_string()));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction. Moment buffers persist across steps and are
/// keyed by parameter position.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    t: u32,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            m: Vec::new(),
            v: Vec::new(),
            t: 0,
        }
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        check_grads(params)?;
        if self.m.is_empty() {
            self.m = params
                .tensors()
                .iter()
                .map(|t| vec![0.0; t.numel()])
                .collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for (i, t) in params.tensors_mut().iter_mut().enumerate() {
            if !t.requires_grad() {
                continue;
            }
            let g = t.grad().expect("checked").to_vec();
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, w) in t.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    fn quad_step(params: &mut ParamSet, target: f32) {
        params.zero_grad();
        let tape = Tape::new();
        let vars = params.bind(&tape);
        let loss = vars[0]
            .add_scalar(-target)
            .unwrap()
            .square()
            .unwrap()
            .sum()
            .unwrap();
        let grads = tape.backward(loss).unwrap();
        params.accumulate(&grads, &vars).unwrap();
    }

    #[test]
    fn sgd_single_step_on_square() {
        let mut p = ParamSet::new();
        p.push("w", Tensor::from_vec(vec![3.0]).unwrap());
        quad_step(&mut p, 0.0);
        sgd_step(&mut p, 0.1).unwrap();
        assert!((p.get(0).data()[0] - 2.4).abs() < 1e-6);
    }

    #[test]
    fn sgd_converges_on_shifted_quadratic() {
        let mut p = ParamSet::new();
        p.push("w", Tensor::from_vec(vec![0.0]).unwrap());
        for _ in 0..200 {
            quad_step(&mut p, 5.0);
            sgd_step(&mut p, 0.1).unwrap();
        }
        assert!((p.get(0).data()[0] - 5.0).abs() < 1e-3);
    }

    #[test]
    fn adam_zero_grad_is_noop() {
        let mut p = ParamSet::new();
        p.push("w", Tensor::from_vec(vec![1.5, -2.0]).unwrap());
        p.get_mut(0).accumulate_grad(&[0.0, 0.0]).unwrap();
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default());
        adam.step(&mut p).unwrap();
        adam.step(&mut p).unwrap();
        assert_eq!(p.get(0).data(), before.get(0).data());
    }

    #[test]
    fn missing_grad_is_an_error() {
        let mut p = ParamSet::new();
        p.push("w", Tensor::from_vec(vec![1.0]).unwrap());
        assert!(matches!(
            sgd_step(&mut p, 0.1),
            Err(TensorError::MissingGrad(_))
        ));
        let mut adam = Adam::new(AdamConfig::default());
        assert!(adam.step(&mut p).is_err());
    }
}
