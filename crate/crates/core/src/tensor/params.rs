use super::{Gradients, Result, Tape, Tensor, Var};

/// Named, ordered collection of parameter tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a trainable tensor and returns its index.
    pub fn push(&mut self, name: impl Into<String>, t: Tensor) -> usize {
        self.names.push(name.into());
        self.tensors.push(t.with_grad());
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    pub fn get_mut(&mut self, i: usize) -> &mut Tensor {
        &mut self.tensors[i]
    }

    pub fn by_name(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    /// Records every tensor as a leaf, tracking gradients per tensor flag.
    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors.iter().map(|t| tape.leaf(t)).collect()
    }

    /// Records every tensor as a constant (no weight gradients computed).
    pub fn bind_frozen<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.tensors.iter().map(|t| tape.constant(t)).collect()
    }

    /// Folds gradients for the vars returned by [`bind`](Self::bind) into
    /// each tensor's grad slot. Repeated calls accumulate.
    pub fn accumulate(&mut self, grads: &Gradients, vars: &[Var<'_>]) -> Result<()> {
        for (t, v) in self.tensors.iter_mut().zip(vars) {
            grads.accumulate_into(*v, t)?;
        }
        Ok(())
    }

    /// Adds raw per-tensor gradient buffers (same order as the tensors).
    pub fn accumulate_raw(&mut self, grads: &[Vec<f32>]) -> Result<()> {
        for (t, g) in self.tensors.iter_mut().zip(grads) {
            if t.requires_grad() {
                t.accumulate_grad(g)?;
            }
        }
        Ok(())
    }

    /// Extracts gradients for the bound vars without touching the tensors.
    pub fn collect_grads(&self, grads: &Gradients, vars: &[Var<'_>]) -> Vec<Vec<f32>> {
        vars.iter().map(|v| grads.wrt(*v)).collect()
    }

    /// Replaces the gradient slots with the mean of per-example gradient
    /// lists, summed in the order given.
    pub fn set_mean_grads(&mut self, per_example: Vec<Vec<Vec<f32>>>) -> Result<()> {
        let n = per_example.len().max(1) as f32;
        let mut total: Vec<Vec<f32>> = self.tensors.iter().map(|t| vec![0.0; t.numel()]).collect();
        for g in per_example {
            for (acc, g) in total.iter_mut().zip(g) {
                acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
            }
        }
        total.iter_mut().flatten().for_each(|v| *v /= n);
        self.zero_grad();
        self.accumulate_raw(&total)
    }

    /// Scales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before scaling.
    pub fn clip_grad_norm(&mut self, max_norm: f32) -> f32 {
        let total = self
            .tensors
            .iter()
            .filter_map(Tensor::grad)
            .flatten()
            .map(|g| (*g as f64).powi(2))
            .sum::<f64>()
            .sqrt() as f32;
        if total > max_norm && total > 0.0 {
            let k = max_norm / total;
            for t in &mut self.tensors {
                if let Some(g) = t.grad() {
                    let scaled: Vec<f32> = g.iter().map(|v| v * k).collect();
                    t.zero_grad();
                    t.accumulate_grad(&scaled).expect("same length");
                }
            }
        }
        total
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }

    pub fn set_trainable(&mut self, on: bool) {
        self.tensors
            .iter_mut()
            .for_each(|t| t.set_requires_grad(on));
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// FNV-1a over names, shapes and value bits.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for (name, t) in self.iter() {
            eat(name.as_bytes());
            for d in t.shape() {
                eat(&(*d as u64).to_le_bytes());
            }
            for v in t.data() {
                eat(&v.to_bits().to_le_bytes());
            }
        }
        h
    }
}
