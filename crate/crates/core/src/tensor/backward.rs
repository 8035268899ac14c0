use super::broadcast::source_indices;
use super::kernels;
use super::tape::{guard_denominator, BinaryKind, Node, Op, ReduceKind, Tape, UnaryKind, Var};
use super::{Result, Tensor, TensorError, EPS};

/// Gradients of one scalar loss with respect to every tracked node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f32>>>,
    sizes: Vec<usize>,
}

impl Gradients {
    /// Gradient for `v`; zeros if `v` did not influence the loss.
    pub fn wrt(&self, v: Var<'_>) -> Vec<f32> {
        match &self.grads[v.id()] {
            Some(g) => g.clone(),
            None => vec![0.0; self.sizes[v.id()]],
        }
    }

    pub fn get(&self, v: Var<'_>) -> Option<&[f32]> {
        self.grads[v.id()].as_deref()
    }

    /// Adds the gradient for `v` into `t`'s grad slot (if `t` is trainable).
    pub fn accumulate_into(&self, v: Var<'_>, t: &mut Tensor) -> Result<()> {
        if !t.requires_grad() {
            return Ok(());
        }
        t.accumulate_grad(&self.wrt(v))
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f32>>], nodes: &[Node], id: usize) -> &'a mut Vec<f32> {
    grads[id].get_or_insert_with(|| vec![0.0; nodes[id].value.len()])
}

impl Tape {
    /// Reverse sweep from a scalar `loss`. Each node is visited once, in
    /// reverse recording order.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        assert!(
            std::ptr::eq(loss.tape(), self),
            "loss belongs to another tape"
        );
        let nodes = self.nodes.borrow();
        let root = &nodes[loss.id()];
        if root.value.len() != 1 {
            return Err(TensorError::NotScalar(root.shape.clone()));
        }
        let mut grads: Vec<Option<Vec<f32>>> = vec![None; nodes.len()];
        if root.requires_grad {
            grads[loss.id()] = Some(vec![1.0]);
        }
        for id in (0..=loss.id()).rev() {
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            propagate(&nodes, &mut grads, node, &g);
            grads[id] = Some(g);
        }
        let sizes = nodes.iter().map(|n| n.value.len()).collect();
        Ok(Gradients { grads, sizes })
    }
}

fn propagate(nodes: &[Node], grads: &mut [Option<Vec<f32>>], node: &Node, g: &[f32]) {
    let rg = |id: usize| nodes[id].requires_grad;
    match &node.op {
        Op::Leaf => {}
        Op::Binary { kind, a, b } => {
            let (na, nb) = (&nodes[*a], &nodes[*b]);
            let same = na.shape == nb.shape;
            let ia = (!same).then(|| source_indices(&na.shape, &node.shape));
            let ib = (!same).then(|| source_indices(&nb.shape, &node.shape));
            let at = |idx: &Option<Vec<usize>>, i: usize| idx.as_ref().map_or(i, |v| v[i]);
            if rg(*a) {
                let mut acc = std::mem::take(slot(grads, nodes, *a));
                for (i, &gi) in g.iter().enumerate() {
                    let d = match kind {
                        BinaryKind::Add | BinaryKind::Sub => gi,
                        BinaryKind::Mul => gi * nb.value[at(&ib, i)],
                        BinaryKind::Div => gi / guard_denominator(nb.value[at(&ib, i)]),
                    };
                    acc[at(&ia, i)] += d;
                }
                grads[*a] = Some(acc);
            }
            if rg(*b) {
                let mut acc = std::mem::take(slot(grads, nodes, *b));
                for (i, &gi) in g.iter().enumerate() {
                    let d = match kind {
                        BinaryKind::Add => gi,
                        BinaryKind::Sub => -gi,
                        BinaryKind::Mul => gi * na.value[at(&ia, i)],
                        BinaryKind::Div => {
                            let y = nb.value[at(&ib, i)];
                            if y.abs() < EPS {
                                0.0
                            } else {
                                -gi * na.value[at(&ia, i)] / (y * y)
                            }
                        }
                    };
                    acc[at(&ib, i)] += d;
                }
                grads[*b] = Some(acc);
            }
        }
        Op::AddScalar { a } => {
            if rg(*a) {
                slot(grads, nodes, *a)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, g)| *d += g);
            }
        }
        Op::MulScalar { a, c } => {
            if rg(*a) {
                slot(grads, nodes, *a)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, g)| *d += c * g);
            }
        }
        Op::Unary { kind, a } => {
            if !rg(*a) || *kind == UnaryKind::Sign {
                return;
            }
            let x = &nodes[*a].value;
            let y = &node.value;
            let d = slot(grads, nodes, *a);
            for i in 0..g.len() {
                let local = match kind {
                    UnaryKind::Neg => -1.0,
                    UnaryKind::Abs => super::tape::sign(x[i]),
                    UnaryKind::Log => {
                        if x[i] > EPS {
                            1.0 / x[i]
                        } else {
                            0.0
                        }
                    }
                    UnaryKind::Exp => y[i],
                    UnaryKind::Relu => {
                        if x[i] > 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    UnaryKind::Sigmoid => y[i] * (1.0 - y[i]),
                    UnaryKind::Tanh => 1.0 - y[i] * y[i],
                    UnaryKind::Sign => 0.0,
                    UnaryKind::Sqrt => 0.5 / y[i].max(EPS),
                    UnaryKind::Square => 2.0 * x[i],
                };
                d[i] += g[i] * local;
            }
        }
        Op::MatMul { a, b, m, k, n } => {
            if rg(*a) {
                let bv = &nodes[*b].value;
                kernels::matmul_grad_a(g, bv, *m, *k, *n, slot(grads, nodes, *a));
            }
            if rg(*b) {
                let av = &nodes[*a].value;
                kernels::matmul_grad_b(g, av, *m, *k, *n, slot(grads, nodes, *b));
            }
        }
        Op::Conv1d {
            input,
            kernel,
            geom,
        } => {
            let mut di = rg(*input).then(|| std::mem::take(slot(grads, nodes, *input)));
            let mut dk = rg(*kernel).then(|| std::mem::take(slot(grads, nodes, *kernel)));
            kernels::conv1d_backward(
                &nodes[*input].value,
                &nodes[*kernel].value,
                g,
                geom,
                di.as_deref_mut(),
                dk.as_deref_mut(),
            );
            if let Some(di) = di {
                grads[*input] = Some(di);
            }
            if let Some(dk) = dk {
                grads[*kernel] = Some(dk);
            }
        }
        Op::ConvTranspose1d {
            input,
            kernel,
            geom,
        } => {
            let mut di = rg(*input).then(|| std::mem::take(slot(grads, nodes, *input)));
            let mut dk = rg(*kernel).then(|| std::mem::take(slot(grads, nodes, *kernel)));
            kernels::conv_transpose1d_backward(
                &nodes[*input].value,
                &nodes[*kernel].value,
                g,
                geom,
                di.as_deref_mut(),
                dk.as_deref_mut(),
            );
            if let Some(di) = di {
                grads[*input] = Some(di);
            }
            if let Some(dk) = dk {
                grads[*kernel] = Some(dk);
            }
        }
        Op::Reduce {
            kind,
            a,
            map,
            count,
            argmax,
        } => {
            if !rg(*a) {
                return;
            }
            let d = slot(grads, nodes, *a);
            match kind {
                ReduceKind::Sum => {
                    for (di, &o) in d.iter_mut().zip(map) {
                        *di += g[o];
                    }
                }
                ReduceKind::Mean => {
                    let inv = 1.0 / *count as f32;
                    for (di, &o) in d.iter_mut().zip(map) {
                        *di += g[o] * inv;
                    }
                }
                ReduceKind::Max => {
                    for (o, &src) in argmax.iter().enumerate() {
                        d[src] += g[o];
                    }
                }
            }
        }
        Op::LogSoftmax {
            a,
            outer,
            axis_len,
            inner,
        } => {
            if !rg(*a) {
                return;
            }
            let y = &node.value;
            let d = slot(grads, nodes, *a);
            for o in 0..*outer {
                for i in 0..*inner {
                    let at = |j: usize| (o * axis_len + j) * inner + i;
                    let gsum: f32 = (0..*axis_len).map(|j| g[at(j)]).sum();
                    for j in 0..*axis_len {
                        d[at(j)] += g[at(j)] - y[at(j)].exp() * gsum;
                    }
                }
            }
        }
        Op::Reshape { a } => {
            if rg(*a) {
                slot(grads, nodes, *a)
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, g)| *d += g);
            }
        }
        Op::Transpose { a, rows, cols } => {
            if rg(*a) {
                let d = slot(grads, nodes, *a);
                for r in 0..*rows {
                    for c in 0..*cols {
                        d[r * cols + c] += g[c * rows + r];
                    }
                }
            }
        }
        Op::Frames {
            a,
            frame_len,
            shift,
            frames,
        } => {
            if rg(*a) {
                let d = slot(grads, nodes, *a);
                for f in 0..*frames {
                    let src = &g[f * frame_len..(f + 1) * frame_len];
                    d[f * shift..f * shift + frame_len]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(d, g)| *d += g);
                }
            }
        }
        Op::PadReflect { a, left, n } => {
            if rg(*a) {
                let (left, n) = (*left, *n);
                let d = slot(grads, nodes, *a);
                for (i, &gi) in g.iter().enumerate() {
                    let src = if i < left {
                        left - i
                    } else if i < left + n {
                        i - left
                    } else {
                        n - 2 - (i - left - n)
                    };
                    d[src] += gi;
                }
            }
        }
        Op::Slice { a, start } => {
            if rg(*a) {
                let d = slot(grads, nodes, *a);
                d[*start..*start + g.len()]
                    .iter_mut()
                    .zip(g)
                    .for_each(|(d, g)| *d += g);
            }
        }
        Op::Pick { a, cols, index } => {
            if rg(*a) {
                let d = slot(grads, nodes, *a);
                for (r, &c) in index.iter().enumerate() {
                    d[r * cols + c] += g[r];
                }
            }
        }
        Op::Magnitude { re, im } => {
            let y = &node.value;
            for (part, id) in [(0, *re), (1, *im)] {
                if !rg(id) {
                    continue;
                }
                let src = if part == 0 {
                    &nodes[*re].value
                } else {
                    &nodes[*im].value
                };
                let d = slot(grads, nodes, id);
                for i in 0..g.len() {
                    if y[i] > 0.0 {
                        d[i] += g[i] * src[i] / y[i];
                    }
                }
            }
        }
    }
}
