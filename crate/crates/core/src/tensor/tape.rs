use std::cell::{Ref, RefCell};
use std::fmt;

use super::broadcast::{broadcast_shape, source_indices};
use super::kernels::{self, ConvGeom};
use super::{check_finite, invalid, Result, Tensor, TensorError, EPS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum UnaryKind {
    Neg,
    Abs,
    Log,
    Exp,
    Relu,
    Sigmoid,
    Tanh,
    Sign,
    Sqrt,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ReduceKind {
    Sum,
    Mean,
    Max,
}

#[derive(Debug)]
pub(crate) enum Op {
    Leaf,
    Binary {
        kind: BinaryKind,
        a: usize,
        b: usize,
    },
    AddScalar {
        a: usize,
    },
    MulScalar {
        a: usize,
        c: f32,
    },
    Unary {
        kind: UnaryKind,
        a: usize,
    },
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv1d {
        input: usize,
        kernel: usize,
        geom: ConvGeom,
    },
    ConvTranspose1d {
        input: usize,
        kernel: usize,
        geom: ConvGeom,
    },
    /// `map[i]` is the output slot of input element `i`; for `Max` the
    /// winning input index per output slot is stored in `argmax`.
    Reduce {
        kind: ReduceKind,
        a: usize,
        map: Vec<usize>,
        count: usize,
        argmax: Vec<usize>,
    },
    LogSoftmax {
        a: usize,
        outer: usize,
        axis_len: usize,
        inner: usize,
    },
    Reshape {
        a: usize,
    },
    Transpose {
        a: usize,
        rows: usize,
        cols: usize,
    },
    Frames {
        a: usize,
        frame_len: usize,
        shift: usize,
        frames: usize,
    },
    PadReflect {
        a: usize,
        left: usize,
        n: usize,
    },
    Slice {
        a: usize,
        start: usize,
    },
    Pick {
        a: usize,
        cols: usize,
        index: Vec<usize>,
    },
    Magnitude {
        re: usize,
        im: usize,
    },
}

#[derive(Debug)]
pub(crate) struct Node {
    pub shape: Vec<usize>,
    pub value: Vec<f32>,
    pub op: Op,
    pub requires_grad: bool,
}

/// Records one forward pass. Nodes are appended in evaluation order, so
/// the arena is always topologically sorted.
#[derive(Default)]
pub struct Tape {
    pub(crate) nodes: RefCell<Vec<Node>>,
}

impl fmt::Debug for Tape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tape").field("len", &self.len()).finish()
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Var#{}{:?}", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records `t` as a leaf. Gradients are tracked iff `t.requires_grad()`.
    pub fn leaf(&self, t: &Tensor) -> Var<'_> {
        self.push(
            t.shape().to_vec(),
            t.data().to_vec(),
            Op::Leaf,
            t.requires_grad(),
        )
    }

    /// Records `t` as a constant leaf regardless of its flag.
    pub fn constant(&self, t: &Tensor) -> Var<'_> {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, false)
    }

    /// Records raw values as a leaf.
    pub fn input(
        &self,
        shape: Vec<usize>,
        values: Vec<f32>,
        requires_grad: bool,
    ) -> Result<Var<'_>> {
        let t = Tensor::new(shape, values)?;
        let (shape, data) = (t.shape().to_vec(), t.into_data());
        Ok(self.push(shape, data, Op::Leaf, requires_grad))
    }

    pub fn scalar(&self, v: f32) -> Var<'_> {
        self.push(vec![], vec![v], Op::Leaf, false)
    }

    fn push(&self, shape: Vec<usize>, value: Vec<f32>, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn checked_push(
        &self,
        name: &'static str,
        shape: Vec<usize>,
        value: Vec<f32>,
        op: Op,
        requires_grad: bool,
    ) -> Result<Var<'_>> {
        check_finite(name, &value)?;
        Ok(self.push(shape, value, op, requires_grad))
    }

    fn rg(&self, id: usize) -> bool {
        self.nodes.borrow()[id].requires_grad
    }
}

// Fallible, so the operator traits do not fit.
#[allow(clippy::should_implement_trait)]
impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn node(&self) -> Ref<'t, Node> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id])
    }

    pub fn shape(&self) -> Vec<usize> {
        self.node().shape.clone()
    }

    pub fn numel(&self) -> usize {
        self.node().value.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.node().requires_grad
    }

    pub fn value(&self) -> Vec<f32> {
        self.node().value.clone()
    }

    pub fn with_value<R>(&self, f: impl FnOnce(&[f32]) -> R) -> R {
        f(&self.node().value)
    }

    /// Value of a single-element var.
    pub fn item(&self) -> f32 {
        self.node().value[0]
    }

    pub fn to_tensor(&self) -> Tensor {
        let n = self.node();
        Tensor::new(n.shape.clone(), n.value.clone()).expect("tape values are finite")
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars belong to different tapes"
        );
    }

    // ---- elementwise -------------------------------------------------

    fn binary(self, other: Var<'t>, kind: BinaryKind, name: &'static str) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (shape, value) = {
            let nodes = self.tape.nodes.borrow();
            let (a, b) = (&nodes[self.id], &nodes[other.id]);
            let shape = broadcast_shape(name, &a.shape, &b.shape)?;
            let f = |x: f32, y: f32| match kind {
                BinaryKind::Add => x + y,
                BinaryKind::Sub => x - y,
                BinaryKind::Mul => x * y,
                BinaryKind::Div => x / guard_denominator(y),
            };
            let value: Vec<f32> = if a.shape == b.shape {
                a.value
                    .iter()
                    .zip(&b.value)
                    .map(|(&x, &y)| f(x, y))
                    .collect()
            } else {
                let ia = source_indices(&a.shape, &shape);
                let ib = source_indices(&b.shape, &shape);
                ia.iter()
                    .zip(&ib)
                    .map(|(&i, &j)| f(a.value[i], b.value[j]))
                    .collect()
            };
            (shape, value)
        };
        let rg = self.tape.rg(self.id) || self.tape.rg(other.id);
        self.tape.checked_push(
            name,
            shape,
            value,
            Op::Binary {
                kind,
                a: self.id,
                b: other.id,
            },
            rg,
        )
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Add, "add")
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Sub, "sub")
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Mul, "mul")
    }

    /// Division with the denominator pushed away from zero by [`EPS`].
    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(other, BinaryKind::Div, "div")
    }

    pub fn add_scalar(self, c: f32) -> Result<Var<'t>> {
        let value: Vec<f32> = self.with_value(|v| v.iter().map(|x| x + c).collect());
        self.tape.checked_push(
            "add_scalar",
            self.shape(),
            value,
            Op::AddScalar { a: self.id },
            self.requires_grad(),
        )
    }

    pub fn mul_scalar(self, c: f32) -> Result<Var<'t>> {
        let value: Vec<f32> = self.with_value(|v| v.iter().map(|x| x * c).collect());
        self.tape.checked_push(
            "mul_scalar",
            self.shape(),
            value,
            Op::MulScalar { a: self.id, c },
            self.requires_grad(),
        )
    }

    fn unary(self, kind: UnaryKind, name: &'static str) -> Result<Var<'t>> {
        let value: Vec<f32> = {
            let n = self.node();
            if kind == UnaryKind::Log {
                if let Some(&bad) = n.value.iter().find(|v| **v < 0.0) {
                    return Err(TensorError::LogDomain(bad));
                }
            }
            n.value.iter().map(|&x| unary_forward(kind, x)).collect()
        };
        self.tape.checked_push(
            name,
            self.shape(),
            value,
            Op::Unary { kind, a: self.id },
            self.requires_grad(),
        )
    }

    pub fn neg(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Neg, "neg")
    }
    pub fn abs(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Abs, "abs")
    }
    /// `ln(max(x, EPS))`; negative inputs are an error.
    pub fn log(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Log, "log")
    }
    pub fn exp(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Exp, "exp")
    }
    pub fn relu(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Relu, "relu")
    }
    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Sigmoid, "sigmoid")
    }
    pub fn tanh(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Tanh, "tanh")
    }
    /// Non-differentiable; `sign(0) = 0` and the gradient is zero.
    pub fn sign(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Sign, "sign")
    }
    pub fn sqrt(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Sqrt, "sqrt")
    }
    pub fn square(self) -> Result<Var<'t>> {
        self.unary(UnaryKind::Square, "square")
    }

    // ---- linear algebra ------------------------------------------------

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&other);
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa,
                rhs: sb,
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let value = {
            let nodes = self.tape.nodes.borrow();
            kernels::matmul(&nodes[self.id].value, &nodes[other.id].value, m, k, n)
        };
        let rg = self.requires_grad() || other.requires_grad();
        self.tape.checked_push(
            "matmul",
            vec![m, n],
            value,
            Op::MatMul {
                a: self.id,
                b: other.id,
                m,
                k,
                n,
            },
            rg,
        )
    }

    /// `self`: `[c_in × len]`, `kernel`: `[c_out × c_in × k]`.
    pub fn conv1d(
        self,
        kernel: Var<'t>,
        stride: usize,
        dilation: usize,
        padding: usize,
    ) -> Result<Var<'t>> {
        self.same_tape(&kernel);
        let (si, sk) = (self.shape(), kernel.shape());
        if si.len() != 2 || sk.len() != 3 || si[0] != sk[1] {
            return Err(TensorError::ShapeMismatch {
                op: "conv1d",
                lhs: si,
                rhs: sk,
            });
        }
        if stride == 0 || dilation == 0 || sk[2] == 0 {
            return Err(invalid(
                "conv1d",
                "stride, dilation and kernel size must be >= 1",
            ));
        }
        let len_out =
            ConvGeom::conv_len(si[1], sk[2], stride, dilation, padding).ok_or_else(|| {
                invalid(
                    "conv1d",
                    format!(
                        "input length {} (padding {padding}) shorter than dilated kernel span",
                        si[1]
                    ),
                )
            })?;
        let geom = ConvGeom {
            c_in: si[0],
            c_out: sk[0],
            k: sk[2],
            len_in: si[1],
            len_out,
            stride,
            dilation,
            padding,
        };
        let value = {
            let nodes = self.tape.nodes.borrow();
            kernels::conv1d(&nodes[self.id].value, &nodes[kernel.id].value, &geom)
        };
        let rg = self.requires_grad() || kernel.requires_grad();
        self.tape.checked_push(
            "conv1d",
            vec![geom.c_out, len_out],
            value,
            Op::Conv1d {
                input: self.id,
                kernel: kernel.id,
                geom,
            },
            rg,
        )
    }

    /// `self`: `[c_in × len]`, `kernel`: `[c_in × c_out × k]`; output length
    /// `(len-1)·stride − 2·padding + dilation·(k−1) + 1`.
    pub fn conv_transpose1d(
        self,
        kernel: Var<'t>,
        stride: usize,
        dilation: usize,
        padding: usize,
    ) -> Result<Var<'t>> {
        self.same_tape(&kernel);
        let (si, sk) = (self.shape(), kernel.shape());
        if si.len() != 2 || sk.len() != 3 || si[0] != sk[0] || si[1] == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "conv_transpose1d",
                lhs: si,
                rhs: sk,
            });
        }
        if stride == 0 || dilation == 0 || sk[2] == 0 {
            return Err(invalid(
                "conv_transpose1d",
                "stride, dilation and kernel size must be >= 1",
            ));
        }
        let len_out = ConvGeom::transpose_len(si[1], sk[2], stride, dilation, padding)
            .ok_or_else(|| invalid("conv_transpose1d", "output length would be non-positive"))?;
        let geom = ConvGeom {
            c_in: si[0],
            c_out: sk[1],
            k: sk[2],
            len_in: si[1],
            len_out,
            stride,
            dilation,
            padding,
        };
        let value = {
            let nodes = self.tape.nodes.borrow();
            kernels::conv_transpose1d(&nodes[self.id].value, &nodes[kernel.id].value, &geom)
        };
        let rg = self.requires_grad() || kernel.requires_grad();
        self.tape.checked_push(
            "conv_transpose1d",
            vec![geom.c_out, len_out],
            value,
            Op::ConvTranspose1d {
                input: self.id,
                kernel: kernel.id,
                geom,
            },
            rg,
        )
    }

    // ---- reductions ------------------------------------------------------

    fn reduce(self, kind: ReduceKind, axes: &[usize], name: &'static str) -> Result<Var<'t>> {
        let shape = self.shape();
        let rank = shape.len();
        let mut reduced = vec![false; rank];
        for &ax in axes {
            if ax >= rank {
                return Err(invalid(
                    name,
                    format!("axis {ax} out of range for rank {rank}"),
                ));
            }
            reduced[ax] = true;
        }
        if shape.iter().zip(&reduced).any(|(&d, &r)| r && d == 0) {
            return Err(invalid(name, "cannot reduce over an empty axis"));
        }
        let out_shape: Vec<usize> = shape
            .iter()
            .zip(&reduced)
            .filter(|(_, &r)| !r)
            .map(|(&d, _)| d)
            .collect();
        let n_out: usize = out_shape.iter().product();
        let count: usize = shape
            .iter()
            .zip(&reduced)
            .filter(|(_, &r)| r)
            .map(|(&d, _)| d)
            .product();

        // output strides for the kept axes
        let mut out_strides = vec![0usize; rank];
        let mut acc = 1;
        for ax in (0..rank).rev() {
            if !reduced[ax] {
                out_strides[ax] = acc;
                acc *= shape[ax];
            }
        }
        let numel: usize = shape.iter().product();
        let mut map = Vec::with_capacity(numel);
        let mut idx = vec![0usize; rank];
        let mut flat = 0usize;
        for _ in 0..numel {
            map.push(flat);
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                flat += out_strides[ax];
                if idx[ax] < shape[ax] {
                    break;
                }
                flat -= out_strides[ax] * idx[ax];
                idx[ax] = 0;
            }
        }

        let (value, argmax) = self.with_value(|v| match kind {
            ReduceKind::Sum | ReduceKind::Mean => {
                let mut out = vec![0.0f32; n_out];
                for (x, &o) in v.iter().zip(&map) {
                    out[o] += x;
                }
                if kind == ReduceKind::Mean {
                    let inv = 1.0 / count as f32;
                    out.iter_mut().for_each(|x| *x *= inv);
                }
                (out, Vec::new())
            }
            ReduceKind::Max => {
                let mut out = vec![f32::NEG_INFINITY; n_out];
                let mut arg = vec![usize::MAX; n_out];
                for (i, (&x, &o)) in v.iter().zip(&map).enumerate() {
                    if arg[o] == usize::MAX || x > out[o] {
                        out[o] = x;
                        arg[o] = i;
                    }
                }
                (out, arg)
            }
        });
        self.tape.checked_push(
            name,
            out_shape,
            value,
            Op::Reduce {
                kind,
                a: self.id,
                map,
                count,
                argmax,
            },
            self.requires_grad(),
        )
    }

    pub fn sum_axes(self, axes: &[usize]) -> Result<Var<'t>> {
        self.reduce(ReduceKind::Sum, axes, "sum")
    }

    pub fn mean_axes(self, axes: &[usize]) -> Result<Var<'t>> {
        self.reduce(ReduceKind::Mean, axes, "mean")
    }

    /// Max over `axes`; ties resolve to the first element in row-major order.
    pub fn max_axes(self, axes: &[usize]) -> Result<Var<'t>> {
        self.reduce(ReduceKind::Max, axes, "max")
    }

    pub fn sum(self) -> Result<Var<'t>> {
        let axes: Vec<usize> = (0..self.shape().len()).collect();
        self.sum_axes(&axes)
    }

    pub fn mean(self) -> Result<Var<'t>> {
        let axes: Vec<usize> = (0..self.shape().len()).collect();
        if self.numel() == 0 {
            return Err(invalid("mean", "empty tensor"));
        }
        self.mean_axes(&axes)
    }

    /// Max-stabilized log-softmax along `axis`.
    pub fn log_softmax(self, axis: usize) -> Result<Var<'t>> {
        let shape = self.shape();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(invalid(
                "log_softmax",
                format!("bad axis {axis} for shape {shape:?}"),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let axis_len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let value = self.with_value(|v| {
            let mut out = vec![0.0f32; v.len()];
            for o in 0..outer {
                for i in 0..inner {
                    let at = |j: usize| (o * axis_len + j) * inner + i;
                    let mx = (0..axis_len)
                        .map(|j| v[at(j)])
                        .fold(f32::NEG_INFINITY, f32::max);
                    let lse = (0..axis_len)
                        .map(|j| (v[at(j)] - mx).exp())
                        .sum::<f32>()
                        .ln()
                        + mx;
                    for j in 0..axis_len {
                        out[at(j)] = v[at(j)] - lse;
                    }
                }
            }
            out
        });
        self.tape.checked_push(
            "log_softmax",
            shape,
            value,
            Op::LogSoftmax {
                a: self.id,
                outer,
                axis_len,
                inner,
            },
            self.requires_grad(),
        )
    }

    // ---- structural ------------------------------------------------------

    pub fn reshape(self, shape: Vec<usize>) -> Result<Var<'t>> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(),
                rhs: shape,
            });
        }
        let value = self.value();
        Ok(self.tape.push(
            shape,
            value,
            Op::Reshape { a: self.id },
            self.requires_grad(),
        ))
    }

    /// 2-D transpose.
    pub fn transpose(self) -> Result<Var<'t>> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(invalid("transpose", format!("expected rank 2, got {s:?}")));
        }
        let (rows, cols) = (s[0], s[1]);
        let value = self.with_value(|v| {
            let mut out = vec![0.0f32; v.len()];
            for r in 0..rows {
                for c in 0..cols {
                    out[c * rows + r] = v[r * cols + c];
                }
            }
            out
        });
        Ok(self.tape.push(
            vec![cols, rows],
            value,
            Op::Transpose {
                a: self.id,
                rows,
                cols,
            },
            self.requires_grad(),
        ))
    }

    /// Splits a 1-D signal into overlapping frames `[frames × frame_len]`,
    /// `frames = 1 + (len − frame_len) / shift`.
    pub fn frames(self, frame_len: usize, shift: usize) -> Result<Var<'t>> {
        let s = self.shape();
        if s.len() != 1 || shift == 0 || frame_len == 0 {
            return Err(invalid(
                "frames",
                format!("need a 1-D signal and positive geometry, got {s:?}"),
            ));
        }
        if s[0] < frame_len {
            return Err(invalid(
                "frames",
                format!(
                    "signal of {} samples is shorter than one frame ({frame_len})",
                    s[0]
                ),
            ));
        }
        let frames = 1 + (s[0] - frame_len) / shift;
        let value = self.with_value(|v| {
            let mut out = Vec::with_capacity(frames * frame_len);
            for f in 0..frames {
                out.extend_from_slice(&v[f * shift..f * shift + frame_len]);
            }
            out
        });
        Ok(self.tape.push(
            vec![frames, frame_len],
            value,
            Op::Frames {
                a: self.id,
                frame_len,
                shift,
                frames,
            },
            self.requires_grad(),
        ))
    }

    /// Reflect-pads a 1-D signal (edge sample not repeated).
    pub fn pad_reflect(self, left: usize, right: usize) -> Result<Var<'t>> {
        let s = self.shape();
        if s.len() != 1 || left >= s[0] || right >= s[0] {
            return Err(invalid(
                "pad_reflect",
                format!("padding ({left}, {right}) too large for shape {s:?}"),
            ));
        }
        let n = s[0];
        let value = self.with_value(|v| {
            let mut out = Vec::with_capacity(left + n + right);
            out.extend((0..left).map(|i| v[left - i]));
            out.extend_from_slice(v);
            out.extend((0..right).map(|i| v[n - 2 - i]));
            out
        });
        Ok(self.tape.push(
            vec![left + n + right],
            value,
            Op::PadReflect {
                a: self.id,
                left,
                n,
            },
            self.requires_grad(),
        ))
    }

    /// Contiguous sub-range of a 1-D var.
    pub fn slice(self, start: usize, len: usize) -> Result<Var<'t>> {
        let s = self.shape();
        if s.len() != 1 || start + len > s[0] {
            return Err(invalid(
                "slice",
                format!("range {start}..{} out of {s:?}", start + len),
            ));
        }
        let value = self.with_value(|v| v[start..start + len].to_vec());
        Ok(self.tape.push(
            vec![len],
            value,
            Op::Slice { a: self.id, start },
            self.requires_grad(),
        ))
    }

    /// For `[rows × cols]`, selects `self[r, index[r]]` → `[rows]`.
    pub fn pick(self, index: &[usize]) -> Result<Var<'t>> {
        let s = self.shape();
        if s.len() != 2 || s[0] != index.len() {
            return Err(TensorError::ShapeMismatch {
                op: "pick",
                lhs: s,
                rhs: vec![index.len()],
            });
        }
        let cols = s[1];
        if let Some(&bad) = index.iter().find(|&&i| i >= cols) {
            return Err(invalid(
                "pick",
                format!("index {bad} out of range for {cols} columns"),
            ));
        }
        let value = self.with_value(|v| {
            index
                .iter()
                .enumerate()
                .map(|(r, &c)| v[r * cols + c])
                .collect()
        });
        Ok(self.tape.push(
            vec![index.len()],
            value,
            Op::Pick {
                a: self.id,
                cols,
                index: index.to_vec(),
            },
            self.requires_grad(),
        ))
    }

    /// `sqrt(re² + im²)`; gradient is zero where the magnitude is zero.
    pub fn magnitude(self, im: Var<'t>) -> Result<Var<'t>> {
        self.same_tape(&im);
        if self.shape() != im.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "magnitude",
                lhs: self.shape(),
                rhs: im.shape(),
            });
        }
        let value = {
            let nodes = self.tape.nodes.borrow();
            nodes[self.id]
                .value
                .iter()
                .zip(&nodes[im.id].value)
                .map(|(r, i)| (r * r + i * i).sqrt())
                .collect()
        };
        let rg = self.requires_grad() || im.requires_grad();
        self.tape.checked_push(
            "magnitude",
            self.shape(),
            value,
            Op::Magnitude {
                re: self.id,
                im: im.id,
            },
            rg,
        )
    }
}

#[inline]
pub(crate) fn guard_denominator(y: f32) -> f32 {
    if y.abs() >= EPS {
        y
    } else if y < 0.0 {
        -EPS
    } else {
        EPS
    }
}

#[inline]
pub(crate) fn sign(x: f32) -> f32 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn unary_forward(kind: UnaryKind, x: f32) -> f32 {
    match kind {
        UnaryKind::Neg => -x,
        UnaryKind::Abs => x.abs(),
        UnaryKind::Log => x.max(EPS).ln(),
        UnaryKind::Exp => x.exp(),
        UnaryKind::Relu => x.max(0.0),
        UnaryKind::Sigmoid => {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        }
        UnaryKind::Tanh => x.tanh(),
        UnaryKind::Sign => sign(x),
        UnaryKind::Sqrt => x.sqrt(),
        UnaryKind::Square => x * x,
    }
}
