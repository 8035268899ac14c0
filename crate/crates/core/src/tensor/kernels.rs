//! Raw loops behind matmul and the 1-D convolutions.
//!
//! All buffers are row-major. Convolutions use the cross-correlation
//! convention: `out[co, t] = sum_{ci,k} w[co, ci, k] * in[ci, t*s + k*d - p]`.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub c_in: usize,
    pub c_out: usize,
    pub k: usize,
    pub len_in: usize,
    pub len_out: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
}

impl ConvGeom {
    /// Output length of a forward convolution, or `None` if it would be
    /// non-positive.
    pub fn conv_len(
        len: usize,
        k: usize,
        stride: usize,
        dilation: usize,
        padding: usize,
    ) -> Option<usize> {
        let span = dilation * (k - 1) + 1;
        let padded = len + 2 * padding;
        if padded < span {
            return None;
        }
        Some((padded - span) / stride + 1)
    }

    pub fn transpose_len(
        len: usize,
        k: usize,
        stride: usize,
        dilation: usize,
        padding: usize,
    ) -> Option<usize> {
        let full = (len - 1) * stride + dilation * (k - 1) + 1;
        full.checked_sub(2 * padding).filter(|&n| n > 0)
    }

    /// Range of output positions `t` for which `t*s + off` lands inside
    /// `0..bound`, where `off = k*d - p`.
    #[inline]
    fn valid_range(&self, tap: usize, bound: usize, count: usize) -> (usize, usize) {
        let off = (tap * self.dilation) as isize - self.padding as isize;
        let s = self.stride as isize;
        // smallest t with t*s + off >= 0
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        // largest t with t*s + off <= bound - 1
        let hi_num = bound as isize - 1 - off;
        let hi = if hi_num < 0 { -1 } else { hi_num / s };
        let lo = lo as usize;
        let hi = (hi + 1).max(0) as usize;
        let hi = hi.min(count);
        (lo.min(hi), hi)
    }

    #[inline]
    fn offset(&self, tap: usize) -> isize {
        (tap * self.dilation) as isize - self.padding as isize
    }
}

/// `c[m×n] = a[m×k] · b[k×n]`
pub fn matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut c = vec![0.0f32; m * n];
    for i in 0..m {
        let row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            row.iter_mut().zip(brow).for_each(|(c, b)| *c += av * b);
        }
    }
    c
}

/// `a[m×k] += g[m×n] · bᵀ`
pub fn matmul_grad_a(g: &[f32], b: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f32>();
        }
    }
}

/// `b[k×n] += aᵀ · g[m×n]`
pub fn matmul_grad_b(g: &[f32], a: &[f32], m: usize, k: usize, n: usize, out: &mut [f32]) {
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            out[p * n..(p + 1) * n]
                .iter_mut()
                .zip(grow)
                .for_each(|(o, g)| *o += av * g);
        }
    }
}

pub fn conv1d(input: &[f32], kernel: &[f32], g: &ConvGeom) -> Vec<f32> {
    let mut out = vec![0.0f32; g.c_out * g.len_out];
    for co in 0..g.c_out {
        let orow = &mut out[co * g.len_out..(co + 1) * g.len_out];
        for ci in 0..g.c_in {
            let irow = &input[ci * g.len_in..(ci + 1) * g.len_in];
            for tap in 0..g.k {
                let w = kernel[(co * g.c_in + ci) * g.k + tap];
                if w == 0.0 {
                    continue;
                }
                let (lo, hi) = g.valid_range(tap, g.len_in, g.len_out);
                if lo >= hi {
                    continue;
                }
                let off = g.offset(tap);
                if g.stride == 1 {
                    let start = (lo as isize + off) as usize;
                    let src = &irow[start..start + (hi - lo)];
                    orow[lo..hi]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(o, x)| *o += w * x);
                } else {
                    for t in lo..hi {
                        orow[t] += w * irow[(t as isize * g.stride as isize + off) as usize];
                    }
                }
            }
        }
    }
    out
}

/// Accumulates gradients of a forward conv into `d_input` and/or `d_kernel`.
pub fn conv1d_backward(
    input: &[f32],
    kernel: &[f32],
    d_out: &[f32],
    g: &ConvGeom,
    mut d_input: Option<&mut [f32]>,
    mut d_kernel: Option<&mut [f32]>,
) {
    for co in 0..g.c_out {
        let grow = &d_out[co * g.len_out..(co + 1) * g.len_out];
        for ci in 0..g.c_in {
            let irow = ci * g.len_in..(ci + 1) * g.len_in;
            for tap in 0..g.k {
                let widx = (co * g.c_in + ci) * g.k + tap;
                let (lo, hi) = g.valid_range(tap, g.len_in, g.len_out);
                if lo >= hi {
                    continue;
                }
                let off = g.offset(tap);
                if g.stride == 1 {
                    let start = (lo as isize + off) as usize;
                    let gsl = &grow[lo..hi];
                    if let Some(di) = d_input.as_deref_mut() {
                        let w = kernel[widx];
                        let dst = &mut di[irow.clone()][start..start + (hi - lo)];
                        dst.iter_mut().zip(gsl).for_each(|(d, g)| *d += w * g);
                    }
                    if let Some(dk) = d_kernel.as_deref_mut() {
                        let src = &input[irow.clone()][start..start + (hi - lo)];
                        dk[widx] += src.iter().zip(gsl).map(|(x, g)| x * g).sum::<f32>();
                    }
                } else {
                    let w = kernel[widx];
                    let mut acc = 0.0f32;
                    for t in lo..hi {
                        let pos = irow.start + (t as isize * g.stride as isize + off) as usize;
                        if let Some(di) = d_input.as_deref_mut() {
                            di[pos] += w * grow[t];
                        }
                        acc += input[pos] * grow[t];
                    }
                    if let Some(dk) = d_kernel.as_deref_mut() {
                        dk[widx] += acc;
                    }
                }
            }
        }
    }
}

/// Transposed convolution; kernel layout `[c_in × c_out × k]`. `len_out`
/// in `g` is the transposed output length and `len_in` the input length.
/// `out[co, t*s + k*d - p] += w[ci, co, k] * in[ci, t]`
pub fn conv_transpose1d(input: &[f32], kernel: &[f32], g: &ConvGeom) -> Vec<f32> {
    let mut out = vec![0.0f32; g.c_out * g.len_out];
    for ci in 0..g.c_in {
        let irow = &input[ci * g.len_in..(ci + 1) * g.len_in];
        for co in 0..g.c_out {
            let orow = &mut out[co * g.len_out..(co + 1) * g.len_out];
            for tap in 0..g.k {
                let w = kernel[(ci * g.c_out + co) * g.k + tap];
                if w == 0.0 {
                    continue;
                }
                // roles swap: `t` ranges over the input, target index in output
                let (lo, hi) = g.valid_range(tap, g.len_out, g.len_in);
                let off = g.offset(tap);
                for t in lo..hi {
                    orow[(t as isize * g.stride as isize + off) as usize] += w * irow[t];
                }
            }
        }
    }
    out
}

pub fn conv_transpose1d_backward(
    input: &[f32],
    kernel: &[f32],
    d_out: &[f32],
    g: &ConvGeom,
    mut d_input: Option<&mut [f32]>,
    mut d_kernel: Option<&mut [f32]>,
) {
    for ci in 0..g.c_in {
        let irow = ci * g.len_in..(ci + 1) * g.len_in;
        for co in 0..g.c_out {
            let grow = &d_out[co * g.len_out..(co + 1) * g.len_out];
            for tap in 0..g.k {
                let widx = (ci * g.c_out + co) * g.k + tap;
                let w = kernel[widx];
                let (lo, hi) = g.valid_range(tap, g.len_out, g.len_in);
                let off = g.offset(tap);
                let mut acc = 0.0f32;
                for t in lo..hi {
                    let gv = grow[(t as isize * g.stride as isize + off) as usize];
                    if let Some(di) = d_input.as_deref_mut() {
                        di[irow.start + t] += w * gv;
                    }
                    acc += input[irow.start + t] * gv;
                }
                if let Some(dk) = d_kernel.as_deref_mut() {
                    dk[widx] += acc;
                }
            }
        }
    }
}
