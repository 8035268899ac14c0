//! Numpy-style broadcasting (shapes aligned on the right).

use super::{Result, TensorError};

pub fn broadcast_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = dim_from_right(a, rank - 1 - i);
        let db = dim_from_right(b, rank - 1 - i);
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => {
                return Err(TensorError::ShapeMismatch {
                    op,
                    lhs: a.to_vec(),
                    rhs: b.to_vec(),
                })
            }
        };
    }
    Ok(out)
}

fn dim_from_right(shape: &[usize], from_right: usize) -> usize {
    if from_right < shape.len() {
        shape[shape.len() - 1 - from_right]
    } else {
        1
    }
}

/// For each element of `out_shape`, the flat index into an operand of
/// shape `src` that broadcasts to it.
pub fn source_indices(src: &[usize], out_shape: &[usize]) -> Vec<usize> {
    let rank = out_shape.len();
    let n: usize = out_shape.iter().product();
    if src.iter().product::<usize>() == n {
        return (0..n).collect();
    }
    // strides of src aligned to out rank, zero where broadcast
    let mut strides = vec![0usize; rank];
    let mut acc = 1usize;
    for i in (0..rank).rev() {
        let d = dim_from_right(src, rank - 1 - i);
        strides[i] = if d == 1 { 0 } else { acc };
        acc *= d;
    }
    let mut idx = vec![0usize; rank];
    let mut out = Vec::with_capacity(n);
    let mut flat = 0usize;
    for _ in 0..n {
        out.push(flat);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            flat += strides[ax];
            if idx[ax] < out_shape[ax] {
                break;
            }
            flat -= strides[ax] * idx[ax];
            idx[ax] = 0;
        }
    }
    out
}
