//! `ATEN` binary tensor files: magic `ATEN`, u32 rank, u32 dims, then the
//! f32 payload, all little-endian.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Result, Tensor, TensorError};

const MAGIC: &[u8; 4] = b"ATEN";

pub fn encode(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * t.shape().len() + 4 * t.numel());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for d in t.shape() {
        out.extend_from_slice(&(*d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(mut bytes: &[u8]) -> Result<Tensor> {
    let mut magic = [0u8; 4];
    read_exact(&mut bytes, &mut magic)?;
    if &magic != MAGIC {
        return Err(TensorError::Format(format!("bad magic {magic:?}")));
    }
    let rank = read_u32(&mut bytes)? as usize;
    if rank > 16 {
        return Err(TensorError::Format(format!("implausible rank {rank}")));
    }
    let shape = (0..rank)
        .map(|_| read_u32(&mut bytes).map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let n: usize = shape.iter().product();
    if bytes.len() != 4 * n {
        return Err(TensorError::Format(format!(
            "payload has {} bytes, shape {shape:?} needs {}",
            bytes.len(),
            4 * n
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::new(shape, data)
}

fn read_exact(src: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    src.read_exact(buf)
        .map_err(|_| TensorError::Format("truncated header".into()))
}

fn read_u32(src: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(src, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn save(path: &Path, t: &Tensor) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode(t))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Tensor> {
    decode(&fs::read(path)?)
}
