//! Binary checkpoints of the global network and its optimizer.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "BACNET1"
//! u32 board, u32 in_channels
//! tensor block: u32 count, then per tensor
//!     u32 name_len, name bytes, u32 rank, u32 dims[rank], f32 data[..]
//! adam: f64 lr, beta1, beta2, eps, weight_decay; u64 step
//! tensor block (first moments), tensor block (second moments)
//! u64 version
//! u32 crc32 of every preceding byte
//! ```
//!
//! Values are flattened channel-major, row-major, in the order of
//! [`TENSOR_NAMES`].

use std::path::Path;

use bac_core::nn::{AdamConfig, AdamState, Arch, NetworkParams, Tensor, TENSOR_NAMES};

pub const MAGIC: &[u8; 7] = b"BACNET1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },
    #[error("shape mismatch in tensor {tensor}: checkpoint has {found:?}, expected {expected:?}")]
    ShapeMismatch { tensor: String, expected: Vec<usize>, found: Vec<usize> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Network weights plus optimizer state, as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: NetworkParams<f32>,
    pub adam: AdamState<f32>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_tensors(out: &mut Vec<u8>, tensors: &[Tensor<f32>]) {
    put_u32(out, tensors.len());
    for (name, t) in TENSOR_NAMES.iter().zip(tensors) {
        put_u32(out, name.len());
        out.extend_from_slice(name.as_bytes());
        put_u32(out, t.shape().len());
        for &d in t.shape() {
            put_u32(out, d);
        }
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode(params: &NetworkParams<f32>, adam: &AdamState<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 * params.param_count() + 1024);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, params.arch.board);
    put_u32(&mut out, params.arch.in_channels);
    put_tensors(&mut out, &params.tensors);
    let c = adam.config;
    for v in [c.lr, c.beta1, c.beta2, c.eps, c.weight_decay] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&adam.step.to_le_bytes());
    put_tensors(&mut out, &adam.m);
    put_tensors(&mut out, &adam.v);
    out.extend_from_slice(&params.version.to_le_bytes());
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn fail<T>(&self, reason: impl Into<String>) -> Result<T, CheckpointError> {
        Err(CheckpointError::Format { offset: self.pos, reason: reason.into() })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return self.fail(format!("unexpected end of file (needed {n} more bytes)"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn tensors(&mut self) -> Result<Vec<(String, Tensor<f32>)>, CheckpointError> {
        let count = self.u32()?;
        if count != TENSOR_NAMES.len() {
            return self.fail(format!("expected {} tensors, found {count}", TENSOR_NAMES.len()));
        }
        let mut out = Vec::with_capacity(count);
        for expected in TENSOR_NAMES {
            let start = self.pos;
            let len = self.u32()?;
            if len > 64 {
                return self.fail(format!("tensor name length {len} is implausible"));
            }
            let name = String::from_utf8(self.take(len)?.to_vec())
                .map_err(|_| CheckpointError::Format { offset: start, reason: "tensor name is not UTF-8".into() })?;
            if name != expected {
                return Err(CheckpointError::Format { offset: start, reason: format!("expected tensor {expected}, found {name}") });
            }
            let rank = self.u32()?;
            if !(1..=4).contains(&rank) {
                return self.fail(format!("tensor {name} has rank {rank}"));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(self.u32()?);
            }
            let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let Some(n) = n.filter(|n| n.checked_mul(4).is_some_and(|b| b <= self.buf.len() - self.pos)) else {
                return self.fail(format!("tensor {name} with dims {dims:?} overruns the file"));
            };
            let bytes = self.take(4 * n)?;
            let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            let t = Tensor::from_data(&dims, data).map_err(|e| CheckpointError::Format { offset: start, reason: e.to_string() })?;
            out.push((name, t));
        }
        Ok(out)
    }
}

/// Arch implied by the stored tensor shapes.
fn arch_from(board: usize, in_channels: usize, t: &[(String, Tensor<f32>)]) -> Arch {
    let conv = [0, 2, 4, 6].map(|i| t[i].1.shape()[0]);
    Arch { board, in_channels, conv, hidden: t[8].1.shape()[0] }
}

fn check_shapes(expected: &Arch, t: &[(String, Tensor<f32>)]) -> Result<(), CheckpointError> {
    for (spec, (name, tensor)) in expected.tensor_specs().iter().zip(t) {
        if spec.shape != tensor.shape() {
            return Err(CheckpointError::ShapeMismatch { tensor: name.clone(), expected: spec.shape.clone(), found: tensor.shape().to_vec() });
        }
    }
    Ok(())
}

/// Parses a checkpoint. With `expected` set, every tensor shape must match
/// that architecture.
pub fn decode(buf: &[u8], expected: Option<&Arch>) -> Result<Checkpoint, CheckpointError> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(CheckpointError::Format { offset: 0, reason: "bad magic".into() });
    }
    let board = r.u32()?;
    let in_channels = r.u32()?;
    let params_at = r.pos;
    let tensors = r.tensors()?;
    let arch = arch_from(board, in_channels, &tensors);
    if let Some(exp) = expected {
        check_shapes(exp, &tensors)?;
        if exp.board != board || exp.in_channels != in_channels {
            return Err(CheckpointError::ShapeMismatch {
                tensor: "descriptor".into(),
                expected: vec![exp.board, exp.in_channels],
                found: vec![board, in_channels],
            });
        }
    }
    check_shapes(&arch, &tensors).map_err(|e| CheckpointError::Format { offset: params_at, reason: e.to_string() })?;
    let config = AdamConfig { lr: r.f64()?, beta1: r.f64()?, beta2: r.f64()?, eps: r.f64()?, weight_decay: r.f64()? };
    let step = r.u64()?;
    let moments_at = r.pos;
    let m = r.tensors()?;
    let v = r.tensors()?;
    for block in [&m, &v] {
        check_shapes(&arch, block).map_err(|e| CheckpointError::Format { offset: moments_at, reason: e.to_string() })?;
    }
    let version = r.u64()?;
    let body_end = r.pos;
    let stored = r.u32()? as u32;
    if r.pos != buf.len() {
        return r.fail(format!("{} trailing bytes", buf.len() - r.pos));
    }
    let crc = crc32fast::hash(&buf[..body_end]);
    if crc != stored {
        return Err(CheckpointError::Format { offset: body_end, reason: format!("crc mismatch: stored {stored:08x}, computed {crc:08x}") });
    }
    let strip = |b: Vec<(String, Tensor<f32>)>| b.into_iter().map(|(_, t)| t).collect::<Vec<_>>();
    Ok(Checkpoint { params: NetworkParams { arch, tensors: strip(tensors), version }, adam: AdamState { config, m: strip(m), v: strip(v), step } })
}

pub fn save(path: &Path, params: &NetworkParams<f32>, adam: &AdamState<f32>) -> Result<(), CheckpointError> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, encode(params, adam))?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: &Path, expected: Option<&Arch>) -> Result<Checkpoint, CheckpointError> {
    decode(&std::fs::read(path)?, expected)
}

/// Loads over existing state. On any error both targets are left untouched.
pub fn load_into(path: &Path, params: &mut NetworkParams<f32>, adam: &mut AdamState<f32>) -> Result<(), CheckpointError> {
    let ck = load(path, Some(&params.arch))?;
    *params = ck.params;
    *adam = ck.adam;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (NetworkParams<f32>, AdamState<f32>) {
        let p = NetworkParams::<f32>::init(Arch::narrow(4, 2, 3), 9);
        let mut a = AdamState::new(&p, AdamConfig::default());
        for (i, t) in a.m.iter_mut().chain(a.v.iter_mut()).enumerate() {
            for (j, x) in t.data.iter_mut().enumerate() {
                *x = (i * 31 + j) as f32 * 1e-3 - 0.2;
            }
        }
        a.step = 17;
        (p, a)
    }

    #[test]
    fn bytes_round_trip() {
        let (mut p, a) = sample();
        p.version = 42;
        let buf = encode(&p, &a);
        let ck = decode(&buf, Some(&p.arch)).unwrap();
        assert_eq!(ck.params, p);
        assert_eq!(ck.adam, a);
        assert_eq!(encode(&ck.params, &ck.adam), buf);
    }

    #[test]
    fn every_truncation_is_a_format_error() {
        let (p, a) = sample();
        let buf = encode(&p, &a);
        for len in (0..buf.len()).step_by(7) {
            assert!(matches!(decode(&buf[..len], None), Err(CheckpointError::Format { .. })), "len {len}");
        }
    }

    #[test]
    fn bit_flip_is_caught() {
        let (p, a) = sample();
        let mut buf = encode(&p, &a);
        let k = buf.len() / 2;
        buf[k] ^= 0x10;
        assert!(matches!(decode(&buf, None), Err(CheckpointError::Format { .. })));
    }
}
