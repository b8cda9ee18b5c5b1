//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "MCML" | version u32 | config_len u32 | config JSON
//! | tensor_count u32 | per tensor: name_len u32, name, ndim u32, dims u64…, f32 values
//! | has_state u8 | [t u64, then m and v values per tensor as f32]
//! | checksum u64
//! ```
//!
//! The checksum is the first 8 bytes (LE) of the SHA-256 digest of everything before it.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::{param_specs, Model, ModelConfig};
use crate::tensor::Tensor;
use crate::train::optim::AdamWState;

pub const MAGIC: &[u8; 4] = b"MCML";
pub const FORMAT_VERSION: u32 = 1;

pub fn checksum(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serialises a model and, optionally, its optimizer state.
pub fn encode(model: &Model<f32>, state: Option<&AdamWState<f32>>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    let config = serde_json::to_vec(model.config())
        .map_err(|e| Error::format(format!("cannot serialise config: {e}")))?;
    put_u32(&mut out, config.len() as u32);
    out.extend_from_slice(&config);
    let params = model.params();
    put_u32(&mut out, params.len() as u32);
    for p in &params {
        put_u32(&mut out, p.spec.name.len() as u32);
        out.extend_from_slice(p.spec.name.as_bytes());
        put_u32(&mut out, p.tensor.ndim() as u32);
        for &d in p.tensor.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        put_f32s(&mut out, p.tensor.data());
    }
    match state {
        None => out.push(0),
        Some(s) => {
            if s.m.len() != params.len()
                || s.m
                    .iter()
                    .zip(&params)
                    .any(|(m, p)| m.len() != p.tensor.len())
            {
                return Err(Error::shape(
                    "optimizer state does not match model parameters",
                ));
            }
            out.push(1);
            out.extend_from_slice(&s.t.to_le_bytes());
            for buf in s.m.iter().chain(&s.v) {
                put_f32s(&mut out, buf);
            }
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::format(format!(
                "checkpoint truncated while reading {what} at byte {}",
                self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| Error::format("size overflow"))?,
            what,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Parses and validates checkpoint bytes.
pub fn decode(bytes: &[u8]) -> Result<(Model<f32>, Option<AdamWState<f32>>)> {
    if bytes.len() < MAGIC.len() + 4 + 8 || &bytes[..4] != MAGIC {
        return Err(Error::format("not a checkpoint: missing MCML magic"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    let mut r = Reader {
        bytes: body,
        pos: 4,
    };
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Version {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let computed = checksum(body);
    if stored != computed {
        return Err(Error::Checksum { stored, computed });
    }
    let config_len = r.u32("config length")? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(config_len, "config")?)
        .map_err(|e| Error::format(format!("bad config in checkpoint: {e}")))?;
    config.validate()?;
    let count = r.u32("tensor count")? as usize;
    let expected = param_specs(&config);
    if count != expected.len() {
        return Err(Error::format(format!(
            "checkpoint holds {count} tensors, config requires {}",
            expected.len()
        )));
    }
    let mut tensors = Vec::with_capacity(count);
    for spec in &expected {
        let name_len = r.u32("tensor name length")? as usize;
        let name = String::from_utf8(r.take(name_len, "tensor name")?.to_vec())
            .map_err(|_| Error::format("tensor name is not UTF-8"))?;
        let ndim = r.u32("tensor rank")? as usize;
        let shape = (0..ndim)
            .map(|_| r.u64("tensor dims").map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if shape != spec.shape {
            return Err(Error::CheckpointShape {
                name,
                found: shape,
                expected: spec.shape.clone(),
            });
        }
        let data = r.f32s(spec.numel(), "tensor values")?;
        tensors.push((name, Tensor::new(&shape, data)?));
    }
    let sizes: Vec<usize> = expected.iter().map(|s| s.numel()).collect();
    let model = Model::from_named(&config, tensors)?;
    let state = match r.take(1, "state flag")?[0] {
        0 => None,
        1 => {
            let t = r.u64("step counter")?;
            let mut read = |what| {
                sizes
                    .iter()
                    .map(|&n| r.f32s(n, what))
                    .collect::<Result<Vec<_>>>()
            };
            let m = read("first moments")?;
            let v = read("second moments")?;
            Some(AdamWState { m, v, t })
        }
        other => return Err(Error::format(format!("bad state flag {other}"))),
    };
    if r.pos != body.len() {
        return Err(Error::format(format!(
            "{} trailing bytes after checkpoint payload",
            body.len() - r.pos
        )));
    }
    Ok((model, state))
}

pub fn save_checkpoint(
    model: &Model<f32>,
    state: Option<&AdamWState<f32>>,
    path: impl AsRef<Path>,
) -> Result<()> {
    fs::write(path, encode(model, state)?)?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(Model<f32>, Option<AdamWState<f32>>)> {
    decode(&fs::read(path)?)
}
