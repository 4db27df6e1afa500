//! Versioned binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! | bytes        | content                                               |
//! |--------------|-------------------------------------------------------|
//! | 8            | magic `DRAECKPT`                                      |
//! | 4            | format version (`u32`, currently 1)                   |
//! | 4            | header length `H` (`u32`)                             |
//! | H            | UTF-8 JSON [`Header`]                                 |
//! | 8 x elements | every tensor listed in the header, row-major `f64`    |
//! | 8            | FNV-1a 64 checksum of all preceding bytes             |
//!
//! Tensors are listed in the order: weights, biases, velocity weights,
//! velocity biases. `f32` parameters widen to `f64` exactly, so a round trip
//! is bit-exact for both element types.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::arch::{parse_architecture, ArchitectureSpec};
use crate::error::{Error, Result};
use crate::model::{Autoencoder, Parameters};
use crate::real::Real;

pub const MAGIC: &[u8; 8] = b"DRAECKPT";
pub const FORMAT_VERSION: u32 = 1;

/// Model state at one epoch plus what is needed to resume or score it.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord<T> {
    pub epoch: usize,
    pub model: Autoencoder<T>,
    pub velocity: Parameters<T>,
    pub eval_rmse: f64,
    pub train_mmse: f64,
    /// Item vocabulary the model's input columns refer to.
    pub item_tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub arch: String,
    pub activation: Activation,
    pub tied: bool,
    pub n_items: usize,
    pub dtype: String,
    pub epoch: usize,
    pub eval_rmse: f64,
    pub train_mmse: f64,
    pub item_tokens: Vec<String>,
    pub tensors: Vec<TensorInfo>,
}

impl Header {
    pub fn architecture(&self) -> Result<ArchitectureSpec> {
        Ok(parse_architecture(&self.arch)?
            .with_activation(self.activation)
            .with_tied(self.tied))
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn tensor_list<T: Real>(params: &Parameters<T>, prefix: &str) -> Vec<(TensorInfo, Vec<f64>)> {
    let weights = params.weights.iter().enumerate().map(|(i, w)| {
        (
            TensorInfo {
                name: format!("{prefix}weight.{i}"),
                shape: w.shape().to_vec(),
            },
            w.iter().map(|v| v.as_f64()).collect(),
        )
    });
    let biases = params.biases.iter().enumerate().map(|(i, b)| {
        (
            TensorInfo {
                name: format!("{prefix}bias.{i}"),
                shape: b.shape().to_vec(),
            },
            b.iter().map(|v| v.as_f64()).collect(),
        )
    });
    weights.chain(biases).collect()
}

pub fn encode_checkpoint<T: Real>(record: &CheckpointRecord<T>) -> Result<Vec<u8>> {
    let arch = record.model.arch();
    let mut tensors = tensor_list(record.model.params(), "");
    tensors.extend(tensor_list(&record.velocity, "velocity."));
    let header = Header {
        arch: arch.to_string(),
        activation: arch.activation,
        tied: arch.tied,
        n_items: record.model.n_items(),
        dtype: T::DTYPE.to_string(),
        epoch: record.epoch,
        eval_rmse: record.eval_rmse,
        train_mmse: record.train_mmse,
        item_tokens: record.item_tokens.clone(),
        tensors: tensors.iter().map(|(info, _)| info.clone()).collect(),
    };
    if !header.eval_rmse.is_finite() || !header.train_mmse.is_finite() {
        return Err(Error::checkpoint("metrics must be finite"));
    }
    let header_bytes = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(header_bytes.len()).map_err(|_| Error::checkpoint("header too large"))?;
    let n_values: usize = tensors.iter().map(|(_, v)| v.len()).sum();
    let mut out = Vec::with_capacity(24 + header_bytes.len() + 8 * n_values);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header_bytes);
    for (_, values) in &tensors {
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize, what: &str) -> Result<&'a [u8]> {
    let end = pos
        .checked_add(n)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::checkpoint(format!("truncated while reading {what}")))?;
    let out = &bytes[*pos..end];
    *pos = end;
    Ok(out)
}

/// Reads only the header; cheap, and enough to build a matching model.
pub fn decode_header(bytes: &[u8]) -> Result<Header> {
    read_header(bytes).map(|(h, _)| h)
}

fn read_header(bytes: &[u8]) -> Result<(Header, usize)> {
    let mut pos = 0;
    if take(bytes, &mut pos, 8, "magic")? != MAGIC {
        return Err(Error::checkpoint("not a checkpoint file (bad magic)"));
    }
    let version = u32::from_le_bytes(take(bytes, &mut pos, 4, "version")?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::checkpoint(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let len = u32::from_le_bytes(take(bytes, &mut pos, 4, "header length")?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(take(bytes, &mut pos, len, "header")?)
        .map_err(|e| Error::checkpoint(format!("malformed header: {e}")))?;
    Ok((header, pos))
}

fn push_tensor<T: Real>(params: &mut Parameters<T>, name: &str, shape: &[usize], values: Vec<T>) -> Result<()> {
    let bad = || Error::checkpoint(format!("unexpected tensor {name:?} with shape {shape:?}"));
    let (kind, index) = name.split_once('.').ok_or_else(bad)?;
    let index: usize = index.parse().map_err(|_| bad())?;
    match (kind, shape) {
        ("weight", &[r, c]) if index == params.weights.len() && params.biases.is_empty() => params
            .weights
            .push(Array2::from_shape_vec((r, c), values).map_err(|_| bad())?),
        ("bias", &[_]) if index == params.biases.len() => params.biases.push(Array1::from(values)),
        _ => return Err(bad()),
    }
    Ok(())
}

pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<CheckpointRecord<T>> {
    let (header, mut pos) = read_header(bytes)?;
    if header.dtype != T::DTYPE {
        return Err(Error::checkpoint(format!(
            "stored element type {} does not match requested {}",
            header.dtype,
            T::DTYPE
        )));
    }
    let mut total: usize = 0;
    for t in &header.tensors {
        let n = t
            .shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::checkpoint("tensor size overflow"))?;
        total = total
            .checked_add(n)
            .ok_or_else(|| Error::checkpoint("tensor size overflow"))?;
    }
    let expected_len = pos
        .checked_add(total)
        .and_then(|n| n.checked_add(8))
        .ok_or_else(|| Error::checkpoint("tensor size overflow"))?;
    if bytes.len() < expected_len {
        return Err(Error::checkpoint("truncated tensor data"));
    }
    if bytes.len() > expected_len {
        return Err(Error::checkpoint("unexpected trailing bytes"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
        return Err(Error::checkpoint("checksum mismatch"));
    }

    let arch = header
        .architecture()
        .map_err(|e| Error::checkpoint(format!("stored architecture: {e}")))?;
    let mut params = Parameters {
        weights: Vec::new(),
        biases: Vec::new(),
    };
    let mut velocity = Parameters {
        weights: Vec::new(),
        biases: Vec::new(),
    };
    for info in &header.tensors {
        let n: usize = info.shape.iter().product();
        let values: Vec<T> = take(body, &mut pos, 8 * n, &info.name)?
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        match info.name.strip_prefix("velocity.") {
            Some(name) => push_tensor(&mut velocity, name, &info.shape, values)?,
            None if velocity.weights.is_empty() => push_tensor(&mut params, &info.name, &info.shape, values)?,
            None => return Err(Error::checkpoint("tensors out of order")),
        }
    }
    let model = Autoencoder::from_parameters(&arch, header.n_items, params)
        .map_err(|e| Error::checkpoint(format!("parameters do not match architecture: {e}")))?;
    if !velocity.same_shape(model.params()) {
        return Err(Error::checkpoint("optimizer state does not match parameters"));
    }
    if !velocity.is_finite() || header.eval_rmse.is_nan() || header.eval_rmse < 0.0 || !header.train_mmse.is_finite() {
        return Err(Error::checkpoint("non-finite optimizer state or invalid metric"));
    }
    if !header.item_tokens.is_empty() && header.item_tokens.len() != header.n_items {
        return Err(Error::checkpoint("item vocabulary size differs from n_items"));
    }
    Ok(CheckpointRecord {
        epoch: header.epoch,
        model,
        velocity,
        eval_rmse: header.eval_rmse,
        train_mmse: header.train_mmse,
        item_tokens: header.item_tokens,
    })
}

/// Writes atomically (temporary file, then rename).
pub fn save_checkpoint<T: Real>(record: &CheckpointRecord<T>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(record)?;
    let tmp = path.with_extension("ckpt.tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint<T: Real>(path: &Path) -> Result<CheckpointRecord<T>> {
    let bytes = fs::read(path)?;
    decode_checkpoint(&bytes).map_err(|e| match e {
        Error::Checkpoint { message, .. } => Error::Checkpoint {
            path: Some(path.to_path_buf()),
            message,
        },
        other => other,
    })
}

/// Loads a checkpoint and checks it was produced by the requested architecture.
pub fn load_checkpoint_expecting<T: Real>(path: &Path, expected: &ArchitectureSpec) -> Result<CheckpointRecord<T>> {
    let record = load_checkpoint::<T>(path)?;
    let stored = record.model.arch();
    if stored.to_string() != expected.to_string()
        || stored.activation != expected.activation
        || stored.tied != expected.tied
    {
        return Err(Error::Checkpoint {
            path: Some(path.to_path_buf()),
            message: format!(
                "architecture mismatch: file has {stored} ({}, tied={}), requested {expected} ({}, tied={})",
                stored.activation, stored.tied, expected.activation, expected.tied
            ),
        });
    }
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn record<T: Real>(arch: &str, tied: bool) -> CheckpointRecord<T> {
        let arch = parse_architecture(arch)
            .unwrap()
            .with_tied(tied)
            .with_activation(Activation::elu());
        let model = Autoencoder::<T>::new(&arch, 11, 4).unwrap();
        let mut velocity = Parameters::zeros_like(model.params());
        velocity.weights[0][[0, 1]] = T::of(-0.125);
        CheckpointRecord {
            epoch: 3,
            model,
            velocity,
            eval_rmse: 0.93,
            train_mmse: 0.7,
            item_tokens: (0..11).map(|i| format!("item{i}")).collect(),
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for tied in [false, true] {
            let rec = record::<f32>("n,6,4,dp(0.5),6,n", tied);
            let back: CheckpointRecord<f32> = decode_checkpoint(&encode_checkpoint(&rec).unwrap()).unwrap();
            assert_eq!(back, rec);
            let x = ndarray::Array2::<f32>::from_shape_fn((3, 11), |(i, j)| ((i * 7 + j) % 5) as f32);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let (a, _) = rec.model.forward(x.view(), Mode::Eval, &mut rng).unwrap();
            let (b, _) = back.model.forward(x.view(), Mode::Eval, &mut rng).unwrap();
            assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        }
    }

    #[test]
    fn every_truncation_is_an_error() {
        let bytes = encode_checkpoint(&record::<f64>("n,3,n", false)).unwrap();
        for len in 0..bytes.len() {
            assert!(decode_checkpoint::<f64>(&bytes[..len]).is_err(), "length {len}");
        }
    }

    #[test]
    fn corruption_and_version_are_detected() {
        let bytes = encode_checkpoint(&record::<f64>("n,3,n", false)).unwrap();
        let mut flipped = bytes.clone();
        let last_value = flipped.len() - 9;
        flipped[last_value] ^= 0x40;
        assert!(decode_checkpoint::<f64>(&flipped).is_err());
        let mut future = bytes.clone();
        future[8] = 2;
        let err = decode_checkpoint::<f64>(&future).unwrap_err();
        assert!(err.to_string().contains("version 2"), "{err}");
        assert!(decode_checkpoint::<f32>(&bytes).is_err());
    }
}
