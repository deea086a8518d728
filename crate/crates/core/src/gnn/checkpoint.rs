//! Checkpoint container.
//!
//! Layout: 8-byte magic, little-endian u32 version, u64 header length, a JSON
//! header (model config, taxonomy hash, tensor names and shapes), then every
//! tensor as little-endian f64 in header order.

use super::layers::Linear;
use super::model::{GinConfig, GinModel};
use super::GnnError;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

const MAGIC: &[u8; 8] = b"GINCKPT\0";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    config: GinConfig,
    taxonomy_hash: String,
    #[serde(default)]
    extra: serde_json::Value,
    tensors: Vec<TensorInfo>,
}

/// Writes `model` plus free-form `extra` metadata.
pub fn save_checkpoint<W: Write>(model: &GinModel, extra: serde_json::Value, mut w: W) -> Result<(), GnnError> {
    let mut tensors = Vec::new();
    for (name, l) in model.linears() {
        tensors.push(TensorInfo { name: format!("{name}.weight"), shape: vec![l.w.nrows(), l.w.ncols()] });
        tensors.push(TensorInfo { name: format!("{name}.bias"), shape: vec![l.b.len()] });
    }
    let header = Header {
        config: model.config,
        taxonomy_hash: model.config.task.taxonomy().content_hash(),
        extra,
        tensors,
    };
    let json = serde_json::to_vec(&header).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, l) in model.linears() {
        for x in l.w.iter().chain(l.b.iter()) {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads a checkpoint, checking magic, version, taxonomy hash and shapes.
pub fn load_checkpoint<R: Read>(mut r: R) -> Result<(GinModel, serde_json::Value), GnnError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(GnnError::Checkpoint("not a checkpoint file".into()));
    }
    let mut u32b = [0u8; 4];
    r.read_exact(&mut u32b)?;
    let version = u32::from_le_bytes(u32b);
    if version != VERSION {
        return Err(GnnError::Checkpoint(format!("unsupported version {version}")));
    }
    let mut u64b = [0u8; 8];
    r.read_exact(&mut u64b)?;
    let len = usize::try_from(u64::from_le_bytes(u64b)).map_err(|_| GnnError::Checkpoint("header too large".into()))?;
    if len > 1 << 24 {
        return Err(GnnError::Checkpoint("header too large".into()));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| GnnError::Checkpoint(e.to_string()))?;
    if header.taxonomy_hash != header.config.task.taxonomy().content_hash() {
        return Err(GnnError::Checkpoint(format!("taxonomy of task {} has changed", header.config.task)));
    }
    let mut model = GinModel::new(header.config, 0)?;
    let expected: Vec<String> = model
        .linears()
        .into_iter()
        .flat_map(|(n, _)| [format!("{n}.weight"), format!("{n}.bias")])
        .collect();
    let names: Vec<&str> = header.tensors.iter().map(|t| t.name.as_str()).collect();
    if names != expected {
        return Err(GnnError::Checkpoint("tensor list does not match the model config".into()));
    }
    let mut read_f64s = |n: usize| -> Result<Vec<f64>, GnnError> {
        let mut buf = vec![0u8; n * 8];
        r.read_exact(&mut buf)?;
        Ok(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    };
    let mut infos = header.tensors.iter();
    for l in model.linears_mut() {
        let (wi, bi) = (infos.next().expect("checked"), infos.next().expect("checked"));
        if wi.shape != [l.w.nrows(), l.w.ncols()] || bi.shape != [l.b.len()] {
            return Err(GnnError::Checkpoint(format!("shape mismatch for {}", wi.name)));
        }
        let w = read_f64s(l.w.len())?;
        let b = read_f64s(l.b.len())?;
        *l = Linear {
            w: Array2::from_shape_vec((wi.shape[0], wi.shape[1]), w).map_err(|e| GnnError::Checkpoint(e.to_string()))?,
            b: Array1::from(b),
        };
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(GnnError::Checkpoint("trailing bytes after tensors".into()));
    }
    Ok((model, header.extra))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taxonomy::TaskKind;

    fn model() -> GinModel {
        GinModel::new(GinConfig { task: TaskKind::Framing, embed_dim: 3, hidden: 4, layers: 2, dropout: 0.5 }, 9).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let mut buf = Vec::new();
        save_checkpoint(&m, serde_json::json!({"seed": 9}), &mut buf).unwrap();
        let (back, extra) = load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(extra["seed"], 9);
    }

    #[test]
    fn corruption_detected() {
        let mut buf = Vec::new();
        save_checkpoint(&model(), serde_json::Value::Null, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(load_checkpoint(bad.as_slice()).is_err());
        assert!(load_checkpoint(&buf[..buf.len() - 8]).is_err());
        let mut long = buf.clone();
        long.push(0);
        assert!(load_checkpoint(long.as_slice()).is_err());
    }
}
