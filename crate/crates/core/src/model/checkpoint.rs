//! Checkpoint file format: one JSON header line (config, parameter names and
//! shapes) followed by the raw little-endian f32 payload in header order.

use crate::error::{CoreError, Result};
use crate::model::{Model, ModelConfig};
use crate::params::ParamStore;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub variant: String,
    pub lambda1: f64,
    pub seed: u64,
    pub config: ModelConfig,
    pub params: Vec<ParamEntry>,
}

pub fn save(path: &Path, model: &Model<f32>, lambda1: f64) -> Result<()> {
    let header = CheckpointHeader {
        format: "catt-checkpoint".into(),
        version: 1,
        variant: model.cfg.detector.variant_name().into(),
        lambda1,
        seed: model.params.seed(),
        config: model.cfg.clone(),
        params: model
            .params
            .iter()
            .map(|(name, p)| ParamEntry {
                name: name.to_string(),
                rows: p.value.rows(),
                cols: p.value.cols(),
            })
            .collect(),
    };
    let file = std::fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer(&mut w, &header)?;
    w.write_all(b"\n")?;
    for (_, p) in model.params.iter() {
        for &v in p.value.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Model<f32>, CheckpointHeader)> {
    let file = std::fs::File::open(path)?;
    let mut r = BufReader::new(file);
    let mut header_bytes = Vec::new();
    let mut byte = [0u8; 1];
    loop {
        let n = r.read(&mut byte)?;
        if n == 0 {
            return Err(CoreError::Checkpoint("missing header line".into()));
        }
        if byte[0] == b'\n' {
            break;
        }
        header_bytes.push(byte[0]);
    }
    let header: CheckpointHeader = serde_json::from_slice(&header_bytes)?;
    if header.format != "catt-checkpoint" {
        return Err(CoreError::Checkpoint(format!("unexpected format {:?}", header.format)));
    }
    header.config.validate()?;

    let mut store = ParamStore::new(header.seed);
    for entry in &header.params {
        let numel = entry.rows * entry.cols;
        let mut buf = vec![0u8; numel * 4];
        r.read_exact(&mut buf).map_err(|e| {
            CoreError::Checkpoint(format!("payload truncated at {}: {e}", entry.name))
        })?;
        let data: Vec<f32> = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        store.insert(&entry.name, Tensor::matrix(entry.rows, entry.cols, data)?);
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(CoreError::Checkpoint("trailing bytes after payload".into()));
    }
    Ok((Model { cfg: header.config.clone(), params: store }, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DetectorKind, ModelConfig};

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig {
            model_dim: 8,
            num_heads: 2,
            ctx_hidden: 4,
            vocab: 6,
            enc_blocks: 1,
            enc_ff_dim: 8,
            joint_hidden: 8,
            feat_dim: 3,
            detector: DetectorKind::Predictor,
            ..Default::default()
        };
        let model = Model::<f32>::init(cfg, 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save(&path, &model, 0.4).unwrap();
        let (back, header) = load(&path).unwrap();
        assert_eq!(header.lambda1, 0.4);
        assert_eq!(header.variant, "catt+ped");
        for (name, p) in model.params.iter() {
            let q = back.params.get(name).unwrap();
            assert_eq!(p.value.data(), q.value.data(), "param {name}");
        }
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let cfg = ModelConfig {
            model_dim: 8,
            num_heads: 2,
            ctx_hidden: 4,
            vocab: 6,
            enc_blocks: 1,
            enc_ff_dim: 8,
            joint_hidden: 8,
            feat_dim: 3,
            ..Default::default()
        };
        let model = Model::<f32>::init(cfg, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.bin");
        save(&path, &model, 0.0).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 10]).unwrap();
        assert!(load(&path).is_err());
    }
}
