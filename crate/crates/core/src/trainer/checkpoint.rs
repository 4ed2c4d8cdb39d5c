//! Checkpoint files: an 8-byte little-endian header length, a JSON header,
//! then parameters and Adam moments as little-endian `f64`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "derf-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    pub step: u64,
    pub config: TrainConfig,
    pub param_count: usize,
    pub adam_t: u64,
    pub train_ids: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub params: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header).expect("header serializes");
        let mut out = Vec::with_capacity(8 + header.len() + 24 * self.params.len());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for buf in [&self.params, &self.m, &self.v] {
            for x in buf.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Manifest(format!("checkpoint: {m}"));
        let len = u64::from_le_bytes(bytes.get(..8).ok_or_else(|| bad("truncated"))?.try_into().expect("8 bytes")) as usize;
        let header_bytes = bytes.get(8..8 + len).ok_or_else(|| bad("truncated header"))?;
        let header: CheckpointHeader = serde_json::from_slice(header_bytes).map_err(|e| bad(&e.to_string()))?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
            return Err(bad(&format!("unsupported format {} v{}", header.format, header.version)));
        }
        let n = header.param_count;
        let body = &bytes[8 + len..];
        if body.len() != 24 * n {
            return Err(bad(&format!("expected {} bytes of state, found {}", 24 * n, body.len())));
        }
        let read = |k: usize| -> Vec<f64> {
            body[8 * n * k..8 * n * (k + 1)]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect()
        };
        Ok(Checkpoint {
            params: read(0),
            m: read(1),
            v: read(2),
            header,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let ck = Checkpoint {
            header: CheckpointHeader {
                format: CHECKPOINT_FORMAT.into(),
                version: CHECKPOINT_VERSION,
                step: 7,
                config: TrainConfig::tiny(),
                param_count: 3,
                adam_t: 7,
                train_ids: vec![0, 2],
            },
            params: vec![1.0, -0.5, 1e-300],
            m: vec![0.0, 1.0, 2.0],
            v: vec![3.0, 4.0, f64::MIN_POSITIVE],
        };
        let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
        assert_eq!(back, ck);
        assert!(Checkpoint::from_bytes(&ck.to_bytes()[..20]).is_err());
    }
}
