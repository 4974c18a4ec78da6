//! Binary checkpoint format.
//!
//! Little-endian layout:
//!
//! ```text
//! "DDCP"                      magic
//! u32                         format version (1)
//! u32 len, bytes              model kind (UTF-8)
//! u32 len, bytes              config snapshot (UTF-8)
//! u32                         array count
//! per array:
//!   u32 len, bytes            name (UTF-8)
//!   u8                        dtype tag (0 = f32, 1 = f64)
//!   u8                        rank
//!   u64 × rank                dims
//!   raw element data
//! ```

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::scalar::{DType, Scalar};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"DDCP";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported version {0} (expected {VERSION})")]
    UnsupportedVersion(u32),
    #[error("truncated checkpoint at byte {0}")]
    Truncated(usize),
    #[error("unknown dtype tag {0}")]
    BadDtype(u8),
    #[error("invalid UTF-8 in {0}")]
    BadUtf8(&'static str),
    #[error("array {name}: {reason}")]
    BadArray { name: String, reason: String },
    #[error("expected model kind {expected:?}, found {found:?}")]
    WrongKind { expected: String, found: String },
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
    #[error("config snapshot: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint<T> {
    pub model_kind: String,
    pub config: String,
    pub arrays: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn from_store(model_kind: &str, config: &str, store: &ParamStore<T>) -> Self {
        Self {
            model_kind: model_kind.to_string(),
            config: config.to_string(),
            arrays: store
                .iter()
                .map(|(n, t)| (n.to_string(), t.clone()))
                .collect(),
        }
    }

    pub fn to_store(&self) -> Result<ParamStore<T>, CheckpointError> {
        let mut store = ParamStore::new();
        for (name, t) in &self.arrays {
            store
                .insert(name, t.clone())
                .map_err(|e| CheckpointError::BadArray {
                    name: name.clone(),
                    reason: e.to_string(),
                })?;
        }
        Ok(store)
    }

    pub fn expect_kind(&self, kind: &str) -> Result<(), CheckpointError> {
        if self.model_kind != kind {
            return Err(CheckpointError::WrongKind {
                expected: kind.to_string(),
                found: self.model_kind.clone(),
            });
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_str(&mut out, &self.model_kind);
        put_str(&mut out, &self.config);
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        for (name, t) in &self.arrays {
            put_str(&mut out, name);
            out.push(T::DTYPE as u8);
            out.push(t.rank() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.data() {
                x.write_le(&mut out);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let model_kind = r.string("model kind")?;
        let config = r.string("config")?;
        let count = r.u32()? as usize;
        let mut arrays = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let name = r.string("array name")?;
            let tag = r.u8()?;
            let dtype = DType::from_tag(tag).ok_or(CheckpointError::BadDtype(tag))?;
            let rank = r.u8()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u64()? as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| CheckpointError::BadArray {
                    name: name.clone(),
                    reason: "dimension overflow".into(),
                })?;
            let width = dtype.size();
            let raw = r.take(n.checked_mul(width).ok_or(CheckpointError::Truncated(r.pos))?)?;
            let data: Vec<T> = match dtype {
                DType::F32 => raw
                    .chunks_exact(4)
                    .map(|c| T::lit(f32::read_le(c) as f64))
                    .collect(),
                DType::F64 => raw.chunks_exact(8).map(|c| T::lit(f64::read_le(c))).collect(),
            };
            let t = Tensor::new(&shape, data).map_err(|e| CheckpointError::BadArray {
                name: name.clone(),
                reason: e.to_string(),
            })?;
            arrays.push((name, t));
        }
        Ok(Self {
            model_kind,
            config,
            arrays,
        })
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated(self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &'static str) -> Result<String, CheckpointError> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| CheckpointError::BadUtf8(what))
    }
}

pub fn save_checkpoint<T: Scalar>(ckpt: &Checkpoint<T>, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, ckpt.to_bytes()).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Checkpoint<T>, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    Checkpoint::from_bytes(&bytes)
}

/// Splits a `key=value`-per-line config snapshot.
pub fn parse_config_snapshot(text: &str) -> Result<BTreeMap<String, String>, CheckpointError> {
    let mut out = BTreeMap::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CheckpointError::BadConfig(format!("line {line:?} has no '='")))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Reads and parses one entry of a parsed config snapshot.
pub fn config_field<V: std::str::FromStr>(
    map: &BTreeMap<String, String>,
    key: &str,
) -> Result<V, CheckpointError> {
    let raw = map
        .get(key)
        .ok_or_else(|| CheckpointError::BadConfig(format!("missing {key}")))?;
    raw.parse()
        .map_err(|_| CheckpointError::BadConfig(format!("bad value {raw:?} for {key}")))
}
