//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "UMIXCKPT" | u32 version | u64 file_len | u64 header_len | header JSON
//! u32 record_count | records... | 32-byte SHA-256 of everything before it
//! record: u32 name_len | name | u32 ndim | u64 dims[ndim] | f64 data[numel]
//! ```
//!
//! Tensor records are grouped by prefix: `param/`, `best/`, `adam.m/`, `adam.v/`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::tensor::ParamStore;

use super::adam::{AdamHyper, AdamState};
use super::{EpochRecord, TrainConfig};

pub const MAGIC: &[u8; 8] = b"UMIXCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model_config: ModelConfig,
    pub train_config: TrainConfig,
    pub params: ParamStore,
    pub best_params: ParamStore,
    pub best_val: Option<f64>,
    pub adam: AdamState,
    pub rng_seed: u64,
    pub rng_word_pos: u128,
    /// Epoch records; wall-clock times are not persisted so files stay reproducible.
    pub history: Vec<EpochRecord>,
    pub stale_epochs: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model_config: ModelConfig,
    train_config: TrainConfig,
    best_val: Option<f64>,
    adam: AdamHyper,
    adam_step: u64,
    rng_seed: u64,
    rng_word_pos: String,
    history: Vec<(usize, f64, Option<f64>)>,
    stale_epochs: usize,
}

impl PartialEq for ParamStore {
    fn eq(&self, other: &Self) -> bool {
        self.len() == other.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|((_, a), (_, b))| a.name == b.name && a.shape == b.shape && a.data() == b.data())
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_record(out: &mut Vec<u8>, name: &str, shape: &[usize], data: &[f64]) {
    put_u32(out, name.len() as u32);
    out.extend_from_slice(name.as_bytes());
    put_u32(out, shape.len() as u32);
    for &d in shape {
        put_u64(out, d as u64);
    }
    for &v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            model_config: self.model_config.clone(),
            train_config: self.train_config.clone(),
            best_val: self.best_val,
            adam: self.adam.hyper,
            adam_step: self.adam.step,
            rng_seed: self.rng_seed,
            rng_word_pos: self.rng_word_pos.to_string(),
            history: self.history.iter().map(|r| (r.epoch, r.train_l1, r.val_l1)).collect(),
            stale_epochs: self.stale_epochs,
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, FORMAT_VERSION);
        put_u64(&mut out, 0);
        put_u64(&mut out, json.len() as u64);
        out.extend_from_slice(&json);

        let n = self.params.len();
        put_u32(&mut out, (4 * n) as u32);
        for (_, p) in self.params.iter() {
            put_record(&mut out, &format!("param/{}", p.name), &p.shape, p.data());
        }
        for (_, p) in self.best_params.iter() {
            put_record(&mut out, &format!("best/{}", p.name), &p.shape, p.data());
        }
        for ((_, p), m) in self.params.iter().zip(&self.adam.m) {
            put_record(&mut out, &format!("adam.m/{}", p.name), &p.shape, m);
        }
        for ((_, p), v) in self.params.iter().zip(&self.adam.v) {
            put_record(&mut out, &format!("adam.v/{}", p.name), &p.shape, v);
        }
        let total = (out.len() + 32) as u64;
        out[12..20].copy_from_slice(&total.to_le_bytes());
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 20 + 32 {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let declared = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
        if declared != bytes.len() as u64 {
            return Err(Error::Checkpoint(format!(
                "truncated or padded file: header declares {declared} bytes, found {}",
                bytes.len()
            )));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum);
        }
        let mut r = Reader { buf: body, pos: 20 };
        let header_len = r.u64()? as usize;
        let header_bytes = r.take(header_len)?;
        let header: Header = serde_json::from_slice(header_bytes)?;
        let count = r.u32()? as usize;
        if count % 4 != 0 {
            return Err(Error::Checkpoint(format!("record count {count} is not a multiple of 4")));
        }
        let n = count / 4;
        let mut groups: [Vec<(String, Vec<usize>, Vec<f64>)>; 4] = Default::default();
        let prefixes = ["param/", "best/", "adam.m/", "adam.v/"];
        for (g, prefix) in prefixes.iter().enumerate() {
            for _ in 0..n {
                let (name, shape, data) = r.record()?;
                let stripped = name
                    .strip_prefix(prefix)
                    .ok_or_else(|| Error::Checkpoint(format!("record `{name}` out of order, expected prefix {prefix}")))?;
                groups[g].push((stripped.to_string(), shape, data));
            }
        }
        if r.pos != body.len() {
            return Err(Error::Checkpoint("trailing bytes after records".into()));
        }
        let [params, best, m, v] = groups;
        let to_store = |recs: &[(String, Vec<usize>, Vec<f64>)]| -> Result<ParamStore> {
            let mut s = ParamStore::new();
            for (name, shape, data) in recs {
                s.add(name.clone(), shape.clone(), data.clone())?;
            }
            Ok(s)
        };
        let params_store = to_store(&params)?;
        let best_store = to_store(&best)?;
        for group in [&best, &m, &v] {
            for ((a, sa, _), (b, sb, _)) in params.iter().zip(group.iter()) {
                if a != b || sa != sb {
                    return Err(Error::Checkpoint(format!("record `{b}` does not match parameter `{a}`")));
                }
            }
        }
        let rng_word_pos = header
            .rng_word_pos
            .parse::<u128>()
            .map_err(|e| Error::Checkpoint(format!("bad rng position: {e}")))?;
        Ok(Checkpoint {
            model_config: header.model_config,
            train_config: header.train_config,
            params: params_store,
            best_params: best_store,
            best_val: header.best_val,
            adam: AdamState {
                hyper: header.adam,
                step: header.adam_step,
                m: m.into_iter().map(|r| r.2).collect(),
                v: v.into_iter().map(|r| r.2).collect(),
            },
            rng_seed: header.rng_seed,
            rng_word_pos,
            history: header
                .history
                .into_iter()
                .map(|(epoch, train_l1, val_l1)| EpochRecord {
                    epoch,
                    train_l1,
                    val_l1,
                    wall_ms: 0,
                })
                .collect(),
            stale_epochs: header.stale_epochs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Checkpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn record(&mut self) -> Result<(String, Vec<usize>, Vec<f64>)> {
        let name_len = self.u32()? as usize;
        let name = String::from_utf8(self.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("record name is not UTF-8".into()))?;
        let ndim = self.u32()? as usize;
        let mut shape = Vec::with_capacity(ndim.min(16));
        for _ in 0..ndim {
            shape.push(self.u64()? as usize);
        }
        let numel = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Checkpoint(format!("record `{name}` has an overflowing shape")))?;
        let raw = self.take(numel.checked_mul(8).ok_or_else(|| Error::Checkpoint("record too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok((name, shape, data))
    }
}
