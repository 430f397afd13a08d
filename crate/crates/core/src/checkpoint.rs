//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic     8 bytes  "TABSIMCK"
//! version   u32
//! metadata  u64 length + UTF-8 JSON (model config, training metadata)
//! vocab     u32 count, then per token: u32 length + UTF-8 bytes
//! tensors   u32 count, then per tensor:
//!           u32 name length + name, u32 rank, rank x u64 dims,
//!           product(dims) x f64
//! ```
//!
//! Parameter tensors are stored in registration order, followed by the
//! batch-normalization running statistics under
//! `<layer>.bn.running_mean` / `<layer>.bn.running_var`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tablesim_tensor::Tensor;

use crate::error::{Error, Result};
use crate::siamese::{ModelConfig, TabSimModel, TrainConfig};
use crate::vocab::Vocabulary;

pub const MAGIC: &[u8; 8] = b"TABSIMCK";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub train: Option<TrainConfig>,
    pub pairs: usize,
    pub loss_history: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Metadata {
    model: ModelConfig,
    training: TrainingMetadata,
}

fn running_stats(model: &TabSimModel) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    for (name, mlp) in [
        ("column_mlp", &model.tabular.column_mlp),
        ("table_mlp", &model.tabular.table_mlp),
    ] {
        out.push((format!("{name}.bn.running_mean"), mlp.bn.running_mean.clone()));
        out.push((format!("{name}.bn.running_var"), mlp.bn.running_var.clone()));
    }
    out
}

pub fn to_bytes(model: &TabSimModel, training: &TrainingMetadata) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let meta = serde_json::to_vec(&Metadata {
        model: model.config,
        training: training.clone(),
    })
    .expect("metadata serializes");
    buf.extend_from_slice(&(meta.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta);

    let tokens = model.vocab.tokens();
    buf.extend_from_slice(&(tokens.len() as u32).to_le_bytes());
    for t in tokens {
        buf.extend_from_slice(&(t.len() as u32).to_le_bytes());
        buf.extend_from_slice(t.as_bytes());
    }

    let stats = running_stats(model);
    buf.extend_from_slice(&((model.store.len() + stats.len()) as u32).to_le_bytes());
    let mut put = |name: &str, shape: &[usize], data: &[f64]| {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(shape.len() as u32).to_le_bytes());
        for &d in shape {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    };
    for (_, name, t) in model.store.iter() {
        put(name, t.shape(), t.data());
    }
    for (name, v) in &stats {
        put(name, &[v.len()], v);
    }
    buf
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
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
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

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<(TabSimModel, TrainingMetadata)> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = r.u64()? as usize;
    let meta: Metadata =
        serde_json::from_slice(r.take(meta_len)?).map_err(|e| Error::Checkpoint(format!("metadata: {e}")))?;

    let n_tokens = r.u32()? as usize;
    let tokens = (0..n_tokens).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let vocab = Vocabulary::from_stored(tokens).map_err(|e| Error::Checkpoint(format!("vocabulary: {e}")))?;

    let mut model = TabSimModel::new(meta.model, vocab, None)?;
    let n_tensors = r.u32()? as usize;
    let mut seen = 0;
    for _ in 0..n_tensors {
        let name = r.string()?;
        let rank = r.u32()? as usize;
        let shape = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let bytes = r.take(
            len.checked_mul(8)
                .ok_or_else(|| Error::Checkpoint("tensor too large".into()))?,
        )?;
        let data: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if let Some(id) = model.store.id_of(&name) {
            if model.store.get(id).shape() != shape.as_slice() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {shape:?}, model expects {:?}",
                    model.store.get(id).shape()
                )));
            }
            *model.store.get_mut(id) = Tensor::new(shape, data)?;
            seen += 1;
            continue;
        }
        let tabular = &mut model.tabular;
        let target = match name.as_str() {
            "column_mlp.bn.running_mean" => &mut tabular.column_mlp.bn.running_mean,
            "column_mlp.bn.running_var" => &mut tabular.column_mlp.bn.running_var,
            "table_mlp.bn.running_mean" => &mut tabular.table_mlp.bn.running_mean,
            "table_mlp.bn.running_var" => &mut tabular.table_mlp.bn.running_var,
            _ => return Err(Error::Checkpoint(format!("unknown tensor {name}"))),
        };
        if target.len() != data.len() {
            return Err(Error::Checkpoint(format!("tensor {name} has {} values", data.len())));
        }
        *target = data;
    }
    if seen != model.store.len() {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {seen} of {} parameters",
            model.store.len()
        )));
    }
    if r.pos != buf.len() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }
    Ok((model, meta.training))
}

pub fn save(path: impl AsRef<Path>, model: &TabSimModel, training: &TrainingMetadata) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model, training)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<(TabSimModel, TrainingMetadata)> {
    let path = path.as_ref();
    from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
