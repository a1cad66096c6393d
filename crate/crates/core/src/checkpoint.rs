//! Checkpoint archive: `CPGSUMCK`, a little-endian `u64` header length, a
//! JSON header (format version, run config, vocabularies, epoch, tensor
//! manifest) and a payload of little-endian `f32` values.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::vocab::Vocab;

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"CPGSUMCK";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub dtype: String,
    /// Byte offset into the payload.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub format_version: u32,
    pub config: RunConfig,
    pub config_hash: u64,
    pub code_vocab: Vocab,
    pub summary_vocab: Vocab,
    pub epoch: usize,
    pub tensors: Vec<TensorEntry>,
}

pub fn to_bytes(model: &Model, epoch: usize) -> Result<Vec<u8>> {
    let mut tensors = Vec::new();
    let mut payload = Vec::new();
    for (name, t) in model.params.iter() {
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: [t.rows(), t.cols()],
            dtype: "f32".into(),
            offset: payload.len(),
        });
        for &x in t.data().iter() {
            payload.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        config: model.config.clone(),
        config_hash: model.config.hash(),
        code_vocab: model.code_vocab.clone(),
        summary_vocab: model.summary_vocab.clone(),
        epoch,
        tensors,
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend(json);
    out.extend(payload);
    Ok(out)
}

pub fn read_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    let rest = bytes.strip_prefix(MAGIC.as_slice()).ok_or_else(|| bad("not a checkpoint file"))?;
    if rest.len() < 8 {
        return Err(bad("truncated header"));
    }
    let (len, rest) = rest.split_at(8);
    let len = u64::from_le_bytes(len.try_into().expect("8 bytes")) as usize;
    if rest.len() < len {
        return Err(bad("truncated header"));
    }
    let (json, payload) = rest.split_at(len);
    let header: Header = serde_json::from_slice(json)?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {}", header.format_version)));
    }
    if header.config.hash() != header.config_hash {
        return Err(bad("embedded config does not match its hash"));
    }
    Ok((header, payload))
}

/// Rebuilds the model; returns it with the stored epoch counter.
pub fn from_bytes(bytes: &[u8]) -> Result<(Model, usize)> {
    let (header, payload) = read_header(bytes)?;
    let model = Model::new(header.config, header.code_vocab, header.summary_vocab)?;
    let expected: Vec<(&str, [usize; 2])> = model.params.iter().map(|(n, t)| (n, [t.rows(), t.cols()])).collect();
    let stored: Vec<(&str, [usize; 2])> = header.tensors.iter().map(|e| (e.name.as_str(), e.shape)).collect();
    if expected != stored {
        return Err(Error::Contract(
            "checkpoint tensors do not match the model implied by its config and vocabularies".into(),
        ));
    }
    for ((_, t), entry) in model.params.iter().zip(&header.tensors) {
        if entry.dtype != "f32" {
            return Err(Error::Checkpoint(format!("tensor {}: unsupported dtype {}", entry.name, entry.dtype)));
        }
        let end = entry.offset + 4 * t.len();
        let raw = payload
            .get(entry.offset..end)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {} runs past the payload", entry.name)))?;
        let mut data = t.data_mut();
        for (x, chunk) in data.iter_mut().zip(raw.chunks_exact(4)) {
            *x = f64::from(f32::from_le_bytes(chunk.try_into().expect("4 bytes")));
        }
    }
    Ok((model, header.epoch))
}

pub fn save(model: &Model, epoch: usize, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(model, epoch)?)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<(Model, usize)> {
    let bytes = fs::read(path).map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
    from_bytes(&bytes)
}

/// Where the retrieval index of a checkpoint lives.
pub fn index_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".index.bin");
    PathBuf::from(name)
}
