//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "MIGNCKPT"
//! version      u32
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON:
//!              {"config": ModelConfig, "variable": "MAX" | null,
//!               "tensors": [{"name": .., "shape": [..]}, ..]}
//! norm_mean    f64
//! norm_std     f64
//! data         every tensor's scalars as f64, in header order
//! ```
//!
//! Floats are written as raw IEEE-754 bits, so a save/load round trip is
//! bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use super::{MignModel, ModelConfig};
use crate::data::{NormStats, Variable};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"MIGNCKPT";

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    variable: Option<Variable>,
    tensors: Vec<TensorHeader>,
}

pub fn write_checkpoint<W: Write>(model: &MignModel, mut w: W) -> std::io::Result<()> {
    let header = Header {
        config: model.config().clone(),
        variable: model.variable(),
        tensors: model
            .params()
            .tensors()
            .iter()
            .map(|t| TensorHeader {
                name: t.name().to_string(),
                shape: t.shape().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).map_err(std::io::Error::other)?;
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    w.write_u64::<LittleEndian>(json.len() as u64)?;
    w.write_all(&json)?;
    let norm = model.norm();
    w.write_f64::<LittleEndian>(norm.mean)?;
    w.write_f64::<LittleEndian>(norm.std)?;
    for t in model.params().tensors() {
        for &v in t.data() {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()
}

/// Reads a checkpoint; `origin` names the source in error messages.
pub fn read_checkpoint<R: Read>(mut r: R, origin: &Path) -> Result<MignModel> {
    let bad = |m: String| Error::format(origin, m);
    let io = |e: std::io::Error| Error::io(origin, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io)?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let len = r.read_u64::<LittleEndian>().map_err(io)?;
    let mut json = vec![0u8; usize::try_from(len).map_err(|_| bad("header too large".into()))?];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header = serde_json::from_slice(&json).map_err(|e| bad(format!("header: {e}")))?;
    let mut model = MignModel::zeroed(header.config)?;
    model.set_variable(header.variable);
    let layout_matches = header.tensors.len() == model.params().tensors().len()
        && header
            .tensors
            .iter()
            .zip(model.params().tensors())
            .all(|(h, t)| h.name == t.name() && h.shape == t.shape());
    if !layout_matches {
        return Err(bad("tensor list does not match the stored config".into()));
    }
    let mean = r.read_f64::<LittleEndian>().map_err(io)?;
    let std = r.read_f64::<LittleEndian>().map_err(io)?;
    model.set_norm(NormStats { mean, std });
    for t in model.params_mut().tensors_mut() {
        r.read_f64_into::<LittleEndian>(t.data_mut()).map_err(io)?;
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest).map_err(io)? != 0 {
        return Err(bad("trailing bytes after tensor data".into()));
    }
    Ok(model)
}

pub fn save_checkpoint(model: &MignModel, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MignModel> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(BufReader::new(file), path)
}
