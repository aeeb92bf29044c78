//! Weights file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic            4 bytes, "SAPW"
//! version          u32
//! spec_len         u32
//! spec             spec_len bytes of JSON (the ModelSpec)
//! n_entries        u32, number of parameterized layers
//! per entry:
//!   layer_index    u32
//!   weight tensor  u32 ndim, u32 * ndim dims, f64 * count values
//!   bias tensor    same encoding
//! ```
//!
//! Truncated files and trailing bytes are integrity errors; a version
//! other than [`FORMAT_VERSION`] is rejected explicitly.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

use super::{LayerParams, Model, ModelParams, ModelSpec, Tensor};

pub const MAGIC: [u8; 4] = *b"SAPW";
pub const FORMAT_VERSION: u32 = 1;

pub(super) fn save(path: &Path, model: &Model) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    let spec_json = serde_json::to_vec(model.spec())
        .map_err(|e| Error::WeightsFormat(format!("spec serialization failed: {e}")))?;
    out.extend_from_slice(&(spec_json.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec_json);

    let entries: Vec<(usize, &LayerParams)> = model
        .params()
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, p)| p.as_ref().map(|p| (i, p)))
        .collect();
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (index, params) in entries {
        out.extend_from_slice(&(index as u32).to_le_bytes());
        write_tensor(&mut out, &params.weight);
        write_tensor(&mut out, &params.bias);
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

fn write_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub(super) fn load(path: &Path) -> Result<Model> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cursor = Cursor {
        bytes: &bytes,
        pos: 0,
    };

    let magic = cursor.take(4)?;
    if magic != MAGIC {
        return Err(Error::WeightsFormat("bad magic, not a weights file".into()));
    }
    let version = cursor.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let spec_len = cursor.u32()? as usize;
    let spec_json = cursor.take(spec_len)?;
    let spec: ModelSpec = serde_json::from_slice(spec_json)
        .map_err(|e| Error::WeightsFormat(format!("spec block does not parse: {e}")))?;
    spec.validate()?;

    let mut layers: Vec<Option<LayerParams>> = vec![None; spec.layers.len()];
    let n_entries = cursor.u32()? as usize;
    for _ in 0..n_entries {
        let index = cursor.u32()? as usize;
        if index >= layers.len() {
            return Err(Error::WeightsFormat(format!(
                "parameter entry for layer {index}, but spec has {} layers",
                layers.len()
            )));
        }
        let weight = read_tensor(&mut cursor)?;
        let bias = read_tensor(&mut cursor)?;
        layers[index] = Some(LayerParams { weight, bias });
    }
    if cursor.pos != bytes.len() {
        return Err(Error::WeightsFormat(format!(
            "{} trailing bytes after the last tensor",
            bytes.len() - cursor.pos
        )));
    }
    Model::new(spec, ModelParams { layers })
}

fn read_tensor(cursor: &mut Cursor<'_>) -> Result<Tensor> {
    let ndim = cursor.u32()? as usize;
    if ndim > 8 {
        return Err(Error::WeightsFormat(format!(
            "implausible tensor rank {ndim}"
        )));
    }
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        shape.push(cursor.u32()? as usize);
    }
    let count: usize = shape.iter().product();
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        let v = f64::from_le_bytes(cursor.take(8)?.try_into().expect("8 bytes"));
        if !v.is_finite() {
            return Err(Error::WeightsFormat("non-finite tensor value".into()));
        }
        data.push(v);
    }
    Tensor::new(shape, data)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::WeightsFormat("unexpected end of file".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}
