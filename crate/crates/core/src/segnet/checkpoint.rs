//! Model checkpoint container.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      8 bytes  "CLSGCKPT"
//! version    u32      1
//! config     u32 length + UTF-8 `key = value` lines
//! seed       u64
//! count      u32      number of named tensors
//! per tensor u32 length + UTF-8 name, then a tensor record (see rawio)
//! ```

use std::fs;
use std::io::Read;
use std::path::Path;

use super::model::{Model, ModelConfig, Param};
use crate::error::{Error, Result};
use crate::rawio;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CLSGCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let w = &mut out;
    (|| -> std::io::Result<()> {
        rawio::write_u32(w, CHECKPOINT_VERSION)?;
        rawio::write_bytes(w, model.config().to_text().as_bytes())?;
        rawio::write_u64(w, model.seed())?;
        rawio::write_u32(w, model.params().len() as u32)?;
        for p in model.params() {
            rawio::write_bytes(w, p.name.as_bytes())?;
            rawio::write_tensor(w, &p.value)?;
        }
        Ok(())
    })()
    .expect("writing to a Vec cannot fail");
    out
}

pub fn decode_checkpoint(path: &Path, bytes: &[u8]) -> Result<Model> {
    let fail = |m: String| Error::format(path, m);
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| fail(e.to_string()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(fail("not a checkpoint file".into()));
    }
    let version = rawio::read_u32(&mut r).map_err(|e| fail(e.to_string()))?;
    if version != CHECKPOINT_VERSION {
        return Err(fail(format!("unsupported checkpoint version {version}")));
    }
    let header = rawio::read_bytes(&mut r, 1 << 16).map_err(|e| fail(e.to_string()))?;
    let header = String::from_utf8(header).map_err(|e| fail(e.to_string()))?;
    let config = ModelConfig::from_text(&header)?;
    let seed = rawio::read_u64(&mut r).map_err(|e| fail(e.to_string()))?;
    let count = rawio::read_u32(&mut r).map_err(|e| fail(e.to_string()))? as usize;
    let mut params = Vec::with_capacity(count);
    for _ in 0..count {
        let name = rawio::read_bytes(&mut r, 1 << 12).map_err(|e| fail(e.to_string()))?;
        let name = String::from_utf8(name).map_err(|e| fail(e.to_string()))?;
        let value = rawio::read_tensor(&mut r).map_err(|e| fail(e.to_string()))?;
        params.push(Param { name, value });
    }
    if !r.is_empty() {
        return Err(fail("trailing bytes after checkpoint".into()));
    }
    // The stored tensors must describe exactly the architecture in the header.
    let reference = Model::build(config.clone(), seed)?;
    let layout_matches = reference.params().len() == params.len()
        && reference
            .params()
            .iter()
            .zip(&params)
            .all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape());
    if !layout_matches {
        return Err(fail(
            "parameters do not match the configured architecture".into(),
        ));
    }
    Model::from_parts(config, seed, params)
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    rawio::write_atomic(path, &encode_checkpoint(model))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(path, &bytes)
}
