//! Binary checkpoint format.
//!
//! ```text
//! magic     4 bytes  "PNRF"
//! version   u32 LE   1
//! config    u32 LE length n, then n bytes of SceneConfig JSON
//! count     u64 LE   number of parameters
//! params    count × f32 LE, in FieldParams::slices order
//! ```

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::SceneConfig;
use crate::error::{Error, Result};
use crate::field::{FieldParams, RadianceField};

pub const MAGIC: [u8; 4] = *b"PNRF";
pub const VERSION: u32 = 1;

/// Everything in a checkpoint except the parameter values.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckpointHeader {
    pub magic: String,
    pub version: u32,
    pub param_count: u64,
    pub config: SceneConfig,
}

pub fn to_bytes(field: &RadianceField<f32>) -> Vec<u8> {
    let json = serde_json::to_vec(field.config()).expect("config serializes");
    let count = field.params.len();
    let mut out = Vec::with_capacity(20 + json.len() + 4 * count);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(count as u64).to_le_bytes());
    for s in field.params.slices() {
        for v in s {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        };
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

fn read_header(r: &mut Reader<'_>) -> Result<CheckpointHeader> {
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Checkpoint(format!("bad magic {magic:?}, not a checkpoint")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version} (this build reads version {VERSION})"
        )));
    }
    let n = r.u32("config length")? as usize;
    let json = r.take(n, "config")?;
    let config: SceneConfig =
        serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("invalid config: {e}")))?;
    let param_count = r.u64("parameter count")?;
    Ok(CheckpointHeader {
        magic: String::from_utf8_lossy(&MAGIC).into_owned(),
        version,
        param_count,
        config,
    })
}

pub fn header_from_bytes(bytes: &[u8]) -> Result<CheckpointHeader> {
    read_header(&mut Reader { bytes, pos: 0 })
}

pub fn from_bytes(bytes: &[u8]) -> Result<RadianceField<f32>> {
    let mut r = Reader { bytes, pos: 0 };
    let header = read_header(&mut r)?;
    header.config.validate().map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut params = FieldParams::<f32>::zeros(&header.config);
    if params.len() as u64 != header.param_count {
        return Err(Error::Checkpoint(format!(
            "config implies {} parameters but the file holds {}",
            params.len(),
            header.param_count
        )));
    }
    for s in params.slices_mut() {
        let raw = r.take(4 * s.len(), "parameters")?;
        for (v, b) in s.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(b.try_into().expect("4 bytes"));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    RadianceField::new(header.config, params).map_err(|e| Error::Checkpoint(e.to_string()))
}

/// Writes atomically through a temporary sibling file.
pub fn save(field: &RadianceField<f32>, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, to_bytes(field)).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<RadianceField<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {}", path.display(), strip(e))))
}

pub fn inspect(path: &Path) -> Result<CheckpointHeader> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    header_from_bytes(&bytes).map_err(|e| Error::Checkpoint(format!("{}: {}", path.display(), strip(e))))
}

fn strip(e: Error) -> String {
    match e {
        Error::Checkpoint(m) => m,
        other => other.to_string(),
    }
}
