//! The rawpair format: a JSON sidecar plus a headerless binary payload.
//!
//! For a sidecar `case_image.json` the payload is `case_image.raw` in the
//! same directory. The sidecar is a single JSON object:
//!
//! ```json
//! {"format": "rawpair", "version": 1, "dims": [nx, ny, nz],
//!  "spacing": [sx, sy, sz], "dtype": "f64le"}
//! ```
//!
//! `dtype` is one of `u8`, `f32le` or `f64le`. The payload holds exactly
//! `nx * ny * nz` little-endian elements with x varying fastest, then y,
//! then z (`index = x + nx * (y + ny * z)`), and nothing else. Spacing is in
//! millimetres. Unknown sidecar keys are rejected.

use std::path::{Path, PathBuf};

use lesionprompt_core::{BinaryMask, Grid, Volume};
use serde::{Deserialize, Serialize};

use super::write_file;
use crate::error::{Error, Result};

pub const FORMAT_TAG: &str = "rawpair";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dtype {
    #[serde(rename = "u8")]
    U8,
    #[serde(rename = "f32le")]
    F32Le,
    #[serde(rename = "f64le")]
    F64Le,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::F32Le => 4,
            Dtype::F64Le => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub format: String,
    pub version: u32,
    pub dims: [i64; 3],
    pub spacing: [f64; 3],
    pub dtype: String,
}

/// Payload path belonging to a sidecar path.
pub fn raw_path(sidecar: &Path) -> PathBuf {
    sidecar.with_extension("raw")
}

fn write(grid: &Grid, payload: &[u8], dtype: Dtype, path: &Path) -> Result<()> {
    let dims = grid.dims().map(|n| n as i64);
    let dtype_name = match dtype {
        Dtype::U8 => "u8",
        Dtype::F32Le => "f32le",
        Dtype::F64Le => "f64le",
    };
    let side = Sidecar {
        format: FORMAT_TAG.into(),
        version: VERSION,
        dims,
        spacing: grid.spacing(),
        dtype: dtype_name.into(),
    };
    let mut text = serde_json::to_string_pretty(&side).map_err(|e| Error::Internal(e.to_string()))?;
    text.push('\n');
    write_file(&raw_path(path), payload)?;
    write_file(path, text.as_bytes())
}

pub fn write_volume(v: &Volume, path: &Path, dtype: Dtype) -> Result<()> {
    let mut payload = Vec::with_capacity(v.data().len() * dtype.width());
    for &x in v.data() {
        match dtype {
            Dtype::U8 => {
                if !(0.0..=255.0).contains(&x) || x.fract() != 0.0 {
                    return Err(Error::Data(format!("{}: value {x} is not representable as u8", path.display())));
                }
                payload.push(x as u8);
            }
            Dtype::F32Le => payload.extend_from_slice(&(x as f32).to_le_bytes()),
            Dtype::F64Le => payload.extend_from_slice(&x.to_le_bytes()),
        }
    }
    write(v.grid(), &payload, dtype, path)
}

pub fn write_mask(m: &BinaryMask, path: &Path) -> Result<()> {
    let payload: Vec<u8> = m.data().iter().map(|&b| u8::from(b)).collect();
    write(m.grid(), &payload, Dtype::U8, path)
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let side: Sidecar = serde_json::from_str(&text).map_err(|e| Error::header(path, e.to_string()))?;
    if side.format != FORMAT_TAG {
        return Err(Error::header(path, format!("format tag is {:?}, expected \"rawpair\"", side.format)));
    }
    if side.version != VERSION {
        return Err(Error::header(path, format!("version {} is not supported", side.version)));
    }
    let dtype = match side.dtype.as_str() {
        "u8" => Dtype::U8,
        "f32le" => Dtype::F32Le,
        "f64le" => Dtype::F64Le,
        other => return Err(Error::UnsupportedDatatype { path: path.into(), dtype: other.into() }),
    };
    let grid = Grid::new(side.dims.map(|n| n.max(0) as usize), side.spacing)?;
    let raw = raw_path(path);
    let bytes = std::fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    let expected = grid.len() * dtype.width();
    if bytes.len() != expected {
        return Err(lesionprompt_core::Error::DataLength { expected, actual: bytes.len() }.into());
    }
    let data: Vec<f64> = match dtype {
        Dtype::U8 => bytes.iter().map(|&b| f64::from(b)).collect(),
        Dtype::F32Le => bytes.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap()))).collect(),
        Dtype::F64Le => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    Ok(Volume::new(grid, data)?)
}
