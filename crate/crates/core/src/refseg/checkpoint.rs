//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 8    | magic `LPRSEG\0\0`             |
//! | 8      | 4    | format version (u32, = 1)      |
//! | 12     | 4    | patch radius (u32)             |
//! | 16     | 4    | hidden width (u32)             |
//! | 20     | 4    | input dimension (u32)          |
//! | 24     | 8    | parameter count (u64)          |
//! | 32     | 8n   | parameters (f64)               |

use alloc::vec::Vec;

use super::model::RefModel;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"LPRSEG\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;

pub fn encode_model(model: &RefModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * model.params().len());
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.patch_radius() as u32).to_le_bytes());
    out.extend_from_slice(&(model.hidden() as u32).to_le_bytes());
    out.extend_from_slice(&(model.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(model.params().len() as u64).to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_model(bytes: &[u8]) -> Result<RefModel> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Checkpoint("truncated header"));
    }
    if bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes"));
    if u32_at(8) != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint("unsupported version"));
    }
    let radius = u32_at(12) as usize;
    let hidden = u32_at(16) as usize;
    if radius > 16 {
        return Err(Error::Checkpoint("patch radius out of range"));
    }
    if u32_at(20) as usize != RefModel::input_dim_for(radius) {
        return Err(Error::Checkpoint("input dimension does not match patch radius"));
    }
    let count = u64::from_le_bytes(bytes[24..32].try_into().expect("8 bytes")) as usize;
    if bytes.len() != HEADER_LEN + 8 * count {
        return Err(Error::Checkpoint("parameter block length mismatch"));
    }
    let params =
        bytes[HEADER_LEN..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    RefModel::from_params(radius, hidden, params)
        .map_err(|_| Error::Checkpoint("parameters do not fit the architecture"))
}
