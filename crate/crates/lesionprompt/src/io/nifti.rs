//! Minimal NIfTI-1 single-file (`.nii`) reader and writer.
//!
//! Layout written: a 348-byte little-endian header, 4 zero extension bytes,
//! then the voxel data at offset 352 with x varying fastest. Volumes are
//! float32 (datatype 16), masks uint8 (datatype 2). Spacing goes to
//! `pixdim[1..=3]` in millimetres. qform/sform codes are 0 and no affine is
//! read back. Big-endian files and datatypes other than 2 and 16 are
//! rejected.

use std::path::Path;

use lesionprompt_core::{BinaryMask, Grid, Volume};

use super::write_file;
use crate::error::{Error, Result};

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
pub const DT_UINT8: i16 = 2;
pub const DT_FLOAT32: i16 = 16;

fn put_i16(buf: &mut [u8], off: usize, v: i16) {
    buf[off..off + 2].copy_from_slice(&v.to_le_bytes());
}

fn put_f32(buf: &mut [u8], off: usize, v: f32) {
    buf[off..off + 4].copy_from_slice(&v.to_le_bytes());
}

fn get_i16(buf: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([buf[off], buf[off + 1]])
}

fn get_f32(buf: &[u8], off: usize) -> f32 {
    f32::from_le_bytes([buf[off], buf[off + 1], buf[off + 2], buf[off + 3]])
}

fn header(grid: &Grid, datatype: i16, bitpix: i16) -> Result<Vec<u8>> {
    let mut h = vec![0u8; VOX_OFFSET];
    h[0..4].copy_from_slice(&(HEADER_SIZE as i32).to_le_bytes());
    h[38] = b'r';
    put_i16(&mut h, 40, 3);
    for (axis, &n) in grid.dims().iter().enumerate() {
        let n = i16::try_from(n).map_err(|_| Error::Data(format!("dimension {n} does not fit NIfTI-1")))?;
        put_i16(&mut h, 42 + 2 * axis, n);
    }
    for k in 4..8 {
        put_i16(&mut h, 40 + 2 * k, 1);
    }
    put_i16(&mut h, 70, datatype);
    put_i16(&mut h, 72, bitpix);
    put_f32(&mut h, 76, 1.0);
    for (axis, &s) in grid.spacing().iter().enumerate() {
        put_f32(&mut h, 80 + 4 * axis, s as f32);
    }
    put_f32(&mut h, 108, VOX_OFFSET as f32);
    put_f32(&mut h, 112, 1.0);
    h[123] = 2; // millimetres
    h[344..348].copy_from_slice(b"n+1\0");
    Ok(h)
}

/// Writes `v` as float32. Values outside the f32 range are a data error.
pub fn write_volume(v: &Volume, path: &Path) -> Result<()> {
    let mut bytes = header(v.grid(), DT_FLOAT32, 32)?;
    bytes.reserve(v.data().len() * 4);
    for &x in v.data() {
        let f = x as f32;
        if !f.is_finite() {
            return Err(Error::Data(format!("{}: value {x} overflows float32", path.display())));
        }
        bytes.extend_from_slice(&f.to_le_bytes());
    }
    write_file(path, &bytes)
}

/// Writes `m` as uint8 with values 0 and 1.
pub fn write_mask(m: &BinaryMask, path: &Path) -> Result<()> {
    let mut bytes = header(m.grid(), DT_UINT8, 8)?;
    bytes.extend(m.data().iter().map(|&b| u8::from(b)));
    write_file(path, &bytes)
}

/// Reads a uint8 or float32 file into an f64 volume.
pub fn read_volume(path: &Path) -> Result<Volume> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<Volume> {
    if bytes.len() < HEADER_SIZE {
        return Err(Error::header(path, format!("file is {} bytes, shorter than the header", bytes.len())));
    }
    let sizeof_hdr = i32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if sizeof_hdr != HEADER_SIZE as i32 {
        let reason = if i32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) == HEADER_SIZE as i32 {
            "big-endian files are not supported".to_string()
        } else {
            format!("sizeof_hdr is {sizeof_hdr}, expected 348")
        };
        return Err(Error::header(path, reason));
    }
    if &bytes[344..348] != b"n+1\0" {
        return Err(Error::header(path, "magic is not \"n+1\\0\""));
    }
    let ndim = get_i16(bytes, 40);
    if !(1..=7).contains(&ndim) {
        return Err(Error::header(path, format!("dim[0] = {ndim} outside 1..=7")));
    }
    let mut dims = [1usize; 3];
    for k in 1..=ndim as usize {
        let n = get_i16(bytes, 40 + 2 * k);
        if k <= 3 {
            dims[k - 1] = n.max(0) as usize;
        } else if n != 1 {
            return Err(Error::header(path, format!("dim[{k}] = {n}; only 3D volumes are supported")));
        }
    }
    let mut spacing = [1.0f64; 3];
    for (axis, s) in spacing.iter_mut().enumerate().take(ndim.min(3) as usize) {
        *s = f64::from(get_f32(bytes, 80 + 4 * axis));
    }
    let grid = Grid::new(dims, spacing)?;

    let datatype = get_i16(bytes, 70);
    let width = match datatype {
        DT_UINT8 => 1,
        DT_FLOAT32 => 4,
        other => return Err(Error::UnsupportedDatatype { path: path.into(), dtype: format!("code {other}") }),
    };
    let vox_offset = get_f32(bytes, 108);
    if !(vox_offset.is_finite() && vox_offset >= HEADER_SIZE as f32) {
        return Err(Error::header(path, format!("vox_offset {vox_offset} is invalid")));
    }
    let start = vox_offset as usize;
    let end = start + grid.len() * width;
    if bytes.len() < end {
        return Err(Error::header(path, format!("data truncated: need {end} bytes, file has {}", bytes.len())));
    }
    let payload = &bytes[start..end];
    let data: Vec<f64> = match datatype {
        DT_UINT8 => payload.iter().map(|&b| f64::from(b)).collect(),
        _ => payload.chunks_exact(4).map(|c| f64::from(f32::from_le_bytes([c[0], c[1], c[2], c[3]]))).collect(),
    };
    Ok(Volume::new(grid, data)?)
}
