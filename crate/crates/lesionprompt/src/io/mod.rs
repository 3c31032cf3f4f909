//! Volume and mask files.
//!
//! Two formats are supported, chosen by file extension:
//!
//! * `.nii`: single-file NIfTI-1, little-endian. Volumes are stored as
//!   float32 (datatype 16) and masks as uint8 (datatype 2). Only the `dim`
//!   and `pixdim` header fields are interpreted; the affine is ignored.
//! * `.json`: a rawpair, i.e. a JSON sidecar plus a `.raw` payload with the
//!   same stem. See [`rawpair`] for the exact layout.

pub mod nifti;
pub mod rawpair;

use std::path::Path;

use lesionprompt_core::{BinaryMask, Volume};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Nifti1,
    Rawpair,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Nifti1 => "nii",
            Format::Rawpair => "json",
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("nii") => Ok(Format::Nifti1),
            Some("json") => Ok(Format::Rawpair),
            _ => Err(Error::Data(format!("{}: unknown volume file extension", path.display()))),
        }
    }
}

pub fn load_volume(path: &Path, format: Format) -> Result<Volume> {
    match format {
        Format::Nifti1 => nifti::read_volume(path),
        Format::Rawpair => rawpair::read_volume(path),
    }
}

/// Loads a mask; nonzero voxels are foreground.
pub fn load_mask(path: &Path, format: Format) -> Result<BinaryMask> {
    let v = load_volume(path, format)?;
    let data = v.data().iter().map(|&x| x != 0.0).collect();
    Ok(BinaryMask::new(*v.grid(), data)?)
}

pub fn write_volume(v: &Volume, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Nifti1 => nifti::write_volume(v, path),
        Format::Rawpair => rawpair::write_volume(v, path, rawpair::Dtype::F64Le),
    }
}

pub fn write_mask(m: &BinaryMask, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Nifti1 => nifti::write_mask(m, path),
        Format::Rawpair => rawpair::write_mask(m, path),
    }
}

/// Load by extension.
pub fn load_volume_auto(path: &Path) -> Result<Volume> {
    load_volume(path, Format::from_path(path)?)
}

pub fn load_mask_auto(path: &Path) -> Result<BinaryMask> {
    load_mask(path, Format::from_path(path)?)
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
