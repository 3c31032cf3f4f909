//! Case directories.
//!
//! A dataset directory holds cases named `<id>_<role>.<ext>` where role is
//! `image`, `label` or `brain` and ext is `nii` or `json` (rawpair sidecar;
//! its `.raw` payload sits next to it). Other files are ignored.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lesionprompt_core::{BinaryMask, Volume};

use crate::error::{Error, Result};
use crate::io::{self, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Image,
    Label,
    Brain,
}

impl Role {
    pub fn suffix(self) -> &'static str {
        match self {
            Role::Image => "image",
            Role::Label => "label",
            Role::Brain => "brain",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaseFiles {
    pub image: Option<PathBuf>,
    pub label: Option<PathBuf>,
    pub brain: Option<PathBuf>,
}

impl CaseFiles {
    fn slot(&mut self, role: Role) -> &mut Option<PathBuf> {
        match role {
            Role::Image => &mut self.image,
            Role::Label => &mut self.label,
            Role::Brain => &mut self.brain,
        }
    }

    pub fn require(&self, role: Role, id: &str) -> Result<&Path> {
        let p = match role {
            Role::Image => &self.image,
            Role::Label => &self.label,
            Role::Brain => &self.brain,
        };
        p.as_deref().ok_or_else(|| Error::Data(format!("case {id:?} has no {} file", role.suffix())))
    }
}

/// Cases in `dir`, keyed and ordered by id.
pub fn scan_cases(dir: &Path) -> Result<BTreeMap<String, CaseFiles>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut cases: BTreeMap<String, CaseFiles> = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let Some(ext) = path.extension().and_then(|e| e.to_str()) else { continue };
        if ext != "nii" && ext != "json" {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let Some((id, role)) = stem.rsplit_once('_') else { continue };
        let role = match role {
            "image" => Role::Image,
            "label" => Role::Label,
            "brain" => Role::Brain,
            _ => continue,
        };
        if id.is_empty() {
            continue;
        }
        let slot = cases.entry(id.to_string()).or_default().slot(role);
        if let Some(prev) = slot {
            return Err(Error::Data(format!("duplicate files {} and {}", prev.display(), path.display())));
        }
        *slot = Some(path);
    }
    Ok(cases)
}

/// File names (relative to the dataset dir) of one role of one case.
pub fn file_names(id: &str, role: Role, format: Format) -> Vec<String> {
    let stem = format!("{id}_{}", role.suffix());
    match format {
        Format::Nifti1 => vec![format!("{stem}.nii")],
        Format::Rawpair => vec![format!("{stem}.json"), format!("{stem}.raw")],
    }
}

fn main_name(id: &str, role: Role, format: Format) -> String {
    format!("{id}_{}.{}", role.suffix(), format.extension())
}

/// Writes the given parts of a case and returns every file written.
pub fn write_case(
    dir: &Path,
    id: &str,
    image: Option<&Volume>,
    label: Option<&BinaryMask>,
    brain: Option<&BinaryMask>,
    format: Format,
) -> Result<Vec<String>> {
    let mut written = Vec::new();
    if let Some(v) = image {
        io::write_volume(v, &dir.join(main_name(id, Role::Image, format)), format)?;
        written.extend(file_names(id, Role::Image, format));
    }
    for (role, mask) in [(Role::Label, label), (Role::Brain, brain)] {
        if let Some(m) = mask {
            io::write_mask(m, &dir.join(main_name(id, role, format)), format)?;
            written.extend(file_names(id, role, format));
        }
    }
    Ok(written)
}

/// Brain mask of a case: its `brain` file, or nonzero image voxels.
pub fn load_brain(files: &CaseFiles, image: &Volume) -> Result<BinaryMask> {
    match &files.brain {
        Some(p) => io::load_mask_auto(p),
        None => Ok(BinaryMask::new(*image.grid(), image.data().iter().map(|&v| v != 0.0).collect())?),
    }
}
