use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions {0:?}: every axis needs at least one voxel")]
    InvalidDims([usize; 3]),
    #[error("invalid spacing {0:?}: every component must be finite and > 0")]
    InvalidSpacing([f64; 3]),
    #[error("data length {actual} does not match dims product {expected}")]
    DataLength { expected: usize, actual: usize },
    #[error("non-finite value at voxel {0}")]
    NonFinite(usize),
    #[error("grid mismatch: {0}")]
    GridMismatch(&'static str),
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("degenerate point set: convex hull has no volume")]
    DegenerateHull,
    #[error("target volume {target_mm3} mm^3 is smaller than one voxel ({voxel_mm3} mm^3)")]
    TargetBelowVoxel { target_mm3: f64, voxel_mm3: f64 },
    #[error("placement failed after {attempts} attempts (needed {min_voxels} voxels inside the mask)")]
    PlacementFailed { attempts: usize, min_voxels: usize },
    #[error("pseudo-label is empty after resizing")]
    EmptyPseudoLabel,
    #[error("pseudo-label has {voxels} foreground voxels, below the minimum of {min}")]
    PseudoLabelTooSmall { voxels: usize, min: usize },
    #[error("pairing cover violated: {pseudo_uses} pseudo-label uses vs {free_uses} tumor-free uses")]
    PairingCover { pseudo_uses: usize, free_uses: usize },
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("variance of paired differences is zero")]
    DegenerateVariance,
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("malformed model checkpoint: {0}")]
    Checkpoint(&'static str),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}
