//! Algorithms for training lesion segmenters without annotations.
//!
//! Lesion-free volumes are turned into training data by injecting smooth
//! hyper-/hypo-intense regions inside a brain mask (the prompt task) and,
//! with different texture rules, into a second task used only to pick a
//! checkpoint and epoch budget (the validation task). Pseudo-labels
//! predicted on unlabeled lesion scans can then be pasted onto lesion-free
//! volumes to build a fine-tuning set.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, manifests,
//! parallel orchestration and the command line live in the `lesionprompt`
//! crate.
//!
//! Volumes are stored x-fastest: voxel `(x, y, z)` lives at
//! `x + nx * (y + ny * z)`, the NIfTI convention.
#![no_std]

extern crate alloc;

pub mod error;
pub mod geometry;
pub mod metrics;
pub mod pasting;
pub mod refseg;
pub mod rng;
pub mod selection;
pub mod synthesis;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{BinaryMask, Grid, Volume};
