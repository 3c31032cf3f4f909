//! A small trainable voxel classifier for desk-scale experiments.
//!
//! Each voxel is described by the z-normalised intensities of its
//! `(2r + 1)^3` neighbourhood (replicate padding) plus a constant 1. A
//! single tanh hidden layer feeds a sigmoid output. Training uses binary
//! cross-entropy, class-balanced voxel sampling, Adam and a polynomial
//! learning-rate decay tied to the epoch budget.

mod checkpoint;
mod features;
mod model;
mod train;

pub use checkpoint::{decode_model, encode_model, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use features::PreparedVolume;
pub use model::RefModel;
pub use train::{fine_tune, lr_schedule, train, TrainConfig};

use crate::error::{Error, Result};
use crate::volume::{BinaryMask, Volume};

/// Foreground probabilities inside `brain`, 0 elsewhere.
pub fn predict_probabilities(model: &RefModel, volume: &Volume, brain: &BinaryMask) -> Result<Volume> {
    if volume.dims() != brain.dims() {
        return Err(Error::GridMismatch("predict: volume and brain dims differ"));
    }
    let prepared = PreparedVolume::new(volume);
    let mut scratch = alloc::vec![0.0; model.input_dim()];
    let data = brain
        .data()
        .iter()
        .enumerate()
        .map(|(i, &inside)| if inside { model.probability_at(&prepared, i, &mut scratch) } else { 0.0 })
        .collect();
    Volume::new(*volume.grid(), data)
}

/// Voxels inside `brain` whose probability is at least `threshold`.
pub fn predict(model: &RefModel, volume: &Volume, brain: &BinaryMask, threshold: f64) -> Result<BinaryMask> {
    let probs = predict_probabilities(model, volume, brain)?;
    let mut out = probs.threshold(threshold);
    for (i, &inside) in brain.data().iter().enumerate() {
        if !inside {
            out.set(i, false);
        }
    }
    Ok(out)
}
