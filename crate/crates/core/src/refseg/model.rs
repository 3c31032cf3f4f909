use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::features::PreparedVolume;
use crate::error::{Error, Result};
use crate::rng;

/// Patch -> tanh hidden layer -> sigmoid.
///
/// Parameters are stored flat: the `hidden x input_dim` first-layer matrix
/// (row-major, bias folded into the last input column), then `hidden`
/// output weights, then the output bias.
#[derive(Debug, Clone, PartialEq)]
pub struct RefModel {
    patch_radius: usize,
    hidden: usize,
    params: Vec<f64>,
}

impl RefModel {
    /// Glorot-uniform initialisation from `seed`.
    pub fn init(patch_radius: usize, hidden: usize, seed: u64) -> Result<Self> {
        if hidden == 0 {
            return Err(Error::param("hidden", "needs at least one hidden unit"));
        }
        let input = Self::input_dim_for(patch_radius);
        let mut rng = rng::stream(rng::derive_labeled(seed, "init"));
        let a = libm::sqrt(6.0 / (input + hidden) as f64);
        let b = libm::sqrt(6.0 / (hidden + 1) as f64);
        let mut params = Vec::with_capacity(hidden * input + hidden + 1);
        params.extend((0..hidden * input).map(|_| rng.random_range(-a..a)));
        params.extend((0..hidden).map(|_| rng.random_range(-b..b)));
        params.push(0.0);
        Ok(Self { patch_radius, hidden, params })
    }

    pub fn from_params(patch_radius: usize, hidden: usize, params: Vec<f64>) -> Result<Self> {
        let input = Self::input_dim_for(patch_radius);
        if hidden == 0 || params.len() != hidden * input + hidden + 1 {
            return Err(Error::param("params", "length does not match the architecture"));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::param("params", "weights must be finite"));
        }
        Ok(Self { patch_radius, hidden, params })
    }

    pub fn input_dim_for(patch_radius: usize) -> usize {
        let side = 2 * patch_radius + 1;
        side * side * side + 1
    }

    pub fn patch_radius(&self) -> usize {
        self.patch_radius
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn input_dim(&self) -> usize {
        Self::input_dim_for(self.patch_radius)
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub(crate) fn set_output_bias(&mut self, b: f64) {
        *self.params.last_mut().expect("nonempty") = b;
    }

    pub(crate) fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Output logit and the hidden activations written into `hidden_out`.
    fn forward(&self, features: &[f64], hidden_out: &mut [f64]) -> f64 {
        let input = self.input_dim();
        let (w1, rest) = self.params.split_at(self.hidden * input);
        let (w2, b2) = rest.split_at(self.hidden);
        let mut z = b2[0];
        for j in 0..self.hidden {
            let row = &w1[j * input..(j + 1) * input];
            let a: f64 = row.iter().zip(features).map(|(w, f)| w * f).sum();
            let h = libm::tanh(a);
            hidden_out[j] = h;
            z += w2[j] * h;
        }
        z
    }

    pub fn logit(&self, features: &[f64]) -> f64 {
        let mut h = vec![0.0; self.hidden];
        self.forward(features, &mut h)
    }

    /// Probability for voxel `index`; `scratch` must hold `input_dim()` values.
    pub fn probability_at(&self, prepared: &PreparedVolume, index: usize, scratch: &mut [f64]) -> f64 {
        prepared.patch_into(index, self.patch_radius, scratch);
        sigmoid(self.logit(scratch))
    }

    /// Mean binary cross-entropy over a batch and its gradient with respect
    /// to every parameter. `features` holds one `input_dim()` row per label.
    pub fn loss_and_gradient(&self, features: &[f64], labels: &[f64]) -> (f64, Vec<f64>) {
        let input = self.input_dim();
        let n = labels.len();
        debug_assert_eq!(features.len(), n * input);
        let mut grad = vec![0.0; self.params.len()];
        let mut h = vec![0.0; self.hidden];
        let mut loss = 0.0;
        let w2_offset = self.hidden * input;
        let inv_n = 1.0 / n as f64;
        for (row, &y) in features.chunks_exact(input).zip(labels) {
            let z = self.forward(row, &mut h);
            loss += bce_from_logit(z, y);
            let dz = (sigmoid(z) - y) * inv_n;
            for j in 0..self.hidden {
                grad[w2_offset + j] += dz * h[j];
                let da = dz * self.params[w2_offset + j] * (1.0 - h[j] * h[j]);
                let g = &mut grad[j * input..(j + 1) * input];
                for (gk, &fk) in g.iter_mut().zip(row) {
                    *gk += da * fk;
                }
            }
            grad[w2_offset + self.hidden] += dz;
        }
        (loss * inv_n, grad)
    }

    /// Mean loss only.
    pub fn loss(&self, features: &[f64], labels: &[f64]) -> f64 {
        let input = self.input_dim();
        let mut h = vec![0.0; self.hidden];
        let total: f64 = features
            .chunks_exact(input)
            .zip(labels)
            .map(|(row, &y)| bce_from_logit(self.forward(row, &mut h), y))
            .sum();
        total / labels.len() as f64
    }
}

#[inline]
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// `-y log(s(z)) - (1 - y) log(1 - s(z))` without overflow.
#[inline]
pub(crate) fn bce_from_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + libm::log1p(libm::exp(-z.abs()))
}
