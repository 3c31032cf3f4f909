//! Procedural lesion-free "brain" volumes for desk-scale experiments.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use super::{BinaryMask, Dims, Grid, Spacing, Volume};
use crate::error::{Error, Result};
use crate::rng;

/// Number of plane waves summed into the intensity variation.
const WAVES: usize = 6;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct PhantomSpec {
    pub dims: Dims,
    pub spacing: Spacing,
    /// Mean tissue intensity.
    pub base_intensity: f64,
    /// Peak deviation of the smooth intensity variation from the base.
    pub amplitude: f64,
    /// Ellipsoid semi-axes as fractions of the half extent per axis.
    pub semi_axes: [f64; 3],
    pub seed: u64,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        Self { dims: [64; 3], spacing: [1.0; 3], base_intensity: 100.0, amplitude: 20.0, semi_axes: [0.8; 3], seed: 0 }
    }
}

impl PhantomSpec {
    pub fn validate(&self) -> Result<Grid> {
        let grid = Grid::new(self.dims, self.spacing)?;
        if self.semi_axes.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::param("semi_axes", "fractions must lie in (0, 1]"));
        }
        if !(self.amplitude.is_finite() && self.amplitude >= 0.0) {
            return Err(Error::param("amplitude", "must be finite and >= 0"));
        }
        if !self.base_intensity.is_finite() {
            return Err(Error::param("base_intensity", "must be finite"));
        }
        Ok(grid)
    }
}

struct Wave {
    k: [f64; 3],
    phase: f64,
}

/// Ellipsoidal brain with smooth low-frequency intensity variation and a
/// zero background. Returns the volume and its brain mask.
pub fn make_phantom(spec: &PhantomSpec) -> Result<(Volume, BinaryMask)> {
    let grid = spec.validate()?;
    let mut rng = rng::stream(rng::derive_labeled(spec.seed, "phantom"));
    let waves: Vec<Wave> = (0..WAVES)
        .map(|_| {
            // Uniform direction on the sphere, wavelength 8..32 mm.
            let cz: f64 = rng.random_range(-1.0..1.0);
            let az: f64 = rng.random_range(0.0..2.0 * PI);
            let sz = libm::sqrt(1.0 - cz * cz);
            let wavelength: f64 = rng.random_range(8.0..32.0);
            let f = 2.0 * PI / wavelength;
            Wave { k: [f * sz * libm::cos(az), f * sz * libm::sin(az), f * cz], phase: rng.random_range(0.0..2.0 * PI) }
        })
        .collect();

    let dims = grid.dims();
    let spacing = grid.spacing();
    let center: [f64; 3] = core::array::from_fn(|a| (dims[a] as f64 - 1.0) / 2.0);
    let radii: [f64; 3] = core::array::from_fn(|a| spec.semi_axes[a] * dims[a] as f64 / 2.0);

    let brain = BinaryMask::from_fn(grid, |x, y, z| {
        let p = [x as f64, y as f64, z as f64];
        (0..3)
            .map(|a| {
                let t = (p[a] - center[a]) / radii[a];
                t * t
            })
            .sum::<f64>()
            <= 1.0
    });
    let volume = Volume::from_fn(grid, |x, y, z| {
        if !brain.get(x, y, z) {
            return 0.0;
        }
        if spec.amplitude == 0.0 {
            return spec.base_intensity;
        }
        let p = [x as f64 * spacing[0], y as f64 * spacing[1], z as f64 * spacing[2]];
        let s: f64 = waves.iter().map(|w| libm::cos(w.k[0] * p[0] + w.k[1] * p[1] + w.k[2] * p[2] + w.phase)).sum();
        spec.base_intensity + spec.amplitude * s / WAVES as f64
    })?;
    Ok((volume, brain))
}
