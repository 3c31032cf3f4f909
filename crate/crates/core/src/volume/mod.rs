//! 3D scalar volumes and binary masks on a shared voxel grid.

mod filter;
mod phantom;
mod resample;

pub use filter::{gaussian_blur, gaussian_kernel};
pub use phantom::{make_phantom, PhantomSpec};
pub use resample::{resample_mask, resample_volume};

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Voxel counts per axis, x first.
pub type Dims = [usize; 3];
/// Millimetres per voxel along each axis.
pub type Spacing = [f64; 3];

/// Voxel lattice shared by volumes and masks.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Grid {
    dims: Dims,
    spacing: Spacing,
}

impl Grid {
    pub fn new(dims: Dims, spacing: Spacing) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::InvalidDims(dims));
        }
        if dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d)).is_none() {
            return Err(Error::InvalidDims(dims));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidSpacing(spacing));
        }
        Ok(Self { dims, spacing })
    }

    /// Isotropic 1 mm grid.
    pub fn cube(n: usize) -> Result<Self> {
        Self::new([n; 3], [1.0; 3])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Physical volume of one voxel in mm^3.
    pub fn voxel_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let nx = self.dims[0];
        let ny = self.dims[1];
        [index % nx, (index / nx) % ny, index / (nx * ny)]
    }

    /// Index of a signed coordinate, `None` when it falls outside the grid.
    #[inline]
    pub fn checked_index(&self, p: [i64; 3]) -> Option<usize> {
        if p.iter().zip(self.dims).any(|(&c, n)| c < 0 || c >= n as i64) {
            return None;
        }
        Some(self.index(p[0] as usize, p[1] as usize, p[2] as usize))
    }

    /// Same voxel lattice up to a relative spacing tolerance of 1e-9.
    pub fn same_lattice(&self, other: &Grid) -> bool {
        self.dims == other.dims && self.same_spacing(other)
    }

    pub fn same_spacing(&self, other: &Grid) -> bool {
        self.spacing.iter().zip(other.spacing.iter()).all(|(a, b)| (a - b).abs() <= 1e-9 * a.abs().max(b.abs()))
    }
}

/// Real-valued 3D image.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    grid: Grid,
    data: Vec<f64>,
}

impl Volume {
    /// Fails on a length mismatch or any NaN/Inf.
    pub fn new(grid: Grid, data: Vec<f64>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::DataLength { expected: grid.len(), actual: data.len() });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self { grid, data })
    }

    pub fn filled(grid: Grid, value: f64) -> Self {
        assert!(value.is_finite());
        Self { grid, data: vec![value; grid.len()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> f64) -> Result<Self> {
        let [nx, ny, nz] = grid.dims();
        let mut data = Vec::with_capacity(grid.len());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(grid, data)
    }

    /// Internal constructor for operations that cannot introduce non-finite values.
    pub(crate) fn from_parts(grid: Grid, data: Vec<f64>) -> Self {
        debug_assert_eq!(grid.len(), data.len());
        debug_assert!(data.iter().all(|v| v.is_finite()));
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> Dims {
        self.grid.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.grid.spacing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.grid.index(x, y, z)]
    }

    /// Voxelwise map; fails if `f` produces a non-finite value.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn scale(&self, factor: f64) -> Result<Self> {
        self.map(|v| v * factor)
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Voxels where `value >= threshold`.
    pub fn threshold(&self, threshold: f64) -> BinaryMask {
        BinaryMask { grid: self.grid, data: self.data.iter().map(|&v| v >= threshold).collect() }
    }
}

/// One bit per voxel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    grid: Grid,
    data: Vec<bool>,
}

impl Eq for Grid {}

impl BinaryMask {
    pub fn new(grid: Grid, data: Vec<bool>) -> Result<Self> {
        if data.len() != grid.len() {
            return Err(Error::DataLength { expected: grid.len(), actual: data.len() });
        }
        Ok(Self { grid, data })
    }

    pub fn empty(grid: Grid) -> Self {
        Self { grid, data: vec![false; grid.len()] }
    }

    pub fn full(grid: Grid) -> Self {
        Self { grid, data: vec![true; grid.len()] }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let [nx, ny, nz] = grid.dims();
        let mut data = Vec::with_capacity(grid.len());
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { grid, data }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> Dims {
        self.grid.dims
    }

    pub fn spacing(&self) -> Spacing {
        self.grid.spacing
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.data[self.grid.index(x, y, z)]
    }

    #[inline]
    pub fn set(&mut self, index: usize, value: bool) {
        self.data[index] = value;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    /// Linear indices of foreground voxels, ascending.
    pub fn foreground(&self) -> Vec<usize> {
        self.data.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i).collect()
    }

    /// `true` where both masks are set. Dims must agree.
    pub fn intersect(&self, other: &BinaryMask) -> Result<BinaryMask> {
        if self.dims() != other.dims() {
            return Err(Error::GridMismatch("intersect: dims differ"));
        }
        Ok(BinaryMask {
            grid: self.grid,
            data: self.data.iter().zip(other.data.iter()).map(|(&a, &b)| a && b).collect(),
        })
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(other.data.iter()).all(|(&a, &b)| !a || b)
    }

    /// 1.0 / 0.0 volume.
    pub fn to_volume(&self) -> Volume {
        Volume::from_parts(self.grid, self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }
}
