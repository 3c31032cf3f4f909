//! Grid-to-grid resampling that preserves the physical extent.
//!
//! Output voxel `d` along an axis samples source coordinate
//! `(d + 0.5) * n_src / n_dst - 0.5`, clamped to the source range, so voxel
//! centres stay aligned and resampling to the same dims is the identity.

use alloc::vec::Vec;

use super::{BinaryMask, Dims, Grid, Volume};
use crate::error::Result;

fn target_grid(src: &Grid, target: Dims) -> Result<Grid> {
    let d = src.dims();
    let s = src.spacing();
    let spacing = [
        s[0] * d[0] as f64 / target[0].max(1) as f64,
        s[1] * d[1] as f64 / target[1].max(1) as f64,
        s[2] * d[2] as f64 / target[2].max(1) as f64,
    ];
    Grid::new(target, spacing)
}

#[inline]
fn source_coord(dst: usize, n_src: usize, n_dst: usize) -> f64 {
    let c = (dst as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5;
    c.clamp(0.0, (n_src - 1) as f64)
}

/// Trilinear interpolation onto `target` dims.
pub fn resample_volume(v: &Volume, target: Dims) -> Result<Volume> {
    let grid = target_grid(v.grid(), target)?;
    let src = v.dims();
    if src == target {
        return Ok(Volume::from_parts(grid, v.data().to_vec()));
    }
    // Per-axis (lower index, upper index, weight of upper).
    let taps: Vec<Vec<(usize, usize, f64)>> = (0..3)
        .map(|a| {
            (0..target[a])
                .map(|d| {
                    let c = source_coord(d, src[a], target[a]);
                    let lo = libm::floor(c) as usize;
                    let hi = (lo + 1).min(src[a] - 1);
                    (lo, hi, c - lo as f64)
                })
                .collect()
        })
        .collect();
    let mut data = Vec::with_capacity(grid.len());
    for &(z0, z1, wz) in &taps[2] {
        for &(y0, y1, wy) in &taps[1] {
            for &(x0, x1, wx) in &taps[0] {
                let c00 = lerp(v.get(x0, y0, z0), v.get(x1, y0, z0), wx);
                let c10 = lerp(v.get(x0, y1, z0), v.get(x1, y1, z0), wx);
                let c01 = lerp(v.get(x0, y0, z1), v.get(x1, y0, z1), wx);
                let c11 = lerp(v.get(x0, y1, z1), v.get(x1, y1, z1), wx);
                data.push(lerp(lerp(c00, c10, wy), lerp(c01, c11, wy), wz));
            }
        }
    }
    Ok(Volume::from_parts(grid, data))
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    if t == 0.0 {
        a
    } else {
        a + (b - a) * t
    }
}

/// Nearest-neighbour resampling onto `target` dims.
pub fn resample_mask(m: &BinaryMask, target: Dims) -> Result<BinaryMask> {
    let grid = target_grid(m.grid(), target)?;
    let src = m.dims();
    let idx: Vec<Vec<usize>> = (0..3)
        .map(|a| (0..target[a]).map(|d| libm::round(source_coord(d, src[a], target[a])) as usize).collect())
        .collect();
    let mut data = Vec::with_capacity(grid.len());
    for &z in &idx[2] {
        for &y in &idx[1] {
            for &x in &idx[0] {
                data.push(m.get(x, y, z));
            }
        }
    }
    BinaryMask::new(grid, data)
}
