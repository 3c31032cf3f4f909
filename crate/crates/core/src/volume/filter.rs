use alloc::vec;
use alloc::vec::Vec;

use super::Volume;
use crate::error::{Error, Result};

/// Normalized 1D Gaussian taps for a sigma given in voxels.
///
/// Radius is `ceil(3 sigma)`, never below one voxel; the returned vector
/// has `2 * radius + 1` entries summing to one.
pub fn gaussian_kernel(sigma_vox: f64) -> Vec<f64> {
    let radius = libm::ceil(3.0 * sigma_vox).max(1.0) as usize;
    let mut taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            libm::exp(-0.5 * d * d / (sigma_vox * sigma_vox))
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Separable 3D Gaussian filter with `sigma_mm` converted to voxels per
/// axis, replicate padding at the borders.
pub fn gaussian_blur(v: &Volume, sigma_mm: f64) -> Result<Volume> {
    if !(sigma_mm.is_finite() && sigma_mm > 0.0) {
        return Err(Error::param("sigma_mm", "must be finite and > 0"));
    }
    let grid = *v.grid();
    let mut data = v.data().to_vec();
    let mut scratch = vec![0.0; data.len()];
    for axis in 0..3 {
        let kernel = gaussian_kernel(sigma_mm / grid.spacing()[axis]);
        convolve_axis(&data, &mut scratch, grid.dims(), axis, &kernel);
        core::mem::swap(&mut data, &mut scratch);
    }
    Ok(Volume::from_parts(grid, data))
}

fn convolve_axis(src: &[f64], dst: &mut [f64], dims: [usize; 3], axis: usize, kernel: &[f64]) {
    let [nx, ny, _] = dims;
    let n = dims[axis];
    let stride = match axis {
        0 => 1,
        1 => nx,
        _ => nx * ny,
    };
    let radius = (kernel.len() / 2) as isize;
    let mut line = vec![0.0; n];
    // Every line along `axis` starts at an index whose `axis` coordinate is 0.
    for start in 0..src.len() {
        let along = (start / stride) % n;
        if along != 0 {
            continue;
        }
        for (i, slot) in line.iter_mut().enumerate() {
            *slot = src[start + i * stride];
        }
        for i in 0..n {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let j = (i as isize + k as isize - radius).clamp(0, n as isize - 1) as usize;
                acc += w * line[j];
            }
            dst[start + i * stride] = acc;
        }
    }
}
