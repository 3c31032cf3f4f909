use alloc::vec::Vec;

use crate::volume::{Dims, Volume};

/// A volume z-normalised with its own mean and standard deviation.
#[derive(Debug, Clone)]
pub struct PreparedVolume {
    dims: Dims,
    data: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl PreparedVolume {
    pub fn new(v: &Volume) -> Self {
        let n = v.data().len() as f64;
        let mean = v.data().iter().sum::<f64>() / n;
        let var = v.data().iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let std = if var > 0.0 { libm::sqrt(var) } else { 1.0 };
        Self { dims: v.dims(), data: v.data().iter().map(|x| (x - mean) / std).collect(), mean, std }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn value(&self, index: usize) -> f64 {
        self.data[index]
    }

    /// Writes the patch around `index` followed by a trailing 1.0 into `out`.
    pub fn patch_into(&self, index: usize, radius: usize, out: &mut [f64]) {
        let [nx, ny, nz] = self.dims;
        let x = index % nx;
        let y = (index / nx) % ny;
        let z = index / (nx * ny);
        let r = radius as isize;
        let mut k = 0;
        let interior =
            x >= radius && y >= radius && z >= radius && x + radius < nx && y + radius < ny && z + radius < nz;
        if interior {
            for dz in -r..=r {
                for dy in -r..=r {
                    let row = (index as isize + (dz * ny as isize + dy) * nx as isize) as usize;
                    for dx in -r..=r {
                        out[k] = self.data[(row as isize + dx) as usize];
                        k += 1;
                    }
                }
            }
        } else {
            let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
            for dz in -r..=r {
                let zz = clamp(z as isize + dz, nz);
                for dy in -r..=r {
                    let yy = clamp(y as isize + dy, ny);
                    for dx in -r..=r {
                        let xx = clamp(x as isize + dx, nx);
                        out[k] = self.data[xx + nx * (yy + ny * zz)];
                        k += 1;
                    }
                }
            }
        }
        out[k] = 1.0;
    }
}
