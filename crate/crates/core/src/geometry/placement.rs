use rand::Rng;

use crate::error::{Error, Result};
use crate::volume::BinaryMask;

pub const PLACEMENT_ATTEMPTS: usize = 20;
pub const DEFAULT_MIN_VOXELS: usize = 100;

/// Drops `poly` into `brain` with its centroid on a uniformly drawn brain
/// voxel and returns the intersection with the brain.
///
/// Up to [`PLACEMENT_ATTEMPTS`] centres are tried until the intersection has
/// at least `min_voxels` voxels. Parts of the polyhedron that leave the
/// brain grid are clipped.
pub fn place_in_brain<R: Rng + ?Sized>(
    poly: &BinaryMask,
    brain: &BinaryMask,
    rng: &mut R,
    min_voxels: usize,
) -> Result<BinaryMask> {
    if !poly.grid().same_spacing(brain.grid()) {
        return Err(Error::GridMismatch("place_in_brain: polyhedron and brain spacing differ"));
    }
    if min_voxels == 0 {
        return Err(Error::param("min_voxels", "must be >= 1"));
    }
    let fg = poly.foreground();
    let candidates = brain.foreground();
    if fg.is_empty() || candidates.is_empty() {
        return Err(Error::PlacementFailed { attempts: 0, min_voxels });
    }
    let pg = poly.grid();
    let mut sum = [0.0f64; 3];
    for &i in &fg {
        let c = pg.coords(i);
        for a in 0..3 {
            sum[a] += c[a] as f64;
        }
    }
    let centroid: [i64; 3] = core::array::from_fn(|a| libm::round(sum[a] / fg.len() as f64) as i64);

    let bg = brain.grid();
    for _ in 0..PLACEMENT_ATTEMPTS {
        let center = bg.coords(candidates[rng.random_range(0..candidates.len())]);
        let offset: [i64; 3] = core::array::from_fn(|a| center[a] as i64 - centroid[a]);
        let mut out = BinaryMask::empty(*bg);
        let mut hits = 0usize;
        for &i in &fg {
            let c = pg.coords(i);
            let p: [i64; 3] = core::array::from_fn(|a| c[a] as i64 + offset[a]);
            if let Some(j) = bg.checked_index(p) {
                if brain.data()[j] {
                    out.set(j, true);
                    hits += 1;
                }
            }
        }
        if hits >= min_voxels {
            return Ok(out);
        }
    }
    Err(Error::PlacementFailed { attempts: PLACEMENT_ATTEMPTS, min_voxels })
}
