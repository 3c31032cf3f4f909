//! Random polyhedra rasterized to a target physical volume.
//!
//! A polyhedron is the convex hull of `vertex_count` points on the unit
//! sphere whose radii are jittered by up to `radius_perturbation`, rotated
//! by three Euler angles and recentred on the vertex centroid. It is then
//! scaled isotropically about that centroid until the number of voxel
//! centres inside it, times the voxel volume, is within 5% of the target.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use super::hull::{ConvexHull, Plane};
use super::Vec3;
use crate::error::{Error, Result};
use crate::rng;
use crate::volume::{BinaryMask, Grid, Spacing};

/// Relative tolerance on the rasterized volume.
pub const VOLUME_TOLERANCE: f64 = 0.05;
const MAX_SCALE_ITERATIONS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PolyhedronSpec {
    pub vertex_count: usize,
    pub radius_perturbation: f64,
    /// Z-Y-X Euler angles in radians.
    pub rotation: [f64; 3],
    pub target_volume_mm3: f64,
    pub seed: u64,
}

impl PolyhedronSpec {
    /// Draws shape parameters: 10..=30 vertices, perturbation in [0, 0.6],
    /// uniform rotation angles.
    pub fn random<R: Rng + ?Sized>(target_volume_mm3: f64, rng: &mut R) -> Self {
        Self {
            vertex_count: rng.random_range(10..=30),
            radius_perturbation: rng.random_range(0.0..=0.6),
            rotation: [
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
                rng.random_range(0.0..2.0 * PI),
            ],
            target_volume_mm3,
            seed: rng.random(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.vertex_count < 4 {
            return Err(Error::param("vertex_count", "needs at least 4 vertices"));
        }
        if !(0.0..1.0).contains(&self.radius_perturbation) {
            return Err(Error::param("radius_perturbation", "must lie in [0, 1)"));
        }
        if !(self.target_volume_mm3.is_finite() && self.target_volume_mm3 > 0.0) {
            return Err(Error::param("target_volume_mm3", "must be finite and > 0"));
        }
        Ok(())
    }

    /// Unit-scale vertices, rotated and centred on their centroid.
    pub fn unit_vertices(&self) -> Vec<Vec3> {
        let mut rng = rng::stream(self.seed);
        let rot = rotation_matrix(self.rotation);
        let mut pts: Vec<Vec3> = (0..self.vertex_count)
            .map(|_| {
                let cz: f64 = rng.random_range(-1.0..=1.0);
                let az: f64 = rng.random_range(0.0..2.0 * PI);
                let sz = libm::sqrt((1.0 - cz * cz).max(0.0));
                let r = if self.radius_perturbation > 0.0 {
                    1.0 + rng.random_range(-self.radius_perturbation..=self.radius_perturbation)
                } else {
                    1.0
                };
                let p = [r * sz * libm::cos(az), r * sz * libm::sin(az), r * cz];
                core::array::from_fn(|i| rot[i][0] * p[0] + rot[i][1] * p[1] + rot[i][2] * p[2])
            })
            .collect();
        let n = pts.len() as f64;
        let c: Vec3 = core::array::from_fn(|a| pts.iter().map(|p| p[a]).sum::<f64>() / n);
        for p in &mut pts {
            for a in 0..3 {
                p[a] -= c[a];
            }
        }
        pts
    }
}

fn rotation_matrix([yaw, pitch, roll]: [f64; 3]) -> [[f64; 3]; 3] {
    let (sa, ca) = (libm::sin(yaw), libm::cos(yaw));
    let (sb, cb) = (libm::sin(pitch), libm::cos(pitch));
    let (sc, cc) = (libm::sin(roll), libm::cos(roll));
    [
        [ca * cb, ca * sb * sc - sa * cc, ca * sb * cc + sa * sc],
        [sa * cb, sa * sb * sc + ca * cc, sa * sb * cc - ca * sc],
        [-sb, cb * sc, cb * cc],
    ]
}

/// A rasterized polyhedron on its own tight grid.
///
/// Voxel `(i, j, k)` of `mask` has its centre at `(i * sx, j * sy, k * sz)`
/// in the coordinate frame of `vertices` and `planes`.
#[derive(Debug, Clone)]
pub struct Polyhedron {
    pub mask: BinaryMask,
    pub vertices: Vec<Vec3>,
    pub planes: Vec<Plane>,
    pub scale: f64,
}

impl Polyhedron {
    pub fn volume_mm3(&self) -> f64 {
        self.mask.count() as f64 * self.mask.grid().voxel_volume()
    }
}

/// Marks every voxel whose centre satisfies all half-spaces. Voxel
/// `(i, j, k)` sits at `(i * sx, j * sy, k * sz)`.
///
/// Each row along x is clipped against every plane, so the cost is
/// `ny * nz * planes` rather than one test per voxel.
pub fn rasterize_planes(planes: &[Plane], grid: Grid) -> BinaryMask {
    let [nx, ny, nz] = grid.dims();
    let [sx, sy, sz] = grid.spacing();
    let mut mask = BinaryMask::empty(grid);
    for k in 0..nz {
        let z = k as f64 * sz;
        for j in 0..ny {
            let y = j as f64 * sy;
            let mut lo = 0.0f64;
            let mut hi = (nx - 1) as f64;
            let mut empty = false;
            for p in planes {
                let a = p.normal[0] * sx;
                let rhs = p.offset - p.normal[1] * y - p.normal[2] * z;
                if a > 0.0 {
                    hi = hi.min(rhs / a);
                } else if a < 0.0 {
                    lo = lo.max(rhs / a);
                } else if rhs < 0.0 {
                    empty = true;
                    break;
                }
            }
            if empty || hi < lo {
                continue;
            }
            let first = libm::ceil(lo) as usize;
            let last = libm::floor(hi) as usize;
            for i in first..=last.min(nx - 1) {
                mask.set(grid.index(i, j, k), true);
            }
        }
    }
    mask
}

fn rasterize_scaled(unit: &[Vec3], unit_planes: &[Plane], scale: f64, spacing: Spacing) -> Result<Polyhedron> {
    let mut dims = [0usize; 3];
    let mut shift = [0.0; 3];
    for a in 0..3 {
        let extent = unit.iter().map(|p| p[a].abs()).fold(0.0, f64::max) * scale;
        let half = libm::ceil(extent / spacing[a]) as usize;
        dims[a] = 2 * half + 1;
        shift[a] = half as f64 * spacing[a];
    }
    let grid = Grid::new(dims, spacing)?;
    let planes: Vec<Plane> = unit_planes.iter().map(|p| p.scaled(scale).translated(shift)).collect();
    let vertices = unit.iter().map(|p| core::array::from_fn(|a| p[a] * scale + shift[a])).collect();
    Ok(Polyhedron { mask: rasterize_planes(&planes, grid), vertices, planes, scale })
}

/// Builds and rasterizes the polyhedron described by `spec`.
///
/// The scale factor starts from the analytic hull volume and is refined by
/// bisection on the rasterized count (at most 30 rasterizations). When no
/// scale hits the 5% band, the closest one is returned.
pub fn rasterize_polyhedron(spec: &PolyhedronSpec, spacing: Spacing) -> Result<Polyhedron> {
    spec.validate()?;
    let probe = Grid::new([1, 1, 1], spacing)?;
    let voxel = probe.voxel_volume();
    let target = spec.target_volume_mm3;
    if target < voxel {
        return Err(Error::TargetBelowVoxel { target_mm3: target, voxel_mm3: voxel });
    }
    let unit = spec.unit_vertices();
    let hull = ConvexHull::new(&unit)?;
    let unit_planes = hull.planes();
    let unit_volume = hull.volume();

    let rel_err = |p: &Polyhedron| (p.volume_mm3() - target).abs() / target;
    let mut scale = libm::cbrt(target / unit_volume);
    let mut lo: Option<f64> = None;
    let mut hi: Option<f64> = None;
    let mut best: Option<Polyhedron> = None;
    for _ in 0..MAX_SCALE_ITERATIONS {
        let poly = rasterize_scaled(&unit, &unit_planes, scale, spacing)?;
        let vol = poly.volume_mm3();
        let err = rel_err(&poly);
        let better = best.as_ref().is_none_or(|b| err < rel_err(b));
        if better {
            best = Some(poly);
        }
        if err <= VOLUME_TOLERANCE {
            break;
        }
        if vol < target {
            lo = Some(scale);
        } else {
            hi = Some(scale);
        }
        scale = match (lo, hi) {
            (Some(l), Some(h)) => 0.5 * (l + h),
            (Some(l), None) => l * 1.25,
            (None, Some(h)) => h * 0.8,
            (None, None) => unreachable!(),
        };
    }
    Ok(best.expect("at least one iteration"))
}
