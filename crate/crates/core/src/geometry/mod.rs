//! Random convex polyhedra: size sampling, hull construction, voxel
//! rasterization and placement inside a brain mask.

mod hull;
mod placement;
mod raster;
mod size;

pub use hull::{ConvexHull, Plane};
pub use placement::{place_in_brain, DEFAULT_MIN_VOXELS, PLACEMENT_ATTEMPTS};
pub use raster::{rasterize_planes, rasterize_polyhedron, Polyhedron, PolyhedronSpec};
pub use size::{SizeComponent, SizeDistribution};

pub(crate) type Vec3 = [f64; 3];

#[inline]
pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

#[inline]
pub(crate) fn norm(a: Vec3) -> f64 {
    libm::sqrt(dot(a, a))
}
