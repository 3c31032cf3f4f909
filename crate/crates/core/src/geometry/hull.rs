//! Incremental 3D convex hull.

use alloc::vec::Vec;

use super::{cross, dot, norm, sub, Vec3};
use crate::error::{Error, Result};

/// Closed half-space `normal . p <= offset` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    #[inline]
    pub fn signed_distance(&self, p: Vec3) -> f64 {
        dot(self.normal, p) - self.offset
    }

    /// The plane after scaling space about the origin by `s`.
    pub fn scaled(&self, s: f64) -> Plane {
        Plane { normal: self.normal, offset: self.offset * s }
    }

    /// The plane after translating space by `t`.
    pub fn translated(&self, t: Vec3) -> Plane {
        Plane { normal: self.normal, offset: self.offset + dot(self.normal, t) }
    }
}

/// Triangulated hull with outward-facing (counter-clockwise) faces.
#[derive(Debug, Clone)]
pub struct ConvexHull {
    points: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
}

impl ConvexHull {
    pub fn new(points: &[Vec3]) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::DegenerateHull);
        }
        let scale = points.iter().map(|&p| norm(p)).fold(0.0, f64::max).max(1e-300);
        let eps = 1e-10 * scale;

        let [a, b, c, d] = initial_simplex(points, eps)?;
        let mut faces: Vec<[usize; 3]> = Vec::new();
        for f in [[a, b, c], [a, b, d], [a, c, d], [b, c, d]] {
            let opposite = [a, b, c, d].into_iter().find(|i| !f.contains(i)).expect("four vertices");
            let oriented = if face_distance(points, f, points[opposite]) > 0.0 { [f[0], f[2], f[1]] } else { f };
            faces.push(oriented);
        }

        let mut visible = Vec::new();
        let mut horizon: Vec<(usize, usize)> = Vec::new();
        for (i, &p) in points.iter().enumerate() {
            if [a, b, c, d].contains(&i) {
                continue;
            }
            visible.clear();
            visible.extend(faces.iter().map(|&f| face_distance(points, f, p) > eps));
            if !visible.iter().any(|&v| v) {
                continue;
            }
            horizon.clear();
            for (f, _) in faces.iter().zip(&visible).filter(|(_, &v)| v) {
                for (u, v) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                    let shared = faces.iter().zip(&visible).any(|(g, &gv)| {
                        gv && ((g[0] == v && g[1] == u) || (g[1] == v && g[2] == u) || (g[2] == v && g[0] == u))
                    });
                    if !shared {
                        horizon.push((u, v));
                    }
                }
            }
            let mut keep = visible.iter().map(|&v| !v);
            faces.retain(|_| keep.next().unwrap_or(true));
            faces.extend(horizon.iter().map(|&(u, v)| [u, v, i]));
        }
        Ok(Self { points: points.to_vec(), faces })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Outward half-spaces, one per triangle.
    pub fn planes(&self) -> Vec<Plane> {
        self.faces
            .iter()
            .map(|&[a, b, c]| {
                let n = cross(sub(self.points[b], self.points[a]), sub(self.points[c], self.points[a]));
                let len = norm(n);
                let normal = [n[0] / len, n[1] / len, n[2] / len];
                Plane { normal, offset: dot(normal, self.points[a]) }
            })
            .collect()
    }

    /// Enclosed volume via the divergence theorem.
    pub fn volume(&self) -> f64 {
        self.faces.iter().map(|&[a, b, c]| dot(self.points[a], cross(self.points[b], self.points[c]))).sum::<f64>()
            / 6.0
    }
}

fn face_distance(points: &[Vec3], f: [usize; 3], p: Vec3) -> f64 {
    let n = cross(sub(points[f[1]], points[f[0]]), sub(points[f[2]], points[f[0]]));
    dot(n, sub(p, points[f[0]])) / norm(n)
}

fn initial_simplex(points: &[Vec3], eps: f64) -> Result<[usize; 4]> {
    let a = 0;
    let b = argmax(points, |p| norm(sub(p, points[a])));
    let ab = sub(points[b], points[a]);
    if norm(ab) <= eps {
        return Err(Error::DegenerateHull);
    }
    let c = argmax(points, |p| norm(cross(ab, sub(p, points[a]))) / norm(ab));
    let n = cross(ab, sub(points[c], points[a]));
    if norm(n) / norm(ab) <= eps {
        return Err(Error::DegenerateHull);
    }
    let d = argmax(points, |p| (dot(n, sub(p, points[a])) / norm(n)).abs());
    if (dot(n, sub(points[d], points[a])) / norm(n)).abs() <= eps {
        return Err(Error::DegenerateHull);
    }
    Ok([a, b, c, d])
}

fn argmax(points: &[Vec3], f: impl Fn(Vec3) -> f64) -> usize {
    let mut best = 0;
    let mut best_val = f64::NEG_INFINITY;
    for (i, &p) in points.iter().enumerate() {
        let v = f(p);
        if v > best_val {
            best = i;
            best_val = v;
        }
    }
    best
}
