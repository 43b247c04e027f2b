//! Nearest-neighbour structures. Small sets are scanned exhaustively; larger
//! ones go through a [`Bvh`]. Both paths return the same minimum and the
//! same lowest-index argmin.

use crate::mesh::{TriangleMesh, Vec3};
use crate::spatial::{Aabb, Bvh};

use super::distance::{closest_point_on_triangle, point_triangle_dist_sq};
use super::{MetricError, Result};

/// Point sets below this size are searched exhaustively.
pub const EXHAUSTIVE_LIMIT: usize = 4096;
/// Triangle-to-point queries are costlier, so they switch to the tree sooner.
const TRIANGLE_QUERY_LIMIT: usize = 64;

fn argmin(it: impl Iterator<Item = (usize, f64)>) -> (usize, f64) {
    it.fold((usize::MAX, f64::INFINITY), |best, (i, d)| if d < best.1 { (i, d) } else { best })
}

pub struct NearestPoints<'a> {
    points: &'a [Vec3],
    tree: Option<Bvh>,
    tri_tree: Option<Bvh>,
}

impl<'a> NearestPoints<'a> {
    pub fn new(points: &'a [Vec3]) -> Result<Self> {
        Self::with_limit(points, EXHAUSTIVE_LIMIT)
    }

    /// `limit` overrides the exhaustive/tree switch (tests use it to force
    /// either path).
    pub fn with_limit(points: &'a [Vec3], limit: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(MetricError::Empty("point set"));
        }
        if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(MetricError::NonFinite { what: "point", index: i });
        }
        let tree = (points.len() >= limit).then(|| Bvh::over_points(points));
        let tri_tree = if points.len() >= TRIANGLE_QUERY_LIMIT.min(limit) {
            tree.clone().or_else(|| Some(Bvh::over_points(points)))
        } else {
            None
        };
        Ok(Self { points, tree, tri_tree })
    }

    pub fn points(&self) -> &[Vec3] {
        self.points
    }

    /// Index and squared Euclidean distance of the nearest point.
    pub fn nearest_sq(&self, q: &Vec3) -> (usize, f64) {
        let cost = |i: usize| (self.points[i] - q).norm_squared();
        match &self.tree {
            Some(t) => t.nearest(|b| b.dist_sq_to_point(q), cost).expect("non-empty"),
            None => argmin((0..self.points.len()).map(|i| (i, cost(i)))),
        }
    }

    /// Index and L1 distance of the L1-nearest point.
    pub fn nearest_l1(&self, q: &Vec3) -> (usize, f64) {
        let cost = |i: usize| (self.points[i] - q).abs().sum();
        match &self.tree {
            Some(t) => t.nearest(|b| b.dist_l1_to_point(q), cost).expect("non-empty"),
            None => argmin((0..self.points.len()).map(|i| (i, cost(i)))),
        }
    }

    /// Index and squared distance of the point closest to triangle `tri`.
    pub fn nearest_to_triangle(&self, tri: &[Vec3; 3]) -> (usize, f64) {
        let cost = |i: usize| point_triangle_dist_sq(&self.points[i], tri);
        match &self.tri_tree {
            Some(t) => {
                let tb = Aabb::from_points(tri.iter());
                t.nearest(|b| b.dist_sq_to_box(&tb), cost).expect("non-empty")
            }
            None => argmin((0..self.points.len()).map(|i| (i, cost(i)))),
        }
    }
}

/// Closest-face queries against a mesh.
pub struct NearestFaces {
    tris: Vec<[Vec3; 3]>,
    tree: Option<Bvh>,
}

#[derive(Debug, Clone, Copy)]
pub struct FaceHit {
    pub face: usize,
    pub dist_sq: f64,
    pub closest: Vec3,
}

impl NearestFaces {
    pub fn new(mesh: &TriangleMesh) -> Result<Self> {
        Self::with_limit(mesh, TRIANGLE_QUERY_LIMIT)
    }

    pub fn with_limit(mesh: &TriangleMesh, limit: usize) -> Result<Self> {
        if mesh.face_count() == 0 {
            return Err(MetricError::Empty("face set"));
        }
        let tris: Vec<[Vec3; 3]> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
        let tree = (tris.len() >= limit).then(|| Bvh::over_triangles(&tris));
        Ok(Self { tris, tree })
    }

    pub fn triangles(&self) -> &[[Vec3; 3]] {
        &self.tris
    }

    pub fn nearest(&self, p: &Vec3) -> FaceHit {
        let cost = |f: usize| point_triangle_dist_sq(p, &self.tris[f]);
        let (face, dist_sq) = match &self.tree {
            Some(t) => t.nearest(|b| b.dist_sq_to_point(p), cost).expect("non-empty"),
            None => argmin((0..self.tris.len()).map(|f| (f, cost(f)))),
        };
        let [a, b, c] = &self.tris[face];
        let (closest, _) = closest_point_on_triangle(p, a, b, c);
        FaceHit { face, dist_sq, closest }
    }
}
