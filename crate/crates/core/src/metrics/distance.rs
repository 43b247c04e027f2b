use crate::mesh::{Vec3, MIN_FACE_AREA};

use super::{MetricError, Result};

/// Closest point on the closed triangle `abc` to `p`, with its barycentric
/// weights. Region classification follows the usual Voronoi-region walk
/// (vertex, edge, interior).
pub fn closest_point_on_triangle(p: &Vec3, a: &Vec3, b: &Vec3, c: &Vec3) -> (Vec3, [f64; 3]) {
    let ab = b - a;
    let ac = c - a;
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return (*a, [1.0, 0.0, 0.0]);
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return (*b, [0.0, 1.0, 0.0]);
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return (a + ab * v, [1.0 - v, v, 0.0]);
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return (*c, [0.0, 0.0, 1.0]);
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return (a + ac * w, [1.0 - w, 0.0, w]);
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return (b + (c - b) * w, [0.0, 1.0 - w, w]);
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    (a + ab * v + ac * w, [1.0 - v - w, v, w])
}

/// Squared distance from `p` to the closed triangle; fast path without the
/// degeneracy check.
#[inline]
pub(crate) fn point_triangle_dist_sq(p: &Vec3, tri: &[Vec3; 3]) -> f64 {
    let (q, _) = closest_point_on_triangle(p, &tri[0], &tri[1], &tri[2]);
    (p - q).norm_squared()
}

/// Squared Euclidean distance from `p` to the closest point of triangle `tri`.
pub fn point_face_distance_sq(p: &Vec3, tri: &[Vec3; 3]) -> Result<f64> {
    let area = 0.5 * (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm();
    if !(area > MIN_FACE_AREA) {
        return Err(MetricError::DegenerateTriangle);
    }
    Ok(point_triangle_dist_sq(p, tri))
}
