//! Procedural closed primitives, centered at the origin with +y up.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{MeshError, Result, TriangleMesh, Vec3};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Axis-aligned box with full edge lengths.
    Box { size: Vec3 },
    Sphere { radius: f64 },
    /// Axis along +y.
    Cylinder { radius: f64, height: f64 },
}

impl Primitive {
    pub fn name(&self) -> &'static str {
        match self {
            Primitive::Box { .. } => "box",
            Primitive::Sphere { .. } => "sphere",
            Primitive::Cylinder { .. } => "cylinder",
        }
    }
}

/// Builds a watertight, outward-oriented mesh.
///
/// `level` controls tessellation: subdivisions along the longest box edge
/// (other edges get proportionally many, at least one), icosphere
/// subdivision count, and `12 * level` segments around a cylinder.
pub fn make_primitive(kind: &Primitive, level: usize) -> Result<TriangleMesh> {
    if level < 1 {
        return Err(MeshError::InvalidDimensions("tessellation level must be >= 1".into()));
    }
    let (vertices, faces) = match *kind {
        Primitive::Box { size } => {
            if !size.iter().all(|&s| s > 0.0 && s.is_finite()) {
                return Err(MeshError::InvalidDimensions(format!("box size {size:?}")));
            }
            let longest = size.max();
            let counts = std::array::from_fn(|k| ((level as f64 * size[k] / longest).round() as usize).max(1));
            subdivided_box(size, counts)
        }
        Primitive::Sphere { radius } => {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(MeshError::InvalidDimensions(format!("sphere radius {radius}")));
            }
            icosphere(radius, level)
        }
        Primitive::Cylinder { radius, height } => {
            if !(radius > 0.0 && height > 0.0 && radius.is_finite() && height.is_finite()) {
                return Err(MeshError::InvalidDimensions(format!("cylinder r={radius} h={height}")));
            }
            cylinder(radius, height, level)
        }
    };
    let faces = orient_outward(&vertices, faces);
    TriangleMesh::new(kind.name(), vertices, faces)
}

/// All primitives are convex and contain the origin, so a face is outward
/// when its normal points away from the origin.
fn orient_outward(vertices: &[Vec3], faces: Vec<[usize; 3]>) -> Vec<[usize; 3]> {
    faces
        .into_iter()
        .map(|[a, b, c]| {
            let (pa, pb, pc) = (vertices[a], vertices[b], vertices[c]);
            let n = (pb - pa).cross(&(pc - pa));
            let centroid = (pa + pb + pc) / 3.0;
            if n.dot(&centroid) >= 0.0 {
                [a, b, c]
            } else {
                [a, c, b]
            }
        })
        .collect()
}

fn subdivided_box(size: Vec3, n: [usize; 3]) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let mut index: HashMap<[usize; 3], usize> = HashMap::new();
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut vid = |lat: [usize; 3], vertices: &mut Vec<Vec3>| -> usize {
        *index.entry(lat).or_insert_with(|| {
            let p = Vec3::from_fn(|k, _| -0.5 * size[k] + size[k] * lat[k] as f64 / n[k] as f64);
            vertices.push(p);
            vertices.len() - 1
        })
    };
    for axis in 0..3 {
        let (u, w) = ((axis + 1) % 3, (axis + 2) % 3);
        for side in [0, n[axis]] {
            for p in 0..n[u] {
                for q in 0..n[w] {
                    let corner = |du: usize, dw: usize| {
                        let mut lat = [0; 3];
                        lat[axis] = side;
                        lat[u] = p + du;
                        lat[w] = q + dw;
                        lat
                    };
                    let c00 = vid(corner(0, 0), &mut vertices);
                    let c10 = vid(corner(1, 0), &mut vertices);
                    let c11 = vid(corner(1, 1), &mut vertices);
                    let c01 = vid(corner(0, 1), &mut vertices);
                    faces.push([c00, c10, c11]);
                    faces.push([c00, c11, c01]);
                }
            }
        }
    }
    (vertices, faces)
}

fn icosphere(radius: f64, levels: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(|&[x, y, z]| Vec3::new(x, y, z).normalize())
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..levels {
        let mut mid: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let mut midpoint = |i: usize, j: usize| {
                let key = (i.min(j), i.max(j));
                *mid.entry(key).or_insert_with(|| {
                    vertices.push(((vertices[i] + vertices[j]) * 0.5).normalize());
                    vertices.len() - 1
                })
            };
            let ab = midpoint(a, b);
            let bc = midpoint(b, c);
            let ca = midpoint(c, a);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    (vertices, faces)
}

fn cylinder(radius: f64, height: f64, level: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let around = 12 * level;
    let edge = 2.0 * PI * radius / around as f64;
    let rings = ((height / edge).round() as usize).max(1);
    let cap_rings = ((radius / edge).round() as usize).max(1);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let angle = |s: usize| 2.0 * PI * s as f64 / around as f64;

    // side: rings 0..=rings, bottom to top
    for r in 0..=rings {
        let y = -0.5 * height + height * r as f64 / rings as f64;
        for s in 0..around {
            vertices.push(Vec3::new(radius * angle(s).cos(), y, radius * angle(s).sin()));
        }
    }
    let side = |r: usize, s: usize| r * around + s % around;
    for r in 0..rings {
        for s in 0..around {
            let (a, b, c, d) = (side(r, s), side(r, s + 1), side(r + 1, s + 1), side(r + 1, s));
            faces.push([a, b, c]);
            faces.push([a, c, d]);
        }
    }
    // caps: concentric rings sharing the outer ring with the side
    for (y, outer_ring) in [(-0.5 * height, 0), (0.5 * height, rings)] {
        let mut ring_ids: Vec<Vec<usize>> = Vec::with_capacity(cap_rings + 1);
        let center = vertices.len();
        vertices.push(Vec3::new(0.0, y, 0.0));
        for c in 1..cap_rings {
            let rad = radius * c as f64 / cap_rings as f64;
            let start = vertices.len();
            for s in 0..around {
                vertices.push(Vec3::new(rad * angle(s).cos(), y, rad * angle(s).sin()));
            }
            ring_ids.push((start..start + around).collect());
        }
        ring_ids.push((0..around).map(|s| side(outer_ring, s)).collect());
        let first = &ring_ids[0];
        for s in 0..around {
            faces.push([center, first[s], first[(s + 1) % around]]);
        }
        for w in ring_ids.windows(2) {
            let (inner, outer) = (&w[0], &w[1]);
            for s in 0..around {
                let s1 = (s + 1) % around;
                faces.push([inner[s], outer[s], outer[s1]]);
                faces.push([inner[s], outer[s1], inner[s1]]);
            }
        }
    }
    (vertices, faces)
}
