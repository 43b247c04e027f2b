//! Triangle meshes, point clouds and the geometric operations on them.

mod normalize;
mod obj;
mod pointcloud;
mod primitives;
mod sampling;
mod voxel;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

pub use normalize::{normalize_to_unit_cube, NormalizationTransform};
pub use obj::{load_obj, parse_obj, save_obj, write_obj};
pub use pointcloud::{load_pointcloud, save_pointcloud_csv, save_pointcloud_ply, PointCloud};
pub use primitives::{make_primitive, Primitive};
pub use sampling::{sample_surface, Provenance, SampledPoints};
pub use voxel::{point_in_mesh, voxel_volumes, VoxelGrid, VoxelVolumes};

/// Three-component vector in meters (or normalized units, depending on context).
pub type Vec3 = nalgebra::Vector3<f64>;

/// Faces with area at or below this are rejected as degenerate (m²).
pub const MIN_FACE_AREA: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("face {face} references vertex {index} but mesh has {count} vertices")]
    IndexOutOfRange { face: usize, index: usize, count: usize },
    #[error("face {face} is degenerate (area {area:e})")]
    DegenerateFace { face: usize, area: f64 },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("mesh is not watertight: {0}")]
    NotWatertight(String),
    #[error("mesh has no faces")]
    Empty,
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),
    #[error("bounding box has zero extent")]
    ZeroExtent,
    #[error("vertex count mismatch: expected {expected}, got {got}")]
    VertexCount { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T, E = MeshError> = std::result::Result<T, E>;

/// Indexed triangle mesh. Face lists are shared between meshes of the same
/// topology, so deformed copies of a template reuse the template's faces.
#[derive(Debug, Clone)]
pub struct TriangleMesh {
    pub name: String,
    vertices: Vec<Vec3>,
    faces: Arc<Vec<[usize; 3]>>,
}

impl PartialEq for TriangleMesh {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices && *self.faces == *other.faces
    }
}

impl TriangleMesh {
    /// Builds a mesh after checking indices, finiteness and face areas.
    pub fn new(name: impl Into<String>, vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = Self {
            name: name.into(),
            vertices,
            faces: Arc::new(faces),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    /// Same topology, new vertex positions. The face list is shared, not copied.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(MeshError::VertexCount {
                expected: self.vertices.len(),
                got: vertices.len(),
            });
        }
        let mesh = Self {
            name: self.name.clone(),
            vertices,
            faces: Arc::clone(&self.faces),
        };
        mesh.validate()?;
        Ok(mesh)
    }

    fn validate(&self) -> Result<()> {
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFinite(i));
            }
        }
        let n = self.vertices.len();
        for (fi, f) in self.faces.iter().enumerate() {
            for &idx in f {
                if idx >= n {
                    return Err(MeshError::IndexOutOfRange { face: fi, index: idx, count: n });
                }
            }
            let area = self.face_area(fi);
            if !(area > MIN_FACE_AREA) {
                return Err(MeshError::DegenerateFace { face: fi, area });
            }
        }
        Ok(())
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Shared handle to the face list; two meshes with pointer-equal face
    /// lists have identical topology.
    pub fn faces_arc(&self) -> &Arc<Vec<[usize; 3]>> {
        &self.faces
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn triangle(&self, face: usize) -> [Vec3; 3] {
        let [a, b, c] = self.faces[face];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn face_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.triangle(face);
        0.5 * (b - a).cross(&(c - a)).norm()
    }

    /// Unit outward normal (for a consistently outward-oriented mesh).
    pub fn face_normal(&self, face: usize) -> Vec3 {
        let [a, b, c] = self.triangle(face);
        (b - a).cross(&(c - a)).normalize()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.face_area(f)).sum()
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounding_box(&self) -> (Vec3, Vec3) {
        bounding_box(&self.vertices)
    }

    /// Closed and consistently oriented: every directed edge appears exactly
    /// once and its reverse appears exactly once.
    pub fn check_watertight(&self) -> Result<()> {
        if self.faces.is_empty() {
            return Err(MeshError::Empty);
        }
        let mut directed: HashMap<(usize, usize), u32> = HashMap::with_capacity(self.faces.len() * 3);
        for f in self.faces.iter() {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_insert(0) += 1;
            }
        }
        for (&(a, b), &count) in &directed {
            if count != 1 {
                return Err(MeshError::NotWatertight(format!(
                    "directed edge ({a},{b}) used {count} times"
                )));
            }
            if directed.get(&(b, a)) != Some(&1) {
                return Err(MeshError::NotWatertight(format!("edge ({a},{b}) has no opposite half-edge")));
            }
        }
        Ok(())
    }

    pub fn is_watertight(&self) -> bool {
        self.check_watertight().is_ok()
    }

    pub fn translated(&self, offset: &Vec3) -> Self {
        let vertices = self.vertices.iter().map(|v| v + offset).collect();
        Self {
            name: self.name.clone(),
            vertices,
            faces: Arc::clone(&self.faces),
        }
    }

    /// Reverses every face's winding.
    pub fn flipped(&self) -> Self {
        let faces = self.faces.iter().map(|&[a, b, c]| [a, c, b]).collect();
        Self {
            name: self.name.clone(),
            vertices: self.vertices.clone(),
            faces: Arc::new(faces),
        }
    }

    /// Concatenates two meshes into one (disjoint components).
    pub fn merged(&self, other: &TriangleMesh) -> Self {
        let offset = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut faces: Vec<[usize; 3]> = self.faces.to_vec();
        faces.extend(other.faces.iter().map(|f| [f[0] + offset, f[1] + offset, f[2] + offset]));
        Self {
            name: self.name.clone(),
            vertices,
            faces: Arc::new(faces),
        }
    }
}

pub(crate) fn bounding_box(points: &[Vec3]) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    (lo, hi)
}

/// Divergence-theorem volume. Positive for outward-oriented closed meshes.
pub fn signed_volume(mesh: &TriangleMesh) -> Result<f64> {
    mesh.check_watertight()?;
    Ok(signed_volume_unchecked(mesh))
}

pub(crate) fn signed_volume_unchecked(mesh: &TriangleMesh) -> f64 {
    mesh.faces()
        .iter()
        .map(|&[a, b, c]| {
            let (a, b, c) = (mesh.vertices[a], mesh.vertices[b], mesh.vertices[c]);
            a.dot(&b.cross(&c))
        })
        .sum::<f64>()
        / 6.0
}
