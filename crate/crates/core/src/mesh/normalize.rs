use serde::{Deserialize, Serialize};

use super::{MeshError, Result, TriangleMesh, Vec3};

/// `normalized = (p + translation) * scale`.
///
/// Computed once from an object's template and reused for every frame of
/// that object, so deformation magnitudes survive normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTransform {
    pub translation: Vec3,
    pub scale: f64,
}

impl NormalizationTransform {
    pub fn identity() -> Self {
        Self { translation: Vec3::zeros(), scale: 1.0 }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        (p + self.translation) * self.scale
    }

    pub fn invert(&self, p: &Vec3) -> Vec3 {
        p / self.scale - self.translation
    }

    pub fn apply_mesh(&self, mesh: &TriangleMesh) -> Result<TriangleMesh> {
        mesh.with_vertices(mesh.vertices().iter().map(|v| self.apply(v)).collect())
    }

    pub fn invert_mesh(&self, mesh: &TriangleMesh) -> Result<TriangleMesh> {
        mesh.with_vertices(mesh.vertices().iter().map(|v| self.invert(v)).collect())
    }

    pub fn apply_points(&self, pts: &[Vec3]) -> Vec<Vec3> {
        pts.iter().map(|p| self.apply(p)).collect()
    }

    pub fn invert_points(&self, pts: &[Vec3]) -> Vec<Vec3> {
        pts.iter().map(|p| self.invert(p)).collect()
    }

    /// Maps a vector (direction or displacement); ignores translation.
    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        v * self.scale
    }

    /// Computes the transform that centers `template`'s bounding box at the
    /// origin and scales its longest axis to 1.
    pub fn from_template(template: &TriangleMesh) -> Result<Self> {
        let (lo, hi) = template.bounding_box();
        let extent = (hi - lo).max();
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(MeshError::ZeroExtent);
        }
        Ok(Self { translation: -(lo + hi) * 0.5, scale: 1.0 / extent })
    }
}

/// Normalizes a template into `[-0.5, 0.5]^3` (longest axis exactly 1) and
/// returns the transform for reuse on the object's frames.
pub fn normalize_to_unit_cube(template: &TriangleMesh) -> Result<(TriangleMesh, NormalizationTransform)> {
    let t = NormalizationTransform::from_template(template)?;
    Ok((t.apply_mesh(template)?, t))
}
