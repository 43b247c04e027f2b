//! Training losses and evaluation metrics.
//!
//! Losses are computed in the normalized frame; `cd_ul1` and the Jaccard
//! index are meant for the original (metric) scale.

mod distance;
mod losses;
mod nearest;

use serde::{Deserialize, Serialize};

use crate::mesh::{voxel_volumes, MeshError, TriangleMesh, Vec3};

pub use distance::{closest_point_on_triangle, point_face_distance_sq};
pub use losses::{pfd_loss, roi_loss, total_loss_with_grad, LossReport, ROI_WEIGHT};
pub use nearest::{NearestFaces, NearestPoints, EXHAUSTIVE_LIMIT};

#[derive(Debug, thiserror::Error)]
pub enum MetricError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("degenerate triangle")]
    DegenerateTriangle,
    #[error("non-finite value at {what} index {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("invalid contact: {0}")]
    InvalidContact(String),
    #[error("shape mismatch: {0}")]
    Mismatch(String),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Default ROI radius in normalized units.
pub const DEFAULT_ROI_RADIUS: f64 = 0.15;
/// Default margin of the ROI floor above the ground plane (normalized units).
pub const DEFAULT_ROI_FLOOR_MARGIN: f64 = 0.02;

/// Poke contact in the frame the loss is evaluated in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactInfo {
    pub point: Vec3,
    /// Radial threshold around `point`.
    pub radius: f64,
    /// Points at or below this height never enter the region of interest.
    pub min_height: f64,
    pub direction: Vec3,
    pub force: Vec3,
    pub torque: Vec3,
}

impl ContactInfo {
    pub fn new(point: Vec3, radius: f64, min_height: f64, direction: Vec3) -> Result<Self> {
        let c = Self { point, radius, min_height, direction, force: Vec3::zeros(), torque: Vec3::zeros() };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0) {
            return Err(MetricError::InvalidContact(format!("radius {} must be > 0", self.radius)));
        }
        if (self.direction.norm() - 1.0).abs() > 1e-9 {
            return Err(MetricError::InvalidContact("direction must have unit norm".into()));
        }
        Ok(())
    }

    /// Region-of-interest indicator: close to the contact and above the floor.
    pub fn contains(&self, p: &Vec3) -> bool {
        (p - self.point).norm() <= self.radius && p.y > self.min_height
    }
}

/// One row of the evaluation table. Losses are scaled by 1e3.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub l_pfd_e3: f64,
    pub l_roi_e3: f64,
    pub cd_ul1_mm: f64,
    pub jaccard: f64,
    pub jaccard_distance: f64,
}

impl MetricsRecord {
    pub fn mean(rows: &[MetricsRecord]) -> MetricsRecord {
        let n = rows.len().max(1) as f64;
        let mut m = MetricsRecord::default();
        for r in rows {
            m.l_pfd_e3 += r.l_pfd_e3 / n;
            m.l_roi_e3 += r.l_roi_e3 / n;
            m.cd_ul1_mm += r.cd_ul1_mm / n;
            m.jaccard += r.jaccard / n;
            m.jaccard_distance += r.jaccard_distance / n;
        }
        m
    }
}

/// Unidirectional L1 chamfer distance from `p` to `q`, in millimeters for
/// inputs in meters.
pub fn cd_ul1(p: &[Vec3], q: &[Vec3]) -> Result<f64> {
    if p.is_empty() {
        return Err(MetricError::Empty("P"));
    }
    let index = NearestPoints::new(q)?;
    let sum: f64 = p.iter().map(|x| index.nearest_l1(x).1).sum();
    Ok(sum / p.len() as f64 * 1e3)
}

/// Volumetric intersection over union of two closed meshes, on a shared
/// voxel grid with `resolution` cells per axis.
pub fn jaccard_index(a: &TriangleMesh, b: &TriangleMesh, resolution: usize) -> Result<f64> {
    let v = voxel_volumes(a, b, resolution)?;
    if v.union <= 0.0 {
        return Err(MetricError::Empty("union volume"));
    }
    Ok((v.intersection / v.union).clamp(0.0, 1.0))
}

/// Deformation level of a ground-truth mesh relative to its template.
pub fn jaccard_distance(template: &TriangleMesh, gt: &TriangleMesh, resolution: usize) -> Result<f64> {
    Ok(1.0 - jaccard_index(template, gt, resolution)?)
}
