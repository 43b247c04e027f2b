//! Point-face distance loss, region-of-interest loss and their sum with an
//! analytic gradient with respect to the predicted vertices.

use crate::mesh::{Provenance, TriangleMesh, Vec3};

use super::nearest::{NearestFaces, NearestPoints};
use super::{ContactInfo, MetricError, Result};

/// Weight of the ROI term in the total loss.
pub const ROI_WEIGHT: f64 = 0.5;

/// Symmetric point-face distance between predicted samples `pred` and the
/// faces of `gt`: mean over points of the squared distance to the nearest
/// face, plus mean over faces of the squared distance to the nearest point.
pub fn pfd_loss(pred: &[Vec3], gt: &TriangleMesh) -> Result<f64> {
    if pred.is_empty() {
        return Err(MetricError::Empty("predicted samples"));
    }
    let faces = NearestFaces::new(gt)?;
    let points = NearestPoints::new(pred)?;
    let to_faces: f64 = pred.iter().map(|p| faces.nearest(p).dist_sq).sum::<f64>() / pred.len() as f64;
    let to_points: f64 = faces.triangles().iter().map(|t| points.nearest_to_triangle(t).1).sum::<f64>()
        / faces.triangles().len() as f64;
    Ok(to_faces + to_points)
}

/// Unidirectional squared chamfer distance from the predicted samples inside
/// the contact region to the ground-truth samples. The mean runs over all of
/// `pred`; points outside the region contribute zero.
pub fn roi_loss(pred: &[Vec3], gt_samples: &[Vec3], contact: &ContactInfo) -> Result<f64> {
    if pred.is_empty() {
        return Err(MetricError::Empty("predicted samples"));
    }
    let q = NearestPoints::new(gt_samples)?;
    let sum: f64 = pred.iter().filter(|p| contact.contains(p)).map(|p| q.nearest_sq(p).1).sum();
    Ok(sum / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub pfd: f64,
    pub roi: f64,
    pub total: f64,
    /// dL/d(vertex) for every predicted vertex.
    pub grad: Vec<Vec3>,
}

/// Total loss `pfd + 0.5 * roi` for predicted vertices whose surface samples
/// are fixed barycentric combinations (`provenance`) over `faces`, with the
/// gradient with respect to each vertex. Nearest-face and nearest-point
/// assignments are held fixed when differentiating.
pub fn total_loss_with_grad(
    pred_vertices: &[Vec3],
    faces: &[[usize; 3]],
    provenance: &[Provenance],
    gt: &TriangleMesh,
    gt_samples: &[Vec3],
    contact: &ContactInfo,
) -> Result<LossReport> {
    if provenance.is_empty() {
        return Err(MetricError::Empty("predicted samples"));
    }
    if let Some(i) = pred_vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
        return Err(MetricError::NonFinite { what: "predicted vertex", index: i });
    }
    for (i, p) in provenance.iter().enumerate() {
        let Some(face) = faces.get(p.face) else {
            return Err(MetricError::Mismatch(format!("sample {i} references face {}", p.face)));
        };
        if face.iter().any(|&v| v >= pred_vertices.len()) {
            return Err(MetricError::Mismatch(format!("face {} references a missing vertex", p.face)));
        }
    }
    let samples: Vec<Vec3> = provenance
        .iter()
        .map(|p| {
            let [a, b, c] = faces[p.face];
            pred_vertices[a] * p.bary[0] + pred_vertices[b] * p.bary[1] + pred_vertices[c] * p.bary[2]
        })
        .collect();
    let n_p = samples.len() as f64;

    let gt_faces = NearestFaces::new(gt)?;
    let pred_index = NearestPoints::new(&samples)?;
    let gt_index = NearestPoints::new(gt_samples)?;
    let mut sample_grad = vec![Vec3::zeros(); samples.len()];

    let mut to_faces = 0.0;
    for (i, p) in samples.iter().enumerate() {
        let hit = gt_faces.nearest(p);
        to_faces += hit.dist_sq;
        sample_grad[i] += (p - hit.closest) * (2.0 / n_p);
    }
    to_faces /= n_p;

    let n_f = gt_faces.triangles().len() as f64;
    let mut to_points = 0.0;
    for tri in gt_faces.triangles() {
        let (i, d) = pred_index.nearest_to_triangle(tri);
        to_points += d;
        let (closest, _) = super::closest_point_on_triangle(&samples[i], &tri[0], &tri[1], &tri[2]);
        sample_grad[i] += (samples[i] - closest) * (2.0 / n_f);
    }
    to_points /= n_f;

    let mut roi = 0.0;
    for (i, p) in samples.iter().enumerate() {
        if contact.contains(p) {
            let (j, d) = gt_index.nearest_sq(p);
            roi += d;
            sample_grad[i] += (p - gt_samples[j]) * (2.0 * ROI_WEIGHT / n_p);
        }
    }
    roi /= n_p;

    let mut grad = vec![Vec3::zeros(); pred_vertices.len()];
    for (g, p) in sample_grad.iter().zip(provenance) {
        let face = faces[p.face];
        for k in 0..3 {
            grad[face[k]] += g * p.bary[k];
        }
    }
    if let Some(i) = grad.iter().position(|g| !g.iter().all(|c| c.is_finite())) {
        return Err(MetricError::NonFinite { what: "vertex gradient", index: i });
    }
    let pfd = to_faces + to_points;
    Ok(LossReport { pfd, roi, total: pfd + ROI_WEIGHT * roi, grad })
}
