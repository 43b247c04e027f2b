//! Voxel occupancy by ray parity, and the volume operator built on it.

use serde::{Deserialize, Serialize};

use super::{MeshError, Result, TriangleMesh, Vec3};

pub const MIN_RESOLUTION: usize = 8;

/// Dense occupancy grid. Cell `(i, j, k)` has its center at
/// `origin + (i + 0.5, j + 0.5, k + 0.5) * cell`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    pub origin: Vec3,
    pub cell: Vec3,
    pub resolution: [usize; 3],
    pub occupancy: Vec<bool>,
}

impl VoxelGrid {
    /// Empty grid over `[lo, hi]` with `resolution` cells per axis, one of
    /// which is a margin cell on each side.
    pub fn covering(lo: Vec3, hi: Vec3, resolution: usize) -> Result<Self> {
        if resolution < MIN_RESOLUTION {
            return Err(MeshError::InvalidArgument(format!(
                "voxel resolution {resolution} < {MIN_RESOLUTION}"
            )));
        }
        let ext = hi - lo;
        if !ext.iter().all(|e| *e > 0.0 && e.is_finite()) {
            return Err(MeshError::ZeroExtent);
        }
        let cell = ext / (resolution - 2) as f64;
        Ok(Self {
            origin: lo - cell,
            cell,
            resolution: [resolution; 3],
            occupancy: vec![false; resolution.pow(3)],
        })
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.resolution[0] * (j + self.resolution[1] * k)
    }

    pub fn center(&self, i: usize, j: usize, k: usize) -> Vec3 {
        self.origin + Vec3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5).component_mul(&self.cell)
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell.x * self.cell.y * self.cell.z
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn volume(&self) -> f64 {
        self.occupied_count() as f64 * self.cell_volume()
    }

    /// Marks every cell whose center lies inside `mesh` (parity of +x ray
    /// crossings). Rows whose ray grazes an edge or vertex are re-cast from a
    /// slightly jittered origin.
    pub fn fill(&mut self, mesh: &TriangleMesh) {
        let [nx, ny, nz] = self.resolution;
        // bin triangles by the (j, k) rows their yz-footprint covers
        let mut bins: Vec<Vec<usize>> = vec![Vec::new(); ny * nz];
        let tol_y = 1e-3 * self.cell.y;
        let tol_z = 1e-3 * self.cell.z;
        for f in 0..mesh.face_count() {
            let tri = mesh.triangle(f);
            let (ylo, yhi) = min_max(tri.iter().map(|p| p.y));
            let (zlo, zhi) = min_max(tri.iter().map(|p| p.z));
            let Some((j0, j1)) = center_range(ylo - tol_y, yhi + tol_y, self.origin.y, self.cell.y, ny) else {
                continue;
            };
            let Some((k0, k1)) = center_range(zlo - tol_z, zhi + tol_z, self.origin.z, self.cell.z, nz) else {
                continue;
            };
            for k in k0..=k1 {
                for j in j0..=j1 {
                    bins[j + ny * k].push(f);
                }
            }
        }
        let mut crossings = Vec::new();
        for k in 0..nz {
            for j in 0..ny {
                let bin = &bins[j + ny * k];
                if bin.is_empty() {
                    continue;
                }
                let base = self.center(0, j, k);
                row_crossings(mesh, bin.iter().copied(), base.y, base.z, self.cell.y.min(self.cell.z), &mut crossings);
                crossings.sort_by(f64::total_cmp);
                let mut c = 0;
                for i in 0..nx {
                    let x = self.origin.x + (i as f64 + 0.5) * self.cell.x;
                    while c < crossings.len() && crossings[c] < x {
                        c += 1;
                    }
                    if c % 2 == 1 {
                        let idx = self.index(i, j, k);
                        self.occupancy[idx] = true;
                    }
                }
            }
        }
    }
}

fn min_max(it: impl Iterator<Item = f64>) -> (f64, f64) {
    it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Indices of cell centers inside `[lo, hi]`, clamped to the grid.
fn center_range(lo: f64, hi: f64, origin: f64, cell: f64, n: usize) -> Option<(usize, usize)> {
    let a = ((lo - origin) / cell - 0.5).ceil().max(0.0);
    let b = ((hi - origin) / cell - 0.5).floor().min(n as f64 - 1.0);
    (a <= b).then_some((a as usize, b as usize))
}

enum Hit {
    Miss,
    Cross(f64),
    Degenerate,
}

fn ray_hit(tri: &[Vec3; 3], y: f64, z: f64) -> Hit {
    let [a, b, c] = tri;
    let edge = |p: &Vec3, q: &Vec3| (q.y - p.y) * (z - p.z) - (q.z - p.z) * (y - p.y);
    let w0 = edge(b, c);
    let w1 = edge(c, a);
    let w2 = edge(a, b);
    let area = w0 + w1 + w2;
    let scale = (b - a).norm() * (c - a).norm();
    let eps = 1e-12 * scale;
    if area.abs() <= eps {
        // triangle parallel to the ray; its neighbours account for the surface
        return Hit::Miss;
    }
    let s = area.signum();
    let (u0, u1, u2) = (w0 * s, w1 * s, w2 * s);
    if u0 < -eps || u1 < -eps || u2 < -eps {
        return Hit::Miss;
    }
    if u0 <= eps || u1 <= eps || u2 <= eps {
        return Hit::Degenerate;
    }
    Hit::Cross((w0 * a.x + w1 * b.x + w2 * c.x) / area)
}

/// Fills `out` with the x coordinates where the +x ray through `(y, z)`
/// pierces the listed faces, jittering the ray until no hit is degenerate.
fn row_crossings(
    mesh: &TriangleMesh,
    faces: impl Iterator<Item = usize> + Clone,
    y: f64,
    z: f64,
    cell: f64,
    out: &mut Vec<f64>,
) {
    const JITTER: [(f64, f64); 6] = [
        (0.0, 0.0),
        (0.618_033_99, 0.381_966_01),
        (-0.324_717_96, 0.754_877_67),
        (0.847_759_07, -0.569_840_29),
        (-0.723_606_80, -0.276_393_20),
        (0.127_016_65, 0.931_851_65),
    ];
    for (attempt, (jy, jz)) in JITTER.iter().enumerate() {
        let amp = if attempt == 0 { 0.0 } else { 1e-5 * cell * attempt as f64 };
        let (ry, rz) = (y + jy * amp, z + jz * amp);
        out.clear();
        let mut degenerate = false;
        for f in faces.clone() {
            match ray_hit(&mesh.triangle(f), ry, rz) {
                Hit::Miss => {}
                Hit::Cross(x) => out.push(x),
                Hit::Degenerate => {
                    degenerate = true;
                    break;
                }
            }
        }
        if !degenerate {
            return;
        }
    }
    log::warn!("ray at y={y}, z={z} stayed degenerate after jittering");
}

/// Parity test for a single point against a closed mesh.
pub fn point_in_mesh(mesh: &TriangleMesh, p: &Vec3) -> bool {
    let (lo, hi) = mesh.bounding_box();
    let cell = (hi - lo).max().max(1e-9) * 1e-2;
    let mut crossings = Vec::new();
    row_crossings(mesh, 0..mesh.face_count(), p.y, p.z, cell, &mut crossings);
    crossings.iter().filter(|&&x| x < p.x).count() % 2 == 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelVolumes {
    pub intersection: f64,
    pub union: f64,
    pub a: f64,
    pub b: f64,
}

/// Voxelizes both meshes on one shared grid covering the union of their
/// bounding boxes plus a one-cell margin, and returns the four volumes.
pub fn voxel_volumes(a: &TriangleMesh, b: &TriangleMesh, resolution: usize) -> Result<VoxelVolumes> {
    a.check_watertight()?;
    b.check_watertight()?;
    let (alo, ahi) = a.bounding_box();
    let (blo, bhi) = b.bounding_box();
    let mut ga = VoxelGrid::covering(alo.inf(&blo), ahi.sup(&bhi), resolution)?;
    let mut gb = ga.clone();
    ga.fill(a);
    gb.fill(b);
    let (mut both, mut either, mut na, mut nb) = (0usize, 0usize, 0usize, 0usize);
    for (&x, &y) in ga.occupancy.iter().zip(&gb.occupancy) {
        na += x as usize;
        nb += y as usize;
        both += (x && y) as usize;
        either += (x || y) as usize;
    }
    let cv = ga.cell_volume();
    Ok(VoxelVolumes {
        intersection: both as f64 * cv,
        union: either as f64 * cv,
        a: na as f64 * cv,
        b: nb as f64 * cv,
    })
}
