//! Single-view sensor point clouds and orthographic depth rendering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Result, SynthError};
use crate::encoders::DepthImage;
use crate::mesh::{MeshError, PointCloud, TriangleMesh, Vec3};
use crate::spatial::{Aabb, Bvh};

/// Surface samples on faces whose outward normal faces `view` (the
/// direction from the object toward the sensor), with isotropic Gaussian
/// noise of standard deviation `noise`. Self-occlusion is not modeled.
pub fn sensor_pointcloud(mesh: &TriangleMesh, view: &Vec3, n: usize, noise: f64, seed: u64) -> Result<PointCloud> {
    sensor_samples(mesh, view, n, noise, seed).map(|(c, _)| c)
}

/// [`sensor_pointcloud`] plus the source face of every point.
pub(crate) fn sensor_samples(mesh: &TriangleMesh, view: &Vec3, n: usize, noise: f64, seed: u64) -> Result<(PointCloud, Vec<usize>)> {
    if n == 0 {
        return Err(SynthError::Invalid("sensor cloud needs at least one point".into()));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(SynthError::Invalid(format!("noise {noise}")));
    }
    let v = view.try_normalize(1e-12).ok_or_else(|| SynthError::Invalid("zero view direction".into()))?;
    let mut faces = Vec::new();
    let mut cumulative = Vec::new();
    let mut total = 0.0;
    for f in 0..mesh.face_count() {
        if mesh.face_normal(f).dot(&v) > 0.0 {
            total += mesh.face_area(f);
            faces.push(f);
            cumulative.push(total);
        }
    }
    if faces.is_empty() {
        return Err(SynthError::NoVisibleSurface);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = (noise > 0.0).then(|| Normal::new(0.0, noise).expect("finite sigma"));
    let mut source = Vec::with_capacity(n);
    let points = (0..n)
        .map(|_| {
            let r = rng.gen::<f64>() * total;
            let k = cumulative.partition_point(|&c| c <= r).min(faces.len() - 1);
            source.push(faces[k]);
            let [a, b, c] = mesh.triangle(faces[k]);
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            let s = r1.sqrt();
            let mut p = a * (1.0 - s) + b * (s * (1.0 - r2)) + c * (s * r2);
            if let Some(nd) = &normal {
                p += Vec3::from_fn(|_, _| nd.sample(&mut rng));
            }
            p
        })
        .collect();
    Ok((PointCloud::new(points)?, source))
}

/// Ray queries against a fixed triangle set.
pub struct RayCaster {
    tris: Vec<[Vec3; 3]>,
    bvh: Bvh,
}

impl RayCaster {
    pub fn new(mesh: &TriangleMesh) -> Result<Self> {
        if mesh.face_count() == 0 {
            return Err(MeshError::Empty.into());
        }
        let tris: Vec<[Vec3; 3]> = (0..mesh.face_count()).map(|f| mesh.triangle(f)).collect();
        let bvh = Bvh::over_triangles(&tris);
        Ok(Self { tris, bvh })
    }

    /// First hit `(face, t)` along `origin + t * dir`, `t > 0`.
    pub fn cast(&self, origin: &Vec3, dir: &Vec3) -> Option<(usize, f64)> {
        self.bvh
            .nearest(|b| ray_box(origin, dir, b), |i| ray_triangle(origin, dir, &self.tris[i]).unwrap_or(f64::INFINITY))
            .filter(|(_, t)| t.is_finite())
    }
}

/// Entry distance of the ray into the box, infinity on a miss.
fn ray_box(o: &Vec3, d: &Vec3, b: &Aabb) -> f64 {
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for k in 0..3 {
        if d[k] == 0.0 {
            if o[k] < b.min[k] || o[k] > b.max[k] {
                return f64::INFINITY;
            }
        } else {
            let (t1, t2) = ((b.min[k] - o[k]) / d[k], (b.max[k] - o[k]) / d[k]);
            lo = lo.max(t1.min(t2));
            hi = hi.min(t1.max(t2));
        }
    }
    if lo <= hi {
        lo
    } else {
        f64::INFINITY
    }
}

/// Two-sided Moller-Trumbore intersection.
fn ray_triangle(o: &Vec3, d: &Vec3, [a, b, c]: &[Vec3; 3]) -> Option<f64> {
    let (e1, e2) = (b - a, c - a);
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() <= 1e-14 * e1.norm() * e2.norm() {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    let t = e2.dot(&q) * inv;
    (t > 0.0).then_some(t)
}

/// Orthographic camera. Rays leave the image plane through `origin` along
/// `forward`; depth is distance from that plane.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoCamera {
    pub origin: Vec3,
    pub forward: Vec3,
    pub right: Vec3,
    pub up: Vec3,
    /// Half the image width in meters.
    pub half_width: f64,
    pub width: usize,
    pub height: usize,
}

impl OrthoCamera {
    pub fn new(origin: Vec3, forward: Vec3, up_hint: Vec3, half_width: f64, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || !(half_width > 0.0) {
            return Err(SynthError::Invalid("camera needs a positive size".into()));
        }
        let forward = forward.try_normalize(1e-12).ok_or_else(|| SynthError::Invalid("zero camera axis".into()))?;
        let right = forward
            .cross(&up_hint)
            .try_normalize(1e-9)
            .ok_or_else(|| SynthError::Invalid("camera up hint parallel to axis".into()))?;
        let up = right.cross(&forward);
        Ok(Self { origin, forward, right, up, half_width, width, height })
    }

    /// Square camera looking along `-view` at the box `[lo, hi]`, with the
    /// image plane just outside it.
    pub fn framing(lo: &Vec3, hi: &Vec3, view: &Vec3, resolution: usize) -> Result<Self> {
        let v = view.try_normalize(1e-12).ok_or_else(|| SynthError::Invalid("zero view direction".into()))?;
        let center = (lo + hi) * 0.5;
        let half = (hi - lo) * 0.5;
        let radius = half.norm();
        let depth_half: f64 = (0..3).map(|k| v[k].abs() * half[k]).sum();
        let up_hint = if v.y.abs() > 0.99 { Vec3::z() } else { Vec3::y() };
        Self::new(center + v * (depth_half + 0.05), -v, up_hint, 1.15 * radius, resolution, resolution)
    }

    pub fn half_height(&self) -> f64 {
        self.half_width * self.height as f64 / self.width as f64
    }

    pub fn pixel_size(&self) -> f64 {
        2.0 * self.half_width / self.width as f64
    }

    /// Ray origin of pixel `(x, y)`; row 0 is the top.
    pub fn pixel_origin(&self, x: usize, y: usize) -> Vec3 {
        let u = ((x as f64 + 0.5) / self.width as f64 * 2.0 - 1.0) * self.half_width;
        let v = (1.0 - (y as f64 + 0.5) / self.height as f64 * 2.0) * self.half_height();
        self.origin + self.right * u + self.up * v
    }

    /// Whether `p` projects inside the image and lies in front of the plane.
    pub fn contains(&self, p: &Vec3) -> bool {
        let r = p - self.origin;
        r.dot(&self.forward) >= 0.0 && r.dot(&self.right).abs() <= self.half_width && r.dot(&self.up).abs() <= self.half_height()
    }
}

/// Nearest-surface depth per pixel; background where rays miss.
pub fn render_depth(mesh: &TriangleMesh, camera: &OrthoCamera) -> Result<DepthImage> {
    if mesh.face_count() == 0 {
        return Err(MeshError::Empty.into());
    }
    if !mesh.vertices().iter().all(|v| camera.contains(v)) {
        return Err(SynthError::OutOfView);
    }
    let caster = RayCaster::new(mesh)?;
    let mut depth = Vec::with_capacity(camera.width * camera.height);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let o = camera.pixel_origin(x, y);
            depth.push(caster.cast(&o, &camera.forward).map_or(DepthImage::BACKGROUND, |(_, t)| t));
        }
    }
    Ok(DepthImage { width: camera.width, height: camera.height, depth })
}
