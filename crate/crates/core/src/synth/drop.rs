//! Dropping protocol: rigid free fall, then a damped squash about the floor.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sensor::{render_depth, sensor_pointcloud, OrthoCamera};
use super::{derive_seed, FrameSample, ObjectSpec, Protocol, Result, Sequence, SynthConfig, SynthError};
use crate::mesh::Vec3;

pub const GRAVITY: f64 = 9.81;
/// Squash oscillation frequency, Hz.
const SQUASH_FREQ: f64 = 6.0;
/// Squash envelope decay rate, 1/s.
const SQUASH_DECAY: f64 = 15.0;

pub fn drop_impact_time(height: f64) -> f64 {
    (2.0 * height / GRAVITY).sqrt()
}

/// Peak relative compression: softer objects and higher drops squash more.
fn squash_amplitude(stiffness: f64, height: f64) -> f64 {
    (0.05 * (500.0 / stiffness).sqrt() * (height / 2.0).sqrt()).clamp(0.02, 0.3)
}

/// Vertical scale factor `tau` seconds after impact.
fn squash(amplitude: f64, tau: f64) -> f64 {
    1.0 - amplitude * (-SQUASH_DECAY * tau).exp() * (std::f64::consts::TAU * SQUASH_FREQ * tau).sin()
}

/// Drops the template from `height` meters above its resting pose.
/// Frames come at `cfg.drop_fps` for `cfg.drop_duration` seconds. After
/// impact the mesh scales by `s` vertically about the floor and by
/// `1/sqrt(s)` horizontally about its axis, so volume is preserved.
pub fn gen_drop_sequence(spec: &ObjectSpec, height: f64, cfg: &SynthConfig, seed: u64) -> Result<Sequence> {
    cfg.validate()?;
    if !(height > 0.0 && height.is_finite()) {
        return Err(SynthError::Invalid(format!("drop height {height}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amplitude = squash_amplitude(spec.stiffness, height) * rng.gen_range(0.9..1.1);
    let t_impact = drop_impact_time(height);
    let (lo, hi) = spec.template.bounding_box();
    let axis = (lo + hi) * 0.5;
    let camera = if cfg.depth_images {
        let top = hi + Vec3::new(0.0, height, 0.0);
        // the squash widens the object by at most 1/sqrt(1 - 0.33)
        let widen = (hi - lo) * 0.11;
        let (l, h) = (lo - widen, top + widen);
        Some(OrthoCamera::framing(&Vec3::new(l.x, lo.y, l.z), &h, &cfg.view(), cfg.image_size)?)
    } else {
        None
    };
    let n = (cfg.drop_duration * cfg.drop_fps).round() as usize;
    let mut frames = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 / cfg.drop_fps;
        let verts: Vec<Vec3> = if t < t_impact {
            let lift = Vec3::new(0.0, height - 0.5 * GRAVITY * t * t, 0.0);
            spec.template.vertices().iter().map(|v| v + lift).collect()
        } else {
            let s = squash(amplitude, t - t_impact);
            let w = 1.0 / s.sqrt();
            spec.template
                .vertices()
                .iter()
                .map(|v| Vec3::new(axis.x + (v.x - axis.x) * w, lo.y + (v.y - lo.y) * s, axis.z + (v.z - axis.z) * w))
                .collect()
        };
        let mesh = spec.template.with_vertices(verts)?;
        let cloud = if cfg.sensor_clouds {
            Some(sensor_pointcloud(&mesh, &cfg.view(), cfg.sensor_points, cfg.sensor_noise, derive_seed(seed, i as u64))?)
        } else {
            None
        };
        let depth = camera.as_ref().map(|c| render_depth(&mesh, c)).transpose()?;
        frames.push(FrameSample { index: i, t, mesh, cloud, depth, robot: None, in_contact: false });
    }
    Ok(Sequence {
        object: spec.name.clone(),
        protocol: Protocol::Drop,
        fps: cfg.drop_fps,
        seed,
        stiffness: spec.stiffness,
        template: spec.template.clone(),
        frames,
        robot_stream: Vec::new(),
    })
}
