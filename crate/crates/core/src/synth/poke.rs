//! Poking protocol: Gaussian dents driven by a force profile.

use nalgebra::UnitQuaternion;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sensor::{render_depth, sensor_pointcloud, OrthoCamera, RayCaster};
use super::{align_robot_stream, derive_seed, FrameSample, ObjectSpec, Protocol, Result, Sequence, SynthConfig, SynthError};
use crate::encoders::RobotFrame;
use crate::mesh::Vec3;
use crate::metrics::NearestFaces;

/// Radius of the poking stick tip, m.
pub const POKER_RADIUS: f64 = 0.010;
/// Dent standard deviation in units of the poker radius.
pub const DENT_WIDTH_FACTOR: f64 = 1.5;
/// Distance the tip backs off the surface between pokes, m.
const RETRACT: f64 = 0.03;
/// Contact points farther than this from the template surface are rejected, m.
const SURFACE_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PokeEvent {
    /// Contact point on the template surface.
    pub contact: Vec3,
    /// Outward horizontal unit vector; the stick pushes along `-direction`
    /// and the robot measures the reaction `F * direction`.
    pub direction: Vec3,
    /// `(time s, force N)` knots, linearly interpolated, zero outside.
    pub profile: Vec<(f64, f64)>,
    pub radius: f64,
}

impl PokeEvent {
    pub fn new(contact: Vec3, direction: Vec3, profile: Vec<(f64, f64)>) -> Result<Self> {
        let e = Self { contact, direction, profile, radius: POKER_RADIUS };
        e.validate()?;
        Ok(e)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.direction;
        if d.y.abs() > 1e-9 || (d.norm() - 1.0).abs() > 1e-9 {
            return Err(SynthError::Invalid(format!("poke direction {d:?} is not a horizontal unit vector")));
        }
        if !(self.radius > 0.0) || !self.contact.iter().all(|c| c.is_finite()) {
            return Err(SynthError::Invalid("poker radius and contact must be finite and positive".into()));
        }
        if self.profile.is_empty() {
            return Err(SynthError::Invalid("empty force profile".into()));
        }
        for w in self.profile.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(SynthError::Invalid("force profile times must increase".into()));
            }
        }
        if self.profile.iter().any(|&(t, f)| !t.is_finite() || !(f >= 0.0) || !f.is_finite()) {
            return Err(SynthError::Invalid("force profile values must be finite and non-negative".into()));
        }
        Ok(())
    }

    pub fn force_at(&self, t: f64) -> f64 {
        let p = &self.profile;
        let (t0, t1) = self.support();
        if t < t0 || t > t1 {
            return 0.0;
        }
        let i = p.partition_point(|k| k.0 <= t);
        if i == 0 {
            return p[0].1;
        }
        if i == p.len() {
            return p[p.len() - 1].1;
        }
        let ((ta, fa), (tb, fb)) = (p[i - 1], p[i]);
        fa + (fb - fa) * (t - ta) / (tb - ta)
    }

    /// First and last knot times.
    pub fn support(&self) -> (f64, f64) {
        (self.profile[0].0, self.profile[self.profile.len() - 1].0)
    }

    pub fn sigma(&self) -> f64 {
        DENT_WIDTH_FACTOR * self.radius
    }

    pub fn peak_force(&self) -> f64 {
        self.profile.iter().map(|k| k.1).fold(0.0, f64::max)
    }
}

/// `u(x) = -depth * exp(-|x - contact|^2 / (2 sigma^2)) * direction`.
pub fn dent_displacement(x: &Vec3, contact: &Vec3, direction: &Vec3, depth: f64, sigma: f64) -> Vec3 {
    let r2 = (x - contact).norm_squared();
    direction * (-depth * (-r2 / (2.0 * sigma * sigma)).exp())
}

/// `cfg.pokes_per_sequence` trapezoidal pokes at random horizontal
/// directions and mid-height contact points, one per equal time window.
pub fn random_poke_events(spec: &ObjectSpec, cfg: &SynthConfig, rng: &mut impl Rng) -> Result<Vec<PokeEvent>> {
    cfg.validate()?;
    let caster = RayCaster::new(&spec.template)?;
    let (lo, hi) = spec.template.bounding_box();
    let center = (lo + hi) * 0.5;
    let reach = (hi - lo).norm();
    let window = cfg.poke_duration / cfg.pokes_per_sequence as f64;
    // ramp and hold durations for a 5 s, 3-poke sequence, shrunk for shorter windows
    let scale = (window / (5.0 / 3.0)).min(1.0);
    let mut events = Vec::with_capacity(cfg.pokes_per_sequence);
    for i in 0..cfg.pokes_per_sequence {
        let (contact, direction) = loop {
            let theta = rng.gen_range(0.0..std::f64::consts::TAU);
            let d = Vec3::new(theta.cos(), 0.0, theta.sin());
            let y = lo.y + (hi.y - lo.y) * rng.gen_range(0.3..0.7);
            let origin = Vec3::new(center.x, y, center.z) + d * reach;
            if let Some((_, t)) = caster.cast(&origin, &-d) {
                break (origin - d * t, d);
            }
        };
        let [dmin, dmax] = cfg.dent_depth;
        let depth = dmin + (dmax - dmin) * rng.gen::<f64>();
        let peak = spec.stiffness * depth;
        let ramp = 0.3 * scale;
        let hold = rng.gen_range(0.20..0.34) * scale;
        let slack = (window - 2.0 * ramp - hold).max(0.0);
        let t0 = i as f64 * window + slack * rng.gen_range(0.1..0.5);
        let profile = vec![(t0, 0.0), (t0 + ramp, peak), (t0 + ramp + hold, peak), (t0 + 2.0 * ramp + hold, 0.0)];
        events.push(PokeEvent::new(contact, direction, profile)?);
    }
    Ok(events)
}

struct PokeState<'a> {
    spec: &'a ObjectSpec,
    events: Vec<PokeEvent>,
    half: Vec<f64>,
}

impl PokeState<'_> {
    /// Event whose support contains `t`.
    fn active(&self, t: f64) -> Option<usize> {
        self.events.iter().position(|e| {
            let (a, b) = e.support();
            a <= t && t <= b
        })
    }

    /// Indentation for force `f` of event `i`, clamped to the half extent.
    fn depth(&self, i: usize, f: f64) -> f64 {
        let raw = f / self.spec.stiffness;
        if raw > self.half[i] {
            log::warn!("{}: dent {raw:.4} m exceeds half extent {:.4} m, clamped", self.spec.name, self.half[i]);
            self.half[i]
        } else {
            raw
        }
    }

    fn robot_frame(&self, t: f64) -> RobotFrame {
        if self.events.is_empty() {
            return RobotFrame::at_rest(t);
        }
        let (i, inside) = match self.active(t) {
            Some(i) => (i, true),
            None => (self.events.iter().position(|e| e.support().0 > t).unwrap_or(self.events.len() - 1), false),
        };
        let e = &self.events[i];
        let f = e.force_at(t);
        let tip = if inside { e.contact - e.direction * self.depth(i, f) } else { e.contact + e.direction * RETRACT };
        let q = UnitQuaternion::rotation_between(&Vec3::z(), &-e.direction).unwrap_or_else(UnitQuaternion::identity);
        RobotFrame {
            t,
            position: tip,
            orientation: [q.w, q.i, q.j, q.k],
            contact: e.contact,
            force: e.direction * f,
            torque: Vec3::zeros(),
        }
    }

    fn deformed(&self, t: f64) -> Vec<Vec3> {
        let verts = self.spec.template.vertices();
        match self.active(t) {
            None => verts.to_vec(),
            Some(i) => {
                let e = &self.events[i];
                let depth = self.depth(i, e.force_at(t));
                let sigma = e.sigma();
                verts.iter().map(|v| v + dent_displacement(v, &e.contact, &e.direction, depth, sigma)).collect()
            }
        }
    }
}

/// Renders a poking sequence of `cfg.poke_duration` seconds at
/// `cfg.poke_fps`. Events must lie on the template surface and must not
/// overlap in time.
pub fn gen_poke_sequence(spec: &ObjectSpec, events: &[PokeEvent], cfg: &SynthConfig, seed: u64) -> Result<Sequence> {
    cfg.validate()?;
    let faces = NearestFaces::new(&spec.template)?;
    let mut events = events.to_vec();
    for e in &events {
        e.validate()?;
        let distance = faces.nearest(&e.contact).dist_sq.sqrt();
        if distance > SURFACE_TOL {
            return Err(SynthError::OffSurface { distance });
        }
    }
    events.sort_by(|a, b| a.support().0.total_cmp(&b.support().0));
    for w in events.windows(2) {
        if w[1].support().0 <= w[0].support().1 {
            return Err(SynthError::Invalid("poke events overlap in time".into()));
        }
    }
    let half = events.iter().map(|e| spec.half_extent(&e.direction)).collect();
    let state = PokeState { spec, events, half };

    let n_cam = (cfg.poke_duration * cfg.poke_fps).round() as usize;
    let n_robot = (cfg.poke_duration * cfg.robot_rate).round() as usize;
    let cam_t: Vec<f64> = (0..n_cam).map(|i| i as f64 / cfg.poke_fps).collect();
    let robot_stream: Vec<RobotFrame> = (0..n_robot).map(|j| state.robot_frame(j as f64 / cfg.robot_rate)).collect();
    let alignment = align_robot_stream(&robot_stream, &cam_t, 0.5 / cfg.robot_rate + 1e-9)?;
    let mut paired = vec![None; n_cam];
    for p in &alignment.pairs {
        paired[p.camera] = Some(robot_stream[p.robot]);
    }

    let camera = if cfg.depth_images {
        let (lo, hi) = spec.template.bounding_box();
        Some(OrthoCamera::framing(&lo, &hi, &cfg.view(), cfg.image_size)?)
    } else {
        None
    };
    let mut frames = Vec::with_capacity(n_cam);
    for (i, (&t, robot)) in cam_t.iter().zip(paired).enumerate() {
        let mesh = spec.template.with_vertices(state.deformed(t))?;
        let cloud = if cfg.sensor_clouds {
            Some(sensor_pointcloud(&mesh, &cfg.view(), cfg.sensor_points, cfg.sensor_noise, derive_seed(seed, i as u64))?)
        } else {
            None
        };
        let depth = camera.as_ref().map(|c| render_depth(&mesh, c)).transpose()?;
        let in_contact = robot.is_some_and(|r| r.force.norm() > cfg.contact_threshold);
        frames.push(FrameSample { index: i, t, mesh, cloud, depth, robot, in_contact });
    }
    Ok(Sequence {
        object: spec.name.clone(),
        protocol: Protocol::Poke,
        fps: cfg.poke_fps,
        seed,
        stiffness: spec.stiffness,
        template: spec.template.clone(),
        frames,
        robot_stream,
    })
}
