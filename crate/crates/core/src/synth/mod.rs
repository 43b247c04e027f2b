//! Synthetic poke and drop sequences with known ground-truth meshes.
//!
//! Objects are watertight primitives resting on the ground plane (y = 0, +y
//! up). Poke sequences dent the template with a Gaussian displacement field
//! whose depth follows Hooke's law for the commanded force; drop sequences
//! free-fall and then squash and recover. Each frame can carry a simulated
//! single-view sensor cloud, an orthographic depth image and, for pokes, the
//! robot reading paired from a 120 Hz stream.

mod align;
mod drop;
mod io;
mod poke;
mod sensor;
mod stiffness;

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::encoders::{DepthImage, RobotFrame};
use crate::mesh::{make_primitive, MeshError, PointCloud, Primitive, TriangleMesh, Vec3};
use crate::metrics::MetricError;

pub use align::{align_streams, align_robot_stream, curate_contact_frames, Alignment, Curated, Pairing};
pub use drop::{drop_impact_time, gen_drop_sequence, GRAVITY};
pub use io::{
    load_depth, load_depth_csv, load_depth_pgm, read_manifest, read_sequence, read_sequences, save_depth_csv, save_depth_pgm,
    write_sequence, FrameEntry, SequenceManifest, MANIFEST,
};
pub use poke::{dent_displacement, gen_poke_sequence, random_poke_events, PokeEvent, DENT_WIDTH_FACTOR, POKER_RADIUS};
pub use sensor::{render_depth, sensor_pointcloud, OrthoCamera, RayCaster};
pub use stiffness::{estimate_stiffness, stiffness_samples, RansacConfig, StiffnessFit};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("contact point is {distance:.3e} m off the template surface")]
    OffSurface { distance: f64 },
    #[error("no surface faces the view direction")]
    NoVisibleSurface,
    #[error("mesh extends outside the camera volume")]
    OutOfView,
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("empty {0} stream")]
    EmptyStream(&'static str),
    #[error("no camera tick has a robot sample within {tolerance} s")]
    ClockSkew { tolerance: f64 },
    #[error("{0} sequences cannot be curated")]
    WrongProtocol(Protocol),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = SynthError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Poke,
    Drop,
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Protocol::Poke => "poke",
            Protocol::Drop => "drop",
        })
    }
}

impl std::str::FromStr for Protocol {
    type Err = SynthError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "poke" => Ok(Protocol::Poke),
            "drop" => Ok(Protocol::Drop),
            _ => Err(SynthError::Invalid(format!("unknown protocol {s:?}"))),
        }
    }
}

/// Measured stiffness range of the reference object set, N/m.
pub const STIFFNESS_RANGE: (f64, f64) = (148.0, 2156.0);

/// Target edge length of generated templates, m.
pub const TEMPLATE_EDGE: f64 = 0.012;

#[derive(Debug, Clone)]
pub struct ObjectSpec {
    pub name: String,
    pub shape: Option<Primitive>,
    /// Hooke stiffness, N/m.
    pub stiffness: f64,
    /// Watertight mesh resting on y = 0.
    pub template: TriangleMesh,
}

impl ObjectSpec {
    /// Tessellates `shape` at roughly [`TEMPLATE_EDGE`] and lifts it onto the
    /// ground plane.
    pub fn from_primitive(name: &str, shape: Primitive, stiffness: f64) -> Result<Self> {
        let level = match shape {
            Primitive::Box { size } => (size.max() / TEMPLATE_EDGE).round() as usize,
            Primitive::Sphere { radius } => {
                // icosphere edge is about 1.05 r / 2^level
                (1.05 * radius / TEMPLATE_EDGE).log2().round().max(1.0) as usize
            }
            Primitive::Cylinder { radius, .. } => (2.0 * std::f64::consts::PI * radius / (12.0 * TEMPLATE_EDGE)).round() as usize,
        }
        .max(1);
        let mesh = make_primitive(&shape, level)?;
        let lift = -mesh.bounding_box().0.y;
        let mut template = mesh.translated(&Vec3::new(0.0, lift, 0.0));
        template.name = name.to_string();
        Self::new(name, Some(shape), stiffness, template)
    }

    pub fn new(name: &str, shape: Option<Primitive>, stiffness: f64, template: TriangleMesh) -> Result<Self> {
        if !(stiffness > 0.0 && stiffness.is_finite()) {
            return Err(SynthError::Invalid(format!("stiffness {stiffness}")));
        }
        template.check_watertight()?;
        Ok(Self { name: name.to_string(), shape, stiffness, template })
    }

    pub fn diagonal(&self) -> f64 {
        let (lo, hi) = self.template.bounding_box();
        (hi - lo).norm()
    }

    /// Half the template's extent along `dir`.
    pub fn half_extent(&self, dir: &Vec3) -> f64 {
        let (lo, hi) = self
            .template
            .vertices()
            .iter()
            .map(|v| v.dot(dir))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
        0.5 * (hi - lo)
    }
}

/// The six reference objects: foam and plush dice, a plush moon, a printed
/// cylinder, a sponge and a paper roll.
pub fn default_objects() -> Result<Vec<ObjectSpec>> {
    let b = |x, y, z| Primitive::Box { size: Vec3::new(x, y, z) };
    let table = [
        ("foam_dice", b(0.155, 0.155, 0.155), 748.0),
        ("plush_moon", Primitive::Sphere { radius: 0.085 }, 366.0),
        ("printed_cylinder", Primitive::Cylinder { radius: 0.05, height: 0.20 }, 585.0),
        ("sponge", b(0.22, 0.061, 0.12), 1045.0),
        ("paper_roll", Primitive::Cylinder { radius: 0.0525, height: 0.095 }, 2156.0),
        ("plush_dice", b(0.22, 0.22, 0.22), 149.0),
    ];
    table.into_iter().map(|(n, s, k)| ObjectSpec::from_primitive(n, s, k)).collect()
}

/// `n` objects: the defaults first, then seeded procedural variants with
/// log-uniform stiffness inside [`STIFFNESS_RANGE`].
pub fn object_catalog(n: usize, seed: u64) -> Result<Vec<ObjectSpec>> {
    let mut out = default_objects()?;
    out.truncate(n);
    let mut i = out.len();
    while out.len() < n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1000 + i as u64));
        let mut dim = || rng.gen_range(0.08..0.22);
        let shape = match i % 3 {
            0 => Primitive::Box { size: Vec3::new(dim(), dim(), dim()) },
            1 => Primitive::Sphere { radius: 0.5 * dim() },
            _ => Primitive::Cylinder { radius: 0.5 * dim(), height: dim() },
        };
        let (lo, hi) = (STIFFNESS_RANGE.0.ln(), STIFFNESS_RANGE.1.ln());
        let k = rng.gen_range(lo..hi).exp();
        out.push(ObjectSpec::from_primitive(&format!("object_{i:02}"), shape, k)?);
        i += 1;
    }
    Ok(out)
}

/// Generation parameters shared by both protocols.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub poke_fps: f64,
    pub drop_fps: f64,
    pub robot_rate: f64,
    pub poke_duration: f64,
    pub pokes_per_sequence: usize,
    /// Range of the commanded peak indentation, m.
    pub dent_depth: [f64; 2],
    pub drop_duration: f64,
    pub drop_height: f64,
    /// Force norm above which a frame counts as in contact, N.
    pub contact_threshold: f64,
    pub sequences_per_object: usize,
    pub sensor_clouds: bool,
    pub sensor_points: usize,
    /// Isotropic sensor noise, m.
    pub sensor_noise: f64,
    /// Direction from the object toward the sensor.
    pub sensor_view: [f64; 3],
    pub depth_images: bool,
    pub image_size: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            poke_fps: 30.0,
            drop_fps: 60.0,
            robot_rate: 120.0,
            poke_duration: 5.0,
            pokes_per_sequence: 3,
            dent_depth: [0.010, 0.020],
            drop_duration: 1.0,
            drop_height: 2.0,
            contact_threshold: 0.5,
            sequences_per_object: 4,
            sensor_clouds: true,
            sensor_points: 1000,
            sensor_noise: 0.003,
            sensor_view: [1.0, 0.8, 0.6],
            depth_images: true,
            image_size: 64,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [self.poke_fps, self.drop_fps, self.robot_rate, self.poke_duration, self.drop_duration, self.drop_height];
        if !pos.iter().all(|v| *v > 0.0 && v.is_finite()) {
            return Err(SynthError::Invalid("rates, durations and drop height must be positive".into()));
        }
        if !(0.0 < self.dent_depth[0] && self.dent_depth[0] <= self.dent_depth[1]) {
            return Err(SynthError::Invalid(format!("dent depth range {:?}", self.dent_depth)));
        }
        if self.pokes_per_sequence == 0 || self.sensor_points == 0 || self.image_size == 0 {
            return Err(SynthError::Invalid("pokes, sensor points and image size must be nonzero".into()));
        }
        if !(self.sensor_noise >= 0.0 && self.contact_threshold >= 0.0) {
            return Err(SynthError::Invalid("noise and contact threshold must be non-negative".into()));
        }
        Ok(())
    }

    pub fn view(&self) -> Vec3 {
        Vec3::from(self.sensor_view)
    }
}

/// One camera tick. Deformed meshes share the template's face list.
#[derive(Debug, Clone)]
pub struct FrameSample {
    pub index: usize,
    pub t: f64,
    pub mesh: TriangleMesh,
    pub cloud: Option<PointCloud>,
    pub depth: Option<DepthImage>,
    /// Paired robot reading (poking only).
    pub robot: Option<RobotFrame>,
    pub in_contact: bool,
}

#[derive(Debug, Clone)]
pub struct Sequence {
    pub object: String,
    pub protocol: Protocol,
    pub fps: f64,
    pub seed: u64,
    pub stiffness: f64,
    pub template: TriangleMesh,
    pub frames: Vec<FrameSample>,
    /// Raw robot log at its own rate; empty for drops.
    pub robot_stream: Vec<RobotFrame>,
}

impl Sequence {
    pub fn contact_ratio(&self) -> f64 {
        if self.frames.is_empty() {
            return 0.0;
        }
        self.frames.iter().filter(|f| f.in_contact).count() as f64 / self.frames.len() as f64
    }
}

/// Deterministic child seed (splitmix64 of the pair).
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `count` sequences of one object. Poke sequences get fresh random events.
pub fn gen_object_sequences(spec: &ObjectSpec, protocol: Protocol, count: usize, cfg: &SynthConfig, seed: u64) -> Result<Vec<Sequence>> {
    (0..count)
        .map(|s| {
            let seq_seed = derive_seed(seed, s as u64);
            match protocol {
                Protocol::Poke => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seq_seed);
                    let events = random_poke_events(spec, cfg, &mut rng)?;
                    gen_poke_sequence(spec, &events, cfg, seq_seed)
                }
                Protocol::Drop => gen_drop_sequence(spec, cfg.drop_height, cfg, seq_seed),
            }
        })
        .collect()
}

/// Every object of `objects` times `cfg.sequences_per_object`.
pub fn gen_corpus(objects: &[ObjectSpec], protocol: Protocol, cfg: &SynthConfig, seed: u64) -> Result<Vec<Sequence>> {
    cfg.validate()?;
    let mut out = Vec::new();
    for (i, spec) in objects.iter().enumerate() {
        out.extend(gen_object_sequences(spec, protocol, cfg.sequences_per_object, cfg, derive_seed(seed, i as u64))?);
    }
    Ok(out)
}
