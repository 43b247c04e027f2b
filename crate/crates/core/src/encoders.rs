//! Modality encoders and history fusion.
//!
//! Each encoder maps one observation to a `1 x dim` row on a [`Graph`]:
//! point clouds through a shared per-point network with max pooling, depth
//! images through patch embeddings and a 1-D convolution reduction block,
//! robot readings through a single dense layer. A history of such rows is
//! fused by self-attention (one modality) or cross-attention (two).

use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::Vec3;
use crate::nn::{Activation, AttentionBlock, Conv1d, Dense, Graph, NnError, ParamId, ParamStore, Tensor, Var};

pub type Result<T, E = NnError> = std::result::Result<T, E>;

/// One robot reading: end-effector pose, contact point and wrench.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotFrame {
    pub t: f64,
    pub position: Vec3,
    /// Unit quaternion `(w, x, y, z)`.
    pub orientation: [f64; 4],
    pub contact: Vec3,
    pub force: Vec3,
    pub torque: Vec3,
}

impl RobotFrame {
    pub fn at_rest(t: f64) -> Self {
        Self {
            t,
            position: Vec3::zeros(),
            orientation: [1.0, 0.0, 0.0, 0.0],
            contact: Vec3::zeros(),
            force: Vec3::zeros(),
            torque: Vec3::zeros(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let qn = self.orientation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (qn - 1.0).abs() > 1e-6 {
            return Err(NnError::Param(format!("orientation quaternion has norm {qn}")));
        }
        let finite = self.t.is_finite()
            && [self.position, self.contact, self.force, self.torque].iter().all(|v| v.iter().all(|c| c.is_finite()));
        if !finite {
            return Err(NnError::NonFinite(format!("robot frame at t={}", self.t)));
        }
        Ok(())
    }

    /// CSV column order used on disk.
    pub const CSV_HEADER: &'static str = "t,px,py,pz,qw,qx,qy,qz,cx,cy,cz,fx,fy,fz,tx,ty,tz";

    pub fn to_csv_row(&self) -> String {
        let [qw, qx, qy, qz] = self.orientation;
        let v = [
            self.t,
            self.position.x,
            self.position.y,
            self.position.z,
            qw,
            qx,
            qy,
            qz,
            self.contact.x,
            self.contact.y,
            self.contact.z,
            self.force.x,
            self.force.y,
            self.force.z,
            self.torque.x,
            self.torque.y,
            self.torque.z,
        ];
        v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
    }

    pub fn from_csv_row(line: &str) -> Option<Self> {
        let v: Vec<f64> = line.split(',').map(|s| s.trim().parse().ok()).collect::<Option<_>>()?;
        if v.len() != 17 {
            return None;
        }
        Some(Self {
            t: v[0],
            position: Vec3::new(v[1], v[2], v[3]),
            orientation: [v[4], v[5], v[6], v[7]],
            contact: Vec3::new(v[8], v[9], v[10]),
            force: Vec3::new(v[11], v[12], v[13]),
            torque: Vec3::new(v[14], v[15], v[16]),
        })
    }
}

/// Depth map in meters, row-major. Background pixels hold
/// [`DepthImage::BACKGROUND`].
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub depth: Vec<f64>,
}

impl DepthImage {
    pub const BACKGROUND: f64 = f64::INFINITY;
    /// Depths at or beyond this are background, whatever their encoding.
    pub const FAR_LIMIT: f64 = 65.0;

    pub fn new(width: usize, height: usize, depth: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 || depth.len() != width * height {
            return Err(NnError::Shape(format!("{width}x{height} image with {} pixels", depth.len())));
        }
        if depth.iter().any(|d| d.is_nan() || *d < 0.0) {
            return Err(NnError::Param("depth values must be non-negative".into()));
        }
        Ok(Self { width, height, depth })
    }

    pub fn background(width: usize, height: usize) -> Self {
        Self { width, height, depth: vec![Self::BACKGROUND; width * height] }
    }

    pub fn is_background(d: f64) -> bool {
        !(d < Self::FAR_LIMIT)
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.depth.iter().filter(|d| !Self::is_background(**d)).count()
    }
}

/// Fixed-capacity window, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryBuffer<T> {
    items: VecDeque<T>,
    capacity: usize,
}

/// History length used throughout.
pub const HISTORY_LEN: usize = 5;

impl<T: Clone> HistoryBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "history capacity must be positive");
        Self { items: VecDeque::with_capacity(capacity), capacity }
    }

    /// Appends `item`, evicting the oldest entry when full.
    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub fn latest(&self) -> Option<&T> {
        self.items.back()
    }

    /// Contents front-padded with copies of the oldest entry to capacity.
    pub fn padded(&self) -> Vec<T> {
        let Some(first) = self.items.front() else { return vec![] };
        let mut v = vec![first.clone(); self.capacity - self.items.len()];
        v.extend(self.items.iter().cloned());
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub dim: usize,
    pub point_hidden: [usize; 2],
    pub image_size: usize,
    pub patch: usize,
    pub conv_channels: usize,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    /// Forces are multiplied by this before the robot layer (1/N).
    pub force_scale: f64,
    /// Foreground depth `d` enters the image encoder as `1 - d / depth_range`.
    pub depth_range: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            point_hidden: [32, 64],
            image_size: 64,
            patch: 8,
            conv_channels: 4,
            conv_kernel: 8,
            conv_stride: 4,
            force_scale: 0.1,
            depth_range: 1.0,
        }
    }
}

/// Shared per-point ReLU network, max over points, linear head.
#[derive(Debug, Clone)]
pub struct PointEncoder {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
    b2: ParamId,
    head: Dense,
}

impl PointEncoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        let [h1, h2] = cfg.point_hidden;
        let l1 = Dense::new(store, &format!("{name}.l1"), 3, h1, Activation::Relu, rng)?;
        let l2 = Dense::new(store, &format!("{name}.l2"), h1, h2, Activation::Relu, rng)?;
        let head = Dense::new(store, &format!("{name}.head"), h2, cfg.dim, Activation::None, rng)?;
        Ok(Self { w1: l1.w, b1: l1.b, w2: l2.w, b2: l2.b, head })
    }

    /// `points` is an `[n, 3]` tensor in normalized coordinates.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, points: Var) -> Result<Var> {
        let (n, d) = g.value(points).dims2();
        if n == 0 || d != 3 {
            return Err(NnError::Shape(format!("point cloud must be n x 3 with n >= 1, got {n}x{d}")));
        }
        let (w1, b1, w2, b2) = (g.param(store, self.w1), g.param(store, self.b1), g.param(store, self.w2), g.param(store, self.b2));
        let pooled = g.point_mlp_max(points, w1, b1, w2, b2)?;
        self.head.forward(g, store, pooled)
    }

    pub fn encode_points(&self, g: &mut Graph, store: &ParamStore, pts: &[Vec3]) -> Result<Var> {
        if pts.is_empty() {
            return Err(NnError::Shape("empty point cloud".into()));
        }
        let x = g.input(crate::flow::points_tensor(pts));
        self.encode(g, store, x)
    }
}

/// Patch embedding with a zero-initialized positional term, ReLU, mean
/// pool, then a conv1d + dense reduction block.
#[derive(Debug, Clone)]
pub struct ImageEncoder {
    patch_embed: Dense,
    pos: ParamId,
    conv: Conv1d,
    head: Dense,
    cfg: EncoderConfig,
}

impl ImageEncoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        if cfg.patch == 0 || cfg.image_size % cfg.patch != 0 {
            return Err(NnError::Shape(format!("image size {} not divisible by patch {}", cfg.image_size, cfg.patch)));
        }
        let grid = cfg.image_size / cfg.patch;
        let pd = cfg.patch * cfg.patch;
        let patch_embed = Dense::new(store, &format!("{name}.patch"), pd, cfg.dim, Activation::None, rng)?;
        let pos = store.add_zeros(&format!("{name}.pos"), &[grid * grid, cfg.dim])?;
        let conv = Conv1d::new(store, &format!("{name}.conv"), 1, cfg.conv_channels, cfg.conv_kernel, cfg.conv_stride, rng)?;
        let lout = conv.output_len(store, cfg.dim);
        let head = Dense::new(store, &format!("{name}.head"), cfg.conv_channels * lout, cfg.dim, Activation::None, rng)?;
        Ok(Self { patch_embed, pos, conv, head, cfg: *cfg })
    }

    /// Background pixels become 0, foreground `1 - d / depth_range`.
    pub fn preprocess(&self, img: &DepthImage) -> Vec<f64> {
        img.depth
            .iter()
            .map(|&d| if DepthImage::is_background(d) { 0.0 } else { 1.0 - d / self.cfg.depth_range })
            .collect()
    }

    /// `[patches, patch * patch]` matrix of the preprocessed image.
    pub fn patches(&self, img: &DepthImage) -> Result<Tensor> {
        let (s, p) = (self.cfg.image_size, self.cfg.patch);
        if img.width != s || img.height != s {
            return Err(NnError::Shape(format!("image is {}x{}, encoder expects {s}x{s}", img.width, img.height)));
        }
        let px = self.preprocess(img);
        let grid = s / p;
        let mut data = Vec::with_capacity(s * s);
        for gy in 0..grid {
            for gx in 0..grid {
                for y in 0..p {
                    let row = (gy * p + y) * s + gx * p;
                    data.extend_from_slice(&px[row..row + p]);
                }
            }
        }
        Tensor::matrix(grid * grid, p * p, data)
    }

    pub fn patch_embeddings(&self, g: &mut Graph, store: &ParamStore, img: &DepthImage) -> Result<Var> {
        let x = g.input(self.patches(img)?);
        let e = self.patch_embed.forward(g, store, x)?;
        let pos = g.param(store, self.pos);
        let e = g.add(e, pos)?;
        Ok(g.relu(e))
    }

    pub fn encode(&self, g: &mut Graph, store: &ParamStore, img: &DepthImage) -> Result<Var> {
        let e = self.patch_embeddings(g, store, img)?;
        let pooled = g.mean_rows(e);
        let c = self.conv.forward(g, store, pooled)?;
        let c = g.relu(c);
        let n = g.value(c).len();
        let flat = g.reshape(c, &[1, n])?;
        self.head.forward(g, store, flat)
    }
}

/// `concat(force * force_scale, contact)` through one linear layer.
#[derive(Debug, Clone)]
pub struct RobotEncoder {
    layer: Dense,
    force_scale: f64,
}

impl RobotEncoder {
    pub fn new(store: &mut ParamStore, name: &str, cfg: &EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        let layer = Dense::new(store, &format!("{name}.fc"), 6, cfg.dim, Activation::None, rng)?;
        Ok(Self { layer, force_scale: cfg.force_scale })
    }

    pub fn layer(&self) -> &Dense {
        &self.layer
    }

    /// `contact` is expected in the same frame as the point inputs.
    pub fn encode(&self, g: &mut Graph, store: &ParamStore, force: &Vec3, contact: &Vec3) -> Result<Var> {
        if !force.iter().chain(contact.iter()).all(|v| v.is_finite()) {
            return Err(NnError::NonFinite("robot input".into()));
        }
        let f = force * self.force_scale;
        let x = g.input(Tensor::row(vec![f.x, f.y, f.z, contact.x, contact.y, contact.z]));
        self.layer.forward(g, store, x)
    }
}

/// Attention fusion of embedding histories.
#[derive(Debug, Clone)]
pub struct Fusion {
    pub self_attn: AttentionBlock,
    pub cross_attn: AttentionBlock,
    dim: usize,
}

impl Fusion {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let self_attn = AttentionBlock::new(store, &format!("{name}.self"), dim, rng)?;
        let cross_attn = AttentionBlock::new(store, &format!("{name}.cross"), dim, rng)?;
        Ok(Self { self_attn, cross_attn, dim })
    }

    fn stack(&self, g: &mut Graph, entries: &[Var]) -> Result<Var> {
        if entries.is_empty() {
            return Err(NnError::Shape("empty history buffer".into()));
        }
        if let Some(e) = entries.iter().find(|&&e| g.value(e).dims2() != (1, self.dim)) {
            return Err(NnError::Shape(format!("embedding {:?}, fusion width {}", g.value(*e).dims2(), self.dim)));
        }
        g.concat_rows(entries)
    }

    /// Self-attention over the buffer, read out at the most recent entry.
    pub fn fuse_history(&self, g: &mut Graph, store: &ParamStore, entries: &[Var]) -> Result<Var> {
        let seq = self.stack(g, entries)?;
        let last = entries[entries.len() - 1];
        self.self_attn.forward(g, store, last, seq)
    }

    /// Queries from `a`, keys and values from `b`, read out at the most
    /// recent query.
    pub fn cross_fuse(&self, g: &mut Graph, store: &ParamStore, a: &[Var], b: &[Var]) -> Result<Var> {
        self.stack(g, a)?;
        let kv = self.stack(g, b)?;
        let last = a[a.len() - 1];
        self.cross_attn.forward(g, store, last, kv)
    }
}
