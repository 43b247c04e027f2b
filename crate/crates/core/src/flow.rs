//! Conditional affine coupling flow acting pointwise on R^3.
//!
//! Every block leaves a subset of the coordinates untouched and maps the
//! rest to `x * exp(s) + t`, where `s` and `t` come from a small network fed
//! with the untouched coordinates and a conditioning embedding. The log-scale
//! is bounded by `s_max * tanh(s / s_max)`, so each block and the whole
//! stack are smooth bijections with an exact inverse. The same parameters
//! are shared by every vertex; the conditioning vector is one embedding per
//! frame.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::{TriangleMesh, Vec3};
use crate::nn::{Activation, Dense, Graph, NnError, ParamId, ParamStore, Tensor, Var};

pub type Result<T, E = NnError> = std::result::Result<T, E>;

/// Which coordinates pass through a block unchanged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskScheme {
    /// One coordinate fixed, two transformed; the fixed axis cycles x, y, z.
    OneFixed,
    /// Two coordinates fixed, one transformed; the transformed axis cycles
    /// x, y, z.
    TwoFixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowConfig {
    pub blocks: usize,
    pub hidden: usize,
    pub s_max: f64,
    pub cond_dim: usize,
    pub mask: MaskScheme,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { blocks: 6, hidden: 128, s_max: 3.0, cond_dim: 64, mask: MaskScheme::TwoFixed }
    }
}

#[derive(Debug, Clone)]
pub struct CouplingBlock {
    pub fixed: Vec<usize>,
    pub free: Vec<usize>,
    wx: ParamId,
    wc: ParamId,
    b: ParamId,
    head: Dense,
    s_max: f64,
    /// `perm[j]` is the column of `[fixed | free]` holding coordinate `j`.
    perm: [usize; 3],
}

impl CouplingBlock {
    fn new(store: &mut ParamStore, name: &str, fixed: Vec<usize>, cfg: &FlowConfig, rng: &mut impl Rng) -> Result<Self> {
        let free: Vec<usize> = (0..3).filter(|c| !fixed.contains(c)).collect();
        let fan_in = fixed.len() + cfg.cond_dim;
        let wx = store.add_uniform(&format!("{name}.wx"), &[fixed.len(), cfg.hidden], fan_in, rng)?;
        let wc = store.add_uniform(&format!("{name}.wc"), &[cfg.cond_dim, cfg.hidden], fan_in, rng)?;
        let b = store.add_uniform(&format!("{name}.b"), &[1, cfg.hidden], fan_in, rng)?;
        let head = Dense::zeros(store, &format!("{name}.head"), cfg.hidden, 2 * free.len(), Activation::None)?;
        let order: Vec<usize> = fixed.iter().chain(&free).copied().collect();
        let perm = std::array::from_fn(|j| order.iter().position(|&c| c == j).expect("permutation"));
        Ok(Self { fixed, free, wx, wc, b, head, s_max: cfg.s_max, perm })
    }

    pub fn head(&self) -> &Dense {
        &self.head
    }

    /// Bounded log-scale and translation for the free coordinates.
    fn scale_shift(&self, g: &mut Graph, store: &ParamStore, fixed: Var, cond: Var) -> Result<(Var, Var)> {
        let n = g.value(fixed).rows();
        let wx = g.param(store, self.wx);
        let wc = g.param(store, self.wc);
        let b = g.param(store, self.b);
        let c = g.matmul(cond, wc)?;
        let c = g.add(c, b)?;
        let h = g.matmul(fixed, wx)?;
        let h = g.add_row(h, c)?;
        let h = g.relu(h);
        let st = self.head.forward(g, store, h)?;
        let k = self.free.len();
        let raw_s = g.select_cols(st, &(0..k).collect::<Vec<_>>())?;
        let t = g.select_cols(st, &(k..2 * k).collect::<Vec<_>>())?;
        let s = g.scale(raw_s, 1.0 / self.s_max);
        let s = g.tanh(s);
        let s = g.scale(s, self.s_max);
        debug_assert_eq!(g.value(s).rows(), n);
        Ok((s, t))
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, cond: Var) -> Result<Var> {
        let fixed = g.select_cols(x, &self.fixed)?;
        let free = g.select_cols(x, &self.free)?;
        let (s, t) = self.scale_shift(g, store, fixed, cond)?;
        let e = g.exp(s);
        let y = g.mul(free, e)?;
        let y = g.add(y, t)?;
        let cat = g.concat_cols(&[fixed, y])?;
        g.select_cols(cat, &self.perm)
    }

    pub fn inverse(&self, g: &mut Graph, store: &ParamStore, y: Var, cond: Var) -> Result<Var> {
        let fixed = g.select_cols(y, &self.fixed)?;
        let free = g.select_cols(y, &self.free)?;
        let (s, t) = self.scale_shift(g, store, fixed, cond)?;
        let neg = g.scale(s, -1.0);
        let e = g.exp(neg);
        let x = g.sub(free, t)?;
        let x = g.mul(x, e)?;
        let cat = g.concat_cols(&[fixed, x])?;
        g.select_cols(cat, &self.perm)
    }
}

/// Stack of conditional coupling blocks. Parameters live in a
/// [`ParamStore`] under the `flow.` namespace.
#[derive(Debug, Clone)]
pub struct ConditionalRealNvp {
    pub config: FlowConfig,
    blocks: Vec<CouplingBlock>,
}

impl ConditionalRealNvp {
    pub fn new(store: &mut ParamStore, config: FlowConfig, rng: &mut impl Rng) -> Result<Self> {
        if config.blocks == 0 || config.hidden == 0 || config.cond_dim == 0 || !(config.s_max > 0.0) {
            return Err(NnError::Param(format!("invalid flow config {config:?}")));
        }
        let blocks = (0..config.blocks)
            .map(|i| {
                let axis = i % 3;
                let fixed = match config.mask {
                    MaskScheme::OneFixed => vec![axis],
                    MaskScheme::TwoFixed => (0..3).filter(|&c| c != axis).collect(),
                };
                CouplingBlock::new(store, &format!("flow.b{i}"), fixed, &config, rng)
            })
            .collect::<Result<_>>()?;
        Ok(Self { config, blocks })
    }

    pub fn blocks(&self) -> &[CouplingBlock] {
        &self.blocks
    }

    fn check_cond(&self, g: &Graph, cond: Var) -> Result<()> {
        let (r, c) = g.value(cond).dims2();
        if r != 1 || c != self.config.cond_dim {
            return Err(NnError::Shape(format!("conditioning {r}x{c}, flow expects 1x{}", self.config.cond_dim)));
        }
        Ok(())
    }

    /// Applies the blocks in order to the `[n, 3]` points `x`.
    pub fn forward_graph(&self, g: &mut Graph, store: &ParamStore, x: Var, cond: Var) -> Result<Var> {
        self.check_cond(g, cond)?;
        let mut h = x;
        for b in &self.blocks {
            h = b.forward(g, store, h, cond)?;
        }
        Ok(h)
    }

    pub fn inverse_graph(&self, g: &mut Graph, store: &ParamStore, y: Var, cond: Var) -> Result<Var> {
        self.check_cond(g, cond)?;
        let mut h = y;
        for b in self.blocks.iter().rev() {
            h = b.inverse(g, store, h, cond)?;
        }
        Ok(h)
    }

    fn run(&self, store: &ParamStore, pts: &[Vec3], cond: &[f64], inverse: bool) -> Result<Vec<Vec3>> {
        let mut g = Graph::new();
        let x = g.input(points_tensor(pts));
        let c = g.input(Tensor::row(cond.to_vec()));
        let y = if inverse { self.inverse_graph(&mut g, store, x, c)? } else { self.forward_graph(&mut g, store, x, c)? };
        let out = tensor_points(g.value(y));
        if let Some(i) = out.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(NnError::NonFinite(format!("flow output at point {i}")));
        }
        Ok(out)
    }

    pub fn forward(&self, store: &ParamStore, pts: &[Vec3], cond: &[f64]) -> Result<Vec<Vec3>> {
        self.run(store, pts, cond, false)
    }

    pub fn inverse(&self, store: &ParamStore, pts: &[Vec3], cond: &[f64]) -> Result<Vec<Vec3>> {
        self.run(store, pts, cond, true)
    }

    /// Template with flowed vertices; the face list is shared, not copied.
    pub fn deform_template(&self, store: &ParamStore, template: &TriangleMesh, cond: &[f64]) -> Result<TriangleMesh> {
        let v = self.forward(store, template.vertices(), cond)?;
        template.with_vertices(v).map_err(|e| NnError::NonFinite(e.to_string()))
    }
}

pub fn points_tensor(pts: &[Vec3]) -> Tensor {
    Tensor::matrix(pts.len(), 3, pts.iter().flat_map(|p| [p.x, p.y, p.z]).collect()).expect("n x 3")
}

pub fn tensor_points(t: &Tensor) -> Vec<Vec3> {
    t.data().chunks(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect()
}
