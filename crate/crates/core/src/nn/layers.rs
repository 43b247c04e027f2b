use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::{NnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    None,
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, g: &mut Graph, x: Var) -> Var {
        match self {
            Activation::None => x,
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
        }
    }
}

/// `y = act(x W + b)` with `W: [inputs, outputs]`.
#[derive(Debug, Clone, Copy)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub inputs: usize,
    pub outputs: usize,
    pub act: Activation,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        inputs: usize,
        outputs: usize,
        act: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let w = store.add_uniform(&format!("{name}.w"), &[inputs, outputs], inputs, rng)?;
        let b = store.add_uniform(&format!("{name}.b"), &[1, outputs], inputs, rng)?;
        Ok(Self { w, b, inputs, outputs, act })
    }

    /// Same layout with all weights and biases zero.
    pub fn zeros(store: &mut ParamStore, name: &str, inputs: usize, outputs: usize, act: Activation) -> Result<Self> {
        let w = store.add_zeros(&format!("{name}.w"), &[inputs, outputs])?;
        let b = store.add_zeros(&format!("{name}.b"), &[1, outputs])?;
        Ok(Self { w, b, inputs, outputs, act })
    }

    /// Looks up an existing layer by name.
    pub fn find(store: &ParamStore, name: &str, act: Activation) -> Result<Self> {
        let w = store.id(&format!("{name}.w")).ok_or_else(|| NnError::Param(format!("missing {name}.w")))?;
        let b = store.id(&format!("{name}.b")).ok_or_else(|| NnError::Param(format!("missing {name}.b")))?;
        let (inputs, outputs) = store.value(w).dims2();
        Ok(Self { w, b, inputs, outputs, act })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let z = g.matmul(x, w)?;
        let z = g.add_row(z, b)?;
        Ok(self.act.apply(g, z))
    }
}

/// Free-function form of a dense layer.
pub fn dense_forward(g: &mut Graph, x: Var, w: Var, b: Var, act: Activation) -> Result<Var> {
    let z = g.matmul(x, w)?;
    let z = g.add_row(z, b)?;
    Ok(act.apply(g, z))
}

/// Valid-mode 1-D convolution layer, weights `[out, channels, k]`.
#[derive(Debug, Clone, Copy)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
}

impl Conv1d {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        out: usize,
        k: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let fan_in = channels * k;
        let w = store.add_uniform(&format!("{name}.w"), &[out, channels, k], fan_in, rng)?;
        let b = store.add_uniform(&format!("{name}.b"), &[1, out], fan_in, rng)?;
        Ok(Self { w, b, stride })
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Result<Var> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        g.conv1d(x, w, b, self.stride)
    }

    pub fn output_len(&self, store: &ParamStore, len: usize) -> usize {
        let k = store.value(self.w).shape()[2];
        (len - k) / self.stride + 1
    }
}

/// Scaled dot-product attention `softmax(Q K^T / sqrt(d)) V`.
pub fn attention(g: &mut Graph, q: Var, k: Var, v: Var) -> Result<Var> {
    let (_, dq) = g.value(q).dims2();
    let (nk, dk) = g.value(k).dims2();
    let nv = g.value(v).rows();
    if dq != dk {
        return Err(NnError::Shape(format!("query width {dq} vs key width {dk}")));
    }
    if nk != nv {
        return Err(NnError::Shape(format!("{nk} keys vs {nv} values")));
    }
    let scores = g.matmul_t(q, k, false, true)?;
    let scores = g.scale(scores, 1.0 / (dq as f64).sqrt());
    let w = g.softmax_rows(scores);
    g.matmul(w, v)
}

/// Single-head attention block with query/key/value projections.
#[derive(Debug, Clone, Copy)]
pub struct AttentionBlock {
    pub wq: ParamId,
    pub wk: ParamId,
    pub wv: ParamId,
    pub dim: usize,
}

impl AttentionBlock {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let wq = store.add_uniform(&format!("{name}.wq"), &[dim, dim], dim, rng)?;
        let wk = store.add_uniform(&format!("{name}.wk"), &[dim, dim], dim, rng)?;
        let wv = store.add_uniform(&format!("{name}.wv"), &[dim, dim], dim, rng)?;
        Ok(Self { wq, wk, wv, dim })
    }

    /// Attention output for the queries of `queries` over `context`
    /// (self-attention when both are the same sequence).
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, queries: Var, context: Var) -> Result<Var> {
        let wq = g.param(store, self.wq);
        let wk = g.param(store, self.wk);
        let wv = g.param(store, self.wv);
        let q = g.matmul(queries, wq)?;
        let k = g.matmul(context, wk)?;
        let v = g.matmul(context, wv)?;
        attention(g, q, k, v)
    }
}
