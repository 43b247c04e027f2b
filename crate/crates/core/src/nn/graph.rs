//! Reverse-mode tape. Nodes are appended in evaluation order, so the node
//! list is already topologically sorted and the backward pass is a single
//! sweep from the output to the leaves.

use super::params::{Grads, ParamId, ParamStore};
use super::tensor::{gemm, matmul, MatView, Tensor};
use super::{NnError, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    AddRow { x: Var, b: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    SelectCols { x: Var, cols: Vec<usize> },
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize },
    ConcatRows(Vec<Var>),
    RepeatRows(Var),
    MaxRows { x: Var, argmax: Vec<usize> },
    MeanRows(Var),
    SoftmaxRows(Var),
    Sum(Var),
    Reshape(Var),
    Conv1d { x: Var, w: Var, b: Var, stride: usize, k: usize, cols: Tensor },
    PointMlpMax { x: Var, w1: Var, b1: Var, w2: Var, b2: Var, argmax: Vec<usize> },
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

/// Gradients of one backward sweep, indexed by node.
pub struct Backward {
    grads: Vec<Option<Tensor>>,
}

impl Backward {
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads[v.0].as_ref()
    }
}

fn shape_err<T>(msg: String) -> Result<T> {
    Err(NnError::Shape(msg))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = match op {
            Op::Param(_) => true,
            Op::Leaf => false,
            _ => inputs.iter().any(|&v| self.needs(v)),
        };
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Constant input; no gradient flows into it.
    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, &[])
    }

    /// Input that still records a gradient (used by checks on input
    /// sensitivity).
    pub fn input_with_grad(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node { value: t, op: Op::Leaf, needs_grad: true });
        Var(self.nodes.len() - 1)
    }

    /// Trainable parameter. Repeated calls with the same id share one node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(Some(v)) = self.param_vars.get(id.index()) {
            return *v;
        }
        let v = self.push(store.value(id).clone(), Op::Param(id), &[]);
        if self.param_vars.len() <= id.index() {
            self.param_vars.resize(id.index() + 1, None);
        }
        self.param_vars[id.index()] = Some(v);
        v
    }

    /// `op(a) * op(b)` where `op` optionally transposes the matrix view.
    pub fn matmul_t(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var> {
        let va = MatView::of(self.value(a)).maybe_t(ta);
        let vb = MatView::of(self.value(b)).maybe_t(tb);
        if va.cols != vb.rows {
            return shape_err(format!("matmul {}x{} by {}x{}", va.rows, va.cols, vb.rows, vb.cols));
        }
        let (r, c) = (va.rows, vb.cols);
        let out = Tensor::matrix(r, c, matmul(va, vb))?;
        Ok(self.push(out, Op::MatMul { a, b, ta, tb }, &[a, b]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_t(a, b, false, false)
    }

    /// Adds the single row `b` to every row of `x`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (xr, xc) = self.value(x).dims2();
        let (br, bc) = self.value(b).dims2();
        if br != 1 || bc != xc {
            return shape_err(format!("add_row {xr}x{xc} with {br}x{bc}"));
        }
        let bv = self.value(b).data().to_vec();
        let mut out = Tensor::zeros(&[xr, xc]);
        for (o, xrow) in out.data_mut().chunks_mut(xc).zip(self.value(x).data().chunks(xc)) {
            for ((o, a), b) in o.iter_mut().zip(xrow).zip(&bv) {
                *o = a + b;
            }
        }
        Ok(self.push(out, Op::AddRow { x, b }, &[x, b]))
    }

    fn same_dims(&self, a: Var, b: Var, what: &str) -> Result<()> {
        let (da, db) = (self.value(a).dims2(), self.value(b).dims2());
        if da != db {
            return shape_err(format!("{what}: {da:?} vs {db:?}"));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (r, c) = self.value(a).dims2();
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::matrix(r, c, data).expect("same size")
    }

    fn unary(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let (r, c) = self.value(a).dims2();
        Tensor::matrix(r, c, self.value(a).data().iter().map(|&x| f(x)).collect()).expect("same size")
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims(a, b, "add")?;
        let out = self.zip_with(a, b, |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims(a, b, "sub")?;
        let out = self.zip_with(a, b, |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_dims(a, b, "mul")?;
        let out = self.zip_with(a, b, |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.unary(a, |x| x * s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.unary(a, |x| x.max(0.0));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.unary(a, f64::tanh);
        self.push(out, Op::Tanh(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.unary(a, f64::exp);
        self.push(out, Op::Exp(a), &[a])
    }

    /// Columns `cols` of `x`, in the given order (repeats allowed).
    pub fn select_cols(&mut self, x: Var, cols: &[usize]) -> Result<Var> {
        let (r, c) = self.value(x).dims2();
        if let Some(&bad) = cols.iter().find(|&&j| j >= c) {
            return shape_err(format!("column {bad} out of range for {c} columns"));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(r * cols.len());
        for i in 0..r {
            data.extend(cols.iter().map(|&j| src[i * c + j]));
        }
        let out = Tensor::matrix(r, cols.len(), data)?;
        Ok(self.push(out, Op::SelectCols { x, cols: cols.to_vec() }, &[x]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let r = self.value(parts[0]).rows();
        if parts.iter().any(|&p| self.value(p).rows() != r) {
            return shape_err("concat_cols row mismatch".into());
        }
        let total: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let out = Tensor::matrix(r, total, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(x).dims2();
        if start + len > r || len == 0 {
            return shape_err(format!("rows {start}..{} of {r}", start + len));
        }
        let out = Tensor::matrix(len, c, self.value(x).data()[start * c..(start + len) * c].to_vec())?;
        Ok(self.push(out, Op::SliceRows { x, start }, &[x]))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let c = self.value(parts[0]).cols();
        if parts.iter().any(|&p| self.value(p).cols() != c) {
            return shape_err("concat_rows column mismatch".into());
        }
        let mut data = Vec::new();
        for &p in parts {
            data.extend_from_slice(self.value(p).data());
        }
        let r = data.len() / c.max(1);
        let out = Tensor::matrix(r, c, data)?;
        Ok(self.push(out, Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Stacks `n` copies of the single row `x`.
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let (r, c) = self.value(x).dims2();
        if r != 1 {
            return shape_err(format!("repeat_rows expects one row, got {r}"));
        }
        let out = Tensor::matrix(n, c, self.value(x).data().repeat(n))?;
        Ok(self.push(out, Op::RepeatRows(x), &[x]))
    }

    /// Column-wise maximum over rows; ties go to the first row.
    pub fn max_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.value(x).dims2();
        let d = self.value(x).data();
        let mut best = d[..c].to_vec();
        let mut argmax = vec![0; c];
        for i in 1..r {
            for j in 0..c {
                if d[i * c + j] > best[j] {
                    best[j] = d[i * c + j];
                    argmax[j] = i;
                }
            }
        }
        let out = Tensor::row(best);
        self.push(out, Op::MaxRows { x, argmax }, &[x])
    }

    pub fn mean_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.value(x).dims2();
        let mut m = vec![0.0; c];
        for row in self.value(x).data().chunks(c) {
            for (a, b) in m.iter_mut().zip(row) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|v| *v /= r as f64);
        self.push(Tensor::row(m), Op::MeanRows(x), &[x])
    }

    /// Row-wise softmax with the row maximum subtracted first.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let (r, c) = self.value(x).dims2();
        let mut out = vec![0.0; r * c];
        for (o, row) in out.chunks_mut(c).zip(self.value(x).data().chunks(c)) {
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut s = 0.0;
            for (o, v) in o.iter_mut().zip(row) {
                *o = (v - mx).exp();
                s += *o;
            }
            o.iter_mut().for_each(|v| *v /= s);
        }
        let out = Tensor::matrix(r, c, out).expect("size");
        self.push(out, Op::SoftmaxRows(x), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape.to_vec())?;
        Ok(self.push(t, Op::Reshape(x), &[x]))
    }

    /// Valid-mode 1-D convolution. `x` is `[channels, length]` (a single row
    /// is one channel), `w` is `[out, channels, k]`, `b` has `out` entries.
    /// Output is `[out, (length - k) / stride + 1]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (ch, len) = self.value(x).dims2();
        let ws = self.value(w).shape().to_vec();
        if ws.len() != 3 || ws[1] != ch {
            return shape_err(format!("conv1d weights {ws:?} for {ch} input channels"));
        }
        let (o, k) = (ws[0], ws[2]);
        if k > len || k == 0 || stride == 0 {
            return shape_err(format!("conv1d kernel {k} stride {stride} on length {len}"));
        }
        if self.value(b).len() != o {
            return shape_err(format!("conv1d bias has {} entries, need {o}", self.value(b).len()));
        }
        let lout = (len - k) / stride + 1;
        let xd = self.value(x).data();
        let mut cols = vec![0.0; ch * k * lout];
        for c in 0..ch {
            for kk in 0..k {
                let row = &mut cols[(c * k + kk) * lout..(c * k + kk + 1) * lout];
                for (j, v) in row.iter_mut().enumerate() {
                    *v = xd[c * len + j * stride + kk];
                }
            }
        }
        let cols = Tensor::matrix(ch * k, lout, cols)?;
        let mut out = matmul(MatView::raw(self.value(w).data(), o, ch * k), MatView::of(&cols));
        let bd = self.value(b).data();
        for (row, bias) in out.chunks_mut(lout).zip(bd) {
            row.iter_mut().for_each(|v| *v += bias);
        }
        let out = Tensor::matrix(o, lout, out)?;
        Ok(self.push(out, Op::Conv1d { x, w, b, stride, k, cols }, &[x, w, b]))
    }

    /// Shared two-layer ReLU network applied to every row of `x`, followed by
    /// a column-wise max over rows. Only the winning rows are revisited in the
    /// backward pass.
    pub fn point_mlp_max(&mut self, x: Var, w1: Var, b1: Var, w2: Var, b2: Var) -> Result<Var> {
        let (n, d) = self.value(x).dims2();
        let (w1r, h1) = self.value(w1).dims2();
        let (w2r, h2) = self.value(w2).dims2();
        if n == 0 || w1r != d || w2r != h1 || self.value(b1).len() != h1 || self.value(b2).len() != h2 {
            return shape_err(format!("point_mlp_max: x {n}x{d}, w1 {w1r}x{h1}, w2 {w2r}x{h2}"));
        }
        let (best, argmax) = {
            let (z1, z2) = mlp_rows(
                self.value(x).data(),
                n,
                self.value(w1),
                self.value(b1),
                self.value(w2),
                self.value(b2),
            );
            drop(z1);
            let mut best = vec![0.0; h2];
            let mut argmax = vec![0; h2];
            for j in 0..h2 {
                best[j] = z2[j].max(0.0);
            }
            for i in 1..n {
                let row = &z2[i * h2..(i + 1) * h2];
                for j in 0..h2 {
                    let v = row[j].max(0.0);
                    if v > best[j] {
                        best[j] = v;
                        argmax[j] = i;
                    }
                }
            }
            (best, argmax)
        };
        Ok(self.push(Tensor::row(best), Op::PointMlpMax { x, w1, b1, w2, b2, argmax }, &[x, w1, b1, w2, b2]))
    }

    /// Reverse sweep from `out`. Without a seed `out` must be a scalar and is
    /// seeded with 1.
    pub fn backward(&self, out: Var, seed: Option<Tensor>) -> Result<Backward> {
        let seed = match seed {
            Some(s) => {
                if s.len() != self.value(out).len() {
                    return shape_err("backward seed size".into());
                }
                let (r, c) = self.value(out).dims2();
                Tensor::matrix(r, c, s.into_data())?
            }
            None => {
                if self.value(out).len() != 1 {
                    return shape_err("backward without a seed needs a scalar output".into());
                }
                Tensor::scalar(1.0)
            }
        };
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[out.0] = Some(seed);
        for i in (0..=out.0).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Backward { grads })
    }

    /// Adds the parameter gradients of `bw` into `acc`.
    pub fn accumulate(&self, bw: &Backward, acc: &mut Grads) {
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &bw.grads[i]) {
                acc.add(*id, g);
            }
        }
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Tensor>], v: Var) -> &'g mut Tensor {
        let (r, c) = self.value(v).dims2();
        grads[v.0].get_or_insert_with(|| Tensor::zeros(&[r, c]))
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul { a, b, ta, tb } => {
                let (ta, tb) = (*ta, *tb);
                let va = MatView::of(self.value(*a));
                let vb = MatView::of(self.value(*b));
                let (gr, gc) = g.dims2();
                let gv = MatView::raw(gd, gr, gc);
                let opa = va.maybe_t(ta);
                let opb = vb.maybe_t(tb);
                if self.needs(*a) {
                    let da = self.acc(grads, *a);
                    if ta {
                        gemm(opb, gv.t(), da.data_mut(), 1.0);
                    } else {
                        gemm(gv, opb.t(), da.data_mut(), 1.0);
                    }
                }
                if self.needs(*b) {
                    let db = self.acc(grads, *b);
                    if tb {
                        gemm(gv.t(), opa, db.data_mut(), 1.0);
                    } else {
                        gemm(opa.t(), gv, db.data_mut(), 1.0);
                    }
                }
            }
            Op::AddRow { x, b } => {
                if self.needs(*x) {
                    self.acc(grads, *x).add_assign(g);
                }
                if self.needs(*b) {
                    let c = g.cols();
                    let db = self.acc(grads, *b).data_mut();
                    for row in gd.chunks(c) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if self.needs(v) {
                        self.acc(grads, v).add_assign(g);
                    }
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    self.acc(grads, *a).add_assign(g);
                }
                if self.needs(*b) {
                    let db = self.acc(grads, *b).data_mut();
                    for (d, v) in db.iter_mut().zip(gd) {
                        *d -= v;
                    }
                }
            }
            Op::Mul(a, b) => {
                for (v, other) in [(*a, *b), (*b, *a)] {
                    if self.needs(v) {
                        let od = self.value(other).data();
                        let dv = self.acc(grads, v).data_mut();
                        for ((d, gv), o) in dv.iter_mut().zip(gd).zip(od) {
                            *d += gv * o;
                        }
                    }
                }
            }
            Op::Scale(a, s) => {
                let da = self.acc(grads, *a).data_mut();
                for (d, v) in da.iter_mut().zip(gd) {
                    *d += s * v;
                }
            }
            Op::Relu(a) => {
                let y = node.value.data();
                let da = self.acc(grads, *a).data_mut();
                for ((d, v), y) in da.iter_mut().zip(gd).zip(y) {
                    if *y > 0.0 {
                        *d += v;
                    }
                }
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                let da = self.acc(grads, *a).data_mut();
                for ((d, v), y) in da.iter_mut().zip(gd).zip(y) {
                    *d += v * (1.0 - y * y);
                }
            }
            Op::Exp(a) => {
                let y = node.value.data();
                let da = self.acc(grads, *a).data_mut();
                for ((d, v), y) in da.iter_mut().zip(gd).zip(y) {
                    *d += v * y;
                }
            }
            Op::SelectCols { x, cols } => {
                let c = self.value(*x).cols();
                let k = cols.len();
                let dx = self.acc(grads, *x).data_mut();
                for (r, row) in gd.chunks(k).enumerate() {
                    for (v, &j) in row.iter().zip(cols) {
                        dx[r * c + j] += v;
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = g.cols();
                let mut off = 0;
                for &p in parts {
                    let pc = self.value(p).cols();
                    if self.needs(p) {
                        let dp = self.acc(grads, p).data_mut();
                        for (r, row) in gd.chunks(total).enumerate() {
                            for (d, v) in dp[r * pc..(r + 1) * pc].iter_mut().zip(&row[off..off + pc]) {
                                *d += v;
                            }
                        }
                    }
                    off += pc;
                }
            }
            Op::SliceRows { x, start } => {
                let c = g.cols();
                let dx = self.acc(grads, *x).data_mut();
                for (d, v) in dx[start * c..start * c + gd.len()].iter_mut().zip(gd) {
                    *d += v;
                }
            }
            Op::ConcatRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    if self.needs(p) {
                        let dp = self.acc(grads, p).data_mut();
                        for (d, v) in dp.iter_mut().zip(&gd[off..off + n]) {
                            *d += v;
                        }
                    }
                    off += n;
                }
            }
            Op::RepeatRows(x) => {
                let c = g.cols();
                let dx = self.acc(grads, *x).data_mut();
                for row in gd.chunks(c) {
                    for (d, v) in dx.iter_mut().zip(row) {
                        *d += v;
                    }
                }
            }
            Op::MaxRows { x, argmax } => {
                let c = argmax.len();
                let dx = self.acc(grads, *x).data_mut();
                for (j, &r) in argmax.iter().enumerate() {
                    dx[r * c + j] += gd[j];
                }
            }
            Op::MeanRows(x) => {
                let (r, c) = self.value(*x).dims2();
                let dx = self.acc(grads, *x).data_mut();
                for row in dx.chunks_mut(c) {
                    for (d, v) in row.iter_mut().zip(gd) {
                        *d += v / r as f64;
                    }
                }
            }
            Op::SoftmaxRows(x) => {
                let c = g.cols();
                let y = node.value.data();
                let dx = self.acc(grads, *x).data_mut();
                for ((drow, grow), yrow) in dx.chunks_mut(c).zip(gd.chunks(c)).zip(y.chunks(c)) {
                    let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                    for ((d, gv), yv) in drow.iter_mut().zip(grow).zip(yrow) {
                        *d += yv * (gv - dot);
                    }
                }
            }
            Op::Sum(x) => {
                let s = gd[0];
                self.acc(grads, *x).data_mut().iter_mut().for_each(|d| *d += s);
            }
            Op::Reshape(x) => {
                self.acc(grads, *x).data_mut().iter_mut().zip(gd).for_each(|(d, v)| *d += v);
            }
            Op::Conv1d { x, w, b, stride, k, cols } => {
                let (o, lout) = g.dims2();
                let ck = cols.rows();
                let gv = MatView::raw(gd, o, lout);
                if self.needs(*w) {
                    gemm(gv, MatView::of(cols).t(), self.acc(grads, *w).data_mut(), 1.0);
                }
                if self.needs(*b) {
                    let db = self.acc(grads, *b).data_mut();
                    for (d, row) in db.iter_mut().zip(gd.chunks(lout)) {
                        *d += row.iter().sum::<f64>();
                    }
                }
                if self.needs(*x) {
                    let dcols = matmul(MatView::raw(self.value(*w).data(), o, ck).t(), gv);
                    let len = self.value(*x).cols();
                    let dx = self.acc(grads, *x).data_mut();
                    for (row_i, row) in dcols.chunks(lout).enumerate() {
                        let (c, kk) = (row_i / k, row_i % k);
                        for (j, v) in row.iter().enumerate() {
                            dx[c * len + j * stride + kk] += v;
                        }
                    }
                }
            }
            Op::PointMlpMax { x, w1, b1, w2, b2, argmax } => {
                self.point_mlp_max_backward(gd, *x, *w1, *b1, *w2, *b2, argmax, grads);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn point_mlp_max_backward(
        &self,
        gd: &[f64],
        x: Var,
        w1: Var,
        b1: Var,
        w2: Var,
        b2: Var,
        argmax: &[usize],
        grads: &mut [Option<Tensor>],
    ) {
        let d = self.value(x).cols();
        let (h1, h2) = (self.value(w1).cols(), self.value(w2).cols());
        let mut rows: Vec<usize> = argmax.to_vec();
        rows.sort_unstable();
        rows.dedup();
        let xr: Vec<f64> = rows.iter().flat_map(|&r| self.value(x).row_slice(r).iter().copied()).collect();
        let n = rows.len();
        let (z1, z2) = mlp_rows(&xr, n, self.value(w1), self.value(b1), self.value(w2), self.value(b2));
        let mut g2 = vec![0.0; n * h2];
        for (j, &r) in argmax.iter().enumerate() {
            let ri = rows.binary_search(&r).expect("row present");
            if z2[ri * h2 + j] > 0.0 {
                g2[ri * h2 + j] += gd[j];
            }
        }
        let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
        let g2v = MatView::raw(&g2, n, h2);
        if self.needs(w2) {
            gemm(MatView::raw(&a1, n, h1).t(), g2v, self.acc(grads, w2).data_mut(), 1.0);
        }
        if self.needs(b2) {
            let db = self.acc(grads, b2).data_mut();
            for row in g2.chunks(h2) {
                db.iter_mut().zip(row).for_each(|(d, v)| *d += v);
            }
        }
        if !(self.needs(w1) || self.needs(b1) || self.needs(x)) {
            return;
        }
        let mut g1 = matmul(g2v, MatView::of(self.value(w2)).t());
        for (g, z) in g1.iter_mut().zip(&z1) {
            if *z <= 0.0 {
                *g = 0.0;
            }
        }
        let g1v = MatView::raw(&g1, n, h1);
        if self.needs(w1) {
            gemm(MatView::raw(&xr, n, d).t(), g1v, self.acc(grads, w1).data_mut(), 1.0);
        }
        if self.needs(b1) {
            let db = self.acc(grads, b1).data_mut();
            for row in g1.chunks(h1) {
                db.iter_mut().zip(row).for_each(|(dd, v)| *dd += v);
            }
        }
        if self.needs(x) {
            let gx = matmul(g1v, MatView::of(self.value(w1)).t());
            let dx = self.acc(grads, x).data_mut();
            for (ri, &r) in rows.iter().enumerate() {
                for c in 0..d {
                    dx[r * d + c] += gx[ri * d + c];
                }
            }
        }
    }
}

/// Pre-activations of both layers of the shared point network for `n` rows.
fn mlp_rows(x: &[f64], n: usize, w1: &Tensor, b1: &Tensor, w2: &Tensor, b2: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (d, h1) = w1.dims2();
    let h2 = w2.cols();
    let mut z1 = vec![0.0; n * h1];
    for row in z1.chunks_mut(h1) {
        row.copy_from_slice(b1.data());
    }
    gemm(MatView::raw(x, n, d), MatView::of(w1), &mut z1, 1.0);
    let a1: Vec<f64> = z1.iter().map(|v| v.max(0.0)).collect();
    let mut z2 = vec![0.0; n * h2];
    for row in z2.chunks_mut(h2) {
        row.copy_from_slice(b2.data());
    }
    gemm(MatView::raw(&a1, n, h1), MatView::of(w2), &mut z2, 1.0);
    (z1, z2)
}
