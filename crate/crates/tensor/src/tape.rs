//! Reverse-mode differentiation over whole tensors.
//!
//! Every forward op appends a node to the tape; node indices are therefore a
//! topological order and `backward` walks them once in reverse. Parameters are
//! borrowed from a [`ParamStore`] and appear at most once per tape, so their
//! gradients are accumulated in a single slot.

use std::collections::HashMap;

use crate::error::{Result, TensorError};
use crate::kernels::{gemm, gemm_at, gemm_bt, sigmoid};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    BatchMatMul {
        a: Var,
        b: Var,
        trans_b: bool,
    },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBroadcast(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax(Var),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    GatherRows(Var, Vec<usize>),
    SliceRows(Var, usize),
    SliceCols {
        x: Var,
        start: usize,
    },
    RowNorm(Var),
    Sum(Var),
    Mean(Var),
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
}

struct Node {
    // `None` for parameters, whose values live in the store.
    value: Option<Tensor>,
    op: Op,
}

/// Per-feature statistics measured by a train-mode batch normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Records forward operations for later differentiation.
pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    nodes: Vec<Option<Vec<f64>>>,
    params: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a parameter, `None` if the parameter was
    /// not used on the tape or does not influence the loss.
    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(Option::as_ref)
    }

    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.nodes.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn into_params(self) -> Vec<Option<Tensor>> {
        self.params
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_nodes: HashMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    /// On/off state (`input > 0`) of every ReLU entry recorded so far. Two
    /// evaluations with equal patterns lie on the same linear piece of
    /// every ReLU, hinge included.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(a),
                _ => None,
            })
            .flat_map(|a| self.value(a).data().iter().map(|&x| x > 0.0))
            .collect()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            _ => unreachable!("only parameter nodes omit their value"),
        }
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        self.nodes.push(Node { value: Some(value), op });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(t),
            op: Op::Constant,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf for a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(mismatch("matmul", ta, tb));
        }
        let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let mut out = vec![0.0; n * m];
        gemm(ta.data(), tb.data(), &mut out, n, k, m);
        let t = Tensor::new(vec![n, m], out)?;
        self.push("matmul", t, Op::MatMul(a, b))
    }

    /// Batched product over the leading axis: `[g,n,k] x [g,k,m]`, or
    /// `[g,n,k] x [g,m,k]^T` when `trans_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sa.len() != 3 || sb.len() != 3 || sa[0] != sb[0] {
            return Err(mismatch("batch_matmul", ta, tb));
        }
        let (g, n, k) = (sa[0], sa[1], sa[2]);
        let m = if trans_b { sb[1] } else { sb[2] };
        let inner = if trans_b { sb[2] } else { sb[1] };
        if inner != k {
            return Err(mismatch("batch_matmul", ta, tb));
        }
        let mut out = vec![0.0; g * n * m];
        for gi in 0..g {
            let a_blk = &ta.data()[gi * n * k..(gi + 1) * n * k];
            let b_blk = &tb.data()[gi * k * m..(gi + 1) * k * m];
            let o_blk = &mut out[gi * n * m..(gi + 1) * n * m];
            if trans_b {
                gemm_bt(a_blk, b_blk, o_blk, n, k, m);
            } else {
                gemm(a_blk, b_blk, o_blk, n, k, m);
            }
        }
        let t = Tensor::new(vec![g, n, m], out)?;
        self.push("batch_matmul", t, Op::BatchMatMul { a, b, trans_b })
    }

    fn zip_same(&mut self, op_name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op_name, ta, tb));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(op_name, t, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_same("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// Adds `b` to every row of `a`. `b` holds either one value per column of
    /// `a` or a single value.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let c = ta.last_dim();
        if tb.len() != c && tb.len() != 1 {
            return Err(mismatch("add_broadcast", ta, tb));
        }
        let bd = tb.data();
        let data = ta
            .data()
            .iter()
            .enumerate()
            .map(|(i, &x)| x + if bd.len() == 1 { bd[0] } else { bd[i % c] })
            .collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("add_broadcast", t, Op::AddBroadcast(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x * c).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("scale", t, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|x| x + c).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("add_scalar", t, Op::AddScalar(a))
    }

    fn map(&mut self, op_name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let ta = self.value(a);
        let data = ta.data().iter().map(|&x| f(x)).collect();
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push(op_name, t, op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map("relu", a, |x| x.max(0.0), Op::Relu(a))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let c = ta.last_dim();
        let mut data = ta.data().to_vec();
        for row in data.chunks_mut(c) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total += *v;
            }
            for v in row.iter_mut() {
                *v /= total;
            }
        }
        let t = Tensor::new(ta.shape().to_vec(), data)?;
        self.push("softmax", t, Op::Softmax(a))
    }

    /// Concatenates matrices that share a row count along their last axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(TensorError::Empty { op: "concat" })?;
        let rows = self.value(first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = self.value(p);
            if t.rows() != rows {
                return Err(mismatch("concat", self.value(first), t));
            }
            widths.push(t.last_dim());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let t = Tensor::new(vec![rows, total], data)?;
        self.push("concat", t, Op::ConcatCols(parts.to_vec()))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        self.push("reshape", t, Op::Reshape(a))
    }

    /// Selects rows (over the last axis) by index, repeats allowed.
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let ta = self.value(a);
        if idx.is_empty() {
            return Err(TensorError::Empty { op: "gather_rows" });
        }
        let (rows, c) = (ta.rows(), ta.last_dim());
        let mut data = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            if i >= rows {
                return Err(TensorError::IndexOutOfRange {
                    op: "gather_rows",
                    index: i,
                    bound: rows,
                });
            }
            data.extend_from_slice(ta.row(i));
        }
        let t = Tensor::new(vec![idx.len(), c], data)?;
        self.push("gather_rows", t, Op::GatherRows(a, idx.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let ta = self.value(a);
        let (rows, c) = (ta.rows(), ta.last_dim());
        if len == 0 || start + len > rows {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_rows",
                index: start + len,
                bound: rows,
            });
        }
        let data = ta.data()[start * c..(start + len) * c].to_vec();
        let t = Tensor::new(vec![len, c], data)?;
        self.push("slice_rows", t, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let ta = self.value(a);
        let (rows, c) = (ta.rows(), ta.last_dim());
        if width == 0 || start + width > c {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: start + width,
                bound: c,
            });
        }
        let mut data = Vec::with_capacity(rows * width);
        for r in 0..rows {
            data.extend_from_slice(&ta.row(r)[start..start + width]);
        }
        let t = Tensor::new(vec![rows, width], data)?;
        self.push("slice_cols", t, Op::SliceCols { x: a, start })
    }

    /// Euclidean norm of every row; the gradient at a zero row is taken as 0.
    pub fn row_norm(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let data: Vec<f64> = (0..ta.rows())
            .map(|r| ta.row(r).iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        let t = Tensor::new(vec![data.len()], data)?;
        self.push("euclidean_norm", t, Op::RowNorm(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ta = self.value(a);
        let s = ta.sum() / ta.len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a))
    }

    /// Batch normalization over the rows of `x` (`batch x features`).
    ///
    /// With `running = None` the batch statistics are used (biased variance)
    /// and returned so the caller can update its running averages. Otherwise
    /// the given mean and variance are treated as constants.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
        running: Option<(&[f64], &[f64])>,
    ) -> Result<(Var, Option<BatchStats>)> {
        let tx = self.value(x);
        let (n, f) = (tx.rows(), tx.last_dim());
        let (tg, tb) = (self.value(gamma), self.value(beta));
        if tg.len() != f || tb.len() != f {
            return Err(mismatch("batch_norm", tx, tg));
        }
        let (mean, var, stats) = match running {
            Some((m, v)) => {
                if m.len() != f || v.len() != f {
                    return Err(mismatch("batch_norm", tx, tg));
                }
                (m.to_vec(), v.to_vec(), false)
            }
            None => {
                let mut mean = vec![0.0; f];
                for r in 0..n {
                    for (m, &v) in mean.iter_mut().zip(tx.row(r)) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n as f64);
                let mut var = vec![0.0; f];
                for r in 0..n {
                    for ((s, &v), &m) in var.iter_mut().zip(tx.row(r)).zip(&mean) {
                        *s += (v - m) * (v - m);
                    }
                }
                var.iter_mut().for_each(|s| *s /= n as f64);
                (mean, var, true)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let mut xhat = vec![0.0; n * f];
        let mut out = vec![0.0; n * f];
        for r in 0..n {
            for j in 0..f {
                let h = (tx.row(r)[j] - mean[j]) * inv_std[j];
                xhat[r * f + j] = h;
                out[r * f + j] = tg.data()[j] * h + tb.data()[j];
            }
        }
        let t = Tensor::new(tx.shape().to_vec(), out)?;
        let v = self.push(
            "batch_norm",
            t,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats: stats,
            },
        )?;
        Ok((v, stats.then_some(BatchStats { mean, var })))
    }

    /// Propagates d(loss)/d(node) back through the tape.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::NotScalar(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut params = vec![None; self.params.len()];
        for (&id, &v) in &self.param_nodes {
            if let Some(g) = &grads[v.0] {
                let shape = self.params.get(id).shape().to_vec();
                params[id.0] = Some(Tensor::new(shape, g.clone())?);
            }
        }
        Ok(Gradients { nodes: grads, params })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let out = node.value.as_ref();
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let len = self.value(v).len();
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(slot);
        };
        match &node.op {
            Op::Constant | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (n, k, m) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                acc(*a, &mut |s| gemm_bt(g, tb.data(), s, n, m, k));
                acc(*b, &mut |s| gemm_at(ta.data(), g, s, n, k, m));
            }
            Op::BatchMatMul { a, b, trans_b } => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (gn, n, k) = (ta.shape()[0], ta.shape()[1], ta.shape()[2]);
                let m = if *trans_b { tb.shape()[1] } else { tb.shape()[2] };
                acc(*a, &mut |s| {
                    for gi in 0..gn {
                        let gb = &g[gi * n * m..(gi + 1) * n * m];
                        let bb = &tb.data()[gi * k * m..(gi + 1) * k * m];
                        let sb = &mut s[gi * n * k..(gi + 1) * n * k];
                        if *trans_b {
                            // dA = dC * B, B is [m,k]
                            gemm(gb, bb, sb, n, m, k);
                        } else {
                            gemm_bt(gb, bb, sb, n, m, k);
                        }
                    }
                });
                acc(*b, &mut |s| {
                    for gi in 0..gn {
                        let gb = &g[gi * n * m..(gi + 1) * n * m];
                        let ab = &ta.data()[gi * n * k..(gi + 1) * n * k];
                        let sb = &mut s[gi * k * m..(gi + 1) * k * m];
                        if *trans_b {
                            // dB = dC^T * A, [m,k]
                            gemm_at(gb, ab, sb, n, m, k);
                        } else {
                            gemm_at(ab, gb, sb, n, k, m);
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| add_into(s, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                acc(*b, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x -= y));
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                acc(*a, &mut |s| {
                    for ((x, gy), bv) in s.iter_mut().zip(g).zip(tb.data()) {
                        *x += gy * bv;
                    }
                });
                acc(*b, &mut |s| {
                    for ((x, gy), av) in s.iter_mut().zip(g).zip(ta.data()) {
                        *x += gy * av;
                    }
                });
            }
            Op::AddBroadcast(a, b) => {
                acc(*a, &mut |s| add_into(s, g));
                let c = self.value(*a).last_dim();
                acc(*b, &mut |s| {
                    if s.len() == 1 {
                        s[0] += g.iter().sum::<f64>();
                    } else {
                        for (i, gy) in g.iter().enumerate() {
                            s[i % c] += gy;
                        }
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |s| s.iter_mut().zip(g).for_each(|(x, y)| *x += c * y)),
            Op::AddScalar(a) | Op::Reshape(a) => acc(*a, &mut |s| add_into(s, g)),
            Op::Sigmoid(a) => {
                let y = out.expect("value").data();
                acc(*a, &mut |s| {
                    for ((x, gy), yv) in s.iter_mut().zip(g).zip(y) {
                        *x += gy * yv * (1.0 - yv);
                    }
                });
            }
            Op::Tanh(a) => {
                let y = out.expect("value").data();
                acc(*a, &mut |s| {
                    for ((x, gy), yv) in s.iter_mut().zip(g).zip(y) {
                        *x += gy * (1.0 - yv * yv);
                    }
                });
            }
            Op::Relu(a) => {
                let input = self.value(*a).data();
                acc(*a, &mut |s| {
                    for ((x, gy), iv) in s.iter_mut().zip(g).zip(input) {
                        if *iv > 0.0 {
                            *x += gy;
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let y = out.expect("value");
                let c = y.last_dim();
                acc(*a, &mut |s| {
                    for ((srow, grow), yrow) in s.chunks_mut(c).zip(g.chunks(c)).zip(y.data().chunks(c)) {
                        let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                        for ((x, gy), yv) in srow.iter_mut().zip(grow).zip(yrow) {
                            *x += yv * (gy - dot);
                        }
                    }
                });
            }
            Op::ConcatCols(parts) => {
                let total = out.expect("value").last_dim();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).last_dim();
                    acc(*p, &mut |s| {
                        for (r, srow) in s.chunks_mut(w).enumerate() {
                            add_into(srow, &g[r * total + offset..r * total + offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::GatherRows(a, idx) => {
                let c = self.value(*a).last_dim();
                acc(*a, &mut |s| {
                    for (r, &i) in idx.iter().enumerate() {
                        add_into(&mut s[i * c..(i + 1) * c], &g[r * c..(r + 1) * c]);
                    }
                });
            }
            Op::SliceRows(a, start) => {
                let c = self.value(*a).last_dim();
                acc(*a, &mut |s| add_into(&mut s[start * c..start * c + g.len()], g));
            }
            Op::SliceCols { x, start } => {
                let c = self.value(*x).last_dim();
                let w = out.expect("value").last_dim();
                acc(*x, &mut |s| {
                    for (r, grow) in g.chunks(w).enumerate() {
                        add_into(&mut s[r * c + start..r * c + start + w], grow);
                    }
                });
            }
            Op::RowNorm(a) => {
                let ta = self.value(*a);
                let norms = out.expect("value").data();
                let c = ta.last_dim();
                acc(*a, &mut |s| {
                    for (r, (&nv, &gy)) in norms.iter().zip(g).enumerate() {
                        if nv > 0.0 {
                            for (x, &v) in s[r * c..(r + 1) * c].iter_mut().zip(ta.row(r)) {
                                *x += gy * v / nv;
                            }
                        }
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |s| s.iter_mut().for_each(|x| *x += g[0])),
            Op::Mean(a) => {
                let n = self.value(*a).len() as f64;
                acc(*a, &mut |s| s.iter_mut().for_each(|x| *x += g[0] / n));
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let f = inv_std.len();
                let n = xhat.len() / f;
                let gam = self.value(*gamma).data();
                let mut sum_g = vec![0.0; f];
                let mut sum_gx = vec![0.0; f];
                for r in 0..n {
                    for j in 0..f {
                        sum_g[j] += g[r * f + j];
                        sum_gx[j] += g[r * f + j] * xhat[r * f + j];
                    }
                }
                acc(*gamma, &mut |s| add_into(s, &sum_gx));
                acc(*beta, &mut |s| add_into(s, &sum_g));
                acc(*x, &mut |s| {
                    let nf = n as f64;
                    for r in 0..n {
                        for j in 0..f {
                            let k = r * f + j;
                            if *batch_stats {
                                // d xhat = g * gamma; sums scale by gamma too
                                let dx = gam[j] * inv_std[j] / nf * (nf * g[k] - sum_g[j] - xhat[k] * sum_gx[j]);
                                s[k] += dx;
                            } else {
                                s[k] += g[k] * gam[j] * inv_std[j];
                            }
                        }
                    }
                });
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: Vec<f64>) -> (ParamStore, ParamId) {
        let mut store = ParamStore::new();
        let id = store.add("p", Tensor::from_vec(values));
        (store, id)
    }

    #[test]
    fn softmax_uniform() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::from_vec(vec![0.0, 0.0, 0.0]));
        let y = tape.softmax(x).unwrap();
        for v in tape.value(y).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn relu_definition() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn norm_three_four_five() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::new(vec![1, 2], vec![3.0, 4.0]).unwrap());
        let y = tape.row_norm(x).unwrap();
        assert_eq!(tape.value(y).data(), &[5.0]);
    }

    #[test]
    fn sum_gives_ones() {
        let (store, id) = store_with(vec![0.3, -2.0, 7.0]);
        let mut tape = Tape::new(&store);
        let p = tape.param(id);
        let l = tape.sum(p).unwrap();
        let grads = tape.backward(l).unwrap();
        assert_eq!(grads.param(id).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn half_square_norm_gives_param() {
        let (store, id) = store_with(vec![0.3, -2.0, 7.0]);
        let mut tape = Tape::new(&store);
        let p = tape.param(id);
        let sq = tape.mul(p, p).unwrap();
        let s = tape.sum(sq).unwrap();
        let l = tape.scale(s, 0.5).unwrap();
        let grads = tape.backward(l).unwrap();
        assert_eq!(grads.param(id).unwrap().data(), &[0.3, -2.0, 7.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let (store, id) = store_with(vec![1.0, 2.0]);
        let mut tape = Tape::new(&store);
        let p = tape.param(id);
        assert!(matches!(tape.backward(p), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn param_node_is_shared() {
        let (store, id) = store_with(vec![1.0]);
        let mut tape = Tape::new(&store);
        let a = tape.param(id);
        let b = tape.param(id);
        assert_eq!(a, b);
        let y = tape.add(a, b).unwrap();
        let grads = tape.backward(y).unwrap();
        assert_eq!(grads.param(id).unwrap().data(), &[2.0]);
    }

    #[test]
    fn shape_mismatch_names_op() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[2, 3]));
        let err = tape.matmul(a, b).unwrap_err();
        assert!(err.to_string().starts_with("matmul"));
    }

    #[test]
    fn non_finite_is_rejected() {
        let store = ParamStore::new();
        let mut tape = Tape::new(&store);
        let a = tape.constant(Tensor::from_vec(vec![f64::MAX]));
        assert!(matches!(
            tape.scale(a, 10.0),
            Err(TensorError::NonFinite { op: "scale" })
        ));
    }

    #[test]
    fn norm_of_zero_row_has_zero_gradient() {
        let (store, id) = store_with(vec![0.0, 0.0]);
        let mut tape = Tape::new(&store);
        let p = tape.param(id);
        let r = tape.reshape(p, &[1, 2]).unwrap();
        let n = tape.row_norm(r).unwrap();
        let l = tape.sum(n).unwrap();
        let grads = tape.backward(l).unwrap();
        assert_eq!(grads.param(id).unwrap().data(), &[0.0, 0.0]);
    }
}
