use super::gemm::gemm;
use super::{Tensor, TensorError};

type Result<T> = std::result::Result<T, TensorError>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    GatherRows(Var, Vec<usize>),
    SegmentMeanRows(Var, usize),
    SumCols(Var),
    Sum(Var),
    Mean(Var),
    Clamp(Var, f64, f64),
    Minimum(Var, Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        blocks: usize,
        weights: Vec<f64>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run record of tensor operations. Nodes are appended in
/// evaluation order, which is therefore a topological order; `backward`
/// walks it in reverse exactly once.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for `v`; `None` only for nodes that do not require grad.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradients for a list of leaves, zero-filled where untouched.
    pub fn collect(&self, vars: &[Var], tape: &Tape) -> Vec<Tensor> {
        vars.iter()
            .map(|&v| {
                self.get(v).cloned().unwrap_or_else(|| {
                    let t = tape.value(v);
                    Tensor::zeros(t.rows(), t.cols())
                })
            })
            .collect()
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Bcast {
    Same,
    Row,
    Col,
    Scalar,
}

fn bcast_kind(op: &'static str, a: &Tensor, b: &Tensor) -> Result<Bcast> {
    let (m, n) = (a.rows(), a.cols());
    let (p, q) = (b.rows(), b.cols());
    if a.shape().len() > 2 || b.shape().len() > 2 {
        return Err(TensorError::Shape {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    if (p, q) == (m, n) {
        Ok(Bcast::Same)
    } else if (p, q) == (1, 1) {
        Ok(Bcast::Scalar)
    } else if p == 1 && q == n {
        Ok(Bcast::Row)
    } else if p == m && q == 1 {
        Ok(Bcast::Col)
    } else {
        Err(TensorError::Shape {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        })
    }
}

#[inline]
fn bidx(kind: Bcast, i: usize, j: usize, n: usize) -> usize {
    match kind {
        Bcast::Same => i * n + j,
        Bcast::Row => j,
        Bcast::Col => i,
        Bcast::Scalar => 0,
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(x: &[f64], out: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &v) in out.iter_mut().zip(x) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
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

    /// Differentiable input (parameter or probe).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, name: &'static str, value: Tensor, op: Op, inputs: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(TensorError::Numeric { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push_raw(value, op, requires_grad))
    }

    fn unary(&mut self, name: &'static str, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let t = self.value(x);
        let data = t.data().iter().map(|&v| f(v)).collect();
        let out = Tensor::from_parts(t.rows(), t.cols(), data);
        self.push(name, out, op, &[x])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() || ta.shape().len() > 2 || tb.shape().len() > 2 {
            return Err(TensorError::Shape {
                op: "matmul",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
        let mut c = vec![0.0; m * n];
        gemm(m, k, n, ta.data(), false, tb.data(), false, &mut c, 0.0);
        self.push("matmul", Tensor::from_parts(m, n, c), Op::MatMul(a, b), &[a, b])
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let kind = bcast_kind(name, ta, tb)?;
        let (m, n) = (ta.rows(), ta.cols());
        let (da, db) = (ta.data(), tb.data());
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for j in 0..n {
                out.push(f(da[i * n + j], db[bidx(kind, i, j, n)]));
            }
        }
        self.push(name, Tensor::from_parts(m, n, out), op, &[a, b])
    }

    /// Elementwise `a + b`; `b` may be a row `1 x n`, column `m x 1` or scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        self.unary("scale", a, Op::Scale(a, k), |x| k * x)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, Op::Exp(a), f64::exp)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary("clamp", a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Elementwise minimum of equally shaped tensors; ties route the
    /// gradient to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(TensorError::Shape {
                op: "minimum",
                lhs: ta.shape().to_vec(),
                rhs: tb.shape().to_vec(),
            });
        }
        self.binary("minimum", a, b, Op::Minimum(a, b), f64::min)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = (t.rows(), t.cols());
        let mut out = vec![0.0; m * n];
        for (x, o) in t.data().chunks(n).zip(out.chunks_mut(n)) {
            softmax_row(x, o);
        }
        self.push("softmax", Tensor::from_parts(m, n, out), Op::SoftmaxRows(a), &[a])
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = (t.rows(), t.cols());
        let mut out = vec![0.0; m * n];
        for (x, o) in t.data().chunks(n).zip(out.chunks_mut(n)) {
            let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for (o, &v) in o.iter_mut().zip(x) {
                *o = v - lse;
            }
        }
        self.push("log_softmax", Tensor::from_parts(m, n, out), Op::LogSoftmaxRows(a), &[a])
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Argument("concat of zero tensors".into()))?;
        let m = self.value(*first).rows();
        for p in parts {
            let t = self.value(*p);
            if t.rows() != m {
                return Err(TensorError::Shape {
                    op: "concat_cols",
                    lhs: self.value(*first).shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
        }
        let n: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            for p in parts {
                out.extend_from_slice(self.value(*p).row_slice(i));
            }
        }
        self.push("concat_cols", Tensor::from_parts(m, n, out), Op::ConcatCols(parts.to_vec()), parts)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Argument("concat of zero tensors".into()))?;
        let n = self.value(*first).cols();
        let mut out = Vec::new();
        let mut m = 0;
        for p in parts {
            let t = self.value(*p);
            if t.cols() != n {
                return Err(TensorError::Shape {
                    op: "concat_rows",
                    lhs: self.value(*first).shape().to_vec(),
                    rhs: t.shape().to_vec(),
                });
            }
            m += t.rows();
            out.extend_from_slice(t.data());
        }
        self.push("concat_rows", Tensor::from_parts(m, n, out), Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = (t.rows(), t.cols());
        if start > end || end > n {
            return Err(TensorError::Shape {
                op: "slice_cols",
                lhs: t.shape().to_vec(),
                rhs: vec![start, end],
            });
        }
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&t.data()[i * n + start..i * n + end]);
        }
        self.push("slice_cols", Tensor::from_parts(m, w, out), Op::SliceCols(a, start), &[a])
    }

    /// Rows of `a` in the order given by `idx` (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = (t.rows(), t.cols());
        if let Some(&bad) = idx.iter().find(|&&i| i >= m) {
            return Err(TensorError::Shape {
                op: "gather_rows",
                lhs: t.shape().to_vec(),
                rhs: vec![bad],
            });
        }
        let mut out = Vec::with_capacity(idx.len() * n);
        for &i in idx {
            out.extend_from_slice(t.row_slice(i));
        }
        self.push(
            "gather_rows",
            Tensor::from_parts(idx.len(), n, out),
            Op::GatherRows(a, idx.to_vec()),
            &[a],
        )
    }

    /// Mean over consecutive groups of `seg` rows: `(m, n) -> (m / seg, n)`.
    pub fn segment_mean_rows(&mut self, a: Var, seg: usize) -> Result<Var> {
        let t = self.value(a);
        let (m, n) = (t.rows(), t.cols());
        if seg == 0 || m % seg != 0 {
            return Err(TensorError::Shape {
                op: "segment_mean_rows",
                lhs: t.shape().to_vec(),
                rhs: vec![seg],
            });
        }
        let groups = m / seg;
        let mut out = vec![0.0; groups * n];
        for g in 0..groups {
            let o = &mut out[g * n..(g + 1) * n];
            for r in 0..seg {
                for (x, &v) in o.iter_mut().zip(t.row_slice(g * seg + r)) {
                    *x += v;
                }
            }
            o.iter_mut().for_each(|x| *x /= seg as f64);
        }
        self.push(
            "segment_mean_rows",
            Tensor::from_parts(groups, n, out),
            Op::SegmentMeanRows(a, seg),
            &[a],
        )
    }

    /// Row sums: `(m, n) -> (m, 1)`.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let n = t.cols();
        let out: Vec<f64> = t.data().chunks(n).map(|r| r.iter().sum()).collect();
        let m = out.len();
        self.push("sum_cols", Tensor::from_parts(m, 1, out), Op::SumCols(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        if t.is_empty() {
            return Err(TensorError::Argument("mean of empty tensor".into()));
        }
        let s = t.sum() / t.len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a), &[a])
    }

    /// Block-diagonal scaled dot-product attention. `q`, `k`, `v` hold
    /// `blocks` stacked groups of rows; group `b` of `q` attends only over
    /// group `b` of `k`/`v`: `softmax(Q_b K_b^T / sqrt(d)) V_b`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, blocks: usize) -> Result<Var> {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let d = tq.cols();
        let shape_err = || TensorError::Shape {
            op: "attention",
            lhs: tq.shape().to_vec(),
            rhs: tk.shape().to_vec(),
        };
        if blocks == 0
            || tk.cols() != d
            || tk.rows() != tv.rows()
            || tq.rows() % blocks != 0
            || tk.rows() % blocks != 0
            || tk.rows() == 0
        {
            return Err(shape_err());
        }
        let nq = tq.rows() / blocks;
        let nk = tk.rows() / blocks;
        let dv = tv.cols();
        let scale = 1.0 / (d as f64).sqrt();
        let mut weights = vec![0.0; blocks * nq * nk];
        let mut out = vec![0.0; blocks * nq * dv];
        let mut scores = vec![0.0; nq * nk];
        for b in 0..blocks {
            let qb = &tq.data()[b * nq * d..(b + 1) * nq * d];
            let kb = &tk.data()[b * nk * d..(b + 1) * nk * d];
            let vb = &tv.data()[b * nk * dv..(b + 1) * nk * dv];
            gemm(nq, d, nk, qb, false, kb, true, &mut scores, 0.0);
            let wb = &mut weights[b * nq * nk..(b + 1) * nq * nk];
            for (s, w) in scores.chunks(nk).zip(wb.chunks_mut(nk)) {
                let scaled: Vec<f64> = s.iter().map(|x| x * scale).collect();
                softmax_row(&scaled, w);
            }
            let ob = &mut out[b * nq * dv..(b + 1) * nq * dv];
            gemm(nq, nk, dv, wb, false, vb, false, ob, 0.0);
        }
        let value = Tensor::from_parts(blocks * nq, dv, out);
        self.push(
            "attention",
            value,
            Op::Attention {
                q,
                k,
                v,
                blocks,
                weights,
            },
            &[q, k, v],
        )
    }

    /// Reverse-mode sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(TensorError::Argument(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            self.fill_leaf_zeros(&mut grads);
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::from_parts(lt.rows(), lt.cols(), vec![1.0]));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[idx] = Some(g);
        }
        self.fill_leaf_zeros(&mut grads);
        Ok(Gradients { grads })
    }

    fn fill_leaf_zeros(&self, grads: &mut [Option<Tensor>]) {
        for (node, g) in self.nodes.iter().zip(grads.iter_mut()) {
            if node.requires_grad && matches!(node.op, Op::Leaf) && g.is_none() {
                *g = Some(Tensor::zeros(node.value.rows(), node.value.cols()));
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (x, d) in g.data_mut().iter_mut().zip(delta) {
                    *x += d;
                }
            }
            slot @ None => {
                let t = &self.nodes[v.0].value;
                *slot = Some(Tensor::from_parts(t.rows(), t.cols(), delta));
            }
        }
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let y = node.value.data();
        let gd = g.data();
        let elementwise = |x: Var, f: &dyn Fn(usize) -> f64| -> Vec<f64> {
            (0..self.value(x).len()).map(f).collect()
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (ta.rows(), ta.cols(), tb.cols());
                if self.needs(*a) {
                    let mut ga = vec![0.0; m * k];
                    gemm(m, n, k, gd, false, tb.data(), true, &mut ga, 0.0);
                    self.accumulate(grads, *a, ga);
                }
                if self.needs(*b) {
                    let mut gb = vec![0.0; k * n];
                    gemm(k, m, n, ta.data(), true, gd, false, &mut gb, 0.0);
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let kind = bcast_kind("backward", ta, tb).expect("shapes checked on forward");
                let (m, n) = (ta.rows(), ta.cols());
                let is_mul = matches!(node.op, Op::Mul(..));
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.needs(*a) {
                    let ga = if is_mul {
                        (0..m * n)
                            .map(|i| gd[i] * tb.data()[bidx(kind, i / n, i % n, n)])
                            .collect()
                    } else {
                        gd.to_vec()
                    };
                    self.accumulate(grads, *a, ga);
                }
                if self.needs(*b) {
                    let mut gb = vec![0.0; tb.len()];
                    for i in 0..m {
                        for j in 0..n {
                            let e = i * n + j;
                            let contrib = if is_mul { gd[e] * ta.data()[e] } else { sign * gd[e] };
                            gb[bidx(kind, i, j, n)] += contrib;
                        }
                    }
                    self.accumulate(grads, *b, gb);
                }
            }
            Op::Scale(a, k) => {
                let ga = gd.iter().map(|x| k * x).collect();
                self.accumulate(grads, *a, ga);
            }
            Op::Sigmoid(a) => {
                let ga = elementwise(*a, &|i| gd[i] * y[i] * (1.0 - y[i]));
                self.accumulate(grads, *a, ga);
            }
            Op::Tanh(a) => {
                let ga = elementwise(*a, &|i| gd[i] * (1.0 - y[i] * y[i]));
                self.accumulate(grads, *a, ga);
            }
            Op::Relu(a) => {
                let x = self.value(*a).data();
                let ga = elementwise(*a, &|i| if x[i] > 0.0 { gd[i] } else { 0.0 });
                self.accumulate(grads, *a, ga);
            }
            Op::Exp(a) => {
                let ga = elementwise(*a, &|i| gd[i] * y[i]);
                self.accumulate(grads, *a, ga);
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.value(*a).data();
                let ga = elementwise(*a, &|i| {
                    if x[i] >= *lo && x[i] <= *hi {
                        gd[i]
                    } else {
                        0.0
                    }
                });
                self.accumulate(grads, *a, ga);
            }
            Op::Minimum(a, b) => {
                let (xa, xb) = (self.value(*a).data(), self.value(*b).data());
                let ga = elementwise(*a, &|i| if xa[i] <= xb[i] { gd[i] } else { 0.0 });
                let gb = elementwise(*b, &|i| if xa[i] <= xb[i] { 0.0 } else { gd[i] });
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::SoftmaxRows(a) => {
                let n = node.value.cols();
                let mut ga = vec![0.0; y.len()];
                for ((yr, gr), out) in y.chunks(n).zip(gd.chunks(n)).zip(ga.chunks_mut(n)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                    for j in 0..n {
                        out[j] = yr[j] * (gr[j] - dot);
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let n = node.value.cols();
                let mut ga = vec![0.0; y.len()];
                for ((yr, gr), out) in y.chunks(n).zip(gd.chunks(n)).zip(ga.chunks_mut(n)) {
                    let total: f64 = gr.iter().sum();
                    for j in 0..n {
                        out[j] = gr[j] - yr[j].exp() * total;
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::ConcatCols(parts) => {
                let (m, n) = (node.value.rows(), node.value.cols());
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    if self.needs(*p) {
                        let mut gp = Vec::with_capacity(m * w);
                        for i in 0..m {
                            gp.extend_from_slice(&gd[i * n + offset..i * n + offset + w]);
                        }
                        self.accumulate(grads, *p, gp);
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    if self.needs(*p) {
                        self.accumulate(grads, *p, gd[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
            Op::SliceCols(a, start) => {
                let ta = self.value(*a);
                let (m, n) = (ta.rows(), ta.cols());
                let w = node.value.cols();
                let mut ga = vec![0.0; m * n];
                for i in 0..m {
                    ga[i * n + start..i * n + start + w].copy_from_slice(&gd[i * w..(i + 1) * w]);
                }
                self.accumulate(grads, *a, ga);
            }
            Op::GatherRows(a, idx) => {
                let ta = self.value(*a);
                let n = ta.cols();
                let mut ga = vec![0.0; ta.len()];
                for (r, &src) in idx.iter().enumerate() {
                    for j in 0..n {
                        ga[src * n + j] += gd[r * n + j];
                    }
                }
                self.accumulate(grads, *a, ga);
            }
            Op::SegmentMeanRows(a, seg) => {
                let ta = self.value(*a);
                let n = ta.cols();
                let inv = 1.0 / *seg as f64;
                let ga = (0..ta.len())
                    .map(|e| {
                        let (i, j) = (e / n, e % n);
                        gd[(i / seg) * n + j] * inv
                    })
                    .collect();
                self.accumulate(grads, *a, ga);
            }
            Op::SumCols(a) => {
                let n = self.value(*a).cols();
                let ga = elementwise(*a, &|e| gd[e / n]);
                self.accumulate(grads, *a, ga);
            }
            Op::Sum(a) => {
                let ga = vec![gd[0]; self.value(*a).len()];
                self.accumulate(grads, *a, ga);
            }
            Op::Mean(a) => {
                let len = self.value(*a).len();
                let ga = vec![gd[0] / len as f64; len];
                self.accumulate(grads, *a, ga);
            }
            Op::Attention {
                q,
                k,
                v,
                blocks,
                weights,
            } => self.attention_backward(*q, *k, *v, *blocks, weights, gd, grads),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        q: Var,
        k: Var,
        v: Var,
        blocks: usize,
        weights: &[f64],
        gd: &[f64],
        grads: &mut [Option<Tensor>],
    ) {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        let d = tq.cols();
        let dv = tv.cols();
        let nq = tq.rows() / blocks;
        let nk = tk.rows() / blocks;
        let scale = 1.0 / (d as f64).sqrt();
        let mut gq = vec![0.0; tq.len()];
        let mut gk = vec![0.0; tk.len()];
        let mut gv = vec![0.0; tv.len()];
        let mut dp = vec![0.0; nq * nk];
        for b in 0..blocks {
            let qb = &tq.data()[b * nq * d..(b + 1) * nq * d];
            let kb = &tk.data()[b * nk * d..(b + 1) * nk * d];
            let vb = &tv.data()[b * nk * dv..(b + 1) * nk * dv];
            let pb = &weights[b * nq * nk..(b + 1) * nq * nk];
            let gob = &gd[b * nq * dv..(b + 1) * nq * dv];
            // dV = P^T dO
            gemm(nk, nq, dv, pb, true, gob, false, &mut gv[b * nk * dv..(b + 1) * nk * dv], 0.0);
            // dP = dO V^T, then dS = P * (dP - rowsum(dP * P)), folded with the scale
            gemm(nq, dv, nk, gob, false, vb, true, &mut dp, 0.0);
            for (dpr, pr) in dp.chunks_mut(nk).zip(pb.chunks(nk)) {
                let dot: f64 = dpr.iter().zip(pr).map(|(x, p)| x * p).sum();
                for (x, p) in dpr.iter_mut().zip(pr) {
                    *x = p * (*x - dot) * scale;
                }
            }
            gemm(nq, nk, d, &dp, false, kb, false, &mut gq[b * nq * d..(b + 1) * nq * d], 0.0);
            gemm(nk, nq, d, &dp, true, qb, false, &mut gk[b * nk * d..(b + 1) * nk * d], 0.0);
        }
        self.accumulate(grads, q, gq);
        self.accumulate(grads, k, gk);
        self.accumulate(grads, v, gv);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn t(r: usize, c: usize, d: &[f64]) -> Tensor {
        Tensor::matrix(r, c, d.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let mut tape = Tape::new();
        let x = tape.constant(t(1, 2, &[0.0, 0.0]));
        let y = tape.softmax_rows(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let i = tape.constant(Tensor::eye(3));
        let a = tape.constant(t(3, 2, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let y = tape.matmul(i, a).unwrap();
        assert_eq!(tape.value(y), tape.value(a));
    }

    #[test]
    fn sigmoid_zero() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(0.0));
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.value(y).item(), 0.5);
    }

    #[test]
    fn shape_errors_name_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 3));
        let err = tape.matmul(a, b).unwrap_err();
        assert_eq!(
            err,
            TensorError::Shape {
                op: "matmul",
                lhs: vec![2, 3],
                rhs: vec![2, 3]
            }
        );
        let c = tape.constant(Tensor::zeros(3, 2));
        assert!(tape.add(a, c).is_err());
    }

    #[test]
    fn non_finite_trips() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::scalar(1000.0));
        assert_eq!(tape.exp(a).unwrap_err(), TensorError::Numeric { op: "exp" });
    }

    #[test]
    fn sum_and_mean_grads() {
        let mut tape = Tape::new();
        let x = tape.leaf(t(2, 2, &[1.0, -2.0, 3.0, 0.5]));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[1.0; 4]);

        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![1.0; 5]));
        let m = tape.mean(x).unwrap();
        let g = tape.backward(m).unwrap();
        assert!(g.get(x).unwrap().data().iter().all(|&v| v == 0.2));
    }

    #[test]
    fn untouched_leaves_get_zero() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![1.0, 2.0]));
        let unused = tape.leaf(Tensor::row(vec![3.0, 4.0, 5.0]));
        let s = tape.sum(x).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(unused).unwrap().data(), &[0.0; 3]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::row(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(TensorError::Argument(_))));
    }

    #[test]
    fn single_key_returns_value_row() {
        let mut tape = Tape::new();
        let q = tape.constant(t(2, 3, &[0.3, -1.0, 2.0, 5.0, 1.0, -4.0]));
        let k = tape.constant(t(1, 3, &[1.0, 2.0, 3.0]));
        let v = tape.constant(t(1, 2, &[7.0, -1.5]));
        let o = tape.attention(q, k, v, 1).unwrap();
        assert_eq!(tape.value(o).data(), &[7.0, -1.5, 7.0, -1.5]);
    }

    #[test]
    fn identical_keys_average_values() {
        let mut tape = Tape::new();
        let q = tape.constant(t(1, 2, &[0.9, -0.2]));
        let k = tape.constant(t(2, 2, &[0.4, 0.4, 0.4, 0.4]));
        let v = tape.constant(t(2, 2, &[1.0, 2.0, 3.0, 6.0]));
        let o = tape.attention(q, k, v, 1).unwrap();
        assert_relative_eq!(tape.value(o).data()[0], 2.0, epsilon = 1e-15);
        assert_relative_eq!(tape.value(o).data()[1], 4.0, epsilon = 1e-15);
    }

    #[test]
    fn broadcast_grads_reduce() {
        let mut tape = Tape::new();
        let a = tape.leaf(t(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let row = tape.leaf(t(1, 3, &[1.0, 1.0, 1.0]));
        let col = tape.leaf(t(2, 1, &[2.0, 3.0]));
        let s = tape.leaf(Tensor::scalar(0.5));
        let x = tape.add(a, row).unwrap();
        let x = tape.mul(x, col).unwrap();
        let x = tape.sub(x, s).unwrap();
        let l = tape.sum(x).unwrap();
        let g = tape.backward(l).unwrap();
        assert_eq!(g.get(row).unwrap().data(), &[5.0, 5.0, 5.0]);
        assert_eq!(g.get(col).unwrap().data(), &[9.0, 18.0]);
        assert_eq!(g.get(s).unwrap().data(), &[-6.0]);
        assert_eq!(g.get(a).unwrap().data(), &[2.0, 2.0, 2.0, 3.0, 3.0, 3.0]);
    }
}
