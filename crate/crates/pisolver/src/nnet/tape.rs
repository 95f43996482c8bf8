//! A small eager-forward, recorded-backward automatic differentiation tape.
//!
//! Each operation computes its value immediately and records itself on the
//! tape; [`Tape::backward`] then walks the record in reverse, accumulating
//! adjoints. Three value shapes exist — scalars, vectors, and matrices
//! (channel × position) — enough for the unrolled solver graphs: the inner
//! physics-loss gradient, the conditioner network, and the outer data loss.
//!
//! Two kinds of constants appear in a graph. Large, instance-owned matrices
//! (discretization operators) ride inside their ops as shared references and
//! receive no adjoints; everything that needs a gradient — network weights,
//! and any intermediate — is a node. All reductions run through the
//! fixed-order kernels in [`linalg`](crate::linalg), so a tape forward pass
//! that mirrors an analytic computation reproduces it bit-for-bit.
//!
//! Shape violations are bugs in graph construction, not user errors, so they
//! panic rather than returning `Result`.

use std::sync::Arc;

use ndarray::{Array1, Array2};

use super::dft::{adj_irfft, adj_rfft, irfft_trunc, rfft, Cf64};
use crate::linalg;

/// A value flowing through the graph.
#[derive(Debug, Clone)]
pub enum Value {
    Scalar(f64),
    Vec1(Array1<f64>),
    Mat(Array2<f64>),
}

impl Value {
    pub fn as_scalar(&self) -> f64 {
        match self {
            Value::Scalar(v) => *v,
            other => panic!("expected scalar value, got {}", other.kind()),
        }
    }

    pub fn as_vec(&self) -> &Array1<f64> {
        match self {
            Value::Vec1(v) => v,
            other => panic!("expected vector value, got {}", other.kind()),
        }
    }

    pub fn as_mat(&self) -> &Array2<f64> {
        match self {
            Value::Mat(v) => v,
            other => panic!("expected matrix value, got {}", other.kind()),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Value::Scalar(_) => "scalar",
            Value::Vec1(_) => "vector",
            Value::Mat(_) => "matrix",
        }
    }

    fn zeros_like(&self) -> Value {
        match self {
            Value::Scalar(_) => Value::Scalar(0.0),
            Value::Vec1(v) => Value::Vec1(Array1::zeros(v.len())),
            Value::Mat(m) => Value::Mat(Array2::zeros((m.nrows(), m.ncols()))),
        }
    }

    fn add_in_place(&mut self, other: &Value) {
        match (self, other) {
            (Value::Scalar(a), Value::Scalar(b)) => *a += b,
            (Value::Vec1(a), Value::Vec1(b)) => {
                for i in 0..a.len() {
                    a[i] += b[i];
                }
            }
            (Value::Mat(a), Value::Mat(b)) => {
                for i in 0..a.nrows() {
                    for j in 0..a.ncols() {
                        a[[i, j]] += b[[i, j]];
                    }
                }
            }
            (a, b) => panic!("adjoint shape mismatch: {} vs {}", a.kind(), b.kind()),
        }
    }
}

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Input,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Scale(NodeId, f64),
    /// Elementwise product of two vectors.
    Mul(NodeId, NodeId),
    MatVec(Arc<Array2<f64>>, NodeId),
    MatTVec(Arc<Array2<f64>>, NodeId),
    Dot(NodeId, NodeId),
    SmoothL1 {
        pred: NodeId,
        target: Arc<Array1<f64>>,
        delta: f64,
    },
    RowStack(Vec<NodeId>),
    RowSlice(NodeId, usize),
    Dense {
        w: NodeId,
        b: Option<NodeId>,
        x: NodeId,
    },
    Spectral {
        w: NodeId,
        x: NodeId,
        modes: usize,
    },
    Gelu(NodeId),
}

struct Node {
    op: Op,
    value: Value,
}

/// Adjoints produced by one backward pass, indexed by node.
pub struct Adjoints {
    inner: Vec<Option<Value>>,
}

impl Adjoints {
    /// Adjoint of a node, if any gradient reached it.
    pub fn get(&self, id: NodeId) -> Option<&Value> {
        self.inner[id.0].as_ref()
    }
}

/// The recording tape. Build a fresh one per evaluated graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Number of usable half-spectrum bins of a length-`n` real signal with the
/// Nyquist bin excluded.
pub fn usable_modes(n: usize) -> usize {
    n.div_ceil(2)
}

fn gelu_scalar(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + 0.044715 * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_grad_scalar(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    let u = c * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * c * (1.0 + 3.0 * 0.044715 * x * x)
}

fn smooth_l1_term(d: f64, delta: f64) -> f64 {
    if d.abs() < delta {
        0.5 * d * d / delta
    } else {
        d.abs() - 0.5 * delta
    }
}

fn smooth_l1_grad(d: f64, delta: f64) -> f64 {
    if d.abs() < delta {
        d / delta
    } else if d > 0.0 {
        1.0
    } else {
        -1.0
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

    pub fn value(&self, id: NodeId) -> &Value {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op, value: Value) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn input_scalar(&mut self, v: f64) -> NodeId {
        self.push(Op::Input, Value::Scalar(v))
    }

    pub fn input_vec(&mut self, v: Array1<f64>) -> NodeId {
        self.push(Op::Input, Value::Vec1(v))
    }

    pub fn input_mat(&mut self, v: Array2<f64>) -> NodeId {
        self.push(Op::Input, Value::Mat(v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = match (self.value(a), self.value(b)) {
            (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(x + y),
            (Value::Vec1(x), Value::Vec1(y)) => {
                assert_eq!(x.len(), y.len(), "add: vector lengths differ");
                let mut out = Array1::zeros(x.len());
                for i in 0..x.len() {
                    out[i] = x[i] + y[i];
                }
                Value::Vec1(out)
            }
            (Value::Mat(x), Value::Mat(y)) => {
                assert_eq!(x.dim(), y.dim(), "add: matrix shapes differ");
                let mut out = Array2::zeros(x.dim());
                for i in 0..x.nrows() {
                    for j in 0..x.ncols() {
                        out[[i, j]] = x[[i, j]] + y[[i, j]];
                    }
                }
                Value::Mat(out)
            }
            (x, y) => panic!("add: incompatible values {} and {}", x.kind(), y.kind()),
        };
        self.push(Op::Add(a, b), value)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let value = match (self.value(a), self.value(b)) {
            (Value::Scalar(x), Value::Scalar(y)) => Value::Scalar(x - y),
            (Value::Vec1(x), Value::Vec1(y)) => {
                assert_eq!(x.len(), y.len(), "sub: vector lengths differ");
                let mut out = Array1::zeros(x.len());
                for i in 0..x.len() {
                    out[i] = x[i] - y[i];
                }
                Value::Vec1(out)
            }
            (x, y) => panic!("sub: incompatible values {} and {}", x.kind(), y.kind()),
        };
        self.push(Op::Sub(a, b), value)
    }

    pub fn scale(&mut self, a: NodeId, k: f64) -> NodeId {
        let value = match self.value(a) {
            Value::Scalar(x) => Value::Scalar(x * k),
            Value::Vec1(x) => {
                let mut out = Array1::zeros(x.len());
                for i in 0..x.len() {
                    out[i] = x[i] * k;
                }
                Value::Vec1(out)
            }
            Value::Mat(x) => {
                let mut out = Array2::zeros(x.dim());
                for i in 0..x.nrows() {
                    for j in 0..x.ncols() {
                        out[[i, j]] = x[[i, j]] * k;
                    }
                }
                Value::Mat(out)
            }
        };
        self.push(Op::Scale(a, k), value)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (self.value(a).as_vec(), self.value(b).as_vec());
        assert_eq!(x.len(), y.len(), "mul: vector lengths differ");
        let mut out = Array1::zeros(x.len());
        for i in 0..x.len() {
            out[i] = x[i] * y[i];
        }
        self.push(Op::Mul(a, b), Value::Vec1(out))
    }

    pub fn mat_vec(&mut self, m: Arc<Array2<f64>>, x: NodeId) -> NodeId {
        let v = self.value(x).as_vec();
        assert_eq!(m.ncols(), v.len(), "mat_vec: dimension mismatch");
        let out = linalg::mat_vec(&m, v);
        self.push(Op::MatVec(m, x), Value::Vec1(out))
    }

    pub fn mat_t_vec(&mut self, m: Arc<Array2<f64>>, x: NodeId) -> NodeId {
        let v = self.value(x).as_vec();
        assert_eq!(m.nrows(), v.len(), "mat_t_vec: dimension mismatch");
        let out = linalg::mat_t_vec(&m, v);
        self.push(Op::MatTVec(m, x), Value::Vec1(out))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (x, y) = (self.value(a).as_vec(), self.value(b).as_vec());
        assert_eq!(x.len(), y.len(), "dot: vector lengths differ");
        let out = linalg::dot(x, y);
        self.push(Op::Dot(a, b), Value::Scalar(out))
    }

    /// Mean smooth-L1 (Huber) distance between `pred` and a constant target:
    /// `(1/m)·Σ φ(p_i − t_i)` with `φ(d) = d²/(2δ)` for `|d| < δ`, else
    /// `|d| − δ/2`.
    pub fn smooth_l1(&mut self, pred: NodeId, target: Arc<Array1<f64>>, delta: f64) -> NodeId {
        let p = self.value(pred).as_vec();
        assert_eq!(p.len(), target.len(), "smooth_l1: length mismatch");
        assert!(delta > 0.0, "smooth_l1: delta must be positive");
        let mut acc = 0.0;
        for i in 0..p.len() {
            acc += smooth_l1_term(p[i] - target[i], delta);
        }
        let value = acc / p.len() as f64;
        self.push(
            Op::SmoothL1 {
                pred,
                target,
                delta,
            },
            Value::Scalar(value),
        )
    }

    /// Stack vector nodes of equal length into a (channels × n) matrix.
    pub fn row_stack(&mut self, rows: Vec<NodeId>) -> NodeId {
        assert!(!rows.is_empty(), "row_stack: no rows");
        let n = self.value(rows[0]).as_vec().len();
        let mut out = Array2::zeros((rows.len(), n));
        for (r, id) in rows.iter().enumerate() {
            let v = self.value(*id).as_vec();
            assert_eq!(v.len(), n, "row_stack: row {r} has a different length");
            for j in 0..n {
                out[[r, j]] = v[j];
            }
        }
        self.push(Op::RowStack(rows), Value::Mat(out))
    }

    /// Extract one row of a matrix node as a vector.
    pub fn row_slice(&mut self, m: NodeId, row: usize) -> NodeId {
        let mat = self.value(m).as_mat();
        assert!(row < mat.nrows(), "row_slice: row {row} out of bounds");
        let mut out = Array1::zeros(mat.ncols());
        for j in 0..mat.ncols() {
            out[j] = mat[[row, j]];
        }
        self.push(Op::RowSlice(m, row), Value::Vec1(out))
    }

    /// Channel-mixing dense layer: `y = W·x (+ b per output channel)`, with
    /// `W` (out × in) and `x` (in × n) both nodes.
    pub fn dense(&mut self, w: NodeId, b: Option<NodeId>, x: NodeId) -> NodeId {
        let wm = self.value(w).as_mat();
        let xm = self.value(x).as_mat();
        assert_eq!(wm.ncols(), xm.nrows(), "dense: channel mismatch");
        let (out_ch, n) = (wm.nrows(), xm.ncols());
        let mut out = Array2::zeros((out_ch, n));
        for o in 0..out_ch {
            for j in 0..n {
                let mut acc = 0.0;
                for i in 0..wm.ncols() {
                    acc += wm[[o, i]] * xm[[i, j]];
                }
                out[[o, j]] = acc;
            }
        }
        if let Some(bid) = b {
            let bv = self.value(bid).as_vec();
            assert_eq!(bv.len(), out_ch, "dense: bias length mismatch");
            for o in 0..out_ch {
                for j in 0..n {
                    out[[o, j]] += bv[o];
                }
            }
        }
        self.push(Op::Dense { w, b, x }, Value::Mat(out))
    }

    /// Spectral convolution: transform each input-channel row, mix channels
    /// per retained frequency with complex weights, inverse-transform.
    ///
    /// `w` is a matrix node of shape (out × in·modes·2); entry
    /// `w[o, (i·modes + k)·2 + p]` is the real (`p = 0`) or imaginary
    /// (`p = 1`) part of the weight coupling input channel `i` to output
    /// channel `o` at frequency `k`. Only `min(modes, usable_modes(n))` bins
    /// participate, so the same weights serve any resolution.
    pub fn spectral_conv(&mut self, w: NodeId, x: NodeId, modes: usize) -> NodeId {
        let wm = self.value(w).as_mat();
        let xm = self.value(x).as_mat();
        let (in_ch, n) = (xm.nrows(), xm.ncols());
        let out_ch = wm.nrows();
        assert_eq!(
            wm.ncols(),
            in_ch * modes * 2,
            "spectral_conv: weight layout mismatch"
        );
        assert!(modes >= 1, "spectral_conv: needs at least one mode");
        let used = modes.min(usable_modes(n));

        let spectra: Vec<Vec<Cf64>> = (0..in_ch)
            .map(|i| {
                let row: Vec<f64> = (0..n).map(|j| xm[[i, j]]).collect();
                rfft(&row, used)
            })
            .collect();
        let mut out = Array2::zeros((out_ch, n));
        for o in 0..out_ch {
            let mut mixed = vec![Cf64::default(); used];
            for (i, spec) in spectra.iter().enumerate() {
                for k in 0..used {
                    let base = (i * modes + k) * 2;
                    let wk = Cf64::new(wm[[o, base]], wm[[o, base + 1]]);
                    mixed[k].add_assign(wk.mul(spec[k]));
                }
            }
            let y = irfft_trunc(&mixed, n);
            for j in 0..n {
                out[[o, j]] = y[j];
            }
        }
        self.push(Op::Spectral { w, x, modes }, Value::Mat(out))
    }

    /// Elementwise GeLU (tanh form) on a matrix node.
    pub fn gelu(&mut self, x: NodeId) -> NodeId {
        let xm = self.value(x).as_mat();
        let mut out = Array2::zeros(xm.dim());
        for i in 0..xm.nrows() {
            for j in 0..xm.ncols() {
                out[[i, j]] = gelu_scalar(xm[[i, j]]);
            }
        }
        self.push(Op::Gelu(x), Value::Mat(out))
    }

    /// Reverse pass from a scalar node; returns per-node adjoints.
    pub fn backward(&self, seed: NodeId) -> Adjoints {
        assert!(
            matches!(self.value(seed), Value::Scalar(_)),
            "backward: seed must be a scalar node"
        );
        let mut adj: Vec<Option<Value>> = vec![None; self.nodes.len()];
        adj[seed.0] = Some(Value::Scalar(1.0));

        for idx in (0..self.nodes.len()).rev() {
            let Some(grad) = adj[idx].clone() else {
                continue;
            };
            match &self.nodes[idx].op {
                Op::Input => {}
                Op::Add(a, b) => {
                    self.accumulate(&mut adj, *a, grad.clone());
                    self.accumulate(&mut adj, *b, grad);
                }
                Op::Sub(a, b) => {
                    self.accumulate(&mut adj, *a, grad.clone());
                    self.accumulate(&mut adj, *b, negate(&grad));
                }
                Op::Scale(a, k) => {
                    self.accumulate(&mut adj, *a, scale_value(&grad, *k));
                }
                Op::Mul(a, b) => {
                    let g = grad.as_vec();
                    let av = self.value(*a).as_vec();
                    let bv = self.value(*b).as_vec();
                    let mut da = Array1::zeros(g.len());
                    let mut db = Array1::zeros(g.len());
                    for i in 0..g.len() {
                        da[i] = g[i] * bv[i];
                        db[i] = g[i] * av[i];
                    }
                    self.accumulate(&mut adj, *a, Value::Vec1(da));
                    self.accumulate(&mut adj, *b, Value::Vec1(db));
                }
                Op::MatVec(m, x) => {
                    let g = grad.as_vec();
                    self.accumulate(&mut adj, *x, Value::Vec1(linalg::mat_t_vec(m, g)));
                }
                Op::MatTVec(m, x) => {
                    let g = grad.as_vec();
                    self.accumulate(&mut adj, *x, Value::Vec1(linalg::mat_vec(m, g)));
                }
                Op::Dot(a, b) => {
                    let g = grad.as_scalar();
                    let av = self.value(*a).as_vec();
                    let bv = self.value(*b).as_vec();
                    self.accumulate(&mut adj, *a, Value::Vec1(bv.mapv(|v| v * g)));
                    self.accumulate(&mut adj, *b, Value::Vec1(av.mapv(|v| v * g)));
                }
                Op::SmoothL1 {
                    pred,
                    target,
                    delta,
                } => {
                    let g = grad.as_scalar();
                    let p = self.value(*pred).as_vec();
                    let scale = g / p.len() as f64;
                    let mut dp = Array1::zeros(p.len());
                    for i in 0..p.len() {
                        dp[i] = scale * smooth_l1_grad(p[i] - target[i], *delta);
                    }
                    self.accumulate(&mut adj, *pred, Value::Vec1(dp));
                }
                Op::RowStack(rows) => {
                    let g = grad.as_mat();
                    for (r, id) in rows.iter().enumerate() {
                        let mut dr = Array1::zeros(g.ncols());
                        for j in 0..g.ncols() {
                            dr[j] = g[[r, j]];
                        }
                        self.accumulate(&mut adj, *id, Value::Vec1(dr));
                    }
                }
                Op::RowSlice(m, row) => {
                    let g = grad.as_vec();
                    let src = self.value(*m).as_mat();
                    let mut dm = Array2::zeros(src.dim());
                    for j in 0..g.len() {
                        dm[[*row, j]] = g[j];
                    }
                    self.accumulate(&mut adj, *m, Value::Mat(dm));
                }
                Op::Dense { w, b, x } => {
                    let g = grad.as_mat();
                    let wm = self.value(*w).as_mat();
                    let xm = self.value(*x).as_mat();
                    let (out_ch, n) = g.dim();
                    let in_ch = xm.nrows();
                    let mut dw = Array2::zeros((out_ch, in_ch));
                    for o in 0..out_ch {
                        for i in 0..in_ch {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[[o, j]] * xm[[i, j]];
                            }
                            dw[[o, i]] = acc;
                        }
                    }
                    self.accumulate(&mut adj, *w, Value::Mat(dw));
                    if let Some(bid) = b {
                        let mut db = Array1::zeros(out_ch);
                        for o in 0..out_ch {
                            let mut acc = 0.0;
                            for j in 0..n {
                                acc += g[[o, j]];
                            }
                            db[o] = acc;
                        }
                        self.accumulate(&mut adj, *bid, Value::Vec1(db));
                    }
                    let mut dx = Array2::zeros((in_ch, n));
                    for i in 0..in_ch {
                        for j in 0..n {
                            let mut acc = 0.0;
                            for o in 0..out_ch {
                                acc += wm[[o, i]] * g[[o, j]];
                            }
                            dx[[i, j]] = acc;
                        }
                    }
                    self.accumulate(&mut adj, *x, Value::Mat(dx));
                }
                Op::Spectral { w, x, modes } => {
                    let modes = *modes;
                    let g = grad.as_mat();
                    let wm = self.value(*w).as_mat();
                    let xm = self.value(*x).as_mat();
                    let (in_ch, n) = xm.dim();
                    let out_ch = wm.nrows();
                    let used = modes.min(usable_modes(n));
                    // Recompute the input spectra (cheaper than caching them
                    // on the tape).
                    let spectra: Vec<Vec<Cf64>> = (0..in_ch)
                        .map(|i| {
                            let row: Vec<f64> = (0..n).map(|j| xm[[i, j]]).collect();
                            rfft(&row, used)
                        })
                        .collect();
                    let out_spec: Vec<Vec<Cf64>> = (0..out_ch)
                        .map(|o| {
                            let row: Vec<f64> = (0..n).map(|j| g[[o, j]]).collect();
                            adj_irfft(&row, used)
                        })
                        .collect();
                    let mut dw = Array2::zeros(wm.dim());
                    let mut dx_spec = vec![vec![Cf64::default(); used]; in_ch];
                    for o in 0..out_ch {
                        for i in 0..in_ch {
                            for k in 0..used {
                                let base = (i * modes + k) * 2;
                                let go = out_spec[o][k];
                                // Weight gradient: ḡ·conj(x̂).
                                let dwk = go.mul(spectra[i][k].conj());
                                dw[[o, base]] += dwk.re;
                                dw[[o, base + 1]] += dwk.im;
                                // Input-spectrum gradient: conj(W)·ḡ.
                                let wk = Cf64::new(wm[[o, base]], wm[[o, base + 1]]);
                                dx_spec[i][k].add_assign(wk.conj().mul(go));
                            }
                        }
                    }
                    self.accumulate(&mut adj, *w, Value::Mat(dw));
                    let mut dx = Array2::zeros((in_ch, n));
                    for (i, spec) in dx_spec.iter().enumerate() {
                        let row = adj_rfft(spec, n);
                        for j in 0..n {
                            dx[[i, j]] = row[j];
                        }
                    }
                    self.accumulate(&mut adj, *x, Value::Mat(dx));
                }
                Op::Gelu(x) => {
                    let g = grad.as_mat();
                    let xm = self.value(*x).as_mat();
                    let mut dx = Array2::zeros(xm.dim());
                    for i in 0..xm.nrows() {
                        for j in 0..xm.ncols() {
                            dx[[i, j]] = g[[i, j]] * gelu_grad_scalar(xm[[i, j]]);
                        }
                    }
                    self.accumulate(&mut adj, *x, Value::Mat(dx));
                }
            }
        }
        Adjoints { inner: adj }
    }

    fn accumulate(&self, adj: &mut [Option<Value>], id: NodeId, delta: Value) {
        match &mut adj[id.0] {
            Some(existing) => existing.add_in_place(&delta),
            slot @ None => {
                let mut zero = self.nodes[id.0].value.zeros_like();
                zero.add_in_place(&delta);
                *slot = Some(zero);
            }
        }
    }
}

fn negate(v: &Value) -> Value {
    scale_value(v, -1.0)
}

fn scale_value(v: &Value, k: f64) -> Value {
    match v {
        Value::Scalar(x) => Value::Scalar(x * k),
        Value::Vec1(x) => Value::Vec1(x.mapv(|e| e * k)),
        Value::Mat(x) => Value::Mat(x.mapv(|e| e * k)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
        Array1::from((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>())
    }

    fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Array2<f64> {
        Array2::from_shape_fn((r, c), |_| rng.gen_range(-1.0..1.0))
    }

    /// Central-difference check of `d loss/d input` for a scalar-output graph
    /// rebuilt from scratch at perturbed inputs.
    fn check_gradient<F>(build: F, input: &Array1<f64>, tol: f64)
    where
        F: Fn(&mut Tape, Array1<f64>) -> (NodeId, NodeId),
    {
        let mut tape = Tape::new();
        let (in_id, out_id) = build(&mut tape, input.clone());
        let adj = tape.backward(out_id);
        let grad = adj.get(in_id).expect("input should receive a gradient");
        let grad = grad.as_vec().clone();

        let h = 1e-6;
        let mut err2 = 0.0;
        let mut norm2 = 0.0;
        for i in 0..input.len() {
            let mut plus = input.clone();
            plus[i] += h;
            let mut minus = input.clone();
            minus[i] -= h;
            let mut tp = Tape::new();
            let (_, op) = build(&mut tp, plus);
            let mut tm = Tape::new();
            let (_, om) = build(&mut tm, minus);
            let fd = (tp.value(op).as_scalar() - tm.value(om).as_scalar()) / (2.0 * h);
            err2 += (fd - grad[i]).powi(2);
            norm2 += grad[i].powi(2);
        }
        let rel = (err2 / norm2.max(1e-300)).sqrt();
        assert!(rel < tol, "finite-difference mismatch: rel {rel:.3e}");
    }

    #[test]
    fn elementwise_and_matvec_gradients_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m: Arc<Array2<f64>> = Arc::new(rand_mat(&mut rng, 7, 5));
        let s = Arc::new(rand_vec(&mut rng, 7));
        let x0 = rand_vec(&mut rng, 5);
        let m2 = Arc::clone(&m);
        let s2 = Arc::clone(&s);
        check_gradient(
            move |tape, x| {
                // loss = ‖(Mx − s)‖² + 3·(x∘x)·x  (mixes every vector op)
                let xid = tape.input_vec(x);
                let mx = tape.mat_vec(Arc::clone(&m2), xid);
                let sid = tape.input_vec((*s2).clone());
                let r = tape.sub(mx, sid);
                let quad = tape.dot(r, r);
                let xx = tape.mul(xid, xid);
                let cubic = tape.dot(xx, xid);
                let cubic3 = tape.scale(cubic, 3.0);
                let out = tape.add(quad, cubic3);
                (xid, out)
            },
            &x0,
            1e-6,
        );
    }

    #[test]
    fn mat_t_vec_gradient_matches_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m: Arc<Array2<f64>> = Arc::new(rand_mat(&mut rng, 6, 4));
        let x0 = rand_vec(&mut rng, 6);
        check_gradient(
            move |tape, x| {
                let xid = tape.input_vec(x);
                let y = tape.mat_t_vec(Arc::clone(&m), xid);
                let out = tape.dot(y, y);
                (xid, out)
            },
            &x0,
            1e-6,
        );
    }

    #[test]
    fn smooth_l1_gradient_matches_fd_in_both_regimes() {
        // Mix residuals inside and outside the quadratic zone.
        let target = Arc::new(Array1::from(vec![0.0, 0.0, 0.0, 0.0]));
        let x0 = Array1::from(vec![0.3, -0.2, 2.5, -4.0]);
        let t2 = Arc::clone(&target);
        check_gradient(
            move |tape, x| {
                let xid = tape.input_vec(x);
                let out = tape.smooth_l1(xid, Arc::clone(&t2), 1.0);
                (xid, out)
            },
            &x0,
            1e-6,
        );
    }

    #[test]
    fn row_stack_routes_gradients_to_each_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a0 = rand_vec(&mut rng, 5);
        let b = rand_vec(&mut rng, 5);
        let b2 = b.clone();
        // loss = ‖GeLU(stack(a, b))‖² summed over both rows; check d/d a.
        check_gradient(
            move |tape, a| {
                let aid = tape.input_vec(a);
                let bid = tape.input_vec(b2.clone());
                let m = tape.row_stack(vec![aid, bid]);
                let g = tape.gelu(m);
                let r0 = tape.row_slice(g, 0);
                let r1 = tape.row_slice(g, 1);
                let d0 = tape.dot(r0, r0);
                let d1 = tape.dot(r1, r1);
                let out = tape.add(d0, d1);
                (aid, out)
            },
            &a0,
            1e-5,
        );
    }

    #[test]
    fn dense_layer_gradients_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (out_ch, in_ch, n) = (3, 2, 6);
        let x = rand_mat(&mut rng, in_ch, n);
        let b = rand_vec(&mut rng, out_ch);
        let w0 = rand_mat(&mut rng, out_ch, in_ch);

        // Compare matrix-input adjoints against FD on every entry of W, b,
        // and x, through a graph that also exercises GeLU and RowSlice.
        let mut tape = Tape::new();
        let wid = tape.input_mat(w0.clone());
        let bid = tape.input_vec(b.clone());
        let xid = tape.input_mat(x.clone());
        let y = tape.dense(wid, Some(bid), xid);
        let g = tape.gelu(y);
        let row = tape.row_slice(g, 1);
        let out = tape.dot(row, row);
        let adj = tape.backward(out);

        let eval = |w: &Array2<f64>, b: &Array1<f64>, x: &Array2<f64>| -> f64 {
            let mut t = Tape::new();
            let wid = t.input_mat(w.clone());
            let bid = t.input_vec(b.clone());
            let xid = t.input_mat(x.clone());
            let y = t.dense(wid, Some(bid), xid);
            let g = t.gelu(y);
            let row = t.row_slice(g, 1);
            let out = t.dot(row, row);
            t.value(out).as_scalar()
        };
        let h = 1e-6;
        let dw = adj.get(wid).unwrap().as_mat();
        for o in 0..out_ch {
            for i in 0..in_ch {
                let mut wp = w0.clone();
                wp[[o, i]] += h;
                let mut wm = w0.clone();
                wm[[o, i]] -= h;
                let fd = (eval(&wp, &b, &x) - eval(&wm, &b, &x)) / (2.0 * h);
                assert_abs_diff_eq!(dw[[o, i]], fd, epsilon = 1e-6);
            }
        }
        let db = adj.get(bid).unwrap().as_vec();
        for o in 0..out_ch {
            let mut bp = b.clone();
            bp[o] += h;
            let mut bm = b.clone();
            bm[o] -= h;
            let fd = (eval(&w0, &bp, &x) - eval(&w0, &bm, &x)) / (2.0 * h);
            assert_abs_diff_eq!(db[o], fd, epsilon = 1e-6);
        }
        let dx = adj.get(xid).unwrap().as_mat();
        for i in 0..in_ch {
            for j in 0..n {
                let mut xp = x.clone();
                xp[[i, j]] += h;
                let mut xm = x.clone();
                xm[[i, j]] -= h;
                let fd = (eval(&w0, &b, &xp) - eval(&w0, &b, &xm)) / (2.0 * h);
                assert_abs_diff_eq!(dx[[i, j]], fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn spectral_layer_gradients_match_fd() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (out_ch, in_ch, n, modes) = (2usize, 2usize, 8usize, 3usize);
        let x0 = rand_mat(&mut rng, in_ch, n);
        let w0 = rand_mat(&mut rng, out_ch, in_ch * modes * 2);

        let eval = |w: &Array2<f64>, x: &Array2<f64>| -> (f64, Option<(Adjoints, NodeId, NodeId)>) {
            let mut t = Tape::new();
            let wid = t.input_mat(w.clone());
            let xid = t.input_mat(x.clone());
            let y = t.spectral_conv(wid, xid, modes);
            let r0 = t.row_slice(y, 0);
            let r1 = t.row_slice(y, 1);
            let d0 = t.dot(r0, r0);
            let d1 = t.dot(r1, r1);
            let out = t.add(d0, d1);
            let v = t.value(out).as_scalar();
            (v, Some((t.backward(out), wid, xid)))
        };
        let (_, back) = eval(&w0, &x0);
        let (adj, wid, xid) = back.unwrap();
        let h = 1e-6;

        let dw = adj.get(wid).unwrap().as_mat();
        for o in 0..out_ch {
            for c in 0..in_ch * modes * 2 {
                let mut wp = w0.clone();
                wp[[o, c]] += h;
                let mut wm = w0.clone();
                wm[[o, c]] -= h;
                let fd = (eval(&wp, &x0).0 - eval(&wm, &x0).0) / (2.0 * h);
                assert_abs_diff_eq!(dw[[o, c]], fd, epsilon = 1e-5);
            }
        }
        let dx = adj.get(xid).unwrap().as_mat();
        for i in 0..in_ch {
            for j in 0..n {
                let mut xp = x0.clone();
                xp[[i, j]] += h;
                let mut xm = x0.clone();
                xm[[i, j]] -= h;
                let fd = (eval(&w0, &xp).0 - eval(&w0, &xm).0) / (2.0 * h);
                assert_abs_diff_eq!(dx[[i, j]], fd, epsilon = 1e-5);
            }
        }
    }

    #[test]
    fn spectral_conv_is_linear_in_its_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (in_ch, n, modes) = (2usize, 16usize, 5usize);
        let w = rand_mat(&mut rng, 2, in_ch * modes * 2);
        let xa = rand_mat(&mut rng, in_ch, n);
        let xb = rand_mat(&mut rng, in_ch, n);

        let apply = |x: &Array2<f64>| -> Array2<f64> {
            let mut t = Tape::new();
            let wid = t.input_mat(w.clone());
            let xid = t.input_mat(x.clone());
            let y = t.spectral_conv(wid, xid, modes);
            t.value(y).as_mat().clone()
        };
        let ya = apply(&xa);
        let yb = apply(&xb);
        let combo = apply(&(&xa * 2.0 + &xb * -0.5));
        for i in 0..2 {
            for j in 0..n {
                assert_abs_diff_eq!(
                    combo[[i, j]],
                    2.0 * ya[[i, j]] - 0.5 * yb[[i, j]],
                    epsilon = 1e-10
                );
            }
        }
    }

    #[test]
    fn single_mode_conv_projects_onto_dc() {
        // With one retained mode, one channel, and weight 1+0i, the layer is
        // exactly the mean projector.
        let n = 12;
        let x = Array2::from_shape_fn((1, n), |(_, j)| (j as f64 * 0.7).sin() + 0.25);
        let mut w = Array2::zeros((1, 2));
        w[[0, 0]] = 1.0;
        let mut t = Tape::new();
        let wid = t.input_mat(w);
        let xid = t.input_mat(x.clone());
        let y = t.spectral_conv(wid, xid, 1);
        let ym = t.value(y).as_mat();
        let mean = x.row(0).sum() / n as f64;
        for j in 0..n {
            assert_abs_diff_eq!(ym[[0, j]], mean, epsilon = 1e-12);
        }
    }

    #[test]
    fn identity_step_reproduces_manual_arithmetic_bitwise() {
        // θ' = θ − η·g built on the tape must equal the same update computed
        // directly with the shared kernels, bit for bit.
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m: Arc<Array2<f64>> = Arc::new(rand_mat(&mut rng, 9, 5));
        let theta0 = rand_vec(&mut rng, 5);
        let eta = 0.217;

        let mut t = Tape::new();
        let theta = t.input_vec(theta0.clone());
        let mv = t.mat_vec(Arc::clone(&m), theta);
        let g = t.mat_t_vec(Arc::clone(&m), mv);
        let step = t.scale(g, eta);
        let next = t.sub(theta, step);
        let tape_result = t.value(next).as_vec().clone();

        let manual_g = linalg::mat_t_vec(&m, &linalg::mat_vec(&m, &theta0));
        let mut manual = theta0.clone();
        for i in 0..manual.len() {
            manual[i] -= manual_g[i] * eta;
        }
        for i in 0..manual.len() {
            assert_eq!(tape_result[i].to_bits(), manual[i].to_bits());
        }
    }

    #[test]
    fn gelu_matches_reference_values() {
        // Spot values of the tanh-form GeLU.
        assert_abs_diff_eq!(gelu_scalar(0.0), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(gelu_scalar(10.0), 10.0, epsilon = 1e-6);
        assert_abs_diff_eq!(gelu_scalar(-10.0), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(gelu_scalar(1.0), 0.841_192, epsilon = 1e-6);
        // Derivative against FD.
        for &x in &[-2.0, -0.5, 0.0, 0.3, 1.7] {
            let h = 1e-6;
            let fd = (gelu_scalar(x + h) - gelu_scalar(x - h)) / (2.0 * h);
            assert_abs_diff_eq!(gelu_grad_scalar(x), fd, epsilon = 1e-8);
        }
    }
}
