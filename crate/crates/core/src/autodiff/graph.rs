use std::collections::{HashMap, HashSet};

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::gemm;
use super::Tensor;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("backward root must be a 1x1 scalar, got {rows}x{cols}")]
    NonScalarRoot { rows: usize, cols: usize },
    #[error("standard deviation must be strictly positive (got {0})")]
    NonPositiveSigma(f64),
}

pub type Result<T> = std::result::Result<T, GraphError>;

/// Handle to a node recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    /// Position on the tape; indexes [`Graph::backward_full`] results.
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param,
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    Concat(Vec<Var>),
    Slice { x: Var, start: usize },
    Pick { x: Var, idx: Vec<usize> },
    ScaleRows { x: Var, s: Var },
    Gru(Box<GruSaved>),
}

#[derive(Debug)]
struct GruSaved {
    x: Var,
    h: Var,
    w: Var,
    u: Var,
    b: Var,
    z: Vec<f64>,
    r: Vec<f64>,
    n: Vec<f64>,
    hn: Vec<f64>,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Tape recording one forward computation for reverse-mode differentiation.
///
/// Parameters are read from a borrowed [`ParamStore`]; each parameter is
/// copied onto the tape at most once, so a recurrent cell unrolled over
/// many steps shares a single leaf. Frozen parameters enter as constants.
pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    frozen: HashSet<ParamId>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self {
            store,
            nodes: Vec::with_capacity(256),
            params: HashMap::new(),
            frozen: HashSet::new(),
        }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    /// Parameters in `ids` are loaded without gradient tracking from now on.
    pub fn freeze(&mut self, ids: impl IntoIterator<Item = ParamId>) {
        self.frozen.extend(ids);
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

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, name: &'static str) -> Result<Var> {
        if !value.is_finite() {
            log::error!("non-finite output from {name} (node {})", self.nodes.len());
            return Err(GraphError::NonFinite { op: name });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input (no gradient).
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, false, "constant")
    }

    /// Differentiable leaf that is not a stored parameter; its gradient is
    /// available through [`Graph::backward_full`].
    pub fn variable(&mut self, value: Tensor) -> Result<Var> {
        self.push(value, Op::Leaf, true, "variable")
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let value = self.store.get(id).clone();
        let tracked = !self.frozen.contains(&id);
        self.nodes.push(Node {
            value,
            op: Op::Param,
            requires_grad: tracked,
        });
        let v = Var(self.nodes.len() - 1);
        self.params.insert(id, v);
        v
    }

    /// Copy of `v` cut off from the tape.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let value = self.value(v).clone();
        self.constant(value)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(GraphError::Shape {
                op,
                detail: format!("{}x{} vs {}x{}", sa.0, sa.1, sb.0, sb.1),
            });
        }
        Ok(())
    }

    /// `x W^T + b` with `W` stored `out x in`, `b` `1 x out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (bsz, inp) = self.shape(x);
        let (out, win) = self.shape(w);
        if inp != win {
            return Err(GraphError::Shape {
                op: "linear",
                detail: format!("input width {inp} vs weight {out}x{win}"),
            });
        }
        if let Some(b) = b {
            if self.shape(b) != (1, out) {
                let s = self.shape(b);
                return Err(GraphError::Shape {
                    op: "linear",
                    detail: format!("bias {}x{} vs out {out}", s.0, s.1),
                });
            }
        }
        let mut y = Tensor::zeros(bsz, out);
        gemm(
            bsz,
            inp,
            out,
            self.value(x).data(),
            inp as isize,
            1,
            self.value(w).data(),
            1,
            inp as isize,
            0.0,
            y.data_mut(),
            out as isize,
        );
        if let Some(b) = b {
            let bias = self.value(b).data();
            for row in y.data_mut().chunks_exact_mut(out) {
                for (o, bv) in row.iter_mut().zip(bias) {
                    *o += bv;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        self.push(y, Op::Linear { x, w, b }, rg, "linear")
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(name, a, b)?;
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::from_vec(r, c, data), op, rg, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_with(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    fn map(&mut self, a: Var, op: Op, name: &'static str, f: impl Fn(f64) -> f64) -> Result<Var> {
        let (r, c) = self.shape(a);
        let data = self.value(a).data().iter().map(|&x| f(x)).collect();
        let rg = self.rg(a);
        self.push(Tensor::from_vec(r, c, data), op, rg, name)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Result<Var> {
        self.map(a, Op::Scale(a, k), "scale", |x| k * x)
    }

    /// `a + k` elementwise.
    pub fn offset(&mut self, a: Var, k: f64) -> Result<Var> {
        self.map(a, Op::Offset(a), "offset", |x| x + k)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Relu(a), "relu", |x| x.max(0.0))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Sigmoid(a), "sigmoid", sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Tanh(a), "tanh", f64::tanh)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Exp(a), "exp", f64::exp)
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Log(a), "log", f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.map(a, Op::Square(a), "square", |x| x * x)
    }

    /// Row-wise softmax (max-subtracted).
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_exact_mut(c.max(1)) {
            softmax_in_place(row);
        }
        let rg = self.rg(a);
        debug_assert_eq!(out.rows(), r);
        self.push(out, Op::Softmax(a), rg, "softmax")
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let c = self.cols_of(a);
        let mut out = self.value(a).clone();
        for row in out.data_mut().chunks_exact_mut(c.max(1)) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for v in row.iter_mut() {
                *v -= lse;
            }
        }
        let rg = self.rg(a);
        self.push(out, Op::LogSoftmax(a), rg, "log_softmax")
    }

    fn cols_of(&self, a: Var) -> usize {
        self.shape(a).1
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let s = t.data().iter().sum::<f64>() / t.len().max(1) as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg, "mean")
    }

    /// Sum across columns: `B x C -> B x 1`.
    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        let data = self
            .value(a)
            .data()
            .chunks_exact(c.max(1))
            .map(|row| row.iter().sum())
            .collect();
        let rg = self.rg(a);
        self.push(Tensor::from_vec(r, 1, data), Op::RowSum(a), rg, "row_sum")
    }

    /// Column-wise concatenation of tensors with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.shape(p).0);
        let mut cols = 0;
        for &p in parts {
            let (r, c) = self.shape(p);
            if r != rows {
                return Err(GraphError::Shape {
                    op: "concat",
                    detail: format!("row counts {rows} vs {r}"),
                });
            }
            cols += c;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(i));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        self.push(Tensor::from_vec(rows, cols, data), Op::Concat(parts.to_vec()), rg, "concat")
    }

    /// Columns `start .. start + len`.
    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.shape(x);
        if start + len > c {
            return Err(GraphError::Shape {
                op: "slice_cols",
                detail: format!("{start}+{len} exceeds {c} columns"),
            });
        }
        let src = self.value(x);
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&src.row(i)[start..start + len]);
        }
        let rg = self.rg(x);
        self.push(Tensor::from_vec(r, len, data), Op::Slice { x, start }, rg, "slice_cols")
    }

    /// Picks column `idx[i]` of row `i`: `B x C -> B x 1`.
    pub fn pick(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.shape(x);
        if idx.len() != r || idx.iter().any(|&j| j >= c) {
            return Err(GraphError::Shape {
                op: "pick",
                detail: format!("{} indices for {r}x{c}", idx.len()),
            });
        }
        let src = self.value(x);
        let data = idx.iter().enumerate().map(|(i, &j)| src.get(i, j)).collect();
        let rg = self.rg(x);
        self.push(Tensor::from_vec(r, 1, data), Op::Pick { x, idx: idx.to_vec() }, rg, "pick")
    }

    /// Multiplies row `i` of `x (B x D)` by `s[i]` where `s` is `B x 1`.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (r, c) = self.shape(x);
        if self.shape(s) != (r, 1) {
            let ss = self.shape(s);
            return Err(GraphError::Shape {
                op: "scale_rows",
                detail: format!("{r}x{c} by {}x{}", ss.0, ss.1),
            });
        }
        let sv = self.value(s).data();
        let mut out = self.value(x).clone();
        for (row, k) in out.data_mut().chunks_exact_mut(c.max(1)).zip(sv) {
            for v in row {
                *v *= k;
            }
        }
        let rg = self.rg(x) || self.rg(s);
        self.push(out, Op::ScaleRows { x, s }, rg, "scale_rows")
    }

    /// One GRU step. `w`: `3H x in`, `u`: `3H x H`, `b`: `1 x 3H`, gate
    /// blocks ordered (update, reset, candidate):
    ///
    /// ```text
    /// z  = sigmoid(W_z x + U_z h + b_z)
    /// r  = sigmoid(W_r x + U_r h + b_r)
    /// n  = tanh(W_n x + r * (U_n h) + b_n)
    /// h' = (1 - z) * n + z * h
    /// ```
    pub fn gru(&mut self, x: Var, h: Var, w: Var, u: Var, b: Var) -> Result<Var> {
        let (bsz, inp) = self.shape(x);
        let (hb, hid) = self.shape(h);
        let three = 3 * hid;
        if hb != bsz || self.shape(w) != (three, inp) || self.shape(u) != (three, hid) || self.shape(b) != (1, three) {
            return Err(GraphError::Shape {
                op: "gru",
                detail: format!(
                    "x {bsz}x{inp}, h {hb}x{hid}, w {:?}, u {:?}, b {:?}",
                    self.shape(w),
                    self.shape(u),
                    self.shape(b)
                ),
            });
        }
        let mut gx = vec![0.0; bsz * three];
        let mut gh = vec![0.0; bsz * three];
        gemm(bsz, inp, three, self.value(x).data(), inp as isize, 1, self.value(w).data(), 1, inp as isize, 0.0, &mut gx, three as isize);
        gemm(bsz, hid, three, self.value(h).data(), hid as isize, 1, self.value(u).data(), 1, hid as isize, 0.0, &mut gh, three as isize);
        let bias = self.value(b).data();
        let hv = self.value(h).data();
        let n_el = bsz * hid;
        let (mut z, mut r, mut n, mut hn) = (vec![0.0; n_el], vec![0.0; n_el], vec![0.0; n_el], vec![0.0; n_el]);
        let mut out = vec![0.0; n_el];
        for i in 0..bsz {
            let gxr = &gx[i * three..(i + 1) * three];
            let ghr = &gh[i * three..(i + 1) * three];
            for j in 0..hid {
                let k = i * hid + j;
                let zz = sigmoid(gxr[j] + ghr[j] + bias[j]);
                let rr = sigmoid(gxr[hid + j] + ghr[hid + j] + bias[hid + j]);
                let hnn = ghr[2 * hid + j];
                let nn = (gxr[2 * hid + j] + rr * hnn + bias[2 * hid + j]).tanh();
                z[k] = zz;
                r[k] = rr;
                n[k] = nn;
                hn[k] = hnn;
                out[k] = (1.0 - zz) * nn + zz * hv[k];
            }
        }
        let rg = self.rg(x) || self.rg(h) || self.rg(w) || self.rg(u) || self.rg(b);
        self.push(
            Tensor::from_vec(bsz, hid, out),
            Op::Gru(Box::new(GruSaved { x, h, w, u, b, z, r, n, hn })),
            rg,
            "gru",
        )
    }

    /// Reverse pass from a scalar root; returns gradients of every tracked
    /// parameter reachable from it.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        let grads = self.backward_full(root)?;
        let mut out = Gradients::new();
        for (&id, &v) in &self.params {
            if let Some(g) = &grads[v.0] {
                let (r, c) = self.shape(v);
                out.insert(id, Tensor::from_vec(r, c, g.clone()));
            }
        }
        Ok(out)
    }

    /// Reverse pass returning the adjoint of every node (`None` where no
    /// gradient reached).
    pub fn backward_full(&self, root: Var) -> Result<Vec<Option<Vec<f64>>>> {
        let (rr, rc) = self.shape(root);
        if (rr, rc) != (1, 1) {
            return Err(GraphError::NonScalarRoot { rows: rr, cols: rc });
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; root.0 + 1];
        if !self.rg(root) {
            return Ok(grads);
        }
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(gy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.backprop_node(node, &gy, &mut grads);
            grads[i] = Some(gy);
        }
        Ok(grads)
    }

    fn acc<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> Option<&'g mut [f64]> {
        if !self.rg(v) {
            return None;
        }
        let len = self.nodes[v.0].value.len();
        Some(grads[v.0].get_or_insert_with(|| vec![0.0; len]).as_mut_slice())
    }

    fn backprop_node(&self, node: &Node, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let y = node.value.data();
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::Linear { x, w, b } => {
                let (bsz, inp) = self.shape(*x);
                let out = self.shape(*w).0;
                if let Some(gx) = self.acc(grads, *x) {
                    gemm(bsz, out, inp, gy, out as isize, 1, self.value(*w).data(), inp as isize, 1, 1.0, gx, inp as isize);
                }
                if let Some(gw) = self.acc(grads, *w) {
                    gemm(out, bsz, inp, gy, 1, out as isize, self.value(*x).data(), inp as isize, 1, 1.0, gw, inp as isize);
                }
                if let Some(b) = b {
                    if let Some(gb) = self.acc(grads, *b) {
                        for row in gy.chunks_exact(out) {
                            for (g, v) in gb.iter_mut().zip(row) {
                                *g += v;
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    if let Some(g) = self.acc(grads, v) {
                        add_into(g, gy);
                    }
                }
            }
            Op::Sub(a, b) => {
                if let Some(g) = self.acc(grads, *a) {
                    add_into(g, gy);
                }
                if let Some(g) = self.acc(grads, *b) {
                    for (g, d) in g.iter_mut().zip(gy) {
                        *g -= d;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                if let Some(g) = self.acc(grads, *a) {
                    for ((g, d), o) in g.iter_mut().zip(gy).zip(bv) {
                        *g += d * o;
                    }
                }
                if let Some(g) = self.acc(grads, *b) {
                    for ((g, d), o) in g.iter_mut().zip(gy).zip(av) {
                        *g += d * o;
                    }
                }
            }
            Op::Scale(a, k) => {
                if let Some(g) = self.acc(grads, *a) {
                    for (g, d) in g.iter_mut().zip(gy) {
                        *g += k * d;
                    }
                }
            }
            Op::Offset(a) => {
                if let Some(g) = self.acc(grads, *a) {
                    add_into(g, gy);
                }
            }
            Op::Relu(a) => {
                let av = self.value(*a).data();
                if let Some(g) = self.acc(grads, *a) {
                    for ((g, d), x) in g.iter_mut().zip(gy).zip(av) {
                        if *x > 0.0 {
                            *g += d;
                        }
                    }
                }
            }
            Op::Sigmoid(a) => {
                if let Some(g) = self.acc(grads, *a) {
                    for ((g, d), s) in g.iter_mut().zip(gy).zip(y) {
                        *g += d * s * (1.0 - s);
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(g) = self.acc(grads, *a) {
                    for ((g, d), t) in g.iter_mut().zip(gy).zip(y) {
                        *g += d * (1.0 - t * t);
                    }
                }
            }
            Op::Exp(a) => {
                if let Some(g) = self.acc(grads, *a) {
                    for ((g, d), e) in g.iter_mut().zip(gy).zip(y) {
                        *g += d * e;
                    }
                }
            }
            Op::Log(a) => {
                let av = self.value(*a).data();
                if let Some(g) = self.acc(grads, *a) {
                    for ((g, d), x) in g.iter_mut().zip(gy).zip(av) {
                        *g += d / x;
                    }
                }
            }
            Op::Square(a) => {
                let av = self.value(*a).data();
                if let Some(g) = self.acc(grads, *a) {
                    for ((g, d), x) in g.iter_mut().zip(gy).zip(av) {
                        *g += 2.0 * d * x;
                    }
                }
            }
            Op::Softmax(a) => {
                let c = node.value.cols().max(1);
                if let Some(g) = self.acc(grads, *a) {
                    for ((g, d), p) in g.chunks_exact_mut(c).zip(gy.chunks_exact(c)).zip(y.chunks_exact(c)) {
                        let dot: f64 = d.iter().zip(p).map(|(d, p)| d * p).sum();
                        for j in 0..c {
                            g[j] += p[j] * (d[j] - dot);
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let c = node.value.cols().max(1);
                if let Some(g) = self.acc(grads, *a) {
                    for ((g, d), l) in g.chunks_exact_mut(c).zip(gy.chunks_exact(c)).zip(y.chunks_exact(c)) {
                        let total: f64 = d.iter().sum();
                        for j in 0..c {
                            g[j] += d[j] - l[j].exp() * total;
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(g) = self.acc(grads, *a) {
                    for v in g {
                        *v += gy[0];
                    }
                }
            }
            Op::Mean(a) => {
                let n = self.value(*a).len().max(1) as f64;
                if let Some(g) = self.acc(grads, *a) {
                    for v in g {
                        *v += gy[0] / n;
                    }
                }
            }
            Op::RowSum(a) => {
                let c = self.shape(*a).1.max(1);
                if let Some(g) = self.acc(grads, *a) {
                    for (row, d) in g.chunks_exact_mut(c).zip(gy) {
                        for v in row {
                            *v += d;
                        }
                    }
                }
            }
            Op::Concat(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let (r, c) = self.shape(p);
                    if let Some(g) = self.acc(grads, p) {
                        for i in 0..r {
                            let src = &gy[i * total + offset..i * total + offset + c];
                            add_into(&mut g[i * c..(i + 1) * c], src);
                        }
                    }
                    offset += c;
                }
            }
            Op::Slice { x, start } => {
                let (r, c) = self.shape(*x);
                let len = node.value.cols();
                if let Some(g) = self.acc(grads, *x) {
                    for i in 0..r {
                        add_into(&mut g[i * c + start..i * c + start + len], &gy[i * len..(i + 1) * len]);
                    }
                }
            }
            Op::Pick { x, idx } => {
                let c = self.shape(*x).1;
                if let Some(g) = self.acc(grads, *x) {
                    for (i, &j) in idx.iter().enumerate() {
                        g[i * c + j] += gy[i];
                    }
                }
            }
            Op::ScaleRows { x, s } => {
                let c = self.shape(*x).1.max(1);
                let (xv, sv) = (self.value(*x).data(), self.value(*s).data());
                if let Some(g) = self.acc(grads, *x) {
                    for ((g, d), k) in g.chunks_exact_mut(c).zip(gy.chunks_exact(c)).zip(sv) {
                        for (g, d) in g.iter_mut().zip(d) {
                            *g += d * k;
                        }
                    }
                }
                if let Some(g) = self.acc(grads, *s) {
                    for ((g, d), xr) in g.iter_mut().zip(gy.chunks_exact(c)).zip(xv.chunks_exact(c)) {
                        *g += d.iter().zip(xr).map(|(d, x)| d * x).sum::<f64>();
                    }
                }
            }
            Op::Gru(saved) => self.backprop_gru(saved, gy, grads),
        }
    }

    fn backprop_gru(&self, s: &GruSaved, gy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (bsz, inp) = self.shape(s.x);
        let hid = self.shape(s.h).1;
        let three = 3 * hid;
        let hv = self.value(s.h).data();
        // Pre-activation adjoints for the input path (dgx) and hidden path (dgh).
        let mut dgx = vec![0.0; bsz * three];
        let mut dgh = vec![0.0; bsz * three];
        let mut dh_direct = vec![0.0; bsz * hid];
        for i in 0..bsz {
            for j in 0..hid {
                let k = i * hid + j;
                let d = gy[k];
                let (z, r, n, hn) = (s.z[k], s.r[k], s.n[k], s.hn[k]);
                dh_direct[k] = d * z;
                let dz = d * (hv[k] - n);
                let dn = d * (1.0 - z);
                let dan = dn * (1.0 - n * n);
                let dr = dan * hn;
                let dar = dr * r * (1.0 - r);
                let daz = dz * z * (1.0 - z);
                let row = i * three;
                dgx[row + j] = daz;
                dgx[row + hid + j] = dar;
                dgx[row + 2 * hid + j] = dan;
                dgh[row + j] = daz;
                dgh[row + hid + j] = dar;
                dgh[row + 2 * hid + j] = dan * r;
            }
        }
        if let Some(g) = self.acc(grads, s.x) {
            gemm(bsz, three, inp, &dgx, three as isize, 1, self.value(s.w).data(), inp as isize, 1, 1.0, g, inp as isize);
        }
        if let Some(g) = self.acc(grads, s.w) {
            gemm(three, bsz, inp, &dgx, 1, three as isize, self.value(s.x).data(), inp as isize, 1, 1.0, g, inp as isize);
        }
        if let Some(g) = self.acc(grads, s.b) {
            for row in dgx.chunks_exact(three) {
                add_into(g, row);
            }
        }
        if let Some(g) = self.acc(grads, s.h) {
            add_into(g, &dh_direct);
            gemm(bsz, three, hid, &dgh, three as isize, 1, self.value(s.u).data(), hid as isize, 1, 1.0, g, hid as isize);
        }
        if let Some(g) = self.acc(grads, s.u) {
            gemm(three, bsz, hid, &dgh, 1, three as isize, hv, hid as isize, 1, 1.0, g, hid as isize);
        }
    }
}

#[inline]
fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-subtracted softmax of a slice, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - m).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}
