//! Reverse-mode differentiation over a linear tape of tensor ops.
//!
//! Values are computed eagerly when an op is recorded. [`Tape::backward`]
//! walks the tape once in reverse and returns gradient buffers for the
//! trainable leaves.

use std::sync::Arc;

use super::loss::weighted_ce;
use crate::tensor::{SparseMatrix, Tensor2};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A loss target: node row, class index, weight.
pub type Target = (usize, usize, f64);

enum Op {
    Leaf,
    MatMul(Var, Var),
    Spmm(Arc<SparseMatrix>, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    /// `e_k = src[i] + dst[j]` for each stored entry `k = (i, j)` of the pattern.
    EdgeScore(Arc<SparseMatrix>, Var, Var),
    /// Softmax of an `nnz x 1` column within each pattern row.
    SegmentSoftmax(Arc<SparseMatrix>, Var),
    /// `out[i] = Σ_k alpha_k z[j_k]` over the entries of row `i`.
    EdgeAggregate(Arc<SparseMatrix>, Var, Var),
    WeightedCe(Var, Arc<Vec<Target>>),
}

struct Node {
    value: Tensor2,
    op: Op,
    needs_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor2, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor2 {
        &self.nodes[v.0].value
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor2) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::MatMul(a, b), g)
    }

    pub fn spmm(&mut self, s: &Arc<SparseMatrix>, x: Var) -> Var {
        let v = s.spmm(self.value(x));
        let g = self.needs(x);
        self.push(v, Op::Spmm(s.clone(), x), g)
    }

    /// Adds a `1 x c` row to every row of `x`.
    pub fn add_bias(&mut self, x: Var, b: Var) -> Var {
        let bias = self.value(b);
        assert_eq!(bias.rows(), 1, "bias must be a single row");
        let mut v = self.value(x).clone();
        let cols = v.cols();
        assert_eq!(bias.cols(), cols, "bias width");
        for row in v.data_mut().chunks_mut(cols.max(1)) {
            for (y, b) in row.iter_mut().zip(bias.data()) {
                *y += b;
            }
        }
        let g = self.needs(x) || self.needs(b);
        self.push(v, Op::AddBias(x, b), g)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut v = self.value(a).clone();
        v.add_assign(self.value(b));
        let g = self.needs(a) || self.needs(b);
        self.push(v, Op::Add(a, b), g)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let v = self.value(x).map(|y| c * y);
        let g = self.needs(x);
        self.push(v, Op::Scale(x, c), g)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x).map(|y| if y > 0.0 { y } else { 0.0 });
        let g = self.needs(x);
        self.push(v, Op::Relu(x), g)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let v = self.value(x).map(|y| if y > 0.0 { y } else { slope * y });
        let g = self.needs(x);
        self.push(v, Op::LeakyRelu(x, slope), g)
    }

    pub fn edge_score(&mut self, pattern: &Arc<SparseMatrix>, src: Var, dst: Var) -> Var {
        let (s, d) = (self.value(src), self.value(dst));
        assert_eq!(s.cols(), 1, "edge score source must be a column");
        assert_eq!(d.cols(), 1, "edge score target must be a column");
        let mut out = Vec::with_capacity(pattern.nnz());
        for i in 0..pattern.n_rows() {
            for (j, _) in pattern.row_entries(i) {
                out.push(s.data()[i] + d.data()[j]);
            }
        }
        let v = Tensor2::from_vec(out.len(), 1, out);
        let g = self.needs(src) || self.needs(dst);
        self.push(v, Op::EdgeScore(pattern.clone(), src, dst), g)
    }

    pub fn segment_softmax(&mut self, pattern: &Arc<SparseMatrix>, x: Var) -> Var {
        let scores = self.value(x).data();
        assert_eq!(scores.len(), pattern.nnz(), "one score per pattern entry");
        let mut out = vec![0.0; scores.len()];
        let mut k = 0;
        for i in 0..pattern.n_rows() {
            let len = pattern.row_entries(i).count();
            let seg = &scores[k..k + len];
            let max = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for (o, s) in out[k..k + len].iter_mut().zip(seg) {
                *o = (s - max).exp();
                sum += *o;
            }
            for o in &mut out[k..k + len] {
                *o /= sum;
            }
            k += len;
        }
        let v = Tensor2::from_vec(out.len(), 1, out);
        let g = self.needs(x);
        self.push(v, Op::SegmentSoftmax(pattern.clone(), x), g)
    }

    pub fn edge_aggregate(&mut self, pattern: &Arc<SparseMatrix>, alpha: Var, z: Var) -> Var {
        let (a, zv) = (self.value(alpha).data(), self.value(z));
        let cols = zv.cols();
        let mut out = Tensor2::zeros(pattern.n_rows(), cols);
        let mut k = 0;
        for i in 0..pattern.n_rows() {
            for (j, _) in pattern.row_entries(i) {
                let w = a[k];
                for (o, x) in out.row_mut(i).iter_mut().zip(zv.row(j)) {
                    *o += w * x;
                }
                k += 1;
            }
        }
        let g = self.needs(alpha) || self.needs(z);
        self.push(out, Op::EdgeAggregate(pattern.clone(), alpha, z), g)
    }

    /// Summed class-weighted cross-entropy over `targets`, as a `1 x 1` value.
    pub fn weighted_ce(&mut self, logits: Var, targets: Arc<Vec<Target>>) -> Var {
        let (loss, _) = weighted_ce(self.value(logits), &targets);
        let g = self.needs(logits);
        self.push(
            Tensor2::from_vec(1, 1, vec![loss]),
            Op::WeightedCe(logits, targets),
            g,
        )
    }

    /// Gradients of the scalar `root` with respect to every trainable leaf,
    /// indexed by [`Var::index`]. Intermediate values are not kept.
    pub fn backward(&self, root: Var) -> Vec<Option<Tensor2>> {
        assert_eq!(self.value(root).shape(), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Tensor2>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Tensor2::filled(1, 1, 1.0));
        for idx in (0..=root.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let mut acc = |v: Var, g: Tensor2| {
                if !self.nodes[v.0].needs_grad {
                    return;
                }
                match &mut grads[v.0] {
                    Some(t) => t.add_assign(&g),
                    slot => *slot = Some(g),
                }
            };
            match &node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => {
                    if self.needs(*a) {
                        acc(*a, dy.matmul_t(self.value(*b)));
                    }
                    if self.needs(*b) {
                        acc(*b, self.value(*a).t_matmul(&dy));
                    }
                }
                Op::Spmm(s, x) => acc(*x, s.spmm_transpose(&dy)),
                Op::AddBias(x, b) => {
                    if self.needs(*b) {
                        let cols = dy.cols();
                        let mut db = Tensor2::zeros(1, cols);
                        for row in dy.data().chunks(cols.max(1)) {
                            for (d, g) in db.data_mut().iter_mut().zip(row) {
                                *d += g;
                            }
                        }
                        acc(*b, db);
                    }
                    acc(*x, dy);
                }
                Op::Add(a, b) => {
                    acc(*a, dy.clone());
                    acc(*b, dy);
                }
                Op::Scale(x, c) => acc(*x, dy.map(|g| c * g)),
                Op::Relu(x) => acc(*x, gate(&dy, self.value(*x), 0.0)),
                Op::LeakyRelu(x, slope) => acc(*x, gate(&dy, self.value(*x), *slope)),
                Op::EdgeScore(p, src, dst) => {
                    let mut ds = Tensor2::zeros(p.n_rows(), 1);
                    let mut dd = Tensor2::zeros(self.value(*dst).rows(), 1);
                    let mut k = 0;
                    for i in 0..p.n_rows() {
                        for (j, _) in p.row_entries(i) {
                            let g = dy.data()[k];
                            ds.data_mut()[i] += g;
                            dd.data_mut()[j] += g;
                            k += 1;
                        }
                    }
                    acc(*src, ds);
                    acc(*dst, dd);
                }
                Op::SegmentSoftmax(p, x) => {
                    let alpha = node.value.data();
                    let mut dx = vec![0.0; alpha.len()];
                    let mut k = 0;
                    for i in 0..p.n_rows() {
                        let len = p.row_entries(i).count();
                        let r = k..k + len;
                        let inner: f64 = alpha[r.clone()]
                            .iter()
                            .zip(&dy.data()[r.clone()])
                            .map(|(a, g)| a * g)
                            .sum();
                        for t in r {
                            dx[t] = alpha[t] * (dy.data()[t] - inner);
                        }
                        k += len;
                    }
                    acc(*x, Tensor2::from_vec(dx.len(), 1, dx));
                }
                Op::EdgeAggregate(p, alpha, z) => {
                    let (a, zv) = (self.value(*alpha).data(), self.value(*z));
                    let mut da = vec![0.0; a.len()];
                    let mut dz = Tensor2::zeros(zv.rows(), zv.cols());
                    let mut k = 0;
                    for i in 0..p.n_rows() {
                        let gi = dy.row(i);
                        for (j, _) in p.row_entries(i) {
                            da[k] = gi.iter().zip(zv.row(j)).map(|(g, x)| g * x).sum();
                            for (d, g) in dz.row_mut(j).iter_mut().zip(gi) {
                                *d += a[k] * g;
                            }
                            k += 1;
                        }
                    }
                    acc(*alpha, Tensor2::from_vec(da.len(), 1, da));
                    acc(*z, dz);
                }
                Op::WeightedCe(logits, targets) => {
                    let (_, g) = weighted_ce(self.value(*logits), targets);
                    let scale = dy.data()[0];
                    acc(*logits, g.map(|x| scale * x));
                }
            }
        }
        grads
    }
}

fn gate(dy: &Tensor2, x: &Tensor2, slope: f64) -> Tensor2 {
    let data = dy
        .data()
        .iter()
        .zip(x.data())
        .map(|(g, v)| if *v > 0.0 { *g } else { slope * g })
        .collect();
    Tensor2::from_vec(dy.rows(), dy.cols(), data)
}
