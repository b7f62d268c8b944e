use std::sync::Arc;

use super::tape::{Tape, Var};
use super::{Activation, GnnError};
use crate::graph::TransactionGraph;
use crate::tensor::{SparseMatrix, Tensor2};

/// Negative slope inside the attention score.
pub const GAT_SLOPE: f64 = 0.2;

/// Sparse operators shared by every layer of a model on one graph. All of
/// them use the undirected view of the transaction graph.
#[derive(Debug, Clone)]
pub struct GraphOperators {
    /// `D^-1/2 (A + I) D^-1/2`.
    pub gcn: Arc<SparseMatrix>,
    /// `A` with unit weights, no self loops.
    pub adjacency: Arc<SparseMatrix>,
    /// Row `i` holds `N(i) ∪ {i}`, sorted.
    pub attention: Arc<SparseMatrix>,
}

impl GraphOperators {
    pub fn new(graph: &TransactionGraph) -> Self {
        let n = graph.node_count();
        let with_self = |v: usize| {
            let mut row: Vec<usize> = graph.neighbors(v).to_vec();
            let pos = row.partition_point(|&u| u < v);
            row.insert(pos, v);
            row
        };
        let deg: Vec<f64> = (0..n).map(|v| (graph.neighbors(v).len() + 1) as f64).collect();
        let gcn = (0..n)
            .map(|v| {
                with_self(v)
                    .into_iter()
                    .map(|u| (u, 1.0 / (deg[v] * deg[u]).sqrt()))
                    .collect()
            })
            .collect();
        let adjacency = (0..n)
            .map(|v| graph.neighbors(v).iter().map(|&u| (u, 1.0)).collect())
            .collect();
        let attention = (0..n)
            .map(|v| with_self(v).into_iter().map(|u| (u, 1.0)).collect())
            .collect();
        Self {
            gcn: Arc::new(SparseMatrix::from_rows(n, gcn)),
            adjacency: Arc::new(SparseMatrix::from_rows(n, adjacency)),
            attention: Arc::new(SparseMatrix::from_rows(n, attention)),
        }
    }

    pub fn node_count(&self) -> usize {
        self.gcn.n_rows()
    }
}

fn activate(tape: &mut Tape, x: Var, act: Option<Activation>) -> Var {
    match act {
        Some(a) => a.record(tape, x),
        None => x,
    }
}

pub(crate) fn gcn_layer(
    tape: &mut Tape,
    ops: &GraphOperators,
    h: Var,
    w: Var,
    b: Var,
    act: Option<Activation>,
) -> Var {
    let z = tape.matmul(h, w);
    let z = tape.spmm(&ops.gcn, z);
    let z = tape.add_bias(z, b);
    activate(tape, z, act)
}

/// One attention head: `(W, a_src, a_dst)`. Returns the aggregated rows and
/// the attention coefficients in pattern order.
pub(crate) fn gat_head(
    tape: &mut Tape,
    ops: &GraphOperators,
    h: Var,
    (w, a_src, a_dst): (Var, Var, Var),
) -> (Var, Var) {
    let z = tape.matmul(h, w);
    let s_src = tape.matmul(z, a_src);
    let s_dst = tape.matmul(z, a_dst);
    let e = tape.edge_score(&ops.attention, s_src, s_dst);
    let e = tape.leaky_relu(e, GAT_SLOPE);
    let alpha = tape.segment_softmax(&ops.attention, e);
    (tape.edge_aggregate(&ops.attention, alpha, z), alpha)
}

/// Heads are averaged before the bias.
pub(crate) fn gat_layer(
    tape: &mut Tape,
    ops: &GraphOperators,
    h: Var,
    heads: &[(Var, Var, Var)],
    b: Var,
    act: Option<Activation>,
) -> Var {
    let mut sum = None;
    for &head in heads {
        let (out, _) = gat_head(tape, ops, h, head);
        sum = Some(match sum {
            Some(s) => tape.add(s, out),
            None => out,
        });
    }
    let mut z = sum.expect("at least one head");
    if heads.len() > 1 {
        z = tape.scale(z, 1.0 / heads.len() as f64);
    }
    let z = tape.add_bias(z, b);
    activate(tape, z, act)
}

/// `[W1, b1, W2, b2]` of the two-layer GIN update MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct GinMlp {
    pub w1: Tensor2,
    pub b1: Tensor2,
    pub w2: Tensor2,
    pub b2: Tensor2,
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn gin_layer(
    tape: &mut Tape,
    ops: &GraphOperators,
    h: Var,
    [w1, b1, w2, b2]: [Var; 4],
    epsilon: f64,
    inner: Activation,
    act: Option<Activation>,
) -> Var {
    let nbr = tape.spmm(&ops.adjacency, h);
    let own = tape.scale(h, 1.0 + epsilon);
    let agg = tape.add(nbr, own);
    let u = tape.matmul(agg, w1);
    let u = tape.add_bias(u, b1);
    let u = inner.record(tape, u);
    let u = tape.matmul(u, w2);
    let u = tape.add_bias(u, b2);
    activate(tape, u, act)
}

fn check_input(ops: &GraphOperators, h: &Tensor2, w: &Tensor2, b: &Tensor2) -> Result<(), GnnError> {
    if h.rows() != ops.node_count() {
        return Err(GnnError::ShapeMismatch(format!(
            "{} feature rows for {} nodes",
            h.rows(),
            ops.node_count()
        )));
    }
    if h.cols() != w.rows() {
        return Err(GnnError::ShapeMismatch(format!(
            "input width {} vs weight rows {}",
            h.cols(),
            w.rows()
        )));
    }
    if b.shape() != (1, w.cols()) {
        return Err(GnnError::ShapeMismatch(format!(
            "bias {:?} for output width {}",
            b.shape(),
            w.cols()
        )));
    }
    Ok(())
}

/// `σ(Â H W + b)`.
pub fn gcn_forward(
    ops: &GraphOperators,
    h: &Tensor2,
    w: &Tensor2,
    b: &Tensor2,
    act: Option<Activation>,
) -> Result<Tensor2, GnnError> {
    check_input(ops, h, w, b)?;
    let mut t = Tape::new();
    let (hv, wv, bv) = (t.constant(h.clone()), t.constant(w.clone()), t.constant(b.clone()));
    let out = gcn_layer(&mut t, ops, hv, wv, bv, act);
    Ok(t.value(out).clone())
}

/// Single-head attention layer. `a` is the `2·out x 1` attention vector; its
/// first half scores the receiving node, the second half the neighbour.
/// Returns the layer output and the attention coefficients, row `i` of the
/// attention pattern holding `N(i) ∪ {i}` in index order.
pub fn gat_forward(
    ops: &GraphOperators,
    h: &Tensor2,
    w: &Tensor2,
    a: &Tensor2,
    b: &Tensor2,
    act: Option<Activation>,
) -> Result<(Tensor2, Vec<f64>), GnnError> {
    check_input(ops, h, w, b)?;
    let out_dim = w.cols();
    if a.shape() != (2 * out_dim, 1) {
        return Err(GnnError::ShapeMismatch(format!(
            "attention vector {:?}, expected ({}, 1)",
            a.shape(),
            2 * out_dim
        )));
    }
    let mut t = Tape::new();
    let hv = t.constant(h.clone());
    let wv = t.constant(w.clone());
    let a_src = t.constant(Tensor2::from_vec(out_dim, 1, a.data()[..out_dim].to_vec()));
    let a_dst = t.constant(Tensor2::from_vec(out_dim, 1, a.data()[out_dim..].to_vec()));
    let (agg, alpha) = gat_head(&mut t, ops, hv, (wv, a_src, a_dst));
    let bv = t.constant(b.clone());
    let z = t.add_bias(agg, bv);
    let out = activate(&mut t, z, act);
    Ok((t.value(out).clone(), t.value(alpha).data().to_vec()))
}

/// `MLP((1 + ε) h_v + Σ_{u ∈ N(v)} h_u)`, with `inner` between the two MLP
/// layers and `act` on the output.
pub fn gin_forward(
    ops: &GraphOperators,
    h: &Tensor2,
    mlp: &GinMlp,
    epsilon: f64,
    inner: Activation,
    act: Option<Activation>,
) -> Result<Tensor2, GnnError> {
    check_input(ops, h, &mlp.w1, &mlp.b1)?;
    if mlp.w2.rows() != mlp.w1.cols() || mlp.b2.shape() != (1, mlp.w2.cols()) {
        return Err(GnnError::ShapeMismatch("GIN MLP second layer".into()));
    }
    let mut t = Tape::new();
    let hv = t.constant(h.clone());
    let p = [
        t.constant(mlp.w1.clone()),
        t.constant(mlp.b1.clone()),
        t.constant(mlp.w2.clone()),
        t.constant(mlp.b2.clone()),
    ];
    let out = gin_layer(&mut t, ops, hv, p, epsilon, inner, act);
    Ok(t.value(out).clone())
}
