//! Decoupled feature propagation.
//!
//! Propagation runs once before training and the per-view results are cached
//! in [`ViewAggregates`]; epochs never touch the graph again. Two variants
//! are exposed: plain K-hop powers of the no-self-loop normalization, and
//! the teleport recurrence on the self-loop normalization.

use ndarray::prelude::*;

use crate::error::{Error, Result};
use crate::graph::MultiRelationalGraph;
use crate::sparse::{normalize_adjacency, SparseAdjacency};

/// Cached per-view aggregated features (each N×d_f).
#[derive(Debug, Clone)]
pub struct ViewAggregates {
    pub per_view: Vec<Array2<f64>>,
    pub hops: usize,
    pub teleport: f64,
}

/// `A^K X` for a normalized adjacency. `k = 0` returns `X` unchanged.
pub fn sgc_aggregate(adj: &SparseAdjacency, x: ArrayView2<f64>, k: usize) -> Result<Array2<f64>> {
    if x.nrows() != adj.n() {
        return Err(Error::ShapeMismatch(format!(
            "features have {} rows for {} nodes",
            x.nrows(),
            adj.n()
        )));
    }
    let mut cur = x.to_owned();
    for _ in 0..k {
        cur = adj.spmm(cur.view())?;
    }
    Ok(cur)
}

/// K applications of the teleport recurrence
/// `X^{k+1} = (1 - alpha) Â X^k + alpha X`, starting from `X^0 = X`.
pub fn teleport_propagate(
    adj: &SparseAdjacency,
    x: ArrayView2<f64>,
    k: usize,
    alpha: f64,
) -> Result<Array2<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("teleport probability {alpha} outside [0, 1]")));
    }
    if k == 0 {
        return Err(Error::Domain("hop count must be at least 1".into()));
    }
    if x.nrows() != adj.n() {
        return Err(Error::ShapeMismatch(format!(
            "features have {} rows for {} nodes",
            x.nrows(),
            adj.n()
        )));
    }
    let mut cur = x.to_owned();
    for _ in 0..k {
        let mut next = adj.spmm(cur.view())?;
        next *= 1.0 - alpha;
        next.scaled_add(alpha, &x);
        cur = next;
    }
    Ok(cur)
}

/// Normalize every view with self-loops and run the teleport recurrence,
/// producing raw per-view aggregates. The similarity-preservation metric
/// that mines the dominant view is computed on these raw aggregates.
pub fn aggregate_views(g: &MultiRelationalGraph, hops: usize, alpha: f64) -> Result<ViewAggregates> {
    let mut per_view = Vec::with_capacity(g.num_views());
    for adj in g.views() {
        let norm = normalize_adjacency(adj, true)?;
        per_view.push(teleport_propagate(&norm, g.features(), hops, alpha)?);
    }
    Ok(ViewAggregates { per_view, hops, teleport: alpha })
}

impl ViewAggregates {
    /// L2-normalize every aggregated row in place. The encoder and all
    /// clustering consume this form: it equalizes row scales across nodes of
    /// very different degrees (an isolated node keeps its raw features under
    /// the self-loop normalization and would otherwise dominate distances
    /// and gram terms).
    pub fn normalize_rows(&mut self) {
        for agg in self.per_view.iter_mut() {
            *agg = crate::linalg::row_l2_normalize(agg.view(), 1e-12).0;
        }
    }
}
