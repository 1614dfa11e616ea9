//! Symmetric sparse adjacency storage (CSR) and normalization.

use ndarray::prelude::*;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Symmetric nonnegative sparse matrix over one node set.
///
/// Both directions of every undirected edge are stored so row slices expose
/// complete neighborhoods. Construction deduplicates repeated edges and
/// validates weights; instances are immutable afterwards and safe to share
/// across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAdjacency {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    weights: Vec<f64>,
}

impl SparseAdjacency {
    /// Build from an undirected edge list. Edges may be listed in either
    /// orientation (or both); duplicates are merged with a warning, keeping
    /// the first weight seen. Diagonal entries are accepted and stored once.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        if n == 0 {
            return Err(Error::Domain("node count must be positive".into()));
        }
        let mut directed: Vec<(usize, usize, f64)> = Vec::with_capacity(edges.len() * 2);
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::Domain(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Domain(format!(
                    "edge ({u}, {v}) has invalid weight {w}"
                )));
            }
            directed.push((u, v, w));
            if u != v {
                directed.push((v, u, w));
            }
        }
        // stable sort + dedup keeps the first weight seen for a repeated pair
        directed.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut duplicates = 0usize;
        directed.dedup_by(|next, kept| {
            let dup = next.0 == kept.0 && next.1 == kept.1;
            duplicates += dup as usize;
            dup
        });
        if duplicates > 0 {
            log::warn!("deduplicated {} duplicate edge entries", duplicates.div_ceil(2));
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(directed.len());
        let mut weights = Vec::with_capacity(directed.len());
        let mut cursor = 0usize;
        for (row, ptr) in row_ptr.iter_mut().enumerate().skip(1) {
            while cursor < directed.len() && directed[cursor].0 < row {
                col_idx.push(directed[cursor].1);
                weights.push(directed[cursor].2);
                cursor += 1;
            }
            *ptr = col_idx.len();
        }
        Ok(Self { n, row_ptr, col_idx, weights })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Stored entries (both directions of each undirected edge).
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    /// Number of undirected edges (diagonal entries count once).
    pub fn num_edges(&self) -> usize {
        self.undirected_entries().count()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    /// Each undirected edge once, as (i, j, w) with i <= j.
    pub fn undirected_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            self.row(i)
                .filter(move |&(j, _)| i <= j)
                .map(move |(j, w)| (i, j, w))
        })
    }

    /// Weighted degree (row sums).
    pub fn degrees(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(_, w)| w).sum()).collect()
    }

    pub fn has_self_loops(&self) -> bool {
        (0..self.n).any(|i| self.row(i).any(|(j, _)| j == i))
    }

    /// Sparse × dense product. Rows of the output are independent and
    /// computed in parallel; each accumulates in CSR order, so the result is
    /// identical for any thread count.
    pub fn spmm(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.nrows() != self.n {
            return Err(Error::ShapeMismatch(format!(
                "adjacency is {}x{} but dense operand has {} rows",
                self.n,
                self.n,
                x.nrows()
            )));
        }
        let d = x.ncols();
        let mut out = Array2::<f64>::zeros((self.n, d));
        out.axis_iter_mut(Axis(0))
            .into_par_iter()
            .enumerate()
            .for_each(|(i, mut orow)| {
                let orow = orow.as_slice_mut().expect("row-major output");
                for (j, w) in self.row(i) {
                    let xrow = x.row(j);
                    let xrow = xrow.as_slice().expect("row-major input");
                    for (o, &xv) in orow.iter_mut().zip(xrow) {
                        *o += w * xv;
                    }
                }
            });
        Ok(out)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                out[[i, j]] = w;
            }
        }
        out
    }

    fn map_weights(&self, f: impl Fn(usize, usize, f64) -> f64) -> Self {
        let mut weights = self.weights.clone();
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                weights[k] = f(i, self.col_idx[k], self.weights[k]);
            }
        }
        Self { weights, ..self.clone() }
    }
}

/// Symmetric degree normalization.
///
/// Without self-loops this is `D^{-1/2} A D^{-1/2}` and requires every node
/// to have positive degree and no diagonal entries. With `self_loops`, the
/// identity is merged into the matrix first (an existing diagonal weight w
/// becomes w + 1) and degrees come from the augmented matrix. Either variant
/// keeps the spectrum inside [-1, 1].
pub fn normalize_adjacency(adj: &SparseAdjacency, self_loops: bool) -> Result<SparseAdjacency> {
    if self_loops {
        let mut edges: Vec<(usize, usize, f64)> = adj
            .undirected_entries()
            .map(|(i, j, w)| if i == j { (i, j, w + 1.0) } else { (i, j, w) })
            .collect();
        let have_diag: std::collections::HashSet<usize> = edges
            .iter()
            .filter(|(i, j, _)| i == j)
            .map(|(i, _, _)| *i)
            .collect();
        for i in 0..adj.n() {
            if !have_diag.contains(&i) {
                edges.push((i, i, 1.0));
            }
        }
        let augmented = SparseAdjacency::from_edges(adj.n(), &edges)?;
        let deg = augmented.degrees();
        Ok(augmented.map_weights(|i, j, w| w / (deg[i] * deg[j]).sqrt()))
    } else {
        for i in 0..adj.n() {
            if adj.row(i).any(|(j, _)| j == i) {
                return Err(Error::SelfLoop(i));
            }
        }
        let deg = adj.degrees();
        if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
            return Err(Error::IsolatedNode(i));
        }
        Ok(adj.map_weights(|i, j, w| w / (deg[i] * deg[j]).sqrt()))
    }
}
