//! Multi-relational graph containers.

use ndarray::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::all_finite;
use crate::sparse::SparseAdjacency;

/// Node labels in `[0, num_classes)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    ids: Vec<usize>,
    num_classes: usize,
}

impl Labels {
    /// Every class in `[0, num_classes)` must have at least one member.
    pub fn new(ids: Vec<usize>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::LabelRange("num_classes must be positive".into()));
        }
        let mut seen = vec![false; num_classes];
        for (i, &y) in ids.iter().enumerate() {
            if y >= num_classes {
                return Err(Error::LabelRange(format!(
                    "label {y} at node {i} exceeds class count {num_classes}"
                )));
            }
            seen[y] = true;
        }
        if let Some(c) = seen.iter().position(|s| !s) {
            return Err(Error::LabelRange(format!("class {c} has no members")));
        }
        Ok(Self { ids, num_classes })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Node indices per class.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.ids.iter().enumerate() {
            out[y].push(i);
        }
        out
    }
}

/// V sparse relation structures over one node set, one shared feature
/// matrix, optional labels. Immutable after construction.
#[derive(Debug, Clone)]
pub struct MultiRelationalGraph {
    views: Vec<SparseAdjacency>,
    features: Array2<f64>,
    labels: Option<Labels>,
}

impl MultiRelationalGraph {
    pub fn new(
        views: Vec<SparseAdjacency>,
        features: Array2<f64>,
        labels: Option<Labels>,
    ) -> Result<Self> {
        if views.is_empty() {
            return Err(Error::ShapeMismatch("at least one view is required".into()));
        }
        let n = features.nrows();
        if n < 2 {
            return Err(Error::ShapeMismatch("at least two nodes are required".into()));
        }
        if features.ncols() == 0 {
            return Err(Error::ShapeMismatch("feature dimension must be positive".into()));
        }
        if !all_finite(features.view()) {
            return Err(Error::Domain("features contain non-finite entries".into()));
        }
        for (v, adj) in views.iter().enumerate() {
            if adj.n() != n {
                return Err(Error::ShapeMismatch(format!(
                    "view {v} has {} nodes but features have {n} rows",
                    adj.n()
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::ShapeMismatch(format!(
                    "{} labels for {n} nodes",
                    l.len()
                )));
            }
        }
        Ok(Self { views, features, labels })
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_views(&self) -> usize {
        self.views.len()
    }

    pub fn views(&self) -> &[SparseAdjacency] {
        &self.views
    }

    pub fn view(&self, v: usize) -> &SparseAdjacency {
        &self.views[v]
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn labels(&self) -> Option<&Labels> {
        self.labels.as_ref()
    }
}
