//! Structure-quality metrics: edge homophily, aggregation class distance,
//! gram discrepancy, unsupervised dominant-view mining, and a linear probe.

use ndarray::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Labels;
use crate::linalg::cross_gram_frob_sq;
use crate::nn::{Activation, Adam, Mlp};
use crate::seed::SeedStream;
use crate::sparse::SparseAdjacency;

/// Fraction of edges joining same-class endpoints, each undirected edge
/// counted once.
pub fn edge_homophily(adj: &SparseAdjacency, labels: &Labels) -> Result<f64> {
    if labels.len() != adj.n() {
        return Err(Error::LengthMismatch(labels.len(), adj.n()));
    }
    let y = labels.ids();
    let mut edges = 0usize;
    let mut same = 0usize;
    for (i, j, _) in adj.undirected_entries() {
        edges += 1;
        same += (y[i] == y[j]) as usize;
    }
    if edges == 0 {
        return Err(Error::EmptyGraph);
    }
    Ok(same as f64 / edges as f64)
}

/// Per-class means of the rows of `x` (C×d).
pub fn class_centroids(x: ArrayView2<f64>, labels: &Labels) -> Result<Array2<f64>> {
    if labels.len() != x.nrows() {
        return Err(Error::LengthMismatch(labels.len(), x.nrows()));
    }
    let c = labels.num_classes();
    let mut sums = Array2::<f64>::zeros((c, x.ncols()));
    let mut counts = vec![0usize; c];
    for (row, &y) in x.rows().into_iter().zip(labels.ids()) {
        sums.row_mut(y).scaled_add(1.0, &row);
        counts[y] += 1;
    }
    for (m, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(Error::EmptyClass(m));
        }
        sums.row_mut(m).mapv_inplace(|v| v / count as f64);
    }
    Ok(sums)
}

/// Aggregation class distance: mean pairwise Euclidean distance between
/// class centroids, averaging constant 2/(C²−C).
pub fn acd(x: ArrayView2<f64>, labels: &Labels) -> Result<f64> {
    let c = labels.num_classes();
    if c < 2 {
        return Err(Error::SingleClass);
    }
    let centroids = class_centroids(x, labels)?;
    let mut total = 0.0;
    for m in 0..c {
        for n in (m + 1)..c {
            let diff = &centroids.row(m) - &centroids.row(n);
            total += diff.dot(&diff).sqrt();
        }
    }
    Ok(total * 2.0 / (c * c - c) as f64)
}

/// `‖XᵀX‖_F²`, the reusable term of the gram discrepancy.
pub fn gram_self_sq(x: ArrayView2<f64>) -> f64 {
    cross_gram_frob_sq(x, x)
}

/// `‖XXᵀ − ZZᵀ‖_F²` with a precomputed `‖XᵀX‖_F²`.
///
/// Expanded as `‖XᵀX‖² + ‖ZᵀZ‖² − 2‖XᵀZ‖²` so no N×N matrix is formed;
/// tiny negative round-off is clamped to zero.
pub fn gram_discrepancy_pre(
    x_gram_sq: f64,
    x: ArrayView2<f64>,
    z: ArrayView2<f64>,
) -> Result<f64> {
    if x.nrows() != z.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows vs {} rows",
            x.nrows(),
            z.nrows()
        )));
    }
    let raw = x_gram_sq + gram_self_sq(z) - 2.0 * cross_gram_frob_sq(x, z);
    Ok(raw.max(0.0))
}

/// `‖XXᵀ − ZZᵀ‖_F²`; see [`gram_discrepancy_pre`].
///
/// Arguments are put into a canonical order first so the result is exactly
/// symmetric (float summation order would otherwise differ in the last ulp).
pub fn gram_discrepancy<'a>(x: ArrayView2<'a, f64>, z: ArrayView2<'a, f64>) -> Result<f64> {
    let swap = match x.ncols().cmp(&z.ncols()) {
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => x
            .iter()
            .zip(z.iter())
            .find_map(|(a, b)| match a.partial_cmp(b) {
                Some(std::cmp::Ordering::Equal) | None => None,
                Some(ord) => Some(ord == std::cmp::Ordering::Greater),
            })
            .unwrap_or(false),
    };
    let (a, b) = if swap { (z, x) } else { (x, z) };
    gram_discrepancy_pre(gram_self_sq(a), a, b)
}

/// Index of the candidate with the smallest gram discrepancy against `x`;
/// ties break toward the lowest index.
pub fn mine_dominant_view(x: ArrayView2<f64>, candidates: &[Array2<f64>]) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Domain("at least one candidate is required".into()));
    }
    let x_gram_sq = gram_self_sq(x);
    let mut best = (0usize, f64::INFINITY);
    for (v, z) in candidates.iter().enumerate() {
        let d = gram_discrepancy_pre(x_gram_sq, x, z.view())?;
        if d < best.1 {
            best = (v, d);
        }
    }
    Ok(best.0)
}

/// Train/test accuracy probe: one linear layer under softmax cross-entropy,
/// 200 full-batch Adam epochs (lr 1e-2, no weight decay). Returns accuracy
/// on the held-out fraction.
pub fn linear_probe(
    x: ArrayView2<f64>,
    labels: &Labels,
    train_fraction: f64,
    seed: u64,
) -> Result<f64> {
    if train_fraction <= 0.0 || train_fraction >= 1.0 {
        return Err(Error::Domain(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let n = x.nrows();
    if labels.len() != n {
        return Err(Error::LengthMismatch(labels.len(), n));
    }
    let c = labels.num_classes();
    if c < 2 {
        return Err(Error::SingleClass);
    }
    let stream = SeedStream::new(seed);

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream.rng("probe-split", 0);
    shuffle(&mut order, &mut rng);
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let (train_idx, test_idx) = order.split_at(n_train);

    let mut seen = vec![false; c];
    for &i in train_idx {
        seen[labels.ids()[i]] = true;
    }
    if let Some(m) = seen.iter().position(|s| !s) {
        return Err(Error::EmptyClass(m));
    }

    let x_train = x.select(Axis(0), train_idx);
    let y_train: Vec<usize> = train_idx.iter().map(|&i| labels.ids()[i]).collect();

    let mut probe = Mlp::new(
        &[x.ncols(), c],
        Activation::Elu,
        false,
        &mut stream.rng("probe-init", 0),
    );
    let mut opt = Adam::new(1e-2, 0.0);
    for _ in 0..200 {
        let (logits, cache) = probe.forward_cached(x_train.view())?;
        let mut grad = softmax_rows(logits.view());
        for (i, &y) in y_train.iter().enumerate() {
            grad[[i, y]] -= 1.0;
        }
        grad /= n_train as f64;
        let (grads, _) = probe.backward(x_train.view(), &cache, grad.view(), false);
        let gslices: Vec<&[f64]> = grads
            .layers
            .iter()
            .flat_map(|(w, b)| [w.as_slice().unwrap(), b.as_slice().unwrap()])
            .collect();
        opt.step(&mut probe.param_slices_mut(), &gslices)?;
    }

    let x_test = x.select(Axis(0), test_idx);
    let logits = probe.forward(x_test.view())?;
    let correct = logits
        .rows()
        .into_iter()
        .zip(test_idx)
        .filter(|(row, &i)| argmax(row.view()) == labels.ids()[i])
        .count();
    Ok(correct as f64 / test_idx.len() as f64)
}

fn shuffle(order: &mut [usize], rng: &mut impl rand::Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }
}

pub(crate) fn argmax(row: ArrayView1<f64>) -> usize {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (j, &v) in row.iter().enumerate() {
        if v > best.1 {
            best = (j, v);
        }
    }
    best.0
}

fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - mean) * (y - mean);
        da += (x - mean) * (x - mean);
        db += (y - mean) * (y - mean);
    }
    num / (da * db).sqrt()
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

/// Per-view quality numbers; supervised fields are `None` without labels.
#[derive(Debug, Clone, Serialize)]
pub struct ViewQuality {
    pub acd: Option<f64>,
    pub homophily: Option<f64>,
    pub gram_discrepancy: f64,
    pub probe_accuracy: Option<f64>,
}

/// Emitted by the `acd` and `mine` subcommands; `dominant_view` is the
/// gram-discrepancy argmin.
#[derive(Debug, Clone, Serialize)]
pub struct ViewQualityReport {
    pub per_view: Vec<ViewQuality>,
    pub dominant_view: usize,
}

impl ViewQualityReport {
    /// Assemble from per-view aggregated features and the raw features.
    /// `probe` carries (train_fraction, seed) when probe accuracies are
    /// wanted; labels gate the supervised fields.
    pub fn build(
        x: ArrayView2<f64>,
        aggregated: &[Array2<f64>],
        views: &[SparseAdjacency],
        labels: Option<&Labels>,
        probe: Option<(f64, u64)>,
    ) -> Result<Self> {
        let x_gram_sq = gram_self_sq(x);
        let mut per_view = Vec::with_capacity(aggregated.len());
        for (v, z) in aggregated.iter().enumerate() {
            let discrepancy = gram_discrepancy_pre(x_gram_sq, x, z.view())?;
            let (acd_v, hr_v, probe_v) = match labels {
                Some(l) => {
                    let acd_v = acd(z.view(), l)?;
                    let hr_v = edge_homophily(&views[v], l)?;
                    let probe_v = match probe {
                        Some((fraction, seed)) => {
                            Some(linear_probe(z.view(), l, fraction, seed ^ v as u64)?)
                        }
                        None => None,
                    };
                    (Some(acd_v), Some(hr_v), probe_v)
                }
                None => (None, None, None),
            };
            per_view.push(ViewQuality {
                acd: acd_v,
                homophily: hr_v,
                gram_discrepancy: discrepancy,
                probe_accuracy: probe_v,
            });
        }
        let dominant_view = per_view
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| a.gram_discrepancy.partial_cmp(&b.gram_discrepancy).unwrap())
            .map(|(v, _)| v)
            .unwrap_or(0);
        Ok(Self { per_view, dominant_view })
    }
}
