//! External clustering metrics: ACC (optimal cluster-to-class matching),
//! NMI (arithmetic-mean normalization), ARI, and macro-F1 under the same
//! matching.

use ndarray::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::Labels;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EvalReport {
    pub nmi: f64,
    pub ari: f64,
    pub acc: f64,
    pub f1: f64,
}

/// Exact solution of the square assignment problem (cost minimization) via
/// the O(n³) potentials algorithm. Returns the column chosen for each row.
fn hungarian_min(cost: &Array2<i64>) -> Vec<usize> {
    let n = cost.nrows();
    assert_eq!(n, cost.ncols(), "cost matrix must be square");
    // 1-based arrays; p[j] = row matched to column j
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[[i0 - 1, j - 1]] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

fn contingency(pred: &[usize], truth: &[usize], kp: usize, kt: usize) -> Array2<usize> {
    let mut table = Array2::<usize>::zeros((kp, kt));
    for (&a, &b) in pred.iter().zip(truth) {
        table[[a, b]] += 1;
    }
    table
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Compare hard assignments with ground truth.
pub fn evaluate(pred: &[usize], truth: &Labels) -> Result<EvalReport> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if truth.num_classes() < 2 {
        return Err(Error::SingleClassTruth);
    }
    let n = pred.len();
    let nf = n as f64;
    let kt = truth.num_classes();
    let kp = pred.iter().copied().max().unwrap_or(0) + 1;
    let table = contingency(pred, truth.ids(), kp, kt);
    let row_sums: Vec<usize> = table.rows().into_iter().map(|r| r.sum()).collect();
    let col_sums: Vec<usize> = table.columns().into_iter().map(|c| c.sum()).collect();

    // mutual information and entropies
    let mut mi = 0.0;
    for k in 0..kp {
        for c in 0..kt {
            let nij = table[[k, c]];
            if nij > 0 {
                let pij = nij as f64 / nf;
                mi += pij * ((nf * nij as f64) / (row_sums[k] as f64 * col_sums[c] as f64)).ln();
            }
        }
    }
    let h_pred = entropy(&row_sums, nf);
    let h_true = entropy(&col_sums, nf);
    let nmi = if h_pred + h_true > 0.0 { mi / ((h_pred + h_true) / 2.0) } else { 0.0 };

    // adjusted Rand index (permutation model)
    let choose2 = |x: usize| -> f64 {
        let x = x as f64;
        x * (x - 1.0) / 2.0
    };
    let sum_ij: f64 = table.iter().map(|&x| choose2(x)).sum();
    let sum_a: f64 = row_sums.iter().map(|&x| choose2(x)).sum();
    let sum_b: f64 = col_sums.iter().map(|&x| choose2(x)).sum();
    let total = choose2(n);
    let expected = sum_a * sum_b / total;
    let max_index = (sum_a + sum_b) / 2.0;
    let ari = if (max_index - expected).abs() < f64::EPSILON {
        1.0
    } else {
        (sum_ij - expected) / (max_index - expected)
    };

    // optimal one-to-one cluster -> class mapping on the padded square table
    let side = kp.max(kt);
    let mut cost = Array2::<i64>::zeros((side, side));
    for k in 0..kp {
        for c in 0..kt {
            cost[[k, c]] = -(table[[k, c]] as i64);
        }
    }
    let mapping = hungarian_min(&cost);
    let matched: usize = (0..kp)
        .filter(|&k| mapping[k] < kt)
        .map(|k| table[[k, mapping[k]]])
        .sum();
    let acc = matched as f64 / nf;

    // macro-F1 over truth classes, predictions relabeled by the mapping
    let mut f1_sum = 0.0;
    for class in 0..kt {
        let mut tp = 0usize;
        let mut fp = 0usize;
        let mut fn_ = 0usize;
        for k in 0..kp {
            let mapped = mapping[k];
            for c in 0..kt {
                let count = table[[k, c]];
                if mapped == class && c == class {
                    tp += count;
                } else if mapped == class {
                    fp += count;
                } else if c == class {
                    fn_ += count;
                }
            }
        }
        let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
        let recall = if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 };
        if precision + recall > 0.0 {
            f1_sum += 2.0 * precision * recall / (precision + recall);
        }
    }
    let f1 = f1_sum / kt as f64;

    Ok(EvalReport { nmi, ari, acc, f1 })
}
