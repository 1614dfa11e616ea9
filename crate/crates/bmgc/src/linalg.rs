//! Dense kernels shared by the numeric modules.
//!
//! All parallel kernels here are bitwise-deterministic regardless of thread
//! count: every output element is accumulated in a fixed order, threads only
//! partition independent outputs.

use ndarray::prelude::*;
use rayon::prelude::*;

/// Row-chunked parallel matrix product.
///
/// Splits the rows of `a` across the rayon pool; each chunk is an independent
/// dgemm into its own slice of the output.
pub fn par_matmul(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Array2<f64> {
    let (m, k) = a.dim();
    assert_eq!(k, b.dim().0, "inner dimensions must agree");
    let n = b.dim().1;
    let mut out = Array2::<f64>::zeros((m, n));
    // Chunk granularity tuned for gemm efficiency, not thread count; results
    // are identical for any chunking.
    let chunk = (m / (4 * rayon::current_num_threads().max(1))).clamp(64, 2048);
    out.axis_chunks_iter_mut(Axis(0), chunk)
        .into_par_iter()
        .zip(a.axis_chunks_iter(Axis(0), chunk).into_par_iter())
        .for_each(|(mut oc, ac)| oc.assign(&ac.dot(&b)));
    out
}

/// Sum of squared entries.
pub fn frob_sq(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum()
}

/// `‖AᵀB‖_F²` without forming any N×N matrix (cost O(N·da·db)).
pub fn cross_gram_frob_sq(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    assert_eq!(a.dim().0, b.dim().0, "row counts must agree");
    frob_sq(par_matmul(a.t(), b).view())
}

pub fn all_finite(a: ArrayView2<f64>) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// Row-wise L2 normalization with a floored denominator. Returns the
/// normalized matrix and the raw row norms (before flooring).
pub fn row_l2_normalize(a: ArrayView2<f64>, floor: f64) -> (Array2<f64>, Vec<f64>) {
    let mut out = a.to_owned();
    let mut norms = vec![0.0; a.nrows()];
    for (mut row, norm) in out.rows_mut().into_iter().zip(norms.iter_mut()) {
        *norm = row.dot(&row).sqrt();
        let denom = norm.max(floor);
        row.mapv_inplace(|x| x / denom);
    }
    (out, norms)
}

/// Mean of each row block selected by `assignments == j`, for j in 0..c.
/// Returns None for empty groups.
pub fn group_means(z: ArrayView2<f64>, assignments: &[usize], c: usize) -> Vec<Option<Array1<f64>>> {
    let d = z.ncols();
    let mut sums = vec![Array1::<f64>::zeros(d); c];
    let mut counts = vec![0usize; c];
    for (row, &g) in z.rows().into_iter().zip(assignments) {
        sums[g] += &row;
        counts[g] += 1;
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, cnt)| if cnt == 0 { None } else { Some(s / cnt as f64) })
        .collect()
}

/// Squared Euclidean distances from every row of `z` to every row of
/// `centers`; rows are computed in parallel.
pub fn sq_distances(z: ArrayView2<f64>, centers: ArrayView2<f64>) -> Array2<f64> {
    let (n, d) = z.dim();
    let c = centers.nrows();
    assert_eq!(d, centers.ncols(), "dimension mismatch");
    let mut out = Array2::<f64>::zeros((n, c));
    out.axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(z.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut orow, zrow)| {
            for (j, crow) in centers.rows().into_iter().enumerate() {
                let mut s = 0.0;
                for (a, b) in zrow.iter().zip(crow.iter()) {
                    let diff = a - b;
                    s += diff * diff;
                }
                orow[j] = s;
            }
        });
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;

    #[test]
    fn par_matmul_matches_dot() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let a = Array::from_shape_fn((137, 41), |_| rng.gen_range(-1.0..1.0));
        let b = Array::from_shape_fn((41, 23), |_| rng.gen_range(-1.0..1.0));
        let c = par_matmul(a.view(), b.view());
        let reference = a.dot(&b);
        assert_eq!(c, reference); // bitwise
    }

    #[test]
    fn cross_gram_matches_direct() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let a = Array::from_shape_fn((30, 5), |_| rng.gen_range(-1.0..1.0));
        let b = Array::from_shape_fn((30, 7), |_| rng.gen_range(-1.0..1.0));
        let direct = frob_sq(a.t().dot(&b).view());
        assert!((cross_gram_frob_sq(a.view(), b.view()) - direct).abs() < 1e-12);
    }

    #[test]
    fn row_normalize_handles_zero_rows() {
        let a = ndarray::array![[3.0, 4.0], [0.0, 0.0]];
        let (out, norms) = row_l2_normalize(a.view(), 1e-12);
        assert!((out[[0, 0]] - 0.6).abs() < 1e-15);
        assert_eq!(out[[1, 0]], 0.0);
        assert_eq!(norms[1], 0.0);
    }
}
