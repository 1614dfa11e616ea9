//! k-means, dominant assignment, Student-t soft assignments, target
//! distribution, and the self-training KL loss.

use ndarray::prelude::*;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{group_means, sq_distances};
use crate::seed::SeedStream;

/// Probability floor applied before logs and normalization.
pub const PROB_FLOOR: f64 = 1e-12;

const LLOYD_TOL: f64 = 1e-6;
const LLOYD_MAX_ITERS: usize = 300;

#[derive(Debug, Clone)]
pub struct ClusterResult {
    pub assignments: Vec<usize>,
    pub centers: Array2<f64>,
    pub inertia: f64,
}

/// Soft assignments Q and their sharpened targets P; rows sum to 1.
#[derive(Debug, Clone)]
pub struct SoftAssignments {
    pub q: Array2<f64>,
    pub p: Array2<f64>,
}

impl SoftAssignments {
    pub fn from_q(q: Array2<f64>) -> Self {
        let p = target_distribution(q.view());
        Self { q, p }
    }
}

/// k-means++ seeded Lloyd iterations, best of `restarts` by inertia.
///
/// Empty clusters are re-seeded from the farthest point. All rows identical
/// with C > 1 degenerates to duplicated centers (valid result, warned).
pub fn kmeans(z: ArrayView2<f64>, c: usize, seed: u64, restarts: usize) -> Result<ClusterResult> {
    if c == 0 {
        return Err(Error::Domain("cluster count must be positive".into()));
    }
    if z.nrows() < c {
        return Err(Error::Domain(format!(
            "{} rows cannot form {c} clusters",
            z.nrows()
        )));
    }
    if restarts == 0 {
        return Err(Error::Config("at least one restart is required".into()));
    }
    let stream = SeedStream::new(seed);
    let mut best: Option<ClusterResult> = None;
    for r in 0..restarts {
        let mut rng = stream.rng("kmeans-restart", r as u64);
        let centers = plus_plus_init(z, c, &mut rng);
        let result = lloyd(z, centers)?;
        if best.as_ref().map_or(true, |b| result.inertia < b.inertia) {
            best = Some(result);
        }
    }
    Ok(best.unwrap())
}

/// Lloyd iterations from the centers implied by an initial assignment.
pub fn kmeans_with_init(z: ArrayView2<f64>, c: usize, init: &[usize]) -> Result<ClusterResult> {
    if init.len() != z.nrows() {
        return Err(Error::LengthMismatch(init.len(), z.nrows()));
    }
    if let Some(&bad) = init.iter().find(|&&g| g >= c) {
        return Err(Error::Domain(format!("assignment {bad} out of range for {c} clusters")));
    }
    let centers = view_centers(z, init, c)?;
    lloyd(z, centers)
}

fn plus_plus_init(z: ArrayView2<f64>, c: usize, rng: &mut impl Rng) -> Array2<f64> {
    let n = z.nrows();
    let mut centers = Array2::<f64>::zeros((c, z.ncols()));
    let first = rng.gen_range(0..n);
    centers.row_mut(0).assign(&z.row(first));
    let mut min_d2: Vec<f64> = z
        .rows()
        .into_iter()
        .map(|row| {
            let diff = &row - &z.row(first);
            diff.dot(&diff)
        })
        .collect();
    for k in 1..c {
        let total: f64 = min_d2.iter().sum();
        let pick = if total <= 0.0 {
            // all mass at chosen centers (duplicated rows): uniform draw
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen_range(0.0..total);
            let mut idx = n - 1;
            for (i, &d) in min_d2.iter().enumerate() {
                if target < d {
                    idx = i;
                    break;
                }
                target -= d;
            }
            idx
        };
        centers.row_mut(k).assign(&z.row(pick));
        for (i, row) in z.rows().into_iter().enumerate() {
            let diff = &row - &centers.row(k);
            let d = diff.dot(&diff);
            if d < min_d2[i] {
                min_d2[i] = d;
            }
        }
    }
    centers
}

fn assign_rows(d2: &Array2<f64>) -> (Vec<usize>, f64) {
    let mut inertia = 0.0;
    let assignments = d2
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = (0usize, f64::INFINITY);
            for (j, &d) in row.iter().enumerate() {
                if d < best.1 {
                    best = (j, d);
                }
            }
            inertia += best.1;
            best.0
        })
        .collect();
    (assignments, inertia)
}

fn lloyd(z: ArrayView2<f64>, mut centers: Array2<f64>) -> Result<ClusterResult> {
    let c = centers.nrows();
    let mut assignments;
    let mut inertia;
    loop_check_degenerate(z, c);
    let mut iter = 0;
    loop {
        let d2 = sq_distances(z, centers.view());
        let (a, i) = assign_rows(&d2);
        assignments = a;
        inertia = i;
        if iter >= LLOYD_MAX_ITERS {
            break;
        }
        iter += 1;
        let new_centers = centers_from_assignments(z, &assignments, c, &centers)?;
        let shift: f64 = (&new_centers - &centers).iter().map(|v| v * v).sum();
        centers = new_centers;
        if shift < LLOYD_TOL {
            // final re-assignment against the settled centers
            let d2 = sq_distances(z, centers.view());
            let (a, i) = assign_rows(&d2);
            assignments = a;
            inertia = i;
            break;
        }
    }
    Ok(ClusterResult { assignments, centers, inertia })
}

fn loop_check_degenerate(z: ArrayView2<f64>, c: usize) {
    if c > 1 {
        let first = z.row(0);
        if z.rows().into_iter().all(|r| r == first) {
            log::warn!("all rows identical with {c} clusters; centers will be duplicated");
        }
    }
}

fn centers_from_assignments(
    z: ArrayView2<f64>,
    assignments: &[usize],
    c: usize,
    previous: &Array2<f64>,
) -> Result<Array2<f64>> {
    let means = group_means(z, assignments, c);
    let mut centers = previous.clone();
    let mut empties = Vec::new();
    for (j, m) in means.into_iter().enumerate() {
        match m {
            Some(mean) => centers.row_mut(j).assign(&mean),
            None => empties.push(j),
        }
    }
    if !empties.is_empty() {
        reseed_empty(z, assignments, &mut centers, &empties);
    }
    Ok(centers)
}

/// Re-seed empty clusters from the points farthest from their own centers,
/// one point per empty cluster, deterministically.
fn reseed_empty(
    z: ArrayView2<f64>,
    assignments: &[usize],
    centers: &mut Array2<f64>,
    empties: &[usize],
) {
    log::warn!("re-seeding {} empty cluster(s) from farthest points", empties.len());
    let mut dist: Vec<(f64, usize)> = z
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            let diff = &row - &centers.row(assignments[i]);
            (diff.dot(&diff), i)
        })
        .collect();
    // farthest first; ties resolved by lower index for determinism
    dist.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for (k, &j) in empties.iter().enumerate() {
        let (_, idx) = dist[k.min(dist.len() - 1)];
        let row = z.row(idx).to_owned();
        centers.row_mut(j).assign(&row);
    }
}

/// Per-cluster means of `z` under a fixed assignment; empty clusters are
/// re-seeded from the farthest point with a warning.
pub fn view_centers(z: ArrayView2<f64>, y_hat: &[usize], c: usize) -> Result<Array2<f64>> {
    if y_hat.len() != z.nrows() {
        return Err(Error::LengthMismatch(y_hat.len(), z.nrows()));
    }
    if let Some(&bad) = y_hat.iter().find(|&&g| g >= c) {
        return Err(Error::Domain(format!("assignment {bad} out of range for {c} clusters")));
    }
    let means = group_means(z, y_hat, c);
    let mut centers = Array2::<f64>::zeros((c, z.ncols()));
    let mut empties = Vec::new();
    for (j, m) in means.into_iter().enumerate() {
        match m {
            Some(mean) => centers.row_mut(j).assign(&mean),
            None => empties.push(j),
        }
    }
    if !empties.is_empty() {
        reseed_empty(z, y_hat, &mut centers, &empties);
    }
    Ok(centers)
}

/// Student-t soft assignment: `q_ij ∝ (1 + ‖z_i − σ_j‖²)^{-1}`, rows sum
/// to 1.
pub fn soft_assignment(z: ArrayView2<f64>, centers: ArrayView2<f64>) -> Result<Array2<f64>> {
    if centers.nrows() == 0 {
        return Err(Error::Domain("at least one center is required".into()));
    }
    if z.ncols() != centers.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "points have {} dims, centers {}",
            z.ncols(),
            centers.ncols()
        )));
    }
    let mut q = sq_distances(z, centers);
    for mut row in q.rows_mut() {
        row.mapv_inplace(|d| 1.0 / (1.0 + d));
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    Ok(q)
}

/// Sharpened target `p_ij ∝ q_ij² / f_j` with `f_j = Σ_i q_ij`, rows
/// re-normalized; entries floored before normalization.
pub fn target_distribution(q: ArrayView2<f64>) -> Array2<f64> {
    let mut p = q.mapv(|v| v.max(PROB_FLOOR));
    let freq = p.sum_axis(Axis(0));
    for mut row in p.rows_mut() {
        for (v, &f) in row.iter_mut().zip(freq.iter()) {
            *v = (*v * *v) / f;
        }
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    p
}

/// Mean-over-rows KL divergence `Σ_j p log(p/q)` with floored arguments.
pub fn kl_mean_rows(p: ArrayView2<f64>, q: ArrayView2<f64>) -> f64 {
    assert_eq!(p.dim(), q.dim(), "distribution shapes must agree");
    let n = p.nrows() as f64;
    let mut total = 0.0;
    for (prow, qrow) in p.rows().into_iter().zip(q.rows()) {
        for (&pv, &qv) in prow.iter().zip(qrow.iter()) {
            let pv = pv.max(PROB_FLOOR);
            let qv = qv.max(PROB_FLOOR);
            total += pv * (pv / qv).ln();
        }
    }
    total / n
}

/// Self-training clustering loss:
/// `KL(P‖Q)` on the concatenated representation plus the per-view mean.
pub fn clu_loss(per_view: &[SoftAssignments], concat: &SoftAssignments) -> f64 {
    let v = per_view.len().max(1) as f64;
    let view_term: f64 = per_view
        .iter()
        .map(|sa| kl_mean_rows(sa.p.view(), sa.q.view()))
        .sum::<f64>()
        / v;
    kl_mean_rows(concat.p.view(), concat.q.view()) + view_term
}

/// Gradient of mean-rows `KL(P‖Q(Z))` with respect to `z`, holding the
/// centers and the target constant:
/// `dKL/dz_i = (2/N) Σ_j (p_ij − q_ij) (1 + ‖z_i − σ_j‖²)^{-1} (z_i − σ_j)`.
pub fn clu_grad_z(
    z: ArrayView2<f64>,
    centers: ArrayView2<f64>,
    q: ArrayView2<f64>,
    p: ArrayView2<f64>,
) -> Array2<f64> {
    let n = z.nrows();
    let c = centers.nrows();
    let mut grad = Array2::<f64>::zeros(z.dim());
    for i in 0..n {
        let zi = z.row(i);
        let mut grow = grad.row_mut(i);
        for j in 0..c {
            let cj = centers.row(j);
            let mut d2 = 0.0;
            for (a, b) in zi.iter().zip(cj.iter()) {
                let diff = a - b;
                d2 += diff * diff;
            }
            let kernel = 1.0 / (1.0 + d2);
            let coef = 2.0 / n as f64 * (p[[i, j]] - q[[i, j]]) * kernel;
            for ((g, &a), &b) in grow.iter_mut().zip(zi.iter()).zip(cj.iter()) {
                *g += coef * (a - b);
            }
        }
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn rand_mat(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeedStream::new(seed).rng("clustering-test", 0);
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn kmeans_single_cluster_is_global_mean() {
        let z = rand_mat(10, 3, 1);
        let res = kmeans(z.view(), 1, 0, 1).unwrap();
        let mean = z.mean_axis(Axis(0)).unwrap();
        for (a, b) in res.centers.row(0).iter().zip(mean.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        let want: f64 = z
            .rows()
            .into_iter()
            .map(|r| {
                let d = &r - &mean;
                d.dot(&d)
            })
            .sum();
        assert!((res.inertia - want).abs() < 1e-9);
    }

    #[test]
    fn kmeans_separates_blobs() {
        let mut rng = SeedStream::new(2).rng("t", 0);
        let n = 40;
        let z = Array2::from_shape_fn((n, 2), |(i, _)| {
            let center = if i < n / 2 { -5.0 } else { 5.0 };
            center + rng.gen_range(-0.5..0.5)
        });
        let res = kmeans(z.view(), 2, 7, 3).unwrap();
        let first = res.assignments[0];
        assert!(res.assignments[..n / 2].iter().all(|&a| a == first));
        assert!(res.assignments[n / 2..].iter().all(|&a| a != first));
    }

    #[test]
    fn kmeans_matches_bruteforce_optimum() {
        let z = rand_mat(8, 2, 3);
        let res = kmeans(z.view(), 2, 11, 10).unwrap();
        // exhaustive search over all 2^8 labelings
        let mut best = f64::INFINITY;
        for mask in 0u32..256 {
            let groups: Vec<usize> = (0..8).map(|i| ((mask >> i) & 1) as usize).collect();
            if groups.iter().all(|&g| g == 0) || groups.iter().all(|&g| g == 1) {
                continue;
            }
            let mut inertia = 0.0;
            for g in 0..2 {
                let members: Vec<usize> = (0..8).filter(|&i| groups[i] == g).collect();
                if members.is_empty() {
                    continue;
                }
                let mut mean = Array1::<f64>::zeros(2);
                for &i in &members {
                    mean += &z.row(i);
                }
                mean /= members.len() as f64;
                for &i in &members {
                    let d = &z.row(i) - &mean;
                    inertia += d.dot(&d);
                }
            }
            best = best.min(inertia);
        }
        assert!(
            (res.inertia - best).abs() <= 1e-9 * best.max(1.0),
            "kmeans inertia {} vs brute-force optimum {best}",
            res.inertia
        );
    }

    #[test]
    fn kmeans_restarts_are_monotone() {
        let z = rand_mat(30, 3, 4);
        let mut prev = f64::INFINITY;
        for restarts in 1..6 {
            let res = kmeans(z.view(), 4, 5, restarts).unwrap();
            assert!(res.inertia <= prev + 1e-12);
            prev = res.inertia;
        }
    }

    #[test]
    fn kmeans_degenerate_identical_rows() {
        let z = Array2::from_elem((6, 2), 1.5);
        let res = kmeans(z.view(), 3, 0, 2).unwrap();
        assert_eq!(res.assignments.len(), 6);
        assert!(res.inertia.abs() < 1e-12);
        for row in res.centers.rows() {
            for v in row.iter() {
                assert!((v - 1.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn soft_assignment_equidistant_is_uniform() {
        let z = array![[0.0, 0.0]];
        let centers = array![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
        let q = soft_assignment(z.view(), centers.view()).unwrap();
        for v in q.iter() {
            assert!((v - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn soft_assignment_at_center_dominates() {
        let z = array![[2.0, 0.0]];
        let centers = array![[2.0, 0.0], [-9.0, 0.0]];
        let q = soft_assignment(z.view(), centers.view()).unwrap();
        // scalar oracle: kernels 1/(1+0) and 1/(1+121)
        let k0 = 1.0;
        let k1 = 1.0 / 122.0;
        assert!((q[[0, 0]] - k0 / (k0 + k1)).abs() < 1e-12);
        assert!(q[[0, 0]] > 0.99);
    }

    #[test]
    fn soft_assignment_matches_naive_oracle() {
        let z = rand_mat(6, 2, 5);
        let centers = rand_mat(2, 2, 6);
        let q = soft_assignment(z.view(), centers.view()).unwrap();
        for i in 0..6 {
            let mut kernels = [0.0; 2];
            for j in 0..2 {
                let mut d2 = 0.0;
                for k in 0..2 {
                    let diff = z[[i, k]] - centers[[j, k]];
                    d2 += diff * diff;
                }
                kernels[j] = 1.0 / (1.0 + d2);
            }
            let sum: f64 = kernels.iter().sum();
            for j in 0..2 {
                assert!((q[[i, j]] - kernels[j] / sum).abs() < 1e-12);
            }
            assert!((q.row(i).sum() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn target_distribution_fixed_points() {
        // one-hot rows stay one-hot (up to flooring)
        let q = array![[1.0, 0.0], [0.0, 1.0]];
        let p = target_distribution(q.view());
        assert!((p[[0, 0]] - 1.0).abs() < 1e-9);
        assert!((p[[1, 1]] - 1.0).abs() < 1e-9);

        // uniform stays uniform
        let q = Array2::from_elem((4, 3), 1.0 / 3.0);
        let p = target_distribution(q.view());
        for v in p.iter() {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn target_distribution_matches_scalar_oracle() {
        let q = {
            let mut q = rand_mat(5, 3, 7).mapv(f64::abs);
            for mut row in q.rows_mut() {
                let s = row.sum();
                row.mapv_inplace(|v| v / s);
            }
            q
        };
        let p = target_distribution(q.view());
        let f: Vec<f64> = (0..3).map(|j| (0..5).map(|i| q[[i, j]]).sum()).collect();
        for i in 0..5 {
            let raw: Vec<f64> = (0..3).map(|j| q[[i, j]] * q[[i, j]] / f[j]).collect();
            let sum: f64 = raw.iter().sum();
            for j in 0..3 {
                assert!((p[[i, j]] - raw[j] / sum).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kl_basics() {
        let p = array![[1.0, 0.0]];
        let q = array![[0.5, 0.5]];
        let got = kl_mean_rows(p.view(), q.view());
        // floored zero contributes ~0; single row so the mean is the row KL
        assert!((got - (2.0f64).ln()).abs() < 1e-9, "{got}");

        let q = rand_mat(4, 3, 8).mapv(|v| v.abs() + 0.1);
        let mut qn = q.clone();
        for mut row in qn.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        assert!(kl_mean_rows(qn.view(), qn.view()).abs() < 1e-12);
    }

    #[test]
    fn kl_matches_naive_oracle_and_is_nonnegative() {
        for seed in 0..5 {
            let norm = |mut m: Array2<f64>| {
                m.mapv_inplace(f64::abs);
                for mut row in m.rows_mut() {
                    let s = row.sum();
                    row.mapv_inplace(|v| v / s);
                }
                m
            };
            let p = norm(rand_mat(6, 4, 100 + seed));
            let q = norm(rand_mat(6, 4, 200 + seed));
            let got = kl_mean_rows(p.view(), q.view());
            let mut want = 0.0;
            for i in 0..6 {
                for j in 0..4 {
                    want += p[[i, j]] * (p[[i, j]] / q[[i, j]]).ln();
                }
            }
            want /= 6.0;
            assert!((got - want).abs() < 1e-10);
            assert!(got >= 0.0);
        }
    }

    #[test]
    fn clu_grad_matches_finite_differences() {
        let mut z = rand_mat(6, 3, 9);
        let centers = rand_mat(2, 3, 10);
        let q0 = soft_assignment(z.view(), centers.view()).unwrap();
        let p = target_distribution(q0.view());
        let loss = |z: &Array2<f64>| {
            let q = soft_assignment(z.view(), centers.view()).unwrap();
            kl_mean_rows(p.view(), q.view())
        };
        let grad = clu_grad_z(z.view(), centers.view(), q0.view(), p.view());
        let step = 1e-6;
        for idx in [(0, 0), (2, 2), (5, 1)] {
            let orig = z[idx];
            z[idx] = orig + step;
            let up = loss(&z);
            z[idx] = orig - step;
            let down = loss(&z);
            z[idx] = orig;
            let fd = (up - down) / (2.0 * step);
            let an = grad[idx];
            assert!(
                (fd - an).abs() <= 1e-5 * fd.abs().max(1e-3),
                "idx {idx:?}: fd {fd} vs analytic {an}"
            );
        }
    }

    #[test]
    fn view_centers_reseeds_empty_cluster() {
        let z = rand_mat(5, 2, 11);
        let y = vec![0usize, 0, 0, 1, 1];
        let centers = view_centers(z.view(), &y, 3).unwrap();
        assert_eq!(centers.nrows(), 3);
        // the empty cluster's center must coincide with some data row
        let reseeded = centers.row(2);
        assert!(z.rows().into_iter().any(|r| r == reseeded));
    }
}
