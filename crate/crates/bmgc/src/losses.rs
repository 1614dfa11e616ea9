//! The differentiable objectives: cosine reconstruction, contrastive
//! alignment with the dominant view, similarity alignment with the node
//! features, and their assembly into the total loss.
//!
//! Every `_grad` variant returns the loss value together with hand-derived
//! gradients; the acceptance suite checks all of them against central finite
//! differences through the full model.

use ndarray::prelude::*;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{par_matmul, row_l2_normalize};
use crate::metrics::gram_self_sq;

/// Denominator floor for cosine similarities.
pub const COSINE_FLOOR: f64 = 1e-12;

/// Per-epoch loss components; `total` is their plain sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct LossBreakdown {
    pub rec: f64,
    pub adv: f64,
    pub anf: f64,
    pub clu: f64,
    pub total: f64,
}

/// Unweighted sum of the components.
pub fn assemble_total(rec: f64, adv: f64, anf: f64, clu: f64) -> LossBreakdown {
    LossBreakdown { rec, adv, anf, clu, total: rec + adv + anf + clu }
}

/// Mean cosine reconstruction error for one view:
/// `Σ_i (1 − cos(x_i, x̂_i)) / (N · V)`.
///
/// Rows whose norm falls below the floor contribute loss 1 with zero
/// gradient.
pub fn recon_cosine_loss(xv: ArrayView2<f64>, xhat: ArrayView2<f64>, v_count: usize) -> Result<f64> {
    Ok(recon_cosine_inner(xv, xhat, v_count, false)?.0)
}

/// Loss plus `d loss / d x̂`.
pub fn recon_cosine_grad(
    xv: ArrayView2<f64>,
    xhat: ArrayView2<f64>,
    v_count: usize,
) -> Result<(f64, Array2<f64>)> {
    let (loss, grad) = recon_cosine_inner(xv, xhat, v_count, true)?;
    Ok((loss, grad.unwrap()))
}

fn recon_cosine_inner(
    xv: ArrayView2<f64>,
    xhat: ArrayView2<f64>,
    v_count: usize,
    want_grad: bool,
) -> Result<(f64, Option<Array2<f64>>)> {
    if xv.dim() != xhat.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            xv.dim(),
            xhat.dim()
        )));
    }
    if v_count == 0 {
        return Err(Error::Domain("view count must be positive".into()));
    }
    let n = xv.nrows();
    let scale = 1.0 / (n as f64 * v_count as f64);
    let mut grad = want_grad.then(|| Array2::<f64>::zeros(xhat.dim()));

    let rows: Vec<(f64, Option<Vec<f64>>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let x = xv.row(i);
            let h = xhat.row(i);
            let nx = x.dot(&x).sqrt();
            let nh = h.dot(&h).sqrt();
            if nx < COSINE_FLOOR || nh < COSINE_FLOOR {
                return (1.0, want_grad.then(|| vec![0.0; h.len()]));
            }
            let dot = x.dot(&h);
            let cos = dot / (nx * nh);
            let g = want_grad.then(|| {
                // d(1-cos)/dh = -(x/(nx*nh) - dot*h/(nx*nh^3))
                let c1 = 1.0 / (nx * nh);
                let c2 = dot / (nx * nh * nh * nh);
                x.iter()
                    .zip(h.iter())
                    .map(|(&xj, &hj)| -scale * (xj * c1 - hj * c2))
                    .collect()
            });
            (1.0 - cos, g)
        })
        .collect();

    let mut loss = 0.0;
    for (i, (l, g)) in rows.into_iter().enumerate() {
        loss += l;
        if let (Some(grad), Some(g)) = (grad.as_mut(), g) {
            grad.row_mut(i).assign(&Array1::from_vec(g));
        }
    }
    Ok((loss * scale, grad))
}

/// Single-anchor contrastive term: `−log softmax_j(sim(ũ_i, w̃_j)/τ)` at
/// `j = i`, negatives drawn from every row of `candidates`.
pub fn contrastive_pair_loss(
    anchors: ArrayView2<f64>,
    candidates: ArrayView2<f64>,
    i: usize,
    tau: f64,
) -> Result<f64> {
    if tau <= 0.0 {
        return Err(Error::Domain(format!("temperature {tau} must be positive")));
    }
    if anchors.dim() != candidates.dim() {
        return Err(Error::ShapeMismatch(format!(
            "{:?} vs {:?}",
            anchors.dim(),
            candidates.dim()
        )));
    }
    let (u, _) = row_l2_normalize(anchors, COSINE_FLOOR);
    let (w, _) = row_l2_normalize(candidates, COSINE_FLOOR);
    let sims = w.dot(&u.row(i)) / tau;
    let max = sims.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + sims.mapv(|s| (s - max).exp()).sum().ln();
    Ok(lse - sims[i])
}

/// Alignment with the dominant view (both directions over all `v ≠ v_star`),
/// normalized by `1/(2N(V−1))`. Returns 0 with a warning for a single view.
pub fn adv_loss(projected: &[Array2<f64>], v_star: usize, tau: f64) -> Result<f64> {
    Ok(adv_inner(projected, v_star, tau, false)?.0)
}

/// Loss plus per-view gradients with respect to the (unnormalized)
/// projections.
pub fn adv_loss_grad(
    projected: &[Array2<f64>],
    v_star: usize,
    tau: f64,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let (loss, grads) = adv_inner(projected, v_star, tau, true)?;
    Ok((loss, grads.unwrap()))
}

fn adv_inner(
    projected: &[Array2<f64>],
    v_star: usize,
    tau: f64,
    want_grad: bool,
) -> Result<(f64, Option<Vec<Array2<f64>>>)> {
    if tau <= 0.0 {
        return Err(Error::Domain(format!("temperature {tau} must be positive")));
    }
    let v_count = projected.len();
    if v_star >= v_count {
        return Err(Error::Domain(format!(
            "dominant view {v_star} out of range for {v_count} views"
        )));
    }
    if v_count == 1 {
        log::warn!("alignment loss degenerates with a single view; returning 0");
        let grads = want_grad.then(|| vec![Array2::zeros(projected[0].dim())]);
        return Ok((0.0, grads));
    }
    let n = projected[0].nrows();
    for z in projected {
        if z.dim() != projected[0].dim() {
            return Err(Error::ShapeMismatch("projection shapes differ across views".into()));
        }
    }
    let scale = 1.0 / (2.0 * n as f64 * (v_count - 1) as f64);

    let normalized: Vec<(Array2<f64>, Vec<f64>)> = projected
        .iter()
        .map(|z| row_l2_normalize(z.view(), COSINE_FLOOR))
        .collect();

    let mut loss = 0.0;
    let mut grads_norm: Option<Vec<Array2<f64>>> =
        want_grad.then(|| projected.iter().map(|z| Array2::zeros(z.dim())).collect());

    let w = &normalized[v_star].0; // dominant-view unit rows
    for v in 0..v_count {
        if v == v_star {
            continue;
        }
        let u = &normalized[v].0;
        // S_ij = u_i · w_j (cosine), E = exp(S/tau)
        let mut e = par_matmul(u.view(), w.t());
        let diag: Vec<f64> = (0..n).map(|i| e[[i, i]]).collect();
        e.axis_iter_mut(Axis(0))
            .into_par_iter()
            .for_each(|mut row| row.mapv_inplace(|s| (s / tau).exp()));

        let row_sums: Vec<f64> = e.rows().into_iter().map(|r| r.sum()).collect();
        let col_sums: Vec<f64> = {
            let mut acc = vec![0.0; n];
            for row in e.rows() {
                let row = row.as_slice().unwrap();
                for (a, &x) in acc.iter_mut().zip(row) {
                    *a += x;
                }
            }
            acc
        };

        // both directed sums: -S_ii/tau + ln rowsum, and -S_ii/tau + ln colsum
        for i in 0..n {
            loss += -diag[i] / tau + row_sums[i].ln();
            loss += -diag[i] / tau + col_sums[i].ln();
        }

        if let Some(gn) = grads_norm.as_mut() {
            let inv_r = Array1::from_iter(row_sums.iter().map(|r| 1.0 / r));
            let inv_c = Array1::from_iter(col_sums.iter().map(|c| 1.0 / c));

            // direction v -> v*: dU += (D_r^{-1} E) W/tau - W/tau ; dW += Eᵀ (D_r^{-1} U)/tau - U/tau
            let ew = par_matmul(e.view(), w.view());
            let mut du_a = &ew * &inv_r.view().insert_axis(Axis(1));
            du_a -= w;
            du_a /= tau;

            let u_scaled = u * &inv_r.view().insert_axis(Axis(1));
            let mut dw_a = par_matmul(e.t(), u_scaled.view());
            dw_a -= u;
            dw_a /= tau;

            // direction v* -> v: dW += (D_c^{-1} Eᵀ) U/tau - U/tau ; dU += E (D_c^{-1} W)/tau - W/tau
            let etu = par_matmul(e.t(), u.view());
            let mut dw_b = &etu * &inv_c.view().insert_axis(Axis(1));
            dw_b -= u;
            dw_b /= tau;

            let w_scaled = w * &inv_c.view().insert_axis(Axis(1));
            let mut du_b = par_matmul(e.view(), w_scaled.view());
            du_b -= w;
            du_b /= tau;

            gn[v] += &du_a;
            gn[v] += &du_b;
            gn[v_star] += &dw_a;
            gn[v_star] += &dw_b;
        }
    }

    let grads = match grads_norm {
        None => None,
        Some(gn) => {
            // back through the row normalization, then apply the global scale
            let out: Vec<Array2<f64>> = gn
                .into_iter()
                .enumerate()
                .map(|(v, g)| normalize_backward(g, &normalized[v].0, &normalized[v].1, scale))
                .collect();
            Some(out)
        }
    };
    Ok((loss * scale, grads))
}

/// Gradient of row-L2 normalization: for `u = z/‖z‖`,
/// `dL/dz = (dL/du − (u·dL/du) u)/‖z‖`; zero rows get zero gradient.
fn normalize_backward(
    grad_u: Array2<f64>,
    u: &Array2<f64>,
    norms: &[f64],
    scale: f64,
) -> Array2<f64> {
    let mut out = grad_u;
    for ((mut g, urow), &r) in out.rows_mut().into_iter().zip(u.rows()).zip(norms) {
        if r < COSINE_FLOOR {
            g.fill(0.0);
            continue;
        }
        let proj = g.dot(&urow);
        for (gj, &uj) in g.iter_mut().zip(urow.iter()) {
            *gj = scale * (*gj - proj * uj) / r;
        }
    }
    out
}

/// Alignment with the node features:
/// `(1/(N²V)) Σ_v ‖XXᵀ − Z^v(Z^v)ᵀ‖_F²` via the gram expansion.
pub fn anf_loss(x: ArrayView2<f64>, z_views: &[Array2<f64>]) -> Result<f64> {
    let x_gram_sq = gram_self_sq(x);
    Ok(anf_inner(x, z_views, x_gram_sq, false)?.0)
}

/// Loss plus per-view gradients, reusing a precomputed `‖XᵀX‖_F²`.
pub fn anf_loss_grad(
    x: ArrayView2<f64>,
    z_views: &[Array2<f64>],
    x_gram_sq: f64,
) -> Result<(f64, Vec<Array2<f64>>)> {
    let (loss, grads) = anf_inner(x, z_views, x_gram_sq, true)?;
    Ok((loss, grads.unwrap()))
}

fn anf_inner(
    x: ArrayView2<f64>,
    z_views: &[Array2<f64>],
    x_gram_sq: f64,
    want_grad: bool,
) -> Result<(f64, Option<Vec<Array2<f64>>>)> {
    if z_views.is_empty() {
        return Err(Error::Domain("at least one view is required".into()));
    }
    let n = x.nrows();
    let v_count = z_views.len();
    let scale = 1.0 / ((n * n) as f64 * v_count as f64);
    let mut loss = 0.0;
    let mut grads = want_grad.then(Vec::new);
    for z in z_views {
        if z.nrows() != n {
            return Err(Error::ShapeMismatch(format!(
                "view has {} rows, features have {n}",
                z.nrows()
            )));
        }
        let zz = par_matmul(z.t(), z.view());
        let xz = par_matmul(x.t(), z.view());
        let raw = x_gram_sq + zz.iter().map(|v| v * v).sum::<f64>()
            - 2.0 * xz.iter().map(|v| v * v).sum::<f64>();
        loss += raw.max(0.0);
        if let Some(gs) = grads.as_mut() {
            // d/dZ ‖XXᵀ−ZZᵀ‖² = 4 Z(ZᵀZ) − 4 X(XᵀZ)
            let mut g = par_matmul(z.view(), zz.view());
            g -= &par_matmul(x, xz.view());
            g *= 4.0 * scale;
            gs.push(g);
        }
    }
    Ok((loss * scale, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedStream;
    use rand::Rng;

    fn rand_mat(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = SeedStream::new(seed).rng("losses-test", 0);
        Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn recon_perfect_and_flipped() {
        let x = rand_mat(5, 3, 1);
        assert!(recon_cosine_loss(x.view(), x.view(), 1).unwrap().abs() < 1e-12);
        let flipped = &x * -1.0;
        let loss = recon_cosine_loss(x.view(), flipped.view(), 1).unwrap();
        assert!((loss - 2.0).abs() < 1e-12);
    }

    #[test]
    fn recon_matches_scalar_oracle() {
        let x = rand_mat(5, 3, 2);
        let h = rand_mat(5, 3, 3);
        let mut want = 0.0;
        for i in 0..5 {
            let (mut dot, mut nx, mut nh) = (0.0, 0.0, 0.0);
            for j in 0..3 {
                dot += x[[i, j]] * h[[i, j]];
                nx += x[[i, j]] * x[[i, j]];
                nh += h[[i, j]] * h[[i, j]];
            }
            want += 1.0 - dot / (nx.sqrt() * nh.sqrt());
        }
        want /= 5.0;
        let got = recon_cosine_loss(x.view(), h.view(), 1).unwrap();
        assert!((got - want).abs() < 1e-10);
    }

    #[test]
    fn recon_zero_row_contributes_one_with_zero_grad() {
        let x = array![[1.0, 0.0], [0.0, 0.0]];
        let h = array![[1.0, 0.0], [1.0, 1.0]];
        // row 0 perfect (0), row 1 has a zero x-row (1): mean 0.5
        let (loss, grad) = recon_cosine_grad(x.view(), h.view(), 1).unwrap();
        assert!((loss - 0.5).abs() < 1e-12);
        assert_eq!(grad.row(1), ndarray::ArrayView1::from(&[0.0, 0.0][..]));
    }

    #[test]
    fn recon_grad_matches_finite_differences() {
        let x = rand_mat(4, 3, 4);
        let mut h = rand_mat(4, 3, 5);
        let (_, grad) = recon_cosine_grad(x.view(), h.view(), 2).unwrap();
        let step = 1e-6;
        for idx in [(0, 0), (1, 2), (3, 1)] {
            let orig = h[idx];
            h[idx] = orig + step;
            let up = recon_cosine_loss(x.view(), h.view(), 2).unwrap();
            h[idx] = orig - step;
            let down = recon_cosine_loss(x.view(), h.view(), 2).unwrap();
            h[idx] = orig;
            let fd = (up - down) / (2.0 * step);
            assert!(
                (fd - grad[idx]).abs() <= 1e-6 * fd.abs().max(1.0),
                "idx {idx:?}: fd {fd} vs {g}",
                g = grad[idx]
            );
        }
    }

    #[test]
    fn contrastive_identical_rows_is_log_n() {
        let z = Array2::from_elem((6, 3), 0.7);
        let loss = contrastive_pair_loss(z.view(), z.view(), 2, 1.0).unwrap();
        assert!((loss - (6.0f64).ln()).abs() < 1e-10);
    }

    #[test]
    fn contrastive_two_point_closed_form() {
        // positive pair at cosine +1, negative at -1, tau = 1:
        // loss = ln(1 + e^{-2})
        let anchors = array![[1.0, 0.0], [1.0, 0.0]];
        let candidates = array![[1.0, 0.0], [-1.0, 0.0]];
        let loss = contrastive_pair_loss(anchors.view(), candidates.view(), 0, 1.0).unwrap();
        let want = (1.0 + (-2.0f64).exp()).ln();
        assert!((loss - want).abs() < 1e-12, "{loss} vs {want}");
    }

    #[test]
    fn contrastive_matches_direct_softmax_oracle() {
        let a = rand_mat(8, 4, 6);
        let b = rand_mat(8, 4, 7);
        for i in [0usize, 3, 7] {
            let got = contrastive_pair_loss(a.view(), b.view(), i, 0.7).unwrap();
            // naive: normalize, similarities, softmax
            let norm = |v: ArrayView1<f64>| {
                let n = v.dot(&v).sqrt();
                v.mapv(|x| x / n)
            };
            let ai = norm(a.row(i));
            let sims: Vec<f64> = (0..8).map(|j| norm(b.row(j)).dot(&ai) / 0.7).collect();
            let denom: f64 = sims.iter().map(|s| s.exp()).sum();
            let want = -(sims[i].exp() / denom).ln();
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    #[test]
    fn contrastive_rejects_bad_tau() {
        let z = rand_mat(3, 2, 8);
        assert!(contrastive_pair_loss(z.view(), z.view(), 0, 0.0).is_err());
        assert!(contrastive_pair_loss(z.view(), z.view(), 0, -1.0).is_err());
    }

    #[test]
    fn adv_identical_constant_projections_is_log_n() {
        let z = Array2::from_elem((5, 3), 1.0);
        let views = vec![z.clone(), z.clone(), z.clone()];
        let loss = adv_loss(&views, 0, 1.0).unwrap();
        assert!((loss - (5.0f64).ln()).abs() < 1e-10, "{loss}");
    }

    #[test]
    fn adv_single_view_is_zero() {
        let views = vec![rand_mat(4, 2, 9)];
        assert_eq!(adv_loss(&views, 0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn adv_matches_pairwise_oracle() {
        let views = vec![rand_mat(6, 3, 10), rand_mat(6, 3, 11), rand_mat(6, 3, 12)];
        let v_star = 1;
        let tau = 0.8;
        let got = adv_loss(&views, v_star, tau).unwrap();
        let mut want = 0.0;
        for (v, z) in views.iter().enumerate() {
            if v == v_star {
                continue;
            }
            for i in 0..6 {
                want += contrastive_pair_loss(z.view(), views[v_star].view(), i, tau).unwrap();
                want += contrastive_pair_loss(views[v_star].view(), z.view(), i, tau).unwrap();
            }
        }
        want /= 2.0 * 6.0 * 2.0;
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }

    #[test]
    fn adv_grad_matches_finite_differences() {
        let mut views = vec![rand_mat(5, 3, 13), rand_mat(5, 3, 14), rand_mat(5, 3, 15)];
        let (_, grads) = adv_loss_grad(&views, 0, 1.0).unwrap();
        let step = 1e-6;
        for v in 0..3 {
            for idx in [(0, 0), (2, 1), (4, 2)] {
                let orig = views[v][idx];
                views[v][idx] = orig + step;
                let up = adv_loss(&views, 0, 1.0).unwrap();
                views[v][idx] = orig - step;
                let down = adv_loss(&views, 0, 1.0).unwrap();
                views[v][idx] = orig;
                let fd = (up - down) / (2.0 * step);
                let an = grads[v][idx];
                assert!(
                    (fd - an).abs() <= 1e-5 * fd.abs().max(1e-2),
                    "view {v} idx {idx:?}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn adv_invariant_under_common_row_permutation() {
        let views = vec![rand_mat(6, 3, 16), rand_mat(6, 3, 17)];
        let perm = [4usize, 2, 0, 5, 1, 3];
        let permuted: Vec<Array2<f64>> =
            views.iter().map(|z| z.select(Axis(0), &perm)).collect();
        let a = adv_loss(&views, 0, 1.0).unwrap();
        let b = adv_loss(&permuted, 0, 1.0).unwrap();
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn anf_zero_for_identity_and_rotation() {
        let x = rand_mat(7, 3, 18);
        assert_eq!(anf_loss(x.view(), &[x.clone()]).unwrap(), 0.0);
        let (c, s) = (0.28f64, 0.96f64);
        let mut rot = Array2::eye(3);
        rot[[0, 0]] = c;
        rot[[0, 1]] = -s;
        rot[[1, 0]] = s;
        rot[[1, 1]] = c;
        let z = x.dot(&rot);
        assert!(anf_loss(x.view(), &[z]).unwrap() < 1e-10);
    }

    #[test]
    fn anf_matches_direct_oracle() {
        let x = rand_mat(10, 4, 19);
        let views = vec![rand_mat(10, 3, 20), rand_mat(10, 3, 21)];
        let got = anf_loss(x.view(), &views).unwrap();
        let mut want = 0.0;
        for z in &views {
            let d = x.dot(&x.t()) - z.dot(&z.t());
            want += d.iter().map(|v| v * v).sum::<f64>();
        }
        want /= 100.0 * 2.0;
        assert!((got - want).abs() <= 1e-8 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn anf_grad_matches_finite_differences() {
        let x = rand_mat(6, 4, 22);
        let mut views = vec![rand_mat(6, 3, 23), rand_mat(6, 3, 24)];
        let xg = gram_self_sq(x.view());
        let (_, grads) = anf_loss_grad(x.view(), &views, xg).unwrap();
        let step = 1e-6;
        for v in 0..2 {
            for idx in [(0, 0), (3, 2), (5, 1)] {
                let orig = views[v][idx];
                views[v][idx] = orig + step;
                let up = anf_loss(x.view(), &views).unwrap();
                views[v][idx] = orig - step;
                let down = anf_loss(x.view(), &views).unwrap();
                views[v][idx] = orig;
                let fd = (up - down) / (2.0 * step);
                let an = grads[v][idx];
                assert!(
                    (fd - an).abs() <= 1e-5 * fd.abs().max(1e-3),
                    "view {v} idx {idx:?}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn totals_are_plain_sums() {
        let b = assemble_total(0.0, 0.0, 0.0, 0.0);
        assert_eq!(b.total, 0.0);
        let b = assemble_total(1.0, 2.0, 3.0, 4.0);
        assert_eq!(b.total, 10.0);
        let mut rng = SeedStream::new(25).rng("t", 0);
        for _ in 0..20 {
            let parts: Vec<f64> = (0..4).map(|_| rng.gen_range(-5.0..5.0)).collect();
            let b = assemble_total(parts[0], parts[1], parts[2], parts[3]);
            assert!((b.total - parts.iter().sum::<f64>()).abs() < 1e-12);
        }
    }
}
