//! Numeric verification of the two-block analysis behind dominant-view
//! mining, run on the expected adjacency matrix with Monte Carlo over the
//! feature noise.
//!
//! The two claims checked here: K-hop aggregation on the expected normalized
//! adjacency leaves `λ₂ᴷ F + (1−λ₂ᴷ)𝟙μ̄ᵀ` plus block-constant Gaussian noise
//! of variance `(1+λ₂^{2K})σ²/N`; and the expected community-centroid gap is
//! `λ₂ᴷ(μ₁−μ₂)` while the feature-gram discrepancy decreases strictly in
//! λ₂², which is what makes the gram argmin pick the structurally purest
//! view.

use ndarray::prelude::*;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::cross_gram_frob_sq;
use crate::seed::SeedStream;

/// Two equal communities with SBM edge probabilities `p` (intra) and `q`
/// (inter), community feature means `mu1`/`mu2` of equal norm, isotropic
/// feature noise `sigma`, and aggregation depth `hops`.
#[derive(Debug, Clone)]
pub struct TwoBlockModel {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub mu1: Array1<f64>,
    pub mu2: Array1<f64>,
    pub sigma: f64,
    pub hops: usize,
}

impl TwoBlockModel {
    pub fn new(
        n: usize,
        p: f64,
        q: f64,
        mu1: Array1<f64>,
        mu2: Array1<f64>,
        sigma: f64,
        hops: usize,
    ) -> Result<Self> {
        if n < 2 || n % 2 != 0 {
            return Err(Error::Domain(format!("node count {n} must be even and at least 2")));
        }
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            return Err(Error::Domain("edge probabilities must lie in [0, 1]".into()));
        }
        if p + q <= 0.0 {
            return Err(Error::Domain("p + q must be positive".into()));
        }
        if mu1.len() != mu2.len() {
            return Err(Error::ShapeMismatch("mean vectors differ in length".into()));
        }
        let n1 = mu1.dot(&mu1).sqrt();
        let n2 = mu2.dot(&mu2).sqrt();
        if (n1 - n2).abs() > 1e-9 * n1.max(1.0) {
            return Err(Error::Domain(format!(
                "mean vectors must share one norm ({n1} vs {n2})"
            )));
        }
        if sigma < 0.0 {
            return Err(Error::Domain("sigma must be nonnegative".into()));
        }
        Ok(Self { n, p, q, mu1, mu2, sigma, hops })
    }

    pub fn lambda2(&self) -> f64 {
        (self.p - self.q) / (self.p + self.q)
    }

    fn half(&self) -> usize {
        self.n / 2
    }

    /// `F = c1 μ1ᵀ + c2 μ2ᵀ`.
    fn mean_matrix(&self) -> Array2<f64> {
        let d = self.mu1.len();
        let mut f = Array2::<f64>::zeros((self.n, d));
        for i in 0..self.n {
            let mu = if i < self.half() { &self.mu1 } else { &self.mu2 };
            f.row_mut(i).assign(mu);
        }
        f
    }

    /// Noiseless K-hop image `λ₂ᴷ F + (1−λ₂ᴷ)𝟙μ̄ᵀ`.
    fn aggregated_mean_matrix(&self) -> Array2<f64> {
        let lk = self.lambda2().powi(self.hops as i32);
        let mu_bar = (&self.mu1 + &self.mu2) * 0.5;
        let mut f = self.mean_matrix() * lk;
        for mut row in f.rows_mut() {
            row.scaled_add(1.0 - lk, &mu_bar);
        }
        f
    }

    fn sample_noise(&self, rng: &mut impl rand::Rng) -> Array2<f64> {
        let d = self.mu1.len();
        Array2::from_shape_fn((self.n, d), |_| {
            self.sigma * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng)
        })
    }
}

/// Degree-normalized expected adjacency: the blockwise p/q matrix divided by
/// `(N/2)(p+q)`. Exactly rank 2 with eigenpairs `(1, 𝟙/√N)` and
/// `(λ₂, (c1−c2)/√N)`.
pub fn expected_adjacency(m: &TwoBlockModel) -> Array2<f64> {
    let scale = 1.0 / ((m.n / 2) as f64 * (m.p + m.q));
    Array2::from_shape_fn((m.n, m.n), |(i, j)| {
        let same = (i < m.half()) == (j < m.half());
        if same {
            m.p * scale
        } else {
            m.q * scale
        }
    })
}

fn matrix_power_apply(a: &Array2<f64>, x: &Array2<f64>, k: usize) -> Array2<f64> {
    let mut cur = x.clone();
    for _ in 0..k {
        cur = a.dot(&cur);
    }
    cur
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanCheck {
    pub max_abs_deviation: f64,
    pub max_standardized_deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceCheck {
    pub predicted: f64,
    pub empirical: f64,
    pub relative_error: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Report {
    /// Max elementwise error of the noiseless algebra (always evaluated).
    pub noiseless_max_error: f64,
    pub noiseless_exact: bool,
    pub mean: MeanCheck,
    pub variance: VarianceCheck,
    pub pass: bool,
}

/// Check the aggregated-feature decomposition: the Monte-Carlo mean of
/// `AᴷX` must match the noiseless image within 4 standard errors
/// elementwise, and the block-noise variance must match
/// `(1+λ₂^{2K})σ²/N` within 15%.
pub fn lemma1_check(m: &TwoBlockModel, trials: usize, seed: u64) -> Result<Lemma1Report> {
    if trials < 100 {
        return Err(Error::Config(format!("at least 100 trials required, got {trials}")));
    }
    let a = expected_adjacency(m);
    let f = m.mean_matrix();
    let f_agg = m.aggregated_mean_matrix();
    let d = m.mu1.len();

    // noiseless branch is pure algebra and must be exact
    let noiseless = matrix_power_apply(&a, &f, m.hops);
    let noiseless_max_error = (&noiseless - &f_agg)
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    let noiseless_exact = noiseless_max_error < 1e-9;

    let stream = SeedStream::new(seed);
    let mut sum = Array2::<f64>::zeros((m.n, d));
    let mut sumsq = Array2::<f64>::zeros((m.n, d));
    let mut noise_samples: Vec<f64> = Vec::with_capacity(trials * 2 * d);
    for t in 0..trials {
        let mut rng = stream.rng("lemma1-trial", t as u64);
        let x = &f + &m.sample_noise(&mut rng);
        let agg = matrix_power_apply(&a, &x, m.hops);
        // rows are block-constant in the noise; rows 0 and n/2 carry the
        // two per-community noise vectors
        for &row in &[0usize, m.half()] {
            for j in 0..d {
                noise_samples.push(agg[[row, j]] - f_agg[[row, j]]);
            }
        }
        sum += &agg;
        sumsq += &agg.mapv(|v| v * v);
    }
    let tf = trials as f64;
    let mean = &sum / tf;
    let mut max_abs = 0.0f64;
    let mut max_std = 0.0f64;
    let mut mean_pass = true;
    for i in 0..m.n {
        for j in 0..d {
            let dev = (mean[[i, j]] - f_agg[[i, j]]).abs();
            let var = (sumsq[[i, j]] / tf - mean[[i, j]] * mean[[i, j]]).max(0.0);
            let se = (var / tf).sqrt();
            max_abs = max_abs.max(dev);
            if se > 0.0 {
                max_std = max_std.max(dev / se);
                if dev > 4.0 * se {
                    mean_pass = false;
                }
            } else if dev > 1e-9 {
                mean_pass = false;
            }
        }
    }

    let lk2 = m.lambda2().powi(2 * m.hops as i32);
    let predicted_var = (1.0 + lk2) * m.sigma * m.sigma / m.n as f64;
    let empirical_var = if m.sigma == 0.0 {
        0.0
    } else {
        let mean_noise: f64 = noise_samples.iter().sum::<f64>() / noise_samples.len() as f64;
        noise_samples
            .iter()
            .map(|v| (v - mean_noise) * (v - mean_noise))
            .sum::<f64>()
            / (noise_samples.len() - 1) as f64
    };
    let (rel_err, var_pass) = if m.sigma == 0.0 {
        (0.0, true)
    } else {
        let rel = (empirical_var - predicted_var).abs() / predicted_var;
        (rel, rel <= 0.15)
    };

    let mean = MeanCheck {
        max_abs_deviation: max_abs,
        max_standardized_deviation: max_std,
        pass: mean_pass,
    };
    let variance = VarianceCheck {
        predicted: predicted_var,
        empirical: empirical_var,
        relative_error: rel_err,
        pass: var_pass,
    };
    let pass = noiseless_exact && mean.pass && variance.pass;
    Ok(Lemma1Report { noiseless_max_error, noiseless_exact, mean, variance, pass })
}

#[derive(Debug, Clone, Serialize)]
pub struct OrderingCheck {
    pub lambda2: Vec<f64>,
    pub mean_metric: Vec<f64>,
    /// Metric strictly decreasing in λ₂²?
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Report {
    pub centroid: MeanCheck,
    pub ordering: OrderingCheck,
    /// ‖σ²-terms‖_F / ‖main term‖_F, reported for inspection (not asserted).
    pub omega_ratio: f64,
    /// (‖μ‖² − μ₁ᵀμ₂) / (d_f σ²); a warning is logged below 20.
    pub signal_noise_ratio: f64,
    pub pass: bool,
}

/// Check the expected centroid gap `λ₂ᴷ(μ₁−μ₂)` on `m` and the strict
/// monotone ordering of the mean gram discrepancy across views built from
/// `view_lambda2s` (same `p+q` mass, varying `λ₂`).
pub fn theorem1_check(
    m: &TwoBlockModel,
    view_lambda2s: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Theorem1Report> {
    if trials < 100 {
        return Err(Error::Config(format!("at least 100 trials required, got {trials}")));
    }
    if view_lambda2s.len() < 2 {
        return Err(Error::Config("at least two views are needed for the ordering check".into()));
    }
    let d = m.mu1.len();
    let mu_norm_sq = m.mu1.dot(&m.mu1);
    let cross = m.mu1.dot(&m.mu2);
    let noise_mag = d as f64 * m.sigma * m.sigma;
    let signal_noise_ratio = if noise_mag > 0.0 {
        (mu_norm_sq - cross) / noise_mag
    } else {
        f64::INFINITY
    };
    if signal_noise_ratio < 20.0 {
        log::warn!(
            "signal-to-noise ratio {signal_noise_ratio:.2} below 20; sigma terms may not be negligible"
        );
    }

    let stream = SeedStream::new(seed);
    let f = m.mean_matrix();
    let lk = m.lambda2().powi(m.hops as i32);
    let target_gap = (&m.mu1 - &m.mu2) * lk;

    // centroid gap across trials on the base model
    let a = expected_adjacency(m);
    let mut gaps = Array2::<f64>::zeros((trials, d));
    for t in 0..trials {
        let mut rng = stream.rng("theorem1-centroid", t as u64);
        let x = &f + &m.sample_noise(&mut rng);
        let agg = matrix_power_apply(&a, &x, m.hops);
        let c1 = agg.slice(s![..m.half(), ..]).mean_axis(Axis(0)).unwrap();
        let c2 = agg.slice(s![m.half().., ..]).mean_axis(Axis(0)).unwrap();
        gaps.row_mut(t).assign(&(&c1 - &c2));
    }
    let mean_gap = gaps.mean_axis(Axis(0)).unwrap();
    let mut centroid_pass = true;
    let mut max_abs = 0.0f64;
    let mut max_std = 0.0f64;
    for j in 0..d {
        let dev = (mean_gap[j] - target_gap[j]).abs();
        let var = gaps
            .column(j)
            .iter()
            .map(|v| (v - mean_gap[j]) * (v - mean_gap[j]))
            .sum::<f64>()
            / (trials as f64 - 1.0);
        let se = (var / trials as f64).sqrt();
        max_abs = max_abs.max(dev);
        if se > 0.0 {
            max_std = max_std.max(dev / se);
            if dev > 4.0 * se {
                centroid_pass = false;
            }
        } else if dev > 1e-9 {
            centroid_pass = false;
        }
    }

    // ordering of the mean gram discrepancy across views sharing p+q
    let mass = m.p + m.q;
    let mut view_adjacencies = Vec::new();
    for &l2 in view_lambda2s {
        if !(-1.0..=1.0).contains(&l2) {
            return Err(Error::Domain(format!("lambda2 {l2} outside [-1, 1]")));
        }
        let p = mass * (1.0 + l2) / 2.0;
        let q = mass * (1.0 - l2) / 2.0;
        let view = TwoBlockModel { p, q, ..m.clone() };
        view_adjacencies.push(expected_adjacency(&view));
    }
    let mut mean_metric = vec![0.0; view_lambda2s.len()];
    for t in 0..trials {
        let mut rng = stream.rng("theorem1-ordering", t as u64);
        let x = &f + &m.sample_noise(&mut rng);
        let x_gram_sq = cross_gram_frob_sq(x.view(), x.view());
        for (v, av) in view_adjacencies.iter().enumerate() {
            let agg = matrix_power_apply(av, &x, m.hops);
            let metric = x_gram_sq + cross_gram_frob_sq(agg.view(), agg.view())
                - 2.0 * cross_gram_frob_sq(x.view(), agg.view());
            mean_metric[v] += metric.max(0.0);
        }
    }
    for v in mean_metric.iter_mut() {
        *v /= trials as f64;
    }
    let mut order: Vec<usize> = (0..view_lambda2s.len()).collect();
    order.sort_by(|&a, &b| {
        (view_lambda2s[a] * view_lambda2s[a])
            .partial_cmp(&(view_lambda2s[b] * view_lambda2s[b]))
            .unwrap()
    });
    let mut ordering_pass = true;
    for w in order.windows(2) {
        // larger λ₂² must give a strictly smaller metric
        if mean_metric[w[1]] >= mean_metric[w[0]] {
            ordering_pass = false;
        }
    }

    // σ²-term magnitude relative to the main term, from the closed forms
    let lk2 = m.lambda2().powi(2 * m.hops as i32);
    let main_coef = (1.0 - lk2) / 2.0 * (mu_norm_sq - cross);
    let half = m.half() as f64;
    // main term: coef * (c1c1ᵀ + c2c2ᵀ − c1c2ᵀ − c2c1ᵀ), Frobenius norm
    let main_norm = main_coef.abs() * (4.0 * half * half).sqrt();
    let s2 = m.sigma * m.sigma;
    let df = d as f64;
    // ω = d_fσ²I − (d_fσ²/N)(1+λ₂^{2K})(c1c1ᵀ+c2c2ᵀ) − (d_fσ²/N)(1−λ₂^{2K})(c1c2ᵀ+c2c1ᵀ)
    let nn = m.n as f64;
    let mut omega_sq = 0.0;
    let diag_block = df * s2 * (1.0 + lk2) / nn; // subtracted inside blocks
    let off_block = df * s2 * (1.0 - lk2) / nn;
    // diagonal entries: d_fσ² − diag_block; off-diagonal same-block: −diag_block
    omega_sq += nn * (df * s2 - diag_block) * (df * s2 - diag_block);
    omega_sq += (2.0 * half * half - nn) * diag_block * diag_block;
    omega_sq += 2.0 * half * half * off_block * off_block;
    let omega_ratio = if main_norm > 0.0 { omega_sq.sqrt() / main_norm } else { f64::INFINITY };

    let centroid = MeanCheck {
        max_abs_deviation: max_abs,
        max_standardized_deviation: max_std,
        pass: centroid_pass,
    };
    let ordering = OrderingCheck {
        lambda2: view_lambda2s.to_vec(),
        mean_metric,
        pass: ordering_pass,
    };
    let pass = centroid.pass && ordering.pass;
    Ok(Theorem1Report { centroid, ordering, omega_ratio, signal_noise_ratio, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_model(p: f64, q: f64, sigma: f64, hops: usize) -> TwoBlockModel {
        let mu1 = array![6.0, 0.0, 1.0, 0.0];
        let mu2 = array![0.0, 6.0, 0.0, 1.0];
        TwoBlockModel::new(40, p, q, mu1, mu2, sigma, hops).unwrap()
    }

    #[test]
    fn expected_adjacency_eigenstructure() {
        let m = base_model(0.3, 0.1, 0.5, 3);
        let a = expected_adjacency(&m);
        let n = m.n;
        // eigenpair (1, 1/sqrt(N))
        let ones = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
        let a1 = a.dot(&ones);
        for (got, want) in a1.iter().zip(ones.iter()) {
            assert!((got - want).abs() < 1e-12);
        }
        // eigenpair (lambda2, (c1 - c2)/sqrt(N)); lambda2 = 0.5 here
        let mut signed = Array1::from_elem(n, 1.0 / (n as f64).sqrt());
        for i in n / 2..n {
            signed[i] = -signed[i];
        }
        let a2 = a.dot(&signed);
        for (got, want) in a2.iter().zip(signed.iter()) {
            assert!((got - 0.5 * want).abs() < 1e-9);
        }
        // rank 2: residual after removing both known eigenpairs vanishes
        let q1 = ones.view().insert_axis(Axis(1));
        let q2 = signed.view().insert_axis(Axis(1));
        let reconstruction = q1.dot(&q1.t()) + 0.5 * q2.dot(&q2.t());
        let resid = (&a - &reconstruction).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(resid < 1e-9, "residual {resid}");
    }

    #[test]
    fn expected_adjacency_extremes() {
        // p = q: second eigenvalue 0
        let m = base_model(0.2, 0.2, 0.0, 1);
        assert_eq!(m.lambda2(), 0.0);
        // q = 0: two disconnected blocks, lambda2 = 1
        let m = base_model(0.2, 0.0, 0.0, 1);
        assert_eq!(m.lambda2(), 1.0);
    }

    #[test]
    fn lemma1_noiseless_is_exact() {
        let m = base_model(0.3, 0.1, 0.0, 3);
        let report = lemma1_check(&m, 100, 1).unwrap();
        assert!(report.noiseless_exact, "max err {}", report.noiseless_max_error);
        assert!(report.pass);
    }

    #[test]
    fn lemma1_homophily_fixed_point() {
        // q = 0 gives lambda2 = 1: the aggregated mean equals F
        let m = base_model(0.3, 0.0, 0.4, 4);
        let f = m.mean_matrix();
        let agg = m.aggregated_mean_matrix();
        assert_eq!(f, agg);
        let report = lemma1_check(&m, 200, 2).unwrap();
        assert!(report.mean.pass);
    }

    #[test]
    fn lemma1_monte_carlo_passes() {
        let m = base_model(0.3, 0.1, 0.5, 3);
        let report = lemma1_check(&m, 400, 3).unwrap();
        assert!(report.pass, "{report:?}");
    }

    #[test]
    fn theorem1_centroid_gap_at_lambda_zero() {
        let m = base_model(0.2, 0.2, 0.3, 3);
        let report = theorem1_check(&m, &[0.9, 0.5, 0.1], 150, 4).unwrap();
        // lambda2 = 0: expected gap is zero; the check must pass
        assert!(report.centroid.pass, "{report:?}");
    }

    #[test]
    fn theorem1_ordering_and_pure_structures() {
        let m = base_model(0.3, 0.1, 0.3, 3);
        let report = theorem1_check(&m, &[0.9, 0.5, 0.1], 200, 5).unwrap();
        assert!(report.ordering.pass, "{report:?}");
        // ascending metric as lambda2 falls
        assert!(report.ordering.mean_metric[0] < report.ordering.mean_metric[1]);
        assert!(report.ordering.mean_metric[1] < report.ordering.mean_metric[2]);

        // pure homophily vs pure heterophily with even K: near-identical metric
        let even = TwoBlockModel { hops: 2, ..m.clone() };
        let report = theorem1_check(&even, &[1.0, -1.0], 200, 6).unwrap();
        let a = report.ordering.mean_metric[0];
        let b = report.ordering.mean_metric[1];
        let rel = (a - b).abs() / a.max(b).max(1e-12);
        assert!(rel < 1e-9, "pure structures differ: {a} vs {b}");
    }
}
