//! Contextual SBM benchmark generator: two balanced classes, class-driven
//! Gaussian features, homophily controlled by a single parameter, plus a
//! multi-view variant with controlled edge-noise imbalance and the
//! homophily/distance/probe sweep harness.

use ndarray::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::graph::{Labels, MultiRelationalGraph};
use crate::metrics::{acd, edge_homophily, linear_probe};
use crate::propagate::sgc_aggregate;
use crate::seed::SeedStream;
use crate::sparse::{normalize_adjacency, SparseAdjacency};

#[derive(Debug, Clone, Serialize)]
pub struct CsbmParams {
    pub n: usize,
    pub d_f: usize,
    pub avg_degree: f64,
    pub epsilon: f64,
    pub phi: f64,
    pub seed: u64,
}

impl CsbmParams {
    /// Standard benchmark scale: N=5000, d_f=2000, degree 5, epsilon 3.25.
    pub fn with_defaults(phi: f64, seed: u64) -> Self {
        Self { n: 5000, d_f: 2000, avg_degree: 5.0, epsilon: 3.25, phi, seed }
    }

    pub fn xi(&self) -> f64 {
        self.n as f64 / self.d_f as f64
    }
}

/// Map the homophily control `phi` to the structure/feature strengths:
/// `lambda = sqrt(1+eps)·sin(phi·π/2)`, `mu = sqrt(xi(1+eps))·cos(phi·π/2)`.
/// The pair satisfies `lambda² + mu²/xi = 1 + eps` and round-trips through
/// `phi = (2/π)·atan(lambda·sqrt(xi)/mu)`.
pub fn phi_to_lambda_mu(phi: f64, xi: f64, epsilon: f64) -> Result<(f64, f64)> {
    if !(-1.0..=1.0).contains(&phi) {
        return Err(Error::Domain(format!("phi {phi} outside [-1, 1]")));
    }
    if epsilon <= 0.0 || xi <= 0.0 {
        return Err(Error::Domain("xi and epsilon must be positive".into()));
    }
    let angle = phi * std::f64::consts::FRAC_PI_2;
    let lambda = (1.0 + epsilon).sqrt() * angle.sin();
    let mu = (xi * (1.0 + epsilon)).sqrt() * angle.cos();
    Ok((lambda, mu))
}

fn generate_labels(n: usize) -> Result<Labels> {
    if n < 2 || n % 2 != 0 {
        return Err(Error::Domain(format!("node count {n} must be even and at least 2")));
    }
    // first half carries class sign -1 (label 0), second half +1 (label 1)
    let ids: Vec<usize> = (0..n).map(|i| (i >= n / 2) as usize).collect();
    Labels::new(ids, 2)
}

fn class_sign(labels: &Labels, i: usize) -> f64 {
    if labels.ids()[i] == 0 {
        -1.0
    } else {
        1.0
    }
}

fn generate_features(p: &CsbmParams, labels: &Labels, stream: &SeedStream) -> Array2<f64> {
    let mut rng_u = stream.rng("csbm-u", 0);
    let inv_sqrt_df = 1.0 / (p.d_f as f64).sqrt();
    let u: Vec<f64> = (0..p.d_f)
        .map(|_| rng_u.sample::<f64, _>(StandardNormal) * inv_sqrt_df)
        .collect();
    let (_, mu) = phi_to_lambda_mu(p.phi, p.xi(), p.epsilon).expect("validated");
    let signal_scale = (mu / p.n as f64).sqrt();

    let mut rng_h = stream.rng("csbm-h", 0);
    let mut x = Array2::<f64>::zeros((p.n, p.d_f));
    for i in 0..p.n {
        let sign = class_sign(labels, i);
        let mut row = x.row_mut(i);
        for (j, v) in row.iter_mut().enumerate() {
            let noise: f64 = rng_h.sample(StandardNormal);
            let value = signal_scale * sign * u[j] + noise * inv_sqrt_df;
            // quantize to f32 so written datasets round-trip exactly
            *v = value as f32 as f64;
        }
    }
    x
}

fn generate_edges(
    p: &CsbmParams,
    labels: &Labels,
    stream: &SeedStream,
    view: u64,
) -> Result<SparseAdjacency> {
    let (lambda, _) = phi_to_lambda_mu(p.phi, p.xi(), p.epsilon)?;
    let sqrt_d = p.avg_degree.sqrt();
    let p_same = (p.avg_degree + lambda * sqrt_d) / p.n as f64;
    let p_diff = (p.avg_degree - lambda * sqrt_d) / p.n as f64;
    for (name, prob) in [("intra", p_same), ("inter", p_diff)] {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::Domain(format!(
                "{name}-class edge probability {prob} outside [0, 1]"
            )));
        }
    }
    let mut rng = stream.rng("csbm-edges", view);
    let mut edges = Vec::new();
    for i in 0..p.n {
        let yi = labels.ids()[i];
        for j in (i + 1)..p.n {
            let prob = if yi == labels.ids()[j] { p_same } else { p_diff };
            if rng.gen::<f64>() < prob {
                edges.push((i, j, 1.0));
            }
        }
    }
    SparseAdjacency::from_edges(p.n, &edges)
}

/// One contextual-SBM view: adjacency, features, balanced binary labels.
pub fn csbm_generate(p: &CsbmParams) -> Result<(SparseAdjacency, Array2<f64>, Labels)> {
    let labels = generate_labels(p.n)?;
    let stream = SeedStream::new(p.seed);
    let features = generate_features(p, &labels, &stream);
    let adj = generate_edges(p, &labels, &stream, 0)?;
    Ok((adj, features, labels))
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiCsbmParams {
    pub base: CsbmParams,
    /// Number of views; all share features and labels, each gets its own
    /// independently sampled structure.
    pub views: usize,
    /// Noisy-edge budget for every view except view 0, as a fraction of
    /// that view's original edge count.
    pub rho: f64,
}

impl MultiCsbmParams {
    pub fn with_defaults(rho: f64, seed: u64) -> Self {
        Self { base: CsbmParams::with_defaults(0.5, seed), views: 3, rho }
    }
}

/// Add `round(rho · |E|)` uniformly random new edges (no duplicates, no
/// self-loops).
fn perturb(
    adj: &SparseAdjacency,
    rho: f64,
    rng: &mut impl Rng,
) -> Result<SparseAdjacency> {
    let n = adj.n();
    let mut edges: Vec<(usize, usize, f64)> = adj.undirected_entries().collect();
    let mut existing: HashSet<(usize, usize)> =
        edges.iter().map(|&(i, j, _)| (i.min(j), i.max(j))).collect();
    let budget = (rho * edges.len() as f64).round() as usize;
    let mut added = 0usize;
    while added < budget {
        let i = rng.gen_range(0..n);
        let j = rng.gen_range(0..n);
        if i == j {
            continue;
        }
        let key = (i.min(j), i.max(j));
        if existing.insert(key) {
            edges.push((key.0, key.1, 1.0));
            added += 1;
        }
    }
    SparseAdjacency::from_edges(n, &edges)
}

/// V structures over shared features and labels; every view except view 0
/// receives uniform edge noise at ratio `rho`.
pub fn multi_csbm_generate(p: &MultiCsbmParams) -> Result<MultiRelationalGraph> {
    if p.views == 0 {
        return Err(Error::Domain("at least one view is required".into()));
    }
    if p.rho < 0.0 {
        return Err(Error::Domain(format!("perturbation ratio {} is negative", p.rho)));
    }
    let labels = generate_labels(p.base.n)?;
    let stream = SeedStream::new(p.base.seed);
    let features = generate_features(&p.base, &labels, &stream);
    let mut views = Vec::with_capacity(p.views);
    for v in 0..p.views {
        let clean = generate_edges(&p.base, &labels, &stream, v as u64)?;
        if v == 0 || p.rho == 0.0 {
            views.push(clean);
        } else {
            let mut rng = stream.rng("csbm-perturb", v as u64);
            views.push(perturb(&clean, p.rho, &mut rng)?);
        }
    }
    MultiRelationalGraph::new(views, features, Some(labels))
}

/// Restrict a graph view to non-isolated nodes, keeping features and labels
/// aligned. Returns the subgraph pieces and the kept indices.
pub fn drop_isolated(
    adj: &SparseAdjacency,
    features: ArrayView2<f64>,
    labels: &Labels,
) -> Result<(SparseAdjacency, Array2<f64>, Labels, Vec<usize>)> {
    let degrees = adj.degrees();
    let keep: Vec<usize> = (0..adj.n()).filter(|&i| degrees[i] > 0.0).collect();
    if keep.len() == adj.n() {
        return Ok((adj.clone(), features.to_owned(), labels.clone(), keep));
    }
    log::warn!("dropping {} isolated node(s)", adj.n() - keep.len());
    let mut remap = vec![usize::MAX; adj.n()];
    for (new, &old) in keep.iter().enumerate() {
        remap[old] = new;
    }
    let edges: Vec<(usize, usize, f64)> = adj
        .undirected_entries()
        .map(|(i, j, w)| (remap[i], remap[j], w))
        .collect();
    let sub = SparseAdjacency::from_edges(keep.len(), &edges)?;
    let sub_features = features.select(Axis(0), &keep);
    let sub_labels = Labels::new(
        keep.iter().map(|&i| labels.ids()[i]).collect(),
        labels.num_classes(),
    )?;
    Ok((sub, sub_features, sub_labels, keep))
}

#[derive(Debug, Clone, Serialize)]
pub struct PhiSweepRow {
    pub phi: f64,
    pub homophily: f64,
    pub acd: f64,
    pub probe_accuracy: f64,
}

/// For each `phi`: generate one view, aggregate K hops with the no-self-loop
/// normalization (dropping isolated nodes), L2-normalize the aggregated
/// rows, and record edge homophily, the aggregation class distance, and
/// linear-probe accuracy.
pub fn phi_sweep(
    phis: &[f64],
    base: &CsbmParams,
    hops: usize,
    train_fraction: f64,
) -> Result<Vec<PhiSweepRow>> {
    let mut rows = Vec::with_capacity(phis.len());
    for (k, &phi) in phis.iter().enumerate() {
        let params = CsbmParams {
            phi,
            seed: SeedStream::new(base.seed).derive("phi-sweep", k as u64),
            ..base.clone()
        };
        let (adj, features, labels) = csbm_generate(&params)?;
        let homophily = edge_homophily(&adj, &labels)?;
        let (sub, sub_features, sub_labels, _) = drop_isolated(&adj, features.view(), &labels)?;
        let normalized = normalize_adjacency(&sub, false)?;
        let aggregated = sgc_aggregate(&normalized, sub_features.view(), hops)?;
        let (aggregated, _) = crate::linalg::row_l2_normalize(aggregated.view(), 1e-12);
        let acd_value = acd(aggregated.view(), &sub_labels)?;
        let probe_accuracy =
            linear_probe(aggregated.view(), &sub_labels, train_fraction, params.seed)?;
        rows.push(PhiSweepRow { phi, homophily, acd: acd_value, probe_accuracy });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_mu_closed_forms() {
        // phi = 0: lambda = 0, mu = sqrt(xi (1+eps))
        let (l, m) = phi_to_lambda_mu(0.0, 2.5, 3.25).unwrap();
        assert_eq!(l, 0.0);
        assert!((m - (2.5f64 * 4.25).sqrt()).abs() < 1e-12);

        // phi = 1: mu = 0 limit, constraint still holds
        let (l, m) = phi_to_lambda_mu(1.0, 2.5, 3.25).unwrap();
        assert!(m.abs() < 1e-12);
        assert!((l * l + m * m / 2.5 - 4.25).abs() < 1e-9);

        // phi = 0.5: both equations within 1e-9
        let (l, m) = phi_to_lambda_mu(0.5, 2.5, 3.25).unwrap();
        assert!((l * l + m * m / 2.5 - 4.25).abs() < 1e-9);
        let phi_back = 2.0 / std::f64::consts::PI * (l * 2.5f64.sqrt() / m).atan();
        assert!((phi_back - 0.5).abs() < 1e-9);

        assert!(phi_to_lambda_mu(1.5, 2.5, 3.25).is_err());
    }

    #[test]
    fn generation_is_balanced_and_deterministic() {
        let p = CsbmParams { n: 300, d_f: 40, avg_degree: 5.0, epsilon: 3.25, phi: 0.5, seed: 9 };
        let (a1, x1, l1) = csbm_generate(&p).unwrap();
        let (a2, x2, l2) = csbm_generate(&p).unwrap();
        assert_eq!(a1, a2);
        assert_eq!(x1, x2);
        assert_eq!(l1, l2);
        let zeros = l1.ids().iter().filter(|&&y| y == 0).count();
        assert_eq!(zeros, 150);
    }

    #[test]
    fn mean_degree_tracks_parameter() {
        let p = CsbmParams { n: 2000, d_f: 50, avg_degree: 5.0, epsilon: 3.25, phi: 0.5, seed: 3 };
        let mut total = 0.0;
        let seeds = 5;
        for s in 0..seeds {
            let (adj, _, _) = csbm_generate(&CsbmParams { seed: s, ..p.clone() }).unwrap();
            total += 2.0 * adj.num_edges() as f64 / p.n as f64;
        }
        let mean = total / seeds as f64;
        assert!((mean - 5.0).abs() < 0.25, "mean degree {mean}");
    }

    #[test]
    fn rho_zero_keeps_views_clean() {
        let p = MultiCsbmParams {
            base: CsbmParams { n: 200, d_f: 20, avg_degree: 5.0, epsilon: 3.25, phi: 0.5, seed: 4 },
            views: 3,
            rho: 0.0,
        };
        let g = multi_csbm_generate(&p).unwrap();
        assert_eq!(g.num_views(), 3);
        // views are independent samples; they differ from each other
        assert_ne!(g.view(0), g.view(1));
    }

    #[test]
    fn perturbation_doubles_edges_at_rho_one() {
        let p = MultiCsbmParams {
            base: CsbmParams { n: 300, d_f: 20, avg_degree: 5.0, epsilon: 3.25, phi: 0.5, seed: 5 },
            views: 3,
            rho: 1.0,
        };
        let clean = MultiCsbmParams { rho: 0.0, ..p.clone() };
        let g = multi_csbm_generate(&p).unwrap();
        let g0 = multi_csbm_generate(&clean).unwrap();
        assert_eq!(g.view(0).num_edges(), g0.view(0).num_edges());
        for v in 1..3 {
            let original = g0.view(v).num_edges() as f64;
            let perturbed = g.view(v).num_edges() as f64;
            assert!((perturbed - 2.0 * original).abs() <= 1.0, "{perturbed} vs {original}");
        }
    }

    #[test]
    fn empirical_homophily_is_monotone_in_phi() {
        let mut prev = -1.0;
        for (k, phi) in [-1.0, -0.5, 0.0, 0.5, 1.0].into_iter().enumerate() {
            let p = CsbmParams {
                n: 2000,
                d_f: 50,
                avg_degree: 5.0,
                epsilon: 3.25,
                phi,
                seed: 100 + k as u64,
            };
            let (adj, _, labels) = csbm_generate(&p).unwrap();
            let hr = edge_homophily(&adj, &labels).unwrap();
            assert!(hr > prev, "hr {hr} did not increase past {prev} at phi {phi}");
            prev = hr;
        }
    }

    #[test]
    fn drop_isolated_keeps_alignment() {
        let adj = SparseAdjacency::from_edges(5, &[(0, 1, 1.0), (3, 4, 1.0)]).unwrap();
        let features = Array2::from_shape_fn((5, 2), |(i, j)| (i * 2 + j) as f64);
        let labels = Labels::new(vec![0, 0, 1, 1, 0], 2).unwrap();
        let (sub, sub_x, sub_y, keep) = drop_isolated(&adj, features.view(), &labels).unwrap();
        assert_eq!(keep, vec![0, 1, 3, 4]);
        assert_eq!(sub.n(), 4);
        assert_eq!(sub_x.nrows(), 4);
        assert_eq!(sub_y.ids(), &[0, 0, 1, 0]);
        assert_eq!(sub_x[[2, 0]], 6.0);
    }
}
