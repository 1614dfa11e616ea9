//! The full training loop: cached propagation, dominant-view mining at
//! initialization and every recalculation interval, co-aligned losses,
//! dominant-assignment self-training, Adam updates, and the final k-means on
//! the concatenated representation. Supports full-batch and mini-batch
//! execution; a single root seed drives every random choice.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use ndarray::prelude::*;
use serde::Serialize;

use crate::clustering::{
    clu_grad_z, kmeans, kmeans_with_init, kl_mean_rows, soft_assignment, target_distribution,
    view_centers, ClusterResult,
};
use crate::error::{Error, Result};
use crate::graph::MultiRelationalGraph;
use crate::losses::{
    adv_loss, adv_loss_grad, anf_loss_grad, assemble_total, recon_cosine_grad, recon_cosine_loss,
    LossBreakdown,
};
use crate::metrics::{gram_discrepancy_pre, gram_self_sq};
use crate::nn::{Activation, Adam, Mlp, MlpCache, MlpGrad};
use crate::propagate::aggregate_views;
use crate::seed::SeedStream;

/// Encoder/decoder hidden width.
pub const HIDDEN_DIM: usize = 256;

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// Dominant-view recalculation interval in epochs.
    pub t_recalc: usize,
    /// Representation dimension per view.
    pub d_r: usize,
    pub tau: f64,
    /// Propagation depth K.
    pub hops: usize,
    /// Teleport probability.
    pub alpha: f64,
    pub clusters: usize,
    pub seed: u64,
    pub batch_size: Option<usize>,
    /// Self-training loss activates at this epoch.
    pub clu_warmup_epochs: usize,
}

impl TrainConfig {
    pub fn new(clusters: usize, seed: u64) -> Self {
        Self {
            epochs: 400,
            lr: 1e-2,
            weight_decay: 1e-4,
            t_recalc: 50,
            d_r: 10,
            tau: 1.0,
            hops: 3,
            alpha: 0.3,
            clusters,
            seed,
            batch_size: None,
            clu_warmup_epochs: 50,
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.t_recalc == 0 {
            return Err(Error::Config("recalculation interval must be at least 1".into()));
        }
        if self.clusters < 2 {
            return Err(Error::Config("at least two clusters are required".into()));
        }
        if self.d_r == 0 {
            return Err(Error::Config("representation dimension must be positive".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config(format!("temperature {} must be positive", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.hops == 0 {
            return Err(Error::Config("hop count must be at least 1".into()));
        }
        if let Some(b) = self.batch_size {
            if b == 0 || b > n {
                return Err(Error::Config(format!("batch size {b} outside 1..={n}")));
            }
        }
        Ok(())
    }
}

/// Shared encoder, shared decoder, one projector per view.
#[derive(Debug, Clone)]
pub struct Model {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub projectors: Vec<Mlp>,
}

impl Model {
    pub fn new(d_f: usize, d_r: usize, num_views: usize, stream: &SeedStream) -> Self {
        let encoder = Mlp::new(
            &[d_f, HIDDEN_DIM, d_r],
            Activation::Elu,
            false,
            &mut stream.rng("init-encoder", 0),
        );
        let decoder = Mlp::new(
            &[d_r, HIDDEN_DIM, d_f],
            Activation::Elu,
            false,
            &mut stream.rng("init-decoder", 0),
        );
        let projectors = (0..num_views)
            .map(|v| {
                Mlp::new(&[d_r, d_r], Activation::Elu, true, &mut stream.rng("init-projector", v as u64))
            })
            .collect();
        Self { encoder, decoder, projectors }
    }

    /// Encoder-only forward over every view.
    pub fn encode_views(&self, inputs: &[Array2<f64>]) -> Result<Vec<Array2<f64>>> {
        inputs.iter().map(|x| self.encoder.forward(x.view())).collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.encoder.param_slices_mut();
        out.extend(self.decoder.param_slices_mut());
        for p in self.projectors.iter_mut() {
            out.extend(p.param_slices_mut());
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        let finite_mlp = |m: &Mlp| {
            m.layers
                .iter()
                .all(|l| l.w.iter().all(|v| v.is_finite()) && l.b.iter().all(|v| v.is_finite()))
        };
        finite_mlp(&self.encoder)
            && finite_mlp(&self.decoder)
            && self.projectors.iter().all(finite_mlp)
    }
}

/// Gradients mirroring [`Model`].
pub struct Grads {
    pub encoder: MlpGrad,
    pub decoder: MlpGrad,
    pub projectors: Vec<MlpGrad>,
}

impl Grads {
    fn slices(&self) -> Vec<&[f64]> {
        fn per_mlp<'a>(g: &'a MlpGrad, out: &mut Vec<&'a [f64]>) {
            for (w, b) in &g.layers {
                out.push(w.as_slice().unwrap());
                out.push(b.as_slice().unwrap());
            }
        }
        let mut out = Vec::new();
        per_mlp(&self.encoder, &mut out);
        per_mlp(&self.decoder, &mut out);
        for p in &self.projectors {
            per_mlp(p, &mut out);
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.encoder.all_finite()
            && self.decoder.all_finite()
            && self.projectors.iter().all(|g| g.all_finite())
    }
}

#[derive(Debug, Clone)]
pub struct ModelState {
    pub model: Model,
    pub optimizer: Adam,
    pub dominant_view: usize,
    pub epoch: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub rec: f64,
    pub adv: f64,
    pub anf: f64,
    pub clu: f64,
    pub total: f64,
    pub dominant_view: usize,
    /// Feature-gram discrepancy of each view's current representations.
    pub view_metrics: Vec<f64>,
}

pub struct TrainOutput {
    /// Concatenated per-view representations, N×(V·d_r).
    pub representation: Array2<f64>,
    pub clusters: ClusterResult,
    pub history: Vec<EpochRecord>,
    pub state: ModelState,
    /// Dominant view chosen from the aggregated features before training.
    pub init_dominant_view: usize,
}

/// Which loss terms participate (used by the gradient-check suite and
/// ablations; training uses all).
#[derive(Debug, Clone, Copy)]
pub struct LossMask {
    pub rec: bool,
    pub adv: bool,
    pub anf: bool,
    pub clu: bool,
}

impl LossMask {
    pub const ALL: LossMask = LossMask { rec: true, adv: true, anf: true, clu: true };

    pub fn only(term: &str) -> LossMask {
        LossMask {
            rec: term == "rec",
            adv: term == "adv",
            anf: term == "anf",
            clu: term == "clu",
        }
    }
}

/// Frozen self-training quantities for one epoch: the dominant assignment,
/// per-view and concatenated centers, and (in full-batch mode) the frozen
/// targets.
pub struct CluContext {
    pub dominant_assignment: Vec<usize>,
    pub view_centers: Vec<Array2<f64>>,
    pub concat_centers: Array2<f64>,
    pub view_targets: Option<Vec<Array2<f64>>>,
    pub concat_target: Option<Array2<f64>>,
}

pub fn concat_views(z_views: &[Array2<f64>]) -> Array2<f64> {
    let views: Vec<ArrayView2<f64>> = z_views.iter().map(|z| z.view()).collect();
    ndarray::concatenate(Axis(1), &views).expect("matching row counts")
}

/// Build the per-epoch clustering context from current representations.
/// `freeze_targets` pins P (full-batch); mini-batch recomputes P per batch.
pub fn build_clu_context(
    z_views: &[Array2<f64>],
    v_star: usize,
    clusters: usize,
    seed: u64,
    freeze_targets: bool,
) -> Result<CluContext> {
    let y_hat = kmeans(z_views[v_star].view(), clusters, seed, 1)?.assignments;
    let centers: Vec<Array2<f64>> = z_views
        .iter()
        .map(|z| view_centers(z.view(), &y_hat, clusters))
        .collect::<Result<_>>()?;
    let zcat = concat_views(z_views);
    let concat_centers = kmeans_with_init(zcat.view(), clusters, &y_hat)?.centers;
    let (view_targets, concat_target) = if freeze_targets {
        let targets: Vec<Array2<f64>> = z_views
            .iter()
            .zip(&centers)
            .map(|(z, c)| {
                soft_assignment(z.view(), c.view()).map(|q| target_distribution(q.view()))
            })
            .collect::<Result<_>>()?;
        let qc = soft_assignment(zcat.view(), concat_centers.view())?;
        (Some(targets), Some(target_distribution(qc.view())))
    } else {
        (None, None)
    };
    Ok(CluContext {
        dominant_assignment: y_hat,
        view_centers: centers,
        concat_centers,
        view_targets,
        concat_target,
    })
}

/// Dominant view under the representation-space metric
/// `‖XXᵀ − Z^v(Z^v)ᵀ‖_F²`; returns the argmin (lowest index on ties) and
/// all per-view metrics.
pub fn recalc_dominant(
    x_gram_sq: f64,
    x: ArrayView2<f64>,
    z_views: &[Array2<f64>],
) -> (usize, Vec<f64>) {
    let metrics: Vec<f64> = z_views
        .iter()
        .map(|z| gram_discrepancy_pre(x_gram_sq, x, z.view()).expect("row counts match"))
        .collect();
    let mut best = 0usize;
    for (v, &m) in metrics.iter().enumerate() {
        if m < metrics[best] {
            best = v;
        }
    }
    (best, metrics)
}

/// Seeded permutation split into `ceil(n / batch_size)` batches; reshuffled
/// every epoch, each index covered exactly once.
pub fn minibatch_schedule(
    n: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 || batch_size > n {
        return Err(Error::Config(format!("batch size {batch_size} outside 1..={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SeedStream::new(seed).rng("batch-shuffle", epoch as u64);
    for i in (1..n).rev() {
        let j = rand::Rng::gen_range(&mut rng, 0..=i);
        order.swap(i, j);
    }
    Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
}

struct EncoderForward {
    z_views: Vec<Array2<f64>>,
    caches: Vec<MlpCache>,
}

fn forward_encoder(model: &Model, inputs: &[Array2<f64>]) -> Result<EncoderForward> {
    let mut z_views = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (z, cache) = model.encoder.forward_cached(x.view())?;
        z_views.push(z);
        caches.push(cache);
    }
    Ok(EncoderForward { z_views, caches })
}

/// Loss value at the current parameters (forward only). The clustering
/// context must carry frozen targets when `mask.clu` is set.
pub fn total_loss(
    model: &Model,
    inputs: &[Array2<f64>],
    features: ArrayView2<f64>,
    features_gram_sq: f64,
    v_star: usize,
    tau: f64,
    clu_ctx: Option<&CluContext>,
    mask: LossMask,
) -> Result<LossBreakdown> {
    let v_count = inputs.len();
    let z_views = model.encode_views(inputs)?;

    let mut rec = 0.0;
    if mask.rec {
        for (x, z) in inputs.iter().zip(&z_views) {
            let xhat = model.decoder.forward(z.view())?;
            rec += recon_cosine_loss(x.view(), xhat.view(), v_count)?;
        }
    }

    let mut adv = 0.0;
    if mask.adv {
        let projections: Vec<Array2<f64>> = z_views
            .iter()
            .zip(&model.projectors)
            .map(|(z, p)| p.forward(z.view()))
            .collect::<Result<_>>()?;
        adv = adv_loss(&projections, v_star, tau)?;
    }

    let mut anf = 0.0;
    if mask.anf {
        let n = features.nrows() as f64;
        let scale = 1.0 / (n * n * v_count as f64);
        for z in &z_views {
            let raw = gram_discrepancy_pre(features_gram_sq, features, z.view())?;
            anf += raw * scale;
        }
    }

    let mut clu = 0.0;
    if mask.clu {
        if let Some(ctx) = clu_ctx {
            clu = clu_loss_value(&z_views, ctx)?;
        }
    }

    Ok(assemble_total(rec, adv, anf, clu))
}

fn clu_loss_value(z_views: &[Array2<f64>], ctx: &CluContext) -> Result<f64> {
    let v_count = z_views.len() as f64;
    let mut per_view = 0.0;
    for (v, z) in z_views.iter().enumerate() {
        let q = soft_assignment(z.view(), ctx.view_centers[v].view())?;
        let p = match &ctx.view_targets {
            Some(ts) => ts[v].clone(),
            None => target_distribution(q.view()),
        };
        per_view += kl_mean_rows(p.view(), q.view());
    }
    let zcat = concat_views(z_views);
    let qc = soft_assignment(zcat.view(), ctx.concat_centers.view())?;
    let pc = match &ctx.concat_target {
        Some(p) => p.clone(),
        None => target_distribution(qc.view()),
    };
    Ok(kl_mean_rows(pc.view(), qc.view()) + per_view / v_count)
}

/// One optimization step's losses and gradients for the given rows.
#[allow(clippy::too_many_arguments)]
pub fn step_gradients(
    model: &Model,
    inputs: &[Array2<f64>],
    features: ArrayView2<f64>,
    features_gram_sq: f64,
    v_star: usize,
    tau: f64,
    clu_ctx: Option<&CluContext>,
    mask: LossMask,
) -> Result<(LossBreakdown, Grads)> {
    let fwd = forward_encoder(model, inputs)?;
    step_gradients_with_forward(model, &fwd, inputs, features, features_gram_sq, v_star, tau, clu_ctx, mask)
}

#[allow(clippy::too_many_arguments)]
fn step_gradients_with_forward(
    model: &Model,
    fwd: &EncoderForward,
    inputs: &[Array2<f64>],
    features: ArrayView2<f64>,
    features_gram_sq: f64,
    v_star: usize,
    tau: f64,
    clu_ctx: Option<&CluContext>,
    mask: LossMask,
) -> Result<(LossBreakdown, Grads)> {
    let v_count = inputs.len();
    let z_views = &fwd.z_views;

    let mut grads = Grads {
        encoder: MlpGrad::zeros_like(&model.encoder),
        decoder: MlpGrad::zeros_like(&model.decoder),
        projectors: model.projectors.iter().map(MlpGrad::zeros_like).collect(),
    };
    let mut dz: Vec<Array2<f64>> =
        z_views.iter().map(|z| Array2::zeros(z.dim())).collect();

    // reconstruction (decoder processed per view so its big caches drop early)
    let mut rec = 0.0;
    if mask.rec {
        for (v, (x, z)) in inputs.iter().zip(z_views).enumerate() {
            let (xhat, dec_cache) = model.decoder.forward_cached(z.view())?;
            let (rec_v, dxhat) = recon_cosine_grad(x.view(), xhat.view(), v_count)?;
            rec += rec_v;
            let (dec_grads, dz_rec) =
                model.decoder.backward(z.view(), &dec_cache, dxhat.view(), true);
            grads.decoder.add_assign(&dec_grads);
            dz[v] += &dz_rec.unwrap();
        }
    }

    // alignment with the dominant view, through the projectors
    let mut adv = 0.0;
    if mask.adv {
        let mut proj_caches = Vec::with_capacity(v_count);
        let mut projections = Vec::with_capacity(v_count);
        for (z, p) in z_views.iter().zip(&model.projectors) {
            let (out, cache) = p.forward_cached(z.view())?;
            projections.push(out);
            proj_caches.push(cache);
        }
        let (adv_value, dproj) = adv_loss_grad(&projections, v_star, tau)?;
        adv = adv_value;
        for (v, z) in z_views.iter().enumerate() {
            let (pgrads, dz_proj) =
                model.projectors[v].backward(z.view(), &proj_caches[v], dproj[v].view(), true);
            grads.projectors[v].add_assign(&pgrads);
            dz[v] += &dz_proj.unwrap();
        }
    }

    // alignment with the node features
    let mut anf = 0.0;
    if mask.anf {
        let (anf_value, danf) = anf_loss_grad(features, z_views, features_gram_sq)?;
        anf = anf_value;
        for (v, g) in danf.into_iter().enumerate() {
            dz[v] += &g;
        }
    }

    // self-training clustering (targets and centers are constants here)
    let mut clu = 0.0;
    if mask.clu {
        if let Some(ctx) = clu_ctx {
            let vf = v_count as f64;
            for (v, z) in z_views.iter().enumerate() {
                let q = soft_assignment(z.view(), ctx.view_centers[v].view())?;
                let p = match &ctx.view_targets {
                    Some(ts) => ts[v].clone(),
                    None => target_distribution(q.view()),
                };
                clu += kl_mean_rows(p.view(), q.view()) / vf;
                let g = clu_grad_z(z.view(), ctx.view_centers[v].view(), q.view(), p.view());
                dz[v].scaled_add(1.0 / vf, &g);
            }
            let zcat = concat_views(z_views);
            let qc = soft_assignment(zcat.view(), ctx.concat_centers.view())?;
            let pc = match &ctx.concat_target {
                Some(p) => p.clone(),
                None => target_distribution(qc.view()),
            };
            clu += kl_mean_rows(pc.view(), qc.view());
            let gcat = clu_grad_z(zcat.view(), ctx.concat_centers.view(), qc.view(), pc.view());
            let d_r = z_views[0].ncols();
            for v in 0..v_count {
                let slice = gcat.slice(s![.., v * d_r..(v + 1) * d_r]);
                dz[v] += &slice;
            }
        }
    }

    // encoder backward, accumulated over views
    for (v, x) in inputs.iter().enumerate() {
        let (enc_grads, _) =
            model.encoder.backward(x.view(), &fwd.caches[v], dz[v].view(), false);
        grads.encoder.add_assign(&enc_grads);
    }

    Ok((assemble_total(rec, adv, anf, clu), grads))
}

/// Apply one optimizer step to the whole model (useful for custom loops).
pub fn apply_step(model: &mut Model, optimizer: &mut Adam, grads: &Grads) -> Result<()> {
    optimizer.step(&mut model.param_slices_mut(), &grads.slices())
}

/// Run the full training loop.
pub fn train(g: &MultiRelationalGraph, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate(g.n())?;
    let stream = SeedStream::new(cfg.seed);
    let mut aggregates = aggregate_views(g, cfg.hops, cfg.alpha)?;
    let x = g.features();
    let x_gram_sq = gram_self_sq(x);

    // the initial dominant view comes from the raw aggregated features;
    // everything downstream consumes the row-normalized form
    let (init_dominant, _) = recalc_dominant(x_gram_sq, x, &aggregates.per_view);
    aggregates.normalize_rows();
    let mut state = ModelState {
        model: Model::new(x.ncols(), cfg.d_r, g.num_views(), &stream),
        optimizer: Adam::new(cfg.lr, cfg.weight_decay),
        dominant_view: init_dominant,
        epoch: 0,
    };
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        state.epoch = epoch;
        match cfg.batch_size {
            None => full_batch_epoch(
                &mut state,
                &aggregates.per_view,
                x,
                x_gram_sq,
                cfg,
                epoch,
                &stream,
                &mut history,
            )?,
            Some(batch) => minibatch_epoch(
                &mut state,
                &aggregates.per_view,
                x,
                x_gram_sq,
                cfg,
                epoch,
                batch,
                &stream,
                &mut history,
            )?,
        }
    }
    state.epoch = cfg.epochs;

    let z_views = state.model.encode_views(&aggregates.per_view)?;
    let representation = concat_views(&z_views);
    let clusters = kmeans(
        representation.view(),
        cfg.clusters,
        stream.derive("kmeans-final", 0),
        20,
    )?;
    Ok(TrainOutput { representation, clusters, history, state, init_dominant_view: init_dominant })
}

#[allow(clippy::too_many_arguments)]
fn full_batch_epoch(
    state: &mut ModelState,
    inputs: &[Array2<f64>],
    x: ArrayView2<f64>,
    x_gram_sq: f64,
    cfg: &TrainConfig,
    epoch: usize,
    stream: &SeedStream,
    history: &mut Vec<EpochRecord>,
) -> Result<()> {
    // one cached forward per epoch feeds the recalculation, the clustering
    // context, the history metrics, and the gradient step
    let fwd = forward_encoder(&state.model, inputs)?;
    let (v_new, view_metrics) = recalc_dominant(x_gram_sq, x, &fwd.z_views);
    if epoch > 0 && epoch % cfg.t_recalc == 0 {
        state.dominant_view = v_new;
    }

    let clu_ctx = if epoch >= cfg.clu_warmup_epochs {
        Some(build_clu_context(
            &fwd.z_views,
            state.dominant_view,
            cfg.clusters,
            stream.derive("kmeans-epoch", epoch as u64),
            true,
        )?)
    } else {
        None
    };

    let (breakdown, grads) = step_gradients_with_forward(
        &state.model,
        &fwd,
        inputs,
        x,
        x_gram_sq,
        state.dominant_view,
        cfg.tau,
        clu_ctx.as_ref(),
        LossMask::ALL,
    )?;
    if !grads.all_finite() || !breakdown.total.is_finite() {
        return Err(Error::NonFiniteGradient {
            epoch,
            breakdown: format!(
                "rec {} adv {} anf {} clu {}",
                breakdown.rec, breakdown.adv, breakdown.anf, breakdown.clu
            ),
        });
    }
    state.optimizer.step(&mut state.model.param_slices_mut(), &grads.slices())?;

    history.push(EpochRecord {
        epoch,
        rec: breakdown.rec,
        adv: breakdown.adv,
        anf: breakdown.anf,
        clu: breakdown.clu,
        total: breakdown.total,
        dominant_view: state.dominant_view,
        view_metrics,
    });
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn minibatch_epoch(
    state: &mut ModelState,
    inputs: &[Array2<f64>],
    x: ArrayView2<f64>,
    x_gram_sq: f64,
    cfg: &TrainConfig,
    epoch: usize,
    batch_size: usize,
    stream: &SeedStream,
    history: &mut Vec<EpochRecord>,
) -> Result<()> {
    // epoch-boundary full encoder pass refreshes the dominant assignment,
    // all centers, and (on schedule) the dominant view
    let z_full = state.model.encode_views(inputs)?;
    let (v_new, view_metrics) = recalc_dominant(x_gram_sq, x, &z_full);
    if epoch > 0 && epoch % cfg.t_recalc == 0 {
        state.dominant_view = v_new;
    }
    let clu_ctx = if epoch >= cfg.clu_warmup_epochs {
        Some(build_clu_context(
            &z_full,
            state.dominant_view,
            cfg.clusters,
            stream.derive("kmeans-epoch", epoch as u64),
            false,
        )?)
    } else {
        None
    };
    drop(z_full);

    let batches = minibatch_schedule(x.nrows(), batch_size, cfg.seed, epoch)?;
    let mut epoch_loss = LossBreakdown::default();
    let mut rows_seen = 0usize;
    for batch in &batches {
        let batch_inputs: Vec<Array2<f64>> =
            inputs.iter().map(|a| a.select(Axis(0), batch)).collect();
        let x_batch = x.select(Axis(0), batch);
        let xg_batch = gram_self_sq(x_batch.view());
        let (breakdown, grads) = step_gradients(
            &state.model,
            &batch_inputs,
            x_batch.view(),
            xg_batch,
            state.dominant_view,
            cfg.tau,
            clu_ctx.as_ref(),
            LossMask::ALL,
        )?;
        if !grads.all_finite() || !breakdown.total.is_finite() {
            return Err(Error::NonFiniteGradient {
                epoch,
                breakdown: format!(
                    "rec {} adv {} anf {} clu {}",
                    breakdown.rec, breakdown.adv, breakdown.anf, breakdown.clu
                ),
            });
        }
        state.optimizer.step(&mut state.model.param_slices_mut(), &grads.slices())?;
        let w = batch.len() as f64;
        epoch_loss.rec += breakdown.rec * w;
        epoch_loss.adv += breakdown.adv * w;
        epoch_loss.anf += breakdown.anf * w;
        epoch_loss.clu += breakdown.clu * w;
        rows_seen += batch.len();
    }
    let wf = rows_seen as f64;
    history.push(EpochRecord {
        epoch,
        rec: epoch_loss.rec / wf,
        adv: epoch_loss.adv / wf,
        anf: epoch_loss.anf / wf,
        clu: epoch_loss.clu / wf,
        total: (epoch_loss.rec + epoch_loss.adv + epoch_loss.anf + epoch_loss.clu) / wf,
        dominant_view: state.dominant_view,
        view_metrics,
    });
    Ok(())
}

/// Append-style CSV of the per-epoch records: fixed columns then one metric
/// column per view.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    let v_count = history.first().map_or(0, |r| r.view_metrics.len());
    write!(f, "epoch,rec,adv,anf,clu,total,dominant_view")?;
    for v in 0..v_count {
        write!(f, ",metric_view_{v}")?;
    }
    writeln!(f)?;
    for r in history {
        write!(
            f,
            "{},{},{},{},{},{},{}",
            r.epoch, r.rec, r.adv, r.anf, r.clu, r.total, r.dominant_view
        )?;
        for m in &r.view_metrics {
            write!(f, ",{m}")?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

const CHECKPOINT_MAGIC: &[u8; 4] = b"BMGC";
const CHECKPOINT_VERSION: u8 = 1;

/// Binary checkpoint: magic, version byte, epoch, dominant view, then the
/// encoder, decoder, and projectors with shape headers.
pub fn save_checkpoint(path: &Path, state: &ModelState) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path)?);
    f.write_all(CHECKPOINT_MAGIC)?;
    f.write_all(&[CHECKPOINT_VERSION])?;
    f.write_all(&(state.epoch as u32).to_le_bytes())?;
    f.write_all(&(state.dominant_view as u32).to_le_bytes())?;
    f.write_all(&(state.model.projectors.len() as u32).to_le_bytes())?;
    state.model.encoder.write_to(&mut f)?;
    state.model.decoder.write_to(&mut f)?;
    for p in &state.model.projectors {
        p.write_to(&mut f)?;
    }
    f.flush()?;
    Ok(())
}

/// Load model parameters and bookkeeping saved by [`save_checkpoint`].
/// The optimizer state is not persisted; a fresh one is returned.
pub fn load_checkpoint(path: &Path, lr: f64, weight_decay: f64) -> Result<ModelState> {
    let mut f = std::io::BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("checkpoint has wrong magic".into()));
    }
    let mut version = [0u8; 1];
    f.read_exact(&mut version)?;
    if version[0] != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", version[0])));
    }
    let mut buf4 = [0u8; 4];
    f.read_exact(&mut buf4)?;
    let epoch = u32::from_le_bytes(buf4) as usize;
    f.read_exact(&mut buf4)?;
    let dominant_view = u32::from_le_bytes(buf4) as usize;
    f.read_exact(&mut buf4)?;
    let num_projectors = u32::from_le_bytes(buf4) as usize;
    let encoder = Mlp::read_from(&mut f)?;
    let decoder = Mlp::read_from(&mut f)?;
    let mut projectors = Vec::with_capacity(num_projectors);
    for _ in 0..num_projectors {
        projectors.push(Mlp::read_from(&mut f)?);
    }
    Ok(ModelState {
        model: Model { encoder, decoder, projectors },
        optimizer: Adam::new(lr, weight_decay),
        dominant_view,
        epoch,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csbm::{multi_csbm_generate, CsbmParams, MultiCsbmParams};
    use crate::sparse::SparseAdjacency;
    use rand::Rng;

    fn tiny_graph(seed: u64) -> MultiRelationalGraph {
        let mut rng = SeedStream::new(seed).rng("tiny", 0);
        let n = 10;
        let mut e0 = Vec::new();
        let mut e1 = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.35) {
                    e0.push((i, j, 1.0));
                }
                if rng.gen_bool(0.35) {
                    e1.push((i, j, 1.0));
                }
            }
        }
        let v0 = SparseAdjacency::from_edges(n, &e0).unwrap();
        let v1 = SparseAdjacency::from_edges(n, &e1).unwrap();
        let x = Array2::from_shape_fn((n, 6), |_| rng.gen_range(-1.0f32..1.0) as f64);
        MultiRelationalGraph::new(vec![v0, v1], x, None).unwrap()
    }

    #[test]
    fn one_epoch_shapes_and_history() {
        let g = tiny_graph(1);
        let mut cfg = TrainConfig::new(2, 7);
        cfg.epochs = 1;
        let out = train(&g, &cfg).unwrap();
        assert_eq!(out.representation.dim(), (10, 2 * cfg.d_r));
        assert_eq!(out.clusters.centers.nrows(), 2);
        assert_eq!(out.history.len(), 1);
        assert!(out.clusters.assignments.iter().all(|&a| a < 2));
    }

    #[test]
    fn zero_epochs_is_a_config_error() {
        let g = tiny_graph(2);
        let mut cfg = TrainConfig::new(2, 7);
        cfg.epochs = 0;
        assert!(matches!(train(&g, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn identical_views_tie_break_to_zero() {
        let mut rng = SeedStream::new(3).rng("tie", 0);
        let n = 12;
        let mut edges = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.3) {
                    edges.push((i, j, 1.0));
                }
            }
        }
        let adj = SparseAdjacency::from_edges(n, &edges).unwrap();
        let x = Array2::from_shape_fn((n, 5), |_| rng.gen_range(-1.0f32..1.0) as f64);
        let g = MultiRelationalGraph::new(vec![adj.clone(), adj], x, None).unwrap();
        let mut cfg = TrainConfig::new(2, 5);
        cfg.epochs = 12;
        cfg.t_recalc = 4;
        cfg.clu_warmup_epochs = 6;
        let out = train(&g, &cfg).unwrap();
        assert_eq!(out.init_dominant_view, 0);
        assert!(out.history.iter().all(|r| r.dominant_view == 0));
    }

    #[test]
    fn disabled_recalculation_keeps_init_choice() {
        let g = tiny_graph(4);
        let mut cfg = TrainConfig::new(2, 9);
        cfg.epochs = 8;
        cfg.t_recalc = 100; // beyond epochs
        cfg.clu_warmup_epochs = 4;
        let out = train(&g, &cfg).unwrap();
        assert!(out
            .history
            .iter()
            .all(|r| r.dominant_view == out.init_dominant_view));
    }

    #[test]
    fn training_is_seed_deterministic() {
        let g = tiny_graph(5);
        let mut cfg = TrainConfig::new(2, 11);
        cfg.epochs = 6;
        cfg.clu_warmup_epochs = 3;
        let a = train(&g, &cfg).unwrap();
        let b = train(&g, &cfg).unwrap();
        assert_eq!(a.clusters.assignments, b.clusters.assignments);
        assert_eq!(a.representation, b.representation);
        for (ra, rb) in a.history.iter().zip(&b.history) {
            assert_eq!(ra.total.to_bits(), rb.total.to_bits());
        }
    }

    #[test]
    fn minibatch_covers_all_indices() {
        let batches = minibatch_schedule(10, 3, 42, 0).unwrap();
        assert_eq!(batches.len(), 4);
        assert_eq!(batches.iter().map(|b| b.len()).collect::<Vec<_>>(), vec![3, 3, 3, 1]);
        let mut seen: Vec<usize> = batches.into_iter().flatten().collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..10).collect::<Vec<_>>());

        let single = minibatch_schedule(10, 10, 42, 0).unwrap();
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].len(), 10);
    }

    #[test]
    fn minibatch_reshuffles_across_epochs() {
        let e0: Vec<usize> = minibatch_schedule(50, 7, 1, 0).unwrap().into_iter().flatten().collect();
        let e1: Vec<usize> = minibatch_schedule(50, 7, 1, 1).unwrap().into_iter().flatten().collect();
        assert_ne!(e0, e1);
        let mut s0 = e0.clone();
        let mut s1 = e1.clone();
        s0.sort_unstable();
        s1.sort_unstable();
        assert_eq!(s0, s1);
    }

    #[test]
    fn minibatch_training_runs() {
        let g = tiny_graph(6);
        let mut cfg = TrainConfig::new(2, 13);
        cfg.epochs = 5;
        cfg.batch_size = Some(4);
        cfg.clu_warmup_epochs = 2;
        let out = train(&g, &cfg).unwrap();
        assert_eq!(out.history.len(), 5);
        assert!(out.history.iter().all(|r| r.total.is_finite()));
    }

    #[test]
    fn checkpoint_round_trips() {
        let g = tiny_graph(7);
        let mut cfg = TrainConfig::new(2, 15);
        cfg.epochs = 2;
        let out = train(&g, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("checkpoint.bin");
        save_checkpoint(&path, &out.state).unwrap();
        let loaded = load_checkpoint(&path, cfg.lr, cfg.weight_decay).unwrap();
        assert_eq!(loaded.epoch, out.state.epoch);
        assert_eq!(loaded.dominant_view, out.state.dominant_view);
        for (a, b) in loaded
            .model
            .encoder
            .layers
            .iter()
            .zip(&out.state.model.encoder.layers)
        {
            assert_eq!(a.w, b.w);
        }
    }

    #[test]
    fn recalc_prefers_feature_preserving_view() {
        let mut rng = SeedStream::new(8).rng("recalc", 0);
        let x = Array2::from_shape_fn((20, 4), |_| rng.gen_range(-1.0..1.0));
        let noise = Array2::from_shape_fn((20, 4), |_| rng.gen_range(-3.0..3.0));
        let xg = gram_self_sq(x.view());
        let (best, metrics) = recalc_dominant(xg, x.view(), &[x.clone(), noise]);
        assert_eq!(best, 0);
        assert!(metrics[0] < metrics[1]);
    }

    // sanity run: the synthetic benchmark at small scale learns something
    #[test]
    fn small_synthetic_training_improves_over_noise() {
        let p = MultiCsbmParams {
            base: CsbmParams {
                n: 200,
                d_f: 60,
                avg_degree: 5.0,
                epsilon: 3.25,
                phi: 0.5,
                seed: 21,
            },
            views: 3,
            rho: 0.2,
        };
        let g = multi_csbm_generate(&p).unwrap();
        let mut cfg = TrainConfig::new(2, 3);
        cfg.epochs = 60;
        cfg.clu_warmup_epochs = 30;
        cfg.t_recalc = 20;
        let out = train(&g, &cfg).unwrap();
        let report = crate::eval::evaluate(&out.clusters.assignments, g.labels().unwrap()).unwrap();
        assert!(report.nmi > 0.2, "NMI {}", report.nmi);
    }
}
