//! Minimal dense differentiable core: MLPs with hand-derived reverse passes,
//! glorot-uniform init, and Adam.

use std::io::{Read, Write};

use ndarray::prelude::*;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::par_matmul;

/// Nonlinearity applied between layers (and optionally after the last).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Elu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp() - 1.0
                }
            }
        }
    }

    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Elu => {
                if pre > 0.0 {
                    1.0
                } else {
                    pre.exp()
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Fully-connected network. The activation sits between layers; set
/// `activate_last` for heads that want a nonlinear output (projectors).
#[derive(Debug, Clone)]
pub struct Mlp {
    pub layers: Vec<Layer>,
    pub activation: Activation,
    pub activate_last: bool,
}

/// Per-layer pre- and post-activation values recorded by `forward_cached`.
pub struct MlpCache {
    pre: Vec<Array2<f64>>,
    post: Vec<Array2<f64>>, // inputs to layers 1..L; the layer-0 input is passed back to `backward`
}

/// Gradients with the same shapes as the owning `Mlp`.
#[derive(Debug, Clone)]
pub struct MlpGrad {
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl MlpGrad {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.w.dim()), Array1::zeros(l.b.len())))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrad) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            *w += ow;
            *b += ob;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|(w, b)| w.iter().all(|x| x.is_finite()) && b.iter().all(|x| x.is_finite()))
    }
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(
        dims: &[usize],
        activation: Activation,
        activate_last: bool,
        rng: &mut impl Rng,
    ) -> Self {
        assert!(dims.len() >= 2, "an MLP needs at least one layer");
        let layers = dims
            .windows(2)
            .map(|pair| {
                let (fan_in, fan_out) = (pair[0], pair[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let w = Array2::from_shape_fn((fan_in, fan_out), |_| rng.gen_range(-a..a));
                Layer { w, b: Array1::zeros(fan_out) }
            })
            .collect();
        Self { layers, activation, activate_last }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].w.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().w.ncols()
    }

    fn check_input(&self, x: ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, first layer expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn affine(&self, l: usize, input: ArrayView2<f64>) -> Array2<f64> {
        let mut pre = par_matmul(input, self.layers[l].w.view());
        pre += &self.layers[l].b;
        pre
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut cur = self.affine(0, x.view());
        if last > 0 || self.activate_last {
            cur.mapv_inplace(|v| self.activation.apply(v));
        }
        for l in 1..=last {
            cur = self.affine(l, cur.view());
            if l < last || self.activate_last {
                cur.mapv_inplace(|v| self.activation.apply(v));
            }
        }
        Ok(cur)
    }

    /// Forward pass that records what `backward` needs.
    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        self.check_input(x)?;
        let last = self.layers.len() - 1;
        let mut pre_acts = Vec::with_capacity(self.layers.len());
        let mut posts: Vec<Array2<f64>> = Vec::with_capacity(last);
        for l in 0..=last {
            let pre = {
                let input = if l == 0 { x.view() } else { posts[l - 1].view() };
                self.affine(l, input)
            };
            if l < last {
                let post = pre.mapv(|v| self.activation.apply(v));
                pre_acts.push(pre);
                posts.push(post);
            } else {
                let out = if self.activate_last {
                    pre.mapv(|v| self.activation.apply(v))
                } else {
                    pre.clone()
                };
                pre_acts.push(pre);
                return Ok((out, MlpCache { pre: pre_acts, post: posts }));
            }
        }
        unreachable!()
    }

    /// Reverse pass. `grad_out` is d(loss)/d(output); returns parameter
    /// gradients and, when `want_dx`, d(loss)/d(input).
    pub fn backward(
        &self,
        x: ArrayView2<f64>,
        cache: &MlpCache,
        grad_out: ArrayView2<f64>,
        want_dx: bool,
    ) -> (MlpGrad, Option<Array2<f64>>) {
        let last = self.layers.len() - 1;
        let mut grads = MlpGrad::zeros_like(self);
        let mut upstream = grad_out.to_owned();
        for l in (0..self.layers.len()).rev() {
            if l < last || self.activate_last {
                // through the activation
                upstream.zip_mut_with(&cache.pre[l], |g, &p| *g *= self.activation.derivative(p));
            }
            let input = if l == 0 { x.view() } else { cache.post[l - 1].view() };
            grads.layers[l].0 = par_matmul(input.t(), upstream.view());
            grads.layers[l].1 = upstream.sum_axis(Axis(0));
            if l > 0 || want_dx {
                upstream = par_matmul(upstream.view(), self.layers[l].w.t());
            }
        }
        let dx = if want_dx { Some(upstream) } else { None };
        (grads, dx)
    }

    /// Parameter tensors as flat slices, weight then bias per layer.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.w.as_slice_mut().expect("contiguous weights"),
                    l.b.as_slice_mut().expect("contiguous bias"),
                ]
            })
            .collect()
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        out.write_all(&[self.activate_last as u8])?;
        out.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for l in &self.layers {
            out.write_all(&(l.w.nrows() as u32).to_le_bytes())?;
            out.write_all(&(l.w.ncols() as u32).to_le_bytes())?;
            for &v in l.w.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
            for &v in l.b.iter() {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(input: &mut impl Read) -> Result<Self> {
        let mut byte = [0u8; 1];
        input.read_exact(&mut byte)?;
        let activate_last = byte[0] != 0;
        let mut buf4 = [0u8; 4];
        input.read_exact(&mut buf4)?;
        let n_layers = u32::from_le_bytes(buf4) as usize;
        let mut layers = Vec::with_capacity(n_layers);
        let mut buf8 = [0u8; 8];
        for _ in 0..n_layers {
            input.read_exact(&mut buf4)?;
            let rows = u32::from_le_bytes(buf4) as usize;
            input.read_exact(&mut buf4)?;
            let cols = u32::from_le_bytes(buf4) as usize;
            let mut w = Array2::zeros((rows, cols));
            for v in w.iter_mut() {
                input.read_exact(&mut buf8)?;
                *v = f64::from_le_bytes(buf8);
            }
            let mut b = Array1::zeros(cols);
            for v in b.iter_mut() {
                input.read_exact(&mut buf8)?;
                *v = f64::from_le_bytes(buf8);
            }
            layers.push(Layer { w, b });
        }
        Ok(Self { layers, activation: Activation::Elu, activate_last })
    }
}

/// Classic Adam with the L2 term folded into the gradient.
///
/// Moment buffers are allocated lazily on the first step and keyed by the
/// order of the parameter slices, which must stay stable across steps.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors, {} gradient tensors",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = params.iter().map(|p| vec![0.0; p.len()]).collect();
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (k, (param, grad)) in params.iter_mut().zip(grads).enumerate() {
            if param.len() != grad.len() || param.len() != self.m[k].len() {
                return Err(Error::ShapeMismatch(format!(
                    "tensor {k}: param {} vs grad {} vs moments {}",
                    param.len(),
                    grad.len(),
                    self.m[k].len()
                )));
            }
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..param.len() {
                let g = grad[i] + self.weight_decay * param[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::SeedStream;

    fn identity_mlp(d: usize) -> Mlp {
        Mlp {
            layers: vec![Layer { w: Array2::eye(d), b: Array1::zeros(d) }],
            activation: Activation::Elu,
            activate_last: false,
        }
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let mlp = identity_mlp(3);
        let x = array![[1.0, -2.0, 0.5], [0.0, 3.0, -1.0]];
        assert_eq!(mlp.forward(x.view()).unwrap(), x);
    }

    #[test]
    fn zero_weights_give_zero_output() {
        let mlp = Mlp {
            layers: vec![Layer { w: Array2::zeros((3, 2)), b: Array1::zeros(2) }],
            activation: Activation::Elu,
            activate_last: false,
        };
        let x = array![[1.0, 2.0, 3.0]];
        assert_eq!(mlp.forward(x.view()).unwrap(), Array2::<f64>::zeros((1, 2)));
    }

    #[test]
    fn forward_matches_scalar_loop_oracle() {
        let mut rng = SeedStream::new(5).rng("mlp", 0);
        let mlp = Mlp::new(&[4, 6, 3], Activation::Elu, false, &mut rng);
        let x = Array2::from_shape_fn((5, 4), |_| rng.gen_range(-1.0..1.0));

        // naive per-element evaluation
        let elu = |v: f64| if v > 0.0 { v } else { v.exp() - 1.0 };
        let mut hidden = Array2::<f64>::zeros((5, 6));
        for i in 0..5 {
            for j in 0..6 {
                let mut s = mlp.layers[0].b[j];
                for k in 0..4 {
                    s += x[[i, k]] * mlp.layers[0].w[[k, j]];
                }
                hidden[[i, j]] = elu(s);
            }
        }
        let mut want = Array2::<f64>::zeros((5, 3));
        for i in 0..5 {
            for j in 0..3 {
                let mut s = mlp.layers[1].b[j];
                for k in 0..6 {
                    s += hidden[[i, k]] * mlp.layers[1].w[[k, j]];
                }
                want[[i, j]] = s;
            }
        }
        let got = mlp.forward(x.view()).unwrap();
        let max_err = (&got - &want).iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(max_err < 1e-10, "max err {max_err}");
    }

    #[test]
    fn backward_quadratic_loss_gradient_is_w() {
        // loss = 0.5 ||W x_unit||^2 with x = I: d loss / dW = W
        let mut rng = SeedStream::new(6).rng("mlp", 0);
        let mlp = Mlp::new(&[3, 3], Activation::Elu, false, &mut rng);
        let x = Array2::eye(3);
        let (out, cache) = mlp.forward_cached(x.view()).unwrap();
        // d(0.5 sum out^2)/d out = out
        let (grads, _) = mlp.backward(x.view(), &cache, out.view(), false);
        let diff = (&grads.layers[0].0 - &mlp.layers[0].w)
            .iter()
            .map(|v| v.abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut rng = SeedStream::new(7).rng("mlp", 0);
        let mlp = Mlp::new(&[3, 2], Activation::Elu, true, &mut rng);
        let x = Array2::from_shape_fn((4, 3), |_| rng.gen_range(-1.0..1.0));
        let (_, cache) = mlp.forward_cached(x.view()).unwrap();
        let (grads, _) = mlp.backward(x.view(), &cache, Array2::zeros((4, 2)).view(), false);
        for (w, b) in &grads.layers {
            assert!(w.iter().all(|&v| v == 0.0));
            assert!(b.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn mlp_finite_difference_check() {
        let mut rng = SeedStream::new(8).rng("mlp", 0);
        let mut mlp = Mlp::new(&[3, 5, 2], Activation::Elu, false, &mut rng);
        let x = Array2::from_shape_fn((6, 3), |_| rng.gen_range(-1.0..1.0));
        let target = Array2::from_shape_fn((6, 2), |_| rng.gen_range(-1.0..1.0));
        let loss = |m: &Mlp| -> f64 {
            let out = m.forward(x.view()).unwrap();
            0.5 * (&out - &target).iter().map(|v| v * v).sum::<f64>()
        };
        let (out, cache) = mlp.forward_cached(x.view()).unwrap();
        let (grads, _) = mlp.backward(x.view(), &cache, (&out - &target).view(), false);

        let h = 1e-5;
        for l in 0..mlp.layers.len() {
            let shape = mlp.layers[l].w.dim();
            for idx in [(0, 0), (shape.0 - 1, shape.1 - 1)] {
                let orig = mlp.layers[l].w[idx];
                mlp.layers[l].w[idx] = orig + h;
                let up = loss(&mlp);
                mlp.layers[l].w[idx] = orig - h;
                let down = loss(&mlp);
                mlp.layers[l].w[idx] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads.layers[l].0[idx];
                assert!(
                    (fd - an).abs() <= 1e-6 * fd.abs().max(1.0),
                    "layer {l} weight {idx:?}: fd {fd} vs analytic {an}"
                );
            }
        }
    }

    #[test]
    fn adam_zero_gradient_only_decays() {
        let mut rng = SeedStream::new(9).rng("adam", 0);
        let mut mlp = Mlp::new(&[2, 2], Activation::Elu, false, &mut rng);
        let before = mlp.layers[0].w.clone();
        let mut opt = Adam::new(1e-2, 1e-4);
        let zeros = vec![0.0; 4];
        let zero_b = vec![0.0; 2];
        let grads: Vec<&[f64]> = vec![&zeros, &zero_b];
        opt.step(&mut mlp.param_slices_mut(), &grads).unwrap();
        for (a, b) in mlp.layers[0].w.iter().zip(before.iter()) {
            // near-zero weights can overshoot through zero; check the rest
            if b.abs() > 0.05 {
                assert!(a.abs() < b.abs(), "weight decay must shrink parameters");
                assert!((a - b).abs() < 2.0 * 1e-2, "shrink is bounded by the learning rate");
            }
        }
    }

    // Reference single-parameter Adam, written independently.
    fn scalar_adam_steps(theta0: f64, g_raw: f64, lr: f64, wd: f64, steps: usize) -> Vec<f64> {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut m, mut v, mut theta) = (0.0, 0.0, theta0);
        let mut out = Vec::new();
        for t in 1..=steps {
            let g = g_raw + wd * theta;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1_pow(b1, t));
            let v_hat = v / (1.0 - b1_pow(b2, t));
            theta -= lr * m_hat / (v_hat.sqrt() + eps);
            out.push(theta);
        }
        out
    }

    fn b1_pow(b: f64, t: usize) -> f64 {
        b.powi(t as i32)
    }

    #[test]
    fn adam_single_step_matches_hand_oracle() {
        let mut w = [0.25f64];
        let g = [0.5f64];
        let mut opt = Adam::new(1e-2, 1e-4);
        {
            let mut params: Vec<&mut [f64]> = vec![&mut w];
            let grads: Vec<&[f64]> = vec![&g];
            opt.step(&mut params, &grads).unwrap();
        }
        let want = scalar_adam_steps(0.25, 0.5, 1e-2, 1e-4, 1)[0];
        assert!((w[0] - want).abs() < 1e-15, "{} vs {}", w[0], want);
    }

    #[test]
    fn adam_second_step_is_smaller_with_decay() {
        let mut w = [0.0f64];
        let g = [1.0f64];
        let mut opt = Adam::new(1e-2, 1e-4);
        let mut deltas = Vec::new();
        for _ in 0..2 {
            let before = w[0];
            let mut params: Vec<&mut [f64]> = vec![&mut w];
            let grads: Vec<&[f64]> = vec![&g];
            opt.step(&mut params, &grads).unwrap();
            deltas.push((w[0] - before).abs());
        }
        let oracle = scalar_adam_steps(0.0, 1.0, 1e-2, 1e-4, 2);
        assert!((w[0] - oracle[1]).abs() < 1e-15);
        assert!(deltas[1] < deltas[0], "second step {} vs first {}", deltas[1], deltas[0]);
    }

    #[test]
    fn mlp_serialization_round_trips() {
        let mut rng = SeedStream::new(10).rng("mlp", 0);
        let mlp = Mlp::new(&[3, 4, 2], Activation::Elu, true, &mut rng);
        let mut buf = Vec::new();
        mlp.write_to(&mut buf).unwrap();
        let back = Mlp::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.activate_last, mlp.activate_last);
        for (a, b) in back.layers.iter().zip(&mlp.layers) {
            assert_eq!(a.w, b.w);
            assert_eq!(a.b, b.b);
        }
    }
}
