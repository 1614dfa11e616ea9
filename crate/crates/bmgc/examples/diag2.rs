use bmgc::nn::MlpGrad;
use bmgc::seed::SeedStream;
use bmgc::trainer::{build_clu_context, step_gradients, total_loss, LossMask, Model};
use ndarray::prelude::*;
use rand::Rng;

fn collect_params(model: &mut Model) -> Vec<*mut f64> {
    // raw pointers into every parameter slot, in a stable order
    let mut out = Vec::new();
    let mut per = |m: &mut bmgc::nn::Mlp| {
        for l in m.layers.iter_mut() {
            for v in l.w.iter_mut() {
                out.push(v as *mut f64);
            }
            for v in l.b.iter_mut() {
                out.push(v as *mut f64);
            }
        }
    };
    per(&mut model.encoder);
    per(&mut model.decoder);
    for p in model.projectors.iter_mut() {
        per(p);
    }
    out
}

fn flatten_grads(g: &bmgc::trainer::Grads) -> Vec<f64> {
    let mut out = Vec::new();
    let mut per = |m: &MlpGrad| {
        for (w, b) in &m.layers {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
    };
    per(&g.encoder);
    per(&g.decoder);
    for p in &g.projectors {
        per(p);
    }
    out
}

fn main() {
    let stream = SeedStream::new(123);
    let mut rng = stream.rng("toy", 0);
    let n = 6;
    let d_f = 5;
    let d_r = 3;
    let v_count = 2;
    let inputs: Vec<Array2<f64>> = (0..v_count)
        .map(|_| Array2::from_shape_fn((n, d_f), |_| rng.gen_range(-1.0..1.0)))
        .collect();
    let features = Array2::from_shape_fn((n, d_f), |_| rng.gen_range(-1.0..1.0));
    let xg = bmgc::metrics::gram_self_sq(features.view());
    let mut model = Model::new(d_f, d_r, v_count, &stream);

    for term in ["rec", "adv", "anf", "clu"] {
        let mask = LossMask::only(term);
        let z0 = model.encode_views(&inputs).unwrap();
        let ctx = build_clu_context(&z0, 0, 2, 42, true).unwrap();
        let (_, grads) = step_gradients(&model, &inputs, features.view(), xg, 0, 1.0, Some(&ctx), mask).unwrap();
        let flat = flatten_grads(&grads);
        let ptrs = collect_params(&mut model);
        assert_eq!(flat.len(), ptrs.len());
        let h = 1e-4;
        let mut max_rel: f64 = 0.0;
        let mut worst = 0usize;
        for (k, &ptr) in ptrs.iter().enumerate() {
            unsafe {
                let orig = *ptr;
                *ptr = orig + h;
                let up = total_loss(&model, &inputs, features.view(), xg, 0, 1.0, Some(&ctx), mask).unwrap().total;
                *ptr = orig - h;
                let down = total_loss(&model, &inputs, features.view(), xg, 0, 1.0, Some(&ctx), mask).unwrap().total;
                *ptr = orig;
                let fd = (up - down) / (2.0 * h);
                let rel = (fd - flat[k]).abs() / fd.abs().max(flat[k].abs()).max(1e-6);
                if rel > max_rel {
                    max_rel = rel;
                    worst = k;
                }
            }
        }
        println!("{term}: max rel err {max_rel:.3e} at param {worst} (total params {})", ptrs.len());
    }
}
