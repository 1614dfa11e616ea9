use bmgc::seed::SeedStream;
use bmgc::trainer::{step_gradients, total_loss, LossMask, Model};
use ndarray::prelude::*;
use rand::Rng;

fn main() {
    let stream = SeedStream::new(123);
    let mut rng = stream.rng("toy", 0);
    let n = 6;
    let d_f = 5;
    let inputs: Vec<Array2<f64>> = (0..2)
        .map(|_| Array2::from_shape_fn((n, d_f), |_| rng.gen_range(-1.0..1.0)))
        .collect();
    let features = Array2::from_shape_fn((n, d_f), |_| rng.gen_range(-1.0..1.0));
    let xg = bmgc::metrics::gram_self_sq(features.view());
    let mut model = Model::new(d_f, 3, 2, &stream);
    let mask = LossMask::only("rec");
    let (_, grads) = step_gradients(&model, &inputs, features.view(), xg, 0, 1.0, None, mask).unwrap();

    // param 4612 is decoder layer-1 bias index (4612 - 2307 - 768 - 256 - 1280 = 1) -> b[1] of last decoder layer
    let an = grads.decoder.layers[1].1[1];
    for h in [1e-3, 1e-4, 1e-5, 1e-6] {
        let orig = model.decoder.layers[1].b[1];
        model.decoder.layers[1].b[1] = orig + h;
        let up = total_loss(&model, &inputs, features.view(), xg, 0, 1.0, None, mask).unwrap().total;
        model.decoder.layers[1].b[1] = orig - h;
        let down = total_loss(&model, &inputs, features.view(), xg, 0, 1.0, None, mask).unwrap().total;
        model.decoder.layers[1].b[1] = orig;
        let fd = (up - down) / (2.0 * h);
        println!("h={h:.0e}: fd {fd:.12e} analytic {an:.12e} rel {:.3e}", (fd - an).abs() / fd.abs().max(an.abs()));
    }
}
