use bmgc::clustering::kmeans;
use bmgc::csbm::{multi_csbm_generate, CsbmParams, MultiCsbmParams};
use bmgc::eval::evaluate;
use bmgc::metrics::gram_self_sq;
use bmgc::nn::Adam;
use bmgc::propagate::aggregate_views;
use bmgc::seed::SeedStream;
use bmgc::trainer::*;

fn run(tag: &str, mask: LossMask, lr: f64, epochs: usize) {
    let p = MultiCsbmParams {
        base: CsbmParams { n: 2000, d_f: 800, avg_degree: 5.0, epsilon: 3.25, phi: 0.5, seed: 2 },
        views: 3,
        rho: 0.2,
    };
    let g = multi_csbm_generate(&p).unwrap();
    let labels = g.labels().unwrap();
    let mut aggs = aggregate_views(&g, 3, 0.3).unwrap();
    aggs.normalize_rows();
    let x = g.features();
    let xg = gram_self_sq(x);
    let stream = SeedStream::new(2);
    let mut model = Model::new(x.ncols(), 10, 3, &stream);
    let mut opt = Adam::new(lr, 1e-4);
    let mut line = format!("{tag} lr={lr}:");
    for epoch in 0..epochs {
        let (b, grads) = step_gradients(&model, &aggs.per_view, x, xg, 0, 1.0, None, mask).unwrap();
        apply_step(&mut model, &mut opt, &grads).unwrap();
        if (epoch + 1) % (epochs / 3) == 0 {
            let z = model.encode_views(&aggs.per_view).unwrap();
            let cat = concat_views(&z);
            let res = kmeans(cat.view(), 2, 0, 5).unwrap();
            let nmi = evaluate(&res.assignments, labels).unwrap().nmi;
            let (_, m) = recalc_dominant(xg, x, &z);
            line.push_str(&format!(
                " [e{}: rec {:.3} adv {:.3} NMI {:.3} m=({:.1e},{:.1e},{:.1e})]",
                epoch + 1, b.rec, b.adv, nmi, m[0], m[1], m[2]
            ));
        }
    }
    println!("{line}");
}

fn main() {
    let base = LossMask { rec: true, adv: false, anf: false, clu: false };
    run("rec        ", base, 1e-2, 120);
    run("rec+anf    ", LossMask { anf: true, ..base }, 1e-2, 120);
    run("rec+adv    ", LossMask { adv: true, ..base }, 1e-2, 120);
    run("rec+adv+anf", LossMask { adv: true, anf: true, ..base }, 1e-2, 120);
    run("rec        ", base, 1e-3, 120);
}
