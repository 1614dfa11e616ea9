use bmgc::clustering::kmeans;
use bmgc::csbm::{multi_csbm_generate, CsbmParams, MultiCsbmParams};
use bmgc::eval::evaluate;
use bmgc::propagate::aggregate_views;
use bmgc::seed::SeedStream;
use bmgc::trainer::*;
use bmgc::metrics::gram_self_sq;

fn main() {
    let p = MultiCsbmParams {
        base: CsbmParams { n: 200, d_f: 60, avg_degree: 5.0, epsilon: 3.25, phi: 0.5, seed: 21 },
        views: 3,
        rho: 0.2,
    };
    let g = multi_csbm_generate(&p).unwrap();
    let labels = g.labels().unwrap();
    let aggs = aggregate_views(&g, 3, 0.3).unwrap();
    let x = g.features();
    let xg = gram_self_sq(x);
    let stream = SeedStream::new(3);
    let mut model = Model::new(x.ncols(), 10, 3, &stream);
    let mut opt = bmgc::nn::Adam::new(1e-2, 1e-4);

    for epoch in 0..400 {
        let (breakdown, grads) = step_gradients(&model, &aggs.per_view, x, xg, 0, 1.0, None, LossMask { rec: true, adv: true, anf: true, clu: false }).unwrap();
        if epoch % 40 == 0 {
            let z = model.encode_views(&aggs.per_view).unwrap();
            let mut nmis = Vec::new();
            for v in 0..3 {
                let res = kmeans(z[v].view(), 2, 0, 5).unwrap();
                nmis.push(format!("{:.3}", evaluate(&res.assignments, labels).unwrap().nmi));
            }
            let cat = concat_views(&z);
            let res = kmeans(cat.view(), 2, 0, 5).unwrap();
            let cat_nmi = evaluate(&res.assignments, labels).unwrap().nmi;
            let znorm = z[0].iter().map(|v| v * v).sum::<f64>().sqrt();
            println!("epoch {epoch:3}: rec {:.4} adv {:.4} anf {:.5} | per-view NMI {:?} cat {:.3} | ||Z0||_F {znorm:.2}", breakdown.rec, breakdown.adv, breakdown.anf, nmis, cat_nmi);
        }
        apply_step(&mut model, &mut opt, &grads).unwrap();
    }
}
