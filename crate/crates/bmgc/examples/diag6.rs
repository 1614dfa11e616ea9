use bmgc::csbm::{multi_csbm_generate, CsbmParams, MultiCsbmParams};
use bmgc::eval::evaluate;
use bmgc::trainer::{train, TrainConfig};
use std::time::Instant;

fn main() {
    for (n, d_f, epochs) in [(500usize, 150usize, 400usize), (1000, 300, 200), (2000, 200, 100)] {
        for seed in [3u64, 7, 11] {
            let t0 = Instant::now();
            let p = MultiCsbmParams {
                base: CsbmParams { n, d_f, avg_degree: 5.0, epsilon: 3.25, phi: 0.5, seed },
                views: 3,
                rho: 0.2,
            };
            let g = multi_csbm_generate(&p).unwrap();
            let mut cfg = TrainConfig::new(2, seed);
            cfg.epochs = epochs;
            let out = train(&g, &cfg).unwrap();
            let rep = evaluate(&out.clusters.assignments, g.labels().unwrap()).unwrap();
            println!("n={n} df={d_f} epochs={epochs} seed={seed}: NMI {:.3} ACC {:.3} init={} final={} ({:.0}s)",
                rep.nmi, rep.acc, out.init_dominant_view, out.state.dominant_view, t0.elapsed().as_secs_f64());
        }
    }
}
