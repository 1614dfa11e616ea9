use bmgc::csbm::{multi_csbm_generate, CsbmParams, MultiCsbmParams};
use bmgc::eval::evaluate;
use bmgc::trainer::{train, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let n: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(2000);
    let d_f: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(800);
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(150);
    let rho: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(0.2);
    for seed in [1u64, 2, 3] {
        let t0 = Instant::now();
        let p = MultiCsbmParams {
            base: CsbmParams { n, d_f, avg_degree: 5.0, epsilon: 3.25, phi: 0.5, seed },
            views: 3,
            rho,
        };
        let g = multi_csbm_generate(&p).unwrap();
        let mut cfg = TrainConfig::new(2, seed);
        cfg.epochs = epochs;
        let out = train(&g, &cfg).unwrap();
        let rep = evaluate(&out.clusters.assignments, g.labels().unwrap()).unwrap();
        println!("n={n} df={d_f} rho={rho} epochs={epochs} seed={seed}: NMI {:.3} ACC {:.3} init={} final={} ({:.0}s)",
            rep.nmi, rep.acc, out.init_dominant_view, out.state.dominant_view, t0.elapsed().as_secs_f64());
        for r in out.history.iter().step_by(epochs / 6) {
            println!("   e{:3}: rec {:.4} adv {:.4} anf {:.5} clu {:.4} v*={} m {:?}",
                r.epoch, r.rec, r.adv, r.anf, r.clu, r.dominant_view,
                r.view_metrics.iter().map(|m| format!("{:.3e}", m)).collect::<Vec<_>>());
        }
    }
}
