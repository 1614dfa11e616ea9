use bmgc::csbm::{multi_csbm_generate, MultiCsbmParams};
use bmgc::eval::evaluate;
use bmgc::trainer::{train, TrainConfig};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let rho: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.2);
    let seed: u64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(1);
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(400);

    let t0 = Instant::now();
    let p = MultiCsbmParams::with_defaults(rho, seed);
    let g = multi_csbm_generate(&p).unwrap();
    eprintln!("[{:.1}s] generated rho={rho} seed={seed}: edges {:?}", t0.elapsed().as_secs_f64(),
        g.views().iter().map(|v| v.num_edges()).collect::<Vec<_>>());

    let mut cfg = TrainConfig::new(2, seed);
    cfg.epochs = epochs;
    let out = train(&g, &cfg).unwrap();
    eprintln!("[{:.1}s] trained", t0.elapsed().as_secs_f64());
    let rep = evaluate(&out.clusters.assignments, g.labels().unwrap()).unwrap();
    println!("rho={rho} seed={seed}: NMI {:.4} ARI {:.4} ACC {:.4} F1 {:.4} | init v*={} final v*={} | {:.1}s",
        rep.nmi, rep.ari, rep.acc, rep.f1, out.init_dominant_view, out.state.dominant_view, t0.elapsed().as_secs_f64());
    for r in out.history.iter().step_by(50) {
        println!("  epoch {:3}: rec {:.4} adv {:.4} anf {:.5} clu {:.4} v*={} metrics {:?}",
            r.epoch, r.rec, r.adv, r.anf, r.clu, r.dominant_view,
            r.view_metrics.iter().map(|m| format!("{:.3e}", m)).collect::<Vec<_>>());
    }
}
