use bmgc::csbm::{multi_csbm_generate, CsbmParams, MultiCsbmParams};
use bmgc::eval::evaluate;
use bmgc::trainer::{train, TrainConfig};

fn main() {
    for (lr, warmup) in [(1e-3, 50usize), (3e-3, 50), (1e-3, 20)] {
        for seed in [2u64, 5] {
            let p = MultiCsbmParams {
                base: CsbmParams { n: 2000, d_f: 800, avg_degree: 5.0, epsilon: 3.25, phi: 0.5, seed },
                views: 3,
                rho: 0.2,
            };
            let g = multi_csbm_generate(&p).unwrap();
            let mut cfg = TrainConfig::new(2, seed);
            cfg.epochs = 200;
            cfg.lr = lr;
            cfg.clu_warmup_epochs = warmup;
            let out = train(&g, &cfg).unwrap();
            let rep = evaluate(&out.clusters.assignments, g.labels().unwrap()).unwrap();
            print!("lr={lr} warmup={warmup} seed={seed}: NMI {:.3} ACC {:.3} init={} final={} | clu traj:",
                rep.nmi, rep.acc, out.init_dominant_view, out.state.dominant_view);
            for r in out.history.iter().step_by(40) {
                print!(" e{}:{:.3}", r.epoch, r.clu);
            }
            println!();
        }
    }
}
