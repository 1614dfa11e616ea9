use bmgc::csbm::{multi_csbm_generate, MultiCsbmParams};
use bmgc::metrics::gram_self_sq;
use bmgc::propagate::aggregate_views;
use bmgc::trainer::recalc_dominant;

fn main() {
    for rho in [0.2, 0.5, 1.0, 1.5] {
        for seed in [1u64, 2, 3] {
            let p = MultiCsbmParams::with_defaults(rho, seed);
            let g = multi_csbm_generate(&p).unwrap();
            let aggs = aggregate_views(&g, 3, 0.3).unwrap();
            let xg = gram_self_sq(g.features());
            let (best, metrics) = recalc_dominant(xg, g.features(), &aggs.per_view);
            println!(
                "rho={rho} seed={seed}: init v*={best} metrics {:?}",
                metrics.iter().map(|m| format!("{m:.4e}")).collect::<Vec<_>>()
            );
        }
    }
}
