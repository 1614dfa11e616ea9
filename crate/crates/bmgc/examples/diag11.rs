use bmgc::csbm::{csbm_generate, drop_isolated, CsbmParams};
use bmgc::linalg::row_l2_normalize;
use bmgc::metrics::acd;
use bmgc::propagate::sgc_aggregate;
use bmgc::sparse::normalize_adjacency;

fn main() {
    println!("paper ACD targets: phi=-1: .3251 | 0: .0274 | 0.5: .1645 | 1: .3293");
    for self_loops in [false, true] {
        for k in [3usize, 5] {
            let mut line = format!("self_loops={self_loops} K={k}:");
            for phi in [-1.0, 0.0, 0.5, 1.0] {
                let p = CsbmParams::with_defaults(phi, 7);
                let (adj, x, labels) = csbm_generate(&p).unwrap();
                let (sub, sx, sy, _) = drop_isolated(&adj, x.view(), &labels).unwrap();
                let norm = normalize_adjacency(&sub, self_loops).unwrap();
                let agg = sgc_aggregate(&norm, sx.view(), k).unwrap();
                let (agg_n, _) = row_l2_normalize(agg.view(), 1e-12);
                let acd_v = acd(agg_n.view(), &sy).unwrap();
                line.push_str(&format!(" [phi={phi}: {acd_v:.4}]"));
            }
            println!("{line}");
        }
    }
}
